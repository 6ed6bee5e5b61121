#pragma once

#include <stdexcept>
#include <string>

namespace crossfuse {

// Error taxonomy shared by the library and the CLI exit-code contract:
//   0 success, 2 config, 3 I/O, 4 divergence, 5 gradcheck failure.
enum class ErrKind {
    config,      // bad option, bad schema, inconsistent dims requested
    dimension,   // shape mismatch between tensors/vectors
    io,          // missing/corrupt/truncated files
    numeric,     // NaN/Inf where finite values are required
    state,       // API misuse (e.g. backward before forward)
    batch,       // batch-level precondition (e.g. SupCon needs N >= 2)
    input,       // malformed caller-supplied data
    divergence,  // training loss blew up
};

class CfError : public std::runtime_error {
public:
    CfError(ErrKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrKind kind() const noexcept { return kind_; }

    int exit_code() const noexcept {
        switch (kind_) {
            case ErrKind::io: return 3;
            case ErrKind::numeric:
            case ErrKind::divergence: return 4;
            default: return 2;
        }
    }

private:
    ErrKind kind_;
};

[[noreturn]] inline void fail(ErrKind kind, const std::string& msg) {
    throw CfError(kind, msg);
}

inline void require(bool cond, ErrKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

}  // namespace crossfuse
