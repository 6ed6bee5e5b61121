#pragma once

#include <cstdlib>
#include <iostream>
#include <string>

#include "crossfuse/error.hpp"

namespace crossfuse {

enum class LogLevel { error = 0, info = 1, debug = 2 };

// Level comes from CROSSFUSE_LOG (error | info | debug); unset means info.
inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("CROSSFUSE_LOG");
        if (env == nullptr || *env == '\0') return LogLevel::info;
        const std::string v(env);
        if (v == "error") return LogLevel::error;
        if (v == "info") return LogLevel::info;
        if (v == "debug") return LogLevel::debug;
        fail(ErrKind::config,
             "CROSSFUSE_LOG must be error, info, or debug, got '" + v + "'");
    }();
    return level;
}

inline void log_error(const std::string& msg) { std::cerr << "error: " << msg << "\n"; }

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::cerr << msg << "\n";
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) std::cerr << "debug: " << msg << "\n";
}

}  // namespace crossfuse
