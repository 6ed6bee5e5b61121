#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "crossfuse/error.hpp"
#include "crossfuse/matrix.hpp"
#include "crossfuse/rng.hpp"

namespace crossfuse {

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

struct DenseLayer {
    Matrix w;  // out x in
    Vec b;     // out

    DenseLayer() = default;
    DenseLayer(std::size_t out_dim, std::size_t in_dim)
        : w(out_dim, in_dim), b(out_dim, 0.0) {}

    std::size_t in_dim() const { return w.cols; }
    std::size_t out_dim() const { return w.rows; }
};

// Uniform(-s, s) with s = sqrt(6 / (in + out)); biases stay zero.
inline void init_dense(DenseLayer& layer, Rng& rng) {
    const double s =
        std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
    for (double& x : layer.w.data) x = rng.uniform(-s, s);
    for (double& x : layer.b) x = 0.0;
}

inline Vec dense_forward(const DenseLayer& layer, std::span<const double> x) {
    require(x.size() == layer.in_dim(), ErrKind::dimension,
            "dense: input has length " + std::to_string(x.size()) + ", layer expects " +
                std::to_string(layer.in_dim()));
    Vec y = matvec(layer.w, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += layer.b[i];
    return y;
}

// Accumulated gradient for one dense layer.
struct DenseGrad {
    Matrix dw;
    Vec db;

    DenseGrad() = default;
    explicit DenseGrad(const DenseLayer& layer)
        : dw(layer.out_dim(), layer.in_dim()), db(layer.out_dim(), 0.0) {}

    void zero() {
        std::fill(dw.data.begin(), dw.data.end(), 0.0);
        std::fill(db.begin(), db.end(), 0.0);
    }
};

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

inline Vec relu(std::span<const double> x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

// Max-shifted for overflow safety; shift cancels exactly in the ratio.
inline Vec softmax(std::span<const double> x) {
    require(!x.empty(), ErrKind::dimension, "softmax: empty input");
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    Vec y(x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - mx);
        sum += y[i];
    }
    for (double& v : y) v /= sum;
    return y;
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

// Inverted dropout: survivors are scaled by 1/(1-rate) at train time so the
// eval pass is the identity. The mask is returned so a backward pass can
// reuse it.
inline Vec dropout_mask(std::size_t n, double rate, Rng& rng) {
    require(rate >= 0.0 && rate < 1.0, ErrKind::config,
            "dropout rate must lie in [0, 1), got " + std::to_string(rate));
    Vec mask(n);
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < n; ++i)
        mask[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    return mask;
}

inline Vec apply_mask(std::span<const double> x, std::span<const double> mask) {
    require(x.size() == mask.size(), ErrKind::dimension, "dropout: mask length mismatch");
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
    return y;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers for one flat parameter block.
struct AdamState {
    Vec m;
    Vec v;
    std::uint64_t t = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One update over a flat parameter block:
//   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2
//   theta -= lr * mhat / sqrt(vhat + eps)
// The eps sits inside the square root.
inline void adam_step(std::span<double> theta, std::span<const double> grad,
                      AdamState& st, const AdamConfig& cfg) {
    require(theta.size() == grad.size() && theta.size() == st.m.size(),
            ErrKind::dimension, "adam: buffer length mismatch");
    st.t += 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        theta[i] -= cfg.lr * mhat / std::sqrt(vhat + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// losses (plain forms; tape wrappers live in tape.hpp)
// ---------------------------------------------------------------------------

// Cross entropy from raw logits: -log softmax(x)[label].
inline double cross_entropy_logits(std::span<const double> logits, std::size_t label) {
    require(label < logits.size(), ErrKind::input,
            "cross entropy: label " + std::to_string(label) + " out of range for " +
                std::to_string(logits.size()) + " classes");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    return std::log(sum) - (logits[label] - mx);
}

}  // namespace crossfuse
