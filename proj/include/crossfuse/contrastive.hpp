#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "crossfuse/error.hpp"
#include "crossfuse/matrix.hpp"

namespace crossfuse {

struct SupConConfig {
    double tau = 0.07;
    double eps = 1e-8;
};

inline void validate(const SupConConfig& cfg) {
    require(cfg.tau > 0.0, ErrKind::config,
            "contrastive temperature must be positive, got " + std::to_string(cfg.tau));
    require(cfg.eps > 0.0, ErrKind::config,
            "contrastive eps must be positive, got " + std::to_string(cfg.eps));
}

struct PairSets {
    std::vector<std::size_t> positives;  // same label, excluding the anchor
    std::vector<std::size_t> negatives;  // different label
};

inline PairSets pair_sets(const std::vector<std::size_t>& labels, std::size_t i) {
    require(i < labels.size(), ErrKind::input, "pair_sets: anchor index out of range");
    PairSets ps;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        if (j == i) continue;
        if (labels[j] == labels[i])
            ps.positives.push_back(j);
        else
            ps.negatives.push_back(j);
    }
    return ps;
}

// Cosine similarity with a degenerate-vector guard: either norm below 1e-12
// yields 0 (and, downstream, a zero gradient) instead of NaN.
inline double cosine_sim(std::span<const double> u, std::span<const double> v) {
    require(u.size() == v.size(), ErrKind::dimension, "cosine_sim: length mismatch");
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu < 1e-12 || nv < 1e-12) return 0.0;
    return dot(u, v) / (nu * nv);
}

// Loss over a batch of embeddings:
//   L = -(1/N) sum_i log[ sum_{j in P(i)} exp(s_ij/tau)
//                         / (sum_{k in N(i)} exp(s_ik/tau) + eps) ]
// Anchors with empty P(i) contribute 0 but still count in the 1/N average.
// With empty N(i) the denominator is exactly eps, so the loss can be negative.
inline double supcon_from_sims(const Matrix& sims,
                               const std::vector<std::size_t>& labels,
                               const SupConConfig& cfg) {
    const std::size_t n = labels.size();
    require(n >= 2, ErrKind::batch,
            "contrastive loss needs a batch of at least 2, got " + std::to_string(n));
    require(sims.rows == n && sims.cols == n, ErrKind::dimension,
            "contrastive loss: similarity matrix shape mismatch");
    validate(cfg);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double num = 0.0, den = cfg.eps;
        bool has_pos = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double e = std::exp(sims.at(i, j) / cfg.tau);
            if (labels[j] == labels[i]) {
                num += e;
                has_pos = true;
            } else {
                den += e;
            }
        }
        if (has_pos) total += std::log(num / den);
    }
    return -total / static_cast<double>(n);
}

// d(loss)/d(sims), same anchor-row convention as supcon_from_sims. The
// diagonal stays zero; anchors with no positives contribute nothing.
inline Matrix supcon_sim_grad(const Matrix& sims,
                              const std::vector<std::size_t>& labels,
                              const SupConConfig& cfg) {
    const std::size_t n = labels.size();
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double num = 0.0, den = cfg.eps;
        bool has_pos = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double e = std::exp(sims.at(i, j) / cfg.tau);
            if (labels[j] == labels[i]) {
                num += e;
                has_pos = true;
            } else {
                den += e;
            }
        }
        if (!has_pos) continue;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double e = std::exp(sims.at(i, j) / cfg.tau);
            if (labels[j] == labels[i])
                g.at(i, j) = -inv_n * e / (cfg.tau * num);
            else
                g.at(i, j) = inv_n * e / (cfg.tau * den);
        }
    }
    return g;
}

inline Matrix pairwise_cosine(const std::vector<Vec>& z) {
    const std::size_t n = z.size();
    Matrix sims(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        sims.at(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = cosine_sim(z[i], z[j]);
            sims.at(i, j) = s;
            sims.at(j, i) = s;
        }
    }
    return sims;
}

inline double supcon_loss(const std::vector<Vec>& z,
                          const std::vector<std::size_t>& labels,
                          const SupConConfig& cfg) {
    require(z.size() == labels.size(), ErrKind::dimension,
            "contrastive loss: embeddings and labels disagree in count");
    for (std::size_t i = 0; i < z.size(); ++i)
        require(all_finite(z[i]), ErrKind::numeric,
                "contrastive loss: non-finite embedding at row " + std::to_string(i));
    return supcon_from_sims(pairwise_cosine(z), labels, cfg);
}

}  // namespace crossfuse
