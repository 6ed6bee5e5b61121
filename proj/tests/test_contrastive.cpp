#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "crossfuse/contrastive.hpp"
#include "crossfuse/rng.hpp"
#include "crossfuse/tape.hpp"

using namespace crossfuse;

namespace {

// Independent oracle: a direct double-loop transcription with its own cosine,
// sharing no code with the library implementation.
double supcon_bruteforce(const std::vector<Vec>& z,
                         const std::vector<std::size_t>& labels, double tau,
                         double eps) {
    auto cos_ij = [&](std::size_t a, std::size_t b) {
        double d = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t k = 0; k < z[a].size(); ++k) {
            d += z[a][k] * z[b][k];
            na += z[a][k] * z[a][k];
            nb += z[b][k] * z[b][k];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        if (na < 1e-12 || nb < 1e-12) return 0.0;
        return d / (na * nb);
    };
    const std::size_t n = z.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double num = 0.0;
        bool any_pos = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && labels[j] == labels[i]) {
                num += std::exp(cos_ij(i, j) / tau);
                any_pos = true;
            }
        }
        double den = eps;
        for (std::size_t k = 0; k < n; ++k) {
            if (labels[k] != labels[i]) den += std::exp(cos_ij(i, k) / tau);
        }
        if (any_pos) acc += std::log(num) - std::log(den);
    }
    return -acc / static_cast<double>(n);
}

}  // namespace

TEST_CASE("cosine similarity basics", "[contrastive]") {
    REQUIRE(cosine_sim(Vec{1, 0}, Vec{1, 0}) == 1.0);
    REQUIRE(cosine_sim(Vec{1, 0}, Vec{0, 1}) == 0.0);
    REQUIRE(cosine_sim(Vec{1, 1}, Vec{1, 0}) ==
            Catch::Approx(0.70710678).margin(1e-8));
    REQUIRE(cosine_sim(Vec{0, 0}, Vec{1, 0}) == 0.0);
    REQUIRE_THROWS_AS(cosine_sim(Vec{1.0}, Vec{1.0, 2.0}), CfError);
}

TEST_CASE("pair set construction", "[contrastive]") {
    {
        PairSets ps = pair_sets({0, 0, 1}, 0);
        REQUIRE(ps.positives == std::vector<std::size_t>{1});
        REQUIRE(ps.negatives == std::vector<std::size_t>{2});
    }
    {
        PairSets ps = pair_sets({0, 1, 2}, 1);
        REQUIRE(ps.positives.empty());
        REQUIRE(ps.negatives == std::vector<std::size_t>{0, 2});
    }
    {
        PairSets ps = pair_sets({3, 3, 3, 3}, 2);
        REQUIRE(ps.negatives.empty());
        REQUIRE(ps.positives.size() == 3);
    }
}

TEST_CASE("pair sets partition the batch", "[contrastive]") {
    Rng rng(4);
    std::vector<std::size_t> labels(7);
    for (auto& l : labels) l = rng.below(3);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        PairSets ps = pair_sets(labels, i);
        std::vector<bool> seen(labels.size(), false);
        seen[i] = true;
        for (auto j : ps.positives) {
            REQUIRE(j != i);
            REQUIRE(labels[j] == labels[i]);
            REQUIRE(!seen[j]);
            seen[j] = true;
        }
        for (auto k : ps.negatives) {
            REQUIRE(labels[k] != labels[i]);
            REQUIRE(!seen[k]);
            seen[k] = true;
        }
        for (bool s : seen) REQUIRE(s);
    }
}

TEST_CASE("loss is zero when every anchor lacks positives", "[contrastive]") {
    SupConConfig cfg;
    cfg.tau = 1.0;
    std::vector<Vec> z{{1.0, 0.0}, {0.3, -2.0}};
    REQUIRE(supcon_loss(z, {0, 1}, cfg) == 0.0);
}

TEST_CASE("hand value: two aligned positives and one orthogonal negative",
          "[contrastive]") {
    // anchors 1,2: log(e^1 / (e^0 + 1e-8)); anchor 3 skipped; average over 3
    SupConConfig cfg;
    cfg.tau = 1.0;
    cfg.eps = 1e-8;
    std::vector<Vec> z{{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    const double loss = supcon_loss(z, {0, 0, 1}, cfg);
    REQUIRE(loss == Catch::Approx(-0.6666667).margin(1e-6));
    const double exact = -(2.0 * (1.0 - std::log1p(1e-8))) / 3.0;
    REQUIRE(loss == Catch::Approx(exact).margin(1e-14));
}

TEST_CASE("hand value: no negatives leaves the eps-only denominator",
          "[contrastive]") {
    SupConConfig cfg;
    cfg.tau = 1.0;
    cfg.eps = 1e-8;
    std::vector<Vec> z{{1.0, 0.0}, {1.0, 0.0}};
    const double loss = supcon_loss(z, {0, 0}, cfg);
    REQUIRE(loss == Catch::Approx(-19.4207).margin(1e-3));
    REQUIRE(loss == Catch::Approx(-(1.0 - std::log(1e-8))).margin(1e-12));
    REQUIRE(loss < 0.0);  // the eps denominator makes the ratio huge
}

TEST_CASE("matches brute-force double loop on random batches", "[contrastive]") {
    Rng rng(2718);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(7);   // N <= 8
        const std::size_t dim = 1 + rng.below(4);  // dim <= 4
        SupConConfig cfg;
        cfg.tau = rng.uniform(0.05, 1.0);
        std::vector<Vec> z(n, Vec(dim));
        for (Vec& row : z)
            for (double& v : row) v = rng.normal();
        std::vector<std::size_t> labels(n);
        for (auto& l : labels) l = rng.below(3);
        const double got = supcon_loss(z, labels, cfg);
        const double want = supcon_bruteforce(z, labels, cfg.tau, cfg.eps);
        REQUIRE(got == Catch::Approx(want).margin(1e-10));
    }
}

TEST_CASE("permutation invariance", "[contrastive]") {
    Rng rng(31);
    SupConConfig cfg;
    const std::size_t n = 6;
    std::vector<Vec> z(n, Vec(3));
    for (Vec& row : z)
        for (double& v : row) v = rng.normal();
    std::vector<std::size_t> labels{0, 1, 0, 2, 1, 0};
    const double base = supcon_loss(z, labels, cfg);

    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    std::vector<Vec> z2(n);
    std::vector<std::size_t> labels2(n);
    for (std::size_t i = 0; i < n; ++i) {
        z2[i] = z[perm[i]];
        labels2[i] = labels[perm[i]];
    }
    REQUIRE(supcon_loss(z2, labels2, cfg) == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("invariant under positive rescaling of one embedding", "[contrastive]") {
    Rng rng(77);
    SupConConfig cfg;
    std::vector<Vec> z(5, Vec(4));
    for (Vec& row : z)
        for (double& v : row) v = rng.normal();
    std::vector<std::size_t> labels{0, 0, 1, 1, 2};
    const double base = supcon_loss(z, labels, cfg);
    for (double c : {1e-3, 0.5, 7.0, 1e4}) {
        auto z2 = z;
        for (double& v : z2[2]) v *= c;
        REQUIRE(supcon_loss(z2, labels, cfg) == Catch::Approx(base).margin(1e-10));
    }
}

TEST_CASE("closing a positive pair's angle never raises the loss", "[contrastive]") {
    // Positives live in the (e1,e2) plane; negatives sit on e3/e4, orthogonal
    // to every positive, so only the positive-positive similarity moves.
    SupConConfig cfg;
    std::vector<std::size_t> labels{0, 0, 1, 1};
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step <= 20; ++step) {
        const double theta = 3.14159265358979 * (1.0 - step / 20.0);
        std::vector<Vec> z{{1.0, 0.0, 0.0, 0.0},
                           {std::cos(theta), std::sin(theta), 0.0, 0.0},
                           {0.0, 0.0, 1.0, 0.0},
                           {0.0, 0.0, 0.0, 1.0}};
        const double loss = supcon_loss(z, labels, cfg);
        REQUIRE(loss <= prev + 1e-12);
        prev = loss;
    }
}

TEST_CASE("gradient through singleton-class anchors is consistent",
          "[contrastive]") {
    // Label 2 appears once: that anchor's term is dropped by policy, which is
    // locally constant in the embeddings, so finite differences still agree.
    Rng rng(404);
    SupConConfig cfg;
    const std::size_t n = 5, dim = 3;
    std::vector<Vec> z(n, Vec(dim));
    for (Vec& row : z)
        for (double& v : row) v = rng.normal();
    std::vector<std::size_t> labels{0, 0, 1, 1, 2};

    Tape t;
    std::vector<int> ids;
    for (const Vec& row : z) ids.push_back(t.input(row));
    t.backward(t.supcon(ids, labels, cfg));
    std::vector<Vec> analytic;
    for (int id : ids) analytic.push_back(t.grad(id));

    auto loss_fn = [&] { return supcon_loss(z, labels, cfg); };
    std::vector<ParamBlock> blocks;
    for (std::size_t i = 0; i < n; ++i)
        blocks.push_back({"z" + std::to_string(i), z[i].data(), analytic[i].data(), dim});
    REQUIRE(grad_check(loss_fn, blocks).max_rel_err <= 1e-4);
}

TEST_CASE("input validation", "[contrastive]") {
    SupConConfig cfg;
    std::vector<Vec> one{{1.0, 0.0}};
    REQUIRE_THROWS_AS(supcon_loss(one, {0}, cfg), CfError);

    std::vector<Vec> bad{{1.0, 0.0}, {std::nan(""), 0.0}};
    REQUIRE_THROWS_AS(supcon_loss(bad, {0, 0}, cfg), CfError);

    SupConConfig bad_tau;
    bad_tau.tau = 0.0;
    std::vector<Vec> z{{1.0, 0.0}, {0.0, 1.0}};
    REQUIRE_THROWS_AS(supcon_loss(z, {0, 1}, bad_tau), CfError);

    SupConConfig bad_eps;
    bad_eps.eps = -1.0;
    REQUIRE_THROWS_AS(supcon_loss(z, {0, 1}, bad_eps), CfError);

    REQUIRE_THROWS_AS(supcon_loss(z, {0}, cfg), CfError);  // count mismatch
}
