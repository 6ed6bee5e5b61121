#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossfuse/contrastive.hpp"
#include "crossfuse/model.hpp"
#include "crossfuse/rng.hpp"
#include "crossfuse/tape.hpp"

namespace crossfuse {

inline constexpr double kGradCheckTol = 1e-4;

struct SubgraphCheck {
    std::string name;
    GradCheckReport report;
    bool pass = false;
};

namespace detail {

inline ModelDims gradcheck_dims() {
    ModelDims d;
    d.d = 5;
    d.d_prime = 4;
    d.d_x = 5;
    d.h = 3;
    d.d_c = 6;
    d.classes = 3;
    d.encoder_depth = 1;
    d.classifier_widths = {7, 6};
    d.dropout = 0.0;
    return d;
}

struct GradCheckData {
    std::vector<Vec> img, txt, aud, es, cap;
    std::vector<std::size_t> labels = {0, 0, 1, 1, 2, 2};
};

inline GradCheckData gradcheck_data(const ModelDims& dims, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x67636b64));
    GradCheckData data;
    auto draw = [&](std::size_t n) {
        Vec v(n);
        for (double& x : v) x = rng.normal();
        return v;
    };
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        data.img.push_back(draw(dims.d));
        data.txt.push_back(draw(dims.d));
        data.aud.push_back(draw(dims.d));
        data.es.push_back(draw(kAffectDim));
        data.cap.push_back(draw(dims.d_c));
    }
    return data;
}

// Conditions the randomly drawn test point so central differences are valid:
//  - every relu pre-activation clears a 1e-3 band around zero for every
//    sample, so no perturbation (which shifts pre-activations by well under
//    1e-4) can carry one across the kink;
//  - every unit of the six projection layers is active for every sample, so
//    the embeddings entering the cosine terms are dense. Sparse embeddings
//    can be exactly parallel or exactly orthogonal, which makes the true
//    gradient of some upstream weight exactly zero; the finite-difference
//    quotient of a flat direction is pure float round-off and trips the
//    relative-error gate for no real reason.
// Encoder and classifier units keep their random alive/dead mix, which is
// what gives the broken-relu control something to trip over.
inline void push_preacts_off_kinks(Model& m, const GradCheckData& data) {
    constexpr double margin = 1e-3;
    const std::size_t n = data.labels.size();
    for (int guard = 0; guard < 200; ++guard) {
        bool bumped = false;
        auto scan = [&](DenseLayer& layer, const Vec& x, bool keep_alive) {
            Vec pre = dense_forward(layer, x);
            for (std::size_t u = 0; u < pre.size(); ++u) {
                double lift = 0.0;
                if (keep_alive && pre[u] < margin)
                    lift = margin - pre[u] + 3.0 * margin;
                else if (!keep_alive && std::abs(pre[u]) < margin)
                    lift = 4.0 * margin;
                if (lift > 0.0) {
                    layer.b[u] += lift;
                    pre[u] += lift;
                    bumped = true;
                }
            }
            return relu(pre);
        };
        auto scan_stack = [&](Encoder& e, Vec x) {
            for (DenseLayer& l : e.layers) x = scan(l, x, false);
            return x;
        };
        for (std::size_t i = 0; i < n; ++i) {
            const Vec f_ii = scan_stack(m.s1.enc_II, data.img[i]);
            const Vec f_tt = scan_stack(m.s1.enc_TT, data.txt[i]);
            const Vec f_aa = scan_stack(m.s1.enc_AA, data.aud[i]);
            const std::vector<Vec> parts{f_ii, f_tt, f_aa};
            scan(m.s1.proj_ITA, concat(parts), true);
            const Vec g_es = scan_stack(m.aux.enc_ES, data.es[i]);
            scan(m.aux.proj_ES, g_es, true);
            const Vec g_cp = scan_stack(m.aux.enc_CP, data.cap[i]);
            scan(m.aux.proj_CP, g_cp, true);
            scan(m.cross.proj_IT, scan_stack(m.cross.enc_IT, f_ii), true);
            scan(m.cross.proj_IT, scan_stack(m.cross.enc_TI, f_tt), true);
            scan(m.cross.proj_IA, scan_stack(m.cross.enc_IA, f_ii), true);
            scan(m.cross.proj_IA, scan_stack(m.cross.enc_AI, f_aa), true);
            scan(m.cross.proj_TA, scan_stack(m.cross.enc_TA, f_tt), true);
            scan(m.cross.proj_TA, scan_stack(m.cross.enc_AT, f_aa), true);
            CrossOut c = stage2_forward(f_ii, f_tt, f_aa, m);
            AuxOut a = aux_forward(data.es[i], data.cap[i], m);
            Vec x = fuse_from(c, a, m.dims.fuse_projected);
            for (DenseLayer& l : m.head.hidden) x = scan(l, x, false);
        }
        if (!bumped) return;
    }
    fail(ErrKind::numeric, "gradcheck setup: relu margins did not stabilize");
}

inline std::vector<ParamBlock> blocks_for(Model& m, GradMap& grads,
                                          const std::vector<std::string>& prefixes) {
    std::vector<ParamBlock> blocks;
    visit_dense(m, [&](const std::string& name, DenseLayer& layer) {
        bool match = false;
        for (const std::string& p : prefixes)
            if (name.rfind(p, 0) == 0) match = true;
        if (!match) return;
        const DenseGrad& g = grads.at(name);
        blocks.push_back(param_block(name, layer, g, true));
        blocks.push_back(param_block(name, layer, g, false));
    });
    return blocks;
}

}  // namespace detail

// Finite-difference verification of the five backward paths the trainer
// exercises, each over a tiny randomly initialized model. The loss functions
// are deterministic (no dropout), as the checker requires.
inline std::vector<SubgraphCheck> run_gradcheck(std::uint64_t seed,
                                                bool break_relu = false) {
    const ModelDims dims = detail::gradcheck_dims();
    Model m = make_model(dims, seed);
    Rng bias_rng(mix_seed(seed, 0x62726e64));
    visit_dense(m, [&](const std::string&, DenseLayer& layer) {
        for (double& v : layer.b) v = bias_rng.uniform(-0.2, 0.2);
    });
    const auto data = detail::gradcheck_data(dims, seed);
    detail::push_preacts_off_kinks(m, data);
    const std::size_t n = data.labels.size();
    SupConConfig sc;

    GradMap grads = make_grads(m);
    std::vector<SubgraphCheck> out;

    // The checker compares against gradients taken at the unperturbed point,
    // so backward runs once up front and the sweep then evaluates forward only.
    auto run = [&](const std::string& name, const std::vector<std::string>& prefixes,
                   auto&& forward) {
        zero(grads);
        forward(true);
        SubgraphCheck chk;
        chk.name = name;
        chk.report = grad_check([&] { return forward(false); },
                                detail::blocks_for(m, grads, prefixes));
        chk.pass = chk.report.max_rel_err <= kGradCheckTol;
        out.push_back(std::move(chk));
    };

    run("stage1_supcon", {"s1."}, [&](bool with_grad) {
        Tape t;
        t.debug_break_relu = break_relu;
        std::vector<int> zs;
        for (std::size_t i = 0; i < n; ++i)
            zs.push_back(tape_stage1(t, m, &grads, data.img[i], data.txt[i],
                                     data.aud[i])
                             .z_ITA);
        const int root = t.supcon(zs, data.labels, sc);
        if (with_grad) t.backward(root);
        return t.val(root)[0];
    });

    // stage-2 inputs are the frozen stage-1 outputs
    std::vector<Vec> f_ii, f_tt, f_aa;
    for (std::size_t i = 0; i < n; ++i) {
        Stage1Out o = stage1_forward(data.img[i], data.txt[i], data.aud[i], m);
        f_ii.push_back(std::move(o.f_II));
        f_tt.push_back(std::move(o.f_TT));
        f_aa.push_back(std::move(o.f_AA));
    }
    run("stage2_supcon", {"cross."}, [&](bool with_grad) {
        Tape t;
        t.debug_break_relu = break_relu;
        std::vector<int> z_it, z_ia, z_ta;
        for (std::size_t i = 0; i < n; ++i) {
            z_it.push_back(tape_cross_pair(t, m, &grads, m.cross.enc_IT,
                                           "cross.enc_IT", m.cross.enc_TI,
                                           "cross.enc_TI", m.cross.proj_IT,
                                           "cross.proj_IT", f_ii[i], f_tt[i])
                               .z_cross);
            z_ia.push_back(tape_cross_pair(t, m, &grads, m.cross.enc_IA,
                                           "cross.enc_IA", m.cross.enc_AI,
                                           "cross.enc_AI", m.cross.proj_IA,
                                           "cross.proj_IA", f_ii[i], f_aa[i])
                               .z_cross);
            z_ta.push_back(tape_cross_pair(t, m, &grads, m.cross.enc_TA,
                                           "cross.enc_TA", m.cross.enc_AT,
                                           "cross.enc_AT", m.cross.proj_TA,
                                           "cross.proj_TA", f_tt[i], f_aa[i])
                               .z_cross);
        }
        const int root = t.add(t.supcon(z_it, data.labels, sc),
                               t.add(t.supcon(z_ia, data.labels, sc),
                                     t.supcon(z_ta, data.labels, sc)));
        if (with_grad) t.backward(root);
        return t.val(root)[0];
    });

    run("es_supcon", {"aux.enc_ES", "aux.proj_ES"}, [&](bool with_grad) {
        Tape t;
        t.debug_break_relu = break_relu;
        std::vector<int> zs;
        for (std::size_t i = 0; i < n; ++i)
            zs.push_back(tape_aux(t, m, &grads, data.es[i], data.cap[i]).z_ES);
        const int root = t.supcon(zs, data.labels, sc);
        if (with_grad) t.backward(root);
        return t.val(root)[0];
    });

    run("cp_supcon", {"aux.enc_CP", "aux.proj_CP"}, [&](bool with_grad) {
        Tape t;
        t.debug_break_relu = break_relu;
        std::vector<int> zs;
        for (std::size_t i = 0; i < n; ++i)
            zs.push_back(tape_aux(t, m, &grads, data.es[i], data.cap[i]).z_CP);
        const int root = t.supcon(zs, data.labels, sc);
        if (with_grad) t.backward(root);
        return t.val(root)[0];
    });

    // fused inputs from the frozen encoders; eval mode, so no dropout nodes
    std::vector<Vec> fused;
    for (std::size_t i = 0; i < n; ++i) {
        CrossOut c = stage2_forward(f_ii[i], f_tt[i], f_aa[i], m);
        AuxOut a = aux_forward(data.es[i], data.cap[i], m);
        fused.push_back(fuse_from(c, a, m.dims.fuse_projected));
    }
    run("classifier_ce", {"head."}, [&](bool with_grad) {
        Tape t;
        t.debug_break_relu = break_relu;
        int total = -1;
        for (std::size_t i = 0; i < n; ++i) {
            const int logits = tape_classifier(t, m, &grads, fused[i], {});
            const int ce = t.cross_entropy(logits, data.labels[i]);
            total = total < 0 ? ce : t.add(total, ce);
        }
        const int root = t.scale(total, 1.0 / static_cast<double>(n));
        if (with_grad) t.backward(root);
        return t.val(root)[0];
    });

    return out;
}

inline bool gradcheck_all_pass(const std::vector<SubgraphCheck>& checks) {
    for (const SubgraphCheck& c : checks)
        if (!c.pass) return false;
    return true;
}

}  // namespace crossfuse
