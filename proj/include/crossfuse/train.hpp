#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crossfuse/affect.hpp"
#include "crossfuse/contrastive.hpp"
#include "crossfuse/error.hpp"
#include "crossfuse/metrics.hpp"
#include "crossfuse/model.hpp"
#include "crossfuse/rng.hpp"
#include "crossfuse/store.hpp"
#include "crossfuse/tape.hpp"

namespace crossfuse {

// ---------------------------------------------------------------------------
// plans and splits
// ---------------------------------------------------------------------------

struct TrainPlan {
    std::uint64_t seed = 0;
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    std::size_t stage1_epochs = 20;
    std::size_t stage2_epochs = 15;
    std::size_t classifier_epochs = 15;
    SupConConfig supcon;
    std::string task = "multiclass";  // multiclass | binary
    double divergence_limit = 1e6;
};

inline void validate(const TrainPlan& p) {
    require(p.batch_size >= 2, ErrKind::config,
            "batch size must be at least 2 (contrastive pairs), got " +
                std::to_string(p.batch_size));
    require(p.learning_rate >= 0.0, ErrKind::config, "learning rate must be >= 0");
    require(p.stage1_epochs >= 1 && p.stage2_epochs >= 1 && p.classifier_epochs >= 1,
            ErrKind::config, "every stage needs at least one epoch");
    require(p.task == "multiclass" || p.task == "binary", ErrKind::config,
            "task must be 'multiclass' or 'binary', got '" + p.task + "'");
    require(p.divergence_limit > 0.0, ErrKind::config,
            "divergence limit must be positive");
    validate(p.supcon);
}

struct SplitSpec {
    std::size_t train_count = 0;
    std::size_t val_count = 0;
    std::size_t test_count = 0;
    bool stratified = true;
    std::uint64_t seed = 0;
};

struct SplitResult {
    std::vector<std::size_t> train, val, test;
};

// Stratified splitting: per class, largest-remainder apportionment against
// the requested split sizes, then greedy repair moves if the global totals
// drift. Membership inside a class is a seeded shuffle.
inline SplitResult make_splits(const std::vector<std::size_t>& labels,
                               const SplitSpec& spec) {
    const std::size_t n = labels.size();
    require(spec.train_count + spec.val_count + spec.test_count == n,
            ErrKind::config,
            "split counts sum to " +
                std::to_string(spec.train_count + spec.val_count + spec.test_count) +
                " but the dataset has " + std::to_string(n) + " samples");
    require(spec.train_count > 0 && spec.val_count > 0 && spec.test_count > 0,
            ErrKind::config, "every split must be nonempty");

    Rng rng(mix_seed(spec.seed, 0x73706c69));  // split stream
    SplitResult out;

    if (!spec.stratified) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(idx);
        out.train.assign(idx.begin(), idx.begin() + static_cast<long>(spec.train_count));
        out.val.assign(idx.begin() + static_cast<long>(spec.train_count),
                       idx.begin() + static_cast<long>(spec.train_count + spec.val_count));
        out.test.assign(idx.begin() + static_cast<long>(spec.train_count + spec.val_count),
                        idx.end());
        return out;
    }

    // group indices per class, shuffled
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    for (auto& [c, idx] : by_class) rng.shuffle(idx);

    const double targets[3] = {static_cast<double>(spec.train_count),
                               static_cast<double>(spec.val_count),
                               static_cast<double>(spec.test_count)};
    // quota[class][split]
    std::map<std::size_t, std::array<std::size_t, 3>> quota;
    for (const auto& [c, idx] : by_class) {
        const double nc = static_cast<double>(idx.size());
        std::array<double, 3> ideal{};
        std::array<std::size_t, 3> q{};
        std::size_t assigned = 0;
        for (int s = 0; s < 3; ++s) {
            ideal[static_cast<std::size_t>(s)] =
                nc * targets[s] / static_cast<double>(n);
            q[static_cast<std::size_t>(s)] =
                static_cast<std::size_t>(ideal[static_cast<std::size_t>(s)]);
            assigned += q[static_cast<std::size_t>(s)];
        }
        // hand out the remaining samples by largest fractional remainder
        while (assigned < idx.size()) {
            int best = -1;
            double best_rem = -1.0;
            for (int s = 0; s < 3; ++s) {
                const double rem = ideal[static_cast<std::size_t>(s)] -
                                   static_cast<double>(q[static_cast<std::size_t>(s)]);
                if (rem > best_rem + 1e-12) {
                    best_rem = rem;
                    best = s;
                }
            }
            ++q[static_cast<std::size_t>(best)];
            ++assigned;
        }
        quota[c] = q;
    }

    // repair: global split totals must match exactly
    auto split_total = [&](int s) {
        std::size_t t = 0;
        for (const auto& [c, q] : quota) t += q[static_cast<std::size_t>(s)];
        return t;
    };
    for (int guard = 0; guard < 64; ++guard) {
        int over = -1, under = -1;
        for (int s = 0; s < 3; ++s) {
            const std::size_t t = split_total(s);
            const auto want = static_cast<std::size_t>(targets[s]);
            if (t > want) over = s;
            if (t < want) under = s;
        }
        if (over < 0 && under < 0) break;
        require(over >= 0 && under >= 0, ErrKind::state, "split repair imbalance");
        // move one sample of some class from the overfull to the underfull
        // split; prefer the class most over-represented in the overfull split
        std::size_t best_class = 0;
        double best_excess = -1e300;
        for (const auto& [c, q] : quota) {
            if (q[static_cast<std::size_t>(over)] == 0) continue;
            const double ideal = static_cast<double>(by_class[c].size()) *
                                 targets[over] / static_cast<double>(n);
            const double excess =
                static_cast<double>(q[static_cast<std::size_t>(over)]) - ideal;
            if (excess > best_excess) {
                best_excess = excess;
                best_class = c;
            }
        }
        --quota[best_class][static_cast<std::size_t>(over)];
        ++quota[best_class][static_cast<std::size_t>(under)];
    }
    for (int s = 0; s < 3; ++s)
        require(split_total(s) == static_cast<std::size_t>(targets[s]), ErrKind::state,
                "split repair failed to converge");

    for (const auto& [c, idx] : by_class) {
        const auto& q = quota[c];
        std::size_t pos = 0;
        for (std::size_t i = 0; i < q[0]; ++i) out.train.push_back(idx[pos++]);
        for (std::size_t i = 0; i < q[1]; ++i) out.val.push_back(idx[pos++]);
        for (std::size_t i = 0; i < q[2]; ++i) out.test.push_back(idx[pos++]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

// Class-balanced batching: same-class pairs are dealt to the least-filled
// batch that still has room for both, so nearly every anchor sees at least
// one positive; leftover singles go to batches already holding their class.
inline std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<std::size_t>& labels, std::size_t batch_size,
    std::uint64_t seed) {
    require(batch_size >= 2, ErrKind::config, "batch size must be >= 2");
    const std::size_t n = labels.size();
    require(n >= 2, ErrKind::batch, "need at least 2 samples to batch");

    Rng rng(mix_seed(seed, 0x62617463));  // batch stream
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    for (auto& [c, idx] : by_class) rng.shuffle(idx);

    const std::size_t num_batches = (n + batch_size - 1) / batch_size;
    std::vector<std::vector<std::size_t>> batches(num_batches);

    auto least_filled = [&](std::size_t slots_needed) {
        int best = -1;
        for (std::size_t b = 0; b < num_batches; ++b) {
            if (batches[b].size() + slots_needed > batch_size) continue;
            if (best < 0 || batches[b].size() < batches[static_cast<std::size_t>(best)].size())
                best = static_cast<int>(b);
        }
        return best;
    };

    // deal whole pairs, round-robin over classes
    std::vector<std::size_t> leftovers;
    bool dealt = true;
    std::map<std::size_t, std::size_t> cursor;
    while (dealt) {
        dealt = false;
        for (auto& [c, idx] : by_class) {
            std::size_t& pos = cursor[c];
            if (pos + 2 > idx.size()) continue;
            const int b = least_filled(2);
            if (b < 0) {
                // no room for a pair anywhere; push the rest as singles
                continue;
            }
            batches[static_cast<std::size_t>(b)].push_back(idx[pos]);
            batches[static_cast<std::size_t>(b)].push_back(idx[pos + 1]);
            pos += 2;
            dealt = true;
        }
    }
    for (auto& [c, idx] : by_class)
        for (std::size_t pos = cursor[c]; pos < idx.size(); ++pos)
            leftovers.push_back(idx[pos]);

    // place leftover singles next to an existing sample of their class when
    // possible, else anywhere with room
    for (std::size_t i : leftovers) {
        int best = -1;
        for (std::size_t b = 0; b < num_batches; ++b) {
            if (batches[b].size() + 1 > batch_size) continue;
            bool has_class = false;
            for (std::size_t j : batches[b])
                if (labels[j] == labels[i]) {
                    has_class = true;
                    break;
                }
            if (!has_class) continue;
            if (best < 0 || batches[b].size() < batches[static_cast<std::size_t>(best)].size())
                best = static_cast<int>(b);
        }
        if (best < 0) best = least_filled(1);
        require(best >= 0, ErrKind::state, "batching overflow");
        batches[static_cast<std::size_t>(best)].push_back(i);
    }

    batches.erase(std::remove_if(batches.begin(), batches.end(),
                                 [](const auto& b) { return b.empty(); }),
                  batches.end());

    // a lone sample cannot form any pair; steal one same-class sample from
    // the fullest batch so the contrastive loss stays defined
    for (std::size_t b = 0; b < batches.size(); ++b) {
        if (batches[b].size() != 1) continue;
        const std::size_t lone_label = labels[batches[b][0]];
        int donor = -1;
        int donor_pos = -1;
        for (std::size_t d = 0; d < batches.size(); ++d) {
            if (d == b || batches[d].size() < 3) continue;
            for (std::size_t p = 0; p < batches[d].size(); ++p) {
                if (labels[batches[d][p]] != lone_label) continue;
                if (donor < 0 ||
                    batches[d].size() > batches[static_cast<std::size_t>(donor)].size()) {
                    donor = static_cast<int>(d);
                    donor_pos = static_cast<int>(p);
                }
                break;
            }
        }
        if (donor < 0) {
            // no same-class donor; take any sample from the fullest batch
            for (std::size_t d = 0; d < batches.size(); ++d) {
                if (d == b || batches[d].size() < 3) continue;
                if (donor < 0 ||
                    batches[d].size() > batches[static_cast<std::size_t>(donor)].size()) {
                    donor = static_cast<int>(d);
                    donor_pos = 0;
                }
            }
        }
        if (donor >= 0) {
            auto& dv = batches[static_cast<std::size_t>(donor)];
            batches[b].push_back(dv[static_cast<std::size_t>(donor_pos)]);
            dv.erase(dv.begin() + donor_pos);
        } else if (batches.size() >= 2) {
            // no batch can spare a sample; fold the lone sample into the
            // smallest other batch (may exceed batch_size by one)
            int host = -1;
            for (std::size_t d = 0; d < batches.size(); ++d) {
                if (d == b) continue;
                if (host < 0 ||
                    batches[d].size() < batches[static_cast<std::size_t>(host)].size())
                    host = static_cast<int>(d);
            }
            batches[static_cast<std::size_t>(host)].push_back(batches[b][0]);
            batches[b].clear();
        }
    }
    batches.erase(std::remove_if(batches.begin(), batches.end(),
                                 [](const auto& v) { return v.empty(); }),
                  batches.end());
    return batches;
}

// ---------------------------------------------------------------------------
// training samples
// ---------------------------------------------------------------------------

struct TrainSample {
    std::string id;
    std::size_t label = 0;
    Vec f_image, f_text, f_audio;
    Vec f_es;       // 11
    Vec f_caption;  // d_c
};

// Affect features come from the transcript (empty transcript -> zeros); the
// binary task folds labels {1, 2} into 1.
inline std::vector<TrainSample> prepare_samples(const FeatureStore& store,
                                                const AffectLexicon& lex,
                                                const std::string& task) {
    std::vector<TrainSample> out;
    out.reserve(store.records.size());
    for (const FeatureRecord& rec : store.records) {
        TrainSample s;
        s.id = rec.sample_id;
        s.label = task == "binary" ? (rec.label >= 1 ? 1 : 0) : rec.label;
        s.f_image = rec.f_image;
        s.f_text = rec.f_text;
        s.f_audio = rec.f_audio;
        s.f_es = build_affect(rec.transcript.value_or(""), lex);
        s.f_caption = rec.f_caption;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// run log
// ---------------------------------------------------------------------------

struct EpochLog {
    std::string stage;
    std::size_t epoch = 0;
    double L_stage1 = 0.0;
    double L_stage2 = 0.0;
    double L_sup_ES = 0.0;
    double L_sup_CP = 0.0;
    double L_total = 0.0;
    std::optional<double> L_ce;
    std::optional<double> val_macro_f1;
};

inline nlohmann::json to_json(const EpochLog& e) {
    nlohmann::json j;
    j["stage"] = e.stage;
    j["epoch"] = e.epoch;
    j["L_stage1"] = e.L_stage1;
    j["L_stage2"] = e.L_stage2;
    j["L_sup_ES"] = e.L_sup_ES;
    j["L_sup_CP"] = e.L_sup_CP;
    j["L_total"] = e.L_total;
    if (e.L_ce)
        j["L_ce"] = *e.L_ce;
    else
        j["L_ce"] = nullptr;
    if (e.val_macro_f1)
        j["val_macro_f1"] = *e.val_macro_f1;
    else
        j["val_macro_f1"] = nullptr;
    return j;
}

inline EpochLog epoch_log_from_json(const nlohmann::json& j) {
    EpochLog e;
    e.stage = j.at("stage").get<std::string>();
    e.epoch = j.at("epoch").get<std::size_t>();
    e.L_stage1 = j.at("L_stage1").get<double>();
    e.L_stage2 = j.at("L_stage2").get<double>();
    e.L_sup_ES = j.at("L_sup_ES").get<double>();
    e.L_sup_CP = j.at("L_sup_CP").get<double>();
    e.L_total = j.at("L_total").get<double>();
    if (!j.at("L_ce").is_null()) e.L_ce = j.at("L_ce").get<double>();
    if (!j.at("val_macro_f1").is_null())
        e.val_macro_f1 = j.at("val_macro_f1").get<double>();
    return e;
}

inline void write_runlog(const std::filesystem::path& path,
                         const std::vector<EpochLog>& log) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrKind::io, "cannot open " + path.string() + " for writing");
    for (const EpochLog& e : log) out << to_json(e).dump() << "\n";
    out.flush();
    require(out.good(), ErrKind::io, "write failed for " + path.string());
}

inline std::vector<EpochLog> read_runlog(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrKind::io, "cannot open run log " + path.string());
    std::vector<EpochLog> log;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        log.push_back(epoch_log_from_json(nlohmann::json::parse(line)));
    }
    return log;
}

// ---------------------------------------------------------------------------
// optimizer bookkeeping
// ---------------------------------------------------------------------------

struct LayerOpt {
    AdamState w_state;
    AdamState b_state;
};

using OptMap = std::map<std::string, LayerOpt>;

inline OptMap make_opt(Model& m, const std::string& prefix) {
    OptMap opt;
    visit_dense(m, [&](const std::string& name, DenseLayer& layer) {
        if (name.rfind(prefix, 0) != 0) return;
        LayerOpt lo;
        lo.w_state = AdamState(layer.w.size());
        lo.b_state = AdamState(layer.b.size());
        opt.emplace(name, std::move(lo));
    });
    return opt;
}

inline void apply_updates(Model& m, GradMap& grads, OptMap& opt,
                          const AdamConfig& cfg) {
    visit_dense(m, [&](const std::string& name, DenseLayer& layer) {
        auto it = opt.find(name);
        if (it == opt.end()) return;
        DenseGrad& g = grads.at(name);
        adam_step(layer.w.data, g.dw.data, it->second.w_state, cfg);
        adam_step(layer.b, g.db, it->second.b_state, cfg);
    });
}

// Gradient buffers restricted to the layers a stage owns; everything else is
// frozen by construction (no DenseGrad ever attached to the tape).
inline GradMap make_grads_subset(Model& m, const std::string& prefix) {
    GradMap g;
    visit_dense(m, [&](const std::string& name, DenseLayer& layer) {
        if (name.rfind(prefix, 0) != 0) return;
        g.emplace(name, DenseGrad(layer));
    });
    return g;
}

inline GradMap make_grads_subset2(Model& m, const std::string& p1,
                                  const std::string& p2) {
    GradMap g;
    visit_dense(m, [&](const std::string& name, DenseLayer& layer) {
        if (name.rfind(p1, 0) != 0 && name.rfind(p2, 0) != 0) return;
        g.emplace(name, DenseGrad(layer));
    });
    return g;
}

inline void check_divergence(double loss, const std::string& stage,
                             std::size_t epoch, double limit) {
    require(std::isfinite(loss) && std::abs(loss) <= limit, ErrKind::divergence,
            "training diverged in " + stage + " at epoch " + std::to_string(epoch) +
                ": loss " + std::to_string(loss));
}

// ---------------------------------------------------------------------------
// stage trainers
// ---------------------------------------------------------------------------

namespace tags {
inline constexpr std::uint64_t stage1 = 0x7331;
inline constexpr std::uint64_t stage2 = 0x7332;
inline constexpr std::uint64_t classifier = 0x636c73;
inline constexpr std::uint64_t dropout = 0x64726f70;
}  // namespace tags

// Carries the most recent value of every loss component so each epoch line
// can report the full objective; components outside the active stage hold
// their last computed value (0 before their stage has run).
struct LossLedger {
    double L_stage1 = 0.0;
    double L_stage2 = 0.0;
    double L_sup_ES = 0.0;
    double L_sup_CP = 0.0;

    EpochLog entry(const std::string& stage, std::size_t epoch) const {
        EpochLog e;
        e.stage = stage;
        e.epoch = epoch;
        e.L_stage1 = L_stage1;
        e.L_stage2 = L_stage2;
        e.L_sup_ES = L_sup_ES;
        e.L_sup_CP = L_sup_CP;
        e.L_total = L_stage1 + L_stage2 + L_sup_ES + L_sup_CP;
        return e;
    }
};

// Stage 1: modality encoders + shared projection plus the ES/CP encoders,
// each under its own contrastive loss, optimized jointly.
inline void train_stage1(Model& m, const std::vector<TrainSample>& samples,
                         const std::vector<std::size_t>& train_idx,
                         const TrainPlan& plan, LossLedger& ledger,
                         std::vector<EpochLog>& log) {
    GradMap grads = make_grads_subset2(m, "s1.", "aux.");
    OptMap opt_s1 = make_opt(m, "s1.");
    OptMap opt_aux = make_opt(m, "aux.");
    AdamConfig acfg;
    acfg.lr = plan.learning_rate;

    std::vector<std::size_t> train_labels;
    for (std::size_t i : train_idx) train_labels.push_back(samples[i].label);

    for (std::size_t epoch = 0; epoch < plan.stage1_epochs; ++epoch) {
        const auto batches = make_batches(
            train_labels, plan.batch_size,
            mix_seed(mix_seed(plan.seed, tags::stage1), epoch));
        double sum_ita = 0.0, sum_es = 0.0, sum_cp = 0.0;
        for (const auto& batch : batches) {
            zero(grads);
            Tape t;
            std::vector<int> z_ita, z_es, z_cp;
            std::vector<std::size_t> labels;
            for (std::size_t bi : batch) {
                const TrainSample& s = samples[train_idx[bi]];
                Stage1Nodes sn = tape_stage1(t, m, &grads, s.f_image, s.f_text,
                                             s.f_audio);
                AuxNodes an = tape_aux(t, m, &grads, s.f_es, s.f_caption);
                z_ita.push_back(sn.z_ITA);
                z_es.push_back(an.z_ES);
                z_cp.push_back(an.z_CP);
                labels.push_back(s.label);
            }
            const int l_ita = t.supcon(z_ita, labels, plan.supcon);
            const int l_es = t.supcon(z_es, labels, plan.supcon);
            const int l_cp = t.supcon(z_cp, labels, plan.supcon);
            const int root = t.add(l_ita, t.add(l_es, l_cp));
            check_divergence(t.val(root)[0], "stage1", epoch, plan.divergence_limit);
            t.backward(root);
            apply_updates(m, grads, opt_s1, acfg);
            apply_updates(m, grads, opt_aux, acfg);
            sum_ita += t.val(l_ita)[0];
            sum_es += t.val(l_es)[0];
            sum_cp += t.val(l_cp)[0];
        }
        const auto nb = static_cast<double>(batches.size());
        ledger.L_stage1 = sum_ita / nb;
        ledger.L_sup_ES = sum_es / nb;
        ledger.L_sup_CP = sum_cp / nb;
        log.push_back(ledger.entry("stage1", epoch));
    }
}

// Stage 2: cross encoders and pair projection heads over frozen stage-1
// outputs; one contrastive loss per modality pair, summed.
inline void train_stage2(Model& m, const std::vector<TrainSample>& samples,
                         const std::vector<std::size_t>& train_idx,
                         const TrainPlan& plan, LossLedger& ledger,
                         std::vector<EpochLog>& log) {
    GradMap grads = make_grads_subset(m, "cross.");
    OptMap opt = make_opt(m, "cross.");
    AdamConfig acfg;
    acfg.lr = plan.learning_rate;

    // stage-1 weights are frozen now; precompute their outputs once
    std::vector<Vec> f_ii, f_tt, f_aa;
    std::vector<std::size_t> train_labels;
    for (std::size_t i : train_idx) {
        const TrainSample& s = samples[i];
        Stage1Out o = stage1_forward(s.f_image, s.f_text, s.f_audio, m);
        f_ii.push_back(std::move(o.f_II));
        f_tt.push_back(std::move(o.f_TT));
        f_aa.push_back(std::move(o.f_AA));
        train_labels.push_back(s.label);
    }

    for (std::size_t epoch = 0; epoch < plan.stage2_epochs; ++epoch) {
        const auto batches = make_batches(
            train_labels, plan.batch_size,
            mix_seed(mix_seed(plan.seed, tags::stage2), epoch));
        double sum_pairs = 0.0;
        for (const auto& batch : batches) {
            zero(grads);
            Tape t;
            std::vector<int> z_it, z_ia, z_ta;
            std::vector<std::size_t> labels;
            for (std::size_t bi : batch) {
                auto it = tape_cross_pair(t, m, &grads, m.cross.enc_IT, "cross.enc_IT",
                                          m.cross.enc_TI, "cross.enc_TI",
                                          m.cross.proj_IT, "cross.proj_IT", f_ii[bi],
                                          f_tt[bi]);
                auto ia = tape_cross_pair(t, m, &grads, m.cross.enc_IA, "cross.enc_IA",
                                          m.cross.enc_AI, "cross.enc_AI",
                                          m.cross.proj_IA, "cross.proj_IA", f_ii[bi],
                                          f_aa[bi]);
                auto ta = tape_cross_pair(t, m, &grads, m.cross.enc_TA, "cross.enc_TA",
                                          m.cross.enc_AT, "cross.enc_AT",
                                          m.cross.proj_TA, "cross.proj_TA", f_tt[bi],
                                          f_aa[bi]);
                z_it.push_back(it.z_cross);
                z_ia.push_back(ia.z_cross);
                z_ta.push_back(ta.z_cross);
                labels.push_back(train_labels[bi]);
            }
            const int root = t.add(t.supcon(z_it, labels, plan.supcon),
                                   t.add(t.supcon(z_ia, labels, plan.supcon),
                                         t.supcon(z_ta, labels, plan.supcon)));
            check_divergence(t.val(root)[0], "stage2", epoch, plan.divergence_limit);
            t.backward(root);
            apply_updates(m, grads, opt, acfg);
            sum_pairs += t.val(root)[0];
        }
        ledger.L_stage2 = sum_pairs / static_cast<double>(batches.size());
        log.push_back(ledger.entry("stage2", epoch));
    }
}

// Deterministic fused vector for one sample under the current (frozen)
// encoders.
inline Vec fused_vector(const Model& m, const TrainSample& s) {
    Stage1Out s1 = stage1_forward(s.f_image, s.f_text, s.f_audio, m);
    CrossOut c = stage2_forward(s1.f_II, s1.f_TT, s1.f_AA, m);
    AuxOut a = aux_forward(s.f_es, s.f_caption, m);
    return fuse_from(c, a, m.dims.fuse_projected);
}

inline MetricsReport evaluate_fused(const Model& m, const std::vector<Vec>& fused,
                                    const std::vector<std::size_t>& labels) {
    std::vector<std::size_t> pred;
    pred.reserve(fused.size());
    for (const Vec& f : fused) pred.push_back(predict_label(classify(m.head, f)));
    return metrics(confusion(labels, pred, m.dims.classes));
}

// Classifier stage: cross-entropy over the fused vector, dropout at train
// time, checkpoint selection by best validation macro-F1.
inline void train_classifier(Model& m, const std::vector<TrainSample>& samples,
                             const std::vector<std::size_t>& train_idx,
                             const std::vector<std::size_t>& val_idx,
                             const TrainPlan& plan, LossLedger& ledger,
                             std::vector<EpochLog>& log, std::size_t& best_epoch,
                             double& best_val_f1) {
    GradMap grads = make_grads_subset(m, "head.");
    OptMap opt = make_opt(m, "head.");
    AdamConfig acfg;
    acfg.lr = plan.learning_rate;

    // encoders are all frozen; fused inputs are fixed now
    std::vector<Vec> train_fused, val_fused;
    std::vector<std::size_t> train_labels, val_labels;
    for (std::size_t i : train_idx) {
        train_fused.push_back(fused_vector(m, samples[i]));
        train_labels.push_back(samples[i].label);
    }
    for (std::size_t i : val_idx) {
        val_fused.push_back(fused_vector(m, samples[i]));
        val_labels.push_back(samples[i].label);
    }

    ClassifierHead best_head = m.head;
    best_val_f1 = -1.0;
    best_epoch = 0;

    for (std::size_t epoch = 0; epoch < plan.classifier_epochs; ++epoch) {
        const auto batches = make_batches(
            train_labels, plan.batch_size,
            mix_seed(mix_seed(plan.seed, tags::classifier), epoch));
        Rng drop_rng(mix_seed(mix_seed(plan.seed, tags::dropout), epoch));
        double ce_sum = 0.0;
        std::size_t ce_count = 0;
        for (const auto& batch : batches) {
            zero(grads);
            Tape t;
            int total = -1;
            for (std::size_t bi : batch) {
                std::vector<Vec> masks;
                if (m.head.dropout_rate > 0.0)
                    for (const DenseLayer& hl : m.head.hidden)
                        masks.push_back(
                            dropout_mask(hl.out_dim(), m.head.dropout_rate, drop_rng));
                const int logits = tape_classifier(t, m, &grads, train_fused[bi], masks);
                const int ce = t.cross_entropy(logits, train_labels[bi]);
                total = total < 0 ? ce : t.add(total, ce);
            }
            const int root = t.scale(total, 1.0 / static_cast<double>(batch.size()));
            check_divergence(t.val(root)[0], "classifier", epoch,
                             plan.divergence_limit);
            t.backward(root);
            apply_updates(m, grads, opt, acfg);
            ce_sum += t.val(root)[0] * static_cast<double>(batch.size());
            ce_count += batch.size();
        }
        MetricsReport val_report = evaluate_fused(m, val_fused, val_labels);
        EpochLog e = ledger.entry("classifier", epoch);
        e.L_ce = ce_sum / static_cast<double>(ce_count);
        e.val_macro_f1 = val_report.macro_f1;
        log.push_back(e);
        if (val_report.macro_f1 > best_val_f1) {
            best_val_f1 = val_report.macro_f1;
            best_epoch = epoch;
            best_head = m.head;
        }
    }
    m.head = best_head;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct PipelineResult {
    Model model;
    MetricsReport test_report;
    std::vector<EpochLog> log;
    SplitResult splits;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
};

inline PipelineResult run_pipeline(const FeatureStore& store,
                                   const AffectLexicon& lex, ModelDims dims,
                                   const TrainPlan& plan, SplitSpec split) {
    validate(plan);
    dims.classes = plan.task == "binary" ? 2 : 3;
    dims.d = store.dim_d;
    dims.d_c = store.dim_dc;
    validate(dims);

    std::vector<TrainSample> samples = prepare_samples(store, lex, plan.task);
    std::vector<std::size_t> labels;
    for (const TrainSample& s : samples) labels.push_back(s.label);

    PipelineResult res;
    res.splits = make_splits(labels, split);
    res.model = make_model(dims, plan.seed);
    LossLedger ledger;

    train_stage1(res.model, samples, res.splits.train, plan, ledger, res.log);
    train_stage2(res.model, samples, res.splits.train, plan, ledger, res.log);
    train_classifier(res.model, samples, res.splits.train, res.splits.val, plan,
                     ledger, res.log, res.best_epoch, res.best_val_f1);

    std::vector<Vec> test_fused;
    std::vector<std::size_t> test_labels;
    for (std::size_t i : res.splits.test) {
        test_fused.push_back(fused_vector(res.model, samples[i]));
        test_labels.push_back(samples[i].label);
    }
    res.test_report = evaluate_fused(res.model, test_fused, test_labels);
    return res;
}

// Evaluation of an existing model over one split of a store.
inline MetricsReport evaluate_split(const Model& m, const std::vector<TrainSample>& samples,
                                    const std::vector<std::size_t>& idx) {
    require(!idx.empty(), ErrKind::input, "evaluate: empty split");
    std::vector<Vec> fused;
    std::vector<std::size_t> labels;
    for (std::size_t i : idx) {
        fused.push_back(fused_vector(m, samples[i]));
        labels.push_back(samples[i].label);
    }
    return evaluate_fused(m, fused, labels);
}

}  // namespace crossfuse
