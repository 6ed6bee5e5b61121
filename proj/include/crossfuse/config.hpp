#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "crossfuse/error.hpp"
#include "crossfuse/model.hpp"
#include "crossfuse/store.hpp"
#include "crossfuse/train.hpp"

namespace crossfuse {

// Single source of truth for a run: defaults, then config file, then flag
// overrides, resolved and snapshotted into the run directory.
struct RunConfig {
    std::string store;
    std::string lexicon;
    std::string out;
    TrainPlan plan;
    std::size_t train_count = 0;  // zero means: derive from fractions
    std::size_t val_count = 0;
    std::size_t test_count = 0;
    double train_frac = 0.64;
    double val_frac = 0.16;
    double test_frac = 0.20;
    bool stratified = true;
    ModelDims dims;  // dims.d / dims.d_c are taken from the store at run time
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    detail::reject_unknown_keys(
        j, {"store", "lexicon", "out", "task", "seed", "plan", "split", "dims"},
        "config");
    RunConfig c;
    if (j.contains("store")) c.store = j["store"].get<std::string>();
    if (j.contains("lexicon")) c.lexicon = j["lexicon"].get<std::string>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    if (j.contains("task")) c.plan.task = j["task"].get<std::string>();
    if (j.contains("seed")) c.plan.seed = j["seed"].get<std::uint64_t>();

    if (j.contains("plan")) {
        const auto& p = j["plan"];
        detail::reject_unknown_keys(p,
                                    {"batch_size", "learning_rate", "stage1_epochs",
                                     "stage2_epochs", "classifier_epochs", "tau",
                                     "eps", "divergence_limit"},
                                    "config.plan");
        if (p.contains("batch_size")) c.plan.batch_size = p["batch_size"].get<std::size_t>();
        if (p.contains("learning_rate")) c.plan.learning_rate = p["learning_rate"].get<double>();
        if (p.contains("stage1_epochs")) c.plan.stage1_epochs = p["stage1_epochs"].get<std::size_t>();
        if (p.contains("stage2_epochs")) c.plan.stage2_epochs = p["stage2_epochs"].get<std::size_t>();
        if (p.contains("classifier_epochs"))
            c.plan.classifier_epochs = p["classifier_epochs"].get<std::size_t>();
        if (p.contains("tau")) c.plan.supcon.tau = p["tau"].get<double>();
        if (p.contains("eps")) c.plan.supcon.eps = p["eps"].get<double>();
        if (p.contains("divergence_limit"))
            c.plan.divergence_limit = p["divergence_limit"].get<double>();
    }

    if (j.contains("split")) {
        const auto& s = j["split"];
        detail::reject_unknown_keys(s,
                                    {"train_count", "val_count", "test_count",
                                     "train_frac", "val_frac", "test_frac",
                                     "stratified"},
                                    "config.split");
        if (s.contains("train_count")) c.train_count = s["train_count"].get<std::size_t>();
        if (s.contains("val_count")) c.val_count = s["val_count"].get<std::size_t>();
        if (s.contains("test_count")) c.test_count = s["test_count"].get<std::size_t>();
        if (s.contains("train_frac")) c.train_frac = s["train_frac"].get<double>();
        if (s.contains("val_frac")) c.val_frac = s["val_frac"].get<double>();
        if (s.contains("test_frac")) c.test_frac = s["test_frac"].get<double>();
        if (s.contains("stratified")) c.stratified = s["stratified"].get<bool>();
    }

    if (j.contains("dims")) {
        const auto& d = j["dims"];
        detail::reject_unknown_keys(d,
                                    {"d", "d_c", "d_prime", "d_x", "h",
                                     "encoder_depth", "classifier_widths", "dropout",
                                     "fuse_projected"},
                                    "config.dims");
        if (d.contains("d")) c.dims.d = d["d"].get<std::size_t>();
        if (d.contains("d_c")) c.dims.d_c = d["d_c"].get<std::size_t>();
        if (d.contains("d_prime")) c.dims.d_prime = d["d_prime"].get<std::size_t>();
        if (d.contains("d_x")) c.dims.d_x = d["d_x"].get<std::size_t>();
        if (d.contains("h")) c.dims.h = d["h"].get<std::size_t>();
        if (d.contains("encoder_depth"))
            c.dims.encoder_depth = d["encoder_depth"].get<std::size_t>();
        if (d.contains("classifier_widths"))
            c.dims.classifier_widths =
                d["classifier_widths"].get<std::vector<std::size_t>>();
        if (d.contains("dropout")) c.dims.dropout = d["dropout"].get<double>();
        if (d.contains("fuse_projected"))
            c.dims.fuse_projected = d["fuse_projected"].get<bool>();
    }
    return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["store"] = c.store;
    j["lexicon"] = c.lexicon;
    j["out"] = c.out;
    j["task"] = c.plan.task;
    j["seed"] = c.plan.seed;
    j["plan"] = {{"batch_size", c.plan.batch_size},
                 {"learning_rate", c.plan.learning_rate},
                 {"stage1_epochs", c.plan.stage1_epochs},
                 {"stage2_epochs", c.plan.stage2_epochs},
                 {"classifier_epochs", c.plan.classifier_epochs},
                 {"tau", c.plan.supcon.tau},
                 {"eps", c.plan.supcon.eps},
                 {"divergence_limit", c.plan.divergence_limit}};
    j["split"] = {{"train_count", c.train_count},
                  {"val_count", c.val_count},
                  {"test_count", c.test_count},
                  {"train_frac", c.train_frac},
                  {"val_frac", c.val_frac},
                  {"test_frac", c.test_frac},
                  {"stratified", c.stratified}};
    j["dims"] = {{"d", c.dims.d},
                 {"d_c", c.dims.d_c},
                 {"d_prime", c.dims.d_prime},
                 {"d_x", c.dims.d_x},
                 {"h", c.dims.h},
                 {"encoder_depth", c.dims.encoder_depth},
                 {"classifier_widths", c.dims.classifier_widths},
                 {"dropout", c.dims.dropout},
                 {"fuse_projected", c.dims.fuse_projected}};
    return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrKind::io, "cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrKind::config, "config " + path.string() + ": " + e.what());
    }
    require(j.is_object(), ErrKind::config,
            "config " + path.string() + ": top level must be an object");
    return run_config_from_json(j);
}

// Explicit counts win; otherwise fractions of the store size, rounded by
// largest remainder so the three counts sum to n exactly.
inline SplitSpec resolve_split(const RunConfig& c, std::size_t n) {
    SplitSpec spec;
    spec.stratified = c.stratified;
    spec.seed = c.plan.seed;
    if (c.train_count != 0 || c.val_count != 0 || c.test_count != 0) {
        require(c.train_count != 0 && c.val_count != 0 && c.test_count != 0,
                ErrKind::config,
                "split counts must be given for all three splits or none");
        spec.train_count = c.train_count;
        spec.val_count = c.val_count;
        spec.test_count = c.test_count;
        return spec;
    }
    const double fr[3] = {c.train_frac, c.val_frac, c.test_frac};
    double fsum = 0.0;
    for (double f : fr) {
        require(f > 0.0 && f < 1.0, ErrKind::config,
                "split fractions must lie in (0, 1)");
        fsum += f;
    }
    require(std::abs(fsum - 1.0) <= 1e-9, ErrKind::config,
            "split fractions must sum to 1");
    std::size_t counts[3];
    double rem[3];
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double ideal = fr[s] * static_cast<double>(n);
        counts[s] = static_cast<std::size_t>(ideal);
        rem[s] = ideal - static_cast<double>(counts[s]);
        assigned += counts[s];
    }
    while (assigned < n) {
        int best = 0;
        for (int s = 1; s < 3; ++s)
            if (rem[s] > rem[best]) best = s;
        ++counts[best];
        rem[best] = -1.0;
        ++assigned;
    }
    spec.train_count = counts[0];
    spec.val_count = counts[1];
    spec.test_count = counts[2];
    return spec;
}

}  // namespace crossfuse
