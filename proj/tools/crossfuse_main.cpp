#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "crossfuse/config.hpp"
#include "crossfuse/gradcheck.hpp"
#include "crossfuse/log.hpp"
#include "crossfuse/synth.hpp"
#include "crossfuse/train.hpp"

namespace fs = std::filesystem;
using namespace crossfuse;

namespace {

fs::path manifest_path(const std::string& store) {
    fs::path p(store);
    if (fs::is_directory(p)) return p / "manifest.json";
    return p;
}

AffectLexicon lexicon_for(const RunConfig& cfg) {
    if (!cfg.lexicon.empty()) return load_lexicon(cfg.lexicon);
    const fs::path fallback = manifest_path(cfg.store).parent_path() / "lexicon.tsv";
    if (fs::exists(fallback)) return load_lexicon(fallback);
    log_info("no lexicon found; affect features will be zero");
    return AffectLexicon{};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrKind::io, "cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    require(out.good(), ErrKind::io, "write failed for " + path.string());
}

struct CliState {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
};

RunConfig base_config(const CliState& st) {
    RunConfig cfg;
    if (!st.config_path.empty()) cfg = load_run_config(st.config_path);
    if (st.seed_given) cfg.plan.seed = st.seed;
    if (!st.out.empty()) cfg.out = st.out;
    return cfg;
}

int cmd_synth(const CliState& st, const SynthSpec& spec_in,
              const std::vector<std::size_t>& per_class_raw) {
    SynthSpec spec = spec_in;
    if (st.seed_given) spec.seed = st.seed;
    if (per_class_raw.size() == 1)
        spec.per_class.assign(spec.classes, per_class_raw[0]);
    else if (!per_class_raw.empty())
        spec.per_class = per_class_raw;
    else
        spec.per_class.assign(spec.classes, 100);
    require(!st.out.empty(), ErrKind::config,
            "synth requires --out <dir> for the generated store");
    const fs::path out_dir(st.out);
    fs::create_directories(out_dir);
    const fs::path manifest = generate(spec, out_dir);
    log_info(describe(load_feature_store(manifest)).format());
    std::cout << manifest.string() << "\n";
    return 0;
}

int cmd_train(RunConfig cfg) {
    require(!cfg.store.empty(), ErrKind::config, "train requires --store");
    require(!cfg.out.empty(), ErrKind::config, "train requires --out <run dir>");
    validate(cfg.plan);

    const fs::path manifest = manifest_path(cfg.store);
    FeatureStore store = load_feature_store(manifest);
    AffectLexicon lex = lexicon_for(cfg);
    log_info("loaded store: " + std::to_string(store.records.size()) +
             " samples, d=" + std::to_string(store.dim_d) +
             ", d_c=" + std::to_string(store.dim_dc));

    const SplitSpec split = resolve_split(cfg, store.records.size());

    PipelineResult res = run_pipeline(store, lex, cfg.dims, cfg.plan, split);

    const fs::path run_dir(cfg.out);
    fs::create_directories(run_dir);

    // snapshot the fully resolved configuration so eval can rebuild the run
    RunConfig snap = cfg;
    snap.train_count = split.train_count;
    snap.val_count = split.val_count;
    snap.test_count = split.test_count;
    snap.dims = res.model.dims;
    write_text(run_dir / "config.json", run_config_to_json(snap).dump(2) + "\n");
    write_checkpoint(run_dir / "checkpoint.cfm", res.model);
    write_runlog(run_dir / "runlog.jsonl", res.log);
    write_text(run_dir / "report.json", render_report(res.test_report, "json"));
    write_text(run_dir / "report.csv", render_report(res.test_report, "csv"));
    write_text(run_dir / "report.txt", render_report(res.test_report, "text"));

    log_info("best validation macro-f1 " + std::to_string(res.best_val_f1) +
             " at classifier epoch " + std::to_string(res.best_epoch));
    std::cout << "run " << run_dir.string() << " test macro_f1 "
              << nlohmann::json(res.test_report.macro_f1).dump() << "\n";
    return 0;
}

int cmd_eval(const CliState& st, const std::string& run_dir_in,
             const std::string& store_override, const std::string& split_name,
             const std::string& format) {
    const fs::path run_dir(run_dir_in);
    RunConfig cfg = load_run_config(run_dir / "config.json");
    if (!store_override.empty()) cfg.store = store_override;
    if (st.seed_given) cfg.plan.seed = st.seed;

    FeatureStore store = load_feature_store(manifest_path(cfg.store));
    require(store.dim_d == cfg.dims.d,
            ErrKind::config,
            "store feature dim " + std::to_string(store.dim_d) +
                " does not match checkpoint dim " + std::to_string(cfg.dims.d));
    require(store.dim_dc == cfg.dims.d_c,
            ErrKind::config,
            "store caption dim " + std::to_string(store.dim_dc) +
                " does not match checkpoint dim " + std::to_string(cfg.dims.d_c));

    Model model = make_model(cfg.dims, cfg.plan.seed);
    read_checkpoint(run_dir / "checkpoint.cfm", model);

    AffectLexicon lex = lexicon_for(cfg);
    auto samples = prepare_samples(store, lex, cfg.plan.task);
    std::vector<std::size_t> labels;
    for (const auto& s : samples) labels.push_back(s.label);
    const SplitResult splits =
        make_splits(labels, resolve_split(cfg, store.records.size()));

    const std::vector<std::size_t>* idx = nullptr;
    if (split_name == "train")
        idx = &splits.train;
    else if (split_name == "val")
        idx = &splits.val;
    else if (split_name == "test")
        idx = &splits.test;
    else
        fail(ErrKind::config, "--split must be train, val, or test, got '" +
                                  split_name + "'");

    MetricsReport rep = evaluate_split(model, samples, *idx);
    const std::string rendered = render_report(rep, format);
    const char* ext = format == "json" ? "json" : (format == "csv" ? "csv" : "txt");
    write_text(run_dir / ("report_" + split_name + "." + ext), rendered);
    if (!st.out.empty()) write_text(st.out, rendered);
    std::cout << rendered;
    return 0;
}

int cmd_gradcheck(const CliState& st, bool break_relu) {
    const std::uint64_t seed = st.seed_given ? st.seed : 0;
    const auto checks = run_gradcheck(seed, break_relu);
    for (const SubgraphCheck& c : checks) {
        std::cout << c.name << " max_rel_err "
                  << nlohmann::json(c.report.max_rel_err).dump() << " worst "
                  << (c.report.worst_param.empty() ? "-" : c.report.worst_param)
                  << "[" << c.report.worst_index << "]"
                  << (c.pass ? "" : " FAIL") << "\n";
    }
    if (gradcheck_all_pass(checks)) {
        std::cout << "PASS\n";
        return 0;
    }
    for (const SubgraphCheck& c : checks)
        if (!c.pass)
            log_error("gradient mismatch in " + c.name + " at " +
                      c.report.worst_param + "[" +
                      std::to_string(c.report.worst_index) + "]");
    std::cout << "FAIL\n";
    return 5;
}

int cmd_report(const std::string& run_dir_in, const std::string& in_file,
               const std::string& format) {
    fs::path src;
    if (!in_file.empty())
        src = in_file;
    else if (!run_dir_in.empty())
        src = fs::path(run_dir_in) / "report.json";
    else
        fail(ErrKind::config, "report requires --run <dir> or --in <report.json>");
    std::ifstream in(src);
    require(in.good(), ErrKind::io, "cannot open report " + src.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrKind::config, "report " + src.string() + ": " + e.what());
    }
    std::cout << render_report(report_from_json(j), format);
    return 0;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"two-stage contrastive multimodal classifier over feature vectors"};
    app.require_subcommand(1);

    CliState st;
    auto* opt_config = app.add_option("--config", st.config_path, "JSON config file");
    auto* opt_seed = app.add_option("--seed", st.seed, "run seed");
    app.add_option("--out", st.out, "output directory or file");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic feature store");
    synth->fallthrough();
    SynthSpec sspec;
    std::vector<std::size_t> per_class_raw;
    synth->add_option("--classes", sspec.classes, "number of classes (2 or 3)");
    synth->add_option("--per-class", per_class_raw,
                      "samples per class (one value for all, or one per class)");
    synth->add_option("--dim", sspec.d, "modality feature dimension");
    synth->add_option("--dim-c", sspec.d_c, "caption feature dimension");
    synth->add_option("--delta", sspec.delta, "class separation in noise-std units");
    synth->add_option("--rho", sspec.rho, "cross-modal consistency in [0,1]");
    synth->add_option("--noise-std", sspec.noise_std, "within-class noise std");

    // train
    auto* train = app.add_subcommand("train", "run the two-stage training pipeline");
    train->fallthrough();
    std::string tr_store, tr_lexicon, tr_task;
    std::size_t tr_batch = 0, tr_s1 = 0, tr_s2 = 0, tr_cls = 0;
    std::size_t tr_train_count = 0, tr_val_count = 0, tr_test_count = 0;
    double tr_lr = -1.0, tr_tau = -1.0, tr_eps = -1.0, tr_dropout = -1.0;
    double tr_train_frac = -1.0, tr_val_frac = -1.0, tr_test_frac = -1.0;
    std::size_t tr_dprime = 0, tr_dx = 0, tr_h = 0, tr_depth = 0;
    bool tr_no_strat = false, tr_fuse_projected = false;
    train->add_option("--store", tr_store, "feature store dir or manifest path");
    train->add_option("--lexicon", tr_lexicon, "affect lexicon TSV");
    train->add_option("--task", tr_task, "multiclass | binary");
    auto* o_batch = train->add_option("--batch-size", tr_batch, "batch size");
    auto* o_lr = train->add_option("--lr", tr_lr, "learning rate");
    auto* o_s1 = train->add_option("--stage1-epochs", tr_s1, "stage-1 epochs");
    auto* o_s2 = train->add_option("--stage2-epochs", tr_s2, "stage-2 epochs");
    auto* o_cls = train->add_option("--classifier-epochs", tr_cls, "classifier epochs");
    auto* o_tau = train->add_option("--tau", tr_tau, "contrastive temperature");
    auto* o_eps = train->add_option("--eps", tr_eps, "contrastive denominator eps");
    auto* o_trc = train->add_option("--train-count", tr_train_count, "train split size");
    auto* o_vac = train->add_option("--val-count", tr_val_count, "val split size");
    auto* o_tec = train->add_option("--test-count", tr_test_count, "test split size");
    auto* o_trf = train->add_option("--train-frac", tr_train_frac, "train split fraction");
    auto* o_vaf = train->add_option("--val-frac", tr_val_frac, "val split fraction");
    auto* o_tef = train->add_option("--test-frac", tr_test_frac, "test split fraction");
    auto* o_nostrat = train->add_flag("--no-stratify", tr_no_strat,
                                      "split without class stratification");
    auto* o_dprime = train->add_option("--d-prime", tr_dprime, "projection dim");
    auto* o_dx = train->add_option("--d-x", tr_dx, "cross encoder dim");
    auto* o_h = train->add_option("--h-dim", tr_h, "aux encoder dim");
    auto* o_depth = train->add_option("--encoder-depth", tr_depth, "encoder layers");
    auto* o_drop = train->add_option("--dropout", tr_dropout, "classifier dropout");
    auto* o_fusep = train->add_flag("--fuse-projected", tr_fuse_projected,
                                    "fuse projected pair embeddings");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a trained run on one split");
    eval->fallthrough();
    std::string ev_run, ev_store, ev_split = "test", ev_format = "json";
    eval->add_option("--run", ev_run, "run directory from train")->required();
    eval->add_option("--store", ev_store, "feature store override");
    eval->add_option("--split", ev_split, "train | val | test");
    eval->add_option("--format", ev_format, "json | csv | text");

    // gradcheck
    auto* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of all backward paths");
    gradcheck->fallthrough();
    bool break_relu = false;
    gradcheck->add_flag("--break-relu-grad", break_relu,
                        "deliberately corrupt the relu derivative (negative control)");

    // report
    auto* report = app.add_subcommand("report", "render a stored metrics report");
    report->fallthrough();
    std::string rp_run, rp_in, rp_format = "text";
    report->add_option("--run", rp_run, "run directory containing report.json");
    report->add_option("--in", rp_in, "report JSON file");
    report->add_option("--format", rp_format, "json | csv | text");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    log_level();  // validate CROSSFUSE_LOG before doing any work
    st.seed_given = opt_seed->count() > 0;
    (void)opt_config;

    if (*synth) return cmd_synth(st, sspec, per_class_raw);

    if (*train) {
        RunConfig cfg = base_config(st);
        if (!tr_store.empty()) cfg.store = tr_store;
        if (!tr_lexicon.empty()) cfg.lexicon = tr_lexicon;
        if (!tr_task.empty()) cfg.plan.task = tr_task;
        if (o_batch->count()) cfg.plan.batch_size = tr_batch;
        if (o_lr->count()) cfg.plan.learning_rate = tr_lr;
        if (o_s1->count()) cfg.plan.stage1_epochs = tr_s1;
        if (o_s2->count()) cfg.plan.stage2_epochs = tr_s2;
        if (o_cls->count()) cfg.plan.classifier_epochs = tr_cls;
        if (o_tau->count()) cfg.plan.supcon.tau = tr_tau;
        if (o_eps->count()) cfg.plan.supcon.eps = tr_eps;
        if (o_trc->count()) cfg.train_count = tr_train_count;
        if (o_vac->count()) cfg.val_count = tr_val_count;
        if (o_tec->count()) cfg.test_count = tr_test_count;
        if (o_trf->count()) cfg.train_frac = tr_train_frac;
        if (o_vaf->count()) cfg.val_frac = tr_val_frac;
        if (o_tef->count()) cfg.test_frac = tr_test_frac;
        if (o_nostrat->count()) cfg.stratified = false;
        if (o_dprime->count()) cfg.dims.d_prime = tr_dprime;
        if (o_dx->count()) cfg.dims.d_x = tr_dx;
        if (o_h->count()) cfg.dims.h = tr_h;
        if (o_depth->count()) cfg.dims.encoder_depth = tr_depth;
        if (o_drop->count()) cfg.dims.dropout = tr_dropout;
        if (o_fusep->count()) cfg.dims.fuse_projected = tr_fuse_projected;
        return cmd_train(std::move(cfg));
    }

    if (*eval) return cmd_eval(st, ev_run, ev_store, ev_split, ev_format);
    if (*gradcheck) return cmd_gradcheck(st, break_relu);
    if (*report) return cmd_report(rp_run, rp_in, rp_format);
    fail(ErrKind::config, "no subcommand given");
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const CfError& e) {
        log_error(e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        log_error(e.what());
        return 2;
    }
}
