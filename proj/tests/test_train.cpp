#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "crossfuse/train.hpp"

using namespace crossfuse;

namespace {

const std::string kDataDir = CROSSFUSE_DATA_DIR;

std::vector<std::size_t> labels_of(std::size_t a, std::size_t b, std::size_t c) {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < a; ++i) v.push_back(0);
    for (std::size_t i = 0; i < b; ++i) v.push_back(1);
    for (std::size_t i = 0; i < c; ++i) v.push_back(2);
    return v;
}

// Gaussian class clusters with class-keyed transcripts, built in memory.
FeatureStore cluster_store(std::size_t per_class, std::size_t classes,
                           std::size_t d, std::size_t dc, double sep,
                           std::uint64_t seed) {
    Rng rng(seed);
    FeatureStore st;
    st.dim_d = d;
    st.dim_dc = dc;
    const char* words[3] = {"love friend calm", "hate enemy attack",
                            "surprise grief fear"};
    const char* extra[3] = {" hope", " grief and fear", ""};
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            FeatureRecord r;
            r.sample_id = "s" + std::to_string(c) + "_" + std::to_string(i);
            r.label = c;
            auto mk = [&](std::size_t dim) {
                Vec v(dim);
                for (std::size_t k = 0; k < dim; ++k)
                    v[k] = (k % classes == c ? sep : 0.0) + rng.normal();
                return v;
            };
            r.f_image = mk(d);
            r.f_text = mk(d);
            r.f_audio = mk(d);
            r.f_caption = mk(dc);
            r.has_caption = true;
            r.transcript = std::string(words[c % 3]) + extra[i % 3];
            st.records.push_back(std::move(r));
        }
    return st;
}

ModelDims tiny_dims(std::size_t d, std::size_t dc) {
    ModelDims dm;
    dm.d = d;
    dm.d_prime = 8;
    dm.d_x = 6;
    dm.h = 6;
    dm.d_c = dc;
    dm.classes = 3;
    dm.encoder_depth = 1;
    dm.classifier_widths = {8, 6};
    dm.dropout = 0.3;
    return dm;
}

TrainPlan tiny_plan(std::uint64_t seed) {
    TrainPlan p;
    p.seed = seed;
    p.batch_size = 8;
    p.learning_rate = 1e-3;
    p.stage1_epochs = 2;
    p.stage2_epochs = 2;
    p.classifier_epochs = 2;
    return p;
}

std::map<std::string, std::pair<Matrix, Vec>> snapshot(Model& m) {
    std::map<std::string, std::pair<Matrix, Vec>> out;
    visit_dense(m, [&](const std::string& name, DenseLayer& l) {
        out.emplace(name, std::make_pair(l.w, l.b));
    });
    return out;
}

bool same_params(const std::pair<Matrix, Vec>& a, const std::pair<Matrix, Vec>& b) {
    return a.first.data == b.first.data && a.second == b.second;
}

bool prefix_unchanged(const std::map<std::string, std::pair<Matrix, Vec>>& a,
                      const std::map<std::string, std::pair<Matrix, Vec>>& b,
                      const std::string& prefix) {
    for (const auto& [name, p] : a) {
        if (name.rfind(prefix, 0) != 0) continue;
        if (!same_params(p, b.at(name))) return false;
    }
    return true;
}

bool prefix_changed(const std::map<std::string, std::pair<Matrix, Vec>>& a,
                    const std::map<std::string, std::pair<Matrix, Vec>>& b,
                    const std::string& prefix) {
    for (const auto& [name, p] : a)
        if (name.rfind(prefix, 0) == 0 && !same_params(p, b.at(name))) return true;
    return false;
}

}  // namespace

TEST_CASE("stratified splits hit exact totals on a 2009-sample set", "[train]") {
    const auto labels = labels_of(1000, 509, 500);
    SplitSpec spec;
    spec.train_count = 1283;
    spec.val_count = 325;
    spec.test_count = 401;
    spec.seed = 7;
    const SplitResult r = make_splits(labels, spec);
    REQUIRE(r.train.size() == 1283);
    REQUIRE(r.val.size() == 325);
    REQUIRE(r.test.size() == 401);

    // per-class proportions within one sample of ideal
    for (std::size_t c = 0; c < 3; ++c) {
        const double nc = c == 0 ? 1000.0 : (c == 1 ? 509.0 : 500.0);
        auto count_in = [&](const std::vector<std::size_t>& idx) {
            std::size_t k = 0;
            for (std::size_t i : idx)
                if (labels[i] == c) ++k;
            return static_cast<double>(k);
        };
        CHECK(std::abs(count_in(r.train) - nc * 1283.0 / 2009.0) <= 1.0);
        CHECK(std::abs(count_in(r.val) - nc * 325.0 / 2009.0) <= 1.0);
        CHECK(std::abs(count_in(r.test) - nc * 401.0 / 2009.0) <= 1.0);
    }
}

TEST_CASE("stratified splits hit exact totals on a 1038-sample binary set", "[train]") {
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 431; ++i) labels.push_back(1);
    for (std::size_t i = 0; i < 607; ++i) labels.push_back(0);
    SplitSpec spec;
    spec.train_count = 662;
    spec.val_count = 166;
    spec.test_count = 210;
    spec.seed = 3;
    const SplitResult r = make_splits(labels, spec);
    REQUIRE(r.train.size() == 662);
    REQUIRE(r.val.size() == 166);
    REQUIRE(r.test.size() == 210);
}

TEST_CASE("splits partition the index set", "[train]") {
    const auto labels = labels_of(13, 9, 17);
    SplitSpec spec;
    spec.train_count = 20;
    spec.val_count = 9;
    spec.test_count = 10;
    spec.seed = 11;
    const SplitResult r = make_splits(labels, spec);
    std::vector<std::size_t> all;
    all.insert(all.end(), r.train.begin(), r.train.end());
    all.insert(all.end(), r.val.begin(), r.val.end());
    all.insert(all.end(), r.test.begin(), r.test.end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
}

TEST_CASE("splits are seed-deterministic and seed-sensitive", "[train]") {
    const auto labels = labels_of(40, 30, 30);
    SplitSpec spec;
    spec.train_count = 60;
    spec.val_count = 20;
    spec.test_count = 20;
    spec.seed = 5;
    const SplitResult a = make_splits(labels, spec);
    const SplitResult b = make_splits(labels, spec);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    spec.seed = 6;
    const SplitResult c = make_splits(labels, spec);
    CHECK(a.train != c.train);
}

TEST_CASE("splits validate their counts", "[train]") {
    const auto labels = labels_of(5, 5, 5);
    SplitSpec spec;
    spec.train_count = 10;
    spec.val_count = 3;
    spec.test_count = 3;  // sums to 16, not 15
    CHECK_THROWS_AS(make_splits(labels, spec), CfError);
    spec.test_count = 2;
    spec.val_count = 0;
    spec.train_count = 13;
    CHECK_THROWS_AS(make_splits(labels, spec), CfError);
}

TEST_CASE("unstratified splits still produce exact disjoint slices", "[train]") {
    const auto labels = labels_of(10, 10, 10);
    SplitSpec spec;
    spec.train_count = 18;
    spec.val_count = 6;
    spec.test_count = 6;
    spec.stratified = false;
    spec.seed = 9;
    const SplitResult r = make_splits(labels, spec);
    REQUIRE(r.train.size() == 18);
    REQUIRE(r.val.size() == 6);
    REQUIRE(r.test.size() == 6);
    std::set<std::size_t> seen(r.train.begin(), r.train.end());
    seen.insert(r.val.begin(), r.val.end());
    seen.insert(r.test.begin(), r.test.end());
    CHECK(seen.size() == 30);
}

TEST_CASE("balanced data batches to two of each class per batch", "[train]") {
    const auto labels = labels_of(10, 10, 10);
    const auto batches = make_batches(labels, 6, 42);
    REQUIRE(batches.size() == 5);
    for (const auto& b : batches) {
        REQUIRE(b.size() == 6);
        std::size_t per_class[3] = {0, 0, 0};
        for (std::size_t i : b) ++per_class[labels[i]];
        CHECK(per_class[0] == 2);
        CHECK(per_class[1] == 2);
        CHECK(per_class[2] == 2);
    }
}

TEST_CASE("batches cover every index exactly once", "[train]") {
    Rng rng(99);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 53; ++i) labels.push_back(rng.below(3));
    for (std::size_t bs : {4UL, 8UL, 32UL, 64UL}) {
        const auto batches = make_batches(labels, bs, 1);
        std::vector<std::size_t> all;
        for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
        std::sort(all.begin(), all.end());
        REQUIRE(all.size() == labels.size());
        for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
    }
}

TEST_CASE("no batch is left with a single sample", "[train]") {
    // 5 samples, batch 4: naive slicing would leave a lone tail sample
    std::vector<std::size_t> labels = {0, 0, 0, 1, 1};
    const auto batches = make_batches(labels, 4, 17);
    for (const auto& b : batches) CHECK(b.size() >= 2);
    std::size_t total = 0;
    for (const auto& b : batches) total += b.size();
    CHECK(total == 5);
}

TEST_CASE("each class present in a batch appears at least twice when counts allow",
          "[train]") {
    const auto labels = labels_of(12, 12, 12);
    const auto batches = make_batches(labels, 8, 13);
    for (const auto& b : batches) {
        std::map<std::size_t, std::size_t> counts;
        for (std::size_t i : b) ++counts[labels[i]];
        for (const auto& [c, k] : counts) CHECK(k >= 2);
    }
}

TEST_CASE("batch composition depends on the seed", "[train]") {
    const auto labels = labels_of(16, 16, 16);
    const auto a = make_batches(labels, 8, 1);
    const auto b = make_batches(labels, 8, 2);
    CHECK(a != b);
    CHECK(a == make_batches(labels, 8, 1));
}

TEST_CASE("batching rejects batch size below two", "[train]") {
    std::vector<std::size_t> labels = {0, 1, 0, 1};
    CHECK_THROWS_AS(make_batches(labels, 1, 0), CfError);
}

TEST_CASE("binary task folds labels one and two together", "[train]") {
    FeatureStore st = cluster_store(2, 3, 4, 3, 1.0, 5);
    AffectLexicon lex = load_lexicon(kDataDir + "/toy_lexicon.tsv");
    const auto multi = prepare_samples(st, lex, "multiclass");
    const auto binary = prepare_samples(st, lex, "binary");
    REQUIRE(multi.size() == 6);
    for (std::size_t i = 0; i < multi.size(); ++i) {
        CHECK(binary[i].label == (multi[i].label >= 1 ? 1u : 0u));
        CHECK(binary[i].f_es.size() == kAffectDim);
    }
}

TEST_CASE("zero-initialized head starts at log-class-count cross entropy", "[train]") {
    FeatureStore st = cluster_store(8, 3, 6, 4, 4.0, 21);
    AffectLexicon lex = load_lexicon(kDataDir + "/toy_lexicon.tsv");
    auto samples = prepare_samples(st, lex, "multiclass");
    ModelDims dims = tiny_dims(6, 4);
    Model m = make_model(dims, 77);
    for (DenseLayer& l : m.head.hidden) {
        std::fill(l.w.data.begin(), l.w.data.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    std::fill(m.head.out.w.data.begin(), m.head.out.w.data.end(), 0.0);
    std::fill(m.head.out.b.begin(), m.head.out.b.end(), 0.0);

    TrainPlan plan = tiny_plan(77);
    plan.learning_rate = 0.0;
    plan.classifier_epochs = 1;
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < 18; ++i) train_idx.push_back(i);
    for (std::size_t i = 18; i < 24; ++i) val_idx.push_back(i);

    LossLedger ledger;
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_f1 = 0.0;
    train_classifier(m, samples, train_idx, val_idx, plan, ledger, log, best_epoch,
                     best_f1);
    REQUIRE(log.size() == 1);
    REQUIRE(log[0].L_ce.has_value());
    CHECK_THAT(*log[0].L_ce, Catch::Matchers::WithinAbs(std::log(3.0), 1e-12));
    CHECK(log[0].val_macro_f1.has_value());
}

TEST_CASE("zero learning rate leaves every parameter bitwise unchanged", "[train]") {
    FeatureStore st = cluster_store(8, 3, 6, 4, 4.0, 31);
    AffectLexicon lex = load_lexicon(kDataDir + "/toy_lexicon.tsv");
    ModelDims dims = tiny_dims(6, 4);
    TrainPlan plan = tiny_plan(123);
    plan.learning_rate = 0.0;
    plan.stage1_epochs = 1;
    plan.stage2_epochs = 1;
    plan.classifier_epochs = 1;
    SplitSpec split;
    split.train_count = 14;
    split.val_count = 5;
    split.test_count = 5;
    split.seed = 123;

    PipelineResult res = run_pipeline(st, lex, dims, plan, split);

    ModelDims final_dims = dims;
    final_dims.classes = 3;
    final_dims.d = st.dim_d;
    final_dims.d_c = st.dim_dc;
    Model fresh = make_model(final_dims, plan.seed);
    auto got = snapshot(res.model);
    auto want = snapshot(fresh);
    REQUIRE(got.size() == want.size());
    for (const auto& [name, p] : want) CHECK(same_params(p, got.at(name)));
}

TEST_CASE("each stage trains only the layers it owns", "[train]") {
    FeatureStore st = cluster_store(8, 3, 6, 4, 4.0, 41);
    AffectLexicon lex = load_lexicon(kDataDir + "/toy_lexicon.tsv");
    auto samples = prepare_samples(st, lex, "multiclass");
    ModelDims dims = tiny_dims(6, 4);
    Model m = make_model(dims, 55);
    TrainPlan plan = tiny_plan(55);

    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < 18; ++i) train_idx.push_back(i);
    for (std::size_t i = 18; i < 24; ++i) val_idx.push_back(i);

    LossLedger ledger;
    std::vector<EpochLog> log;
    auto p0 = snapshot(m);
    train_stage1(m, samples, train_idx, plan, ledger, log);
    auto p1 = snapshot(m);
    CHECK(prefix_changed(p1, p0, "s1."));
    CHECK(prefix_changed(p1, p0, "aux."));
    CHECK(prefix_unchanged(p1, p0, "cross."));
    CHECK(prefix_unchanged(p1, p0, "head."));

    train_stage2(m, samples, train_idx, plan, ledger, log);
    auto p2 = snapshot(m);
    CHECK(prefix_unchanged(p2, p1, "s1."));
    CHECK(prefix_unchanged(p2, p1, "aux."));
    CHECK(prefix_changed(p2, p1, "cross."));
    CHECK(prefix_unchanged(p2, p1, "head."));

    std::size_t best_epoch = 0;
    double best_f1 = 0.0;
    train_classifier(m, samples, train_idx, val_idx, plan, ledger, log, best_epoch,
                     best_f1);
    auto p3 = snapshot(m);
    CHECK(prefix_unchanged(p3, p2, "s1."));
    CHECK(prefix_unchanged(p3, p2, "aux."));
    CHECK(prefix_unchanged(p3, p2, "cross."));
    CHECK(prefix_changed(p3, p2, "head."));
}

TEST_CASE("pipelines with the same seed agree bit for bit", "[train]") {
    FeatureStore st = cluster_store(8, 3, 6, 4, 4.0, 61);
    AffectLexicon lex = load_lexicon(kDataDir + "/toy_lexicon.tsv");
    ModelDims dims = tiny_dims(6, 4);
    TrainPlan plan = tiny_plan(2024);
    SplitSpec split;
    split.train_count = 14;
    split.val_count = 5;
    split.test_count = 5;
    split.seed = 2024;

    PipelineResult a = run_pipeline(st, lex, dims, plan, split);
    PipelineResult b = run_pipeline(st, lex, dims, plan, split);

    auto pa = snapshot(a.model);
    auto pb = snapshot(b.model);
    for (const auto& [name, p] : pa) CHECK(same_params(p, pb.at(name)));
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i)
        CHECK(to_json(a.log[i]).dump() == to_json(b.log[i]).dump());
    CHECK(a.test_report.macro_f1 == b.test_report.macro_f1);

    TrainPlan plan2 = plan;
    plan2.seed = 2025;
    PipelineResult c = run_pipeline(st, lex, dims, plan2, split);
    auto pc = snapshot(c.model);
    bool any_diff = false;
    for (const auto& [name, p] : pa)
        if (!same_params(p, pc.at(name))) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("run log tracks the stage schedule and the loss identity", "[train]") {
    FeatureStore st = cluster_store(8, 3, 6, 4, 4.0, 71);
    AffectLexicon lex = load_lexicon(kDataDir + "/toy_lexicon.tsv");
    ModelDims dims = tiny_dims(6, 4);
    TrainPlan plan = tiny_plan(9);
    plan.stage1_epochs = 3;
    plan.stage2_epochs = 2;
    plan.classifier_epochs = 2;
    SplitSpec split;
    split.train_count = 14;
    split.val_count = 5;
    split.test_count = 5;
    split.seed = 9;

    PipelineResult res = run_pipeline(st, lex, dims, plan, split);
    REQUIRE(res.log.size() == 7);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(res.log[i].stage == "stage1");
        CHECK(res.log[i].epoch == i);
        CHECK_FALSE(res.log[i].L_ce.has_value());
        CHECK_FALSE(res.log[i].val_macro_f1.has_value());
        CHECK(res.log[i].L_stage2 == 0.0);
    }
    for (std::size_t i = 3; i < 5; ++i) {
        CHECK(res.log[i].stage == "stage2");
        CHECK(res.log[i].L_stage1 == res.log[2].L_stage1);
    }
    for (std::size_t i = 5; i < 7; ++i) {
        CHECK(res.log[i].stage == "classifier");
        REQUIRE(res.log[i].L_ce.has_value());
        REQUIRE(res.log[i].val_macro_f1.has_value());
    }
    for (const EpochLog& e : res.log) {
        const double sum = e.L_stage1 + e.L_stage2 + e.L_sup_ES + e.L_sup_CP;
        CHECK(std::abs(e.L_total - sum) <= 1e-12);
    }
}

TEST_CASE("run log survives a file round trip unchanged", "[train]") {
    std::vector<EpochLog> log;
    LossLedger ledger;
    ledger.L_stage1 = -0.123456789012345;
    ledger.L_sup_ES = 1.0 / 3.0;
    ledger.L_sup_CP = 1e-17;
    log.push_back(ledger.entry("stage1", 0));
    EpochLog e = ledger.entry("classifier", 4);
    e.L_ce = std::log(3.0);
    e.val_macro_f1 = 0.6918;
    log.push_back(e);

    const auto path = std::filesystem::temp_directory_path() / "cf_runlog_test.jsonl";
    write_runlog(path, log);
    const auto back = read_runlog(path);
    std::filesystem::remove(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].L_stage1 == log[0].L_stage1);
    CHECK(back[0].L_total == log[0].L_total);
    CHECK_FALSE(back[0].L_ce.has_value());
    CHECK(back[1].stage == "classifier");
    CHECK(back[1].epoch == 4);
    CHECK(*back[1].L_ce == std::log(3.0));
    CHECK(*back[1].val_macro_f1 == 0.6918);
}

TEST_CASE("contrastive collapse at tiny temperature aborts the run", "[train]") {
    // identical same-class samples give similarity one; at tau=1e-4 the
    // positive term overflows and the loss leaves the finite range
    FeatureStore st;
    st.dim_d = 4;
    st.dim_dc = 3;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i) {
            FeatureRecord r;
            r.sample_id = "d" + std::to_string(c) + std::to_string(i);
            r.label = c;
            r.f_image = Vec{1.0 + static_cast<double>(c), 2.0, 3.0, 4.0};
            r.f_text = Vec{0.5, 1.5 - static_cast<double>(c), 2.5, 3.5};
            r.f_audio = Vec{2.0, 1.0, static_cast<double>(c), 1.0};
            r.f_caption = Vec{1.0, 1.0, 1.0};
            r.has_caption = true;
            st.records.push_back(std::move(r));
        }
    AffectLexicon lex;
    ModelDims dims = tiny_dims(4, 3);
    TrainPlan plan = tiny_plan(1);
    plan.task = "binary";
    plan.batch_size = 4;
    plan.supcon.tau = 1e-4;
    SplitSpec split;
    split.train_count = 4;
    split.val_count = 2;
    split.test_count = 2;
    split.seed = 1;
    try {
        run_pipeline(st, lex, dims, plan, split);
        FAIL("expected divergence abort");
    } catch (const CfError& err) {
        CHECK(err.kind() == ErrKind::divergence);
        CHECK(err.exit_code() == 4);
        CHECK(std::string(err.what()).find("stage1") != std::string::npos);
    }
}

TEST_CASE("stage one loss decreases on separable clusters", "[train]") {
    FeatureStore st = cluster_store(8, 3, 6, 4, 5.0, 81);
    AffectLexicon lex = load_lexicon(kDataDir + "/toy_lexicon.tsv");
    auto samples = prepare_samples(st, lex, "multiclass");
    ModelDims dims = tiny_dims(6, 4);
    Model m = make_model(dims, 13);
    TrainPlan plan = tiny_plan(13);
    plan.stage1_epochs = 6;
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < 24; ++i) train_idx.push_back(i);

    LossLedger ledger;
    std::vector<EpochLog> log;
    train_stage1(m, samples, train_idx, plan, ledger, log);
    REQUIRE(log.size() == 6);
    for (const EpochLog& e : log) CHECK(std::isfinite(e.L_stage1));
    CHECK(log.back().L_stage1 < log.front().L_stage1);
}

TEST_CASE("reloading a checkpoint reproduces the test metrics exactly", "[train]") {
    FeatureStore st = cluster_store(8, 3, 6, 4, 4.0, 91);
    AffectLexicon lex = load_lexicon(kDataDir + "/toy_lexicon.tsv");
    ModelDims dims = tiny_dims(6, 4);
    TrainPlan plan = tiny_plan(3);
    SplitSpec split;
    split.train_count = 14;
    split.val_count = 5;
    split.test_count = 5;
    split.seed = 3;

    PipelineResult res = run_pipeline(st, lex, dims, plan, split);
    const auto path = std::filesystem::temp_directory_path() / "cf_train_ckpt.cfm";
    write_checkpoint(path, res.model);

    Model reloaded = make_model(res.model.dims, 999);
    read_checkpoint(path, reloaded);
    std::filesystem::remove(path);

    auto samples = prepare_samples(st, lex, plan.task);
    MetricsReport again = evaluate_split(reloaded, samples, res.splits.test);
    CHECK(again.macro_f1 == res.test_report.macro_f1);
    CHECK(again.accuracy == res.test_report.accuracy);
    for (std::size_t g = 0; g < 3; ++g)
        for (std::size_t p = 0; p < 3; ++p)
            CHECK(again.cm.at(g, p) == res.test_report.cm.at(g, p));
}

TEST_CASE("training plans are validated", "[train]") {
    TrainPlan p;
    p.batch_size = 1;
    CHECK_THROWS_AS(validate(p), CfError);
    p.batch_size = 32;
    p.learning_rate = -1.0;
    CHECK_THROWS_AS(validate(p), CfError);
    p.learning_rate = 1e-4;
    p.task = "regression";
    CHECK_THROWS_AS(validate(p), CfError);
    p.task = "binary";
    p.stage1_epochs = 0;
    CHECK_THROWS_AS(validate(p), CfError);
    p.stage1_epochs = 1;
    CHECK_NOTHROW(validate(p));
}

TEST_CASE("evaluation rejects an empty split", "[train]") {
    FeatureStore st = cluster_store(2, 3, 4, 3, 1.0, 15);
    AffectLexicon lex;
    auto samples = prepare_samples(st, lex, "multiclass");
    Model m = make_model(tiny_dims(4, 3), 1);
    CHECK_THROWS_AS(evaluate_split(m, samples, {}), CfError);
}
