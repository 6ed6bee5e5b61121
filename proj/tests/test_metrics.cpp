#include <catch2/catch_amalgamated.hpp>

#include "crossfuse/metrics.hpp"
#include "crossfuse/rng.hpp"

using namespace crossfuse;

TEST_CASE("perfect predictions give a diagonal matrix", "[metrics]") {
    ConfusionMatrix cm = confusion({0, 1, 2}, {0, 1, 2}, 3);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t p = 0; p < 3; ++p)
            REQUIRE(cm.at(t, p) == (t == p ? 1u : 0u));
}

TEST_CASE("uniform mistakes land in one off-diagonal cell", "[metrics]") {
    ConfusionMatrix cm = confusion({0, 0}, {1, 1}, 2);
    REQUIRE(cm.at(0, 1) == 2);
    REQUIRE(cm.at(0, 0) == 0);
    REQUIRE(cm.at(1, 0) == 0);
    REQUIRE(cm.at(1, 1) == 0);
}

TEST_CASE("random 200-sample case matches a brute-force count", "[metrics]") {
    Rng rng(321);
    std::vector<std::size_t> gold(200), pred(200);
    for (auto& g : gold) g = rng.below(3);
    for (auto& p : pred) p = rng.below(3);
    ConfusionMatrix cm = confusion(gold, pred, 3);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t p = 0; p < 3; ++p) {
            std::size_t count = 0;
            for (std::size_t i = 0; i < 200; ++i)
                if (gold[i] == t && pred[i] == p) ++count;
            REQUIRE(cm.at(t, p) == count);
        }
    REQUIRE(cm.total() == 200);
}

TEST_CASE("out-of-range labels are rejected", "[metrics]") {
    REQUIRE_THROWS_AS(confusion({0, 3}, {0, 1}, 3), CfError);
    REQUIRE_THROWS_AS(confusion({0, 1}, {0, 5}, 3), CfError);
    REQUIRE_THROWS_AS(confusion({0, 1}, {0}, 3), CfError);
}

TEST_CASE("macro f1 reproduces the published aggregate", "[metrics]") {
    const double got = macro_f1({0.8448, 0.6605, 0.5702});
    REQUIRE(got == Catch::Approx(0.6918).margin(0.0001));
}

TEST_CASE("perfect predictions score 1.0 everywhere", "[metrics]") {
    MetricsReport rep = metrics(confusion({0, 1, 2, 0, 1, 2}, {0, 1, 2, 0, 1, 2}, 3));
    REQUIRE(rep.accuracy == 1.0);
    REQUIRE(rep.macro_f1 == 1.0);
    for (const ClassMetrics& c : rep.per_class) {
        REQUIRE(c.accuracy == 1.0);
        REQUIRE(c.precision == 1.0);
        REQUIRE(c.recall == 1.0);
        REQUIRE(c.f1 == 1.0);
    }
}

TEST_CASE("balanced 2x2 confusion gives one-half everywhere", "[metrics]") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 1;
    cm.at(0, 1) = 1;
    cm.at(1, 0) = 1;
    cm.at(1, 1) = 1;
    MetricsReport rep = metrics(cm);
    REQUIRE(rep.accuracy == 0.5);
    for (const ClassMetrics& c : rep.per_class) {
        REQUIRE(c.precision == 0.5);
        REQUIRE(c.recall == 0.5);
        REQUIRE(c.f1 == 0.5);
        REQUIRE(c.accuracy == 0.5);
    }
}

TEST_CASE("zero denominators produce zeros, never NaN", "[metrics]") {
    // class 1 never predicted and never gold -> all zero denominators
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 5;
    MetricsReport rep = metrics(cm);
    REQUIRE(rep.per_class[1].precision == 0.0);
    REQUIRE(rep.per_class[1].recall == 0.0);
    REQUIRE(rep.per_class[1].f1 == 0.0);
    REQUIRE(rep.per_class[1].accuracy == 1.0);  // one-vs-rest: all TN
    REQUIRE(std::isfinite(rep.macro_f1));
    REQUIRE(rep.macro_f1 == 0.5);
}

TEST_CASE("metrics are invariant under joint permutation", "[metrics]") {
    Rng rng(11);
    std::vector<std::size_t> gold(50), pred(50);
    for (auto& g : gold) g = rng.below(3);
    for (auto& p : pred) p = rng.below(3);
    MetricsReport a = metrics(confusion(gold, pred, 3));

    std::vector<std::size_t> idx(50);
    for (std::size_t i = 0; i < 50; ++i) idx[i] = i;
    rng.shuffle(idx);
    std::vector<std::size_t> gold2, pred2;
    for (std::size_t i : idx) {
        gold2.push_back(gold[i]);
        pred2.push_back(pred[i]);
    }
    MetricsReport b = metrics(confusion(gold2, pred2, 3));
    REQUIRE(a.accuracy == b.accuracy);
    REQUIRE(a.macro_f1 == b.macro_f1);
    for (std::size_t k = 0; k < 3; ++k) {
        REQUIRE(a.per_class[k].precision == b.per_class[k].precision);
        REQUIRE(a.per_class[k].recall == b.per_class[k].recall);
    }
}

TEST_CASE("binary metrics match independent one-vs-rest formulas", "[metrics]") {
    // gold positives: 6, predicted positives: 5, TP = 4
    std::vector<std::size_t> gold{1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
    std::vector<std::size_t> pred{1, 1, 1, 1, 0, 0, 1, 0, 0, 0};
    MetricsReport rep = metrics(confusion(gold, pred, 2));
    const double tp = 4, fp = 1, fn = 2, tn = 3;
    REQUIRE(rep.per_class[1].precision == Catch::Approx(tp / (tp + fp)).margin(1e-15));
    REQUIRE(rep.per_class[1].recall == Catch::Approx(tp / (tp + fn)).margin(1e-15));
    const double p = tp / (tp + fp), r = tp / (tp + fn);
    REQUIRE(rep.per_class[1].f1 == Catch::Approx(2 * p * r / (p + r)).margin(1e-15));
    REQUIRE(rep.per_class[1].accuracy ==
            Catch::Approx((tp + tn) / 10.0).margin(1e-15));
}

TEST_CASE("macro f1 is exactly the unweighted mean", "[metrics]") {
    Rng rng(77);
    std::vector<std::size_t> gold(60), pred(60);
    for (auto& g : gold) g = rng.below(3);
    for (auto& p : pred) p = rng.below(3);
    MetricsReport rep = metrics(confusion(gold, pred, 3));
    const double mean =
        (rep.per_class[0].f1 + rep.per_class[1].f1 + rep.per_class[2].f1) / 3.0;
    REQUIRE(rep.macro_f1 == macro_f1({rep.per_class[0].f1, rep.per_class[1].f1,
                                      rep.per_class[2].f1}));
    REQUIRE(rep.macro_f1 == Catch::Approx(mean).margin(1e-15));
}

TEST_CASE("empty confusion matrix is rejected", "[metrics]") {
    ConfusionMatrix cm(3);
    REQUIRE_THROWS_AS(metrics(cm), CfError);
}

TEST_CASE("json report round-trips losslessly", "[metrics]") {
    Rng rng(88);
    std::vector<std::size_t> gold(37), pred(37);
    for (auto& g : gold) g = rng.below(3);
    for (auto& p : pred) p = rng.below(3);
    MetricsReport rep = metrics(confusion(gold, pred, 3));

    const std::string doc = render_report(rep, "json");
    MetricsReport back = report_from_json(nlohmann::json::parse(doc));
    REQUIRE(back.accuracy == rep.accuracy);
    REQUIRE(back.macro_f1 == rep.macro_f1);
    REQUIRE(back.cm.counts == rep.cm.counts);
    for (std::size_t k = 0; k < 3; ++k) {
        REQUIRE(back.per_class[k].accuracy == rep.per_class[k].accuracy);
        REQUIRE(back.per_class[k].precision == rep.per_class[k].precision);
        REQUIRE(back.per_class[k].recall == rep.per_class[k].recall);
        REQUIRE(back.per_class[k].f1 == rep.per_class[k].f1);
    }
}

TEST_CASE("csv report has the documented column order", "[metrics]") {
    MetricsReport rep = metrics(confusion({0, 1}, {0, 1}, 2));
    const std::string csv = render_report(rep, "csv");
    REQUIRE(csv.rfind("class,acc,f1,prec,rec\n", 0) == 0);
    REQUIRE(csv.find("overall,") != std::string::npos);
    // one line per class + header + overall
    std::size_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    REQUIRE(lines == 4);
}

TEST_CASE("text report prints four decimals and an overall block", "[metrics]") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 1;
    cm.at(0, 1) = 2;
    cm.at(1, 1) = 1;
    MetricsReport rep = metrics(cm);
    const std::string text = render_report(rep, "text");
    REQUIRE(text.find("0.3333") != std::string::npos);  // class-0 recall 1/3
    REQUIRE(text.find("overall accuracy 0.5000") != std::string::npos);
    REQUIRE(text.find("overall macro-f1") != std::string::npos);
}

TEST_CASE("unknown report format is a config error", "[metrics]") {
    MetricsReport rep = metrics(confusion({0, 1}, {0, 1}, 2));
    REQUIRE_THROWS_AS(render_report(rep, "xml"), CfError);
}
