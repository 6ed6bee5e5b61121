#pragma once

#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crossfuse/error.hpp"

namespace crossfuse {

// Row = gold label, column = predicted label.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t c) : classes(c), counts(c * c, 0) {}

    std::size_t& at(std::size_t gold, std::size_t pred) {
        return counts[gold * classes + pred];
    }
    std::size_t at(std::size_t gold, std::size_t pred) const {
        return counts[gold * classes + pred];
    }
    std::size_t total() const {
        std::size_t t = 0;
        for (std::size_t c : counts) t += c;
        return t;
    }
};

inline ConfusionMatrix confusion(const std::vector<std::size_t>& gold,
                                 const std::vector<std::size_t>& pred,
                                 std::size_t classes) {
    require(gold.size() == pred.size(), ErrKind::input,
            "confusion: gold and predicted label counts disagree");
    require(classes >= 1, ErrKind::input, "confusion: need at least one class");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        require(gold[i] < classes && pred[i] < classes, ErrKind::input,
                "confusion: label out of range at position " + std::to_string(i));
        ++cm.at(gold[i], pred[i]);
    }
    return cm;
}

struct ClassMetrics {
    double accuracy = 0.0;  // one-vs-rest
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    ConfusionMatrix cm;
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;  // trace / total
    double macro_f1 = 0.0;
};

inline double macro_f1(const std::vector<double>& per_class_f1) {
    require(!per_class_f1.empty(), ErrKind::input, "macro f1 over zero classes");
    double acc = 0.0;
    for (double f : per_class_f1) acc += f;
    return acc / static_cast<double>(per_class_f1.size());
}

// Per-class precision/recall/f1 with the 0/0 -> 0 convention, one-vs-rest
// accuracy, overall accuracy and macro-F1.
inline MetricsReport metrics(const ConfusionMatrix& cm) {
    const std::size_t total = cm.total();
    require(cm.classes >= 1 && total > 0, ErrKind::input,
            "metrics: empty confusion matrix");
    MetricsReport rep;
    rep.cm = cm;
    std::vector<double> f1s;
    std::size_t trace = 0;
    for (std::size_t k = 0; k < cm.classes; ++k) {
        const double tp = static_cast<double>(cm.at(k, k));
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < cm.classes; ++j) {
            row += static_cast<double>(cm.at(k, j));
            col += static_cast<double>(cm.at(j, k));
        }
        const double fn = row - tp;
        const double fp = col - tp;
        const double tn = static_cast<double>(total) - tp - fn - fp;
        ClassMetrics c;
        c.accuracy = (tp + tn) / static_cast<double>(total);
        c.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
        c.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
        c.f1 = c.precision + c.recall > 0.0
                   ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
                   : 0.0;
        rep.per_class.push_back(c);
        f1s.push_back(c.f1);
        trace += cm.at(k, k);
    }
    rep.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    rep.macro_f1 = macro_f1(f1s);
    return rep;
}

inline nlohmann::json report_to_json(const MetricsReport& rep) {
    nlohmann::json j;
    j["classes"] = rep.cm.classes;
    nlohmann::json cm = nlohmann::json::array();
    for (std::size_t t = 0; t < rep.cm.classes; ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p < rep.cm.classes; ++p) row.push_back(rep.cm.at(t, p));
        cm.push_back(std::move(row));
    }
    j["confusion"] = std::move(cm);
    nlohmann::json per = nlohmann::json::array();
    for (const ClassMetrics& c : rep.per_class)
        per.push_back({{"accuracy", c.accuracy},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"f1", c.f1}});
    j["per_class"] = std::move(per);
    j["accuracy"] = rep.accuracy;
    j["macro_f1"] = rep.macro_f1;
    return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
    MetricsReport rep;
    const auto classes = j.at("classes").get<std::size_t>();
    rep.cm = ConfusionMatrix(classes);
    for (std::size_t t = 0; t < classes; ++t)
        for (std::size_t p = 0; p < classes; ++p)
            rep.cm.at(t, p) = j.at("confusion").at(t).at(p).get<std::size_t>();
    for (const auto& c : j.at("per_class")) {
        ClassMetrics m;
        m.accuracy = c.at("accuracy").get<double>();
        m.precision = c.at("precision").get<double>();
        m.recall = c.at("recall").get<double>();
        m.f1 = c.at("f1").get<double>();
        rep.per_class.push_back(m);
    }
    rep.accuracy = j.at("accuracy").get<double>();
    rep.macro_f1 = j.at("macro_f1").get<double>();
    return rep;
}

inline std::string render_report(const MetricsReport& rep, const std::string& format) {
    if (format == "json") {
        return report_to_json(rep).dump(2) + "\n";
    }
    if (format == "csv") {
        // column order is a contract: class, acc, f1, prec, rec
        std::string out = "class,acc,f1,prec,rec\n";
        auto num = [](double v) { return nlohmann::json(v).dump(); };
        for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
            const ClassMetrics& c = rep.per_class[k];
            out += std::to_string(k) + "," + num(c.accuracy) + "," + num(c.f1) + "," +
                   num(c.precision) + "," + num(c.recall) + "\n";
        }
        out += "overall," + num(rep.accuracy) + "," + num(rep.macro_f1) + ",,\n";
        return out;
    }
    if (format == "text") {
        std::ostringstream out;
        out << std::fixed << std::setprecision(4);
        out << std::left << std::setw(10) << "class" << std::right << std::setw(8)
            << "acc" << std::setw(8) << "prec" << std::setw(8) << "rec"
            << std::setw(8) << "f1" << "\n";
        for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
            const ClassMetrics& c = rep.per_class[k];
            out << std::left << std::setw(10) << k << std::right << std::setw(8)
                << c.accuracy << std::setw(8) << c.precision << std::setw(8)
                << c.recall << std::setw(8) << c.f1 << "\n";
        }
        out << "overall accuracy " << rep.accuracy << "\n";
        out << "overall macro-f1 " << rep.macro_f1 << "\n";
        return out.str();
    }
    fail(ErrKind::config, "unknown report format '" + format + "'");
}

}  // namespace crossfuse
