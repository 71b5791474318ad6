#include "rlad/eval.hpp"

#include <cstdio>
#include <fstream>
#include <map>

namespace rlad::eval {

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw LengthMismatch("predictions (" + std::to_string(predictions.size()) + ") and labels (" +
                             std::to_string(labels.size()) + ") differ in length");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool y = labels[i] == 1;
        if (p && y) ++c.tp;
        else if (p) ++c.fp;
        else if (y) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f1_from(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

Prf1 prf1(const ConfusionCounts& c) {
    Prf1 m;
    m.precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    m.recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    m.f1 = f1_from(m.precision, m.recall);
    return m;
}

std::vector<int> point_adjust(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) throw LengthMismatch("point_adjust inputs differ in length");
    std::vector<int> out(predictions.begin(), predictions.end());
    std::size_t i = 0;
    while (i < labels.size()) {
        if (labels[i] != 1) {
            ++i;
            continue;
        }
        std::size_t j = i;
        bool hit = false;
        while (j < labels.size() && labels[j] == 1) hit |= predictions[j++] == 1;
        if (hit) std::fill(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(j), 1);
        i = j;
    }
    return out;
}

namespace {

std::vector<int> truth_at(const SeriesPredictions& sp) {
    std::vector<int> y;
    y.reserve(sp.t.size());
    for (auto t : sp.t) y.push_back(sp.series->labels.at(t));
    return y;
}

void put_counts(nlohmann::json& m, const std::string& prefix, const ConfusionCounts& c) {
    const auto s = prf1(c);
    m[prefix + "tp"] = c.tp;
    m[prefix + "fp"] = c.fp;
    m[prefix + "tn"] = c.tn;
    m[prefix + "fn"] = c.fn;
    m[prefix + "precision"] = s.precision;
    m[prefix + "recall"] = s.recall;
    m[prefix + "f1"] = s.f1;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

nlohmann::json compute_metrics(const std::vector<SeriesPredictions>& test, const std::vector<SeriesPredictions>& train,
                               const active::LabelStore& labels, const ReportOptions& options) {
    nlohmann::json m = nlohmann::json::object();
    ConfusionCounts all, all_pa;
    std::size_t total_steps = 0, total_anomalies = 0;
    for (const auto& sp : test) {
        if (sp.t.size() != sp.predictions.size()) throw LengthMismatch("series '" + sp.series->id + "' prediction count");
        const auto y = truth_at(sp);
        const auto c = confusion(sp.predictions, y);
        all += c;
        put_counts(m, "series/" + sp.series->id + "/test_", c);
        if (options.point_adjust) all_pa += confusion(point_adjust(sp.predictions, y), y);
        total_steps += sp.series->length();
        for (int l : sp.series->labels) total_anomalies += static_cast<std::size_t>(l);
    }
    put_counts(m, "test_", all);
    if (options.point_adjust) put_counts(m, "test_pa_", all_pa);
    m["test_decided"] = all.total();
    m["n_series"] = test.size();
    m["anomaly_rate"] = total_steps ? static_cast<double>(total_anomalies) / static_cast<double>(total_steps) : 0.0;

    std::map<std::string, ConfusionCounts> strata;
    for (const auto& name : {"ground_truth", "human", "propagated", "unlabeled"}) strata[name] = {};
    std::size_t wrong_pseudo = 0;
    for (const auto& sp : train) {
        for (std::size_t k = 0; k < sp.t.size(); ++k) {
            const auto t = sp.t[k];
            const auto entry = labels.get(sp.series->id, t);
            const std::string key = entry ? active::to_string(entry->provenance) : "unlabeled";
            const int pred = sp.predictions[k];
            const int y = sp.series->labels.at(t);
            strata[key] += confusion(std::span<const int>(&pred, 1), std::span<const int>(&y, 1));
            if (entry && entry->provenance == active::Provenance::propagated && entry->label != y) ++wrong_pseudo;
        }
    }
    for (const auto& [name, c] : strata) {
        m["strat_" + name + "_n"] = c.total();
        m["strat_" + name + "_f1"] = prf1(c).f1;
        m["strat_" + name + "_accuracy"] = c.total() ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
    }
    m["labels_ground_truth"] = labels.count(active::Provenance::ground_truth);
    m["labels_human"] = labels.count(active::Provenance::human);
    m["labels_propagated"] = labels.count(active::Provenance::propagated);
    m["labels_propagated_wrong"] = wrong_pseudo;
    return m;
}

nlohmann::json emit_report(const std::filesystem::path& dir, const std::vector<SeriesPredictions>& test,
                           const std::vector<SeriesPredictions>& train, const active::LabelStore& labels,
                           const ReportOptions& options) {
    const auto metrics = compute_metrics(test, train, labels, options);
    std::error_code ec;
    std::filesystem::create_directories(dir / "predictions", ec);
    if (ec) throw IoError("cannot create " + (dir / "predictions").string() + ": " + ec.message());
    {
        std::ofstream out(dir / "metrics.json", std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "metrics.json").string());
        out << metrics.dump(2) << '\n';
    }
    for (const auto& sp : test) {
        const auto& s = *sp.series;
        std::vector<int> pred(s.length(), -1);
        for (std::size_t k = 0; k < sp.t.size(); ++k) pred[sp.t[k]] = sp.predictions[k];
        for (const auto& tr : train) {
            if (tr.series != sp.series) continue;
            for (std::size_t k = 0; k < tr.t.size(); ++k) pred[tr.t[k]] = tr.predictions[k];
        }
        std::ofstream out(dir / "predictions" / (s.id + ".csv"), std::ios::trunc);
        if (!out) throw IoError("cannot write predictions for " + s.id);
        out << "t,split,value,truth,prediction\n";
        for (std::size_t t = 0; t < s.length(); ++t) {
            out << t << ',' << (s.in_train(t) ? "train" : "test") << ','
                << fmt(s.values.row(static_cast<Eigen::Index>(t)).mean()) << ',' << s.labels[t] << ',';
            if (pred[t] >= 0) out << pred[t];
            out << '\n';
        }
    }
    return metrics;
}

}  // namespace rlad::eval
