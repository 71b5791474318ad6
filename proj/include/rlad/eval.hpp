#pragma once

#include "rlad/active.hpp"
#include "rlad/data.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <vector>

namespace rlad::eval {

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp; fp += o.fp; tn += o.tn; fn += o.fn;
        return *this;
    }
};

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

struct Prf1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Zero whenever a denominator is zero.
Prf1 prf1(const ConfusionCounts& c);
/// 2PR / (P + R), zero when P + R == 0.
double f1_from(double precision, double recall);

/// Point-adjust protocol: any hit inside a contiguous true segment marks the
/// whole segment as detected. Reported for comparability only.
std::vector<int> point_adjust(std::span<const int> predictions, std::span<const int> labels);

/// Greedy predictions for the decided test indices of one series.
struct SeriesPredictions {
    const data::Series* series = nullptr;
    std::vector<std::size_t> t;    // decided indices, ascending
    std::vector<int> predictions;  // one per entry of t
};

struct ReportOptions {
    bool point_adjust = false;
};

/// Flat metrics for a set of series. Test metrics use decided test-split
/// indices; the `strat_<provenance>_*` keys score train-split predictions
/// grouped by the provenance of the label the store held for that index.
nlohmann::json compute_metrics(const std::vector<SeriesPredictions>& test,
                               const std::vector<SeriesPredictions>& train, const active::LabelStore& labels,
                               const ReportOptions& options = {});

/// Writes <dir>/metrics.json and <dir>/predictions/<series>.csv
/// (t,split,value,truth,prediction; prediction blank where undecided; value
/// is the channel mean). Returns the metrics.
nlohmann::json emit_report(const std::filesystem::path& dir, const std::vector<SeriesPredictions>& test,
                           const std::vector<SeriesPredictions>& train, const active::LabelStore& labels,
                           const ReportOptions& options = {});

}  // namespace rlad::eval
