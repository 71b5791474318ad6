#pragma once

#include "rlad/common.hpp"
#include "rlad/data.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rlad::active {

/// Write precedence: human > ground_truth > propagated.
enum class Provenance { propagated = 0, ground_truth = 1, human = 2 };

std::string to_string(Provenance p);
Provenance provenance_from_string(std::string_view name);

struct LabelEntry {
    int label = 0;
    Provenance provenance = Provenance::propagated;
    double confidence = 1.0;
    std::int64_t timestamp = 0;  // unix seconds at write time
};

struct LabelRecord {
    std::string series;
    std::size_t t = 0;
    LabelEntry entry;
};

/// Thread-safe store of known labels keyed by (series, t).
class LabelStore {
public:
    /// Writes unless an existing entry has higher provenance. Human and
    /// ground-truth entries are forced to confidence 1; propagated entries
    /// must have confidence < 1. Returns whether the entry was written.
    bool put(const std::string& series, std::size_t t, int label, Provenance provenance, double confidence = 1.0);

    std::optional<LabelEntry> get(const std::string& series, std::size_t t) const;
    bool contains(const std::string& series, std::size_t t) const { return get(series, t).has_value(); }

    std::vector<LabelRecord> snapshot() const;
    std::vector<LabelRecord> snapshot(const std::string& series) const;
    std::size_t size() const;
    std::size_t count(Provenance p) const;

    /// One {"series","t","label","provenance","confidence","timestamp"} per line.
    void save_jsonl(const std::filesystem::path& path) const;
    void load_jsonl(const std::filesystem::path& path);

private:
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::size_t>, LabelEntry> entries_;
};

/// |q0 - q1|
double margin(double q0, double q1);

struct Candidate {
    std::string series;
    std::size_t t = 0;
    double q0 = 0.0;
    double q1 = 0.0;
};

struct Query {
    std::string series;
    std::size_t t = 0;
    double margin = 0.0;
    Matrix window;
};

struct QueryBatch {
    std::vector<Query> queries;  // ascending margin
    std::size_t budget = 0;
};

/// Smallest margins first, ties by (series, t); excludes indices already in
/// `labeled` or rejected by `exclude`. Window snapshots are filled by the
/// caller (select_queries leaves them empty).
QueryBatch select_queries(const std::vector<Candidate>& candidates, std::size_t n_al, const LabelStore& labeled,
                          const std::function<bool(const std::string&, std::size_t)>& exclude = {});

/// exp(-||a - b||^2 / (2 sigma^2)); throws InvalidSigma unless sigma > 0.
double kernel_weight(const Vector& a, const Vector& b, double sigma);

/// Median of all pairwise Euclidean distances (rows are points).
double median_pairwise_distance(const Matrix& points);

struct PropagationOptions {
    double sigma = 1.0;
    std::size_t iters = 50;
    std::size_t k_lp = 20;
    double theta = 0.9;
};

struct PseudoLabel {
    std::size_t index = 0;  // row of `unlabeled`
    int label = 0;
    double confidence = 0.0;
};

/// Class-probability matrix after `iters` sweeps of F <- D^-1 W F with the
/// labeled rows clamped to one-hot. Rows: labeled points first, then
/// unlabeled; columns: P(0), P(1). Unlabeled rows start at (0.5, 0.5).
Matrix propagate_probabilities(const Matrix& labeled_points, const std::vector<int>& labels,
                               const Matrix& unlabeled_points, double sigma, std::size_t iters);

/// The k_lp most confident unlabeled points with confidence >= theta,
/// sorted by descending confidence then index. Empty unless both classes
/// are represented among the labeled points.
std::vector<PseudoLabel> propagate(const Matrix& labeled_points, const std::vector<int>& labels,
                                   const Matrix& unlabeled_points, const PropagationOptions& options);

// ---------------------------------------------------------------------------
// Oracles

struct LabelDelta {
    std::string series;
    std::size_t t = 0;
    int label = 0;
    Provenance provenance = Provenance::ground_truth;
};

struct OracleResult {
    std::vector<LabelDelta> delta;
    bool timed_out = false;
};

class LabelOracle {
public:
    virtual ~LabelOracle() = default;
    /// Answers what it can and writes the answers into `store`.
    virtual OracleResult answer(const QueryBatch& batch, LabelStore& store) = 0;
};

/// Simulated annotator that reads series ground truth.
class GroundTruthOracle final : public LabelOracle {
public:
    explicit GroundTruthOracle(std::vector<const data::Series*> series);
    OracleResult answer(const QueryBatch& batch, LabelStore& store) override;

private:
    std::vector<const data::Series*> series_;
};

/// Pending queries shared between the trainer and the annotation service.
class QueryQueue {
public:
    enum class Resolution { labeled, skipped, not_pending };

    void publish(const QueryBatch& batch);
    std::vector<Query> pending() const;
    bool is_pending(const std::string& series, std::size_t t) const;
    std::size_t pending_count() const;

    /// Resolves one pending query. label == nullopt means skip. A label is
    /// written into `store` with provenance human.
    Resolution resolve(const std::string& series, std::size_t t, std::optional<int> label, LabelStore& store);

    /// Blocks until none of `keys` is pending or the deadline passes.
    bool wait_resolved(const std::vector<std::pair<std::string, std::size_t>>& keys,
                       std::chrono::steady_clock::time_point deadline) const;

    /// Human answers recorded since the last call.
    std::vector<LabelDelta> drain_answers();

private:
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::vector<Query> pending_;
    std::vector<LabelDelta> answers_;
};

/// Publishes queries to a QueryQueue and waits up to `wait` for a human to
/// answer them over the annotation service. Unanswered queries stay pending.
class ServiceOracle final : public LabelOracle {
public:
    ServiceOracle(QueryQueue& queue, std::chrono::milliseconds wait) : queue_(queue), wait_(wait) {}
    OracleResult answer(const QueryBatch& batch, LabelStore& store) override;

private:
    QueryQueue& queue_;
    std::chrono::milliseconds wait_;
};

OracleResult apply_oracle(const QueryBatch& batch, LabelOracle& oracle, LabelStore& store);

}  // namespace rlad::active
