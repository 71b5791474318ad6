#include "rlad/active.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace rlad::active {

namespace {

std::int64_t now_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::propagated: return "propagated";
        case Provenance::ground_truth: return "ground_truth";
        case Provenance::human: return "human";
    }
    return "propagated";
}

Provenance provenance_from_string(std::string_view name) {
    if (name == "propagated") return Provenance::propagated;
    if (name == "ground_truth") return Provenance::ground_truth;
    if (name == "human") return Provenance::human;
    throw InvalidArgs("unknown provenance '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// LabelStore

bool LabelStore::put(const std::string& series, std::size_t t, int label, Provenance provenance,
                     double confidence) {
    if (label != 0 && label != 1) throw InvalidArgs("label must be 0 or 1");
    if (provenance == Provenance::propagated) {
        if (!(confidence >= 0.0 && confidence < 1.0)) {
            throw InvalidArgs("propagated labels need confidence in [0, 1)");
        }
    } else {
        confidence = 1.0;
    }
    std::lock_guard lock(mutex_);
    const auto key = std::make_pair(series, t);
    const auto it = entries_.find(key);
    if (it != entries_.end() && it->second.provenance > provenance) return false;
    entries_[key] = LabelEntry{label, provenance, confidence, now_seconds()};
    return true;
}

std::optional<LabelEntry> LabelStore::get(const std::string& series, std::size_t t) const {
    std::lock_guard lock(mutex_);
    const auto it = entries_.find({series, t});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::vector<LabelRecord> LabelStore::snapshot() const {
    std::lock_guard lock(mutex_);
    std::vector<LabelRecord> out;
    out.reserve(entries_.size());
    for (const auto& [key, entry] : entries_) out.push_back({key.first, key.second, entry});
    return out;
}

std::vector<LabelRecord> LabelStore::snapshot(const std::string& series) const {
    std::lock_guard lock(mutex_);
    std::vector<LabelRecord> out;
    for (auto it = entries_.lower_bound({series, 0}); it != entries_.end() && it->first.first == series; ++it) {
        out.push_back({it->first.first, it->first.second, it->second});
    }
    return out;
}

std::size_t LabelStore::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::size_t LabelStore::count(Provenance p) const {
    std::lock_guard lock(mutex_);
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                  [p](const auto& kv) { return kv.second.provenance == p; }));
}

void LabelStore::save_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write label store " + path.string());
    for (const auto& r : snapshot()) {
        out << nlohmann::json{{"series", r.series},
                              {"t", r.t},
                              {"label", r.entry.label},
                              {"provenance", to_string(r.entry.provenance)},
                              {"confidence", r.entry.confidence},
                              {"timestamp", r.entry.timestamp}}
                   .dump()
            << '\n';
    }
}

void LabelStore::load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile("no such label store: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        try {
            if (j.is_discarded()) throw MalformedRow(line_no, "not JSON");
            const auto series = j.at("series").get<std::string>();
            const auto t = j.at("t").get<std::size_t>();
            LabelEntry e{j.at("label").get<int>(), provenance_from_string(j.at("provenance").get<std::string>()),
                         j.at("confidence").get<double>(), j.value("timestamp", std::int64_t{0})};
            std::lock_guard lock(mutex_);
            entries_[{series, t}] = e;
        } catch (const nlohmann::json::exception& ex) {
            throw MalformedRow(line_no, ex.what());
        }
    }
}

// ---------------------------------------------------------------------------
// Query selection

double margin(double q0, double q1) { return std::abs(q0 - q1); }

QueryBatch select_queries(const std::vector<Candidate>& candidates, std::size_t n_al, const LabelStore& labeled,
                          const std::function<bool(const std::string&, std::size_t)>& exclude) {
    QueryBatch batch;
    batch.budget = n_al;
    if (n_al == 0) return batch;
    std::vector<Query> pool;
    for (const auto& c : candidates) {
        if (labeled.contains(c.series, c.t)) continue;
        if (exclude && exclude(c.series, c.t)) continue;
        pool.push_back({c.series, c.t, margin(c.q0, c.q1), {}});
    }
    const auto less = [](const Query& a, const Query& b) {
        if (a.margin != b.margin) return a.margin < b.margin;
        if (a.series != b.series) return a.series < b.series;
        return a.t < b.t;
    };
    const std::size_t n = std::min(n_al, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), pool.end(), less);
    pool.resize(n);
    batch.queries = std::move(pool);
    return batch;
}

// ---------------------------------------------------------------------------
// Label propagation

double kernel_weight(const Vector& a, const Vector& b, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidSigma("kernel bandwidth must be positive");
    if (a.size() != b.size()) throw ShapeError("kernel arguments differ in dimension");
    return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
}

double median_pairwise_distance(const Matrix& points) {
    const auto n = points.rows();
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((points.row(i) - points.row(j)).norm());
    }
    if (d.empty()) return 1.0;
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    if (d.size() % 2 == 1) return *mid;
    return 0.5 * (*mid + *std::max_element(d.begin(), mid));
}

Matrix propagate_probabilities(const Matrix& labeled_points, const std::vector<int>& labels,
                               const Matrix& unlabeled_points, double sigma, std::size_t iters) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidSigma("kernel bandwidth must be positive");
    if (static_cast<std::size_t>(labeled_points.rows()) != labels.size()) {
        throw ShapeError("labeled point count differs from label count");
    }
    if (labeled_points.rows() > 0 && unlabeled_points.rows() > 0 &&
        labeled_points.cols() != unlabeled_points.cols()) {
        throw ShapeError("labeled and unlabeled points differ in dimension");
    }
    const auto L = labeled_points.rows();
    const auto U = unlabeled_points.rows();
    const auto N = L + U;
    const auto dim = L > 0 ? labeled_points.cols() : unlabeled_points.cols();
    Matrix X(N, dim);
    if (L > 0) X.topRows(L) = labeled_points;
    if (U > 0) X.bottomRows(U) = unlabeled_points;

    Matrix F(N, 2);
    for (Eigen::Index i = 0; i < L; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y != 0 && y != 1) throw InvalidArgs("labels must be 0 or 1");
        F(i, 0) = y == 0 ? 1.0 : 0.0;
        F(i, 1) = y == 1 ? 1.0 : 0.0;
    }
    F.bottomRows(U).setConstant(0.5);
    if (U == 0) return F;

    // Only unlabeled rows move, so only their rows of D^-1 W are needed.
    const Eigen::VectorXd sq = X.rowwise().squaredNorm();
    Eigen::MatrixXd P = (X.bottomRows(U) * X.transpose()) * -2.0;
    P.colwise() += sq.tail(U);
    P.rowwise() += sq.transpose();
    P = (P.array().max(0.0) * (-1.0 / (2.0 * sigma * sigma))).exp().matrix();
    for (Eigen::Index u = 0; u < U; ++u) P(u, L + u) = 1.0;  // exact unit self-weight
    P.array().colwise() /= P.rowwise().sum().array();

    Eigen::MatrixXd Fd = F;
    for (std::size_t it = 0; it < iters; ++it) {
        const Eigen::MatrixXd next = P * Fd;
        Fd.bottomRows(U) = next;
    }
    return Fd;
}

std::vector<PseudoLabel> propagate(const Matrix& labeled_points, const std::vector<int>& labels,
                                   const Matrix& unlabeled_points, const PropagationOptions& options) {
    const bool has0 = std::find(labels.begin(), labels.end(), 0) != labels.end();
    const bool has1 = std::find(labels.begin(), labels.end(), 1) != labels.end();
    if (options.k_lp == 0 || !has0 || !has1 || unlabeled_points.rows() == 0) return {};
    const Matrix F = propagate_probabilities(labeled_points, labels, unlabeled_points, options.sigma, options.iters);
    const auto L = labeled_points.rows();
    std::vector<PseudoLabel> out;
    for (Eigen::Index u = 0; u < unlabeled_points.rows(); ++u) {
        const double p0 = F(L + u, 0);
        const double p1 = F(L + u, 1);
        PseudoLabel pl{static_cast<std::size_t>(u), p1 > p0 ? 1 : 0, std::max(p0, p1)};
        if (pl.confidence >= options.theta) out.push_back(pl);
    }
    std::sort(out.begin(), out.end(), [](const PseudoLabel& a, const PseudoLabel& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.index < b.index;
    });
    if (out.size() > options.k_lp) out.resize(options.k_lp);
    return out;
}

// ---------------------------------------------------------------------------
// Oracles

GroundTruthOracle::GroundTruthOracle(std::vector<const data::Series*> series) : series_(std::move(series)) {}

OracleResult GroundTruthOracle::answer(const QueryBatch& batch, LabelStore& store) {
    OracleResult result;
    for (const auto& q : batch.queries) {
        const auto it = std::find_if(series_.begin(), series_.end(),
                                     [&](const data::Series* s) { return s->id == q.series; });
        if (it == series_.end()) throw InvalidArgs("oracle has no series '" + q.series + "'");
        const int y = (*it)->labels.at(q.t);
        if (store.put(q.series, q.t, y, Provenance::ground_truth)) {
            result.delta.push_back({q.series, q.t, y, Provenance::ground_truth});
        }
    }
    return result;
}

void QueryQueue::publish(const QueryBatch& batch) {
    {
        std::lock_guard lock(mutex_);
        for (const auto& q : batch.queries) {
            const bool dup = std::any_of(pending_.begin(), pending_.end(),
                                         [&](const Query& p) { return p.series == q.series && p.t == q.t; });
            if (!dup) pending_.push_back(q);
        }
        std::stable_sort(pending_.begin(), pending_.end(),
                         [](const Query& a, const Query& b) { return a.margin < b.margin; });
    }
    cv_.notify_all();
}

std::vector<Query> QueryQueue::pending() const {
    std::lock_guard lock(mutex_);
    return pending_;
}

bool QueryQueue::is_pending(const std::string& series, std::size_t t) const {
    std::lock_guard lock(mutex_);
    return std::any_of(pending_.begin(), pending_.end(),
                       [&](const Query& p) { return p.series == series && p.t == t; });
}

std::size_t QueryQueue::pending_count() const {
    std::lock_guard lock(mutex_);
    return pending_.size();
}

QueryQueue::Resolution QueryQueue::resolve(const std::string& series, std::size_t t, std::optional<int> label,
                                           LabelStore& store) {
    Resolution res;
    {
        std::lock_guard lock(mutex_);
        const auto it = std::find_if(pending_.begin(), pending_.end(),
                                     [&](const Query& p) { return p.series == series && p.t == t; });
        if (it == pending_.end()) return Resolution::not_pending;
        pending_.erase(it);
        if (label) {
            store.put(series, t, *label, Provenance::human);
            answers_.push_back({series, t, *label, Provenance::human});
            res = Resolution::labeled;
        } else {
            res = Resolution::skipped;
        }
    }
    cv_.notify_all();
    return res;
}

bool QueryQueue::wait_resolved(const std::vector<std::pair<std::string, std::size_t>>& keys,
                               std::chrono::steady_clock::time_point deadline) const {
    std::unique_lock lock(mutex_);
    const auto done = [&] {
        for (const auto& [s, t] : keys) {
            for (const auto& p : pending_) {
                if (p.series == s && p.t == t) return false;
            }
        }
        return true;
    };
    return cv_.wait_until(lock, deadline, done);
}

std::vector<LabelDelta> QueryQueue::drain_answers() {
    std::lock_guard lock(mutex_);
    std::vector<LabelDelta> out;
    out.swap(answers_);
    return out;
}

OracleResult ServiceOracle::answer(const QueryBatch& batch, LabelStore& store) {
    (void)store;  // answers reach the store through QueryQueue::resolve
    queue_.publish(batch);
    std::vector<std::pair<std::string, std::size_t>> keys;
    for (const auto& q : batch.queries) keys.emplace_back(q.series, q.t);
    OracleResult result;
    result.timed_out = !queue_.wait_resolved(keys, std::chrono::steady_clock::now() + wait_);
    result.delta = queue_.drain_answers();
    return result;
}

OracleResult apply_oracle(const QueryBatch& batch, LabelOracle& oracle, LabelStore& store) {
    return oracle.answer(batch, store);
}

}  // namespace rlad::active
