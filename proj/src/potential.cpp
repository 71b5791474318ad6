#include "rlad/potential.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace rlad::potential {

namespace {

std::string format_reading(double v, int precision) {
    const double half_ulp = 0.5 * std::pow(10.0, -precision);
    if (std::abs(v) < half_ulp) v = 0.0;  // no "-0.0"
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

std::string reading_list(const std::vector<double>& values, int precision) {
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += format_reading(values[i], precision);
    }
    out += "]";
    return out;
}

std::string severity_json(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "{\"severity\": %.2f}", v);
    return buf;
}

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

// Returns the end (exclusive) of the JSON object starting at `open`, or npos.
std::size_t match_object(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

}  // namespace

std::string to_string(ScoreSource source) {
    switch (source) {
        case ScoreSource::llm: return "llm";
        case ScoreSource::heuristic: return "heuristic";
        case ScoreSource::cache: return "cache";
        case ScoreSource::fallback: return "fallback";
    }
    return "fallback";
}

ScoreSource score_source_from_string(std::string_view name) {
    if (name == "llm") return ScoreSource::llm;
    if (name == "heuristic") return ScoreSource::heuristic;
    if (name == "cache") return ScoreSource::cache;
    if (name == "fallback") return ScoreSource::fallback;
    throw InvalidArgs("unknown score source '" + std::string(name) + "'");
}

PromptSpec PromptSpec::defaults() {
    PromptSpec spec;
    spec.system =
        "You are an anomaly detection assistant for time-series sensor data. "
        "Rate how likely the given window of sensor readings contains an anomaly, "
        "from 0 (certainly normal) to 1 (certainly anomalous). "
        "Reply with a single JSON object of the form {\"severity\": v} and nothing else.";
    spec.anchors = {
        {{0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, 0.00},
        {{0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0, 5.0}, 0.75},
    };
    spec.precision = 1;
    return spec;
}

std::string Prompt::text() const { return system + "\n\n" + user; }

Prompt render_prompt(const Matrix& window, const PromptSpec& spec) {
    if (window.size() == 0) throw ShapeError("cannot render a prompt for an empty window");
    std::ostringstream user;
    user << "Examples:\n";
    for (const auto& a : spec.anchors) {
        user << "Sensor readings: " << reading_list(a.readings, spec.precision) << " -> "
             << severity_json(a.severity) << "\n";
    }
    user << "\n";
    if (window.cols() == 1) {
        const std::vector<double> values(window.data(), window.data() + window.size());
        user << "Sensor readings: " << reading_list(values, spec.precision) << "\n";
    } else {
        std::vector<double> mean(static_cast<std::size_t>(window.rows()));
        std::vector<double> max(mean.size());
        for (Eigen::Index t = 0; t < window.rows(); ++t) {
            mean[static_cast<std::size_t>(t)] = window.row(t).mean();
            max[static_cast<std::size_t>(t)] = window.row(t).maxCoeff();
        }
        user << "Sensor readings (mean over " << window.cols() << " channels): "
             << reading_list(mean, spec.precision) << "\n";
        user << "Sensor readings (max over " << window.cols() << " channels): "
             << reading_list(max, spec.precision) << "\n";
    }
    user << "Respond with a single JSON object: {\"severity\": v}";
    return {spec.system, user.str()};
}

SeverityScore parse_severity(std::string_view reply) {
    for (std::size_t open = reply.find('{'); open != std::string_view::npos; open = reply.find('{', open + 1)) {
        const auto close = match_object(reply, open);
        if (close == std::string_view::npos) continue;
        const auto obj = nlohmann::json::parse(reply.substr(open, close - open), nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("severity")) continue;
        const auto& v = obj["severity"];
        if (!v.is_number()) return {kFallbackSeverity, ScoreSource::fallback};
        const double value = v.get<double>();
        if (!std::isfinite(value)) return {kFallbackSeverity, ScoreSource::fallback};
        return {std::clamp(value, 0.0, 1.0), ScoreSource::llm};
    }
    return {kFallbackSeverity, ScoreSource::fallback};
}

SeverityScore heuristic_potential(const Matrix& window, const HeuristicOptions& options) {
    if (window.size() == 0) throw ShapeError("heuristic potential needs a non-empty window");
    double z_max = 0.0;
    for (Eigen::Index j = 0; j < window.cols(); ++j) {
        std::vector<double> col(static_cast<std::size_t>(window.rows()));
        for (Eigen::Index t = 0; t < window.rows(); ++t) col[static_cast<std::size_t>(t)] = window(t, j);
        const double med = median_of(col);
        std::vector<double> dev(col.size());
        for (std::size_t i = 0; i < col.size(); ++i) dev[i] = std::abs(col[i] - med);
        const double mad = median_of(dev);
        const double scale = std::max(1.4826 * mad, options.scale_floor) + options.epsilon;
        z_max = std::max(z_max, *std::max_element(dev.begin(), dev.end()) / scale);
    }
    return {std::clamp(z_max / options.z_cap, 0.0, 1.0), ScoreSource::heuristic};
}

double shaped_reward(double r, double phi_s, double phi_s_next, double gamma) {
    return r + gamma * phi_s_next - phi_s;
}

std::string cache_key(const Matrix& window) {
    std::string key;
    key.reserve(static_cast<std::size_t>(window.size()) * 8);
    for (Eigen::Index t = 0; t < window.rows(); ++t) {
        if (t) key += ';';
        for (Eigen::Index j = 0; j < window.cols(); ++j) {
            if (j) key += ',';
            key += format_reading(window(t, j), 4);
        }
    }
    return key;
}

std::optional<SeverityScore> PotentialCache::lookup(const std::string& key) {
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) {
        ++misses_;
        return std::nullopt;
    }
    ++hits_;
    return it->second;
}

void PotentialCache::insert(const std::string& key, SeverityScore score) {
    std::lock_guard lock(mutex_);
    entries_[key] = score;
}

std::size_t PotentialCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

void PotentialCache::save_jsonl(const std::filesystem::path& path) const {
    std::vector<std::pair<std::string, SeverityScore>> rows;
    {
        std::lock_guard lock(mutex_);
        rows.assign(entries_.begin(), entries_.end());
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write potential cache " + path.string());
    for (const auto& [key, score] : rows) {
        out << nlohmann::json{{"key", key}, {"value", score.value}, {"source", to_string(score.source)}}.dump()
            << '\n';
    }
}

void PotentialCache::load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return;
    std::string line;
    std::size_t line_no = 0;
    std::lock_guard lock(mutex_);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("key") || !j.contains("value")) {
            throw MalformedRow(line_no, "potential cache entry in " + path.string());
        }
        entries_[j["key"].get<std::string>()] =
            SeverityScore{j["value"].get<double>(), score_source_from_string(j.value("source", "llm"))};
    }
}

}  // namespace rlad::potential
