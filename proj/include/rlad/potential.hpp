#pragma once

#include "rlad/common.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rlad::potential {

enum class ScoreSource { llm, heuristic, cache, fallback };

std::string to_string(ScoreSource source);
ScoreSource score_source_from_string(std::string_view name);

struct SeverityScore {
    double value = 0.5;
    ScoreSource source = ScoreSource::fallback;
};

inline constexpr double kFallbackSeverity = 0.5;

// ---------------------------------------------------------------------------
// Prompt protocol

struct FewShotAnchor {
    std::vector<double> readings;
    double severity;
};

struct PromptSpec {
    std::string system;
    std::vector<FewShotAnchor> anchors;
    int precision = 1;  // decimals printed per reading

    /// JSON-only instruction plus the two severity anchors (flat zeros -> 0.00,
    /// zeros then a 5.0 plateau -> 0.75).
    static PromptSpec defaults();
};

struct Prompt {
    std::string system;
    std::string user;

    /// system + blank line + user; what the golden files pin.
    std::string text() const;
};

/// Univariate windows render one reading list. Windows with d > 1 render two
/// lists: the per-step mean across channels and the per-step max.
Prompt render_prompt(const Matrix& window, const PromptSpec& spec);

/// Extracts the first JSON object in `reply` that has a "severity" key.
/// Numbers are clamped to [0, 1]; anything else yields the 0.5 fallback.
SeverityScore parse_severity(std::string_view reply);

// ---------------------------------------------------------------------------
// Deterministic stand-in

struct HeuristicOptions {
    double z_cap = 20.0 / 3.0;   // a 5.0 step over a flat baseline scores 0.75
    double scale_floor = 1.0;    // lower bound on the robust scale (normalized units)
    double epsilon = 1e-6;
};

/// clip(max robust z / z_cap, 0, 1) with robust z = |x - median| /
/// (max(1.4826 * MAD, scale_floor) + epsilon), taken per channel.
SeverityScore heuristic_potential(const Matrix& window, const HeuristicOptions& options = {});

/// r + gamma * phi_next - phi_s
double shaped_reward(double r, double phi_s, double phi_s_next, double gamma);

// ---------------------------------------------------------------------------
// Cache

/// Window values rounded to 4 decimals, ',' between channels, ';' between steps.
std::string cache_key(const Matrix& window);

class PotentialCache {
public:
    std::optional<SeverityScore> lookup(const std::string& key);
    void insert(const std::string& key, SeverityScore score);

    std::uint64_t hits() const { return hits_.load(); }
    std::uint64_t misses() const { return misses_.load(); }
    std::size_t size() const;

    /// One {"key","value","source"} object per line.
    void save_jsonl(const std::filesystem::path& path) const;
    void load_jsonl(const std::filesystem::path& path);

private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, SeverityScore> entries_;
    std::atomic<std::uint64_t> hits_{0};
    std::atomic<std::uint64_t> misses_{0};
};

// ---------------------------------------------------------------------------
// Providers

class PotentialProvider {
public:
    virtual ~PotentialProvider() = default;
    virtual SeverityScore score(const Matrix& window) = 0;
    /// Warms any cache for a set of windows. Results must equal score().
    virtual void prefetch(const std::vector<Matrix>& windows) { (void)windows; }
    virtual std::string name() const = 0;
};

/// Phi == 0; disables shaping.
class ZeroPotential final : public PotentialProvider {
public:
    SeverityScore score(const Matrix&) override { return {0.0, ScoreSource::heuristic}; }
    std::string name() const override { return "none"; }
};

class HeuristicPotential final : public PotentialProvider {
public:
    explicit HeuristicPotential(HeuristicOptions options = {}) : options_(options) {}
    SeverityScore score(const Matrix& window) override { return heuristic_potential(window, options_); }
    std::string name() const override { return "heuristic"; }

private:
    HeuristicOptions options_;
};

struct LlmClientConfig {
    std::string base_url = "http://127.0.0.1:8000";
    std::string model = "gpt-3.5-turbo";
    std::string api_key_env = "OPENAI_API_KEY";
    int max_tokens = 16;
    int retries = 3;
    int backoff_ms = 250;  // doubled after each failed attempt
    int timeout_ms = 30000;
    int concurrency = 4;
    std::string cache_path;  // empty: in-memory only
};

/// Minimal OpenAI-compatible chat-completions client.
class ChatClient {
public:
    explicit ChatClient(LlmClientConfig config);
    /// One POST {base_url}/v1/chat/completions. Returns the first choice's
    /// message content; throws NetworkError on transport or protocol failure.
    std::string complete(const Prompt& prompt) const;
    /// Request body for a prompt; exposed for wire-format tests.
    std::string request_body(const Prompt& prompt) const;

private:
    LlmClientConfig config_;
    std::string host_;    // scheme://host[:port]
    std::string prefix_;  // path prefix from base_url, no trailing '/'
};

/// Cache, then up to 1 + retries requests with exponential backoff, then
/// parse. Transport failure after the last retry returns the 0.5 fallback
/// and logs a warning; fallbacks are never cached.
class LlmPotential final : public PotentialProvider {
public:
    LlmPotential(LlmClientConfig config, PromptSpec spec = PromptSpec::defaults(),
                 std::shared_ptr<PotentialCache> cache = nullptr);

    SeverityScore score(const Matrix& window) override;
    void prefetch(const std::vector<Matrix>& windows) override;
    std::string name() const override { return "llm"; }

    PotentialCache& cache() { return *cache_; }
    std::uint64_t requests_sent() const { return requests_.load(); }
    void persist_cache() const;

private:
    SeverityScore query(const Matrix& window);

    LlmClientConfig config_;
    PromptSpec spec_;
    ChatClient client_;
    std::shared_ptr<PotentialCache> cache_;
    std::atomic<std::uint64_t> requests_{0};
};

}  // namespace rlad::potential
