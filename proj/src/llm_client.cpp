#include "rlad/potential.hpp"

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <thread>
#include <unordered_set>

namespace rlad::potential {

ChatClient::ChatClient(LlmClientConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgs("LLM base_url needs a scheme: " + config_.base_url);
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    host_ = config_.base_url.substr(0, path_start);
    if (path_start != std::string::npos) {
        prefix_ = config_.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
}

std::string ChatClient::request_body(const Prompt& prompt) const {
    const nlohmann::json body = {
        {"model", config_.model},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", prompt.system}},
                                {{"role", "user"}, {"content", prompt.user}}})},
        {"temperature", 0},
        {"max_tokens", config_.max_tokens},
    };
    return body.dump();
}

std::string ChatClient::complete(const Prompt& prompt) const {
    httplib::Client client(host_);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    const auto res = client.Post(prefix_ + "/v1/chat/completions", headers, request_body(prompt), "application/json");
    if (!res) throw NetworkError("chat request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw NetworkError("chat endpoint returned HTTP " + std::to_string(res->status));

    const auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw NetworkError("chat endpoint returned a non-JSON body");
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw NetworkError("chat reply has no choices[0].message.content");
    }
}

LlmPotential::LlmPotential(LlmClientConfig config, PromptSpec spec, std::shared_ptr<PotentialCache> cache)
    : config_(std::move(config)), spec_(std::move(spec)), client_(config_),
      cache_(cache ? std::move(cache) : std::make_shared<PotentialCache>()) {
    if (!config_.cache_path.empty()) cache_->load_jsonl(config_.cache_path);
}

SeverityScore LlmPotential::score(const Matrix& window) {
    const auto key = cache_key(window);
    if (auto hit = cache_->lookup(key)) return {hit->value, ScoreSource::cache};
    const auto fresh = query(window);
    if (fresh.source != ScoreSource::fallback) cache_->insert(key, fresh);
    return fresh;
}

SeverityScore LlmPotential::query(const Matrix& window) {
    const auto prompt = render_prompt(window, spec_);
    int delay = config_.backoff_ms;
    for (int attempt = 0;; ++attempt) {
        ++requests_;
        try {
            return parse_severity(client_.complete(prompt));
        } catch (const NetworkError& e) {
            if (attempt >= config_.retries) {
                spdlog::warn("LLM potential falling back to {} after {} attempts: {}", kFallbackSeverity,
                             attempt + 1, e.what());
                return {kFallbackSeverity, ScoreSource::fallback};
            }
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        delay *= 2;
    }
}

void LlmPotential::prefetch(const std::vector<Matrix>& windows) {
    std::vector<const Matrix*> todo;
    std::unordered_set<std::string> seen;
    for (const auto& w : windows) {
        auto key = cache_key(w);
        if (seen.insert(key).second && !cache_->lookup(key)) todo.push_back(&w);
    }
    if (todo.empty()) return;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < todo.size(); i = next++) {
            const auto fresh = query(*todo[i]);
            if (fresh.source != ScoreSource::fallback) cache_->insert(cache_key(*todo[i]), fresh);
        }
    };
    const auto n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, config_.concurrency)), 1, todo.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

void LlmPotential::persist_cache() const {
    if (!config_.cache_path.empty()) cache_->save_jsonl(config_.cache_path);
}

}  // namespace rlad::potential
