#include "rlad/config.hpp"

#include <fstream>
#include <set>

namespace rlad::config {

namespace {

using nlohmann::json;

/// Reads known keys from one object and rejects anything it was not asked for.
class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError("'" + path_ + "' must be an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, value] : doc_.items()) {
            if (!seen_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
        }
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!doc_.contains(key)) return;
        try {
            out = doc_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError("bad value for '" + qualified(key) + "': " + e.what());
        }
    }

    template <class T>
    void get(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        if (!doc_.contains(key) || doc_.at(key).is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }

    /// Accepts numbers as well as strings, for fields like sigma.
    void get_text(const std::string& key, std::string& out) {
        seen_.insert(key);
        if (!doc_.contains(key)) return;
        const auto& v = doc_.at(key);
        if (v.is_string()) out = v.get<std::string>();
        else if (v.is_number()) out = v.dump();
        else throw ConfigError("bad value for '" + qualified(key) + "'");
    }

    bool has(const std::string& key) const { return doc_.contains(key); }
    Section child(const std::string& key) {
        seen_.insert(key);
        return Section(doc_.contains(key) ? doc_.at(key) : empty(), qualified(key));
    }

private:
    static const json& empty() {
        static const json e = json::object();
        return e;
    }
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& doc_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace

RunConfig from_json(const nlohmann::json& doc) {
    RunConfig c;
    {
        Section root(doc, "");
        {
            auto s = root.child("dataset");
            s.get("kind", c.dataset.kind);
            s.get("T", c.dataset.length);
            s.get("d", c.dataset.dims);
            s.get("n_anomalies", c.dataset.n_anomalies);
            s.get("seed", c.dataset.seed);
            s.get("path", c.dataset.path);
            s.get("data", c.dataset.data);
            s.get("labels", c.dataset.labels);
        }
        root.get("train_fraction", c.train_fraction);
        root.get("n_steps", c.n_steps);
        root.get("seed", c.seed);
        root.get("episodes", c.episodes);
        {
            auto s = root.child("agent");
            s.get("hidden", c.agent.hidden);
            s.get("lr", c.agent.lr);
            s.get("gamma", c.agent.gamma);
            s.get("buffer_capacity", c.agent.buffer_capacity);
            s.get("batch_size", c.agent.batch_size);
            s.get("eps_start", c.agent.epsilon.eps_start);
            s.get("eps_end", c.agent.epsilon.eps_end);
            s.get("eps_decay_steps", c.agent.epsilon.decay_steps);
            s.get("target_sync_every", c.agent.target_sync_every);
            s.get("warmup_steps", c.agent.warmup_steps);
            s.get("train_every", c.agent.train_every);
            s.get("train_on_unlabeled", c.agent.train_on_unlabeled);
        }
        {
            auto s = root.child("vae");
            s.get("enabled", c.vae.enabled);
            s.get("hidden", c.vae.hidden);
            s.get("latent", c.vae.latent);
            s.get("lr", c.vae.lr);
            s.get("epochs", c.vae.epochs);
            s.get("batch_size", c.vae.batch_size);
        }
        {
            auto s = root.child("lambda");
            s.get("initial", c.lambda.initial);
            s.get("alpha", c.lambda.alpha);
            s.get("min", c.lambda.min);
            s.get("max", c.lambda.max);
            s.get("target", c.lambda.target);
            s.get("target_fraction", c.lambda.target_fraction);
        }
        {
            auto s = root.child("potential");
            s.get("provider", c.potential.provider);
            s.get("prompt_precision", c.potential.prompt_precision);
            {
                auto h = s.child("heuristic");
                h.get("z_cap", c.potential.heuristic.z_cap);
                h.get("scale_floor", c.potential.heuristic.scale_floor);
                h.get("epsilon", c.potential.heuristic.epsilon);
            }
            {
                auto l = s.child("llm");
                l.get("base_url", c.potential.llm.base_url);
                l.get("model", c.potential.llm.model);
                l.get("api_key_env", c.potential.llm.api_key_env);
                l.get("max_tokens", c.potential.llm.max_tokens);
                l.get("retries", c.potential.llm.retries);
                l.get("backoff_ms", c.potential.llm.backoff_ms);
                l.get("timeout_ms", c.potential.llm.timeout_ms);
                l.get("concurrency", c.potential.llm.concurrency);
                l.get("cache_path", c.potential.llm.cache_path);
            }
        }
        {
            auto s = root.child("active");
            s.get("supervision", c.active.supervision);
            s.get("n_al", c.active.n_al);
            s.get("k_lp", c.active.k_lp);
            s.get_text("sigma", c.active.sigma);
            s.get("theta", c.active.theta);
            s.get("iters", c.active.iters);
            s.get("initial_labels", c.active.initial_labels);
            s.get("feature_space", c.active.feature_space);
            s.get("oracle", c.active.oracle);
            s.get("human_wait_seconds", c.active.human_wait_seconds);
        }
        {
            auto s = root.child("service");
            s.get("host", c.service.host);
            s.get("port", c.service.port);
            s.get("static_dir", c.service.static_dir);
        }
        root.get("point_adjust", c.point_adjust);
        root.get("log_steps", c.log_steps);
        root.get("output_dir", c.output_dir);
    }
    validate(c);
    return c;
}

RunConfig load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingFile("no such config: " + path.string());
    std::ifstream in(path);
    const auto doc = nlohmann::json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
    return from_json(doc);
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["dataset"] = {{"kind", c.dataset.kind}, {"T", c.dataset.length},   {"d", c.dataset.dims},
                    {"n_anomalies", c.dataset.n_anomalies}, {"seed", c.dataset.seed},
                    {"path", c.dataset.path}, {"data", c.dataset.data}, {"labels", c.dataset.labels}};
    j["train_fraction"] = c.train_fraction;
    j["n_steps"] = c.n_steps;
    j["seed"] = c.seed;
    j["episodes"] = c.episodes;
    j["agent"] = {{"hidden", c.agent.hidden},
                  {"lr", c.agent.lr},
                  {"gamma", c.agent.gamma},
                  {"buffer_capacity", c.agent.buffer_capacity},
                  {"batch_size", c.agent.batch_size},
                  {"eps_start", c.agent.epsilon.eps_start},
                  {"eps_end", c.agent.epsilon.eps_end},
                  {"eps_decay_steps", c.agent.epsilon.decay_steps},
                  {"target_sync_every", c.agent.target_sync_every},
                  {"warmup_steps", c.agent.warmup_steps},
                  {"train_every", c.agent.train_every},
                  {"train_on_unlabeled", c.agent.train_on_unlabeled}};
    j["vae"] = {{"enabled", c.vae.enabled}, {"hidden", c.vae.hidden},   {"latent", c.vae.latent},
                {"lr", c.vae.lr},           {"epochs", c.vae.epochs}, {"batch_size", c.vae.batch_size}};
    j["lambda"] = {{"initial", c.lambda.initial},
                   {"alpha", c.lambda.alpha},
                   {"min", c.lambda.min},
                   {"max", c.lambda.max},
                   {"target", c.lambda.target ? nlohmann::json(*c.lambda.target) : nlohmann::json(nullptr)},
                   {"target_fraction", c.lambda.target_fraction}};
    j["potential"] = {
        {"provider", c.potential.provider},
        {"prompt_precision", c.potential.prompt_precision},
        {"heuristic",
         {{"z_cap", c.potential.heuristic.z_cap},
          {"scale_floor", c.potential.heuristic.scale_floor},
          {"epsilon", c.potential.heuristic.epsilon}}},
        {"llm",
         {{"base_url", c.potential.llm.base_url},
          {"model", c.potential.llm.model},
          {"api_key_env", c.potential.llm.api_key_env},
          {"max_tokens", c.potential.llm.max_tokens},
          {"retries", c.potential.llm.retries},
          {"backoff_ms", c.potential.llm.backoff_ms},
          {"timeout_ms", c.potential.llm.timeout_ms},
          {"concurrency", c.potential.llm.concurrency},
          {"cache_path", c.potential.llm.cache_path}}}};
    j["active"] = {{"supervision", c.active.supervision},
                   {"n_al", c.active.n_al},
                   {"k_lp", c.active.k_lp},
                   {"sigma", c.active.sigma},
                   {"theta", c.active.theta},
                   {"iters", c.active.iters},
                   {"initial_labels", c.active.initial_labels},
                   {"feature_space", c.active.feature_space},
                   {"oracle", c.active.oracle},
                   {"human_wait_seconds", c.active.human_wait_seconds}};
    j["service"] = {{"host", c.service.host}, {"port", c.service.port}, {"static_dir", c.service.static_dir}};
    j["point_adjust"] = c.point_adjust;
    j["log_steps"] = c.log_steps;
    j["output_dir"] = c.output_dir;
    return j;
}

void validate(const RunConfig& c) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    const std::set<std::string> kinds{"synthetic", "csv", "csv_dir", "matrix", "smd"};
    require(kinds.count(c.dataset.kind) == 1, "dataset.kind must be one of synthetic, csv, csv_dir, matrix, smd");
    if (c.dataset.kind == "synthetic") {
        require(c.dataset.dims >= 1, "dataset.d must be >= 1");
        require(c.dataset.length >= c.n_steps + c.dataset.n_anomalies, "dataset.T too small for n_steps + n_anomalies");
    } else if (c.dataset.kind == "matrix") {
        require(!c.dataset.data.empty() && !c.dataset.labels.empty(), "matrix datasets need data and labels paths");
    } else {
        require(!c.dataset.path.empty(), "dataset.path is required for kind " + c.dataset.kind);
    }
    require(c.train_fraction > 0.0 && c.train_fraction <= 1.0, "train_fraction must lie in (0, 1]");
    require(c.n_steps >= 1, "n_steps must be >= 1");
    require(c.agent.hidden >= 1, "agent.hidden must be >= 1");
    require(c.agent.lr > 0.0, "agent.lr must be positive");
    require(c.agent.gamma > 0.0 && c.agent.gamma <= 1.0, "agent.gamma must lie in (0, 1]");
    require(c.agent.batch_size >= 1 && c.agent.buffer_capacity >= c.agent.batch_size,
            "agent.buffer_capacity must be >= agent.batch_size >= 1");
    require(c.agent.epsilon.eps_end >= 0.0 && c.agent.epsilon.eps_start <= 1.0 &&
                c.agent.epsilon.eps_end <= c.agent.epsilon.eps_start,
            "epsilon must satisfy 0 <= eps_end <= eps_start <= 1");
    require(c.vae.latent >= 1 && c.vae.lr > 0.0, "vae.latent and vae.lr must be positive");
    require(c.lambda.min <= c.lambda.max, "lambda.min must not exceed lambda.max");
    require(c.lambda.initial >= c.lambda.min && c.lambda.initial <= c.lambda.max, "lambda.initial outside bounds");
    require(c.potential.provider == "heuristic" || c.potential.provider == "llm" || c.potential.provider == "none",
            "potential.provider must be heuristic, llm or none");
    require(c.potential.heuristic.z_cap > 0.0, "potential.heuristic.z_cap must be positive");
    require(c.active.supervision == "active" || c.active.supervision == "full", "active.supervision must be active or full");
    require(c.active.theta >= 0.0 && c.active.theta <= 1.0, "active.theta must lie in [0, 1]");
    require(c.active.feature_space == "window" || c.active.feature_space == "latent",
            "active.feature_space must be window or latent");
    require(c.active.feature_space == "window" || c.vae.enabled, "latent feature space needs the VAE enabled");
    require(c.active.oracle == "ground_truth" || c.active.oracle == "human", "active.oracle must be ground_truth or human");
    if (c.active.sigma != "median") {
        double s = 0.0;
        try {
            s = std::stod(c.active.sigma);
        } catch (const std::exception&) {
            throw ConfigError("active.sigma must be \"median\" or a positive number");
        }
        require(s > 0.0, "active.sigma must be positive");
    }
    require(c.service.port >= 0 && c.service.port <= 65535, "service.port out of range");
}

}  // namespace rlad::config
