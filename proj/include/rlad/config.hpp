#pragma once

#include "rlad/agent.hpp"
#include "rlad/potential.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rlad::config {

struct DatasetSpec {
    std::string kind = "synthetic";  // synthetic | csv | csv_dir | matrix | smd
    std::size_t length = 2000;       // synthetic only
    std::size_t dims = 1;
    std::size_t n_anomalies = 20;
    std::uint64_t seed = 7;
    std::string path;    // csv file, csv directory or smd root
    std::string data;    // matrix data file
    std::string labels;  // matrix label file
};

struct VaeSettings {
    bool enabled = true;
    std::vector<std::size_t> hidden{64, 32};
    std::size_t latent = 8;
    double lr = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
};

struct LambdaSettings {
    double initial = 0.1;
    double alpha = 0.001;
    double min = 0.0;
    double max = 2.0;
    std::optional<double> target;  // absent: target_fraction x best achievable episode R1
    double target_fraction = 0.8;
};

struct PotentialSettings {
    std::string provider = "heuristic";  // heuristic | llm | none
    potential::HeuristicOptions heuristic{};
    potential::LlmClientConfig llm{};
    int prompt_precision = 1;
};

struct ActiveSettings {
    std::string supervision = "active";  // active | full (every train label known)
    std::size_t n_al = 10;
    std::size_t k_lp = 20;
    std::string sigma = "median";  // "median" or a positive number as text
    double theta = 0.9;
    std::size_t iters = 50;
    std::size_t initial_labels = 0;        // random train indices labeled before episode 1
    std::string feature_space = "window";  // window | latent
    std::string oracle = "ground_truth";   // ground_truth | human
    double human_wait_seconds = 0.0;
};

struct ServiceSettings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
};

struct RunConfig {
    DatasetSpec dataset;
    double train_fraction = 0.5;
    std::size_t n_steps = 25;
    std::uint64_t seed = 7;
    std::size_t episodes = 30;
    agent::AgentConfig agent;
    VaeSettings vae;
    LambdaSettings lambda;
    PotentialSettings potential;
    ActiveSettings active;
    ServiceSettings service;
    bool point_adjust = false;
    bool log_steps = false;
    std::string output_dir = "runs/latest";
};

/// Parses a config document. Missing keys keep their defaults; unknown keys
/// and invalid values raise ConfigError.
RunConfig from_json(const nlohmann::json& doc);
RunConfig load(const std::filesystem::path& path);

/// Every field, fully resolved.
nlohmann::json to_json(const RunConfig& cfg);

void validate(const RunConfig& cfg);

}  // namespace rlad::config
