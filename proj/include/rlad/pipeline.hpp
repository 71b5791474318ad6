#pragma once

#include "rlad/active.hpp"
#include "rlad/agent.hpp"
#include "rlad/config.hpp"
#include "rlad/data.hpp"
#include "rlad/eval.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace rlad::pipeline {

/// Loads the configured dataset, applies the split and normalizes.
/// Loaders that carry their own split (smd) keep it.
std::vector<data::Series> load_dataset(const config::RunConfig& cfg);

/// Decided indices t in [max(n_steps - 1, begin), end).
std::vector<std::size_t> decided_range(std::size_t n_steps, std::size_t begin, std::size_t end);

/// Progress shared with the annotation service.
struct TrainingStatus {
    std::atomic<std::size_t> episode{0};
    std::atomic<std::size_t> episodes_total{0};
    std::atomic<std::size_t> queries_asked{0};
    std::atomic<std::size_t> pseudo_labels{0};
    std::atomic<bool> finished{false};
    std::atomic<double> lambda{0.0};
    std::size_t n_al = 0;
    std::size_t k_lp = 0;
};

/// Everything a run shares with the outside world. Defaults build the batch
/// setup: a fresh store and the ground-truth oracle.
struct RunContext {
    std::shared_ptr<active::LabelStore> labels = std::make_shared<active::LabelStore>();
    std::shared_ptr<active::QueryQueue> queue = std::make_shared<active::QueryQueue>();
    std::shared_ptr<TrainingStatus> status = std::make_shared<TrainingStatus>();
    /// Overrides the oracle picked from the config when set.
    std::shared_ptr<active::LabelOracle> oracle;
    /// Called after each episode's active-learning round.
    std::function<void(const agent::EpisodeReport&)> on_episode;
    /// Called once the dataset is loaded, before any training.
    std::function<void(const std::vector<data::Series>&)> on_dataset;
};

struct RunResult {
    std::filesystem::path dir;
    nlohmann::json metrics;
    std::vector<nlohmann::json> episodes;  // episode summaries
    double seconds = 0.0;
};

/// Full training run writing config.json, vae.ckpt, qnet.ckpt, run.log.jsonl,
/// labels.jsonl, metrics.json and predictions/ into cfg.output_dir.
RunResult run_training(const config::RunConfig& cfg, RunContext& ctx);
RunResult run_training(const config::RunConfig& cfg);

/// Greedy predictions of a checkpoint on the test split of the configured
/// dataset. `labels_path` (optional) restores provenance strata. Writes the
/// report into out_dir.
RunResult run_eval(const config::RunConfig& cfg, const std::filesystem::path& qnet_path,
                   const std::filesystem::path& out_dir, const std::filesystem::path& labels_path = {});

/// Greedy predictions over a set of decided indices.
eval::SeriesPredictions predict(const agent::QNet& net, const data::Series& series, std::size_t n_steps,
                                const std::vector<std::size_t>& t);

}  // namespace rlad::pipeline
