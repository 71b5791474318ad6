#pragma once

#include "rlad/common.hpp"
#include "rlad/data.hpp"
#include "rlad/env.hpp"
#include "rlad/nn.hpp"
#include "rlad/potential.hpp"
#include "rlad/vae.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace rlad::agent {

/// A batch of flag-augmented windows, one Eigen matrix per time step with
/// one column per batch item: steps[t] is (d + 1) x B.
struct SequenceBatch {
    std::vector<Eigen::MatrixXd> steps;
    Eigen::Index batch_size() const { return steps.empty() ? 0 : steps.front().cols(); }
};

/// Packs windows (n_steps x d each) with their action flags.
SequenceBatch pack(std::span<const Matrix> windows, std::span<const int> flags);

/// LSTM over the flag-augmented window followed by a linear head that
/// emits one scalar Q value for the action encoded in the flag column.
///
/// Gate rows of the stacked weights are ordered input, forget, cell, output.
class QNet {
public:
    QNet(std::size_t dims, std::size_t hidden, std::uint64_t seed);

    std::size_t dims() const { return dims_; }
    std::size_t hidden() const { return hidden_; }

    nn::ParamRefs params();
    nn::ConstParamRefs params() const;

    nn::Param& w_input() { return params_[0]; }    // 4H x (d + 1)
    nn::Param& w_hidden() { return params_[1]; }   // 4H x H
    nn::Param& bias() { return params_[2]; }       // 4H x 1
    nn::Param& w_head() { return params_[3]; }     // 1 x H
    nn::Param& b_head() { return params_[4]; }     // 1 x 1

    /// Activations kept for backpropagation through time.
    struct Trace {
        std::vector<Eigen::MatrixXd> h, c;             // T + 1 entries, h[0] = c[0] = 0
        std::vector<Eigen::MatrixXd> i, f, g, o, tc;   // T entries; tc = tanh(c)
    };

    Eigen::RowVectorXd forward(const SequenceBatch& batch) const;
    Eigen::RowVectorXd forward(const SequenceBatch& batch, Trace& trace) const;
    /// Accumulates dLoss/dparams given dLoss/dQ for each batch column.
    void backward(const SequenceBatch& batch, const Trace& trace, const Eigen::RowVectorXd& d_q);

    void copy_from(const QNet& other);

    nlohmann::json meta() const;
    void save(const std::filesystem::path& path) const;
    static QNet load(const std::filesystem::path& path);

private:
    std::size_t dims_;
    std::size_t hidden_;
    std::vector<nn::Param> params_;
};

/// (Q(s, 0), Q(s, 1)) for one window. Throws ShapeError / NonFiniteOutput.
std::pair<double, double> q_values(const QNet& net, const Matrix& window);

/// Greedy predictions (ties go to 0) for many windows.
std::vector<int> greedy_actions(const QNet& net, std::span<const Matrix> windows);

/// With probability eps (draw < eps) the action is uniform, taken from the
/// same draw: draw < eps / 2 -> 0, else 1. Otherwise argmax, ties -> 0.
int select_action(double q0, double q1, double eps, double draw);

struct EpsilonSchedule {
    double eps_start = 1.0;
    double eps_end = 0.05;
    std::size_t decay_steps = 50000;

    /// Linear decay from eps_start to eps_end, constant afterwards.
    double at(std::size_t step) const;
};

/// Windows are referenced by (series index, t) and resolved on demand.
struct Transition {
    std::uint32_t series = 0;
    std::uint32_t t = 0;
    std::uint32_t next_t = 0;
    int action = 0;
    double reward = 0.0;  // fully shaped reward
    bool done = false;
};

class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed);

    void push(const Transition& tr);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return data_.at(i); }

    /// Distinct indices, uniform over the buffer; batch clipped to size().
    std::vector<std::size_t> sample_indices(std::size_t batch);
    std::vector<Transition> sample(std::size_t batch);

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> data_;
    std::mt19937_64 rng_;
};

/// Resolves (series, t) references to windows.
class WindowSource {
public:
    WindowSource(std::vector<const data::Series*> series, std::size_t n_steps)
        : series_(std::move(series)), n_steps_(n_steps) {}
    Matrix window(std::uint32_t series, std::uint32_t t) const {
        return data::window_at(*series_.at(series), t, n_steps_);
    }
    std::size_t n_steps() const { return n_steps_; }

private:
    std::vector<const data::Series*> series_;
    std::size_t n_steps_;
};

/// Mean of (Q(s,a) - y)^2 with y = r + gamma * max_a' Q_target(s', a') * (1 - done).
double td_loss(const QNet& net, const QNet& target, std::span<const Transition> batch,
               const WindowSource& source, double gamma);
/// td_loss and fills net's gradients.
double td_loss_and_grad(QNet& net, const QNet& target, std::span<const Transition> batch,
                        const WindowSource& source, double gamma);
/// One optimiser step on the TD loss; returns the pre-step loss.
double td_update(QNet& net, const QNet& target, std::span<const Transition> batch, const WindowSource& source,
                 double gamma, nn::Adam& optimizer);

/// Hard copy every `every_k` updates.
class TargetSync {
public:
    explicit TargetSync(std::size_t every_k) : every_k_(every_k == 0 ? 1 : every_k) {}
    /// Call after each td_update; returns true when a copy happened.
    bool on_update(const QNet& net, QNet& target);
    std::size_t updates() const { return updates_; }
    std::size_t syncs() const { return syncs_; }

private:
    std::size_t every_k_;
    std::size_t updates_ = 0;
    std::size_t syncs_ = 0;
};

struct AgentConfig {
    std::size_t hidden = 64;
    double lr = 1e-3;
    double gamma = 0.99;
    std::size_t buffer_capacity = 100000;
    std::size_t batch_size = 64;
    EpsilonSchedule epsilon{};
    std::size_t target_sync_every = 500;
    std::size_t warmup_steps = 1000;
    std::size_t train_every = 1;
    /// When false, steps without a label never reach the replay buffer, so
    /// Q-values of unlabeled states come only from generalization.
    bool train_on_unlabeled = true;
};

/// Per-step record of every reward component.
struct RewardBreakdown {
    std::size_t t = 0;
    int action = 0;
    std::optional<int> label;
    double q0 = 0.0, q1 = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;
    double lambda = 0.0;
    double phi_s = 0.0;
    double phi_next = 0.0;
    double total = 0.0;   // r1 + lambda * r2
    double shaped = 0.0;  // total + gamma * phi_next - phi_s
};

struct EpisodeReport {
    std::size_t episode = 0;
    std::string series_id;
    std::vector<RewardBreakdown> steps;
    double sum_r1 = 0.0;
    double sum_shaped = 0.0;
    std::size_t labeled_steps = 0;
    double lambda_before = 0.0;
    double lambda_after = 0.0;
    double r_target = 0.0;
    double epsilon_end = 0.0;
    std::size_t updates = 0;
    double mean_loss = 0.0;

    nlohmann::json summary_json() const;
    nlohmann::json to_json(bool with_steps) const;
};

/// Per-series, per-t reward ingredients that do not depend on the policy.
struct EpisodeInputs {
    std::vector<double> r2;   // indexed by t; only decided indices are read
    std::vector<double> phi;  // indexed by t
};

/// Computes recon errors (zero without a VAE) and potentials for every
/// decided index of [first, end).
EpisodeInputs precompute_inputs(const data::Series& series, std::size_t n_steps, std::size_t end,
                                const vae::VaeModel* vae, potential::PotentialProvider& phi);

/// Owns the online and target networks, optimiser, replay buffer and the
/// exploration state that persist across episodes.
class DqnTrainer {
public:
    DqnTrainer(const AgentConfig& config, std::size_t dims, std::uint64_t seed);

    /// One pass over the decided indices of series [n_steps - 1, end) using
    /// `labels` for R1. Updates `ctrl` from the episode's summed R1 and
    /// `r_target` (if set) before returning.
    EpisodeReport run_episode(std::uint32_t series_index, const data::Series& series, const WindowSource& source,
                              const EpisodeInputs& inputs, const env::LabelSource& labels,
                              vae::LambdaController& ctrl, std::size_t episode, std::size_t end = 0);

    QNet& net() { return net_; }
    const QNet& net() const { return net_; }
    const QNet& target() const { return target_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const TargetSync& sync() const { return sync_; }
    std::size_t global_step() const { return global_step_; }
    const AgentConfig& config() const { return config_; }

private:
    AgentConfig config_;
    QNet net_;
    QNet target_;
    nn::Adam optimizer_;
    ReplayBuffer buffer_;
    TargetSync sync_;
    std::mt19937_64 rng_;
    std::size_t global_step_ = 0;
};

}  // namespace rlad::agent
