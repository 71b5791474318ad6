#include "rlad/agent.hpp"

#include "rlad/checkpoint.hpp"

#include <algorithm>
#include <unordered_set>

namespace rlad::agent {

namespace {

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& x) { return 1.0 / (1.0 + (-x).exp()); }

}  // namespace

SequenceBatch pack(std::span<const Matrix> windows, std::span<const int> flags) {
    if (windows.size() != flags.size()) throw ShapeError("window and flag counts differ");
    SequenceBatch batch;
    if (windows.empty()) return batch;
    const auto steps = windows.front().rows();
    const auto dims = windows.front().cols();
    const auto B = static_cast<Eigen::Index>(windows.size());
    batch.steps.assign(static_cast<std::size_t>(steps), Eigen::MatrixXd(dims + 1, B));
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& w = windows[static_cast<std::size_t>(b)];
        if (w.rows() != steps || w.cols() != dims) throw ShapeError("windows in a batch must share a shape");
        const double flag = static_cast<double>(flags[static_cast<std::size_t>(b)]);
        for (Eigen::Index t = 0; t < steps; ++t) {
            auto& col = batch.steps[static_cast<std::size_t>(t)];
            col.col(b).head(dims) = w.row(t).transpose();
            col(dims, b) = flag;
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// QNet

QNet::QNet(std::size_t dims, std::size_t hidden, std::uint64_t seed) : dims_(dims), hidden_(hidden) {
    if (dims == 0 || hidden == 0) throw InvalidArgs("Q-network needs positive input and hidden sizes");
    const auto H = static_cast<Eigen::Index>(hidden);
    const auto in = static_cast<Eigen::Index>(dims + 1);
    params_.emplace_back("lstm.W_input", 4 * H, in);
    params_.emplace_back("lstm.W_hidden", 4 * H, H);
    params_.emplace_back("lstm.bias", 4 * H, 1);
    params_.emplace_back("head.w", 1, H);
    params_.emplace_back("head.b", 1, 1);
    std::mt19937_64 rng(seed);
    nn::init_glorot(params_[0], rng);
    nn::init_glorot(params_[1], rng);
    nn::init_glorot(params_[3], rng);
    params_[2].value.block(H, 0, H, 1).setOnes();  // forget gate starts open
}

nn::ParamRefs QNet::params() {
    nn::ParamRefs out;
    for (auto& p : params_) out.push_back(&p);
    return out;
}

nn::ConstParamRefs QNet::params() const {
    nn::ConstParamRefs out;
    for (const auto& p : params_) out.push_back(&p);
    return out;
}

Eigen::RowVectorXd QNet::forward(const SequenceBatch& batch) const {
    Trace trace;
    return forward(batch, trace);
}

Eigen::RowVectorXd QNet::forward(const SequenceBatch& batch, Trace& trace) const {
    if (batch.steps.empty()) throw ShapeError("empty sequence batch");
    const auto H = static_cast<Eigen::Index>(hidden_);
    const auto B = batch.batch_size();
    if (batch.steps.front().rows() != static_cast<Eigen::Index>(dims_ + 1)) {
        throw ShapeError("sequence width " + std::to_string(batch.steps.front().rows() - 1) +
                         " != network input " + std::to_string(dims_));
    }
    const auto& Wx = params_[0].value;
    const auto& Wh = params_[1].value;
    const auto& b = params_[2].value;

    const std::size_t T = batch.steps.size();
    trace.h.assign(1, Eigen::MatrixXd::Zero(H, B));
    trace.c.assign(1, Eigen::MatrixXd::Zero(H, B));
    trace.i.clear(); trace.f.clear(); trace.g.clear(); trace.o.clear(); trace.tc.clear();
    for (std::size_t t = 0; t < T; ++t) {
        Eigen::MatrixXd gates = Wx * batch.steps[t] + Wh * trace.h.back();
        gates.colwise() += b.col(0);
        trace.i.push_back(sigmoid(gates.topRows(H).array()).matrix());
        trace.f.push_back(sigmoid(gates.middleRows(H, H).array()).matrix());
        trace.g.push_back(gates.middleRows(2 * H, H).array().tanh().matrix());
        trace.o.push_back(sigmoid(gates.bottomRows(H).array()).matrix());
        trace.c.push_back((trace.f.back().array() * trace.c.back().array() +
                           trace.i.back().array() * trace.g.back().array()).matrix());
        trace.tc.push_back(trace.c.back().array().tanh().matrix());
        trace.h.push_back((trace.o.back().array() * trace.tc.back().array()).matrix());
    }
    Eigen::RowVectorXd q = params_[3].value * trace.h.back();
    q.array() += params_[4].value(0, 0);
    return q;
}

void QNet::backward(const SequenceBatch& batch, const Trace& trace, const Eigen::RowVectorXd& d_q) {
    const auto H = static_cast<Eigen::Index>(hidden_);
    const auto B = batch.batch_size();
    auto& Wx = params_[0];
    auto& Wh = params_[1];
    auto& b = params_[2];
    params_[3].grad += d_q * trace.h.back().transpose();
    params_[4].grad(0, 0) += d_q.sum();

    Eigen::MatrixXd dh = params_[3].value.transpose() * d_q;
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(H, B);
    Eigen::MatrixXd d_gates(4 * H, B);
    for (std::size_t t = batch.steps.size(); t-- > 0;) {
        const auto& i = trace.i[t].array();
        const auto& f = trace.f[t].array();
        const auto& g = trace.g[t].array();
        const auto& o = trace.o[t].array();
        const auto& tc = trace.tc[t].array();
        const Eigen::ArrayXXd dc = dc_next.array() + dh.array() * o * (1.0 - tc.square());
        d_gates.topRows(H) = (dc * g * i * (1.0 - i)).matrix();
        d_gates.middleRows(H, H) = (dc * trace.c[t].array() * f * (1.0 - f)).matrix();
        d_gates.middleRows(2 * H, H) = (dc * i * (1.0 - g.square())).matrix();
        d_gates.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
        Wx.grad.noalias() += d_gates * batch.steps[t].transpose();
        Wh.grad.noalias() += d_gates * trace.h[t].transpose();
        b.grad += d_gates.rowwise().sum();
        dh = Wh.value.transpose() * d_gates;
        dc_next = (dc * f).matrix();
    }
}

void QNet::copy_from(const QNet& other) {
    if (other.dims_ != dims_ || other.hidden_ != hidden_) throw ShapeMismatch("Q-network shapes differ");
    for (std::size_t k = 0; k < params_.size(); ++k) params_[k].value = other.params_[k].value;
}

nlohmann::json QNet::meta() const { return {{"dims", dims_}, {"hidden", hidden_}}; }

void QNet::save(const std::filesystem::path& path) const { checkpoint::save(path, "qnet", meta(), params()); }

QNet QNet::load(const std::filesystem::path& path) {
    const auto ckpt = checkpoint::load(path);
    std::size_t dims = 0, hidden = 0;
    try {
        dims = ckpt.meta.at("dims").get<std::size_t>();
        hidden = ckpt.meta.at("hidden").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ShapeMismatch(std::string("Q-network checkpoint metadata: ") + e.what());
    }
    if (dims == 0 || hidden == 0) throw ShapeMismatch("Q-network checkpoint has zero-sized dimensions");
    QNet net(dims, hidden, 0);
    checkpoint::restore(ckpt, "qnet", net.params());
    return net;
}

std::pair<double, double> q_values(const QNet& net, const Matrix& window) {
    if (static_cast<std::size_t>(window.cols()) != net.dims() || window.rows() == 0) {
        throw ShapeError("window is " + std::to_string(window.rows()) + "x" + std::to_string(window.cols()) +
                         ", network expects d = " + std::to_string(net.dims()));
    }
    const Matrix windows[2] = {window, window};
    const int flags[2] = {0, 1};
    const auto q = net.forward(pack(windows, flags));
    if (!q.allFinite()) throw NonFiniteOutput("Q-network produced a non-finite value");
    return {q(0), q(1)};
}

std::vector<int> greedy_actions(const QNet& net, std::span<const Matrix> windows) {
    std::vector<int> out;
    out.reserve(windows.size());
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < windows.size(); start += kChunk) {
        const std::size_t stop = std::min(windows.size(), start + kChunk);
        std::vector<Matrix> both;
        std::vector<int> flags;
        for (std::size_t k = start; k < stop; ++k) {
            both.push_back(windows[k]);
            flags.push_back(0);
            both.push_back(windows[k]);
            flags.push_back(1);
        }
        const auto q = net.forward(pack(both, flags));
        if (!q.allFinite()) throw NonFiniteOutput("Q-network produced a non-finite value");
        for (std::size_t k = 0; k < stop - start; ++k) {
            out.push_back(q(static_cast<Eigen::Index>(2 * k + 1)) > q(static_cast<Eigen::Index>(2 * k)) ? 1 : 0);
        }
    }
    return out;
}

int select_action(double q0, double q1, double eps, double draw) {
    if (draw < eps) return draw < 0.5 * eps ? 0 : 1;
    return q1 > q0 ? 1 : 0;
}

double EpsilonSchedule::at(std::size_t step) const {
    if (decay_steps == 0 || step >= decay_steps) return eps_end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return std::max(eps_end, eps_start - (eps_start - eps_end) * frac);
}

// ---------------------------------------------------------------------------
// Replay

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw InvalidArgs("replay capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(const Transition& tr) {
    if (data_.size() < capacity_) {
        data_.push_back(tr);
    } else {
        data_[head_] = tr;
    }
    head_ = (head_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch) {
    const std::size_t n = std::min(batch, data_.size());
    std::vector<std::size_t> out;
    out.reserve(n);
    if (n == 0) return out;
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::unordered_set<std::size_t> seen;
    while (out.size() < n) {
        const auto k = pick(rng_);
        if (seen.insert(k).second) out.push_back(k);
    }
    return out;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch) {
    std::vector<Transition> out;
    for (auto k : sample_indices(batch)) out.push_back(data_[k]);
    return out;
}

// ---------------------------------------------------------------------------
// TD learning

namespace {

struct TdBatch {
    SequenceBatch states;
    Eigen::RowVectorXd targets;
};

TdBatch build_td_batch(const QNet& target, std::span<const Transition> batch, const WindowSource& source,
                       double gamma) {
    if (batch.empty()) throw InvalidArgs("TD batch must be non-empty");
    std::vector<Matrix> states, next;
    std::vector<int> actions, next_flags;
    for (const auto& tr : batch) {
        states.push_back(source.window(tr.series, tr.t));
        actions.push_back(tr.action);
        const auto w = source.window(tr.series, tr.next_t);
        next.push_back(w);
        next_flags.push_back(0);
        next.push_back(w);
        next_flags.push_back(1);
    }
    const auto q_next = target.forward(pack(next, next_flags));
    TdBatch out{pack(states, actions), Eigen::RowVectorXd(static_cast<Eigen::Index>(batch.size()))};
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const double best = std::max(q_next(static_cast<Eigen::Index>(2 * k)), q_next(static_cast<Eigen::Index>(2 * k + 1)));
        out.targets(static_cast<Eigen::Index>(k)) = batch[k].reward + (batch[k].done ? 0.0 : gamma * best);
    }
    return out;
}

}  // namespace

double td_loss(const QNet& net, const QNet& target, std::span<const Transition> batch, const WindowSource& source,
               double gamma) {
    const auto td = build_td_batch(target, batch, source, gamma);
    const auto q = net.forward(td.states);
    const double loss = (q - td.targets).array().square().mean();
    if (!std::isfinite(loss)) throw NonFiniteLoss("TD loss is not finite");
    return loss;
}

double td_loss_and_grad(QNet& net, const QNet& target, std::span<const Transition> batch,
                        const WindowSource& source, double gamma) {
    const auto td = build_td_batch(target, batch, source, gamma);
    QNet::Trace trace;
    const auto q = net.forward(td.states, trace);
    const Eigen::RowVectorXd err = q - td.targets;
    const double loss = err.array().square().mean();
    if (!std::isfinite(loss)) throw NonFiniteLoss("TD loss is not finite");
    nn::zero_grads(net.params());
    net.backward(td.states, trace, (2.0 / static_cast<double>(batch.size())) * err);
    return loss;
}

double td_update(QNet& net, const QNet& target, std::span<const Transition> batch, const WindowSource& source,
                 double gamma, nn::Adam& optimizer) {
    const double loss = td_loss_and_grad(net, target, batch, source, gamma);
    optimizer.step(net.params());
    return loss;
}

bool TargetSync::on_update(const QNet& net, QNet& target) {
    ++updates_;
    if (updates_ % every_k_ != 0) return false;
    target.copy_from(net);
    ++syncs_;
    return true;
}

// ---------------------------------------------------------------------------
// Episodes

nlohmann::json EpisodeReport::summary_json() const {
    return {{"episode", episode},         {"series", series_id},          {"decisions", steps.size()},
            {"labeled_steps", labeled_steps}, {"sum_r1", sum_r1},         {"sum_shaped", sum_shaped},
            {"lambda_before", lambda_before}, {"lambda_after", lambda_after}, {"r_target", r_target},
            {"epsilon_end", epsilon_end},  {"updates", updates},          {"mean_loss", mean_loss}};
}

nlohmann::json EpisodeReport::to_json(bool with_steps) const {
    auto j = summary_json();
    if (with_steps) {
        auto arr = nlohmann::json::array();
        for (const auto& s : steps) {
            arr.push_back({{"t", s.t},
                           {"action", s.action},
                           {"label", s.label ? nlohmann::json(*s.label) : nlohmann::json(nullptr)},
                           {"q0", s.q0}, {"q1", s.q1},
                           {"r1", s.r1}, {"r2", s.r2}, {"lambda", s.lambda},
                           {"phi_s", s.phi_s}, {"phi_next", s.phi_next},
                           {"total", s.total}, {"shaped", s.shaped}});
        }
        j["steps"] = std::move(arr);
    }
    return j;
}

EpisodeInputs precompute_inputs(const data::Series& series, std::size_t n_steps, std::size_t end,
                                const vae::VaeModel* vae, potential::PotentialProvider& phi) {
    if (end == 0) end = series.train_end;
    EpisodeInputs in;
    in.r2.assign(series.length(), 0.0);
    in.phi.assign(series.length(), 0.0);
    if (end < n_steps) return in;
    const std::size_t first = n_steps - 1;
    std::vector<Matrix> windows;
    windows.reserve(end - first);
    for (std::size_t t = first; t < end; ++t) windows.push_back(data::window_at(series, t, n_steps));
    phi.prefetch(windows);
    for (std::size_t k = 0; k < windows.size(); ++k) in.phi[first + k] = phi.score(windows[k]).value;
    if (vae != nullptr) {
        Matrix flat(static_cast<Eigen::Index>(windows.size()), static_cast<Eigen::Index>(windows.front().size()));
        for (std::size_t k = 0; k < windows.size(); ++k) {
            flat.row(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::RowVectorXd>(windows[k].data(), windows[k].size());
        }
        const Vector errs = vae::recon_errors(*vae, flat);
        for (std::size_t k = 0; k < windows.size(); ++k) in.r2[first + k] = errs(static_cast<Eigen::Index>(k));
    }
    return in;
}

DqnTrainer::DqnTrainer(const AgentConfig& config, std::size_t dims, std::uint64_t seed)
    : config_(config),
      net_(dims, config.hidden, seed),
      target_(dims, config.hidden, seed),
      optimizer_(config.lr),
      buffer_(config.buffer_capacity, seed ^ 0x9e3779b97f4a7c15ULL),
      sync_(config.target_sync_every),
      rng_(seed + 1) {}

EpisodeReport DqnTrainer::run_episode(std::uint32_t series_index, const data::Series& series,
                                      const WindowSource& source, const EpisodeInputs& inputs,
                                      const env::LabelSource& labels, vae::LambdaController& ctrl,
                                      std::size_t episode, std::size_t end) {
    env::Environment environment(series, source.n_steps(), labels, end);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    EpisodeReport report;
    report.episode = episode;
    report.series_id = series.id;
    report.lambda_before = ctrl.lambda;
    report.r_target = ctrl.r_target;
    report.steps.reserve(environment.decision_count());
    double loss_sum = 0.0;

    while (!environment.done()) {
        const std::size_t t = environment.current_t();
        RewardBreakdown rb;
        rb.t = t;
        try {
            const auto [q0, q1] = q_values(net_, environment.current_window());
            rb.q0 = q0;
            rb.q1 = q1;
            const double eps = config_.epsilon.at(global_step_);
            rb.action = select_action(q0, q1, eps, unit(rng_));
            report.epsilon_end = eps;

            const auto outcome = environment.step(rb.action);
            const std::size_t next_t = outcome.done ? t : t + 1;
            rb.label = outcome.label;
            rb.r1 = outcome.r1;
            rb.r2 = inputs.r2.at(t);
            rb.lambda = ctrl.lambda;
            rb.phi_s = inputs.phi.at(t);
            rb.phi_next = inputs.phi.at(next_t);
            rb.total = vae::total_reward(rb.r1, rb.r2, rb.lambda);
            rb.shaped = potential::shaped_reward(rb.total, rb.phi_s, rb.phi_next, config_.gamma);

            if (outcome.label || config_.train_on_unlabeled)
                buffer_.push({series_index, static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(next_t), rb.action,
                              rb.shaped, outcome.done});
            ++global_step_;
            if (buffer_.size() >= config_.batch_size && global_step_ >= config_.warmup_steps &&
                global_step_ % std::max<std::size_t>(1, config_.train_every) == 0) {
                const auto batch = buffer_.sample(config_.batch_size);
                loss_sum += td_update(net_, target_, batch, source, config_.gamma, optimizer_);
                ++report.updates;
                sync_.on_update(net_, target_);
            }
        } catch (const Error& e) {
            throw Error("episode " + std::to_string(episode) + ", series '" + series.id + "', t=" +
                        std::to_string(t) + ": " + e.what());
        }
        report.sum_r1 += rb.r1;
        report.sum_shaped += rb.shaped;
        if (rb.label) ++report.labeled_steps;
        report.steps.push_back(rb);
    }
    report.mean_loss = report.updates ? loss_sum / static_cast<double>(report.updates) : 0.0;
    ctrl = vae::update_lambda(ctrl, report.sum_r1);
    report.lambda_after = ctrl.lambda;
    return report;
}

}  // namespace rlad::agent
