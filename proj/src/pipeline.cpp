#include "rlad/pipeline.hpp"

#include "rlad/potential.hpp"
#include "rlad/vae.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace rlad::pipeline {

namespace fs = std::filesystem;

std::vector<data::Series> load_dataset(const config::RunConfig& cfg) {
    const auto& ds = cfg.dataset;
    std::vector<data::Series> raw;
    bool own_split = false;
    if (ds.kind == "synthetic") {
        raw.push_back(data::synth_spike_series(ds.length, ds.dims, ds.n_anomalies, ds.seed));
    } else if (ds.kind == "csv") {
        raw.push_back(data::load_csv_univariate(ds.path, cfg.n_steps));
    } else if (ds.kind == "csv_dir") {
        if (!fs::is_directory(ds.path)) throw MissingFile("no such directory: " + ds.path);
        raw = data::load_csv_directory(ds.path, cfg.n_steps);
    } else if (ds.kind == "matrix") {
        raw.push_back(data::load_matrix_multivariate(ds.data, ds.labels, cfg.n_steps));
    } else if (ds.kind == "smd") {
        raw = data::load_smd_directory(ds.path, cfg.n_steps);
        own_split = true;
    } else {
        throw ConfigError("unknown dataset kind '" + ds.kind + "'");
    }
    if (raw.empty()) throw EmptySeries("dataset produced no series");
    std::vector<data::Series> out;
    out.reserve(raw.size());
    for (auto& s : raw) {
        auto split = own_split ? std::move(s) : data::apply_split(std::move(s), cfg.train_fraction);
        auto norm = data::normalize(split);
        data::validate(norm, cfg.n_steps);
        out.push_back(std::move(norm));
    }
    return out;
}

std::vector<std::size_t> decided_range(std::size_t n_steps, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> t;
    const std::size_t first = std::max(n_steps == 0 ? 0 : n_steps - 1, begin);
    for (std::size_t i = first; i < end; ++i) t.push_back(i);
    return t;
}

eval::SeriesPredictions predict(const agent::QNet& net, const data::Series& series, std::size_t n_steps,
                                const std::vector<std::size_t>& t) {
    std::vector<Matrix> windows;
    windows.reserve(t.size());
    for (auto i : t) windows.push_back(data::window_at(series, i, n_steps));
    return {&series, t, agent::greedy_actions(net, windows)};
}

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Eigen::RowVectorXd flat_row(const Matrix& window) {
    return Eigen::Map<const Eigen::RowVectorXd>(window.data(), window.size());
}

bool window_is_normal(const data::Series& s, std::size_t t, std::size_t n_steps) {
    for (std::size_t i = t + 1 - n_steps; i <= t; ++i) {
        if (s.labels[i] != 0) return false;
    }
    return true;
}

std::unique_ptr<potential::PotentialProvider> make_potential(const config::RunConfig& cfg) {
    const auto& p = cfg.potential;
    if (p.provider == "none") return std::make_unique<potential::ZeroPotential>();
    if (p.provider == "heuristic") return std::make_unique<potential::HeuristicPotential>(p.heuristic);
    auto spec = potential::PromptSpec::defaults();
    spec.precision = p.prompt_precision;
    auto cache = std::make_shared<potential::PotentialCache>();
    if (!p.llm.cache_path.empty() && fs::exists(p.llm.cache_path)) cache->load_jsonl(p.llm.cache_path);
    return std::make_unique<potential::LlmPotential>(p.llm, spec, cache);
}

/// Best episode R1 over the labels currently known in [first, end).
double best_r1(const active::LabelStore& store, const data::Series& s, const std::vector<std::size_t>& decided) {
    double best = 0.0;
    for (const auto& rec : store.snapshot(s.id)) {
        if (rec.t < decided.front() || rec.t > decided.back()) continue;
        best += env::reward_r1(rec.entry.label, rec.entry.label);
    }
    return best;
}

class Features {
public:
    Features(const config::RunConfig& cfg, const vae::VaeModel* vae) : cfg_(cfg), vae_(vae) {}

    Matrix build(const data::Series& s, const std::vector<std::size_t>& t) const {
        if (t.empty()) return Matrix(0, 0);
        const bool latent = cfg_.active.feature_space == "latent";
        const auto width = latent ? static_cast<Eigen::Index>(cfg_.vae.latent)
                                  : static_cast<Eigen::Index>(cfg_.n_steps * s.dims());
        Matrix m(static_cast<Eigen::Index>(t.size()), width);
        for (std::size_t k = 0; k < t.size(); ++k) {
            const auto w = data::window_at(s, t[k], cfg_.n_steps);
            if (latent) m.row(static_cast<Eigen::Index>(k)) = vae::latent_mean(*vae_, w).transpose();
            else m.row(static_cast<Eigen::Index>(k)) = flat_row(w);
        }
        return m;
    }

private:
    const config::RunConfig& cfg_;
    const vae::VaeModel* vae_;
};

struct AlOutcome {
    std::size_t asked = 0;
    std::size_t answered = 0;
    std::size_t pseudo = 0;
    bool timed_out = false;
};

AlOutcome active_learning_round(const config::RunConfig& cfg, const data::Series& s,
                                const agent::EpisodeReport& report, const std::vector<std::size_t>& decided,
                                const Features& features, active::LabelOracle& oracle, RunContext& ctx) {
    auto& store = *ctx.labels;
    auto& queue = *ctx.queue;
    AlOutcome out;

    std::vector<active::Candidate> candidates;
    candidates.reserve(report.steps.size());
    for (const auto& st : report.steps) candidates.push_back({s.id, st.t, st.q0, st.q1});
    auto batch = active::select_queries(candidates, cfg.active.n_al, store,
                                        [&](const std::string& id, std::size_t t) { return queue.is_pending(id, t); });
    for (auto& q : batch.queries) q.window = data::window_at(s, q.t, cfg.n_steps);
    out.asked = batch.queries.size();
    if (!batch.queries.empty()) {
        const auto res = active::apply_oracle(batch, oracle, store);
        out.answered = res.delta.size();
        out.timed_out = res.timed_out;
    }

    if (cfg.active.k_lp == 0) return out;
    std::vector<std::size_t> lab_t, unl_t;
    std::vector<int> lab_y;
    for (auto t : decided) {
        const auto e = store.get(s.id, t);
        if (e) {
            if (e->provenance != active::Provenance::propagated) {
                lab_t.push_back(t);
                lab_y.push_back(e->label);
            }
        } else if (!queue.is_pending(s.id, t)) {
            unl_t.push_back(t);
        }
    }
    if (lab_t.empty() || unl_t.empty()) return out;
    const Matrix lab = features.build(s, lab_t);
    const Matrix unl = features.build(s, unl_t);

    active::PropagationOptions po;
    po.iters = cfg.active.iters;
    po.k_lp = cfg.active.k_lp;
    po.theta = cfg.active.theta;
    if (cfg.active.sigma == "median") {
        Matrix all(lab.rows() + unl.rows(), lab.cols());
        all << lab, unl;
        po.sigma = active::median_pairwise_distance(all);
        if (!(po.sigma > 0.0)) return out;
    } else {
        po.sigma = std::stod(cfg.active.sigma);
    }
    const double below_one = std::nextafter(1.0, 0.0);
    for (const auto& p : active::propagate(lab, lab_y, unl, po)) {
        if (store.put(s.id, unl_t[p.index], p.label, active::Provenance::propagated, std::min(p.confidence, below_one))) {
            ++out.pseudo;
        }
    }
    return out;
}

}  // namespace

RunResult run_training(const config::RunConfig& cfg) {
    RunContext ctx;
    return run_training(cfg, ctx);
}

RunResult run_training(const config::RunConfig& cfg, RunContext& ctx) {
    config::validate(cfg);
    const auto started = std::chrono::steady_clock::now();
    RunResult result;
    result.dir = cfg.output_dir;

    auto series = load_dataset(cfg);
    if (ctx.on_dataset) ctx.on_dataset(series);
    const std::size_t dims = series.front().dims();
    for (const auto& s : series) {
        if (s.dims() != dims) throw ShapeMismatch("series '" + s.id + "' has a different channel count");
    }

    std::error_code ec;
    fs::create_directories(result.dir, ec);
    if (ec) throw IoError("cannot create " + result.dir.string() + ": " + ec.message());
    write_json(result.dir / "config.json", config::to_json(cfg));

    const std::size_t n = cfg.n_steps;
    std::vector<const data::Series*> ptrs;
    for (const auto& s : series) ptrs.push_back(&s);

    // Reconstruction model on windows whose every point is labeled normal.
    std::unique_ptr<vae::VaeModel> vae_model;
    if (cfg.vae.enabled) {
        std::vector<Eigen::RowVectorXd> rows;
        for (const auto& s : series) {
            for (auto t : decided_range(n, 0, s.train_end)) {
                if (window_is_normal(s, t, n)) rows.push_back(flat_row(data::window_at(s, t, n)));
            }
        }
        if (rows.empty()) throw EmptySeries("no normal training windows for the VAE");
        Matrix windows(static_cast<Eigen::Index>(rows.size()), rows.front().size());
        for (std::size_t k = 0; k < rows.size(); ++k) windows.row(static_cast<Eigen::Index>(k)) = rows[k];
        vae_model = std::make_unique<vae::VaeModel>(vae::VaeConfig{n * dims, cfg.vae.hidden, cfg.vae.latent}, cfg.seed);
        const auto losses = vae::train_vae(*vae_model, windows,
                                           {cfg.vae.epochs, cfg.vae.lr, cfg.vae.batch_size, cfg.seed + 11});
        spdlog::info("vae trained on {} windows, loss {:.4f} -> {:.4f}", rows.size(), losses.front(), losses.back());
        vae_model->save(result.dir / "vae.ckpt");
    }

    auto phi = make_potential(cfg);
    std::vector<agent::EpisodeInputs> inputs;
    for (const auto& s : series) inputs.push_back(agent::precompute_inputs(s, n, s.train_end, vae_model.get(), *phi));
    if (auto* llm = dynamic_cast<potential::LlmPotential*>(phi.get())) llm->persist_cache();

    std::vector<std::vector<std::size_t>> decided;
    for (const auto& s : series) decided.push_back(decided_range(n, 0, s.train_end));

    auto& store = *ctx.labels;
    std::shared_ptr<active::LabelOracle> oracle = ctx.oracle;
    if (!oracle) {
        if (cfg.active.oracle == "human") {
            oracle = std::make_shared<active::ServiceOracle>(
                *ctx.queue, std::chrono::milliseconds(static_cast<long long>(cfg.active.human_wait_seconds * 1000.0)));
        } else {
            oracle = std::make_shared<active::GroundTruthOracle>(ptrs);
        }
    }

    std::mt19937_64 rng(cfg.seed);
    if (cfg.active.supervision == "full") {
        for (std::size_t i = 0; i < series.size(); ++i) {
            for (auto t : decided[i]) store.put(series[i].id, t, series[i].labels[t], active::Provenance::ground_truth);
        }
    } else if (cfg.active.initial_labels > 0) {
        std::vector<std::pair<std::size_t, std::size_t>> pool;
        for (std::size_t i = 0; i < series.size(); ++i) {
            for (auto t : decided[i]) pool.emplace_back(i, t);
        }
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(std::min(pool.size(), cfg.active.initial_labels));
        std::sort(pool.begin(), pool.end());
        active::QueryBatch seed_batch;
        seed_batch.budget = pool.size();
        for (const auto& [i, t] : pool) {
            seed_batch.queries.push_back({series[i].id, t, 0.0, data::window_at(series[i], t, n)});
        }
        active::apply_oracle(seed_batch, *oracle, store);
    }

    auto& status = *ctx.status;
    status.episodes_total = cfg.episodes;
    status.n_al = cfg.active.n_al;
    status.k_lp = cfg.active.k_lp;

    agent::DqnTrainer trainer(cfg.agent, dims, cfg.seed);
    const agent::WindowSource source(ptrs, n);
    vae::LambdaController ctrl{cfg.lambda.initial, cfg.lambda.alpha, 0.0, cfg.lambda.min, cfg.lambda.max};
    const Features features(cfg, vae_model.get());

    std::ofstream log(result.dir / "run.log.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot write run log");

    std::vector<std::size_t> order(series.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        if (e % order.size() == 0 && order.size() > 1) std::shuffle(order.begin(), order.end(), rng);
        const std::size_t si = order[e % order.size()];
        const auto& s = series[si];
        if (decided[si].empty()) continue;

        ctrl.r_target = cfg.lambda.target ? *cfg.lambda.target
                                          : cfg.lambda.target_fraction * best_r1(store, s, decided[si]);
        const env::LabelSource labels = [&store, &s](std::size_t t) -> std::optional<int> {
            const auto entry = store.get(s.id, t);
            if (!entry) return std::nullopt;
            return entry->label;
        };
        auto report = trainer.run_episode(static_cast<std::uint32_t>(si), s, source, inputs[si], labels, ctrl, e,
                                          s.train_end);

        nlohmann::json line = report.to_json(cfg.log_steps);
        if (cfg.active.supervision == "active") {
            const auto al = active_learning_round(cfg, s, report, decided[si], features, *oracle, ctx);
            status.queries_asked += al.asked;
            status.pseudo_labels += al.pseudo;
            line["al_asked"] = al.asked;
            line["al_answered"] = al.answered;
            line["al_propagated"] = al.pseudo;
            line["al_timed_out"] = al.timed_out;
        }
        line["labels_total"] = store.size();
        log << line.dump() << '\n';
        log.flush();

        nlohmann::json summary = report.summary_json();
        for (const auto& key : {"al_asked", "al_answered", "al_propagated", "labels_total"}) {
            if (line.contains(key)) summary[key] = line[key];
        }
        result.episodes.push_back(summary);
        status.episode = e + 1;
        status.lambda = ctrl.lambda;
        spdlog::info("episode {}/{} series {} r1 {:.1f} lambda {:.4f} labels {}", e + 1, cfg.episodes, s.id,
                     report.sum_r1, ctrl.lambda, store.size());
        if (ctx.on_episode) ctx.on_episode(report);
    }

    trainer.net().save(result.dir / "qnet.ckpt");
    store.save_jsonl(result.dir / "labels.jsonl");

    std::vector<eval::SeriesPredictions> test, train;
    for (std::size_t i = 0; i < series.size(); ++i) {
        test.push_back(predict(trainer.net(), series[i], n, decided_range(n, series[i].train_end, series[i].length())));
        train.push_back(predict(trainer.net(), series[i], n, decided[i]));
    }
    result.metrics = eval::emit_report(result.dir, test, train, store, {cfg.point_adjust});
    status.finished = true;
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    spdlog::info("test f1 {:.4f} in {:.1f}s", result.metrics["test_f1"].get<double>(), result.seconds);
    return result;
}

RunResult run_eval(const config::RunConfig& cfg, const fs::path& qnet_path, const fs::path& out_dir,
                   const fs::path& labels_path) {
    if (!fs::exists(qnet_path)) throw MissingFile("no such checkpoint: " + qnet_path.string());
    const auto started = std::chrono::steady_clock::now();
    const auto net = agent::QNet::load(qnet_path);
    const auto series = load_dataset(cfg);
    const std::size_t n = cfg.n_steps;
    active::LabelStore store;
    if (!labels_path.empty()) store.load_jsonl(labels_path);

    std::vector<eval::SeriesPredictions> test, train;
    for (const auto& s : series) {
        if (s.dims() != net.dims()) {
            throw ShapeMismatch("checkpoint expects " + std::to_string(net.dims()) + " channels, series '" + s.id +
                                "' has " + std::to_string(s.dims()));
        }
        test.push_back(predict(net, s, n, decided_range(n, s.train_end, s.length())));
        train.push_back(predict(net, s, n, decided_range(n, 0, s.train_end)));
    }
    RunResult result;
    result.dir = out_dir;
    result.metrics = eval::emit_report(out_dir, test, train, store, {cfg.point_adjust});
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace rlad::pipeline
