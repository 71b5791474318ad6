#include "rlad/config.hpp"
#include "rlad/data.hpp"
#include "rlad/pipeline.hpp"
#include "rlad/service.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace rlad;

namespace {

service::AnnotationService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

config::RunConfig load_with_overrides(const std::string& path, const std::optional<std::uint64_t>& seed,
                                      const std::string& out) {
    auto cfg = config::load(path);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.output_dir = out;
    config::validate(cfg);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reinforcement-learning anomaly detection for time series"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic spike series");
    std::size_t s_len = 2000, s_dims = 1, s_anoms = 20;
    std::uint64_t s_seed = 7;
    std::string s_out, s_labels;
    synth->add_option("--T", s_len, "Series length");
    synth->add_option("--d", s_dims, "Channels");
    synth->add_option("--n-anomalies", s_anoms, "Number of spikes");
    synth->add_option("--seed", s_seed, "Generator seed");
    synth->add_option("--out", s_out, "Output CSV (d = 1) or matrix data file")->required();
    synth->add_option("--labels-out", s_labels, "Label file for d > 1");

    // train
    auto* train = app.add_subcommand("train", "Train a detector");
    std::string t_config, t_out, t_oracle, t_static;
    std::optional<std::uint64_t> t_seed;
    std::optional<int> t_port;
    std::optional<double> t_wait;
    train->add_option("--config", t_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    train->add_option("--seed", t_seed, "Overrides the config seed");
    train->add_option("--out", t_out, "Overrides the output directory");
    train->add_option("--oracle", t_oracle, "ground_truth or human")
        ->check(CLI::IsMember({"ground_truth", "human"}));
    train->add_option("--port", t_port, "Annotation service port (human oracle)");
    train->add_option("--wait", t_wait, "Seconds to wait for human answers per round");
    train->add_option("--static-dir", t_static, "UI assets served by the annotation service");

    // eval
    auto* evalc = app.add_subcommand("eval", "Score a checkpoint on the test split");
    std::string e_config, e_ckpt, e_out, e_labels;
    evalc->add_option("--config", e_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    evalc->add_option("--checkpoint", e_ckpt, "qnet.ckpt")->required();
    evalc->add_option("--out", e_out, "Report directory")->required();
    evalc->add_option("--labels", e_labels, "labels.jsonl for provenance strata");

    // serve
    auto* serve = app.add_subcommand("serve", "Serve the annotation API for a dataset");
    std::string v_config, v_labels, v_static;
    std::optional<int> v_port;
    serve->add_option("--config", v_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    serve->add_option("--port", v_port, "Port (0 picks a free one)");
    serve->add_option("--labels", v_labels, "labels.jsonl to preload");
    serve->add_option("--static-dir", v_static, "UI assets");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*synth) {
            const auto s = data::synth_spike_series(s_len, s_dims, s_anoms, s_seed);
            if (s_dims == 1) {
                data::write_csv_univariate(s, s_out);
            } else {
                if (s_labels.empty()) throw InvalidArgs("--labels-out is required when d > 1");
                data::write_matrix(s, s_out, s_labels);
            }
            std::cout << "wrote " << s_out << '\n';
            return 0;
        }

        if (*train) {
            auto cfg = load_with_overrides(t_config, t_seed, t_out);
            if (!t_oracle.empty()) cfg.active.oracle = t_oracle;
            if (t_port) cfg.service.port = *t_port;
            if (t_wait) cfg.active.human_wait_seconds = *t_wait;
            if (!t_static.empty()) cfg.service.static_dir = t_static;
            config::validate(cfg);

            pipeline::RunContext ctx;
            std::unique_ptr<service::AnnotationService> svc;
            if (cfg.active.oracle == "human") {
                svc = std::make_unique<service::AnnotationService>(ctx.labels, ctx.queue, ctx.status,
                                                                   cfg.service.static_dir);
                ctx.on_dataset = [&svc](const std::vector<data::Series>& series) { svc->set_series(series); };
                const int port = svc->start(cfg.service.host, cfg.service.port);
                spdlog::info("annotation service on http://{}:{}", cfg.service.host, port);
            }
            const auto result = pipeline::run_training(cfg, ctx);
            if (svc) svc->stop();
            std::cout << result.metrics.dump(2) << '\n';
            return 0;
        }

        if (*evalc) {
            const auto cfg = config::load(e_config);
            const auto result = pipeline::run_eval(cfg, e_ckpt, e_out, e_labels);
            std::cout << result.metrics.dump(2) << '\n';
            return 0;
        }

        if (*serve) {
            auto cfg = config::load(v_config);
            if (v_port) cfg.service.port = *v_port;
            if (!v_static.empty()) cfg.service.static_dir = v_static;
            pipeline::RunContext ctx;
            if (!v_labels.empty()) ctx.labels->load_jsonl(v_labels);
            service::AnnotationService svc(ctx.labels, ctx.queue, ctx.status, cfg.service.static_dir);
            svc.set_series(pipeline::load_dataset(cfg));
            g_service = &svc;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            svc.run(cfg.service.host, cfg.service.port, [&](int port) {
                std::cout << "serving on http://" << cfg.service.host << ':' << port << std::endl;
            });
            g_service = nullptr;
            return 0;
        }
    } catch (const rlad::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
