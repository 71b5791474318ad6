#pragma once

#include "rlad/active.hpp"
#include "rlad/data.hpp"
#include "rlad/pipeline.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace rlad::service {

/// JSON shape of a pending query: {series, t, margin, window}.
nlohmann::json query_json(const active::Query& q);

/// HTTP front end for human annotators.
///
///   GET  /api/queries          pending queries, ascending margin
///   POST /api/labels           {series, t, label: 0 | 1 | "skip"}
///   GET  /api/series/{id}      ?from&to (half-open), values and known labels
///   GET  /api/status           progress, budgets and label counts
///   GET  /*                    static UI assets, when a directory is given
class AnnotationService {
public:
    AnnotationService(std::shared_ptr<active::LabelStore> labels, std::shared_ptr<active::QueryQueue> queue,
                      std::shared_ptr<pipeline::TrainingStatus> status, std::string static_dir = {});
    ~AnnotationService();

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    /// Series exposed by /api/series; may be set after start().
    void set_series(std::vector<data::Series> series);

    /// Binds and serves on a background thread. Port 0 picks a free port.
    /// Returns the bound port; throws IoError when binding fails.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop(). `on_bound` sees the bound
    /// port before the first request is accepted.
    void run(const std::string& host, int port, const std::function<void(int)>& on_bound = {});
    void stop();
    int port() const { return port_; }

private:
    void install_routes();
    bool has_series(const std::string& id) const;

    std::shared_ptr<active::LabelStore> labels_;
    std::shared_ptr<active::QueryQueue> queue_;
    std::shared_ptr<pipeline::TrainingStatus> status_;
    std::string static_dir_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;

    mutable std::mutex series_mutex_;
    std::vector<data::Series> series_;
};

}  // namespace rlad::service
