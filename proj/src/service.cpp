#include "rlad/service.hpp"

#include <httplib.h>

#include <algorithm>

namespace rlad::service {

using nlohmann::json;

namespace {

json matrix_rows(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& message) { reply(res, status, {{"error", message}}); }

bool parse_index(const std::string& text, std::size_t& out) {
    if (text.empty() || text.size() > 18) return false;
    if (!std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) return false;
    out = std::stoull(text);
    return true;
}

}  // namespace

json query_json(const active::Query& q) {
    return {{"series", q.series}, {"t", q.t}, {"margin", q.margin}, {"window", matrix_rows(q.window)}};
}

AnnotationService::AnnotationService(std::shared_ptr<active::LabelStore> labels,
                                     std::shared_ptr<active::QueryQueue> queue,
                                     std::shared_ptr<pipeline::TrainingStatus> status, std::string static_dir)
    : labels_(std::move(labels)),
      queue_(std::move(queue)),
      status_(std::move(status)),
      static_dir_(std::move(static_dir)),
      server_(std::make_unique<httplib::Server>()) {
    // address reuse only; a second service on the same port must fail to bind
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    install_routes();
}

AnnotationService::~AnnotationService() { stop(); }

void AnnotationService::set_series(std::vector<data::Series> series) {
    std::lock_guard lock(series_mutex_);
    series_ = std::move(series);
}

bool AnnotationService::has_series(const std::string& id) const {
    std::lock_guard lock(series_mutex_);
    return std::any_of(series_.begin(), series_.end(), [&](const data::Series& s) { return s.id == id; });
}

void AnnotationService::install_routes() {
    auto& srv = *server_;

    srv.Get("/api/queries", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& q : queue_->pending()) out.push_back(query_json(q));
        reply(res, 200, out);
    });

    srv.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) return fail(res, 400, "body must be a JSON object");
        if (!body.contains("series") || !body["series"].is_string()) return fail(res, 400, "'series' must be a string");
        if (!body.contains("t") || !body["t"].is_number_unsigned()) return fail(res, 400, "'t' must be a non-negative integer");
        if (!body.contains("label")) return fail(res, 400, "'label' is required");
        std::optional<int> label;
        const auto& l = body["label"];
        if (l.is_string() && l.get<std::string>() == "skip") {
            label = std::nullopt;
        } else if (l.is_number_integer() && (l.get<long long>() == 0 || l.get<long long>() == 1)) {
            label = static_cast<int>(l.get<long long>());
        } else {
            return fail(res, 400, "'label' must be 0, 1 or \"skip\"");
        }
        const auto series = body["series"].get<std::string>();
        const auto t = body["t"].get<std::size_t>();
        if (!has_series(series)) return fail(res, 404, "unknown series '" + series + "'");
        switch (queue_->resolve(series, t, label, *labels_)) {
            case active::QueryQueue::Resolution::labeled:
                return reply(res, 200, {{"series", series}, {"t", t}, {"status", "labeled"}});
            case active::QueryQueue::Resolution::skipped:
                return reply(res, 200, {{"series", series}, {"t", t}, {"status", "skipped"}});
            case active::QueryQueue::Resolution::not_pending:
                break;
        }
        fail(res, 409, "no pending query for " + series + "@" + std::to_string(t));
    });

    srv.Get(R"(/api/series/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        std::lock_guard lock(series_mutex_);
        const auto it = std::find_if(series_.begin(), series_.end(), [&](const data::Series& s) { return s.id == id; });
        if (it == series_.end()) return fail(res, 404, "unknown series '" + id + "'");
        const auto& s = *it;
        std::size_t from = 0, to = s.length();
        if (req.has_param("from") && !parse_index(req.get_param_value("from"), from)) return fail(res, 400, "bad 'from'");
        if (req.has_param("to") && !parse_index(req.get_param_value("to"), to)) return fail(res, 400, "bad 'to'");
        to = std::min(to, s.length());
        if (from > to) return fail(res, 400, "'from' exceeds 'to'");
        const Matrix slice = s.values.middleRows(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to - from));
        json labels = json::array();
        for (const auto& rec : labels_->snapshot(id)) {
            if (rec.t < from || rec.t >= to) continue;
            labels.push_back({{"t", rec.t},
                              {"label", rec.entry.label},
                              {"provenance", active::to_string(rec.entry.provenance)},
                              {"confidence", rec.entry.confidence}});
        }
        reply(res, 200,
              {{"series", id},
               {"from", from},
               {"to", to},
               {"train_end", s.train_end},
               {"values", matrix_rows(slice)},
               {"labels", labels}});
    });

    srv.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
        const auto& st = *status_;
        reply(res, 200,
              {{"episode", st.episode.load()},
               {"episodes_total", st.episodes_total.load()},
               {"finished", st.finished.load()},
               {"lambda", st.lambda.load()},
               {"n_al", st.n_al},
               {"k_lp", st.k_lp},
               {"queries_asked", st.queries_asked.load()},
               {"pending", queue_->pending_count()},
               {"labels",
                {{"human", labels_->count(active::Provenance::human)},
                 {"ground_truth", labels_->count(active::Provenance::ground_truth)},
                 {"propagated", labels_->count(active::Provenance::propagated)},
                 {"total", labels_->size()}}}});
    });

    if (!static_dir_.empty() && !srv.set_mount_point("/", static_dir_)) {
        throw MissingFile("static asset directory not found: " + static_dir_);
    }
}

int AnnotationService::start(const std::string& host, int port) {
    if (thread_.joinable()) throw InvalidArgs("service already running");
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void AnnotationService::run(const std::string& host, int port, const std::function<void(int)>& on_bound) {
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    if (on_bound) on_bound(port_);
    server_->listen_after_bind();
}

void AnnotationService::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace rlad::service
