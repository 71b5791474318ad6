#include "rlad/service.hpp"

#include "support/tempdir.hpp"

#include <doctest.h>
#include <httplib.h>

using namespace rlad;
using nlohmann::json;

namespace {

data::Series series(const std::string& id, std::size_t T) {
    data::Series s;
    s.id = id;
    s.values = Matrix(static_cast<Eigen::Index>(T), 1);
    for (Eigen::Index t = 0; t < s.values.rows(); ++t) s.values(t, 0) = static_cast<double>(t) / 10.0;
    s.labels.assign(T, 0);
    s.train_end = T / 2;
    return s;
}

struct Fixture {
    std::shared_ptr<active::LabelStore> labels = std::make_shared<active::LabelStore>();
    std::shared_ptr<active::QueryQueue> queue = std::make_shared<active::QueryQueue>();
    std::shared_ptr<pipeline::TrainingStatus> status = std::make_shared<pipeline::TrainingStatus>();
    std::unique_ptr<service::AnnotationService> svc;
    std::unique_ptr<httplib::Client> client;

    explicit Fixture(std::string static_dir = {}) {
        svc = std::make_unique<service::AnnotationService>(labels, queue, status, std::move(static_dir));
        svc->set_series({series("alpha", 40), series("beta", 30)});
        const int port = svc->start("127.0.0.1", 0);
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
    }

    void publish(std::initializer_list<std::pair<std::string, std::size_t>> keys) {
        active::QueryBatch b;
        double m = 0.0;
        for (const auto& [s, t] : keys) {
            Matrix w(3, 1);
            w << 1, 2, 3;
            b.queries.push_back({s, t, m += 0.1, w});
        }
        queue->publish(b);
    }

    httplib::Result post_label(const json& body) { return client->Post("/api/labels", body.dump(), "application/json"); }
};

}  // namespace

TEST_CASE("queries are listed in margin order") {
    Fixture f;
    auto res = f.client->Get("/api/queries");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body) == json::array());
    f.publish({{"alpha", 30}, {"beta", 20}});
    res = f.client->Get("/api/queries");
    const auto q = json::parse(res->body);
    REQUIRE(q.size() == 2);
    CHECK(q[0]["series"] == "alpha");
    CHECK(q[0]["t"] == 30);
    CHECK(q[0]["window"] == json::parse("[[1.0],[2.0],[3.0]]"));
    CHECK(q[0]["margin"].get<double>() < q[1]["margin"].get<double>());
}

TEST_CASE("posting labels") {
    Fixture f;
    f.publish({{"alpha", 30}, {"alpha", 31}, {"beta", 25}});

    auto res = f.post_label({{"series", "alpha"}, {"t", 30}, {"label", 1}});
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body) == json({{"series", "alpha"}, {"t", 30}, {"status", "labeled"}}));
    const auto e = f.labels->get("alpha", 30);
    REQUIRE(e);
    CHECK(e->label == 1);
    CHECK(e->provenance == active::Provenance::human);

    res = f.post_label({{"series", "alpha"}, {"t", 31}, {"label", "skip"}});
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["status"] == "skipped");
    CHECK_FALSE(f.labels->contains("alpha", 31));

    CHECK(f.post_label({{"series", "alpha"}, {"t", 30}, {"label", 0}})->status == 409);
    CHECK(f.post_label({{"series", "alpha"}, {"t", 5}, {"label", 0}})->status == 409);
    CHECK(f.post_label({{"series", "gamma"}, {"t", 30}, {"label", 0}})->status == 404);
    CHECK(f.queue->pending_count() == 1);
    CHECK(f.labels->get("alpha", 30)->label == 1);
}

TEST_CASE("malformed label bodies are rejected") {
    Fixture f;
    f.publish({{"beta", 25}});
    CHECK(f.client->Post("/api/labels", "{oops", "application/json")->status == 400);
    CHECK(f.client->Post("/api/labels", "[1,2]", "application/json")->status == 400);
    CHECK(f.post_label({{"t", 25}, {"label", 1}})->status == 400);
    CHECK(f.post_label({{"series", "beta"}, {"label", 1}})->status == 400);
    CHECK(f.post_label({{"series", "beta"}, {"t", -1}, {"label", 1}})->status == 400);
    CHECK(f.post_label({{"series", "beta"}, {"t", 25}})->status == 400);
    CHECK(f.post_label({{"series", "beta"}, {"t", 25}, {"label", 2}})->status == 400);
    CHECK(f.post_label({{"series", "beta"}, {"t", 25}, {"label", "yes"}})->status == 400);
    CHECK(f.post_label({{"series", "beta"}, {"t", 25}, {"label", 0.5}})->status == 400);
    const auto bad = f.post_label({{"series", 3}, {"t", 25}, {"label", 1}});
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body).contains("error"));
    CHECK(f.queue->pending_count() == 1);
}

TEST_CASE("series slices carry values and known labels") {
    Fixture f;
    f.labels->put("alpha", 3, 1, active::Provenance::ground_truth);
    f.labels->put("alpha", 12, 0, active::Provenance::propagated, 0.93);
    f.labels->put("beta", 4, 1, active::Provenance::human);

    auto res = f.client->Get("/api/series/alpha?from=2&to=6");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto j = json::parse(res->body);
    CHECK(j["from"] == 2);
    CHECK(j["to"] == 6);
    CHECK(j["train_end"] == 20);
    REQUIRE(j["values"].size() == 4);
    CHECK(j["values"][0][0].get<double>() == doctest::Approx(0.2));
    REQUIRE(j["labels"].size() == 1);
    CHECK(j["labels"][0]["t"] == 3);
    CHECK(j["labels"][0]["provenance"] == "ground_truth");

    j = json::parse(f.client->Get("/api/series/alpha")->body);
    CHECK(j["values"].size() == 40);
    CHECK(j["labels"].size() == 2);
    CHECK(j["labels"][1]["confidence"].get<double>() == 0.93);

    CHECK(json::parse(f.client->Get("/api/series/beta?from=10&to=999")->body)["to"] == 30);
    CHECK(f.client->Get("/api/series/nope")->status == 404);
    CHECK(f.client->Get("/api/series/alpha?from=9&to=3")->status == 400);
    CHECK(f.client->Get("/api/series/alpha?from=-2")->status == 400);
    CHECK(f.client->Get("/api/series/alpha?to=abc")->status == 400);
}

TEST_CASE("status reports progress and label counts") {
    Fixture f;
    f.status->episode = 3;
    f.status->episodes_total = 30;
    f.status->lambda = 0.25;
    f.status->n_al = 10;
    f.status->k_lp = 20;
    f.status->queries_asked = 7;
    f.publish({{"alpha", 30}});
    f.labels->put("alpha", 1, 0, active::Provenance::ground_truth);
    f.labels->put("alpha", 2, 0, active::Provenance::propagated, 0.9);
    const auto j = json::parse(f.client->Get("/api/status")->body);
    CHECK(j["episode"] == 3);
    CHECK(j["episodes_total"] == 30);
    CHECK(j["finished"] == false);
    CHECK(j["lambda"].get<double>() == 0.25);
    CHECK(j["n_al"] == 10);
    CHECK(j["k_lp"] == 20);
    CHECK(j["queries_asked"] == 7);
    CHECK(j["pending"] == 1);
    CHECK(j["labels"]["ground_truth"] == 1);
    CHECK(j["labels"]["propagated"] == 1);
    CHECK(j["labels"]["human"] == 0);
    CHECK(j["labels"]["total"] == 2);
}

TEST_CASE("static assets are served from the mount") {
    testing::TempDir dir;
    dir.write("ui/index.html", "<html>annotator</html>");
    dir.write("ui/app.js", "console.log(1);");
    Fixture f((dir / "ui").string());
    auto res = f.client->Get("/");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "<html>annotator</html>");
    res = f.client->Get("/app.js");
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Content-Type").find("javascript") != std::string::npos);
    CHECK(f.client->Get("/missing.css")->status == 404);
    CHECK(f.client->Get("/api/status")->status == 200);

    auto labels = std::make_shared<active::LabelStore>();
    auto queue = std::make_shared<active::QueryQueue>();
    auto status = std::make_shared<pipeline::TrainingStatus>();
    CHECK_THROWS_AS(service::AnnotationService(labels, queue, status, (dir / "nowhere").string()), MissingFile);
}

TEST_CASE("a human answer unblocks a waiting oracle") {
    Fixture f;
    active::ServiceOracle oracle(*f.queue, std::chrono::milliseconds(10000));
    active::QueryBatch batch;
    batch.queries = {{"beta", 22, 0.0, Matrix::Zero(3, 1)}};
    std::thread annotator([&] {
        for (int i = 0; i < 200 && f.queue->pending_count() == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
        f.post_label({{"series", "beta"}, {"t", 22}, {"label", 1}});
    });
    const auto res = active::apply_oracle(batch, oracle, *f.labels);
    annotator.join();
    CHECK_FALSE(res.timed_out);
    REQUIRE(res.delta.size() == 1);
    CHECK(res.delta[0].provenance == active::Provenance::human);
    CHECK(f.labels->get("beta", 22)->label == 1);
}

TEST_CASE("binding a taken port fails") {
    Fixture f;
    auto labels = std::make_shared<active::LabelStore>();
    auto queue = std::make_shared<active::QueryQueue>();
    auto status = std::make_shared<pipeline::TrainingStatus>();
    service::AnnotationService other(labels, queue, status);
    CHECK_THROWS_AS(other.start("127.0.0.1", f.svc->port()), IoError);
}
