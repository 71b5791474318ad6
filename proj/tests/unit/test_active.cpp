#include "rlad/active.hpp"

#include "support/oracles.hpp"
#include "support/tempdir.hpp"

#include <doctest.h>

#include <random>
#include <thread>

using namespace rlad;
using namespace rlad::active;

namespace {

Matrix random_points(Eigen::Index n, Eigen::Index d, double centre, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 0.6);
    Matrix m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = centre + g(rng);
    return m;
}

std::vector<std::vector<double>> rows(const Matrix& m) {
    std::vector<std::vector<double>> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.emplace_back(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.back()[static_cast<std::size_t>(j)] = m(i, j);
    }
    return out;
}

}  // namespace

TEST_CASE("margin") {
    CHECK(margin(0.2, 0.7) == doctest::Approx(0.5));
    CHECK(margin(0.7, 0.2) == margin(0.2, 0.7));
    CHECK(margin(-3.0, -3.0) == 0.0);
}

TEST_CASE("query selection orders by margin and respects exclusions") {
    const std::vector<Candidate> cands{{"a", 1, 0.0, 1.0}, {"a", 2, 0.0, 0.1}, {"b", 3, 0.5, 0.45},
                                       {"a", 4, 0.3, 0.3}, {"b", 5, 2.0, -2.0}, {"a", 6, 0.1, 0.0}};
    LabelStore store;
    auto q = select_queries(cands, 3, store);
    REQUIRE(q.queries.size() == 3);
    CHECK(q.budget == 3);
    CHECK(q.queries[0].t == 4);
    CHECK(q.queries[1].series == "b");
    CHECK(q.queries[2].t == 2);  // ties at 0.1: (a, 2) before (a, 6)
    CHECK(q.queries[0].window.size() == 0);

    store.put("a", 4, 0, Provenance::ground_truth);
    q = select_queries(cands, 2, store, [](const std::string& s, std::size_t) { return s == "b"; });
    REQUIRE(q.queries.size() == 2);
    CHECK(q.queries[0].t == 2);
    CHECK(q.queries[1].t == 6);

    CHECK(select_queries(cands, 0, store).queries.empty());
    CHECK(select_queries(cands, 100, store).queries.size() == 5);
}

TEST_CASE("selected queries have margins no larger than any unselected candidate") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Candidate> cands;
        for (std::size_t t = 0; t < 40; ++t) cands.push_back({"s", t, u(rng), u(rng)});
        LabelStore store;
        const auto q = select_queries(cands, 7, store);
        REQUIRE(q.queries.size() == 7);
        double worst = 0.0;
        std::vector<std::size_t> chosen;
        for (const auto& x : q.queries) {
            worst = std::max(worst, x.margin);
            chosen.push_back(x.t);
        }
        for (const auto& c : cands) {
            if (std::find(chosen.begin(), chosen.end(), c.t) == chosen.end()) CHECK(margin(c.q0, c.q1) >= worst);
        }
    }
}

TEST_CASE("kernel weight") {
    Vector a(2), b(2);
    a << 0, 0;
    b << 3, 4;
    CHECK(kernel_weight(a, a, 0.3) == 1.0);
    CHECK(kernel_weight(a, b, 5.0) == doctest::Approx(std::exp(-0.5)));
    CHECK(kernel_weight(a, b, 1.0) == kernel_weight(b, a, 1.0));
    CHECK_THROWS_AS(kernel_weight(a, b, 0.0), InvalidSigma);
    CHECK_THROWS_AS(kernel_weight(a, b, -1.0), InvalidSigma);
    CHECK_THROWS_AS(kernel_weight(a, Vector::Zero(3), 1.0), ShapeError);
}

TEST_CASE("median pairwise distance") {
    Matrix p(3, 1);
    p << 0, 1, 3;
    CHECK(median_pairwise_distance(p) == 2.0);  // {1, 3, 2}
    Matrix q(4, 1);
    q << 0, 1, 3, 7;
    CHECK(median_pairwise_distance(q) == 3.5);  // {1, 2, 3, 4, 6, 7}
    CHECK(median_pairwise_distance(Matrix::Zero(1, 2)) == 1.0);
}

TEST_CASE("propagation converges to the harmonic solution") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix labeled(4, 2);
        labeled << random_points(2, 2, 0.0, rng), random_points(2, 2, 2.0, rng);
        const std::vector<int> labels{0, 0, 1, 1};
        Matrix unl(12, 2);
        unl << random_points(6, 2, 0.0, rng), random_points(6, 2, 2.0, rng);
        const double sigma = 0.8;
        const auto F = propagate_probabilities(labeled, labels, unl, sigma, 5000);
        const auto ref = oracle::harmonic_p1(rows(labeled), labels, rows(unl), sigma);
        for (Eigen::Index u = 0; u < 12; ++u) {
            CHECK(F(4 + u, 1) == doctest::Approx(ref[static_cast<std::size_t>(u)]).epsilon(1e-8));
            CHECK(F(4 + u, 0) + F(4 + u, 1) == doctest::Approx(1.0).epsilon(1e-12));
        }
        for (Eigen::Index l = 0; l < 4; ++l) CHECK(F(l, 1) == labels[static_cast<std::size_t>(l)]);
    }
}

TEST_CASE("propagation with zero iterations leaves unlabeled rows at one half") {
    Matrix labeled(2, 1), unl(3, 1);
    labeled << 0, 1;
    unl << 0.1, 0.5, 0.9;
    const auto F = propagate_probabilities(labeled, {0, 1}, unl, 1.0, 0);
    CHECK((F.bottomRows(3).array() == 0.5).all());
    CHECK_THROWS_AS(propagate_probabilities(labeled, {0, 1}, unl, 0.0, 3), InvalidSigma);
    CHECK_THROWS_AS(propagate_probabilities(labeled, {0}, unl, 1.0, 3), ShapeError);
    CHECK_THROWS_AS(propagate_probabilities(labeled, {0, 2}, unl, 1.0, 3), InvalidArgs);
}

TEST_CASE("pseudo labels obey theta, k_lp and ordering") {
    std::mt19937_64 rng(3);
    Matrix labeled(2, 1);
    labeled << -3, 3;
    Matrix unl(30, 1);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (Eigen::Index i = 0; i < 30; ++i) unl(i, 0) = u(rng);
    const PropagationOptions opt{1.0, 200, 5, 0.8};
    const auto pl = propagate(labeled, {0, 1}, unl, opt);
    CHECK(pl.size() <= 5);
    REQUIRE(!pl.empty());
    const auto F = propagate_probabilities(labeled, {0, 1}, unl, 1.0, 200);
    for (std::size_t k = 0; k < pl.size(); ++k) {
        CHECK(pl[k].confidence >= 0.8);
        if (k > 0) CHECK(pl[k - 1].confidence >= pl[k].confidence);
        const auto row = static_cast<Eigen::Index>(2 + pl[k].index);
        CHECK(pl[k].label == (F(row, 1) > F(row, 0) ? 1 : 0));
        CHECK(pl[k].label == (unl(static_cast<Eigen::Index>(pl[k].index), 0) > 0 ? 1 : 0));
    }
    auto none = opt;
    none.k_lp = 0;
    CHECK(propagate(labeled, {0, 1}, unl, none).empty());
    CHECK(propagate(labeled, {1, 1}, unl, opt).empty());
    auto all = opt;
    all.k_lp = 1000;
    all.theta = 0.0;
    CHECK(propagate(labeled, {0, 1}, unl, all).size() == 30);
}

TEST_CASE("an exact tie resolves to the normal class") {
    Matrix labeled(2, 1), unl(1, 1);
    labeled << -1, 1;
    unl << 0;
    const auto pl = propagate(labeled, {0, 1}, unl, {1.0, 50, 10, 0.5});
    REQUIRE(pl.size() == 1);
    CHECK(pl[0].label == 0);
    CHECK(pl[0].confidence == 0.5);
}

TEST_CASE("label store precedence") {
    LabelStore store;
    CHECK(store.put("s", 3, 1, Provenance::propagated, 0.9));
    CHECK(store.get("s", 3)->confidence == 0.9);
    CHECK(store.put("s", 3, 0, Provenance::ground_truth, 0.2));
    CHECK(store.get("s", 3)->confidence == 1.0);
    CHECK_FALSE(store.put("s", 3, 1, Provenance::propagated, 0.99));
    CHECK(store.get("s", 3)->label == 0);
    CHECK(store.put("s", 3, 1, Provenance::human));
    CHECK_FALSE(store.put("s", 3, 0, Provenance::ground_truth));
    CHECK(store.get("s", 3)->label == 1);
    CHECK(store.get("s", 3)->provenance == Provenance::human);
    CHECK(store.put("s", 3, 0, Provenance::human));
    CHECK(store.get("s", 3)->label == 0);

    CHECK_THROWS_AS(store.put("s", 4, 1, Provenance::propagated, 1.0), InvalidArgs);
    CHECK_THROWS_AS(store.put("s", 4, 2, Provenance::human), InvalidArgs);
    CHECK_FALSE(store.contains("s", 4));
}

TEST_CASE("label store snapshots, counts and persistence") {
    testing::TempDir dir;
    LabelStore store;
    store.put("b", 2, 1, Provenance::human);
    store.put("a", 9, 0, Provenance::ground_truth);
    store.put("a", 1, 1, Provenance::propagated, 0.95);
    CHECK(store.size() == 3);
    CHECK(store.count(Provenance::propagated) == 1);
    const auto a = store.snapshot("a");
    REQUIRE(a.size() == 2);
    CHECK(a[0].t == 1);
    CHECK(a[1].t == 9);
    store.save_jsonl(dir / "l.jsonl");
    LabelStore back;
    back.load_jsonl(dir / "l.jsonl");
    CHECK(back.size() == 3);
    CHECK(back.get("a", 1)->confidence == 0.95);
    CHECK(back.get("b", 2)->provenance == Provenance::human);
    CHECK_THROWS_AS(back.load_jsonl(dir / "none.jsonl"), MissingFile);
    dir.write("bad.jsonl", "{\"series\":\"a\",\"t\":1,\"label\":0,\"provenance\":\"human\",\"confidence\":1}\n{oops\n");
    try {
        LabelStore bad;
        bad.load_jsonl(dir / "bad.jsonl");
        FAIL("expected MalformedRow");
    } catch (const MalformedRow& e) {
        CHECK(e.line_no() == 2);
    }
}

TEST_CASE("ground truth oracle") {
    data::Series s;
    s.id = "x";
    s.values = Matrix::Zero(10, 1);
    s.labels = {0, 0, 1, 0, 0, 0, 0, 1, 0, 0};
    s.train_end = 10;
    GroundTruthOracle oracle({&s});
    LabelStore store;
    store.put("x", 7, 0, Provenance::human);
    QueryBatch batch;
    batch.queries = {{"x", 2, 0.0, {}}, {"x", 4, 0.1, {}}, {"x", 7, 0.2, {}}};
    const auto res = apply_oracle(batch, oracle, store);
    CHECK(res.delta.size() == 2);
    CHECK(store.get("x", 2)->label == 1);
    CHECK(store.get("x", 4)->label == 0);
    CHECK(store.get("x", 7)->label == 0);  // a human answer is never overwritten
    batch.queries = {{"y", 1, 0.0, {}}};
    CHECK_THROWS_AS(apply_oracle(batch, oracle, store), InvalidArgs);
}

TEST_CASE("query queue") {
    QueryQueue queue;
    LabelStore store;
    QueryBatch batch;
    batch.queries = {{"s", 5, 0.3, {}}, {"s", 1, 0.1, {}}};
    queue.publish(batch);
    queue.publish(batch);
    CHECK(queue.pending_count() == 2);
    CHECK(queue.pending()[0].t == 1);
    CHECK(queue.is_pending("s", 5));
    CHECK(queue.resolve("s", 5, 1, store) == QueryQueue::Resolution::labeled);
    CHECK(queue.resolve("s", 5, 1, store) == QueryQueue::Resolution::not_pending);
    CHECK(queue.resolve("s", 1, std::nullopt, store) == QueryQueue::Resolution::skipped);
    CHECK(store.get("s", 5)->provenance == Provenance::human);
    CHECK_FALSE(store.contains("s", 1));
    const auto answers = queue.drain_answers();
    REQUIRE(answers.size() == 1);
    CHECK(answers[0].label == 1);
    CHECK(queue.drain_answers().empty());
}

TEST_CASE("service oracle waits for answers or times out") {
    QueryQueue queue;
    LabelStore store;
    QueryBatch batch;
    batch.queries = {{"s", 4, 0.0, {}}};
    ServiceOracle quick(queue, std::chrono::milliseconds(20));
    const auto timed_out = apply_oracle(batch, quick, store);
    CHECK(timed_out.timed_out);
    CHECK(queue.is_pending("s", 4));

    ServiceOracle patient(queue, std::chrono::milliseconds(5000));
    std::thread human([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        queue.resolve("s", 4, 1, store);
    });
    const auto answered = apply_oracle(batch, patient, store);
    human.join();
    CHECK_FALSE(answered.timed_out);
    REQUIRE(answered.delta.size() == 1);
    CHECK(answered.delta[0].provenance == Provenance::human);
    CHECK(store.get("s", 4)->label == 1);
}

TEST_CASE("provenance names") {
    for (auto p : {Provenance::propagated, Provenance::ground_truth, Provenance::human}) {
        CHECK(provenance_from_string(to_string(p)) == p);
    }
    CHECK_THROWS_AS(provenance_from_string("robot"), InvalidArgs);
}
