#include "rlad/data.hpp"

#include "support/tempdir.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace rlad;
using testing::TempDir;

TEST_CASE("csv loader reads a small file") {
    TempDir dir;
    const auto p = dir.write("s.csv", "1,0.5,0\n2,0.7,0\n3,9.9,1");
    const auto s = data::load_csv_univariate(p, 2);
    CHECK(s.length() == 3);
    CHECK(s.dims() == 1);
    CHECK(s.labels == std::vector<int>{0, 0, 1});
    CHECK(s.values(2, 0) == doctest::Approx(9.9));
    CHECK(s.train_end == 3);
    CHECK(s.id == "s");
}

TEST_CASE("csv loader skips a header and sorts by timestamp") {
    TempDir dir;
    const auto p = dir.write("h.csv", "timestamp,value,is_anomaly\n3,3.0,1\n1,1.0,0\n2,2.0,0\n");
    const auto s = data::load_csv_univariate(p, 1);
    REQUIRE(s.length() == 3);
    CHECK(s.values(0, 0) == 1.0);
    CHECK(s.values(2, 0) == 3.0);
    CHECK(s.labels == std::vector<int>{0, 0, 1});
}

TEST_CASE("csv loader errors") {
    TempDir dir;
    CHECK_THROWS_AS(data::load_csv_univariate(dir / "missing.csv", 2), MissingFile);
    CHECK_THROWS_AS(data::load_csv_univariate(dir.write("e.csv", ""), 2), EmptySeries);
    CHECK_THROWS_AS(data::load_csv_univariate(dir.write("short.csv", "1,0.5,0\n"), 2), EmptySeries);
    const auto bad = dir.write("bad.csv", "1,0.5,0\n2,oops,0\n3,1.0,0\n");
    try {
        data::load_csv_univariate(bad, 2);
        FAIL("expected MalformedRow");
    } catch (const MalformedRow& e) {
        CHECK(e.line_no() == 2);
    }
    CHECK_THROWS_AS(data::load_csv_univariate(dir.write("two.csv", "1,0.5\n2,0.6\n"), 1), MalformedRow);
    CHECK_THROWS_AS(data::load_csv_univariate(dir.write("lab.csv", "1,0.5,2\n2,0.6,0\n"), 1), MalformedRow);
}

TEST_CASE("matrix loader") {
    TempDir dir;
    const auto d = dir.write("m.txt", "1 2\n3 4\n5 6\n7 8\n");
    const auto l = dir.write("l.txt", "0\n0\n1\n0\n");
    const auto s = data::load_matrix_multivariate(d, l, 2);
    CHECK(s.length() == 4);
    CHECK(s.dims() == 2);
    CHECK(s.values(3, 1) == 8.0);
    CHECK(s.labels == std::vector<int>{0, 0, 1, 0});

    const auto comma = dir.write("c.txt", "1,2\n3,4\n5,6\n7,8\n");
    CHECK(data::load_matrix_multivariate(comma, l, 2).values(1, 0) == 3.0);

    const auto longer = dir.write("l5.txt", "0\n0\n1\n0\n0\n");
    CHECK_THROWS_AS(data::load_matrix_multivariate(d, longer, 2), ShapeMismatch);
    const auto ragged = dir.write("r.txt", "1 2\n3\n5 6\n7 8\n");
    CHECK_THROWS_AS(data::load_matrix_multivariate(ragged, l, 2), MalformedRow);
}

TEST_CASE("smd directory concatenates train and test") {
    TempDir dir;
    dir.write("train/m1.txt", "0 0\n1 1\n2 2\n");
    dir.write("test/m1.txt", "3 3\n4 4\n");
    dir.write("test_label/m1.txt", "0\n1\n");
    const auto all = data::load_smd_directory(dir.path(), 2);
    REQUIRE(all.size() == 1);
    CHECK(all[0].length() == 5);
    CHECK(all[0].train_end == 3);
    CHECK(all[0].labels == std::vector<int>{0, 0, 0, 0, 1});
    CHECK_THROWS_AS(data::load_smd_directory(dir / "nope", 2), MissingFile);
}

TEST_CASE("csv directory and dataset stats") {
    TempDir dir;
    dir.write("a.csv", "1,0,0\n2,0,1\n3,0,0\n4,0,0\n");
    dir.write("b.csv", "1,0,0\n2,0,0\n3,0,0\n4,0,0\n");
    const auto all = data::load_csv_directory(dir.path(), 2);
    REQUIRE(all.size() == 2);
    CHECK(all[0].id == "a");
    const auto stats = data::dataset_stats(all);
    CHECK(stats.n_series == 2);
    CHECK(stats.dims == 1);
    CHECK(stats.anomaly_rate == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("normalize") {
    data::Series s;
    s.id = "x";
    s.values = Matrix(2, 1);
    s.values << 1, 3;
    s.labels = {0, 1};
    s.train_end = 2;
    const auto n = data::normalize(s);
    CHECK(n.values(0, 0) == doctest::Approx(-1.0));
    CHECK(n.values(1, 0) == doctest::Approx(1.0));
    CHECK(n.labels == s.labels);

    s.values = Matrix::Zero(3, 1);
    s.labels = {0, 0, 0};
    s.train_end = 3;
    CHECK(data::normalize(s).values.isZero());
}

TEST_CASE("normalize uses train rows only and is idempotent") {
    auto s = data::apply_split(data::synth_spike_series(400, 3, 4, 11), 0.5);
    const auto n = data::normalize(s);
    for (Eigen::Index j = 0; j < 3; ++j) {
        const auto head = n.values.col(j).head(200);
        CHECK(head.mean() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(std::sqrt(head.array().square().mean()) == doctest::Approx(1.0));
    }
    const auto twice = data::normalize(n);
    CHECK((twice.values - n.values).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(n.labels == s.labels);
}

TEST_CASE("split") {
    auto s = data::synth_spike_series(101, 1, 2, 1);
    CHECK(data::apply_split(s, 0.5).train_end == 50);
    CHECK(data::apply_split(s, 1.0).train_end == 101);
    CHECK_THROWS_AS(data::apply_split(s, 0.0), InvalidArgs);
    const auto split = data::apply_split(s, 0.5);
    CHECK(split.in_train(49));
    CHECK_FALSE(split.in_train(50));
}

TEST_CASE("synthetic generator") {
    const auto a = data::synth_spike_series(500, 1, 5, 7);
    const auto b = data::synth_spike_series(500, 1, 5, 7);
    CHECK(a.values == b.values);
    CHECK(a.labels == b.labels);
    CHECK(std::accumulate(a.labels.begin(), a.labels.end(), 0) == 5);
    const auto c = data::synth_spike_series(500, 1, 5, 8);
    CHECK(a.values != c.values);
    CHECK_THROWS_AS(data::synth_spike_series(10, 1, 20, 1), InvalidArgs);
    CHECK_THROWS_AS(data::synth_spike_series(100, 0, 2, 1), InvalidArgs);
}

TEST_CASE("synthetic spikes clear six base standard deviations") {
    for (std::uint64_t seed : {1u, 7u, 42u}) {
        data::SynthDiagnostics diag;
        const auto s = data::synth_spike_series(800, 2, 10, seed, 25, &diag);
        for (std::size_t t = 0; t < s.length(); ++t) {
            if (!s.labels[t]) continue;
            CHECK(t >= 25);
            for (Eigen::Index j = 0; j < 2; ++j) {
                const double z = (s.values(static_cast<Eigen::Index>(t), j) - diag.base_mean(j)) / diag.base_std(j);
                CHECK(std::abs(z) >= 6.0);
            }
        }
    }
}

TEST_CASE("windows") {
    const auto s = data::synth_spike_series(60, 2, 2, 3);
    const std::size_t n = 25;
    const auto first = data::window_at(s, n - 1, n);
    CHECK(first.rows() == 25);
    CHECK(first.row(0) == s.values.row(0));
    const auto last = data::window_at(s, 59, n);
    CHECK(last.row(24) == s.values.row(59));
    for (std::size_t t = n - 1; t < 59; ++t) {
        const auto w0 = data::window_at(s, t, n);
        const auto w1 = data::window_at(s, t + 1, n);
        CHECK(w0.bottomRows(24) == w1.topRows(24));
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(w0.row(static_cast<Eigen::Index>(i)) == s.values.row(static_cast<Eigen::Index>(t - n + 1 + i)));
        }
    }
    CHECK_THROWS_AS(data::window_at(s, n - 2, n), OutOfRange);
    CHECK_THROWS_AS(data::window_at(s, 60, n), OutOfRange);
}

TEST_CASE("writers round trip") {
    TempDir dir;
    const auto s = data::synth_spike_series(120, 1, 3, 5);
    data::write_csv_univariate(s, dir / "s.csv");
    const auto back = data::load_csv_univariate(dir / "s.csv", 25);
    CHECK(back.labels == s.labels);
    CHECK((back.values - s.values).cwiseAbs().maxCoeff() == 0.0);

    const auto m = data::synth_spike_series(90, 3, 2, 5);
    CHECK_THROWS_AS(data::write_csv_univariate(m, dir / "m.csv"), InvalidArgs);
    data::write_matrix(m, dir / "m.txt", dir / "m_label.txt");
    const auto mb = data::load_matrix_multivariate(dir / "m.txt", dir / "m_label.txt", 25);
    CHECK(mb.labels == m.labels);
    CHECK((mb.values - m.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("validate") {
    auto s = data::synth_spike_series(40, 1, 1, 2);
    CHECK_NOTHROW(data::validate(s, 25));
    CHECK_THROWS_AS(data::validate(s, 41), EmptySeries);
    s.labels[3] = 2;
    CHECK_THROWS_AS(data::validate(s, 25), InvalidArgs);
}
