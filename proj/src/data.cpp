#include "rlad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

namespace rlad::data {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    const bool has_comma = line.find(',') != std::string_view::npos;
    std::size_t pos = 0;
    if (has_comma) {
        while (true) {
            const auto next = line.find(',', pos);
            out.push_back(trim(line.substr(pos, next - pos)));
            if (next == std::string_view::npos) break;
            pos = next + 1;
        }
    } else {
        while (pos < line.size()) {
            const auto start = line.find_first_not_of(" \t\r", pos);
            if (start == std::string_view::npos) break;
            auto stop = line.find_first_of(" \t\r", start);
            if (stop == std::string_view::npos) stop = line.size();
            out.push_back(line.substr(start, stop - start));
            pos = stop;
        }
    }
    return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw MissingFile("no such file: " + path.string());
    }
    std::ifstream in(path);
    if (!in) throw MissingFile("cannot open: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

int parse_label(std::string_view s, std::size_t line_no) {
    double v = 0.0;
    if (!parse_double(s, v) || (v != 0.0 && v != 1.0)) {
        throw MalformedRow(line_no, "label must be 0 or 1, got '" + std::string(s) + "'");
    }
    return static_cast<int>(v);
}

}  // namespace

void validate(const Series& series, std::size_t n_steps) {
    if (series.dims() < 1) throw InvalidArgs("series '" + series.id + "' has no dimensions");
    if (series.labels.size() != series.length()) {
        throw InvalidArgs("series '" + series.id + "' label count differs from length");
    }
    if (series.length() < n_steps) {
        throw EmptySeries("series '" + series.id + "' shorter than the window length");
    }
    for (int l : series.labels) {
        if (l != 0 && l != 1) throw InvalidArgs("series '" + series.id + "' has a non-binary label");
    }
    if (series.train_end > series.length()) {
        throw InvalidArgs("series '" + series.id + "' split point beyond its length");
    }
}

Series load_csv_univariate(const std::filesystem::path& path, std::size_t n_steps) {
    const auto lines = read_lines(path);
    struct Row {
        double ts;
        double value;
        int label;
    };
    std::vector<Row> rows;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = trim(lines[i]);
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        double ts = 0.0, value = 0.0;
        const bool numeric = fields.size() == 3 && parse_double(fields[0], ts) &&
                             parse_double(fields[1], value);
        if (!numeric) {
            if (rows.empty() && i == 0) continue;  // header
            throw MalformedRow(i + 1, "expected timestamp,value,is_anomaly");
        }
        rows.push_back({ts, value, parse_label(fields[2], i + 1)});
    }
    if (rows.size() < std::max<std::size_t>(n_steps, 1)) {
        throw EmptySeries("'" + path.string() + "' has " + std::to_string(rows.size()) +
                          " rows, fewer than the window length");
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.ts < b.ts; });

    Series s;
    s.id = path.stem().string();
    s.values.resize(static_cast<Eigen::Index>(rows.size()), 1);
    s.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        s.values(static_cast<Eigen::Index>(i), 0) = rows[i].value;
        s.labels[i] = rows[i].label;
    }
    s.train_end = s.length();
    return s;
}

Series load_matrix_multivariate(const std::filesystem::path& data_path,
                                const std::filesystem::path& label_path, std::size_t n_steps) {
    const auto data_lines = read_lines(data_path);
    const auto label_lines = read_lines(label_path);

    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < data_lines.size(); ++i) {
        const auto line = trim(data_lines[i]);
        if (line.empty()) continue;
        std::vector<double> row;
        for (auto f : split_fields(line)) {
            double v = 0.0;
            if (!parse_double(f, v)) throw MalformedRow(i + 1, "non-numeric field '" + std::string(f) + "'");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw MalformedRow(i + 1, "column count differs from first row");
        }
        rows.push_back(std::move(row));
    }
    std::vector<int> labels;
    for (std::size_t i = 0; i < label_lines.size(); ++i) {
        const auto line = trim(label_lines[i]);
        if (line.empty()) continue;
        labels.push_back(parse_label(line, i + 1));
    }
    if (labels.size() != rows.size()) {
        throw ShapeMismatch("data has " + std::to_string(rows.size()) + " rows but labels has " +
                            std::to_string(labels.size()));
    }
    if (rows.size() < std::max<std::size_t>(n_steps, 1)) {
        throw EmptySeries("'" + data_path.string() + "' shorter than the window length");
    }
    Series s;
    s.id = data_path.stem().string();
    s.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            s.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    s.labels = std::move(labels);
    s.train_end = s.length();
    return s;
}

std::vector<Series> load_csv_directory(const std::filesystem::path& dir, std::size_t n_steps) {
    if (!std::filesystem::is_directory(dir)) throw MissingFile("no such directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Series> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(load_csv_univariate(f, n_steps));
    return out;
}

std::vector<Series> load_smd_directory(const std::filesystem::path& dir, std::size_t n_steps) {
    const auto test_dir = dir / "test";
    const auto label_dir = dir / "test_label";
    const auto train_dir = dir / "train";
    if (!std::filesystem::is_directory(test_dir)) throw MissingFile("no such directory: " + test_dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(test_dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Series> out;
    for (const auto& f : files) {
        Series test = load_matrix_multivariate(f, label_dir / f.filename(), n_steps);
        const auto train_file = train_dir / f.filename();
        if (!std::filesystem::exists(train_file)) {
            test.train_end = 0;
            out.push_back(std::move(test));
            continue;
        }
        // The train file carries no labels; its rows are normal by construction.
        const auto train_lines = read_lines(train_file);
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < train_lines.size(); ++i) {
            const auto line = trim(train_lines[i]);
            if (line.empty()) continue;
            std::vector<double> row;
            for (auto field : split_fields(line)) {
                double v = 0.0;
                if (!parse_double(field, v)) throw MalformedRow(i + 1, "non-numeric field in " + train_file.string());
                row.push_back(v);
            }
            if (row.size() != test.dims()) throw ShapeMismatch("train/test column counts differ for " + f.filename().string());
            rows.push_back(std::move(row));
        }
        Series s;
        s.id = f.stem().string();
        const auto n_train = static_cast<Eigen::Index>(rows.size());
        s.values.resize(n_train + test.values.rows(), test.values.cols());
        for (Eigen::Index i = 0; i < n_train; ++i) {
            for (Eigen::Index j = 0; j < test.values.cols(); ++j) s.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        s.values.bottomRows(test.values.rows()) = test.values;
        s.labels.assign(rows.size(), 0);
        s.labels.insert(s.labels.end(), test.labels.begin(), test.labels.end());
        s.train_end = rows.size();
        out.push_back(std::move(s));
    }
    return out;
}

DatasetStats dataset_stats(const std::vector<Series>& series) {
    DatasetStats stats;
    stats.n_series = series.size();
    std::size_t total = 0, anomalies = 0;
    for (const auto& s : series) {
        stats.dims = std::max(stats.dims, s.dims());
        total += s.length();
        anomalies += static_cast<std::size_t>(std::accumulate(s.labels.begin(), s.labels.end(), 0));
    }
    stats.anomaly_rate = total == 0 ? 0.0 : static_cast<double>(anomalies) / static_cast<double>(total);
    return stats;
}

Series apply_split(Series series, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
        throw InvalidArgs("train fraction must lie in (0, 1]");
    }
    series.train_end = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(series.length())));
    return series;
}

Series normalize(const Series& series) {
    if (series.length() < 2) throw InvalidArgs("normalize needs at least two rows");
    Series out = series;
    // A series with no train rows (all-test) falls back to its own statistics.
    const auto fit_rows = static_cast<Eigen::Index>(series.train_end > 0 ? series.train_end : series.length());
    for (Eigen::Index j = 0; j < series.values.cols(); ++j) {
        const auto col = series.values.col(j).head(fit_rows);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().mean();
        const double sd = std::sqrt(var);
        if (sd == 0.0 || !std::isfinite(sd)) {
            out.values.col(j).setZero();
        } else {
            out.values.col(j) = (series.values.col(j).array() - mean) / sd;
        }
    }
    return out;
}

Series synth_spike_series(std::size_t T, std::size_t d, std::size_t n_anomalies, std::uint64_t seed,
                          std::size_t min_position) {
    return synth_spike_series(T, d, n_anomalies, seed, min_position, nullptr);
}

Series synth_spike_series(std::size_t T, std::size_t d, std::size_t n_anomalies, std::uint64_t seed,
                          std::size_t min_position, SynthDiagnostics* diagnostics) {
    if (d == 0) throw InvalidArgs("synthetic series needs d >= 1");
    if (min_position >= T || T - min_position < n_anomalies) {
        throw InvalidArgs("not enough positions for the requested anomalies");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr double kTwoPi = 6.283185307179586;

    Series s;
    s.id = "synth-" + std::to_string(seed);
    s.values.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) {
        const double period = 40.0 + 7.0 * static_cast<double>(j);
        const double phase = kTwoPi * unit(rng);
        for (std::size_t t = 0; t < T; ++t) {
            s.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                std::sin(kTwoPi * static_cast<double>(t) / period + phase) + noise(rng);
        }
    }
    const Vector mean = s.values.colwise().mean().transpose();
    Vector sd(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j) {
        sd(j) = std::sqrt((s.values.col(j).array() - mean(j)).square().mean());
    }
    if (diagnostics != nullptr) {
        diagnostics->base_mean = mean;
        diagnostics->base_std = sd;
    }

    std::vector<std::size_t> positions(T - min_position);
    std::iota(positions.begin(), positions.end(), min_position);
    for (std::size_t i = 0; i < n_anomalies; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, positions.size() - 1);
        std::swap(positions[i], positions[pick(rng)]);
    }
    positions.resize(n_anomalies);
    std::sort(positions.begin(), positions.end());

    s.labels.assign(T, 0);
    for (auto p : positions) {
        s.labels[p] = 1;
        const auto row = static_cast<Eigen::Index>(p);
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j) {
            const double offset = s.values(row, j) - mean(j);
            const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
            // |offset| absorbs the base value so the spike clears 6 sd whichever way it points.
            const double amplitude = (6.0 + 4.0 * unit(rng)) * sd(j) + std::abs(offset);
            s.values(row, j) += sign * amplitude;
        }
    }
    s.train_end = T;
    return s;
}

Matrix window_at(const Series& series, std::size_t t, std::size_t n_steps) {
    if (n_steps == 0 || t + 1 < n_steps || t >= series.length()) {
        throw OutOfRange("window end " + std::to_string(t) + " outside [" + std::to_string(n_steps - 1) +
                         ", " + std::to_string(series.length()) + ")");
    }
    return series.values.middleRows(static_cast<Eigen::Index>(t + 1 - n_steps),
                                    static_cast<Eigen::Index>(n_steps));
}

void write_csv_univariate(const Series& series, const std::filesystem::path& path) {
    if (series.dims() != 1) throw InvalidArgs("univariate CSV needs d == 1");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "timestamp,value,is_anomaly\n";
    for (std::size_t t = 0; t < series.length(); ++t) {
        out << t << ',' << series.values(static_cast<Eigen::Index>(t), 0) << ',' << series.labels[t] << '\n';
    }
}

void write_matrix(const Series& series, const std::filesystem::path& data_path,
                  const std::filesystem::path& label_path) {
    std::ofstream data(data_path);
    std::ofstream labels(label_path);
    if (!data || !labels) throw IoError("cannot write " + data_path.string());
    data.precision(17);
    for (std::size_t t = 0; t < series.length(); ++t) {
        for (std::size_t j = 0; j < series.dims(); ++j) {
            if (j) data << ',';
            data << series.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j));
        }
        data << '\n';
        labels << series.labels[t] << '\n';
    }
}

}  // namespace rlad::data
