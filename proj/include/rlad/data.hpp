#pragma once

#include "rlad/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rlad::data {

/// One time series with per-step ground truth.
///
/// Rows [0, train_end) form the train split and rows [train_end, T) the test
/// split. Loaders produce train_end == T; apply_split() moves the boundary.
struct Series {
    std::string id;
    Matrix values;            // T x d
    std::vector<int> labels;  // T entries in {0,1}
    std::size_t train_end = 0;

    std::size_t length() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t dims() const { return static_cast<std::size_t>(values.cols()); }
    bool in_train(std::size_t t) const { return t < train_end; }
};

struct DatasetStats {
    std::size_t n_series = 0;
    std::size_t dims = 0;
    double anomaly_rate = 0.0;
};

/// Throws InvalidArgs when a Series violates its invariants.
void validate(const Series& series, std::size_t n_steps);

/// Yahoo-A1 style rows: timestamp,value,is_anomaly. A header row is detected
/// and skipped. Rows are sorted by timestamp.
Series load_csv_univariate(const std::filesystem::path& path, std::size_t n_steps);

/// SMD-style matrix (comma or whitespace delimited, one row per step) plus a
/// label file with one {0,1} per line.
Series load_matrix_multivariate(const std::filesystem::path& data_path,
                                const std::filesystem::path& label_path, std::size_t n_steps);

/// Every *.csv in a directory, sorted by file name.
std::vector<Series> load_csv_directory(const std::filesystem::path& dir, std::size_t n_steps);

/// SMD layout: train/<m>.txt (all normal), test/<m>.txt, test_label/<m>.txt.
/// Train and test are concatenated and train_end marks the boundary.
std::vector<Series> load_smd_directory(const std::filesystem::path& dir, std::size_t n_steps);

DatasetStats dataset_stats(const std::vector<Series>& series);

/// Temporal split: the first floor(fraction * T) rows become train.
Series apply_split(Series series, double train_fraction);

/// Per-dimension z-score fitted on the train split (population std).
/// Zero-variance dimensions become all zeros. Labels are untouched.
Series normalize(const Series& series);

/// Sine plus small Gaussian noise with additive spikes at n_anomalies distinct
/// labeled positions in [min_position, T). Each spike leaves its sample at
/// least 6 base-signal standard deviations from the base-signal mean.
Series synth_spike_series(std::size_t T, std::size_t d, std::size_t n_anomalies,
                          std::uint64_t seed, std::size_t min_position = 25);

/// Standard deviation of the noiseless-plus-noise base signal used by the
/// generator, per dimension. Exposed for tests of the spike guarantee.
struct SynthDiagnostics {
    Vector base_mean;
    Vector base_std;
};
Series synth_spike_series(std::size_t T, std::size_t d, std::size_t n_anomalies,
                          std::uint64_t seed, std::size_t min_position,
                          SynthDiagnostics* diagnostics);

/// Rows values[t - n_steps + 1 .. t]. Throws OutOfRange unless
/// n_steps - 1 <= t < T.
Matrix window_at(const Series& series, std::size_t t, std::size_t n_steps);

/// Writes timestamp,value,is_anomaly rows; throws InvalidArgs when d != 1.
void write_csv_univariate(const Series& series, const std::filesystem::path& path);
void write_matrix(const Series& series, const std::filesystem::path& data_path,
                  const std::filesystem::path& label_path);

}  // namespace rlad::data
