#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rlad {

// Time-major storage: row t holds the d channels observed at step t, so a
// window flattens to n_steps * d contiguous values.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingFile : public Error {
public:
    using Error::Error;
};

class MalformedRow : public Error {
public:
    MalformedRow(std::size_t line_no, const std::string& what)
        : Error("malformed row at line " + std::to_string(line_no) + ": " + what),
          line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class EmptySeries : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class OutOfRange : public Error {
public:
    using Error::Error;
};

class InvalidArgs : public Error {
public:
    using Error::Error;
};

class EpisodeFinished : public Error {
public:
    using Error::Error;
};

class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

class NonFiniteOutput : public Error {
public:
    using Error::Error;
};

class InvalidSigma : public Error {
public:
    using Error::Error;
};

class LengthMismatch : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NetworkError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace rlad
