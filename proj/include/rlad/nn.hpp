#pragma once

#include "rlad/common.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace rlad::nn {

/// A trainable tensor with its gradient buffer.
struct Param {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;

    Param() = default;
    Param(std::string n, Eigen::Index rows, Eigen::Index cols)
        : name(std::move(n)), value(Eigen::MatrixXd::Zero(rows, cols)), grad(Eigen::MatrixXd::Zero(rows, cols)) {}
};

using ParamRefs = std::vector<Param*>;
using ConstParamRefs = std::vector<const Param*>;

inline void zero_grads(const ParamRefs& params) {
    for (auto* p : params) p->grad.setZero();
}

/// Glorot-uniform initialisation.
inline void init_glorot(Param& p, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = u(rng);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline bool all_finite(const ConstParamRefs& params) {
    for (const auto* p : params) {
        if (!p->value.allFinite()) return false;
    }
    return true;
}

/// Adam with bias correction. Moment buffers are created lazily on the
/// first step and matched to the parameter list by position.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const ParamRefs& params) {
        if (m_.empty()) {
            for (const auto* p : params) {
                m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
                v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& g = params[i]->grad;
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
            params[i]->value.array() -=
                lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
        }
    }

    double lr() const { return lr_; }
    long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Eigen::MatrixXd> m_, v_;
};

}  // namespace rlad::nn
