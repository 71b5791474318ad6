#pragma once

// Independent reference implementations used to check the library. Nothing
// here calls into rlad numerics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// Tabular MDPs

struct Mdp {
    int states = 0;
    int actions = 0;
    // p[s][a][s2], r[s][a][s2]
    std::vector<std::vector<std::vector<double>>> p;
    std::vector<std::vector<std::vector<double>>> r;
};

inline Mdp random_mdp(int states, int actions, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_real_distribution<double> rew(-5.0, 5.0);
    Mdp m;
    m.states = states;
    m.actions = actions;
    m.p.assign(states, std::vector<std::vector<double>>(actions, std::vector<double>(states)));
    m.r = m.p;
    for (int s = 0; s < states; ++s) {
        for (int a = 0; a < actions; ++a) {
            double total = 0.0;
            for (int s2 = 0; s2 < states; ++s2) {
                m.p[s][a][s2] = u(rng);
                total += m.p[s][a][s2];
                m.r[s][a][s2] = rew(rng);
            }
            for (int s2 = 0; s2 < states; ++s2) m.p[s][a][s2] /= total;
        }
    }
    return m;
}

/// Q* by value iteration until the sup-norm change drops below tol. With a
/// potential, rewards become r + gamma * phi[s2] - phi[s].
inline std::vector<std::vector<double>> value_iteration(const Mdp& m, double gamma,
                                                        const std::vector<double>* phi = nullptr,
                                                        double tol = 1e-13, int max_iters = 100000) {
    std::vector<double> v(m.states, 0.0);
    std::vector<std::vector<double>> q(m.states, std::vector<double>(m.actions, 0.0));
    for (int it = 0; it < max_iters; ++it) {
        double delta = 0.0;
        for (int s = 0; s < m.states; ++s) {
            for (int a = 0; a < m.actions; ++a) {
                double acc = 0.0;
                for (int s2 = 0; s2 < m.states; ++s2) {
                    double reward = m.r[s][a][s2];
                    if (phi) reward += gamma * (*phi)[s2] - (*phi)[s];
                    acc += m.p[s][a][s2] * (reward + gamma * v[s2]);
                }
                q[s][a] = acc;
            }
        }
        for (int s = 0; s < m.states; ++s) {
            const double best = *std::max_element(q[s].begin(), q[s].end());
            delta = std::max(delta, std::abs(best - v[s]));
            v[s] = best;
        }
        if (delta < tol) break;
    }
    return q;
}

inline int argmax(const std::vector<double>& q) {
    return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

/// Smallest gap between the best and second-best action value in any state.
inline double min_action_gap(const std::vector<std::vector<double>>& q) {
    double gap = 1e300;
    for (const auto& row : q) {
        std::vector<double> sorted = row;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        if (sorted.size() > 1) gap = std::min(gap, sorted[0] - sorted[1]);
    }
    return gap;
}

// ---------------------------------------------------------------------------
// Harmonic label propagation by direct solve

/// Solves a dense square system with Gaussian elimination and partial pivoting.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        }
        if (std::abs(a[piv][col]) < 1e-300) throw std::runtime_error("singular system");
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t c = i + 1; c < n; ++c) acc -= a[i][c] * x[c];
        x[i] = acc / a[i][i];
    }
    return x;
}

/// Fixed point of clamped propagation on a Gaussian-kernel graph that
/// includes self-loops: for each unlabeled u,
///   (sum_j w_uj) f_u - sum_{v unlabeled} w_uv f_v = sum_{l labeled} w_ul y_l
/// Returns P(class 1) per unlabeled point.
inline std::vector<double> harmonic_p1(const std::vector<std::vector<double>>& labeled,
                                       const std::vector<int>& labels,
                                       const std::vector<std::vector<double>>& unlabeled, double sigma) {
    auto w = [sigma](const std::vector<double>& x, const std::vector<double>& y) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) d2 += (x[k] - y[k]) * (x[k] - y[k]);
        return std::exp(-d2 / (2.0 * sigma * sigma));
    };
    const std::size_t nu = unlabeled.size();
    std::vector<std::vector<double>> a(nu, std::vector<double>(nu, 0.0));
    std::vector<double> b(nu, 0.0);
    for (std::size_t u = 0; u < nu; ++u) {
        double degree = 0.0;
        for (std::size_t l = 0; l < labeled.size(); ++l) {
            const double wl = w(unlabeled[u], labeled[l]);
            degree += wl;
            b[u] += wl * labels[l];
        }
        for (std::size_t v = 0; v < nu; ++v) {
            const double wv = w(unlabeled[u], unlabeled[v]);
            degree += wv;
            a[u][v] -= wv;
        }
        a[u][u] += degree;
    }
    return solve_dense(a, b);
}

// ---------------------------------------------------------------------------
// Metrics

struct Counts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Counts naive_counts(const std::vector<int>& pred, const std::vector<int>& truth) {
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1 && truth[i] == 1) c.tp++;
        if (pred[i] == 1 && truth[i] == 0) c.fp++;
        if (pred[i] == 0 && truth[i] == 0) c.tn++;
        if (pred[i] == 0 && truth[i] == 1) c.fn++;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Gradients

/// Central differences of f with respect to every entry of m.
inline Eigen::MatrixXd numeric_gradient(Eigen::MatrixXd& m, const std::function<double()>& f, double h = 1e-5) {
    Eigen::MatrixXd g(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + h;
        const double up = f();
        m.data()[i] = keep - h;
        const double down = f();
        m.data()[i] = keep;
        g.data()[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// |a - b| / max(|a| + |b|, floor), maximised over entries.
inline double max_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor = 1e-6) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double x = a.data()[i], y = b.data()[i];
        worst = std::max(worst, std::abs(x - y) / std::max(std::abs(x) + std::abs(y), floor));
    }
    return worst;
}

}  // namespace oracle
