#pragma once

#include "rlad/common.hpp"
#include "rlad/data.hpp"

#include <functional>
#include <optional>
#include <utility>

namespace rlad::env {

/// Raw window plus the candidate action as an extra constant column.
struct WindowState {
    Matrix window;    // n_steps x d
    int action_flag;  // 0 or 1

    /// n_steps x (d + 1), flag in the last column.
    Matrix augmented() const;
    /// Row-major flattening of augmented(); n_steps * (d + 1) entries.
    Vector flattened() const;
};

std::pair<WindowState, WindowState> make_states(const Matrix& window);

/// Confusion-matrix reward: TP +5, TN +1, FP -1, FN -5.
double reward_r1(int action, int label);

struct StepOutcome {
    std::size_t t = 0;
    int action = 0;
    std::optional<int> label;  // absent when the label source does not know t
    double r1 = 0.0;           // 0 when the label is absent
    bool done = false;
};

/// Label lookup used to score actions. The default reads series ground truth.
using LabelSource = std::function<std::optional<int>(std::size_t t)>;

/// One pass over the decided indices [n_steps - 1, end) of a series.
class Environment {
public:
    /// end == 0 means the end of the train split.
    Environment(const data::Series& series, std::size_t n_steps, LabelSource labels = {},
                std::size_t end = 0);

    std::size_t first_step() const { return first_; }
    std::size_t end() const { return end_; }
    std::size_t decision_count() const { return end_ - first_; }
    std::size_t current_t() const { return t_; }
    bool done() const { return done_; }

    Matrix current_window() const;
    /// Successor window of the current step; the final step's successor is
    /// the final window itself (absorbing terminal state).
    Matrix next_window() const;

    StepOutcome step(int action);
    void reset();

private:
    const data::Series* series_;
    std::size_t n_steps_;
    LabelSource labels_;
    std::size_t first_;
    std::size_t end_;
    std::size_t t_;
    bool done_ = false;
};

}  // namespace rlad::env
