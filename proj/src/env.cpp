#include "rlad/env.hpp"

namespace rlad::env {

Matrix WindowState::augmented() const {
    Matrix out(window.rows(), window.cols() + 1);
    out.leftCols(window.cols()) = window;
    out.col(window.cols()).setConstant(static_cast<double>(action_flag));
    return out;
}

Vector WindowState::flattened() const {
    const Matrix a = augmented();
    return Eigen::Map<const Vector>(a.data(), a.size());
}

std::pair<WindowState, WindowState> make_states(const Matrix& window) {
    if (window.rows() == 0 || window.cols() == 0) throw ShapeError("window must be non-empty");
    return {WindowState{window, 0}, WindowState{window, 1}};
}

double reward_r1(int action, int label) {
    if (action == 1) return label == 1 ? 5.0 : -1.0;
    return label == 1 ? -5.0 : 1.0;
}

Environment::Environment(const data::Series& series, std::size_t n_steps, LabelSource labels,
                         std::size_t end)
    : series_(&series), n_steps_(n_steps), labels_(std::move(labels)) {
    if (n_steps == 0) throw InvalidArgs("n_steps must be positive");
    first_ = n_steps - 1;
    end_ = end == 0 ? series.train_end : end;
    if (end_ > series.length() || end_ <= first_) {
        throw EmptySeries("series '" + series.id + "' has no decided index in range");
    }
    if (!labels_) {
        labels_ = [s = series_](std::size_t t) -> std::optional<int> { return s->labels[t]; };
    }
    reset();
}

void Environment::reset() {
    t_ = first_;
    done_ = false;
}

Matrix Environment::current_window() const { return data::window_at(*series_, t_, n_steps_); }

Matrix Environment::next_window() const {
    const std::size_t next = t_ + 1 < end_ ? t_ + 1 : t_;
    return data::window_at(*series_, next, n_steps_);
}

StepOutcome Environment::step(int action) {
    if (done_) throw EpisodeFinished("episode over series '" + series_->id + "' already finished");
    StepOutcome out;
    out.t = t_;
    out.action = action;
    out.label = labels_(t_);
    out.r1 = out.label ? reward_r1(action, *out.label) : 0.0;
    out.done = t_ + 1 >= end_;
    if (out.done) {
        done_ = true;
    } else {
        ++t_;
    }
    return out;
}

}  // namespace rlad::env
