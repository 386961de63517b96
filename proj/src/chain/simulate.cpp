#include "mmldp/chain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmldp/error.hpp"

namespace mmldp {

namespace {

void check_simulation_inputs(const Generator& q, double epsilon, double horizon, int initial_state) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) fail(ErrorCode::InvalidArgument, "horizon must be positive");
    if (initial_state < 0 || initial_state >= q.states()) {
        fail(ErrorCode::InvalidArgument, "initial state " + std::to_string(initial_state) + " out of range");
    }
}

} // namespace

int ChainPath::state_at(double t) const {
    // state on [jump_times[k-1], jump_times[k]) is states[k-1]
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    const auto k = static_cast<std::size_t>(it - jump_times.begin());
    return k == 0 ? initial_state : states[k - 1];
}

TiltField::TiltField(std::vector<double> knots, std::vector<std::vector<double>> values)
    : knots_(std::move(knots)) {
    if (knots_.empty() || knots_.size() != values.size()) {
        fail(ErrorCode::InvalidArgument, "tilt field needs one value vector per knot");
    }
    states_ = static_cast<int>(values.front().size());
    if (states_ < 1) fail(ErrorCode::InvalidArgument, "tilt field has no states");
    for (std::size_t k = 0; k < knots_.size(); ++k) {
        if (!std::isfinite(knots_[k]) || (k > 0 && !(knots_[k] > knots_[k - 1]))) {
            fail(ErrorCode::InvalidArgument, "tilt knots must be finite and strictly increasing");
        }
        if (values[k].size() != static_cast<std::size_t>(states_)) {
            fail(ErrorCode::InvalidArgument, "tilt value vectors must share one dimension");
        }
        for (double v : values[k]) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                fail(ErrorCode::NonpositiveTilt, "tilt values must be finite and strictly positive");
            }
            values_.push_back(v);
        }
    }
}

TiltField TiltField::constant(std::vector<double> u) {
    return TiltField({0.0}, {std::move(u)});
}

TiltField TiltField::from_cell_values(double horizon, const std::vector<std::vector<double>>& cells) {
    if (cells.empty()) fail(ErrorCode::InvalidArgument, "no cell values");
    if (cells.size() == 1) return constant(cells.front());
    const double h = horizon / static_cast<double>(cells.size());
    std::vector<double> knots;
    std::vector<std::vector<double>> values;
    knots.reserve(cells.size() + 2);
    values.reserve(cells.size() + 2);
    knots.push_back(0.0);
    values.push_back(cells.front());
    for (std::size_t k = 0; k < cells.size(); ++k) {
        knots.push_back((static_cast<double>(k) + 0.5) * h);
        values.push_back(cells[k]);
    }
    knots.push_back(horizon);
    values.push_back(cells.back());
    return TiltField(std::move(knots), std::move(values));
}

double TiltField::at(double t, int i) const {
    if (knots_.size() == 1 || t <= knots_.front()) return value(0, i);
    if (t >= knots_.back()) return value(knots_.size() - 1, i);
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    const auto k = static_cast<std::size_t>(it - knots_.begin()) - 1;
    const double w = (t - knots_[k]) / (knots_[k + 1] - knots_[k]);
    return (1.0 - w) * value(k, i) + w * value(k + 1, i);
}

std::vector<double> TiltField::at(double t) const {
    std::vector<double> out(static_cast<std::size_t>(states_));
    for (int i = 0; i < states_; ++i) out[static_cast<std::size_t>(i)] = at(t, i);
    return out;
}

double TiltField::min_value() const { return *std::min_element(values_.begin(), values_.end()); }

ChainPath simulate_chain(const Generator& q, double epsilon, double horizon, int initial_state, Rng& rng) {
    check_simulation_inputs(q, epsilon, horizon, initial_state);
    const int d = q.states();
    ChainPath path;
    path.initial_state = initial_state;
    path.horizon = horizon;

    int state = initial_state;
    double t = 0.0;
    for (;;) {
        const double exit = q.exit_rate(state);
        t += rng.exponential(exit / epsilon);
        if (t > horizon) break;
        double target = rng.uniform() * exit;
        int next = state;
        for (int j = 0; j < d; ++j) {
            if (j == state) continue;
            next = j;
            target -= q.rate(state, j);
            if (target < 0.0) break;
        }
        path.jump_times.push_back(t);
        path.states.push_back(next);
        state = next;
    }
    return path;
}

namespace {

// -Q(u)(t)_ii = sum_{j != i} Q_ij u_j(t) / u_i(t)
double tilted_exit_rate(const Generator& q, std::span<const double> u, int i) {
    double s = 0.0;
    for (int j = 0; j < q.states(); ++j) {
        if (j != i) s += q.rate(i, j) * u[static_cast<std::size_t>(j)];
    }
    return s / u[static_cast<std::size_t>(i)];
}

} // namespace

ChainPath simulate_tilted_chain(const Generator& q, const TiltField& u, double epsilon, double horizon,
                                int initial_state, Rng& rng, ThinningStats* stats) {
    check_simulation_inputs(q, epsilon, horizon, initial_state);
    if (u.states() != q.states()) fail(ErrorCode::InvalidArgument, "tilt dimension does not match generator");
    if (!(u.min_value() > 0.0)) fail(ErrorCode::NonpositiveTilt, "tilt must be strictly positive");
    const int d = q.states();

    // Between knots each tilted exit rate is a ratio of linear functions of t,
    // hence monotone; the sup over [0, T] is attained at 0, T or a knot.
    double bound = 0.0;
    auto update_bound = [&](double t) {
        const std::vector<double> ut = u.at(t);
        for (int i = 0; i < d; ++i) bound = std::max(bound, tilted_exit_rate(q, ut, i));
    };
    update_bound(0.0);
    update_bound(horizon);
    for (double k : u.knots()) {
        if (k > 0.0 && k < horizon) update_bound(k);
    }
    const double lambda = bound / epsilon;

    ChainPath path;
    path.initial_state = initial_state;
    path.horizon = horizon;
    std::size_t proposals = 0;
    std::vector<double> ut(static_cast<std::size_t>(d));

    int state = initial_state;
    double t = 0.0;
    for (;;) {
        t += rng.exponential(lambda);
        if (t > horizon) break;
        ++proposals;
        for (int i = 0; i < d; ++i) ut[static_cast<std::size_t>(i)] = u.at(t, i);
        // accept j with probability Q(u)(t)_{state,j} / (epsilon * lambda)
        double target = rng.uniform() * bound * ut[static_cast<std::size_t>(state)];
        int next = -1;
        for (int j = 0; j < d; ++j) {
            if (j == state) continue;
            target -= q.rate(state, j) * ut[static_cast<std::size_t>(j)];
            if (target < 0.0) {
                next = j;
                break;
            }
        }
        if (next < 0) continue;
        path.jump_times.push_back(t);
        path.states.push_back(next);
        state = next;
    }
    if (stats != nullptr) {
        stats->rate_bound = lambda;
        stats->proposals = proposals;
    }
    return path;
}

} // namespace mmldp
