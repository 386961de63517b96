#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "mmldp/rng.hpp"

namespace mmldp {

// States are 0-based throughout the library and in serialized files.

/// Validated transition-intensity matrix of an irreducible finite chain:
/// rows sum to zero, off-diagonal rates strictly positive.
class Generator {
public:
    /// Throws NonSquare, NonpositiveOffDiagonal or RowSumNonzero.
    static Generator validate(const Eigen::MatrixXd& rates);

    int states() const noexcept { return static_cast<int>(rates_.rows()); }
    double rate(int i, int j) const { return rates_(i, j); }
    double exit_rate(int i) const { return -rates_(i, i); }
    /// -sum_i Q_ii, the uniform upper bound of the local occupation rate.
    double total_exit_rate() const { return -rates_.diagonal().sum(); }
    const Eigen::MatrixXd& rates() const noexcept { return rates_; }

    friend bool operator==(const Generator& a, const Generator& b) { return a.rates_ == b.rates_; }

private:
    explicit Generator(Eigen::MatrixXd rates) : rates_(std::move(rates)) {}

    Eigen::MatrixXd rates_;
};

inline Generator validate_generator(const Eigen::MatrixXd& rates) { return Generator::validate(rates); }

/// Probability vector: nonnegative entries summing to one within 1e-12.
class SimplexPoint {
public:
    static constexpr double kSumTolerance = 1e-12;

    /// Throws InvalidArgument when the entries do not form a probability vector.
    static SimplexPoint from(std::vector<double> weights);
    /// Rescales nonnegative weights with positive sum onto the simplex.
    static SimplexPoint normalized(std::vector<double> weights);
    static SimplexPoint uniform(int states);
    static SimplexPoint vertex(int states, int index);

    int size() const noexcept { return static_cast<int>(weights_.size()); }
    double operator[](int i) const { return weights_[static_cast<std::size_t>(i)]; }
    std::span<const double> weights() const noexcept { return weights_; }
    double min() const;

    friend bool operator==(const SimplexPoint&, const SimplexPoint&) = default;

private:
    explicit SimplexPoint(std::vector<double> w) : weights_(std::move(w)) {}

    std::vector<double> weights_;
};

/// Solves pi Q = 0, sum pi = 1. Residual |pi Q|_inf is checked against 1e-10
/// (scaled by the rate magnitude); SingularSystem otherwise.
SimplexPoint invariant_distribution(const Generator& q);

/// Piecewise-constant trajectory on [0, horizon].
struct ChainPath {
    int initial_state = 0;
    std::vector<double> jump_times;
    std::vector<int> states;  // state entered at each jump
    double horizon = 0.0;

    std::size_t jump_count() const noexcept { return jump_times.size(); }
    int final_state() const noexcept { return states.empty() ? initial_state : states.back(); }
    int state_at(double t) const;

    /// Calls f(state, start, end) for every holding interval, in time order.
    template <class F>
    void for_each_interval(F&& f) const {
        double start = 0.0;
        int state = initial_state;
        for (std::size_t k = 0; k < jump_times.size(); ++k) {
            f(state, start, jump_times[k]);
            start = jump_times[k];
            state = states[k];
        }
        if (start < horizon) f(state, start, horizon);
    }
};

/// Time-indexed positive vector u(t, i), linear in t between knots and
/// constant outside them.
class TiltField {
public:
    /// knots strictly increasing; values[k] is the d-vector at knots[k].
    /// Throws NonpositiveTilt if any entry is <= 0.
    TiltField(std::vector<double> knots, std::vector<std::vector<double>> values);

    static TiltField constant(std::vector<double> u);
    /// Piecewise-linear interpolation of cell values placed at cell midpoints,
    /// extended flat to 0 and to the horizon.
    static TiltField from_cell_values(double horizon, const std::vector<std::vector<double>>& cells);

    int states() const noexcept { return states_; }
    std::size_t knot_count() const noexcept { return knots_.size(); }
    double knot(std::size_t k) const { return knots_[k]; }
    std::span<const double> knots() const noexcept { return knots_; }
    double value(std::size_t k, int i) const { return values_[k * static_cast<std::size_t>(states_) + static_cast<std::size_t>(i)]; }
    double at(double t, int i) const;
    std::vector<double> at(double t) const;
    double min_value() const;
    bool is_constant() const noexcept { return knots_.size() == 1; }

private:
    std::vector<double> knots_;
    std::vector<double> values_;  // row-major knots x states
    int states_ = 0;
};

/// Exact simulation of the chain with generator Q / epsilon: exponential
/// holding times with rate -Q_ii/epsilon, jump i->j with probability Q_ij/(-Q_ii).
ChainPath simulate_chain(const Generator& q, double epsilon, double horizon, int initial_state, Rng& rng);

struct ThinningStats {
    double rate_bound = 0.0;     // Lambda
    std::size_t proposals = 0;   // candidate epochs drawn before the horizon
};

/// Time-inhomogeneous chain with generator Q(u)(t)/epsilon, simulated by
/// thinning a Poisson process of rate sup_t max_i (-Q(u)(t)_ii)/epsilon.
ChainPath simulate_tilted_chain(const Generator& q, const TiltField& u, double epsilon, double horizon,
                                int initial_state, Rng& rng, ThinningStats* stats = nullptr);

/// Piecewise-constant kernel on a uniform grid of `cells` cells over [0, T].
class KernelPath {
public:
    /// weights is row-major cells x states; each row must be a simplex point.
    KernelPath(double horizon, int states, std::vector<double> weights);

    static KernelPath constant(const SimplexPoint& rho, double horizon, std::size_t cells);

    std::size_t cells() const noexcept { return cells_; }
    int states() const noexcept { return states_; }
    double horizon() const noexcept { return horizon_; }
    double cell_width() const noexcept { return horizon_ / static_cast<double>(cells_); }
    double node_time(std::size_t k) const { return horizon_ * static_cast<double>(k) / static_cast<double>(cells_); }

    double weight(std::size_t cell, int i) const { return weights_[cell * stride() + static_cast<std::size_t>(i)]; }
    std::span<const double> row(std::size_t cell) const { return {weights_.data() + cell * stride(), stride()}; }
    SimplexPoint kernel(std::size_t cell) const;
    /// nu(t_k, i) = integral of the kernel up to grid node k.
    double cumulative(std::size_t node, int i) const { return cumulative_[node * stride() + static_cast<std::size_t>(i)]; }
    /// nu(t, i) at any t in [0, T] (linear inside a cell).
    double cumulative_at(double t, int i) const;
    std::span<const double> weights() const noexcept { return weights_; }
    double min_weight() const;

    friend bool operator==(const KernelPath& a, const KernelPath& b) {
        return a.horizon_ == b.horizon_ && a.states_ == b.states_ && a.weights_ == b.weights_;
    }

private:
    std::size_t stride() const noexcept { return static_cast<std::size_t>(states_); }

    double horizon_;
    int states_;
    std::size_t cells_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
};

/// Occupation kernel of a trajectory: time spent in each state per cell / cell width.
KernelPath occupation_of(const ChainPath& path, std::size_t cells, int states);
/// As above, with the state count inferred from the states the path visits.
KernelPath occupation_of(const ChainPath& path, std::size_t cells);

/// sup_{t, i} |nu_mu(t, i) - nu_nu(t, i)|. Both cumulative paths are piecewise
/// linear, so the sup over the merged node set is the exact continuous-time
/// sup. GridMismatch when horizons or state counts differ.
double d_T_distance(const KernelPath& mu, const KernelPath& nu);

/// Exact d_T between the occupation measure of a trajectory and a kernel path.
double occupation_distance(const ChainPath& path, const KernelPath& nu);

/// Positivity floor K -> (K + eta) / (1 + eta d).
KernelPath floor_kernel(const KernelPath& nu, double eta);

/// Floor, then convolve with the bump J_eta sampled on the cell grid
/// (renormalized to unit mass), with constant extension beyond [0, T].
KernelPath mollify(const KernelPath& nu, double eta);

} // namespace mmldp
