#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmldp/chain.hpp"
#include "mmldp/path.hpp"
#include "mmldp/ratefn.hpp"
#include "mmldp/rng.hpp"

namespace mmldp {

/// Model, generator and discretization shared by the simulation routines.
struct SdeSetup {
    RegimeModel model;
    Generator q;
    double epsilon = 0.1;
    double horizon = 1.0;
    double dt = 1e-3;
    double gamma = 0.0;       // extra noise sqrt(eps) gamma dW; 0 is the plain equation
    int initial_state = -1;   // -1: draw X_0 from the invariant distribution
};

/// M^eps on the uniform output grid (T / dt rounded up to whole cells).
struct DiffusionPath {
    PathGrid path;
    double epsilon = 0.0;
    double gamma = 0.0;
};

/// Number of output cells for a horizon and step: ceil(T / dt) up to rounding.
std::size_t grid_cells(double horizon, double dt);

/// Chain first (independent of B), then Euler-Maruyama on the union of the
/// dt grid and the jump times. Chain, B and W use the children "chain", "B"
/// and "W" of key, so paths with different gamma share B.
std::pair<DiffusionPath, ChainPath> simulate_mmsde(const SdeSetup& setup, StreamKey key);

/// sup |M - phi| over the union of both grids (both interpolated linearly).
/// GridMismatch when the horizons differ.
double rho_T_distance(const PathGrid& path, const PathGrid& phi);
inline double rho_T_distance(const DiffusionPath& path, const PathGrid& phi) { return rho_T_distance(path.path, phi); }

/// log of u(T, X_T)/u(0, X_0) exp(-int [d_s u + Q u / eps] / u ds), integrated
/// in closed form along the piecewise-constant path and the piecewise-linear tilt.
double chain_log_likelihood(const ChainPath& path, const TiltField& u, const Generator& q, double epsilon);
double chain_likelihood_weight(const ChainPath& path, const TiltField& u, const Generator& q, double epsilon);

enum class Estimator { Naive, Importance };
std::string estimator_name(Estimator e);

struct ProbEstimate {
    double p_hat = 0.0;
    double std_err = 0.0;
    std::size_t n_samples = 0;
    std::size_t hits = 0;  // samples with a nonzero contribution
    Estimator method = Estimator::Naive;
};

enum class BallKind {
    Joint,       // rho_T(M, phi) + d_T(nu^eps, nu) <= delta
    Occupation,  // d_T(nu^eps, nu) <= delta
};

struct Ball {
    PathGrid phi;
    KernelPath nu;
    double delta = 0.0;
    BallKind kind = BallKind::Joint;
};

struct McOptions {
    std::size_t samples = 10000;
    unsigned threads = 1;  // 0 = machine parallelism
};

ProbEstimate ball_probability_naive(const SdeSetup& setup, const Ball& ball, const McOptions& options, StreamKey key);

/// Samples under the chain tilted by the per-cell optimal u* of the ball's
/// kernel and Brownian increments shifted by h / sqrt(eps), h = (phi' - b_hat) / sigma_hat,
/// and reweights by the inverse likelihood ratio. SingularDiffusion if
/// sigma_hat vanishes on a cell while gamma == 0.
ProbEstimate ball_probability_is(const SdeSetup& setup, const Ball& ball, const McOptions& options, StreamKey key);

struct LdpRow {
    double epsilon = 0.0;
    double delta = 0.0;
    ProbEstimate estimate;
    double minus_eps_log_p = 0.0;
    double band_lo = 0.0;  // from the Wilson interval of p
    double band_hi = 0.0;
    bool zero_hits = false;
};

struct LdpCurve {
    std::vector<LdpRow> rows;
    double reference_rate = 0.0;  // L_T(phi, nu), or the occupation rate for occupation balls
};

/// One estimate per epsilon (strictly decreasing), row r drawing from key.child(r).
/// Rows without hits report the one-sided value -eps log(3 / n).
LdpCurve ldp_curve(const SdeSetup& setup, const Ball& ball, const std::vector<double>& epsilons,
                   Estimator estimator, const McOptions& options, StreamKey key);

/// Monte Carlo mean of the chain exponential martingale under the untilted chain.
ProbEstimate martingale_check(const Generator& q, const TiltField& u, double epsilon, double horizon,
                              const McOptions& options, StreamKey key, int initial_state = -1);

/// Step function lambda = levels[i] on (breaks[i-1], breaks[i]], breaks[-1] = 0, breaks[k] = T.
struct StepFunction {
    std::vector<double> breaks;  // interior breakpoints, increasing
    std::vector<double> levels;  // breaks.size() + 1 values
    double at(double t) const;
};

/// Monte Carlo mean of the product of the chain exponential martingale and
/// exp(N - <N>/2), N = eps^{-1/2} int lambda sigma(X, M) dB.
ProbEstimate martingale_product_check(const SdeSetup& setup, const TiltField& u, const StepFunction& lambda,
                                      const McOptions& options, StreamKey key);

struct GammaRow {
    double gamma = 0.0;
    ProbEstimate exceedance;  // P(rho_T(M^{eps,gamma}, M^eps) > eta)
};

/// Paths with and without the extra noise share chain and B; W is independent.
std::vector<GammaRow> gamma_closeness(const SdeSetup& setup, const std::vector<double>& gammas, double eta,
                                      const McOptions& options, StreamKey key);

/// Wilson score interval for a proportion with n_eff effective trials.
std::pair<double, double> wilson_interval(double p_hat, double n_eff, double z = 1.96);

} // namespace mmldp
