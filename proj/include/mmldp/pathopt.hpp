#pragma once

#include <vector>

#include "mmldp/chain.hpp"
#include "mmldp/path.hpp"
#include "mmldp/ratefn.hpp"

namespace mmldp {

/// Solves phi' = b_hat(pi, phi), phi(0) = 0 by classical RK4 on n cells.
PathGrid zero_cost_path(const RegimeModel& model, const Generator& q, double horizon, std::size_t cells);

struct PathOptOptions {
    int max_rounds = 200;
    double tolerance = 1e-9;        // stop once a round improves the objective by less
    double simplex_floor = 1e-8;    // kernels are kept in {rho_i >= floor}
    int phi_iterations = 50;        // damped Newton steps per round
    int kernel_iterations = 200;    // projected-gradient steps per cell and round
    unsigned threads = 1;           // workers for the per-cell kernel step (0 = all)
};

struct VariationalResult {
    PathGrid phi_star;
    KernelPath nu_star;
    RateBreakdown rate;
    bool converged = false;
    std::vector<double> objective_history;  // one entry per accepted iterate, starting with the initial guess
};

/// Block-coordinate descent on the discretized joint rate over paths with
/// phi(T) = target and interior kernels, started from the straight line and
/// the invariant kernel. The result is a local minimizer, hence an upper bound
/// on the infimum. Throws InfeasibleTarget if the starting point has infinite
/// cost and NoDescent if the path step cannot make progress.
VariationalResult most_likely_path(const RegimeModel& model, const Generator& q, double horizon, double target,
                                   std::size_t cells, const PathOptOptions& options = {});

/// Euclidean projection of y onto {x : x_i >= floor, sum x = 1}.
std::vector<double> project_to_simplex(std::vector<double> y, double floor = 0.0);

} // namespace mmldp
