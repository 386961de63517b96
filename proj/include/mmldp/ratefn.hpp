#pragma once

#include <span>
#include <vector>

#include "mmldp/chain.hpp"
#include "mmldp/path.hpp"

namespace mmldp {

/// Affine coefficients of one regime: b(x) = drift0 + drift1 x,
/// sigma(x) = diffusion0 + diffusion1 x.
struct Regime {
    double drift0 = 0.0;
    double drift1 = 0.0;
    double diffusion0 = 0.0;
    double diffusion1 = 0.0;

    friend bool operator==(const Regime&, const Regime&) = default;
};

class RegimeModel {
public:
    /// Rejects non-finite coefficients and models whose diffusion vanishes
    /// identically in every regime.
    explicit RegimeModel(std::vector<Regime> regimes);

    int states() const noexcept { return static_cast<int>(regimes_.size()); }
    const Regime& regime(int i) const { return regimes_[static_cast<std::size_t>(i)]; }
    const std::vector<Regime>& regimes() const noexcept { return regimes_; }
    double drift(int i, double x) const { return regime(i).drift0 + regime(i).drift1 * x; }
    double diffusion(int i, double x) const { return regime(i).diffusion0 + regime(i).diffusion1 * x; }
    /// Common Lipschitz / linear-growth constant: the largest coefficient magnitude.
    double lipschitz_constant() const;

    friend bool operator==(const RegimeModel&, const RegimeModel&) = default;

private:
    std::vector<Regime> regimes_;
};

struct TiltSolution {
    std::vector<double> u_star;  // u_star[0] == 1
    double value = 0.0;          // local rate l(rho)
    double gradient_norm = 0.0;
    int iterations = 0;
};

struct DvOptions {
    double gradient_tolerance = 1e-12;
    int max_iterations = 200;
    double boundary_clamp = 1e-10;
};

/// Local Donsker-Varadhan rate
///   l(rho) = -inf_{u > 0} sum_i (Q u)_i / u_i rho_i
/// by Newton's method in the log-ratio coordinates x_k = log(u_k / u_0).
TiltSolution dv_local(const Generator& q, const SimplexPoint& rho, const DvOptions& options = {});

/// Reduced objective sum_{i != j} Q_ij rho_i exp(y_j - y_i), y = (0, x).
double dv_reduced_objective(const Generator& q, std::span<const double> rho, std::span<const double> x);
std::vector<double> dv_reduced_gradient(const Generator& q, std::span<const double> rho, std::span<const double> x);

/// Q(u)_ij = Q_ij u_j / u_i, rows completed to sum to zero.
Generator tilted_generator(const Generator& q, std::span<const double> u);

/// |rho^T Q(u*)|_inf for the optimal tilt of rho; rho must be strictly positive.
double invariant_of_tilt(const Generator& q, const SimplexPoint& rho);

/// Occupation rate: sum over cells of l(K(t_k)) * dt.
double tilde_rate(const Generator& q, const KernelPath& nu);

struct MixedCoefficients {
    double drift = 0.0;     // b_hat
    double variance = 0.0;  // sigma_hat^2
};

MixedCoefficients mixed_coefficients(const RegimeModel& model, std::span<const double> rho, double x);

struct PathRateOptions {
    /// Cells with sigma_hat^2 == 0 cost nothing when |phi' - b_hat| <= atol (1 + |b_hat|).
    double zero_variance_atol = 1e-9;
};

/// Path rate 1/2 int (phi' - b_hat)^2 / sigma_hat^2 with forward-difference
/// slopes and coefficients evaluated at the cell midpoint of phi. Returns
/// +inf for n/0 cells or non-finite input; GridMismatch if the grids differ.
double path_rate(const RegimeModel& model, const PathGrid& phi, const KernelPath& nu,
                 const PathRateOptions& options = {});

struct RateBreakdown {
    double path_rate = 0.0;
    double occupation_rate = 0.0;
    double joint = 0.0;
};

RateBreakdown joint_rate(const RegimeModel& model, const Generator& q, const PathGrid& phi, const KernelPath& nu,
                         const PathRateOptions& options = {});

} // namespace mmldp
