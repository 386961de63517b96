#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "mmldp/error.hpp"
#include "mmldp/parallel.hpp"
#include "mmldp/pathopt.hpp"

namespace mmldp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1/2 (s - b_hat)^2 / sigma_hat^2, with the same conventions as path_rate
double cell_path_cost(const RegimeModel& model, std::span<const double> rho, double slope, double mid,
                      const PathRateOptions& opts) {
    const MixedCoefficients c = mixed_coefficients(model, rho, mid);
    const double r = slope - c.drift;
    if (!std::isfinite(r) || !std::isfinite(c.variance)) return kInf;
    if (c.variance > 0.0) return 0.5 * r * r / c.variance;
    return std::abs(r) > opts.zero_variance_atol * (1.0 + std::abs(c.drift)) ? kInf : 0.0;
}

// b_hat(m) = beta0 + beta1 m, sigma_hat^2(m) = v0 + v1 m + v2 m^2 for a fixed kernel row
struct CellPoly {
    double beta0 = 0, beta1 = 0, v0 = 0, v1 = 0, v2 = 0;
};

CellPoly cell_poly(const RegimeModel& model, std::span<const double> rho) {
    CellPoly p;
    for (int i = 0; i < model.states(); ++i) {
        const Regime& g = model.regime(i);
        const double w = rho[static_cast<std::size_t>(i)];
        p.beta0 += w * g.drift0;
        p.beta1 += w * g.drift1;
        p.v0 += w * g.diffusion0 * g.diffusion0;
        p.v1 += w * 2.0 * g.diffusion0 * g.diffusion1;
        p.v2 += w * g.diffusion1 * g.diffusion1;
    }
    return p;
}

struct Tridiagonal {
    std::vector<double> diag;
    std::vector<double> off;  // off[k] couples unknowns k and k+1
};

// Solves (T + mu I) x = rhs by LDL^T; false if a pivot is not positive.
bool solve_spd(const Tridiagonal& t, double mu, const std::vector<double>& rhs, std::vector<double>& x) {
    const std::size_t n = rhs.size();
    std::vector<double> d(n), l(n, 0.0);
    x = rhs;
    for (std::size_t k = 0; k < n; ++k) {
        double pivot = t.diag[k] + mu;
        if (k > 0) pivot -= l[k - 1] * l[k - 1] * d[k - 1];
        if (!(pivot > 0.0) || !std::isfinite(pivot)) return false;
        d[k] = pivot;
        if (k + 1 < n) l[k] = t.off[k] / pivot;
    }
    for (std::size_t k = 1; k < n; ++k) x[k] -= l[k - 1] * x[k - 1];
    for (std::size_t k = 0; k < n; ++k) x[k] /= d[k];
    for (std::size_t k = n - 1; k-- > 0;) x[k] -= l[k] * x[k + 1];
    return true;
}

class Problem {
public:
    Problem(const RegimeModel& model, const Generator& q, double horizon, std::size_t cells,
            const PathOptOptions& options)
        : model_(model), q_(q), horizon_(horizon), cells_(cells), h_(horizon / static_cast<double>(cells)),
          options_(options) {}

    double path_cost(const std::vector<double>& phi, const std::vector<double>& nu) const {
        double total = 0.0;
        for (std::size_t k = 0; k < cells_; ++k) {
            const double c = cell_path_cost(model_, row(nu, k), slope(phi, k), mid(phi, k), rate_opts_);
            if (!std::isfinite(c)) return kInf;
            total += c * h_;
        }
        return total;
    }

    double occupation_cost(const std::vector<double>& nu) const {
        return tilde_rate(q_, KernelPath(horizon_, q_.states(), nu));
    }

    // Damped Newton on the interior nodes with nu fixed. Returns the new path cost.
    double phi_step(std::vector<double>& phi, const std::vector<double>& nu, double cost) const {
        const std::size_t m = cells_ - 1;
        if (m == 0) return cost;
        std::vector<double> grad(m), step(m), trial(phi.size());
        Tridiagonal hess{std::vector<double>(m), std::vector<double>(m > 0 ? m - 1 : 0)};
        for (int it = 0; it < options_.phi_iterations; ++it) {
            derivatives(phi, nu, grad, hess);
            double gnorm = 0.0, hscale = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                gnorm = std::max(gnorm, std::abs(grad[k]));
                hscale = std::max(hscale, std::abs(hess.diag[k]));
            }
            if (gnorm <= 1e-13 * std::max(1.0, hscale)) break;

            std::vector<double> rhs(m);
            for (std::size_t k = 0; k < m; ++k) rhs[k] = -grad[k];
            double mu = 0.0;
            while (!solve_spd(hess, mu, rhs, step)) {
                mu = mu == 0.0 ? 1e-10 * std::max(1.0, hscale) : mu * 10.0;
                if (mu > 1e20) fail(ErrorCode::NoDescent, "path Hessian could not be regularized");
            }
            double slope_dir = 0.0;
            for (std::size_t k = 0; k < m; ++k) slope_dir += grad[k] * step[k];

            double alpha = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 60; ++ls) {
                trial = phi;
                for (std::size_t k = 0; k < m; ++k) trial[k + 1] += alpha * step[k];
                const double c = path_cost(trial, nu);
                if (c < cost && c <= cost + 1e-4 * alpha * slope_dir) {
                    phi.swap(trial);
                    cost = c;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) {
                // no representable decrease left; fail only if far from stationary
                if (gnorm > 1e-6 * std::max(1.0, cost)) {
                    fail(ErrorCode::NoDescent, "line search failed in the path step");
                }
                break;
            }
            if (-slope_dir <= 1e-24 * std::max(1.0, cost)) break;
        }
        return cost;
    }

    // Per-cell projected gradient on [1/2 r^2 / V + l(rho)] with phi fixed.
    void kernel_step(const std::vector<double>& phi, std::vector<double>& nu) const {
        parallel_for(cells_, options_.threads, [&](std::size_t k) {
            const std::size_t d = static_cast<std::size_t>(q_.states());
            std::vector<double> rho(nu.begin() + static_cast<std::ptrdiff_t>(k * d),
                                    nu.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
            optimize_cell(slope(phi, k), mid(phi, k), rho);
            std::copy(rho.begin(), rho.end(), nu.begin() + static_cast<std::ptrdiff_t>(k * d));
        });
    }

private:
    std::span<const double> row(const std::vector<double>& nu, std::size_t k) const {
        const auto d = static_cast<std::size_t>(q_.states());
        return {nu.data() + k * d, d};
    }
    double slope(const std::vector<double>& phi, std::size_t k) const { return (phi[k + 1] - phi[k]) / h_; }
    static double mid(const std::vector<double>& phi, std::size_t k) { return 0.5 * (phi[k] + phi[k + 1]); }

    void derivatives(const std::vector<double>& phi, const std::vector<double>& nu, std::vector<double>& grad,
                     Tridiagonal& hess) const {
        std::fill(grad.begin(), grad.end(), 0.0);
        std::fill(hess.diag.begin(), hess.diag.end(), 0.0);
        std::fill(hess.off.begin(), hess.off.end(), 0.0);
        for (std::size_t k = 0; k < cells_; ++k) {
            const CellPoly p = cell_poly(model_, row(nu, k));
            const double s = slope(phi, k), m = mid(phi, k);
            const double r = s - (p.beta0 + p.beta1 * m);
            const double v = p.v0 + p.v1 * m + p.v2 * m * m;
            const double dv = p.v1 + 2.0 * p.v2 * m;
            const double ddv = 2.0 * p.v2;
            if (!(v > 0.0)) continue;
            // derivatives of h * r^2 / (2 v) in (s, m)
            const double gs = h_ * r / v;
            const double gm = h_ * (-r * p.beta1 / v - 0.5 * r * r * dv / (v * v));
            const double gss = h_ / v;
            const double gsm = h_ * (-p.beta1 / v - r * dv / (v * v));
            const double gmm = h_ * (p.beta1 * p.beta1 / v + 2.0 * r * p.beta1 * dv / (v * v) -
                                     0.5 * r * r * ddv / (v * v) + r * r * dv * dv / (v * v * v));
            // (a, b) = (phi_k, phi_{k+1}); ds/da = -1/h, ds/db = 1/h, dm/da = dm/db = 1/2
            const double ja[2] = {-1.0 / h_, 0.5};
            const double jb[2] = {1.0 / h_, 0.5};
            auto quad = [&](const double* x, const double* y) {
                return x[0] * y[0] * gss + (x[0] * y[1] + x[1] * y[0]) * gsm + x[1] * y[1] * gmm;
            };
            const double ga = ja[0] * gs + ja[1] * gm;
            const double gb = jb[0] * gs + jb[1] * gm;
            // unknown index of node j is j - 1 (nodes 0 and n are fixed)
            if (k >= 1) {
                grad[k - 1] += ga;
                hess.diag[k - 1] += quad(ja, ja);
            }
            if (k + 1 <= cells_ - 1) {
                grad[k] += gb;
                hess.diag[k] += quad(jb, jb);
            }
            if (k >= 1 && k + 1 <= cells_ - 1) hess.off[k - 1] += quad(ja, jb);
        }
    }

    double cell_objective(double s, double m, const std::vector<double>& rho) const {
        const double path = cell_path_cost(model_, rho, s, m, rate_opts_);
        if (!std::isfinite(path)) return kInf;
        return path + dv_local(q_, SimplexPoint::from(rho)).value;
    }

    void optimize_cell(double s, double m, std::vector<double>& rho) const {
        const std::size_t d = rho.size();
        double value = cell_objective(s, m, rho);
        double step = 1.0;
        std::vector<double> grad(d), trial;
        for (int it = 0; it < options_.kernel_iterations; ++it) {
            const TiltSolution tilt = dv_local(q_, SimplexPoint::from(rho));
            const MixedCoefficients c = mixed_coefficients(model_, rho, m);
            const double r = s - c.drift;
            for (std::size_t i = 0; i < d; ++i) {
                const int ii = static_cast<int>(i);
                double qu = 0.0;
                for (std::size_t j = 0; j < d; ++j) qu += q_.rate(ii, static_cast<int>(j)) * tilt.u_star[j];
                const double sig = model_.diffusion(ii, m);
                double g = -qu / tilt.u_star[i];
                if (c.variance > 0.0) {
                    g += -r * model_.drift(ii, m) / c.variance - 0.5 * r * r * sig * sig / (c.variance * c.variance);
                }
                grad[i] = g;
            }
            bool accepted = false;
            double moved = 0.0;
            for (int ls = 0; ls < 50; ++ls) {
                std::vector<double> y(d);
                for (std::size_t i = 0; i < d; ++i) y[i] = rho[i] - step * grad[i];
                trial = project_to_simplex(std::move(y), options_.simplex_floor);
                double dir = 0.0;
                moved = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    dir += grad[i] * (trial[i] - rho[i]);
                    moved = std::max(moved, std::abs(trial[i] - rho[i]));
                }
                if (moved == 0.0) break;
                const double tv = cell_objective(s, m, trial);
                if (tv < value && tv <= value + 1e-4 * dir) {
                    rho.swap(trial);
                    value = tv;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted || moved <= 1e-13) break;
            step *= 2.0;
        }
    }

    const RegimeModel& model_;
    const Generator& q_;
    double horizon_;
    std::size_t cells_;
    double h_;
    PathOptOptions options_;
    PathRateOptions rate_opts_{};
};

} // namespace

std::vector<double> project_to_simplex(std::vector<double> y, double floor) {
    const std::size_t d = y.size();
    if (d == 0) fail(ErrorCode::InvalidArgument, "cannot project an empty vector");
    const double mass = 1.0 - floor * static_cast<double>(d);
    if (!(floor >= 0.0) || !(mass > 0.0)) fail(ErrorCode::InvalidArgument, "simplex floor too large");
    std::vector<double> z(d);
    for (std::size_t i = 0; i < d; ++i) z[i] = y[i] - floor;
    std::vector<double> sorted = z;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumulative = 0.0, tau = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        cumulative += sorted[k];
        const double t = (cumulative - mass) / static_cast<double>(k + 1);
        if (sorted[k] - t > 0.0) tau = t;
    }
    for (std::size_t i = 0; i < d; ++i) y[i] = std::max(z[i] - tau, 0.0) + floor;
    return y;
}

PathGrid zero_cost_path(const RegimeModel& model, const Generator& q, double horizon, std::size_t cells) {
    if (model.states() != q.states()) fail(ErrorCode::InvalidArgument, "model and generator dimensions differ");
    if (cells == 0 || !(horizon > 0.0)) fail(ErrorCode::InvalidArgument, "need a positive horizon and cells");
    const SimplexPoint pi = invariant_distribution(q);
    auto f = [&](double x) { return mixed_coefficients(model, pi.weights(), x).drift; };
    const double h = horizon / static_cast<double>(cells);
    std::vector<double> v(cells + 1, 0.0);
    for (std::size_t k = 0; k < cells; ++k) {
        const double x = v[k];
        const double k1 = f(x);
        const double k2 = f(x + 0.5 * h * k1);
        const double k3 = f(x + 0.5 * h * k2);
        const double k4 = f(x + h * k3);
        v[k + 1] = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return PathGrid(horizon, std::move(v));
}

VariationalResult most_likely_path(const RegimeModel& model, const Generator& q, double horizon, double target,
                                   std::size_t cells, const PathOptOptions& options) {
    if (model.states() != q.states()) fail(ErrorCode::InvalidArgument, "model and generator dimensions differ");
    if (cells < 2) fail(ErrorCode::InvalidArgument, "need at least two cells");
    if (!(horizon > 0.0) || !std::isfinite(target)) fail(ErrorCode::InvalidArgument, "invalid horizon or target");

    const Problem problem(model, q, horizon, cells, options);
    const PathGrid line = PathGrid::straight_line(horizon, cells, target);
    std::vector<double> phi(line.values().begin(), line.values().end());

    const SimplexPoint pi = invariant_distribution(q);
    std::vector<double> pi_row = project_to_simplex({pi.weights().begin(), pi.weights().end()}, options.simplex_floor);
    std::vector<double> nu;
    nu.reserve(cells * pi_row.size());
    for (std::size_t k = 0; k < cells; ++k) nu.insert(nu.end(), pi_row.begin(), pi_row.end());

    double path_cost = problem.path_cost(phi, nu);
    if (!std::isfinite(path_cost)) {
        fail(ErrorCode::InfeasibleTarget, "target is not reachable at finite cost from the invariant kernel");
    }
    double objective = path_cost + problem.occupation_cost(nu);

    VariationalResult out{PathGrid(horizon, phi), KernelPath(horizon, q.states(), nu), {}, false, {objective}};
    for (int round = 0; round < options.max_rounds; ++round) {
        std::vector<double> next_phi = phi, next_nu = nu;
        problem.phi_step(next_phi, next_nu, problem.path_cost(next_phi, next_nu));
        problem.kernel_step(next_phi, next_nu);
        const double next = problem.path_cost(next_phi, next_nu) + problem.occupation_cost(next_nu);
        if (!(next < objective)) {
            out.converged = true;
            break;
        }
        const double gain = objective - next;
        phi.swap(next_phi);
        nu.swap(next_nu);
        objective = next;
        out.objective_history.push_back(objective);
        if (gain < options.tolerance) {
            out.converged = true;
            break;
        }
    }
    out.phi_star = PathGrid(horizon, phi);
    out.nu_star = KernelPath(horizon, q.states(), nu);
    out.rate = joint_rate(model, q, out.phi_star, out.nu_star);
    return out;
}

} // namespace mmldp
