#include <algorithm>
#include <cmath>
#include <limits>

#include "integrator.hpp"
#include "mmldp/error.hpp"
#include "mmldp/parallel.hpp"
#include "stats.hpp"

namespace mmldp {

std::string estimator_name(Estimator e) { return e == Estimator::Naive ? "naive" : "is"; }

namespace {

void check_inputs(const SdeSetup& setup, const Ball& ball) {
    if (setup.model.states() != setup.q.states()) fail(ErrorCode::InvalidArgument, "model and generator dimensions differ");
    if (!(setup.epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
    if (!(ball.delta >= 0.0)) fail(ErrorCode::InvalidArgument, "delta must be nonnegative");
    if (ball.nu.states() != setup.q.states()) fail(ErrorCode::GridMismatch, "kernel dimension does not match the generator");
    const double tol = 1e-12 * std::max(1.0, setup.horizon);
    if (std::abs(ball.nu.horizon() - setup.horizon) > tol || std::abs(ball.phi.horizon() - setup.horizon) > tol) {
        fail(ErrorCode::GridMismatch, "ball center and simulation horizon differ");
    }
}

std::vector<double> node_times(const PathGrid& phi) {
    std::vector<double> t(phi.cells() + 1);
    for (std::size_t k = 0; k <= phi.cells(); ++k) t[k] = phi.node_time(k);
    return t;
}

} // namespace

ProbEstimate ball_probability_naive(const SdeSetup& setup, const Ball& ball, const McOptions& options, StreamKey key) {
    check_inputs(setup, ball);
    const std::size_t cells = grid_cells(setup.horizon, setup.dt);
    const auto pi_cumulative = detail::cumulative_invariant(setup.q);
    std::vector<double> hit(options.samples, 0.0);
    parallel_for(options.samples, options.threads, [&](std::size_t n) {
        const StreamKey sample = key.child(n);
        const int x0 = detail::initial_state(setup.initial_state, pi_cumulative, sample);
        Rng chain_rng = sample.child("chain").rng();
        const ChainPath chain = simulate_chain(setup.q, setup.epsilon, setup.horizon, x0, chain_rng);
        double distance = occupation_distance(chain, ball.nu);
        if (distance > ball.delta) return;
        if (ball.kind == BallKind::Joint) {
            Rng b_rng = sample.child("B").rng();
            Rng w_rng = sample.child("W").rng();
            auto run = detail::integrate(setup, chain, cells, {}, detail::NoiseShift{}, b_rng, w_rng,
                                         [](double, int, double, double, double) {});
            distance += rho_T_distance(PathGrid(setup.horizon, std::move(run.values)), ball.phi);
        }
        hit[n] = distance <= ball.delta ? 1.0 : 0.0;
    });
    return detail::binomial_estimate(hit);
}

ProbEstimate ball_probability_is(const SdeSetup& setup, const Ball& ball, const McOptions& options, StreamKey key) {
    check_inputs(setup, ball);
    const std::size_t cells = grid_cells(setup.horizon, setup.dt);
    const auto pi_cumulative = detail::cumulative_invariant(setup.q);

    // chain tilt: optimal u* of each kernel cell, interpolated between cell midpoints
    std::vector<std::vector<double>> u_cells(ball.nu.cells());
    for (std::size_t k = 0; k < ball.nu.cells(); ++k) {
        const bool repeat = k > 0 && std::equal(ball.nu.row(k).begin(), ball.nu.row(k).end(), ball.nu.row(k - 1).begin());
        u_cells[k] = repeat ? u_cells[k - 1] : dv_local(setup.q, ball.nu.kernel(k)).u_star;
    }
    const TiltField tilt = TiltField::from_cell_values(setup.horizon, u_cells);

    // Brownian tilt h = (phi' - b_hat) / sigma_hat per cell of phi
    detail::NoiseShift shift;
    std::vector<double> breaks;
    if (ball.kind == BallKind::Joint) {
        if (ball.phi.cells() != ball.nu.cells()) fail(ErrorCode::GridMismatch, "path and kernel grids differ");
        const double root = std::sqrt(setup.epsilon);
        shift.cells = ball.phi.cells();
        shift.c_b.assign(shift.cells, 0.0);
        shift.c_w.assign(shift.cells, 0.0);
        for (std::size_t k = 0; k < shift.cells; ++k) {
            const MixedCoefficients c = mixed_coefficients(setup.model, ball.nu.row(k), ball.phi.midpoint(k));
            const double r = ball.phi.slope(k) - c.drift;
            if (c.variance > 0.0) {
                shift.c_b[k] = r / (std::sqrt(c.variance) * root);
            } else if (setup.gamma > 0.0) {
                shift.c_w[k] = r / (setup.gamma * root);
            } else {
                fail(ErrorCode::SingularDiffusion,
                     "mixed diffusion vanishes on cell " + std::to_string(k) + "; use gamma > 0");
            }
        }
        breaks = node_times(ball.phi);
    }

    std::vector<double> weight(options.samples, 0.0);
    parallel_for(options.samples, options.threads, [&](std::size_t n) {
        const StreamKey sample = key.child(n);
        const int x0 = detail::initial_state(setup.initial_state, pi_cumulative, sample);
        Rng chain_rng = sample.child("chain").rng();
        const ChainPath chain = simulate_tilted_chain(setup.q, tilt, setup.epsilon, setup.horizon, x0, chain_rng);
        double distance = occupation_distance(chain, ball.nu);
        if (distance > ball.delta) return;
        double log_w = -chain_log_likelihood(chain, tilt, setup.q, setup.epsilon);
        if (ball.kind == BallKind::Joint) {
            Rng b_rng = sample.child("B").rng();
            Rng w_rng = sample.child("W").rng();
            auto run = detail::integrate(setup, chain, cells, breaks, shift, b_rng, w_rng,
                                         [](double, int, double, double, double) {});
            log_w += run.log_girsanov;
            distance += rho_T_distance(PathGrid(setup.horizon, std::move(run.values)), ball.phi);
        }
        if (distance <= ball.delta) weight[n] = std::exp(log_w);
    });
    return detail::mean_estimate(weight, Estimator::Importance);
}

std::pair<double, double> wilson_interval(double p_hat, double n_eff, double z) {
    if (!(n_eff > 0.0)) return {0.0, 1.0};
    const double p = std::clamp(p_hat, 0.0, 1.0);
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n_eff;
    const double center = (p + z2 / (2.0 * n_eff)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n_eff + z2 / (4.0 * n_eff * n_eff)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

LdpCurve ldp_curve(const SdeSetup& setup, const Ball& ball, const std::vector<double>& epsilons, Estimator estimator,
                   const McOptions& options, StreamKey key) {
    if (epsilons.empty()) fail(ErrorCode::InvalidArgument, "epsilon list is empty");
    for (std::size_t r = 0; r < epsilons.size(); ++r) {
        if (!(epsilons[r] > 0.0)) fail(ErrorCode::InvalidArgument, "epsilons must be positive");
        if (r > 0 && !(epsilons[r] < epsilons[r - 1])) fail(ErrorCode::InvalidArgument, "epsilons must be strictly decreasing");
    }
    LdpCurve curve;
    curve.reference_rate = ball.kind == BallKind::Joint ? joint_rate(setup.model, setup.q, ball.phi, ball.nu).joint
                                                        : tilde_rate(setup.q, ball.nu);
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < epsilons.size(); ++r) {
        SdeSetup s = setup;
        s.epsilon = epsilons[r];
        LdpRow row;
        row.epsilon = s.epsilon;
        row.delta = ball.delta;
        row.estimate = estimator == Estimator::Naive ? ball_probability_naive(s, ball, options, key.child(r))
                                                     : ball_probability_is(s, ball, options, key.child(r));
        const double n = static_cast<double>(row.estimate.n_samples);
        const double p = row.estimate.p_hat;
        if (row.estimate.hits == 0 || !(p > 0.0)) {
            row.zero_hits = true;
            row.minus_eps_log_p = -s.epsilon * std::log(3.0 / n);
            row.band_lo = row.minus_eps_log_p;
            row.band_hi = inf;
        } else {
            row.minus_eps_log_p = -s.epsilon * std::log(p);
            double n_eff = n;
            if (estimator == Estimator::Importance && row.estimate.std_err > 0.0 && p < 1.0) {
                n_eff = p * (1.0 - p) / (row.estimate.std_err * row.estimate.std_err);
            }
            const auto [lo, hi] = wilson_interval(p, n_eff);
            row.band_lo = -s.epsilon * std::log(hi);
            row.band_hi = lo > 0.0 ? -s.epsilon * std::log(lo) : inf;
        }
        curve.rows.push_back(row);
    }
    return curve;
}

std::vector<GammaRow> gamma_closeness(const SdeSetup& setup, const std::vector<double>& gammas, double eta,
                                      const McOptions& options, StreamKey key) {
    for (double g : gammas) {
        if (!(g >= 0.0)) fail(ErrorCode::InvalidArgument, "gamma values must be nonnegative");
    }
    const std::size_t cells = grid_cells(setup.horizon, setup.dt);
    const auto pi_cumulative = detail::cumulative_invariant(setup.q);
    std::vector<std::vector<double>> exceed(gammas.size(), std::vector<double>(options.samples, 0.0));
    parallel_for(options.samples, options.threads, [&](std::size_t n) {
        const StreamKey sample = key.child(n);
        const int x0 = detail::initial_state(setup.initial_state, pi_cumulative, sample);
        Rng chain_rng = sample.child("chain").rng();
        const ChainPath chain = simulate_chain(setup.q, setup.epsilon, setup.horizon, x0, chain_rng);
        auto path_with = [&](double gamma) {
            SdeSetup s = setup;
            s.gamma = gamma;
            Rng b_rng = sample.child("B").rng();
            Rng w_rng = sample.child("W").rng();
            return PathGrid(s.horizon, detail::integrate(s, chain, cells, {}, detail::NoiseShift{}, b_rng, w_rng,
                                                         [](double, int, double, double, double) {})
                                           .values);
        };
        const PathGrid base = path_with(0.0);
        for (std::size_t g = 0; g < gammas.size(); ++g) {
            exceed[g][n] = rho_T_distance(path_with(gammas[g]), base) > eta ? 1.0 : 0.0;
        }
    });
    std::vector<GammaRow> rows;
    for (std::size_t g = 0; g < gammas.size(); ++g) rows.push_back({gammas[g], detail::binomial_estimate(exceed[g])});
    return rows;
}

} // namespace mmldp
