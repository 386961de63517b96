#include <algorithm>
#include <cmath>

#include "integrator.hpp"
#include "mmldp/error.hpp"
#include "mmldp/parallel.hpp"
#include "stats.hpp"

namespace mmldp {

namespace {

// (x - log1p(x)) / x^2, with its Taylor series near 0
double log_remainder(double x) {
    if (std::abs(x) < 1e-3) return 0.5 + x * (-1.0 / 3 + x * (0.25 + x * (-0.2 + x / 6.0)));
    return (x - std::log1p(x)) / (x * x);
}

// int over [s0, s1] of u_j / u_i for linear u; a, a1 are u_j at the ends, c, c1 are u_i
double ratio_integral(double a, double a1, double c, double c1, double h) {
    return h * (a / c + (a1 * c - a * c1) / (c * c) * log_remainder((c1 - c) / c));
}

void check_tilt(const TiltField& u, const Generator& q) {
    if (u.states() != q.states()) fail(ErrorCode::InvalidArgument, "tilt dimension does not match the generator");
    if (!(u.min_value() > 0.0)) fail(ErrorCode::NonpositiveTilt, "tilt entries must be strictly positive");
}

} // namespace

double chain_log_likelihood(const ChainPath& path, const TiltField& u, const Generator& q, double epsilon) {
    check_tilt(u, q);
    if (!(epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
    const int d = q.states();
    // Telescoping the u(t, X_t) prefactor against int d_s log u leaves the
    // jump terms log(u_new / u_old) and -(1/eps) int sum_j Q_ij (u_j / u_i - 1).
    double jumps = 0.0;
    int state = path.initial_state;
    for (std::size_t k = 0; k < path.jump_count(); ++k) {
        const int next = path.states[k];
        jumps += std::log(u.at(path.jump_times[k], next) / u.at(path.jump_times[k], state));
        state = next;
    }
    double drift = 0.0;
    const auto knots = u.knots();
    std::vector<double> ua(static_cast<std::size_t>(d)), ub(static_cast<std::size_t>(d));
    path.for_each_interval([&](int i, double a, double b) {
        auto piece = [&](double s0, double s1) {
            if (!(s1 > s0)) return;
            const double h = s1 - s0;
            for (int j = 0; j < d; ++j) {
                ua[static_cast<std::size_t>(j)] = u.at(s0, j);
                ub[static_cast<std::size_t>(j)] = u.at(s1, j);
            }
            const double c = ua[static_cast<std::size_t>(i)], c1 = ub[static_cast<std::size_t>(i)];
            for (int j = 0; j < d; ++j) {
                if (j == i) continue;
                const double integral = ratio_integral(ua[static_cast<std::size_t>(j)], ub[static_cast<std::size_t>(j)], c, c1, h);
                drift += q.rate(i, j) * (integral - h);
            }
        };
        double start = a;
        auto it = std::upper_bound(knots.begin(), knots.end(), a);
        for (; it != knots.end() && *it < b; ++it) {
            piece(start, *it);
            start = *it;
        }
        piece(start, b);
    });
    return jumps - drift / epsilon;
}

double chain_likelihood_weight(const ChainPath& path, const TiltField& u, const Generator& q, double epsilon) {
    return std::exp(chain_log_likelihood(path, u, q, epsilon));
}

double StepFunction::at(double t) const {
    // lambda is left-continuous: level i on (breaks[i-1], breaks[i]]
    const auto it = std::lower_bound(breaks.begin(), breaks.end(), t);
    return levels[static_cast<std::size_t>(std::distance(breaks.begin(), it))];
}

ProbEstimate martingale_check(const Generator& q, const TiltField& u, double epsilon, double horizon,
                              const McOptions& options, StreamKey key, int initial_state) {
    check_tilt(u, q);
    if (initial_state >= q.states()) fail(ErrorCode::InvalidArgument, "initial state out of range");
    const auto pi_cumulative = detail::cumulative_invariant(q);
    std::vector<double> values(options.samples);
    parallel_for(options.samples, options.threads, [&](std::size_t n) {
        const StreamKey sample = key.child(n);
        const int x0 = detail::initial_state(initial_state, pi_cumulative, sample);
        Rng rng = sample.child("chain").rng();
        const ChainPath path = simulate_chain(q, epsilon, horizon, x0, rng);
        values[n] = chain_likelihood_weight(path, u, q, epsilon);
    });
    return detail::mean_estimate(values, Estimator::Naive);
}

ProbEstimate martingale_product_check(const SdeSetup& setup, const TiltField& u, const StepFunction& lambda,
                                      const McOptions& options, StreamKey key) {
    check_tilt(u, setup.q);
    if (lambda.levels.size() != lambda.breaks.size() + 1 || !std::is_sorted(lambda.breaks.begin(), lambda.breaks.end())) {
        fail(ErrorCode::InvalidArgument, "step function needs increasing breaks and one more level than breaks");
    }
    const std::size_t cells = grid_cells(setup.horizon, setup.dt);
    const auto pi_cumulative = detail::cumulative_invariant(setup.q);
    const double inv_root = 1.0 / std::sqrt(setup.epsilon);
    std::vector<double> values(options.samples);
    parallel_for(options.samples, options.threads, [&](std::size_t n) {
        const StreamKey sample = key.child(n);
        const int x0 = detail::initial_state(setup.initial_state, pi_cumulative, sample);
        Rng chain_rng = sample.child("chain").rng();
        const ChainPath chain = simulate_chain(setup.q, setup.epsilon, setup.horizon, x0, chain_rng);
        Rng b_rng = sample.child("B").rng();
        Rng w_rng = sample.child("W").rng();
        double log_n = 0.0;
        detail::integrate(setup, chain, cells, lambda.breaks, detail::NoiseShift{}, b_rng, w_rng,
                          [&](double t, int state, double m, double db, double dt) {
                              const double c = lambda.at(t + 0.5 * dt) * setup.model.diffusion(state, m) * inv_root;
                              log_n += c * db - 0.5 * c * c * dt;
                          });
        values[n] = std::exp(chain_log_likelihood(chain, u, setup.q, setup.epsilon) + log_n);
    });
    return detail::mean_estimate(values, Estimator::Naive);
}

} // namespace mmldp
