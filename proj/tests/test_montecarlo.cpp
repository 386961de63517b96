#include <doctest.h>

#include <cmath>
#include <random>

#include "mmldp/error.hpp"
#include "mmldp/montecarlo.hpp"
#include "mmldp/pathopt.hpp"

using namespace mmldp;

namespace {

Generator symmetric(double rate) {
    Eigen::MatrixXd m(2, 2);
    m << -rate, rate, rate, -rate;
    return validate_generator(m);
}

SdeSetup unit_noise(double eps) {
    return SdeSetup{RegimeModel({{0, 0, 1, 0}, {0, 0, 1, 0}}), symmetric(1.0), eps, 1.0, 1e-3, 0.0, -1};
}

double combined(const ProbEstimate& a, const ProbEstimate& b) {
    return std::sqrt(a.std_err * a.std_err + b.std_err * b.std_err);
}

// Independent evaluation of the chain exponential along a path: midpoint
// quadrature of (d_s u + Q u / eps) / u in the current state on each smooth
// piece, with d_s u by central differences of the interpolant.
double quadrature_log_weight(const ChainPath& path, const TiltField& u, const Generator& q, double eps) {
    const int d = q.states();
    double integral = 0.0;
    auto smooth_piece = [&](int i, double a, double b) {
        const int steps = 2000;
        const double h = (b - a) / steps;
        for (int s = 0; s < steps; ++s) {
            const double t = a + (s + 0.5) * h;
            const double ds = 1e-3 * h;
            const double du = (u.at(t + ds, i) - u.at(t - ds, i)) / (2 * ds);
            double qu = 0.0;
            for (int j = 0; j < d; ++j) qu += q.rate(i, j) * u.at(t, j);
            integral += (du + qu / eps) / u.at(t, i) * h;
        }
    };
    path.for_each_interval([&](int i, double a, double b) {
        double start = a;
        for (double knot : u.knots()) {
            if (knot > a && knot < b) {
                smooth_piece(i, start, knot);
                start = knot;
            }
        }
        smooth_piece(i, start, b);
    });
    return std::log(u.at(path.horizon, path.final_state()) / u.at(0.0, path.initial_state)) - integral;
}

} // namespace

TEST_CASE("grid_cells") {
    CHECK(grid_cells(1.0, 1e-3) == 1000);
    CHECK(grid_cells(1.0, 0.3) == 4);
    CHECK(grid_cells(2.0, 0.5) == 4);
    CHECK_THROWS_AS(grid_cells(1.0, 2.0), Error);
}

TEST_CASE("simulate_mmsde") {
    const StreamKey key(7);

    SUBCASE("noise vanishing at the origin keeps M at zero") {
        SdeSetup s{RegimeModel({{0, 0, 0, 1}, {0, 0, 0, 1}}), symmetric(1.0), 0.1, 1.0, 1e-3, 0.0, -1};
        const auto [m, x] = simulate_mmsde(s, key);
        for (double v : m.path.values()) CHECK(v == 0.0);
        CHECK(x.horizon == 1.0);
    }
    SUBCASE("deterministic drift") {
        // the chain runs at rate Q / eps, so scale Q down with eps
        SdeSetup s{RegimeModel({{1, 0, 1, 0}, {1, 0, 1, 0}}), symmetric(1e-14), 1e-14, 1.0, 1e-3, 0.0, -1};
        const auto [m, x] = simulate_mmsde(s, key);
        CHECK(std::abs(m.path.endpoint() - 1.0) <= 1e-5);
        CHECK(m.path.cells() == 1000);
    }
    SUBCASE("reproducible from the key") {
        const auto a = simulate_mmsde(unit_noise(0.1), key);
        const auto b = simulate_mmsde(unit_noise(0.1), key);
        CHECK(a.first.path == b.first.path);
        CHECK(a.second.jump_times == b.second.jump_times);
        const auto c = simulate_mmsde(unit_noise(0.1), key.child(1));
        CHECK(!(a.first.path == c.first.path));
    }
    SUBCASE("variance of the terminal value is eps T") {
        const SdeSetup s = unit_noise(0.1);
        const int runs = 10000;
        double sum = 0.0, sq = 0.0;
        for (int r = 0; r < runs; ++r) {
            const double v = simulate_mmsde(s, key.child(static_cast<std::uint64_t>(r))).first.path.endpoint();
            sum += v;
            sq += v * v;
        }
        const double mean = sum / runs;
        const double var = (sq - runs * mean * mean) / (runs - 1);
        CHECK(std::abs(var - 0.1) <= 0.05 * 0.1);
    }
    SUBCASE("regime switches are resolved at the jump times") {
        // drift +1 / -1 and negligible noise: M(T) = time in state 0 - time in state 1
        const SdeSetup slow{RegimeModel({{1, 0, 1e-4, 0}, {-1, 0, 1e-4, 0}}), symmetric(1e-13), 1e-13, 1.0, 0.1, 0.0, 0};
        for (std::uint64_t r = 0; r < 20; ++r) {
            const auto [mm, xx] = simulate_mmsde(slow, key.child(r));
            double expected = 0.0;
            xx.for_each_interval([&](int i, double a, double b) { expected += (i == 0 ? 1.0 : -1.0) * (b - a); });
            CHECK(std::abs(mm.path.endpoint() - expected) <= 1e-9);
        }
    }
}

TEST_CASE("rho_T_distance") {
    const auto line = PathGrid::straight_line(1.0, 100, 1.0);
    CHECK(rho_T_distance(line, line) == 0.0);
    CHECK(rho_T_distance(PathGrid::straight_line(1.0, 50, 0.0), line) == 1.0);
    CHECK_THROWS_AS(rho_T_distance(PathGrid::straight_line(2.0, 100, 1.0), line), Error);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 1.0);
    auto random_path = [&](std::size_t cells) {
        std::vector<double> v(cells + 1, 0.0);
        for (std::size_t k = 1; k <= cells; ++k) v[k] = v[k - 1] + 0.3 * z(rng);
        return PathGrid(1.0, v);
    };
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_path(10 + trial % 7);
        const auto b = random_path(20);
        const auto c = random_path(13 + trial % 3);
        CHECK(rho_T_distance(a, c) <= rho_T_distance(a, b) + rho_T_distance(b, c) + 1e-12);
        CHECK(rho_T_distance(a, b) == doctest::Approx(rho_T_distance(b, a)).epsilon(1e-12));
    }
}

TEST_CASE("chain likelihood weight") {
    const Generator q = symmetric(1.0);
    Rng rng(StreamKey(11));
    const ChainPath path = simulate_chain(q, 0.3, 1.0, 0, rng);
    CHECK(chain_likelihood_weight(path, TiltField::constant({1.0, 1.0}), q, 0.3) == 1.0);

    SUBCASE("single holding interval") {
        const ChainPath still{1, {}, {}, 2.0};
        const std::vector<double> u{1.0, 2.0};
        // (Q u)(1) = 1 * 1 - 1 * 2 = -1
        const double expected = std::exp(-2.0 * (-1.0) / (0.5 * 2.0));
        CHECK(chain_likelihood_weight(still, TiltField::constant(u), q, 0.5) == doctest::Approx(expected).epsilon(1e-14));
    }
    SUBCASE("closed form agrees with quadrature for time-varying tilts") {
        Eigen::MatrixXd m(3, 3);
        m << -1.5, 1, 0.5, 0.3, -0.8, 0.5, 2, 1, -3;
        const Generator q3 = validate_generator(m);
        const TiltField u({0.0, 0.3, 0.55, 1.0}, {{1.0, 0.5, 2.0}, {1.5, 0.7, 1.0}, {0.6, 1.2, 1.1}, {1.0, 1.0, 3.0}});
        for (std::uint64_t r = 0; r < 5; ++r) {
            Rng g(StreamKey(100 + r));
            const ChainPath p = simulate_chain(q3, 0.5, 1.0, static_cast<int>(r % 3), g);
            CHECK(chain_log_likelihood(p, u, q3, 0.5) == doctest::Approx(quadrature_log_weight(p, u, q3, 0.5)).epsilon(1e-6));
        }
    }
    CHECK_THROWS_AS(TiltField::constant({1.0, 0.0}), Error);
}

TEST_CASE("martingale checks") {
    const Generator q = symmetric(1.0);
    McOptions opts;
    opts.samples = 20000;

    const auto flat = martingale_check(q, TiltField::constant({1.0, 1.0}), 0.5, 1.0, opts, StreamKey(1));
    CHECK(flat.p_hat == 1.0);
    CHECK(flat.std_err == 0.0);

    const auto swap = martingale_check(q, TiltField::constant({1.0, 2.0}), 0.5, 1.0, opts, StreamKey(2));
    CHECK(std::abs(swap.p_hat - 1.0) <= 3.0 * swap.std_err);
    CHECK(swap.std_err > 0.0);

    const TiltField wave({0.0, 0.25, 0.5, 0.75, 1.0}, {{1, 1}, {1, 1.5}, {1.2, 1}, {1, 0.7}, {1, 1}});
    const auto moving = martingale_check(q, wave, 0.2, 1.0, opts, StreamKey(3));
    CHECK(std::abs(moving.p_hat - 1.0) <= 3.0 * moving.std_err);

    SdeSetup s{RegimeModel({{0, -1, 1, 0}, {0.5, 0, 0.5, 0.2}}), q, 0.2, 1.0, 1e-2, 0.0, -1};
    McOptions small;
    small.samples = 4000;
    const auto product =
        martingale_product_check(s, TiltField::constant({1.0, 1.5}), StepFunction{{0.5}, {0.3, -0.4}}, small, StreamKey(4));
    CHECK(product.p_hat <= 1.0 + 3.0 * product.std_err);
}

TEST_CASE("ball estimators") {
    McOptions opts;
    opts.samples = 4000;
    const SdeSetup s = unit_noise(0.1);
    const auto pi = KernelPath::constant(SimplexPoint::uniform(2), 1.0, 1000);

    SUBCASE("empty ball") {
        const Ball ball{PathGrid::straight_line(1.0, 1000, 1.0), pi, 0.0, BallKind::Joint};
        const auto est = ball_probability_naive(s, ball, opts, StreamKey(5));
        CHECK(est.p_hat == 0.0);
        CHECK(est.hits == 0);
    }
    SUBCASE("degenerate dynamics concentrate on the center") {
        SdeSetup quiet{RegimeModel({{0, 0, 0, 1}, {0, 0, 0, 1}}), symmetric(1.0), 1e-3, 1.0, 1e-2, 0.0, -1};
        const Ball ball{PathGrid::straight_line(1.0, 100, 0.0), KernelPath::constant(SimplexPoint::uniform(2), 1.0, 100),
                        0.1, BallKind::Joint};
        McOptions few;
        few.samples = 200;
        CHECK(ball_probability_naive(quiet, ball, few, StreamKey(6)).p_hat >= 0.95);
    }
    SUBCASE("importance sampling agrees with the naive estimator") {
        // p is about 3e-5 here, so the naive side needs many samples to see hits
        const Ball ball{PathGrid::straight_line(1.0, 1000, 1.0), pi, 0.25, BallKind::Joint};
        McOptions many;
        many.samples = 200000;
        const auto naive = ball_probability_naive(s, ball, many, StreamKey(8));
        const auto is = ball_probability_is(s, ball, opts, StreamKey(9));
        CHECK(naive.hits > 0);
        CHECK(is.method == Estimator::Importance);
        CHECK(std::abs(naive.p_hat - is.p_hat) <= 3.0 * combined(naive, is));
        CHECK(is.std_err < naive.std_err);
    }
    SUBCASE("zero tilt on the zero-cost path") {
        const SdeSetup drift{RegimeModel({{1, -1, 1, 0}, {0, -1, 0.5, 0}}), symmetric(1.0), 0.05, 1.0, 1e-2, 0.0, -1};
        const auto center = zero_cost_path(drift.model, drift.q, 1.0, 100);
        const Ball ball{center, KernelPath::constant(invariant_distribution(drift.q), 1.0, 100), 0.3, BallKind::Joint};
        McOptions few;
        few.samples = 1000;
        const auto naive = ball_probability_naive(drift, ball, few, StreamKey(10));
        const auto is = ball_probability_is(drift, ball, few, StreamKey(11));
        CHECK(std::abs(naive.p_hat - is.p_hat) <= 3.0 * combined(naive, is) + 1e-12);
        // weights are 1 up to the rounding in u* and h
        CHECK(is.p_hat <= static_cast<double>(is.hits) / 1000.0 * (1 + 1e-6));
        CHECK(is.p_hat >= static_cast<double>(is.hits) / 1000.0 * (1 - 1e-6));
    }
    SUBCASE("occupation-only ball") {
        const auto skew = KernelPath::constant(SimplexPoint::from({0.7, 0.3}), 1.0, 100);
        const Ball ball{PathGrid::straight_line(1.0, 100, 0.0), skew, 0.05, BallKind::Occupation};
        const SdeSetup fast = unit_noise(0.05);
        const auto naive = ball_probability_naive(fast, ball, opts, StreamKey(12));
        const auto is = ball_probability_is(fast, ball, opts, StreamKey(13));
        CHECK(naive.hits > 0);
        CHECK(std::abs(naive.p_hat - is.p_hat) <= 3.0 * combined(naive, is));
    }
    SUBCASE("singular diffusion needs regularization") {
        SdeSetup flat{RegimeModel({{0, 0, 0, 1}, {0, 0, 0, 1}}), symmetric(1.0), 0.1, 1.0, 1e-2, 0.0, -1};
        const Ball ball{PathGrid::straight_line(1.0, 100, 0.0), KernelPath::constant(SimplexPoint::uniform(2), 1.0, 100),
                        0.1, BallKind::Joint};
        try {
            ball_probability_is(flat, ball, opts, StreamKey(14));
            FAIL("expected SingularDiffusion");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::SingularDiffusion);
        }
        flat.gamma = 0.5;
        McOptions few;
        few.samples = 100;
        CHECK(ball_probability_is(flat, ball, few, StreamKey(14)).n_samples == 100);
    }
    SUBCASE("results do not depend on the worker count") {
        const Ball ball{PathGrid::straight_line(1.0, 1000, 1.0), pi, 0.3, BallKind::Joint};
        McOptions one, many;
        one.samples = many.samples = 300;
        one.threads = 1;
        many.threads = 4;
        const auto a = ball_probability_is(s, ball, one, StreamKey(15));
        const auto b = ball_probability_is(s, ball, many, StreamKey(15));
        CHECK(a.p_hat == b.p_hat);
        CHECK(a.std_err == b.std_err);
        CHECK(a.hits == b.hits);
    }
}

TEST_CASE("ldp_curve") {
    const SdeSetup s = unit_noise(0.2);
    const Ball ball{PathGrid::straight_line(1.0, 100, 1.0), KernelPath::constant(SimplexPoint::uniform(2), 1.0, 100),
                    0.0, BallKind::Joint};
    McOptions opts;
    opts.samples = 50;
    SdeSetup coarse = s;
    coarse.dt = 1e-2;
    const auto curve = ldp_curve(coarse, ball, {0.2, 0.1}, Estimator::Naive, opts, StreamKey(1));
    REQUIRE(curve.rows.size() == 2);
    CHECK(curve.reference_rate == doctest::Approx(0.5).epsilon(1e-9));
    for (const auto& row : curve.rows) {
        CHECK(row.zero_hits);
        CHECK(row.minus_eps_log_p == doctest::Approx(-row.epsilon * std::log(3.0 / 50.0)));
    }
    CHECK_THROWS_AS(ldp_curve(coarse, ball, {0.1, 0.2}, Estimator::Naive, opts, StreamKey(1)), Error);

    const auto [lo, hi] = wilson_interval(0.2, 100);
    CHECK(lo < 0.2);
    CHECK(hi > 0.2);
    CHECK(wilson_interval(0.0, 100).first == 0.0);
}

TEST_CASE("gamma_closeness") {
    SdeSetup s{RegimeModel({{0.5, -1, 1, 0}, {-0.5, -0.5, 0.5, 0.1}}), symmetric(1.0), 0.1, 1.0, 1e-2, 0.0, -1};
    McOptions opts;
    opts.samples = 1000;
    const auto rows = gamma_closeness(s, {0.2, 0.1, 0.05, 0.0}, 0.1, opts, StreamKey(2));
    REQUIRE(rows.size() == 4);
    CHECK(rows[3].exceedance.p_hat == 0.0);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        CHECK(rows[k].exceedance.p_hat <= rows[k - 1].exceedance.p_hat + 2.0 * combined(rows[k].exceedance, rows[k - 1].exceedance));
    }
}
