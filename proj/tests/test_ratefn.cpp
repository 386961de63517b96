#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "mmldp/error.hpp"
#include "mmldp/ratefn.hpp"
#include "oracles.hpp"

using namespace mmldp;

namespace {

Generator two_state(double q12, double q21) {
    Eigen::MatrixXd m(2, 2);
    m << -q12, q12, q21, -q21;
    return validate_generator(m);
}

RegimeModel model_of(std::vector<Regime> r) { return RegimeModel(std::move(r)); }

// smooth two-state kernel and smooth model used in the refinement checks
KernelPath smooth_kernel(std::size_t cells) {
    std::vector<double> w;
    const double h = 1.0 / static_cast<double>(cells);
    for (std::size_t k = 0; k < cells; ++k) {
        const double t = (static_cast<double>(k) + 0.5) * h;
        const double p = 0.2 + 0.6 * t * t;
        w.push_back(p);
        w.push_back(1.0 - p);
    }
    return KernelPath(1.0, 2, w);
}

} // namespace

TEST_CASE("dv_local reference values") {
    const Generator sym = two_state(1, 1);

    const auto at_pi = dv_local(sym, SimplexPoint::uniform(2));
    CHECK(at_pi.value <= 1e-12);
    CHECK(at_pi.u_star[0] == 1.0);
    CHECK(at_pi.u_star[1] == doctest::Approx(1.0).epsilon(1e-10));

    // (sqrt 0.9 - sqrt 0.1)^2 = 1 - 2 sqrt(0.09) = 0.4
    const auto skew = dv_local(sym, SimplexPoint::from({0.9, 0.1}));
    CHECK(std::abs(skew.value - 0.4) <= 1e-12);
    CHECK(std::abs(skew.u_star[1] - 1.0 / 3.0) <= 1e-10);
    CHECK(skew.gradient_norm <= 1e-10);

    const auto balanced = dv_local(two_state(2, 3), SimplexPoint::from({0.6, 0.4}));
    CHECK(balanced.value <= 1e-12);

    // boundary: value is the limit, tilt stays positive
    const auto corner = dv_local(sym, SimplexPoint::vertex(2, 0));
    CHECK(corner.value == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(corner.u_star[1] > 0.0);
}

TEST_CASE("dv_local matches the two-state closed form") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> rate(0.1, 5.0);
    for (int pair = 0; pair < 20; ++pair) {
        const double q12 = rate(rng), q21 = rate(rng);
        const Generator q = two_state(q12, q21);
        for (int k = 1; k <= 99; ++k) {
            const double p = k / 100.0;
            const auto sol = dv_local(q, SimplexPoint::from({p, 1.0 - p}));
            CHECK(std::abs(sol.value - oracle::local_rate_two_state(q12, q21, p)) <= 1e-8);
            CHECK(std::abs(sol.u_star[1] - oracle::optimal_ratio_two_state(q12, q21, p)) <=
                  1e-8 * oracle::optimal_ratio_two_state(q12, q21, p));
        }
    }
}

TEST_CASE("dv_local matches exhaustive search for three states") {
    std::mt19937_64 rng(314);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::MatrixXd m = oracle::random_generator(rng, 3);
        const auto rho = oracle::random_simplex(rng, 3, 0.02);
        const double expected = oracle::local_rate_three_state_search(m, Eigen::Vector3d(rho[0], rho[1], rho[2]));
        CHECK(std::abs(dv_local(validate_generator(m), SimplexPoint::from(rho)).value - expected) <= 1e-5);
    }
}

TEST_CASE("local rate bounds, zero set and convexity") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 40; ++trial) {
        const int d = 2 + trial % 5;
        const Generator q = validate_generator(oracle::random_generator(rng, d));
        const auto pi = invariant_distribution(q);
        CHECK(dv_local(q, pi).value <= 1e-10);
        for (int k = 0; k < 10; ++k) {
            const auto a = oracle::random_simplex(rng, d, 0.01);
            const auto b = oracle::random_simplex(rng, d, 0.01);
            const double la = dv_local(q, SimplexPoint::from(a)).value;
            const double lb = dv_local(q, SimplexPoint::from(b)).value;
            CHECK(la >= 0.0);
            CHECK(la <= q.total_exit_rate());
            double gap = 0.0;
            for (int i = 0; i < d; ++i) gap = std::max(gap, std::abs(a[static_cast<std::size_t>(i)] - pi[i]));
            if (gap > 0.05) CHECK(la >= 1e-6);

            const double lambda = std::uniform_real_distribution<double>(0.05, 0.95)(rng);
            std::vector<double> mix(static_cast<std::size_t>(d));
            for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = lambda * a[i] + (1 - lambda) * b[i];
            const double lm = dv_local(q, SimplexPoint::normalized(mix)).value;
            CHECK(lm <= lambda * la + (1 - lambda) * lb + 1e-8);
        }
    }
}

TEST_CASE("reduced gradient agrees with central differences") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int d = 2 + trial % 5;
        const Generator q = validate_generator(oracle::random_generator(rng, d));
        const auto rho = oracle::random_simplex(rng, d, 0.01);
        std::vector<double> x(static_cast<std::size_t>(d - 1));
        for (double& v : x) v = z(rng);
        const auto g = dv_reduced_gradient(q, rho, x);
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double h = 1e-5;
            auto xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            const double fd = (dv_reduced_objective(q, rho, xp) - dv_reduced_objective(q, rho, xm)) / (2 * h);
            CHECK(std::abs(fd - g[k]) <= 1e-6 * std::max(1.0, std::abs(g[k])));
        }
    }
}

TEST_CASE("tilted_generator") {
    const Generator sym = two_state(1, 1);
    CHECK(tilted_generator(sym, std::vector<double>{1.0, 1.0}) == sym);

    const Generator t = tilted_generator(sym, std::vector<double>{1.0, 2.0});
    CHECK(t.rate(0, 0) == -2.0);
    CHECK(t.rate(0, 1) == 2.0);
    CHECK(t.rate(1, 0) == 0.5);
    CHECK(t.rate(1, 1) == -0.5);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> uu(0.1, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
        const int d = 2 + trial % 5;
        const Generator q = validate_generator(oracle::random_generator(rng, d));
        std::vector<double> u(static_cast<std::size_t>(d));
        for (double& v : u) v = uu(rng);
        const Generator g = tilted_generator(q, u);
        CHECK(g.rates().rowwise().sum().cwiseAbs().maxCoeff() <= 1e-13);
    }

    try {
        tilted_generator(sym, std::vector<double>{1.0, -1.0});
        FAIL("expected NonpositiveTilt");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonpositiveTilt);
    }
}

TEST_CASE("occupation vector is invariant for its optimal tilt") {
    const Generator sym = two_state(1, 1);
    CHECK(invariant_of_tilt(sym, SimplexPoint::uniform(2)) <= 1e-8);
    CHECK(invariant_of_tilt(sym, SimplexPoint::from({0.9, 0.1})) <= 1e-8);

    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const int d = 2 + trial % 5;
        const Generator q = validate_generator(oracle::random_generator(rng, d));
        CHECK(invariant_of_tilt(q, SimplexPoint::from(oracle::random_simplex(rng, d, 0.005))) <= 1e-8);
    }
}

TEST_CASE("tilde_rate") {
    const Generator sym = two_state(1, 1);
    CHECK(tilde_rate(sym, KernelPath::constant(SimplexPoint::uniform(2), 1.0, 100)) <= 1e-10);
    CHECK(std::abs(tilde_rate(sym, KernelPath::constant(SimplexPoint::from({0.9, 0.1}), 1.0, 100)) - 0.4) <= 1e-10);
    const double corner = tilde_rate(sym, KernelPath::constant(SimplexPoint::vertex(2, 0), 1.0, 100));
    CHECK(corner == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(corner <= sym.total_exit_rate());

    SUBCASE("midpoint quadrature refines") {
        std::vector<double> diffs;
        for (std::size_t n : {250u, 500u, 1000u, 2000u}) {
            diffs.push_back(std::abs(tilde_rate(sym, smooth_kernel(2 * n)) - tilde_rate(sym, smooth_kernel(n))));
        }
        const double slope = std::log(diffs.front() / diffs.back()) / std::log(8.0);
        CHECK(slope >= 0.9);
    }
}

TEST_CASE("occupation rate is continuous along mollification") {
    std::mt19937_64 rng(606);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 2 + trial % 3;
        const Generator q = validate_generator(oracle::random_generator(rng, d));
        std::vector<double> w;
        std::vector<double> cur;
        for (std::size_t k = 0; k < 400; ++k) {
            if (k % 50 == 0) cur = oracle::random_simplex(rng, d);
            w.insert(w.end(), cur.begin(), cur.end());
        }
        const KernelPath nu(1.0, d, w);
        const double base = tilde_rate(q, nu);
        double prev = std::numeric_limits<double>::infinity();
        for (double eta : {0.2, 0.1, 0.05}) {
            const double err = std::abs(tilde_rate(q, mollify(nu, eta)) - base);
            CHECK(err < prev);
            prev = err;
        }
    }
}

TEST_CASE("mixed_coefficients") {
    const RegimeModel m = model_of({{1, 0, 1, 0}, {-1, 0, 2, 0}});
    const std::vector<double> half{0.5, 0.5};
    CHECK(mixed_coefficients(m, half, 0.3).drift == 0.0);
    CHECK(mixed_coefficients(m, half, 0.3).variance == doctest::Approx(2.5));

    const RegimeModel affine = model_of({{0.5, -2, 1, 0.5}, {3, 1, 0, 1}});
    const auto c = mixed_coefficients(affine, std::vector<double>{1.0, 0.0}, 1.5);
    CHECK(c.drift == doctest::Approx(affine.drift(0, 1.5)));
    CHECK(c.variance == doctest::Approx(std::pow(affine.diffusion(0, 1.5), 2)));
    CHECK(affine.lipschitz_constant() == 3.0);

    CHECK_THROWS_AS(RegimeModel({{1, 0, 0, 0}, {2, 0, 0, 0}}), Error);
}

TEST_CASE("path_rate") {
    const RegimeModel noise = model_of({{0, 0, 1, 0}, {0, 0, 1, 0}});
    const auto pi = KernelPath::constant(SimplexPoint::uniform(2), 1.0, 1000);
    CHECK(std::abs(path_rate(noise, PathGrid::straight_line(1.0, 1000, 1.0), pi) - 0.5) <= 1e-6);
    CHECK(path_rate(noise, PathGrid::straight_line(1.0, 1000, 0.0), pi) == 0.0);

    // sigma_hat vanishes: 0/0 -> 0, n/0 -> inf
    const RegimeModel quiet = model_of({{1, 0, 0, 0}, {1, 0, 1, 0}});
    const auto first = KernelPath::constant(SimplexPoint::vertex(2, 0), 1.0, 100);
    CHECK(path_rate(quiet, PathGrid::straight_line(1.0, 100, 1.0), first) == 0.0);
    CHECK(std::isinf(path_rate(quiet, PathGrid::straight_line(1.0, 100, 2.0), first)));

    CHECK_THROWS_AS(path_rate(noise, PathGrid::straight_line(1.0, 10, 1.0), pi), Error);

    SUBCASE("midpoint quadrature refines") {
        const RegimeModel affine = model_of({{0.5, -1, 1, 0.2}, {-0.5, 0.3, 0.7, -0.1}});
        auto value = [&](std::size_t n) {
            const auto phi = PathGrid::sample(1.0, n, [](double t) { return std::sin(2 * t); });
            return path_rate(affine, phi, smooth_kernel(n));
        };
        std::vector<double> diffs;
        for (std::size_t n : {250u, 500u, 1000u, 2000u}) diffs.push_back(std::abs(value(2 * n) - value(n)));
        const double slope = std::log(diffs.front() / diffs.back()) / std::log(8.0);
        CHECK(slope >= 0.9);
    }
}

TEST_CASE("joint_rate") {
    const Generator sym = two_state(1, 1);
    const RegimeModel noise = model_of({{0, 0, 1, 0}, {0, 0, 1, 0}});
    const auto skew = KernelPath::constant(SimplexPoint::from({0.9, 0.1}), 1.0, 1000);
    const auto r = joint_rate(noise, sym, PathGrid::straight_line(1.0, 1000, 1.0), skew);
    CHECK(std::abs(r.path_rate - 0.5) <= 1e-6);
    CHECK(std::abs(r.occupation_rate - 0.4) <= 1e-8);
    CHECK(r.joint == r.path_rate + r.occupation_rate);

    const auto zero = joint_rate(noise, sym, PathGrid::straight_line(1.0, 1000, 0.0),
                                 KernelPath::constant(SimplexPoint::uniform(2), 1.0, 1000));
    CHECK(zero.joint <= 1e-10);
}
