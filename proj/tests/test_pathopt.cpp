#include <doctest.h>

#include <cmath>
#include <random>

#include "mmldp/error.hpp"
#include "mmldp/pathopt.hpp"
#include "oracles.hpp"

using namespace mmldp;

namespace {

Generator symmetric(double rate) {
    Eigen::MatrixXd m(2, 2);
    m << -rate, rate, rate, -rate;
    return validate_generator(m);
}

void check_history(const VariationalResult& r) {
    REQUIRE(!r.objective_history.empty());
    for (std::size_t k = 1; k < r.objective_history.size(); ++k) {
        CHECK(r.objective_history[k] <= r.objective_history[k - 1]);
    }
    CHECK(r.rate.joint >= 0.0);
    CHECK(std::abs(r.rate.joint - r.objective_history.back()) <= 1e-9);
}

} // namespace

TEST_CASE("zero_cost_path") {
    const Generator q = symmetric(1.0);

    const auto decay = zero_cost_path(RegimeModel({{0, -1, 1, 0}, {0, -1, 1, 0}}), q, 1.0, 100);
    for (double v : decay.values()) CHECK(v == 0.0);

    const auto cancel = zero_cost_path(RegimeModel({{1, 0, 1, 0}, {-1, 0, 1, 0}}), q, 1.0, 100);
    for (double v : cancel.values()) CHECK(std::abs(v) <= 1e-15);

    const auto unit = zero_cost_path(RegimeModel({{1, 0, 1, 0}, {1, 0, 1, 0}}), q, 1.0, 100);
    CHECK(std::abs(unit.endpoint() - 1.0) <= 1e-8);
    CHECK(std::abs(unit.value(50) - 0.5) <= 1e-12);

    SUBCASE("affine drift matches the exponential solution") {
        // pi = (1/3, 2/3) for rates 2 and 1; b_hat(x) = a + c x
        Eigen::MatrixXd m(2, 2);
        m << -2, 2, 1, -1;
        const Generator skew = validate_generator(m);
        const RegimeModel model({{0.5, -1.0, 1, 0}, {2.0, 0.8, 0.5, 0.1}});
        const double a = 0.5 / 3 + 2.0 * 2 / 3, c = -1.0 / 3 + 0.8 * 2 / 3;
        const auto phi = zero_cost_path(model, skew, 2.0, 400);
        for (std::size_t k = 0; k <= 400; k += 40) {
            const double t = phi.node_time(k);
            CHECK(std::abs(phi.value(k) - a / c * std::expm1(c * t)) <= 1e-8);
        }
        const auto pi = KernelPath::constant(invariant_distribution(skew), 2.0, 400);
        CHECK(joint_rate(model, skew, phi, pi).joint <= 1e-6);
    }
}

TEST_CASE("project_to_simplex satisfies the projection conditions") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 2 + static_cast<std::size_t>(trial % 5);
        const double floor = trial % 2 == 0 ? 0.0 : 0.01;
        std::vector<double> y(d);
        for (double& v : y) v = z(rng);
        const auto x = project_to_simplex(y, floor);
        double sum = 0.0;
        for (double v : x) {
            CHECK(v >= floor);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        // y - x is a common shift on free coordinates and no smaller on clamped ones
        double shift = 0.0;
        bool found = false;
        for (std::size_t i = 0; i < d; ++i) {
            if (x[i] > floor) {
                if (found) CHECK(std::abs((y[i] - x[i]) - shift) <= 1e-12);
                shift = y[i] - x[i];
                found = true;
            }
        }
        REQUIRE(found);
        for (std::size_t i = 0; i < d; ++i) {
            if (x[i] == floor) CHECK(y[i] - x[i] <= shift + 1e-12);
        }
        const auto again = project_to_simplex(x, floor);
        for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(again[i] - x[i]) <= 1e-15);
    }
}

TEST_CASE("identical regimes give the Cameron-Martin straight line") {
    const Generator q = symmetric(1.0);
    const RegimeModel model({{0, 0, 1, 0}, {0, 0, 1, 0}});
    const auto r = most_likely_path(model, q, 1.0, 1.0, 200);
    check_history(r);
    CHECK(r.converged);
    CHECK(std::abs(r.rate.joint - 0.5) <= 1e-4);
    for (std::size_t k = 0; k <= 200; ++k) CHECK(std::abs(r.phi_star.value(k) - r.phi_star.node_time(k)) <= 1e-4);
    for (std::size_t k = 0; k < 200; ++k) {
        CHECK(std::abs(r.nu_star.weight(k, 0) - 0.5) <= 1e-3);
        CHECK(std::abs(r.nu_star.weight(k, 1) - 0.5) <= 1e-3);
    }
}

TEST_CASE("zero-cost endpoint has zero rate") {
    Eigen::MatrixXd m(2, 2);
    m << -1.5, 1.5, 0.5, -0.5;
    const Generator q = validate_generator(m);
    const RegimeModel model({{1, -1, 1, 0.2}, {-0.5, 0.2, 0.8, 0}});
    const auto zc = zero_cost_path(model, q, 1.0, 100);
    const auto r = most_likely_path(model, q, 1.0, zc.endpoint(), 100);
    check_history(r);
    CHECK(r.rate.joint <= 1e-6);
}

TEST_CASE("two regimes beat the constant-kernel scan") {
    const Generator q = symmetric(1.0);
    const RegimeModel model({{1, 0, 1, 0}, {-1, 0, 1, 0}});
    const double bound = oracle::constant_kernel_scan(1.0);
    const auto coarse = most_likely_path(model, q, 1.0, 1.0, 100);
    const auto fine = most_likely_path(model, q, 1.0, 1.0, 200);
    check_history(coarse);
    check_history(fine);
    CHECK(coarse.rate.joint <= bound + 1e-6);
    CHECK(fine.rate.joint <= bound + 1e-6);
    CHECK(std::abs(fine.rate.joint - coarse.rate.joint) <= 0.02 * fine.rate.joint);
}

TEST_CASE("most_likely_path is independent of the worker count") {
    const Generator q = symmetric(1.0);
    const RegimeModel model({{1, -0.5, 1, 0.1}, {-1, 0.3, 0.7, 0}});
    PathOptOptions one, many;
    one.threads = 1;
    many.threads = 3;
    const auto a = most_likely_path(model, q, 1.0, 0.8, 60, one);
    const auto b = most_likely_path(model, q, 1.0, 0.8, 60, many);
    CHECK(a.phi_star == b.phi_star);
    CHECK(a.nu_star == b.nu_star);
    CHECK(a.objective_history == b.objective_history);
    check_history(a);
}

TEST_CASE("most_likely_path rejects bad input") {
    const Generator q = symmetric(1.0);
    const RegimeModel model({{0, 0, 1, 0}, {0, 0, 1, 0}});
    CHECK_THROWS_AS(most_likely_path(model, q, 1.0, 1.0, 1), Error);
    // noise vanishes at x = 0.25 in both regimes, which is the first cell midpoint
    const RegimeModel pinned({{0, 0, -1, 4}, {0, 0, 1, -4}});
    try {
        most_likely_path(pinned, q, 1.0, 1.0, 2);
        FAIL("expected InfeasibleTarget");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InfeasibleTarget);
    }
}
