#include "mmldp/chain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmldp/error.hpp"

namespace mmldp {

namespace {

constexpr double kRowTolerance = 1e-11;

void check_same_domain(const KernelPath& a, const KernelPath& b) {
    if (a.states() != b.states()) fail(ErrorCode::GridMismatch, "kernel paths have different state counts");
    if (std::abs(a.horizon() - b.horizon()) > 1e-12 * std::max(1.0, a.horizon())) {
        fail(ErrorCode::GridMismatch, "kernel paths have different horizons");
    }
}

} // namespace

KernelPath::KernelPath(double horizon, int states, std::vector<double> weights)
    : horizon_(horizon), states_(states), cells_(0), weights_(std::move(weights)) {
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) fail(ErrorCode::InvalidArgument, "kernel horizon must be positive");
    if (states_ < 1) fail(ErrorCode::InvalidArgument, "kernel needs at least one state");
    if (weights_.empty() || weights_.size() % stride() != 0) {
        fail(ErrorCode::InvalidArgument, "kernel weights must hold a whole number of rows");
    }
    cells_ = weights_.size() / stride();
    const double h = cell_width();
    cumulative_.assign((cells_ + 1) * stride(), 0.0);
    for (std::size_t k = 0; k < cells_; ++k) {
        double sum = 0.0;
        for (int i = 0; i < states_; ++i) {
            const double w = weight(k, i);
            if (!(w >= 0.0) || !std::isfinite(w)) {
                fail(ErrorCode::InvalidArgument, "kernel row " + std::to_string(k) + " has a negative entry");
            }
            sum += w;
            cumulative_[(k + 1) * stride() + static_cast<std::size_t>(i)] =
                cumulative_[k * stride() + static_cast<std::size_t>(i)] + w * h;
        }
        if (std::abs(sum - 1.0) > kRowTolerance) {
            fail(ErrorCode::InvalidArgument, "kernel row " + std::to_string(k) + " sums to " + std::to_string(sum));
        }
    }
}

KernelPath KernelPath::constant(const SimplexPoint& rho, double horizon, std::size_t cells) {
    if (cells == 0) fail(ErrorCode::InvalidArgument, "kernel needs at least one cell");
    std::vector<double> w;
    w.reserve(cells * static_cast<std::size_t>(rho.size()));
    for (std::size_t k = 0; k < cells; ++k) w.insert(w.end(), rho.weights().begin(), rho.weights().end());
    return KernelPath(horizon, rho.size(), std::move(w));
}

SimplexPoint KernelPath::kernel(std::size_t cell) const {
    const auto r = row(cell);
    return SimplexPoint::normalized(std::vector<double>(r.begin(), r.end()));
}

double KernelPath::cumulative_at(double t, int i) const {
    if (t <= 0.0) return 0.0;
    const double h = cell_width();
    auto k = static_cast<std::size_t>(std::floor(t / h));
    if (k >= cells_) k = cells_ - 1;
    return cumulative(k, i) + (t - node_time(k)) * weight(k, i);
}

double KernelPath::min_weight() const { return *std::min_element(weights_.begin(), weights_.end()); }

KernelPath occupation_of(const ChainPath& path, std::size_t cells) {
    if (cells == 0) fail(ErrorCode::InvalidArgument, "occupation grid needs at least one cell");
    int d = path.initial_state + 1;
    for (int s : path.states) d = std::max(d, s + 1);
    return occupation_of(path, cells, d);
}

KernelPath occupation_of(const ChainPath& path, std::size_t cells, int states) {
    if (cells == 0) fail(ErrorCode::InvalidArgument, "occupation grid needs at least one cell");
    if (!(path.horizon > 0.0)) fail(ErrorCode::InvalidArgument, "path horizon must be positive");
    const auto d = static_cast<std::size_t>(states);
    const double horizon = path.horizon;
    const double n = static_cast<double>(cells);
    const double h = horizon / n;
    auto node = [&](std::size_t k) { return horizon * static_cast<double>(k) / n; };

    std::vector<double> w(cells * d, 0.0);
    path.for_each_interval([&](int state, double a, double b) {
        if (state < 0 || static_cast<std::size_t>(state) >= d) {
            fail(ErrorCode::InvalidArgument, "path visits a state outside the kernel dimension");
        }
        auto k = std::min(static_cast<std::size_t>(std::floor(a / h)), cells - 1);
        while (k < cells) {
            const double lo = std::max(a, node(k));
            const double hi = std::min(b, node(k + 1));
            if (hi > lo) w[k * d + static_cast<std::size_t>(state)] += hi - lo;
            if (node(k + 1) >= b) break;
            ++k;
        }
    });
    for (std::size_t k = 0; k < cells; ++k) {
        const double width = node(k + 1) - node(k);
        for (std::size_t i = 0; i < d; ++i) w[k * d + i] /= width;
    }
    return KernelPath(horizon, states, std::move(w));
}

double d_T_distance(const KernelPath& mu, const KernelPath& nu) {
    check_same_domain(mu, nu);
    const int d = mu.states();
    double best = 0.0;
    if (mu.cells() == nu.cells()) {
        for (std::size_t k = 0; k <= mu.cells(); ++k) {
            for (int i = 0; i < d; ++i) best = std::max(best, std::abs(mu.cumulative(k, i) - nu.cumulative(k, i)));
        }
        return best;
    }
    auto probe = [&](double t) {
        for (int i = 0; i < d; ++i) best = std::max(best, std::abs(mu.cumulative_at(t, i) - nu.cumulative_at(t, i)));
    };
    for (std::size_t k = 0; k <= mu.cells(); ++k) probe(mu.node_time(k));
    for (std::size_t k = 0; k <= nu.cells(); ++k) probe(nu.node_time(k));
    return best;
}

double occupation_distance(const ChainPath& path, const KernelPath& nu) {
    if (std::abs(path.horizon - nu.horizon()) > 1e-12 * std::max(1.0, nu.horizon())) {
        fail(ErrorCode::GridMismatch, "path and kernel horizons differ");
    }
    const int d = nu.states();
    const double h = nu.cell_width();
    std::vector<double> occupied(static_cast<std::size_t>(d), 0.0);
    double best = 0.0;

    // cumulative occupation is linear between jumps and kernel nodes
    path.for_each_interval([&](int state, double a, double b) {
        if (state < 0 || state >= d) fail(ErrorCode::GridMismatch, "path visits a state outside the kernel dimension");
        auto probe = [&](double t) {
            for (int i = 0; i < d; ++i) {
                double own = occupied[static_cast<std::size_t>(i)];
                if (i == state) own += t - a;
                best = std::max(best, std::abs(own - nu.cumulative_at(t, i)));
            }
        };
        probe(a);
        auto k = static_cast<std::size_t>(std::floor(a / h)) + 1;
        for (; k < nu.cells(); ++k) {
            const double t = nu.node_time(k);
            if (t >= b) break;
            if (t > a) probe(t);
        }
        probe(b);
        occupied[static_cast<std::size_t>(state)] += b - a;
    });
    return best;
}

KernelPath floor_kernel(const KernelPath& nu, double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) fail(ErrorCode::InvalidArgument, "floor level must be positive");
    const double denom = 1.0 + eta * nu.states();
    std::vector<double> w(nu.weights().begin(), nu.weights().end());
    for (double& x : w) x = (x + eta) / denom;
    return KernelPath(nu.horizon(), nu.states(), std::move(w));
}

KernelPath mollify(const KernelPath& nu, double eta) {
    if (!(eta > 0.0) || !(eta < 1.0)) fail(ErrorCode::InvalidArgument, "mollifier width must lie in (0, 1)");
    const KernelPath floored = floor_kernel(nu, eta);
    const std::size_t n = floored.cells();
    const auto d = static_cast<std::size_t>(floored.states());
    const double h = floored.cell_width();

    // offsets m with |m h| < eta; J(y) = exp(-1 / (1 - (y/eta)^2))
    std::vector<double> bump;
    auto reach = static_cast<std::ptrdiff_t>(std::ceil(eta / h)) - 1;
    reach = std::clamp<std::ptrdiff_t>(reach, 0, static_cast<std::ptrdiff_t>(n));
    double mass = 0.0;
    for (std::ptrdiff_t m = -reach; m <= reach; ++m) {
        const double y = static_cast<double>(m) * h / eta;
        const double j = std::exp(-1.0 / (1.0 - y * y));
        bump.push_back(j);
        mass += j;
    }
    for (double& j : bump) j /= mass;

    std::vector<double> out(n * d, 0.0);
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    for (std::size_t k = 0; k < n; ++k) {
        double* row = out.data() + k * d;
        for (std::ptrdiff_t m = -reach; m <= reach; ++m) {
            const auto src = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k) + m, 0, last));
            const double wm = bump[static_cast<std::size_t>(m + reach)];
            for (std::size_t i = 0; i < d; ++i) row[i] += wm * floored.weight(src, static_cast<int>(i));
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < d; ++i) sum += row[i];
        for (std::size_t i = 0; i < d; ++i) row[i] /= sum;
    }
    return KernelPath(nu.horizon(), nu.states(), std::move(out));
}

} // namespace mmldp
