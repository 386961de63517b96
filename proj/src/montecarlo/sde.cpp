#include <algorithm>
#include <cmath>
#include <iterator>

#include "integrator.hpp"
#include "mmldp/error.hpp"

namespace mmldp {

namespace detail {

std::vector<double> cumulative_invariant(const Generator& q) {
    const SimplexPoint pi = invariant_distribution(q);
    std::vector<double> c(static_cast<std::size_t>(pi.size()));
    double acc = 0.0;
    for (int i = 0; i < pi.size(); ++i) c[static_cast<std::size_t>(i)] = acc += pi[i];
    return c;
}

int initial_state(int fixed, const std::vector<double>& pi_cumulative, StreamKey key) {
    if (fixed >= 0) return fixed;
    const double u = key.child("init").rng().uniform() * pi_cumulative.back();
    const auto it = std::upper_bound(pi_cumulative.begin(), pi_cumulative.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(std::distance(pi_cumulative.begin(), it),
                                                     static_cast<std::ptrdiff_t>(pi_cumulative.size()) - 1));
}

std::vector<double> step_times(double horizon, std::size_t cells, const ChainPath& chain, std::span<const double> extra) {
    std::vector<double> nodes(cells + 1);
    for (std::size_t k = 0; k <= cells; ++k) nodes[k] = output_node(horizon, cells, k);
    std::vector<double> jumps_and_nodes;
    jumps_and_nodes.reserve(nodes.size() + chain.jump_times.size());
    std::merge(nodes.begin(), nodes.end(), chain.jump_times.begin(), chain.jump_times.end(),
               std::back_inserter(jumps_and_nodes));
    std::vector<double> all;
    all.reserve(jumps_and_nodes.size() + extra.size());
    std::merge(jumps_and_nodes.begin(), jumps_and_nodes.end(), extra.begin(), extra.end(), std::back_inserter(all));
    all.erase(std::unique(all.begin(), all.end()), all.end());
    while (!all.empty() && all.back() > horizon) all.pop_back();
    return all;
}

} // namespace detail

std::size_t grid_cells(double horizon, double dt) {
    if (!(horizon > 0.0) || !(dt > 0.0) || dt > horizon) fail(ErrorCode::InvalidArgument, "need 0 < dt <= T");
    const double ratio = horizon / dt;
    const double nearest = std::round(ratio);
    if (std::abs(ratio - nearest) <= 1e-9 * ratio) return static_cast<std::size_t>(nearest);
    return static_cast<std::size_t>(std::ceil(ratio));
}

namespace {

void check_setup(const SdeSetup& s) {
    if (s.model.states() != s.q.states()) fail(ErrorCode::InvalidArgument, "model and generator dimensions differ");
    if (!(s.epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
    if (!(s.gamma >= 0.0)) fail(ErrorCode::InvalidArgument, "gamma must be nonnegative");
    if (s.initial_state >= s.q.states()) fail(ErrorCode::InvalidArgument, "initial state out of range");
}

} // namespace

std::pair<DiffusionPath, ChainPath> simulate_mmsde(const SdeSetup& setup, StreamKey key) {
    check_setup(setup);
    const std::size_t cells = grid_cells(setup.horizon, setup.dt);
    const int x0 = detail::initial_state(setup.initial_state, detail::cumulative_invariant(setup.q), key);
    Rng chain_rng = key.child("chain").rng();
    ChainPath chain = simulate_chain(setup.q, setup.epsilon, setup.horizon, x0, chain_rng);
    Rng b_rng = key.child("B").rng();
    Rng w_rng = key.child("W").rng();
    auto run = detail::integrate(setup, chain, cells, {}, detail::NoiseShift{}, b_rng, w_rng,
                                 [](double, int, double, double, double) {});
    DiffusionPath path{PathGrid(setup.horizon, std::move(run.values)), setup.epsilon, setup.gamma};
    return {std::move(path), std::move(chain)};
}

double rho_T_distance(const PathGrid& path, const PathGrid& phi) {
    if (std::abs(path.horizon() - phi.horizon()) > 1e-12 * std::max(1.0, phi.horizon())) {
        fail(ErrorCode::GridMismatch, "path and reference horizons differ");
    }
    double best = 0.0;
    if (phi.cells() == path.cells()) {
        for (std::size_t k = 0; k <= path.cells(); ++k) best = std::max(best, std::abs(path.value(k) - phi.value(k)));
        return best;
    }
    // both interpolants are linear between merged nodes, so the sup sits on a node
    for (std::size_t k = 0; k <= path.cells(); ++k) {
        best = std::max(best, std::abs(path.value(k) - phi.at(path.node_time(k))));
    }
    for (std::size_t k = 0; k <= phi.cells(); ++k) {
        best = std::max(best, std::abs(path.at(phi.node_time(k)) - phi.value(k)));
    }
    return best;
}

} // namespace mmldp
