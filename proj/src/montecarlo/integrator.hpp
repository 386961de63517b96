#pragma once

// Euler-Maruyama stepping shared by the plain, tilted and martingale simulations.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mmldp/montecarlo.hpp"

namespace mmldp::detail {

/// Noise shifts dB = dB~ + c_B dt, dW = dW~ + c_W dt, constant on each cell of
/// a uniform grid with `cells` cells over the horizon. Empty means no shift.
struct NoiseShift {
    std::vector<double> c_b;
    std::vector<double> c_w;
    std::size_t cells = 0;

    bool empty() const noexcept { return cells == 0; }
};

struct Integration {
    std::vector<double> values;     // M at the output nodes
    double log_girsanov = 0.0;      // -sum c dB~ - 1/2 sum c^2 dt over both noises
};

inline double output_node(double horizon, std::size_t cells, std::size_t k) {
    return horizon * static_cast<double>(k) / static_cast<double>(cells);
}

/// fixed >= 0 is returned as is; otherwise X_0 is drawn from pi with the "init" child of key.
int initial_state(int fixed, const std::vector<double>& pi_cumulative, StreamKey key);
std::vector<double> cumulative_invariant(const Generator& q);

/// Sorted union of the output nodes, the jump times and the extra breakpoints.
std::vector<double> step_times(double horizon, std::size_t cells, const ChainPath& chain, std::span<const double> extra);

/// Steps M along `times`. observe(t, state, m_before, dB, dt) is called for every substep.
template <class Observe>
Integration integrate(const SdeSetup& setup, const ChainPath& chain, std::size_t out_cells,
                      std::span<const double> extra_breaks, const NoiseShift& shift, Rng& b_rng, Rng& w_rng,
                      Observe&& observe) {
    const std::vector<double> times = step_times(setup.horizon, out_cells, chain, extra_breaks);
    const double sqrt_eps = std::sqrt(setup.epsilon);
    const double shift_h = shift.empty() ? 1.0 : setup.horizon / static_cast<double>(shift.cells);

    Integration out;
    out.values.assign(out_cells + 1, 0.0);
    double m = 0.0;
    int state = chain.initial_state;
    std::size_t jump = 0;
    std::size_t next_node = 1;
    for (std::size_t s = 0; s + 1 < times.size(); ++s) {
        const double a = times[s], b = times[s + 1];
        while (jump < chain.jump_times.size() && chain.jump_times[jump] <= a) state = chain.states[jump++];
        const double dt = b - a;
        const double root = std::sqrt(dt);
        double db = root * b_rng.normal();
        double dw = setup.gamma > 0.0 ? root * w_rng.normal() : 0.0;
        if (!shift.empty()) {
            const auto cell = std::min(shift.cells - 1, static_cast<std::size_t>(0.5 * (a + b) / shift_h));
            const double cb = shift.c_b[cell];
            const double cw = shift.c_w.empty() ? 0.0 : shift.c_w[cell];
            out.log_girsanov -= cb * db + 0.5 * cb * cb * dt;
            db += cb * dt;
            if (setup.gamma > 0.0) {
                out.log_girsanov -= cw * dw + 0.5 * cw * cw * dt;
                dw += cw * dt;
            }
        }
        observe(a, state, m, db, dt);
        m += setup.model.drift(state, m) * dt + sqrt_eps * setup.model.diffusion(state, m) * db +
             sqrt_eps * setup.gamma * dw;
        // output nodes are members of `times`, so equality is exact
        if (next_node <= out_cells && output_node(setup.horizon, out_cells, next_node) == b) {
            out.values[next_node++] = m;
        }
    }
    return out;
}

} // namespace mmldp::detail
