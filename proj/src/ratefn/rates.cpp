#include <algorithm>
#include <cmath>
#include <limits>

#include "mmldp/error.hpp"
#include "mmldp/ratefn.hpp"

namespace mmldp {

RegimeModel::RegimeModel(std::vector<Regime> regimes) : regimes_(std::move(regimes)) {
    if (regimes_.empty()) fail(ErrorCode::InvalidArgument, "model needs at least one regime");
    bool some_noise = false;
    for (const Regime& r : regimes_) {
        if (!std::isfinite(r.drift0) || !std::isfinite(r.drift1) || !std::isfinite(r.diffusion0) ||
            !std::isfinite(r.diffusion1)) {
            fail(ErrorCode::InvalidArgument, "regime coefficients must be finite");
        }
        some_noise = some_noise || r.diffusion0 != 0.0 || r.diffusion1 != 0.0;
    }
    if (!some_noise) fail(ErrorCode::InvalidArgument, "diffusion coefficient vanishes in every regime");
}

double RegimeModel::lipschitz_constant() const {
    double k = 0.0;
    for (const Regime& r : regimes_) {
        k = std::max({k, std::abs(r.drift0), std::abs(r.drift1), std::abs(r.diffusion0), std::abs(r.diffusion1)});
    }
    return k;
}

double tilde_rate(const Generator& q, const KernelPath& nu) {
    if (nu.states() != q.states()) fail(ErrorCode::GridMismatch, "kernel dimension does not match the generator");
    const double h = nu.cell_width();
    double total = 0.0;
    double cached = 0.0;
    for (std::size_t k = 0; k < nu.cells(); ++k) {
        // constant stretches are common (invariant or constant kernels)
        if (k == 0 || !std::equal(nu.row(k).begin(), nu.row(k).end(), nu.row(k - 1).begin())) {
            cached = dv_local(q, nu.kernel(k)).value;
        }
        total += cached * h;
    }
    return std::clamp(total, 0.0, nu.horizon() * q.total_exit_rate());
}

MixedCoefficients mixed_coefficients(const RegimeModel& model, std::span<const double> rho, double x) {
    if (static_cast<int>(rho.size()) != model.states()) {
        fail(ErrorCode::InvalidArgument, "occupation vector dimension does not match the model");
    }
    MixedCoefficients out;
    for (int i = 0; i < model.states(); ++i) {
        const double w = rho[static_cast<std::size_t>(i)];
        const double s = model.diffusion(i, x);
        out.drift += model.drift(i, x) * w;
        out.variance += s * s * w;
    }
    return out;
}

double path_rate(const RegimeModel& model, const PathGrid& phi, const KernelPath& nu, const PathRateOptions& options) {
    if (nu.states() != model.states()) fail(ErrorCode::GridMismatch, "kernel dimension does not match the model");
    if (phi.cells() != nu.cells() || std::abs(phi.horizon() - nu.horizon()) > 1e-12 * std::max(1.0, nu.horizon())) {
        fail(ErrorCode::GridMismatch, "path and kernel grids differ");
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    const double h = phi.cell_width();
    double total = 0.0;
    for (std::size_t k = 0; k < phi.cells(); ++k) {
        const MixedCoefficients c = mixed_coefficients(model, nu.row(k), phi.midpoint(k));
        const double residual = phi.slope(k) - c.drift;
        if (!std::isfinite(residual) || !std::isfinite(c.variance)) return inf;
        if (c.variance > 0.0) {
            total += 0.5 * residual * residual / c.variance * h;
        } else if (std::abs(residual) > options.zero_variance_atol * (1.0 + std::abs(c.drift))) {
            return inf;
        }
    }
    return total;
}

RateBreakdown joint_rate(const RegimeModel& model, const Generator& q, const PathGrid& phi, const KernelPath& nu,
                         const PathRateOptions& options) {
    RateBreakdown out;
    out.path_rate = path_rate(model, phi, nu, options);
    out.occupation_rate = tilde_rate(q, nu);
    out.joint = out.path_rate + out.occupation_rate;
    return out;
}

} // namespace mmldp
