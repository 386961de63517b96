#include "mmldp/path.hpp"

#include <algorithm>
#include <cmath>

#include "mmldp/error.hpp"

namespace mmldp {

PathGrid::PathGrid(double horizon, std::vector<double> values) : horizon_(horizon), values_(std::move(values)) {
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) fail(ErrorCode::InvalidArgument, "path horizon must be positive");
    if (values_.size() < 2) fail(ErrorCode::InvalidArgument, "path needs at least one cell");
    if (values_.front() != 0.0) fail(ErrorCode::InvalidArgument, "path must start at 0");
    for (double v : values_) {
        if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "path values must be finite");
    }
}

PathGrid PathGrid::straight_line(double horizon, std::size_t cells, double target) {
    if (cells == 0) fail(ErrorCode::InvalidArgument, "path needs at least one cell");
    std::vector<double> v(cells + 1);
    for (std::size_t k = 0; k <= cells; ++k) v[k] = target * static_cast<double>(k) / static_cast<double>(cells);
    return PathGrid(horizon, std::move(v));
}

double PathGrid::at(double t) const {
    if (t <= 0.0) return values_.front();
    if (t >= horizon_) return values_.back();
    const double s = t / cell_width();
    auto k = std::min(static_cast<std::size_t>(s), cells() - 1);
    const double w = s - static_cast<double>(k);
    return (1.0 - w) * values_[k] + w * values_[k + 1];
}

} // namespace mmldp
