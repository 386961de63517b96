#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mmldp {

/// Continuous real path on a uniform grid over [0, T], starting at 0.
class PathGrid {
public:
    /// values has n + 1 >= 2 finite entries with values[0] == 0.
    PathGrid(double horizon, std::vector<double> values);

    static PathGrid straight_line(double horizon, std::size_t cells, double target);

    template <class F>
    static PathGrid sample(double horizon, std::size_t cells, F&& f) {
        std::vector<double> v(cells + 1);
        for (std::size_t k = 0; k <= cells; ++k) {
            v[k] = f(horizon * static_cast<double>(k) / static_cast<double>(cells));
        }
        return PathGrid(horizon, std::move(v));
    }

    std::size_t cells() const noexcept { return values_.size() - 1; }
    double horizon() const noexcept { return horizon_; }
    double cell_width() const noexcept { return horizon_ / static_cast<double>(cells()); }
    double node_time(std::size_t k) const { return horizon_ * static_cast<double>(k) / static_cast<double>(cells()); }
    double value(std::size_t k) const { return values_[k]; }
    std::span<const double> values() const noexcept { return values_; }
    double endpoint() const { return values_.back(); }
    /// Forward difference quotient on cell k.
    double slope(std::size_t k) const { return (values_[k + 1] - values_[k]) / cell_width(); }
    double midpoint(std::size_t k) const { return 0.5 * (values_[k] + values_[k + 1]); }
    /// Linear interpolation, clamped to [0, T].
    double at(double t) const;

    friend bool operator==(const PathGrid&, const PathGrid&) = default;

private:
    double horizon_;
    std::vector<double> values_;
};

} // namespace mmldp
