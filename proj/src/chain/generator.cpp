#include "mmldp/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mmldp/error.hpp"

namespace mmldp {

Generator Generator::validate(const Eigen::MatrixXd& rates) {
    const auto d = rates.rows();
    if (d != rates.cols()) {
        fail(ErrorCode::NonSquare, "generator is " + std::to_string(rates.rows()) + "x" +
                                       std::to_string(rates.cols()) + ", expected a square matrix");
    }
    if (d < 2) fail(ErrorCode::NonSquare, "generator needs at least 2 states");
    if (!rates.allFinite()) fail(ErrorCode::InvalidArgument, "generator has non-finite entries");

    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            if (i != j && !(rates(i, j) > 0.0)) {
                fail(ErrorCode::NonpositiveOffDiagonal,
                     "off-diagonal rate Q(" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                         ") in row " + std::to_string(i + 1) + " must be strictly positive");
            }
        }
        const double scale = std::max(1.0, rates.row(i).cwiseAbs().maxCoeff());
        const double sum = rates.row(i).sum();
        if (std::abs(sum) > 1e-12 * scale) {
            fail(ErrorCode::RowSumNonzero,
                 "row " + std::to_string(i + 1) + " sums to " + std::to_string(sum) + " instead of 0");
        }
    }
    return Generator(rates);
}

SimplexPoint SimplexPoint::from(std::vector<double> weights) {
    if (weights.empty()) fail(ErrorCode::InvalidArgument, "simplex point must be nonempty");
    double sum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (!std::isfinite(weights[i]) || weights[i] < 0.0) {
            fail(ErrorCode::InvalidArgument, "simplex weight " + std::to_string(i) + " is negative or non-finite");
        }
        sum += weights[i];
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        fail(ErrorCode::InvalidArgument, "simplex weights sum to " + std::to_string(sum) + ", expected 1");
    }
    return SimplexPoint(std::move(weights));
}

SimplexPoint SimplexPoint::normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) fail(ErrorCode::InvalidArgument, "cannot normalize negative weights");
        sum += w;
    }
    if (!(sum > 0.0)) fail(ErrorCode::InvalidArgument, "cannot normalize weights with zero sum");
    for (double& w : weights) w /= sum;
    return SimplexPoint(std::move(weights));
}

SimplexPoint SimplexPoint::uniform(int states) {
    return SimplexPoint(std::vector<double>(static_cast<std::size_t>(states), 1.0 / states));
}

SimplexPoint SimplexPoint::vertex(int states, int index) {
    std::vector<double> w(static_cast<std::size_t>(states), 0.0);
    w.at(static_cast<std::size_t>(index)) = 1.0;
    return SimplexPoint(std::move(w));
}

double SimplexPoint::min() const { return *std::min_element(weights_.begin(), weights_.end()); }

SimplexPoint invariant_distribution(const Generator& q) {
    const int d = q.states();
    // pi Q = 0 transposed, with the last equation replaced by sum pi = 1
    Eigen::MatrixXd a = q.rates().transpose();
    a.row(d - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    rhs(d - 1) = 1.0;

    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) fail(ErrorCode::SingularSystem, "invariant distribution system is singular");
    Eigen::VectorXd pi = lu.solve(rhs);

    const double scale = std::max(1.0, q.rates().cwiseAbs().maxCoeff());
    const double residual = (pi.transpose() * q.rates()).cwiseAbs().maxCoeff();
    if (!pi.allFinite() || residual > 1e-10 * scale || pi.minCoeff() < -1e-12) {
        fail(ErrorCode::SingularSystem,
             "invariant distribution solve broke down (residual " + std::to_string(residual) + ")");
    }
    std::vector<double> w(pi.data(), pi.data() + d);
    for (double& x : w) x = std::max(x, 0.0);
    return SimplexPoint::normalized(std::move(w));
}

} // namespace mmldp
