#pragma once

#include <cmath>
#include <vector>

#include "mmldp/montecarlo.hpp"
#include "mmldp/parallel.hpp"

namespace mmldp::detail {

/// Sample mean and standard error with order-fixed pairwise sums.
inline ProbEstimate mean_estimate(const std::vector<double>& values, Estimator method) {
    ProbEstimate out;
    out.method = method;
    out.n_samples = values.size();
    if (values.empty()) return out;
    const double n = static_cast<double>(values.size());
    out.p_hat = pairwise_sum(values) / n;
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - out.p_hat;
        sq[i] = d * d;
        if (values[i] != 0.0) ++out.hits;
    }
    out.std_err = values.size() > 1 ? std::sqrt(pairwise_sum(sq) / (n - 1.0) / n) : 0.0;
    return out;
}

/// Proportion of indicator values with the binomial standard error.
inline ProbEstimate binomial_estimate(const std::vector<double>& indicators) {
    ProbEstimate out;
    out.method = Estimator::Naive;
    out.n_samples = indicators.size();
    for (double v : indicators) {
        if (v != 0.0) ++out.hits;
    }
    if (indicators.empty()) return out;
    const double n = static_cast<double>(indicators.size());
    out.p_hat = static_cast<double>(out.hits) / n;
    out.std_err = std::sqrt(out.p_hat * (1.0 - out.p_hat) / n);
    return out;
}

} // namespace mmldp::detail
