#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "mmldp/error.hpp"
#include "mmldp/ratefn.hpp"

namespace mmldp {

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// Minimizes f(y) = sum_{i != j} c_ij exp(y_j - y_i) over y with y_0 = 0.
// f is convex in y and strictly convex once y_0 is pinned, since every c_ij > 0.
struct LogRatioSolve {
    std::vector<double> y;
    double objective = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
};

class LogRatioProblem {
public:
    explicit LogRatioProblem(Eigen::MatrixXd weights) : c_(std::move(weights)), m_(c_.rows()) {}

    double objective(const Eigen::VectorXd& x) const {
        fill_exponentials(x);
        double f = 0.0;
        for (Eigen::Index i = 0; i < m_; ++i) {
            for (Eigen::Index j = 0; j < m_; ++j) {
                if (i != j) f += c_(i, j) * e_(j) * einv_(i);
            }
        }
        return f;
    }

    // gradient and Hessian with respect to the free coordinates y_1..y_{m-1}
    void derivatives(const Eigen::VectorXd& x, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
        fill_exponentials(x);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(m_);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m_, m_);
        for (Eigen::Index i = 0; i < m_; ++i) {
            for (Eigen::Index j = i + 1; j < m_; ++j) {
                const double forward = c_(i, j) * e_(j) * einv_(i);   // depends on y_j - y_i
                const double backward = c_(j, i) * e_(i) * einv_(j);  // depends on y_i - y_j
                g(j) += forward - backward;
                g(i) += backward - forward;
                const double w = forward + backward;
                h(i, i) += w;
                h(j, j) += w;
                h(i, j) -= w;
                h(j, i) -= w;
            }
        }
        grad = g.tail(m_ - 1);
        hess = h.bottomRightCorner(m_ - 1, m_ - 1);
    }

    LogRatioSolve solve(const DvOptions& options) const {
        LogRatioSolve out;
        out.y.assign(static_cast<std::size_t>(m_), 0.0);
        if (m_ == 1) return out;

        Eigen::VectorXd x = Eigen::VectorXd::Zero(m_ - 1);
        Eigen::VectorXd grad;
        Eigen::MatrixXd hess;
        double f = objective(x);
        double gnorm = 0.0;
        int iter = 0;
        for (; iter < options.max_iterations; ++iter) {
            derivatives(x, grad, hess);
            gnorm = grad.cwiseAbs().maxCoeff();
            if (gnorm <= options.gradient_tolerance * std::max(1.0, f)) break;

            Eigen::LLT<Eigen::MatrixXd> llt(hess);
            Eigen::VectorXd step;
            if (llt.info() == Eigen::Success) {
                step = -llt.solve(grad);
            } else {
                step = -grad;
            }
            const double slope = grad.dot(step);
            // Newton decrement below what f can resolve: the line search would
            // only see roundoff, so take the full step.
            if (llt.info() == Eigen::Success && -slope <= 1e-14 * std::max(1.0, f)) {
                x += step;
                f = objective(x);
                continue;
            }
            double alpha = 1.0;
            bool accepted = false;
            for (int k = 0; k < 60; ++k) {
                const Eigen::VectorXd trial = x + alpha * step;
                const double ft = objective(trial);
                if (std::isfinite(ft) && ft <= f + 1e-4 * alpha * slope) {
                    x = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) break;  // stagnated at roundoff level
        }
        derivatives(x, grad, hess);
        gnorm = grad.cwiseAbs().maxCoeff();
        if (!(gnorm <= 1e-10 * std::max(1.0, f))) {
            fail(ErrorCode::NoConvergence, "Newton iteration for the local rate stopped after " +
                                               std::to_string(iter) + " iterations with gradient norm " +
                                               format_double(gnorm));
        }
        for (Eigen::Index k = 1; k < m_; ++k) out.y[static_cast<std::size_t>(k)] = x(k - 1);
        out.objective = f;
        out.gradient_norm = gnorm;
        out.iterations = iter;
        return out;
    }

private:
    void fill_exponentials(const Eigen::VectorXd& x) const {
        e_.resize(m_);
        einv_.resize(m_);
        e_(0) = 1.0;
        einv_(0) = 1.0;
        for (Eigen::Index k = 1; k < m_; ++k) {
            e_(k) = std::exp(x(k - 1));
            einv_(k) = std::exp(-x(k - 1));
        }
    }

    Eigen::MatrixXd c_;
    Eigen::Index m_;
    mutable Eigen::VectorXd e_;
    mutable Eigen::VectorXd einv_;
};

Eigen::MatrixXd pair_weights(const Generator& q, std::span<const double> rho, const std::vector<int>& support) {
    const auto m = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
            if (a != b) {
                const int i = support[static_cast<std::size_t>(a)];
                const int j = support[static_cast<std::size_t>(b)];
                c(a, b) = q.rate(i, j) * rho[static_cast<std::size_t>(i)];
            }
        }
    }
    return c;
}

std::vector<int> all_states(int d) {
    std::vector<int> s(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) s[static_cast<std::size_t>(i)] = i;
    return s;
}

void check_rho(const Generator& q, std::span<const double> rho) {
    if (static_cast<int>(rho.size()) != q.states()) {
        fail(ErrorCode::InvalidArgument, "occupation vector dimension does not match the generator");
    }
}

} // namespace

double dv_reduced_objective(const Generator& q, std::span<const double> rho, std::span<const double> x) {
    check_rho(q, rho);
    const LogRatioProblem problem(pair_weights(q, rho, all_states(q.states())));
    return problem.objective(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
}

std::vector<double> dv_reduced_gradient(const Generator& q, std::span<const double> rho, std::span<const double> x) {
    check_rho(q, rho);
    const LogRatioProblem problem(pair_weights(q, rho, all_states(q.states())));
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    problem.derivatives(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())), grad, hess);
    return {grad.data(), grad.data() + grad.size()};
}

TiltSolution dv_local(const Generator& q, const SimplexPoint& rho, const DvOptions& options) {
    check_rho(q, rho.weights());
    const int d = q.states();

    std::vector<int> support;
    for (int i = 0; i < d; ++i) {
        if (rho[i] > 0.0) support.push_back(i);
    }

    // Value: states with rho_i = 0 can be driven to u_i -> 0, which removes
    // every term pointing into them; the infimum is the problem on the support.
    const LogRatioSolve on_support = LogRatioProblem(pair_weights(q, rho.weights(), support)).solve(options);
    double exit_mass = 0.0;
    for (int i : support) exit_mass += q.exit_rate(i) * rho[i];
    const double value = std::clamp(exit_mass - on_support.objective, 0.0, q.total_exit_rate());

    TiltSolution out;
    out.value = value;
    out.gradient_norm = on_support.gradient_norm;
    out.iterations = on_support.iterations;

    if (static_cast<int>(support.size()) == d && rho.min() >= options.boundary_clamp) {
        for (double y : on_support.y) out.u_star.push_back(std::exp(y));
        return out;
    }

    // Boundary kernels: the optimal tilt is not attained, so take the tilt
    // of the floored vector (rho + theta) / (1 + theta d).
    const double theta = options.boundary_clamp;
    std::vector<double> clamped(rho.weights().begin(), rho.weights().end());
    for (double& w : clamped) w = (w + theta) / (1.0 + theta * d);
    const LogRatioSolve interior = LogRatioProblem(pair_weights(q, clamped, all_states(d))).solve(options);
    for (double y : interior.y) out.u_star.push_back(std::exp(y));
    out.iterations += interior.iterations;
    return out;
}

Generator tilted_generator(const Generator& q, std::span<const double> u) {
    const int d = q.states();
    if (static_cast<int>(u.size()) != d) fail(ErrorCode::InvalidArgument, "tilt dimension does not match the generator");
    for (double v : u) {
        if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::NonpositiveTilt, "tilt entries must be strictly positive");
    }
    Eigen::MatrixXd out(d, d);
    for (int i = 0; i < d; ++i) {
        double exit = 0.0;
        for (int j = 0; j < d; ++j) {
            if (j == i) continue;
            out(i, j) = q.rate(i, j) * u[static_cast<std::size_t>(j)] / u[static_cast<std::size_t>(i)];
            exit += out(i, j);
        }
        out(i, i) = -exit;
    }
    return Generator::validate(out);
}

double invariant_of_tilt(const Generator& q, const SimplexPoint& rho) {
    if (!(rho.min() > 0.0)) fail(ErrorCode::InvalidArgument, "occupation vector must be strictly positive");
    const TiltSolution sol = dv_local(q, rho);
    const Generator tilted = tilted_generator(q, sol.u_star);
    const Eigen::Map<const Eigen::VectorXd> r(rho.weights().data(), rho.size());
    return (r.transpose() * tilted.rates()).cwiseAbs().maxCoeff();
}

} // namespace mmldp
