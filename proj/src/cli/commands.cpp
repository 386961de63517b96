#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "mmldp/cli.hpp"
#include "mmldp/parallel.hpp"
#include "mmldp/pathopt.hpp"

namespace mmldp::cli {

using json = nlohmann::json;

namespace {

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : width_(header.size()) { line(header); }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) fail(ErrorCode::InvalidArgument, "csv row width differs from header");
        line(cells);
    }

    std::string str() const { return out_.str(); }

private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) out_ << (k ? "," : "") << cells[k];
        out_ << '\n';
    }

    std::size_t width_;
    std::ostringstream out_;
};

std::string num(double x) { return format_number(x); }
std::string num(std::size_t x) { return std::to_string(x); }
std::string num(int x) { return std::to_string(x); }

// JSON has no inf/nan; those are written as the %.12g strings
json jnum(double x) { return std::isfinite(x) ? json(x) : json(format_number(x)); }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct Context {
    const ExperimentConfig& config;
    Scenario scenario;
    Format format;
    unsigned threads;
    StreamKey root;

    McOptions mc() const { return McOptions{config.n_samples, threads}; }
};

std::vector<Estimator> estimators(Sampler s) {
    switch (s) {
    case Sampler::Naive: return {Estimator::Naive};
    case Sampler::Importance: return {Estimator::Importance};
    case Sampler::Both: return {Estimator::Naive, Estimator::Importance};
    }
    return {};
}

json rate_json(const RateBreakdown& r) {
    return {{"path_rate", jnum(r.path_rate)}, {"occupation_rate", jnum(r.occupation_rate)}, {"joint", jnum(r.joint)}};
}

std::vector<Artifact> cmd_simulate(const Context& ctx) {
    const SdeSetup& setup = ctx.scenario.setup;
    std::vector<std::optional<std::pair<DiffusionPath, ChainPath>>> slots(ctx.config.paths);
    parallel_for(slots.size(), ctx.threads, [&](std::size_t p) { slots[p] = simulate_mmsde(setup, ctx.root.child(p)); });
    std::vector<std::pair<DiffusionPath, ChainPath>> runs;
    for (auto& s : slots) runs.push_back(std::move(*s));

    if (ctx.format == Format::Json) {
        json out;
        out["epsilon"] = setup.epsilon;
        out["gamma"] = setup.gamma;
        out["horizon"] = setup.horizon;
        out["paths"] = json::array();
        for (const auto& [m, x] : runs) {
            out["paths"].push_back({{"values", std::vector<double>(m.path.values().begin(), m.path.values().end())},
                                    {"initial_state", x.initial_state},
                                    {"jump_times", x.jump_times},
                                    {"states", x.states}});
        }
        return {{"simulate.json", dump(out)}};
    }
    Csv paths({"path", "t", "m"});
    Csv chain({"path", "t", "state"});
    for (std::size_t p = 0; p < runs.size(); ++p) {
        const auto& [m, x] = runs[p];
        for (std::size_t k = 0; k <= m.path.cells(); ++k) paths.row({num(p), num(m.path.node_time(k)), num(m.path.value(k))});
        chain.row({num(p), num(0.0), num(x.initial_state)});
        for (std::size_t k = 0; k < x.jump_count(); ++k) chain.row({num(p), num(x.jump_times[k]), num(x.states[k])});
    }
    return {{"simulate_paths.csv", paths.str()}, {"simulate_chain.csv", chain.str()}};
}

std::vector<Artifact> cmd_rate(const Context& ctx) {
    const Scenario& s = ctx.scenario;
    const RateBreakdown r = joint_rate(s.setup.model, s.setup.q, s.ball.phi, s.ball.nu);
    if (ctx.format == Format::Json) {
        json out = rate_json(r);
        out["horizon"] = s.setup.horizon;
        out["cells"] = s.ball.phi.cells();
        return {{"rate.json", dump(out)}};
    }
    Csv csv({"path_rate", "occupation_rate", "joint"});
    csv.row({num(r.path_rate), num(r.occupation_rate), num(r.joint)});
    return {{"rate.csv", csv.str()}};
}

std::vector<Artifact> cmd_dv(const Context& ctx) {
    const Generator& q = ctx.scenario.setup.q;
    std::vector<SimplexPoint> rhos;
    for (const auto& r : ctx.config.rhos) rhos.push_back(SimplexPoint::from(r));
    if (rhos.empty()) rhos.push_back(invariant_distribution(q));
    const int d = q.states();

    std::vector<TiltSolution> sols;
    for (const auto& rho : rhos) sols.push_back(dv_local(q, rho));

    if (ctx.format == Format::Json) {
        json rows = json::array();
        for (std::size_t k = 0; k < rhos.size(); ++k) {
            const auto w = rhos[k].weights();
            rows.push_back({{"rho", std::vector<double>(w.begin(), w.end())},
                            {"value", jnum(sols[k].value)},
                            {"u_star", sols[k].u_star},
                            {"iterations", sols[k].iterations}});
        }
        return {{"dv.json", dump(json{{"rows", rows}})}};
    }
    std::vector<std::string> header{"index"};
    for (int i = 0; i < d; ++i) header.push_back("rho_" + std::to_string(i));
    header.push_back("value");
    for (int i = 0; i < d; ++i) header.push_back("u_" + std::to_string(i));
    header.push_back("iterations");
    Csv csv(header);
    for (std::size_t k = 0; k < rhos.size(); ++k) {
        std::vector<std::string> cells{num(k)};
        for (int i = 0; i < d; ++i) cells.push_back(num(rhos[k][i]));
        cells.push_back(num(sols[k].value));
        for (double u : sols[k].u_star) cells.push_back(num(u));
        cells.push_back(num(sols[k].iterations));
        csv.row(cells);
    }
    return {{"dv.csv", csv.str()}};
}

std::vector<Artifact> cmd_mlp(const Context& ctx) {
    const SdeSetup& setup = ctx.scenario.setup;
    PathOptOptions opts;
    opts.max_rounds = ctx.config.mlp.max_rounds;
    opts.tolerance = ctx.config.mlp.tolerance;
    opts.threads = ctx.threads;
    const VariationalResult r =
        most_likely_path(setup.model, setup.q, setup.horizon, ctx.config.mlp.target, ctx.config.n, opts);

    const int d = setup.q.states();
    std::vector<std::string> header{"t", "phi"};
    for (int i = 0; i < d; ++i) header.push_back("kernel_" + std::to_string(i));
    Csv path(header);
    // kernel columns hold the cell to the right of each node; the last node repeats the last cell
    for (std::size_t k = 0; k <= r.phi_star.cells(); ++k) {
        const std::size_t cell = std::min(k, r.nu_star.cells() - 1);
        std::vector<std::string> cells{num(r.phi_star.node_time(k)), num(r.phi_star.value(k))};
        for (int i = 0; i < d; ++i) cells.push_back(num(r.nu_star.weight(cell, i)));
        path.row(cells);
    }

    Artifact summary;
    if (ctx.format == Format::Json) {
        json out = rate_json(r.rate);
        out["target"] = ctx.config.mlp.target;
        out["converged"] = r.converged;
        out["rounds"] = r.objective_history.size() - 1;
        json history = json::array();
        for (double v : r.objective_history) history.push_back(jnum(v));
        out["objective_history"] = history;
        summary = {"mlp.json", dump(out)};
    } else {
        Csv csv({"target", "path_rate", "occupation_rate", "joint", "converged", "rounds"});
        csv.row({num(ctx.config.mlp.target), num(r.rate.path_rate), num(r.rate.occupation_rate), num(r.rate.joint),
                 r.converged ? "true" : "false", num(r.objective_history.size() - 1)});
        summary = {"mlp.csv", csv.str()};
    }
    return {summary, {"mlp_path.csv", path.str()}};
}

std::vector<Artifact> cmd_ldp(const Context& ctx) {
    const Scenario& s = ctx.scenario;
    std::vector<std::pair<Estimator, LdpCurve>> curves;
    for (Estimator e : estimators(ctx.config.sampler)) {
        curves.emplace_back(e, ldp_curve(s.setup, s.ball, ctx.config.epsilons, e, ctx.mc(), ctx.root.child(estimator_name(e))));
    }
    if (ctx.format == Format::Json) {
        json rows = json::array();
        for (const auto& [e, curve] : curves) {
            for (const LdpRow& r : curve.rows) {
                rows.push_back({{"epsilon", r.epsilon},
                                {"delta", r.delta},
                                {"p_hat", r.estimate.p_hat},
                                {"std_err", r.estimate.std_err},
                                {"minus_eps_log_p", jnum(r.minus_eps_log_p)},
                                {"reference_rate", jnum(curve.reference_rate)},
                                {"estimator", estimator_name(e)},
                                {"n_samples", r.estimate.n_samples},
                                {"hits", r.estimate.hits},
                                {"zero_hits", r.zero_hits},
                                {"band_lo", jnum(r.band_lo)},
                                {"band_hi", jnum(r.band_hi)}});
            }
        }
        return {{"ldp.json", dump(json{{"rows", rows}})}};
    }
    Csv csv({"epsilon", "delta", "p_hat", "std_err", "minus_eps_log_p", "reference_rate", "estimator", "n_samples", "hits",
             "zero_hits", "band_lo", "band_hi"});
    for (const auto& [e, curve] : curves) {
        for (const LdpRow& r : curve.rows) {
            csv.row({num(r.epsilon), num(r.delta), num(r.estimate.p_hat), num(r.estimate.std_err), num(r.minus_eps_log_p),
                     num(curve.reference_rate), estimator_name(e), num(r.estimate.n_samples), num(r.estimate.hits),
                     r.zero_hits ? "true" : "false", num(r.band_lo), num(r.band_hi)});
        }
    }
    return {{"ldp.csv", csv.str()}};
}

double relative_error(const ProbEstimate& e) {
    return e.p_hat > 0.0 ? e.std_err / e.p_hat : std::numeric_limits<double>::infinity();
}

std::vector<Artifact> cmd_is_compare(const Context& ctx) {
    const Scenario& s = ctx.scenario;
    struct Pair {
        double epsilon;
        ProbEstimate naive, is;
        double z;
    };
    std::vector<Pair> rows;
    for (std::size_t r = 0; r < ctx.config.epsilons.size(); ++r) {
        SdeSetup setup = s.setup;
        setup.epsilon = ctx.config.epsilons[r];
        Pair p{setup.epsilon, ball_probability_naive(setup, s.ball, ctx.mc(), ctx.root.child("naive").child(r)),
               ball_probability_is(setup, s.ball, ctx.mc(), ctx.root.child("is").child(r)), 0.0};
        const double se = std::hypot(p.naive.std_err, p.is.std_err);
        p.z = se > 0.0 ? (p.is.p_hat - p.naive.p_hat) / se : 0.0;
        rows.push_back(p);
    }
    if (ctx.format == Format::Json) {
        json out = json::array();
        for (const Pair& p : rows) {
            out.push_back({{"epsilon", p.epsilon},
                           {"delta", s.ball.delta},
                           {"p_naive", p.naive.p_hat},
                           {"std_err_naive", p.naive.std_err},
                           {"p_is", p.is.p_hat},
                           {"std_err_is", p.is.std_err},
                           {"z", p.z},
                           {"rel_err_naive", jnum(relative_error(p.naive))},
                           {"rel_err_is", jnum(relative_error(p.is))},
                           {"hits_naive", p.naive.hits},
                           {"hits_is", p.is.hits}});
        }
        return {{"is_compare.json", dump(json{{"rows", out}})}};
    }
    Csv csv({"epsilon", "delta", "p_naive", "std_err_naive", "p_is", "std_err_is", "z", "rel_err_naive", "rel_err_is",
             "hits_naive", "hits_is"});
    for (const Pair& p : rows) {
        csv.row({num(p.epsilon), num(s.ball.delta), num(p.naive.p_hat), num(p.naive.std_err), num(p.is.p_hat),
                 num(p.is.std_err), num(p.z), num(relative_error(p.naive)), num(relative_error(p.is)), num(p.naive.hits),
                 num(p.is.hits)});
    }
    return {{"is_compare.csv", csv.str()}};
}

TiltField default_tilt(const KernelPath& nu, const Generator& q) {
    std::vector<std::vector<double>> cells(nu.cells());
    for (std::size_t k = 0; k < nu.cells(); ++k) cells[k] = dv_local(q, nu.kernel(k)).u_star;
    return TiltField::from_cell_values(nu.horizon(), cells);
}

std::vector<Artifact> cmd_martingale(const Context& ctx) {
    const Scenario& s = ctx.scenario;
    const TiltField tilt = ctx.config.tilt ? TiltField(ctx.config.tilt->knots, ctx.config.tilt->values)
                                           : default_tilt(s.ball.nu, s.setup.q);
    struct Row {
        std::string check;
        double epsilon;
        ProbEstimate e;
        bool pass;
    };
    std::vector<Row> rows;
    for (std::size_t r = 0; r < ctx.config.epsilons.size(); ++r) {
        const double eps = ctx.config.epsilons[r];
        const ProbEstimate m = martingale_check(s.setup.q, tilt, eps, s.setup.horizon, ctx.mc(),
                                                ctx.root.child("tilt").child(r), s.setup.initial_state);
        rows.push_back({"tilt", eps, m, std::abs(m.p_hat - 1.0) <= 3.0 * m.std_err + 1e-12});
        if (ctx.config.lambda) {
            SdeSetup setup = s.setup;
            setup.epsilon = eps;
            const StepFunction lambda{ctx.config.lambda->breaks, ctx.config.lambda->levels};
            const ProbEstimate p = martingale_product_check(setup, tilt, lambda, ctx.mc(), ctx.root.child("product").child(r));
            rows.push_back({"product", eps, p, p.p_hat <= 1.0 + 3.0 * p.std_err + 1e-12});
        }
    }
    if (ctx.format == Format::Json) {
        json out = json::array();
        for (const Row& r : rows) {
            out.push_back({{"check", r.check}, {"epsilon", r.epsilon}, {"mean", r.e.p_hat}, {"std_err", r.e.std_err},
                           {"n_samples", r.e.n_samples}, {"pass", r.pass}});
        }
        return {{"martingale.json", dump(json{{"rows", out}})}};
    }
    Csv csv({"check", "epsilon", "mean", "std_err", "n_samples", "pass"});
    for (const Row& r : rows) {
        csv.row({r.check, num(r.epsilon), num(r.e.p_hat), num(r.e.std_err), num(r.e.n_samples), r.pass ? "true" : "false"});
    }
    return {{"martingale.csv", csv.str()}};
}

} // namespace

std::vector<Artifact> run_subcommand(const std::string& name, const ExperimentConfig& config, const RunFlags& flags) {
    const auto& names = subcommands();
    if (std::find(names.begin(), names.end(), name) == names.end()) {
        fail(ErrorCode::InvalidArgument, "unknown subcommand '" + name + "'");
    }
    ExperimentConfig effective = config;
    if (flags.seed) effective.seed = *flags.seed;
    const Format default_format = (name == "rate" || name == "mlp") ? Format::Json : Format::Csv;
    Context ctx{effective, build_scenario(effective, flags.base_dir), flags.format.value_or(default_format),
                flags.threads == 0 ? default_threads() : flags.threads, StreamKey(effective.seed).child(name)};

    if (name == "simulate") return cmd_simulate(ctx);
    if (name == "rate") return cmd_rate(ctx);
    if (name == "dv") return cmd_dv(ctx);
    if (name == "mlp") return cmd_mlp(ctx);
    if (name == "ldp-verify") return cmd_ldp(ctx);
    if (name == "is-compare") return cmd_is_compare(ctx);
    return cmd_martingale(ctx);
}

void write_artifacts(const std::filesystem::path& dir, const std::vector<Artifact>& artifacts) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());

    std::vector<fs::path> temps;
    auto cleanup = [&] {
        for (const auto& t : temps) fs::remove(t, ec);
    };
    for (const Artifact& a : artifacts) {
        const fs::path tmp = dir / ("." + a.name + ".tmp");
        temps.push_back(tmp);
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << a.content;
        out.close();
        if (!out) {
            cleanup();
            fail(ErrorCode::IoError, "cannot write " + tmp.string());
        }
    }
    for (std::size_t k = 0; k < artifacts.size(); ++k) {
        fs::rename(temps[k], dir / artifacts[k].name, ec);
        if (ec) {
            cleanup();
            fail(ErrorCode::IoError, "cannot rename " + temps[k].string() + ": " + ec.message());
        }
    }
}

} // namespace mmldp::cli
