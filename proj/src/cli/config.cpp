#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmldp/cli.hpp"
#include "mmldp/pathopt.hpp"

namespace mmldp::cli {

using json = nlohmann::json;

ParseFailure::ParseFailure(std::size_t line, std::size_t column, const std::string& message)
    : Error(ErrorCode::ParseError,
            "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line), column_(column) {}

std::string format_number(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

namespace {

[[noreturn]] void invalid(const std::string& field, const std::string& message) { throw ConfigError(field, message); }

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

// Reads one JSON object and remembers which keys were consumed, so leftovers
// can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string prefix) : obj_(j), prefix_(std::move(prefix)) {
        if (!obj_.is_object()) invalid(prefix_.empty() ? "config" : prefix_, "expected an object");
    }

    const json* get(const std::string& key) {
        seen_.insert(key);
        const auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    const json& require(const std::string& key) {
        const json* j = get(key);
        if (!j) invalid(field(key), "required key is missing");
        return *j;
    }

    std::string field(const std::string& key) const { return join(prefix_, key); }

    void reject_unknown() const {
        for (const auto& [key, value] : obj_.items()) {
            if (!seen_.count(key)) invalid(field(key), "unknown key");
        }
    }

private:
    const json& obj_;
    std::string prefix_;
    std::set<std::string> seen_;
};

double as_number(const json& j, const std::string& field) {
    if (!j.is_number()) invalid(field, "expected a number");
    const double x = j.get<double>();
    if (!std::isfinite(x)) invalid(field, "must be finite");
    return x;
}

long long as_integer(const json& j, const std::string& field) {
    if (j.is_number_unsigned()) {
        const auto v = j.get<std::uint64_t>();
        if (v > static_cast<std::uint64_t>(std::numeric_limits<long long>::max())) invalid(field, "out of range");
        return static_cast<long long>(v);
    }
    if (!j.is_number_integer()) invalid(field, "expected an integer");
    return j.get<long long>();
}

std::string as_string(const json& j, const std::string& field) {
    if (!j.is_string()) invalid(field, "expected a string");
    return j.get<std::string>();
}

std::vector<double> as_vector(const json& j, const std::string& field) {
    if (!j.is_array()) invalid(field, "expected an array of numbers");
    std::vector<double> v;
    for (std::size_t k = 0; k < j.size(); ++k) v.push_back(as_number(j[k], field + "[" + std::to_string(k) + "]"));
    return v;
}

std::vector<std::vector<double>> as_matrix(const json& j, const std::string& field) {
    if (!j.is_array()) invalid(field, "expected an array of arrays");
    std::vector<std::vector<double>> m;
    for (std::size_t k = 0; k < j.size(); ++k) m.push_back(as_vector(j[k], field + "[" + std::to_string(k) + "]"));
    return m;
}

std::pair<double, double> as_pair(const json& j, const std::string& field) {
    const auto v = as_vector(j, field);
    if (v.size() != 2) invalid(field, "expected [constant, slope]");
    return {v[0], v[1]};
}

const char* ball_name(BallKind k) { return k == BallKind::Joint ? "joint" : "occupation"; }
const char* sampler_name(Sampler s) {
    switch (s) {
    case Sampler::Naive: return "naive";
    case Sampler::Importance: return "is";
    case Sampler::Both: return "both";
    }
    return "both";
}
const char* phi_kind_name(PhiSource::Kind k) {
    switch (k) {
    case PhiSource::Kind::StraightLine: return "straight_line";
    case PhiSource::Kind::ZeroCost: return "zero_cost";
    case PhiSource::Kind::File: return "file";
    }
    return "straight_line";
}
const char* nu_kind_name(NuSource::Kind k) {
    switch (k) {
    case NuSource::Kind::Invariant: return "invariant";
    case NuSource::Kind::Constant: return "constant";
    case NuSource::Kind::File: return "file";
    }
    return "invariant";
}

void check_simplex(const std::vector<double>& w, std::size_t d, const std::string& field) {
    if (w.size() != d) invalid(field, "expected " + std::to_string(d) + " weights, got " + std::to_string(w.size()));
    try {
        (void)SimplexPoint::from(w);
    } catch (const Error& e) {
        invalid(field, e.what());
    }
}

void validate(const ExperimentConfig& c) {
    if (c.schema != kSchemaVersion) invalid("schema", "unsupported version " + std::to_string(c.schema));
    if (c.model.empty()) invalid("model", "at least one regime is required");
    try {
        RegimeModel model(c.model);
    } catch (const Error& e) {
        invalid("model", e.what());
    }
    const std::size_t d = c.model.size();
    if (c.generator.size() != d) {
        invalid("generator.d", "model has " + std::to_string(d) + " states but generator has " +
                                   std::to_string(c.generator.size()) + " rows");
    }
    Eigen::MatrixXd rates(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        if (c.generator[i].size() != d) {
            invalid("generator.d", "row " + std::to_string(i + 1) + " has " + std::to_string(c.generator[i].size()) +
                                       " entries, expected " + std::to_string(d));
        }
        for (std::size_t j = 0; j < d; ++j) rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.generator[i][j];
    }
    try {
        (void)Generator::validate(rates);
    } catch (const Error& e) {
        invalid("generator", e.what());
    }
    if (!(c.horizon > 0.0) || !std::isfinite(c.horizon)) invalid("horizon", "must be positive");
    if (c.n < 1) invalid("n", "must be at least 1");
    if (!(c.dt > 0.0) || c.dt > c.horizon) invalid("dt", "must satisfy 0 < dt <= horizon");
    if (c.epsilons.empty()) invalid("epsilons", "at least one value is required");
    for (std::size_t k = 0; k < c.epsilons.size(); ++k) {
        if (!(c.epsilons[k] > 0.0) || !std::isfinite(c.epsilons[k])) invalid("epsilons", "values must be positive");
        if (k > 0 && !(c.epsilons[k] < c.epsilons[k - 1])) invalid("epsilons", "values must be strictly decreasing");
    }
    if (!(c.delta >= 0.0) || !std::isfinite(c.delta)) invalid("delta", "must be nonnegative");
    if (!std::isfinite(c.phi.target)) invalid("phi.target", "must be finite");
    if (c.phi.kind == PhiSource::Kind::File && c.phi.path.empty()) invalid("phi.path", "required for kind file");
    if (c.nu.kind == NuSource::Kind::Constant) check_simplex(c.nu.weights, d, "nu.weights");
    if (c.nu.kind == NuSource::Kind::File && c.nu.path.empty()) invalid("nu.path", "required for kind file");
    if (c.n_samples < 1) invalid("n_samples", "must be at least 1");
    if (!(c.gamma >= 0.0) || !std::isfinite(c.gamma)) invalid("gamma", "must be nonnegative");
    if (c.initial_state < -1 || c.initial_state >= static_cast<int>(d)) {
        invalid("initial_state", "must be -1 or a state index below " + std::to_string(d));
    }
    for (std::size_t k = 0; k < c.rhos.size(); ++k) check_simplex(c.rhos[k], d, "rhos[" + std::to_string(k) + "]");
    if (c.tilt) {
        const auto& t = *c.tilt;
        if (t.knots.empty()) invalid("tilt.knots", "at least one knot is required");
        if (t.values.size() != t.knots.size()) invalid("tilt.values", "need one vector per knot");
        for (std::size_t k = 1; k < t.knots.size(); ++k) {
            if (!(t.knots[k] > t.knots[k - 1])) invalid("tilt.knots", "must be strictly increasing");
        }
        for (const auto& v : t.values) {
            if (v.size() != d) invalid("tilt.values", "each vector needs " + std::to_string(d) + " entries");
            for (double x : v) {
                if (!(x > 0.0)) invalid("tilt.values", "entries must be strictly positive");
            }
        }
    }
    if (c.lambda) {
        const auto& l = *c.lambda;
        if (l.levels.size() != l.breaks.size() + 1) invalid("lambda.levels", "need exactly one more level than breaks");
        for (std::size_t k = 0; k < l.breaks.size(); ++k) {
            if (!(l.breaks[k] > 0.0 && l.breaks[k] < c.horizon)) invalid("lambda.breaks", "must lie inside (0, horizon)");
            if (k > 0 && !(l.breaks[k] > l.breaks[k - 1])) invalid("lambda.breaks", "must be strictly increasing");
        }
    }
    if (!std::isfinite(c.mlp.target)) invalid("mlp.target", "must be finite");
    if (c.mlp.max_rounds < 1) invalid("mlp.max_rounds", "must be at least 1");
    if (!(c.mlp.tolerance > 0.0)) invalid("mlp.tolerance", "must be positive");
    if (c.paths < 1) invalid("paths", "must be at least 1");
    if (c.output_dir.empty()) invalid("output_dir", "must not be empty");
}

std::size_t as_count(const json& j, const std::string& field) {
    const long long v = as_integer(j, field);
    if (v < 0) invalid(field, "must be nonnegative");
    return static_cast<std::size_t>(v);
}

Regime read_regime(const json& j, const std::string& prefix) {
    ObjectReader r(j, prefix);
    Regime g;
    std::tie(g.drift0, g.drift1) = as_pair(r.require("drift"), r.field("drift"));
    std::tie(g.diffusion0, g.diffusion1) = as_pair(r.require("diffusion"), r.field("diffusion"));
    r.reject_unknown();
    return g;
}

PhiSource read_phi(const json& j) {
    ObjectReader r(j, "phi");
    PhiSource p;
    if (const json* v = r.get("kind")) {
        const std::string kind = as_string(*v, "phi.kind");
        if (kind == "straight_line") p.kind = PhiSource::Kind::StraightLine;
        else if (kind == "zero_cost") p.kind = PhiSource::Kind::ZeroCost;
        else if (kind == "file") p.kind = PhiSource::Kind::File;
        else invalid("phi.kind", "expected straight_line, zero_cost or file");
    }
    if (const json* v = r.get("target")) p.target = as_number(*v, "phi.target");
    if (const json* v = r.get("path")) p.path = as_string(*v, "phi.path");
    r.reject_unknown();
    return p;
}

NuSource read_nu(const json& j) {
    ObjectReader r(j, "nu");
    NuSource n;
    if (const json* v = r.get("kind")) {
        const std::string kind = as_string(*v, "nu.kind");
        if (kind == "invariant") n.kind = NuSource::Kind::Invariant;
        else if (kind == "constant") n.kind = NuSource::Kind::Constant;
        else if (kind == "file") n.kind = NuSource::Kind::File;
        else invalid("nu.kind", "expected invariant, constant or file");
    }
    if (const json* v = r.get("weights")) n.weights = as_vector(*v, "nu.weights");
    if (const json* v = r.get("path")) n.path = as_string(*v, "nu.path");
    if (n.kind == NuSource::Kind::Constant && !r.get("weights")) invalid("nu.weights", "required for kind constant");
    r.reject_unknown();
    return n;
}

std::size_t line_of(const std::string& text, std::size_t byte, std::size_t* column) {
    // nlohmann reports the 1-based index of the last byte read
    const std::size_t end = std::min(byte == 0 ? 0 : byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k < end; ++k) {
        if (text[k] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    *column = col;
    return line;
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t column = 0;
        const std::size_t line = line_of(text, e.byte, &column);
        std::string what = e.what();
        // drop the library's own "[json.exception...] syntax error while parsing value - " prefix
        const auto dash = what.find(" - ");
        throw ParseFailure(line, column, dash == std::string::npos ? what : what.substr(dash + 3));
    }

    ExperimentConfig c;
    ObjectReader r(doc, "");
    c.schema = static_cast<int>(as_integer(r.require("schema"), "schema"));
    const json& model = r.require("model");
    if (!model.is_array()) invalid("model", "expected an array of regimes");
    for (std::size_t k = 0; k < model.size(); ++k) c.model.push_back(read_regime(model[k], "model[" + std::to_string(k) + "]"));
    c.generator = as_matrix(r.require("generator"), "generator");
    if (const json* v = r.get("horizon")) c.horizon = as_number(*v, "horizon");
    if (const json* v = r.get("n")) c.n = as_count(*v, "n");
    if (const json* v = r.get("dt")) c.dt = as_number(*v, "dt");
    if (const json* v = r.get("epsilons")) c.epsilons = as_vector(*v, "epsilons");
    if (const json* v = r.get("delta")) c.delta = as_number(*v, "delta");
    if (const json* v = r.get("ball")) {
        const std::string b = as_string(*v, "ball");
        if (b == "joint") c.ball = BallKind::Joint;
        else if (b == "occupation") c.ball = BallKind::Occupation;
        else invalid("ball", "expected joint or occupation");
    }
    if (const json* v = r.get("phi")) c.phi = read_phi(*v);
    if (const json* v = r.get("nu")) c.nu = read_nu(*v);
    if (const json* v = r.get("sampler")) {
        const std::string s = as_string(*v, "sampler");
        if (s == "naive") c.sampler = Sampler::Naive;
        else if (s == "is") c.sampler = Sampler::Importance;
        else if (s == "both") c.sampler = Sampler::Both;
        else invalid("sampler", "expected naive, is or both");
    }
    if (const json* v = r.get("n_samples")) c.n_samples = as_count(*v, "n_samples");
    if (const json* v = r.get("seed")) {
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
            invalid("seed", "expected a nonnegative 64-bit integer");
        }
        c.seed = v->get<std::uint64_t>();
    }
    if (const json* v = r.get("gamma")) c.gamma = as_number(*v, "gamma");
    if (const json* v = r.get("initial_state")) {
        const long long s = as_integer(*v, "initial_state");
        if (s < -1 || s > std::numeric_limits<int>::max()) invalid("initial_state", "out of range");
        c.initial_state = static_cast<int>(s);
    }
    if (const json* v = r.get("rhos")) c.rhos = as_matrix(*v, "rhos");
    if (const json* v = r.get("tilt"); v && !v->is_null()) {
        ObjectReader t(*v, "tilt");
        TiltSpec spec;
        spec.knots = as_vector(t.require("knots"), "tilt.knots");
        spec.values = as_matrix(t.require("values"), "tilt.values");
        t.reject_unknown();
        c.tilt = std::move(spec);
    }
    if (const json* v = r.get("lambda"); v && !v->is_null()) {
        ObjectReader l(*v, "lambda");
        StepSpec spec;
        spec.breaks = as_vector(l.require("breaks"), "lambda.breaks");
        spec.levels = as_vector(l.require("levels"), "lambda.levels");
        l.reject_unknown();
        c.lambda = std::move(spec);
    }
    if (const json* v = r.get("mlp")) {
        ObjectReader m(*v, "mlp");
        if (const json* x = m.get("target")) c.mlp.target = as_number(*x, "mlp.target");
        if (const json* x = m.get("max_rounds")) {
            const long long rounds = as_integer(*x, "mlp.max_rounds");
            if (rounds < 1 || rounds > std::numeric_limits<int>::max()) invalid("mlp.max_rounds", "out of range");
            c.mlp.max_rounds = static_cast<int>(rounds);
        }
        if (const json* x = m.get("tolerance")) c.mlp.tolerance = as_number(*x, "mlp.tolerance");
        m.reject_unknown();
    }
    if (const json* v = r.get("paths")) c.paths = as_count(*v, "paths");
    if (const json* v = r.get("output_dir")) c.output_dir = as_string(*v, "output_dir");
    r.reject_unknown();

    validate(c);
    return c;
}

std::string serialize_config(const ExperimentConfig& c) {
    json j;
    j["schema"] = c.schema;
    j["model"] = json::array();
    for (const Regime& g : c.model) {
        j["model"].push_back({{"drift", {g.drift0, g.drift1}}, {"diffusion", {g.diffusion0, g.diffusion1}}});
    }
    j["generator"] = c.generator;
    j["horizon"] = c.horizon;
    j["n"] = c.n;
    j["dt"] = c.dt;
    j["epsilons"] = c.epsilons;
    j["delta"] = c.delta;
    j["ball"] = ball_name(c.ball);
    j["phi"] = {{"kind", phi_kind_name(c.phi.kind)}, {"target", number_or_null(c.phi.target)}, {"path", c.phi.path}};
    j["nu"] = {{"kind", nu_kind_name(c.nu.kind)}, {"weights", c.nu.weights}, {"path", c.nu.path}};
    j["sampler"] = sampler_name(c.sampler);
    j["n_samples"] = c.n_samples;
    j["seed"] = c.seed;
    j["gamma"] = c.gamma;
    j["initial_state"] = c.initial_state;
    j["rhos"] = c.rhos;
    j["tilt"] = c.tilt ? json{{"knots", c.tilt->knots}, {"values", c.tilt->values}} : json(nullptr);
    j["lambda"] = c.lambda ? json{{"breaks", c.lambda->breaks}, {"levels", c.lambda->levels}} : json(nullptr);
    j["mlp"] = {{"target", c.mlp.target}, {"max_rounds", c.mlp.max_rounds}, {"tolerance", c.mlp.tolerance}};
    j["paths"] = c.paths;
    j["output_dir"] = c.output_dir;
    return j.dump(2) + "\n";
}

std::string config_reference() {
    return R"(Config file (JSON, no comments). Required keys:
  schema          1
  model           [{"drift": [b0, b1], "diffusion": [s0, s1]}, ...]  b(x) = b0 + b1 x per state
  generator       d x d rate matrix, rows summing to 0, positive off-diagonal
Optional keys and defaults:
  horizon         1
  n               1000      cells of the ball center phi / nu
  dt              0.001     Euler step
  epsilons        [0.1]     strictly decreasing
  delta           0.2       ball radius
  ball            "joint"   or "occupation"
  phi             {"kind": "straight_line", "target": 1}  | {"kind": "zero_cost"}
                  | {"kind": "file", "path": "phi.json"}  file: {"horizon": T, "values": [...]}
  nu              {"kind": "invariant"} | {"kind": "constant", "weights": [...]}
                  | {"kind": "file", "path": "nu.json"}   file: {"horizon": T, "weights": [[...], ...]}
  sampler         "both"    naive | is | both
  n_samples       10000
  seed            0
  gamma           0         extra independent noise sqrt(eps) gamma dW
  initial_state   -1        -1 draws X_0 from the invariant distribution
  rhos            []        dv inputs; empty uses the invariant distribution
  tilt            null      martingale tilt {"knots": [...], "values": [[...], ...]}; null uses u* of nu
  lambda          null      step function {"breaks": [...], "levels": [...]} for the product check
  mlp             {"target": 1, "max_rounds": 200, "tolerance": 1e-9}
  paths           1         simulate: number of trajectories
  output_dir      "."
States are numbered from 0.)";
}

namespace {

json load_json_file(const std::filesystem::path& path, const std::string& field) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, field + ": cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::parse_error& e) {
        invalid(field, path.string() + " is not valid JSON");
    }
}

void check_file_horizon(ObjectReader& r, double horizon, const std::string& field) {
    const double t = as_number(r.require("horizon"), field + ".horizon");
    if (std::abs(t - horizon) > 1e-12 * std::max(1.0, horizon)) invalid(field, "file horizon differs from config horizon");
}

} // namespace

Scenario build_scenario(const ExperimentConfig& c, const std::filesystem::path& base_dir) {
    validate(c);
    const std::size_t d = c.model.size();
    Eigen::MatrixXd rates(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) rates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.generator[i][j];
    }
    SdeSetup setup{RegimeModel(c.model), Generator::validate(rates), c.epsilons.front(), c.horizon, c.dt, c.gamma,
                   c.initial_state};

    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };

    std::optional<PathGrid> phi;
    switch (c.phi.kind) {
    case PhiSource::Kind::StraightLine:
        phi = PathGrid::straight_line(c.horizon, c.n, c.phi.target);
        break;
    case PhiSource::Kind::ZeroCost:
        phi = zero_cost_path(setup.model, setup.q, c.horizon, c.n);
        break;
    case PhiSource::Kind::File: {
        const json j = load_json_file(resolve(c.phi.path), "phi.path");
        ObjectReader r(j, "phi.path");
        check_file_horizon(r, c.horizon, "phi.path");
        std::vector<double> values = as_vector(r.require("values"), "phi.path.values");
        r.reject_unknown();
        if (values.size() != c.n + 1) invalid("phi.path", "expected n + 1 = " + std::to_string(c.n + 1) + " values");
        try {
            phi = PathGrid(c.horizon, std::move(values));
        } catch (const Error& e) {
            invalid("phi.path", e.what());
        }
        break;
    }
    }

    std::optional<KernelPath> nu;
    switch (c.nu.kind) {
    case NuSource::Kind::Invariant:
        nu = KernelPath::constant(invariant_distribution(setup.q), c.horizon, c.n);
        break;
    case NuSource::Kind::Constant:
        nu = KernelPath::constant(SimplexPoint::from(c.nu.weights), c.horizon, c.n);
        break;
    case NuSource::Kind::File: {
        const json j = load_json_file(resolve(c.nu.path), "nu.path");
        ObjectReader r(j, "nu.path");
        check_file_horizon(r, c.horizon, "nu.path");
        const auto rows = as_matrix(r.require("weights"), "nu.path.weights");
        r.reject_unknown();
        if (rows.size() != c.n) invalid("nu.path", "expected n = " + std::to_string(c.n) + " kernel rows");
        std::vector<double> flat;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            check_simplex(rows[k], d, "nu.path.weights[" + std::to_string(k) + "]");
            flat.insert(flat.end(), rows[k].begin(), rows[k].end());
        }
        nu = KernelPath(c.horizon, static_cast<int>(d), std::move(flat));
        break;
    }
    }

    return Scenario{std::move(setup), Ball{std::move(*phi), std::move(*nu), c.delta, c.ball}};
}

} // namespace mmldp::cli
