#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmldp/error.hpp"
#include "mmldp/montecarlo.hpp"
#include "mmldp/ratefn.hpp"

namespace mmldp::cli {

inline constexpr int kSchemaVersion = 1;

/// Validation failure tied to one config field ("generator.d", "epsilons", ...).
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(ErrorCode::ValidationError, field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Malformed JSON, with 1-based line and column of the offending byte.
class ParseFailure : public Error {
public:
    ParseFailure(std::size_t line, std::size_t column, const std::string& message);

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

struct PhiSource {
    enum class Kind { StraightLine, ZeroCost, File };
    Kind kind = Kind::StraightLine;
    double target = 1.0;  // straight line from 0 to target
    std::string path;     // JSON file {"horizon": T, "values": [...]}

    friend bool operator==(const PhiSource&, const PhiSource&) = default;
};

struct NuSource {
    enum class Kind { Invariant, Constant, File };
    Kind kind = Kind::Invariant;
    std::vector<double> weights;  // constant kernel
    std::string path;             // JSON file {"horizon": T, "weights": [[...], ...]}

    friend bool operator==(const NuSource&, const NuSource&) = default;
};

enum class Sampler { Naive, Importance, Both };

struct TiltSpec {
    std::vector<double> knots;
    std::vector<std::vector<double>> values;

    friend bool operator==(const TiltSpec&, const TiltSpec&) = default;
};

struct StepSpec {
    std::vector<double> breaks;
    std::vector<double> levels;

    friend bool operator==(const StepSpec&, const StepSpec&) = default;
};

struct MlpSpec {
    double target = 1.0;
    int max_rounds = 200;
    double tolerance = 1e-9;

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct ExperimentConfig {
    int schema = kSchemaVersion;
    std::vector<Regime> model;
    std::vector<std::vector<double>> generator;
    double horizon = 1.0;
    std::size_t n = 1000;          // cells of phi and nu
    double dt = 1e-3;              // Euler step
    std::vector<double> epsilons{0.1};
    double delta = 0.2;
    BallKind ball = BallKind::Joint;
    PhiSource phi;
    NuSource nu;
    Sampler sampler = Sampler::Both;
    std::size_t n_samples = 10000;
    std::uint64_t seed = 0;
    double gamma = 0.0;
    int initial_state = -1;        // -1: draw from the invariant distribution
    std::vector<std::vector<double>> rhos;  // dv inputs; empty means the invariant distribution
    std::optional<TiltSpec> tilt;  // martingale tilt; default is u* of the center kernel
    std::optional<StepSpec> lambda;
    MlpSpec mlp;
    std::size_t paths = 1;         // simulate: number of trajectories
    std::string output_dir = ".";

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses and validates a JSON document. Throws ParseFailure or ConfigError.
ExperimentConfig parse_config(const std::string& text);

/// Canonical JSON: sorted keys, every field written, shortest round-trip doubles.
std::string serialize_config(const ExperimentConfig& config);

/// Text shown in --help listing every key with its default.
std::string config_reference();

/// Resolved inputs of a run: validated model, generator and ball center.
struct Scenario {
    SdeSetup setup;
    Ball ball;
};

/// Loads file sources (relative to base_dir) and builds the ball center.
Scenario build_scenario(const ExperimentConfig& config, const std::filesystem::path& base_dir);

enum class Format { Csv, Json };

struct RunFlags {
    std::filesystem::path out_dir;      // empty: config output_dir
    unsigned threads = 0;               // 0: machine parallelism
    std::optional<std::uint64_t> seed;  // overrides the config seed
    std::optional<Format> format;       // default json for rate/mlp, csv otherwise
    std::filesystem::path base_dir = ".";
};

struct Artifact {
    std::string name;
    std::string content;
};

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"simulate", "rate", "dv", "mlp", "ldp-verify", "is-compare", "martingale"};
    return names;
}

/// Runs one subcommand and returns the files it would write; nothing touches disk.
std::vector<Artifact> run_subcommand(const std::string& name, const ExperimentConfig& config, const RunFlags& flags);

/// Writes every artifact to a temporary name first, then renames them into place.
void write_artifacts(const std::filesystem::path& dir, const std::vector<Artifact>& artifacts);

/// Full command line entry point. Returns 0, 1 (validation) or 2 (numerical) and
/// prints a one-line JSON diagnostic on stderr.
int run_cli(int argc, const char* const* argv);

/// printf("%.12g")
std::string format_number(double x);

} // namespace mmldp::cli
