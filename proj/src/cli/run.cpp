#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmldp/cli.hpp"

namespace mmldp::cli {

namespace {

void diagnostic(const nlohmann::json& j) { std::cerr << j.dump() << std::endl; }

int report(const Error& e) {
    nlohmann::json j{{"status", "error"}, {"code", error_code_name(e.code())}, {"message", e.what()}};
    if (const auto* c = dynamic_cast<const ConfigError*>(&e)) j["field"] = c->field();
    if (const auto* p = dynamic_cast<const ParseFailure*>(&e)) {
        j["line"] = p->line();
        j["column"] = p->column();
    }
    diagnostic(j);
    return is_numerical(e.code()) ? 2 : 1;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot read config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Markov-modulated small-noise diffusion: rates, most likely paths and Monte Carlo checks", "mmldp"};
    app.footer(config_reference());
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    unsigned threads = 0;
    std::uint64_t seed = 0;
    std::string format;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out", out_dir, "output directory (default: config output_dir)");
    app.add_option("--threads", threads, "worker threads, 0 = machine parallelism")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
    app.add_option("--format", format, "csv or json (default json for rate and mlp, csv otherwise)")
        ->check(CLI::IsMember({"csv", "json"}));

    const std::vector<std::pair<std::string, std::string>> help{
        {"simulate", "trajectories of the diffusion and the chain"},
        {"rate", "joint rate of the configured ball center"},
        {"dv", "local occupation rate and optimal tilt for each rho"},
        {"mlp", "most likely path to mlp.target"},
        {"ldp-verify", "-eps log p over the epsilon sweep"},
        {"is-compare", "naive and importance sampling estimates side by side"},
        {"martingale", "Monte Carlo mean of the likelihood-ratio martingales"},
    };
    for (const auto& [name, text] : help) app.add_subcommand(name, text)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        diagnostic({{"status", "error"}, {"code", "InvalidArgument"}, {"message", e.what()}});
        return 1;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        const std::filesystem::path path(config_path);
        const ExperimentConfig config = parse_config(read_file(path));
        RunFlags flags;
        flags.threads = threads;
        if (seed_opt->count()) flags.seed = seed;
        if (!format.empty()) flags.format = format == "json" ? Format::Json : Format::Csv;
        flags.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
        const std::filesystem::path dir(out_dir.empty() ? config.output_dir : out_dir);

        const auto artifacts = run_subcommand(name, config, flags);
        write_artifacts(dir, artifacts);
        nlohmann::json files = nlohmann::json::array();
        for (const auto& a : artifacts) files.push_back((dir / a.name).string());
        diagnostic({{"status", "ok"}, {"subcommand", name}, {"files", files}});
        return 0;
    } catch (const Error& e) {
        return report(e);
    } catch (const std::exception& e) {
        diagnostic({{"status", "error"}, {"code", "Internal"}, {"message", e.what()}});
        return 2;
    }
}

} // namespace mmldp::cli
