#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "sparseloc/pipeline.hpp"
#include "sparseloc/stochastic.hpp"

using namespace sparseloc;

namespace {

constexpr int kStageFailure = 1;
constexpr int kInvalidConfig = 2;

void report_config_error(const std::string& path, const pipeline::ConfigError& e) {
    std::cerr << path;
    if (e.line > 0) std::cerr << ":" << e.line;
    std::cerr << ": invalid config: " << e.what() << "\n";
}

int cmd_run(const std::string& path) {
    pipeline::ExperimentConfig cfg;
    try {
        cfg = pipeline::load_config(path);
    } catch (const pipeline::ConfigError& e) {
        report_config_error(path, e);
        return kInvalidConfig;
    }
    const auto m = pipeline::run(cfg);
    for (const auto& s : m.stages) {
        std::cout << s.name << ": " << (s.ok ? "ok" : "error") << " (" << s.wall_seconds << " s)";
        for (const auto& f : s.files) std::cout << " " << f;
        std::cout << "\n";
        if (!s.ok) std::cerr << "stage " << s.name << " failed: " << s.error << "\n";
    }
    std::cout << "manifest: " << cfg.output_dir << "/manifest.jsonl\n";
    return m.ok() ? 0 : kStageFailure;
}

int cmd_validate(const std::string& path) {
    try {
        const auto cfg = pipeline::load_config(path);
        std::cout << "ok " << cfg.pipeline << " " << cfg.hash << "\n";
        return 0;
    } catch (const pipeline::ConfigError& e) {
        report_config_error(path, e);
        return kInvalidConfig;
    }
}

int cmd_plotdata(const std::string& path) {
    try {
        for (const auto& f : pipeline::emit_plotdata(pipeline::read_manifest(path))) std::cout << f << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "plotdata: " << e.what() << "\n";
        return kStageFailure;
    }
}

struct OracleArgs {
    std::string model_file;
    double eps = 0.0;
    double a = 0.0;
    int n = 1;
    int max_sites = 24;
    std::uint64_t trials = 0;
    std::uint64_t seed = 1;
};

int cmd_oracle_an(const OracleArgs& o) {
    std::ifstream in(o.model_file);
    if (!in) {
        std::cerr << "oracle an: cannot open '" << o.model_file << "'\n";
        return kInvalidConfig;
    }
    std::ostringstream text;
    text << in.rdbuf();
    try {
        const auto model = models::model_from_json(text.str());
        nlohmann::json out{{"eps", o.eps}, {"a", o.a}, {"n", o.n}};
        out["exact"] = stochastic::brute_force_a_n(model, o.eps, o.a, o.n, o.max_sites);
        if (o.trials > 0) {
            const auto e = stochastic::estimate_a_n(model, o.eps, o.a, o.n, o.trials, o.seed);
            out["estimate"] = e.value;
            out["std_error"] = e.std_error;
            out["trials"] = e.trials;
            out["seed"] = o.seed;
        }
        std::cout << out.dump() << "\n";
        return 0;
    } catch (const InvalidArgument& e) {
        std::cerr << "oracle an: " << e.what() << "\n";
        return kInvalidConfig;
    } catch (const std::exception& e) {
        std::cerr << "oracle an: " << e.what() << "\n";
        return kStageFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparseloc: certification and numerics for sparse random potentials"};
    app.set_version_flag("--version", SPARSELOC_VERSION);
    app.require_subcommand(1);

    std::string config, manifest;
    auto* run = app.add_subcommand("run", "Run the pipeline described by a config file");
    run->add_option("config", config, "Config file (JSON)")->required();
    auto* validate = app.add_subcommand("validate", "Check a config file without running it");
    validate->add_option("config", config, "Config file (JSON)")->required();
    auto* plot = app.add_subcommand("plotdata", "Write per-figure CSV series from a run manifest");
    plot->add_option("manifest", manifest, "manifest.jsonl of a finished run")->required();

    OracleArgs o;
    auto* oracle = app.add_subcommand("oracle", "Exact reference computations");
    oracle->require_subcommand(1);
    auto* an = oracle->add_subcommand("an", "Brute-force a_n by pattern enumeration");
    an->add_option("--model", o.model_file, "Model description file (JSON)")->required();
    an->add_option("--eps", o.eps, "Freeness level")->required();
    an->add_option("--a", o.a, "Growth factor")->required();
    an->add_option("--n", o.n, "Scale index")->required();
    an->add_option("--max-sites", o.max_sites, "Enumeration budget in random sites")->capture_default_str();
    an->add_option("--trials", o.trials, "Also report a Monte Carlo estimate with this many trials");
    an->add_option("--seed", o.seed, "Seed for the Monte Carlo estimate")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kInvalidConfig;
    }

    if (*run) return cmd_run(config);
    if (*validate) return cmd_validate(config);
    if (*plot) return cmd_plotdata(manifest);
    if (*an) return cmd_oracle_an(o);
    return kInvalidConfig;
}
