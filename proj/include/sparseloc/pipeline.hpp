#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sparseloc/geometry.hpp"
#include "sparseloc/models.hpp"

namespace sparseloc::pipeline {

/// Invalid experiment config; `field` is the dotted path of the offending
/// entry and `line` its 1-based line in the config text (0 if unknown).
struct ConfigError : std::runtime_error {
    ConfigError(std::string field, int line, const std::string& msg);
    std::string field;
    int line = 0;
};

struct CertifyParams {
    double eps = 0.0;
    std::vector<double> gammas;
    std::optional<double> a;   // fixed growth factor
    std::optional<int> ell;    // fixed ℓ, a = 1 + 1/ℓ
    std::optional<int> n_min;  // default: first nondegenerate n
    int n_count = 6;
    double resolution = 0.01;
    int k = 5;
};

struct Quasi1DParams {
    double eps = 0.0;
    std::vector<double> gammas;
    double a = 0.0;
    double alpha = 2.0;
    std::optional<int> n_min;
    int n_count = 6;
    double resolution = 0.01;
    int k = 5;
};

struct LemmaParams {
    double eps = 0.0;
    double a = 0.0;
    int n_min = 1;
    int n_max = 1;
    std::uint64_t trials = 10000;
    int exact_budget = 20;
};

struct SpectralParams {
    geometry::Box box;
    double h = 0.0;
    double coupling_scale = 1.0;
    int max_doublings = 0;
    std::vector<double> energies;  // resolvent probes on the background operator
    double resolution = 1e-3;
    std::size_t bulk_states = 200;
    double fit_quality = 0.9;
};

struct ExperimentConfig {
    std::string pipeline;  // certify-sparse, certify-quasi1d, lemma-mc, spectral-probe, full-report
    std::shared_ptr<const models::RandomPotentialModel> model;
    std::string model_json;  // canonical model description
    std::vector<std::uint64_t> seeds;
    std::string output_dir;  // resolved against the config's directory
    std::optional<CertifyParams> certify;
    std::optional<Quasi1DParams> quasi1d;
    std::optional<LemmaParams> lemma;
    std::optional<SpectralParams> spectral;
    std::string canonical;  // canonical dump of the whole config
    std::string hash;       // FNV-1a of `canonical`, hex
};

/// Parses and validates a config. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

struct StageRecord {
    std::string name;  // sample, construct, certify, estimate, spectral
    std::vector<std::string> files;  // relative to the output directory
    double wall_seconds = 0.0;
    bool ok = true;
    std::string error;
};

struct RunManifest {
    std::string config_hash;
    std::string tool_version;
    std::string pipeline;
    std::string output_dir;
    std::vector<std::uint64_t> seeds;
    std::vector<StageRecord> stages;
    bool ok() const;
};

/// Runs the configured stages in order and writes data files plus
/// manifest.jsonl. A failing stage is recorded and stops the run.
RunManifest run(const ExperimentConfig& config);

std::string manifest_to_jsonl(const RunManifest& m);
RunManifest manifest_from_jsonl(const std::string& text, const std::string& output_dir);
RunManifest read_manifest(const std::string& path);

/// Per-figure CSV series under `<output_dir>/plotdata`. Throws
/// InvalidArgument on an empty manifest or missing stage outputs.
std::vector<std::string> emit_plotdata(const RunManifest& m);

std::string fnv1a_hex(const std::string& text);

}  // namespace sparseloc::pipeline
