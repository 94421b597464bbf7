#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sparseloc/pipeline.hpp"

using namespace sparseloc;
using namespace sparseloc::pipeline;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("sparseloc_pipeline_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const char* kModel2d = R"({
  "dimension": 2,
  "sites": {"generator": "lattice", "window_radius": 300},
  "laws": {"rule": "decaying_bernoulli", "scale": 1.0, "tau": 1.5},
  "potential": {"profile": "indicator", "height": 1.0, "radius": 0.5}
})";

const char* kModel1d = R"({
  "dimension": 1,
  "sites": {"generator": "lattice", "window_radius": 400},
  "laws": {"rule": "decaying_bernoulli", "scale": 0.3, "tau": 1.0,
           "amplitude": {"kind": "uniform", "lo": 0.5, "hi": 1.0}},
  "potential": {"profile": "indicator", "height": -3.0, "radius": 0.5}
})";

std::string certify_config(const std::string& eps = "0.1") {
    return R"({
  "pipeline": "certify-sparse",
  "model_file": "model.json",
  "seeds": [1, 2, 3, 4, 5],
  "output_dir": "out",
  "certify": {
    "eps": )" + eps + R"(,
    "gammas": [0.5, 1.0],
    "n_count": 4
  }
})";
}

std::string full_config(const std::string& out) {
    return R"({
  "pipeline": "full-report",
  "model_file": "model.json",
  "seeds": [1, 2, 3],
  "output_dir": ")" + out + R"(",
  "certify": {"eps": 0.1, "gammas": [0.5, 1.0], "n_count": 5},
  "lemma": {"eps": 0.1, "a": 2.0, "n_min": 2, "n_max": 6, "trials": 2000},
  "spectral": {"box": {"lo": [-100.125], "hi": [100.125]}, "h": 0.25, "energies": [-0.5, -1.0, -2.0]}
})";
}

ConfigError config_error(const std::string& text, const std::string& dir = ".") {
    try {
        parse_config(text, dir);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("config accepted");
    return ConfigError("", 0, "");
}

struct WorkerGuard {
    explicit WorkerGuard(int n) { setenv("SPARSELOC_WORKERS", std::to_string(n).c_str(), 1); }
    ~WorkerGuard() { unsetenv("SPARSELOC_WORKERS"); }
};

}  // namespace

TEST_CASE("certify-sparse run lists a certificate per seed and gamma") {
    auto dir = scratch("certify");
    spit(dir / "model.json", kModel2d);
    spit(dir / "config.json", certify_config());
    auto cfg = load_config((dir / "config.json").string());
    CHECK(cfg.seeds.size() == 5);
    CHECK(cfg.hash.size() == 16);
    auto m = run(cfg);
    REQUIRE(m.ok());
    REQUIRE(m.stages.size() == 3);
    CHECK(m.stages[0].name == "sample");
    CHECK(m.stages[1].name == "construct");
    CHECK(m.stages[2].name == "certify");

    std::set<std::pair<std::uint64_t, double>> cells;
    std::istringstream is(slurp(dir / "out" / "certificates.jsonl"));
    for (std::string line; std::getline(is, line);) {
        auto j = json::parse(line);
        if (j["record"] == "summary") cells.insert({j["seed"].get<std::uint64_t>(), j["gamma"].get<double>()});
    }
    CHECK(cells.size() == 10);
    for (std::uint64_t s = 1; s <= 5; ++s) {
        CHECK(cells.count({s, 0.5}));
        CHECK(cells.count({s, 1.0}));
    }
    auto back = read_manifest((dir / "out" / "manifest.jsonl").string());
    CHECK(back.config_hash == cfg.hash);
    CHECK(back.stages.size() == 3);
    CHECK(back.stages[2].files == m.stages[2].files);
}

TEST_CASE("config diagnostics name the field and line") {
    auto dir = scratch("diag");
    spit(dir / "model.json", kModel2d);

    auto e = config_error(certify_config("0"), dir.string());
    CHECK(e.field == "certify.eps");
    CHECK(e.line == 7);

    auto bad_key = certify_config();
    bad_key.replace(bad_key.find("\"n_count\""), 9, "\"n_cuont\"");
    e = config_error(bad_key, dir.string());
    CHECK(e.field == "certify.n_cuont");
    CHECK(e.line == 9);

    auto neg_gamma = certify_config();
    neg_gamma.replace(neg_gamma.find("0.5, 1.0"), 8, "0.5, -1");
    CHECK(config_error(neg_gamma, dir.string()).field == "certify.gammas[1]");

    CHECK(config_error(certify_config(), (dir / "missing").string()).field == "model_file");
    CHECK(config_error("{\n  \"pipeline\": \"certify-sparse\",\n  oops\n}").line == 3);
    CHECK(config_error(R"({"pipeline": "nope"})").field == "pipeline");

    auto extra = certify_config();
    extra.replace(extra.find("\"certify\""), 0, R"("lemma": {"eps": 0.1, "a": 2, "n_min": 1, "n_max": 2}, )");
    CHECK(config_error(extra, dir.string()).field == "lemma");

    // inline model errors keep the model path
    auto inline_model = R"({"pipeline": "lemma-mc", "seeds": [1], "output_dir": "o",
      "model": {"dimension": 1, "sites": {"generator": "lattice", "window_radius": 10},
                "laws": {"rule": "constant", "law": {"kind": "bernoulli", "p": 0.5, "q": 1}},
                "potential": {"profile": "indicator"}},
      "lemma": {"eps": 0.1, "a": 2, "n_min": 1, "n_max": 2}})";
    e = config_error(inline_model);
    CHECK(e.field.rfind("model.laws", 0) == 0);
    CHECK(e.line == 3);

    auto too_far = R"({"pipeline": "lemma-mc", "seeds": [1], "output_dir": "o", "model_file": "model.json",
      "lemma": {"eps": 0.1, "a": 2, "n_min": 1, "n_max": 12}})";
    CHECK(config_error(too_far, dir.string()).field == "lemma.n_max");
}

TEST_CASE("full-report data files are identical across worker counts and reruns") {
    auto dir = scratch("determinism");
    spit(dir / "model.json", kModel1d);
    std::vector<fs::path> outs;
    for (int w : {1, 4, 8, 8}) {
        WorkerGuard guard(w);
        const std::string out = "out" + std::to_string(outs.size());
        auto cfg = parse_config(full_config(out), dir.string());
        auto m = run(cfg);
        REQUIRE(m.ok());
        CHECK(m.stages.size() == 5);
        outs.push_back(dir / out);
    }
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(outs[0])) {
        const auto name = entry.path().filename();
        if (name == "manifest.jsonl") continue;
        const auto ref = slurp(entry.path());
        CHECK(!ref.empty());
        for (std::size_t k = 1; k < outs.size(); ++k) CHECK_MESSAGE(slurp(outs[k] / name) == ref, name.string());
        ++compared;
    }
    CHECK(compared == 10);
}

TEST_CASE("plotdata series") {
    auto dir = scratch("plotdata");
    spit(dir / "model.json", kModel1d);
    auto m = run(parse_config(full_config("out"), dir.string()));
    REQUIRE(m.ok());
    auto files = emit_plotdata(read_manifest((dir / "out" / "manifest.jsonl").string()));
    CHECK(files.size() == 4);
    auto header = [&](const std::string& f) {
        std::istringstream is(slurp(dir / "out" / "plotdata" / f));
        std::string line;
        std::getline(is, line);
        return line;
    };
    CHECK(header("an_series.csv") == "seed,n,exact,estimate,stderr,bound");
    CHECK(header("ipr_vs_energy.csv") == "seed,energy,ipr,in_gap");
    CHECK(header("delta_terms.csv") == "construction,seed,gamma,n,role,delta,term");
    CHECK(header("gamma_vs_gap_distance.csv") == "energy,gap_distance,gamma");

    RunManifest empty;
    empty.output_dir = (dir / "out").string();
    CHECK_THROWS_AS(emit_plotdata(empty), InvalidArgument);
    fs::remove(dir / "out" / "terms.csv");
    CHECK_THROWS_AS(emit_plotdata(read_manifest((dir / "out" / "manifest.jsonl").string())), InvalidArgument);
    CHECK_THROWS_AS(manifest_from_jsonl("", "."), InvalidArgument);
}

TEST_CASE("a refused construction is a stage failure") {
    auto dir = scratch("failure");
    // a full 2-D lattice fails the quasi-1D count test
    spit(dir / "model.json", R"({"dimension": 2, "sites": {"generator": "lattice", "window_radius": 60},
      "laws": {"rule": "constant", "law": {"kind": "bernoulli", "p": 0.1}},
      "potential": {"profile": "indicator", "height": 1.0, "radius": 0.4}})");
    auto cfg = parse_config(R"({"pipeline": "certify-quasi1d", "model_file": "model.json", "seeds": [1],
      "output_dir": "out", "quasi1d": {"eps": 0.5, "gammas": [1.0], "a": 1.5, "n_count": 3}})",
                            dir.string());
    auto m = run(cfg);
    CHECK_FALSE(m.ok());
    REQUIRE(m.stages.size() == 2);
    CHECK(m.stages[1].name == "construct");
    CHECK_FALSE(m.stages[1].error.empty());
    CHECK(fs::exists(dir / "out" / "manifest.jsonl"));
}
