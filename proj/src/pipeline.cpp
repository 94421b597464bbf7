#include "sparseloc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sparseloc/certify.hpp"
#include "sparseloc/spectral.hpp"
#include "sparseloc/stochastic.hpp"

namespace sparseloc::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

ConfigError::ConfigError(std::string f, int l, const std::string& msg)
    : std::runtime_error(msg), field(std::move(f)), line(l) {}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

bool RunManifest::ok() const {
    return std::all_of(stages.begin(), stages.end(), [](const StageRecord& s) { return s.ok; });
}

namespace {

const std::vector<std::string> kPipelines{"certify-sparse", "certify-quasi1d", "lemma-mc", "spectral-probe",
                                          "full-report"};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

json jnum(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

// Strict reader over a JSON tree; errors carry the dotted field path and a
// best-effort line number found by walking the key names through the text.
class Reader {
public:
    explicit Reader(const std::string& text) : text_(text) {}

    [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
        throw ConfigError(path, line_of(path), path + ": " + msg);
    }

    int line_of(const std::string& path) const {
        std::size_t pos = 0;
        bool found = false;
        for (const auto& part : split(path, '.')) {
            std::string key = part.substr(0, part.find('['));
            if (key.empty()) continue;
            auto p = text_.find("\"" + key + "\"", pos);
            if (p == std::string::npos) break;
            pos = p;
            found = true;
        }
        if (!found) return 0;
        return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<long>(pos), '\n'));
    }

    void keys(const json& j, const std::string& path, const std::set<std::string>& allowed) const {
        if (!j.is_object()) fail(path, "expected an object");
        for (const auto& [k, v] : j.items())
            if (!allowed.count(k)) fail(path.empty() ? k : path + "." + k, "unknown key");
    }

    const json* get(const json& j, const std::string& key) const {
        auto it = j.find(key);
        return it == j.end() ? nullptr : &*it;
    }

    double number(const json& j, const std::string& path, const std::string& key) const {
        const json* v = get(j, key);
        if (!v) fail(join(path, key), "missing");
        return as_number(*v, join(path, key));
    }
    double number_or(const json& j, const std::string& path, const std::string& key, double def) const {
        const json* v = get(j, key);
        return v ? as_number(*v, join(path, key)) : def;
    }
    long long integer(const json& j, const std::string& path, const std::string& key) const {
        const json* v = get(j, key);
        if (!v) fail(join(path, key), "missing");
        return as_integer(*v, join(path, key));
    }
    long long integer_or(const json& j, const std::string& path, const std::string& key, long long def) const {
        const json* v = get(j, key);
        return v ? as_integer(*v, join(path, key)) : def;
    }
    std::vector<double> numbers(const json& j, const std::string& path, const std::string& key) const {
        const json* v = get(j, key);
        if (!v) fail(join(path, key), "missing");
        if (!v->is_array()) fail(join(path, key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t k = 0; k < v->size(); ++k)
            out.push_back(as_number((*v)[k], join(path, key) + "[" + std::to_string(k) + "]"));
        return out;
    }
    std::string string(const json& j, const std::string& path, const std::string& key) const {
        const json* v = get(j, key);
        if (!v) fail(join(path, key), "missing");
        if (!v->is_string()) fail(join(path, key), "expected a string");
        return v->get<std::string>();
    }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

private:
    double as_number(const json& v, const std::string& path) const {
        if (!v.is_number()) fail(path, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(path, "must be finite");
        return x;
    }
    long long as_integer(const json& v, const std::string& path) const {
        if (!v.is_number_integer()) fail(path, "expected an integer");
        return v.get<long long>();
    }

    const std::string& text_;
};

void check_eps(const Reader& r, double eps, const std::string& path) {
    if (!(eps > 0.0 && eps <= 1.0)) r.fail(path, "must lie in (0,1]");
}

void check_gammas(const Reader& r, const std::vector<double>& g, const std::string& path) {
    if (g.empty()) r.fail(path, "must list at least one value");
    for (std::size_t k = 0; k < g.size(); ++k)
        if (!(g[k] > 0.0)) r.fail(path + "[" + std::to_string(k) + "]", "must be > 0");
}

CertifyParams parse_certify(const Reader& r, const json& j) {
    const std::string p = "certify";
    r.keys(j, p, {"eps", "gammas", "a", "ell", "n_min", "n_count", "resolution", "k"});
    CertifyParams c;
    c.eps = r.number(j, p, "eps");
    check_eps(r, c.eps, p + ".eps");
    c.gammas = r.numbers(j, p, "gammas");
    check_gammas(r, c.gammas, p + ".gammas");
    if (r.get(j, "a") && r.get(j, "ell")) r.fail(p + ".ell", "give either 'a' or 'ell', not both");
    if (r.get(j, "a")) {
        c.a = r.number(j, p, "a");
        if (!(*c.a > 1.0)) r.fail(p + ".a", "must be > 1");
    }
    if (r.get(j, "ell")) {
        c.ell = static_cast<int>(r.integer(j, p, "ell"));
        if (*c.ell < 1) r.fail(p + ".ell", "must be >= 1");
    }
    if (r.get(j, "n_min")) {
        c.n_min = static_cast<int>(r.integer(j, p, "n_min"));
        if (*c.n_min < 1) r.fail(p + ".n_min", "must be >= 1");
    }
    c.n_count = static_cast<int>(r.integer_or(j, p, "n_count", 6));
    if (c.n_count < 1 || c.n_count > 200) r.fail(p + ".n_count", "must lie in [1,200]");
    c.resolution = r.number_or(j, p, "resolution", 0.01);
    if (!(c.resolution > 0.0)) r.fail(p + ".resolution", "must be > 0");
    c.k = static_cast<int>(r.integer_or(j, p, "k", 5));
    if (c.k < 1) r.fail(p + ".k", "must be >= 1");
    return c;
}

Quasi1DParams parse_quasi1d(const Reader& r, const json& j) {
    const std::string p = "quasi1d";
    r.keys(j, p, {"eps", "gammas", "a", "alpha", "n_min", "n_count", "resolution", "k"});
    Quasi1DParams q;
    q.eps = r.number(j, p, "eps");
    check_eps(r, q.eps, p + ".eps");
    q.gammas = r.numbers(j, p, "gammas");
    check_gammas(r, q.gammas, p + ".gammas");
    q.a = r.number(j, p, "a");
    if (!(q.a > 1.0)) r.fail(p + ".a", "must be > 1");
    q.alpha = r.number_or(j, p, "alpha", 2.0);
    if (!(q.alpha > 1.0)) r.fail(p + ".alpha", "must be > 1");
    if (r.get(j, "n_min")) {
        q.n_min = static_cast<int>(r.integer(j, p, "n_min"));
        if (*q.n_min < 1) r.fail(p + ".n_min", "must be >= 1");
    }
    q.n_count = static_cast<int>(r.integer_or(j, p, "n_count", 6));
    if (q.n_count < 1 || q.n_count > 200) r.fail(p + ".n_count", "must lie in [1,200]");
    q.resolution = r.number_or(j, p, "resolution", 0.01);
    if (!(q.resolution > 0.0)) r.fail(p + ".resolution", "must be > 0");
    q.k = static_cast<int>(r.integer_or(j, p, "k", 5));
    if (q.k < 1) r.fail(p + ".k", "must be >= 1");
    return q;
}

LemmaParams parse_lemma(const Reader& r, const json& j) {
    const std::string p = "lemma";
    r.keys(j, p, {"eps", "a", "n_min", "n_max", "trials", "exact_budget"});
    LemmaParams l;
    l.eps = r.number(j, p, "eps");
    check_eps(r, l.eps, p + ".eps");
    l.a = r.number(j, p, "a");
    if (!(l.a > 1.0)) r.fail(p + ".a", "must be > 1");
    l.n_min = static_cast<int>(r.integer(j, p, "n_min"));
    if (l.n_min < 1) r.fail(p + ".n_min", "must be >= 1");
    l.n_max = static_cast<int>(r.integer(j, p, "n_max"));
    if (l.n_max < l.n_min) r.fail(p + ".n_max", "must be >= n_min");
    const long long trials = r.integer_or(j, p, "trials", 10000);
    if (trials < 1) r.fail(p + ".trials", "must be >= 1");
    l.trials = static_cast<std::uint64_t>(trials);
    l.exact_budget = static_cast<int>(r.integer_or(j, p, "exact_budget", 20));
    if (l.exact_budget < 0 || l.exact_budget > 24) r.fail(p + ".exact_budget", "must lie in [0,24]");
    return l;
}

SpectralParams parse_spectral(const Reader& r, const json& j, int dim) {
    const std::string p = "spectral";
    r.keys(j, p, {"box", "h", "coupling_scale", "max_doublings", "energies", "resolution", "bulk_states",
                  "fit_quality"});
    SpectralParams s;
    const json* box = r.get(j, "box");
    if (!box) r.fail(p + ".box", "missing");
    r.keys(*box, p + ".box", {"lo", "hi"});
    s.box.lo = r.numbers(*box, p + ".box", "lo");
    s.box.hi = r.numbers(*box, p + ".box", "hi");
    if (s.box.lo.size() != static_cast<std::size_t>(dim) || s.box.hi.size() != static_cast<std::size_t>(dim))
        r.fail(p + ".box", "corners must have the model dimension");
    for (int a = 0; a < dim; ++a)
        if (!(s.box.hi[a] > s.box.lo[a])) r.fail(p + ".box.hi", "must exceed lo on every axis");
    s.h = r.number(j, p, "h");
    if (!(s.h > 0.0)) r.fail(p + ".h", "must be > 0");
    double nodes = 1.0;
    for (int a = 0; a < dim; ++a) {
        const double m = std::round((s.box.hi[a] - s.box.lo[a]) / s.h) - 1.0;
        if (m < 1.0) r.fail(p + ".h", "leaves no interior node");
        nodes *= m;
    }
    if (nodes > 4e6) r.fail(p + ".h", "grid too large");
    s.coupling_scale = r.number_or(j, p, "coupling_scale", 1.0);
    s.max_doublings = static_cast<int>(r.integer_or(j, p, "max_doublings", 0));
    if (s.max_doublings < 0 || s.max_doublings > 4) r.fail(p + ".max_doublings", "must lie in [0,4]");
    if (r.get(j, "energies")) s.energies = r.numbers(j, p, "energies");
    s.resolution = r.number_or(j, p, "resolution", 1e-3);
    if (!(s.resolution > 0.0)) r.fail(p + ".resolution", "must be > 0");
    const long long bulk = r.integer_or(j, p, "bulk_states", 200);
    if (bulk < 1) r.fail(p + ".bulk_states", "must be >= 1");
    s.bulk_states = static_cast<std::size_t>(bulk);
    s.fit_quality = r.number_or(j, p, "fit_quality", 0.9);
    if (!(s.fit_quality > 0.0 && s.fit_quality <= 1.0)) r.fail(p + ".fit_quality", "must lie in (0,1]");
    return s;
}

double reach_of(const geometry::Box& box) {
    double s = 0.0;
    for (std::size_t a = 0; a < box.lo.size(); ++a) {
        const double m = std::max(std::abs(box.lo[a]), std::abs(box.hi[a]));
        s += m * m;
    }
    return std::sqrt(s);
}

double sparse_growth(const CertifyParams& c, double gamma, int d) {
    if (c.a) return *c.a;
    const int ell = c.ell ? *c.ell : certify::ell_sparse(gamma, d);
    return 1.0 + 1.0 / ell;
}

int sparse_n_min(const CertifyParams& c, double a) { return c.n_min ? *c.n_min : certify::first_nondegenerate_n(a); }

// Radius of the sampling window needed by the certification stages.
double certify_radius(const ExperimentConfig& cfg) {
    const double rho = cfg.model->rho();
    double r = 0.0;
    if (cfg.certify)
        for (double g : cfg.certify->gammas) {
            const double a = sparse_growth(*cfg.certify, g, cfg.model->dim());
            const int n_max = sparse_n_min(*cfg.certify, a) + cfg.certify->n_count - 1;
            r = std::max(r, std::pow(a, n_max + 1));
        }
    if (cfg.quasi1d) {
        const auto& q = *cfg.quasi1d;
        const int n_max = (q.n_min ? *q.n_min : certify::first_nondegenerate_n(q.a)) + q.n_count - 1;
        r = std::max(r, std::pow(q.a, n_max + 1));
    }
    return r + rho + 1.0;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
    Reader r(text);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
        throw ConfigError("", line, "line " + std::to_string(line) + ": not valid JSON");
    }
    r.keys(j, "", {"pipeline", "model", "model_file", "seeds", "output_dir", "certify", "quasi1d", "lemma",
                   "spectral"});
    ExperimentConfig cfg;
    cfg.pipeline = r.string(j, "", "pipeline");
    if (std::find(kPipelines.begin(), kPipelines.end(), cfg.pipeline) == kPipelines.end())
        r.fail("pipeline", "unknown pipeline '" + cfg.pipeline + "'");

    const json* model = r.get(j, "model");
    const json* model_file = r.get(j, "model_file");
    if (model && model_file) r.fail("model_file", "give either 'model' or 'model_file', not both");
    if (!model && !model_file) r.fail("model", "missing");
    std::string model_text;
    std::string model_field = "model";
    if (model) {
        model_text = model->dump();
    } else {
        model_field = "model_file";
        const auto rel = r.string(j, "", "model_file");
        const fs::path path = fs::path(base_dir) / rel;
        if (!fs::is_regular_file(path)) r.fail("model_file", "no such file '" + path.string() + "'");
        model_text = read_file(path.string());
    }
    try {
        cfg.model = std::make_shared<const models::RandomPotentialModel>(models::model_from_json(model_text));
    } catch (const std::exception& e) {
        std::string msg = e.what();
        const auto colon = msg.find(':');
        const std::string inner = colon == std::string::npos ? "" : msg.substr(0, colon);
        const std::string path = model ? Reader::join("model", inner) : "model_file";
        throw ConfigError(path, model ? r.line_of(path) : r.line_of("model_file"), model_field + ": " + msg);
    }
    cfg.model_json = models::model_to_json(*cfg.model);

    const json* seeds = r.get(j, "seeds");
    if (!seeds) r.fail("seeds", "missing");
    if (!seeds->is_array() || seeds->empty()) r.fail("seeds", "expected a nonempty array of integers");
    std::set<std::uint64_t> seen;
    for (std::size_t k = 0; k < seeds->size(); ++k) {
        const auto& s = (*seeds)[k];
        const std::string path = "seeds[" + std::to_string(k) + "]";
        if (!s.is_number_unsigned()) r.fail(path, "expected a nonnegative integer");
        const auto v = s.get<std::uint64_t>();
        if (!seen.insert(v).second) r.fail(path, "duplicate seed");
        cfg.seeds.push_back(v);
    }
    const auto out = r.string(j, "", "output_dir");
    if (out.empty()) r.fail("output_dir", "must be nonempty");
    cfg.output_dir = (fs::path(base_dir) / out).lexically_normal().string();

    const int d = cfg.model->dim();
    if (const json* s = r.get(j, "certify")) cfg.certify = parse_certify(r, *s);
    if (const json* s = r.get(j, "quasi1d")) cfg.quasi1d = parse_quasi1d(r, *s);
    if (const json* s = r.get(j, "lemma")) cfg.lemma = parse_lemma(r, *s);
    if (const json* s = r.get(j, "spectral")) cfg.spectral = parse_spectral(r, *s, d);

    auto need = [&](bool present, const std::string& section) {
        if (!present) r.fail(section, "required by pipeline '" + cfg.pipeline + "'");
    };
    auto forbid = [&](bool present, const std::string& section) {
        if (present) r.fail(section, "not used by pipeline '" + cfg.pipeline + "'");
    };
    const bool full = cfg.pipeline == "full-report";
    if (cfg.pipeline == "certify-sparse") need(cfg.certify.has_value(), "certify");
    if (cfg.pipeline == "certify-quasi1d") need(cfg.quasi1d.has_value(), "quasi1d");
    if (cfg.pipeline == "lemma-mc") need(cfg.lemma.has_value(), "lemma");
    if (cfg.pipeline == "spectral-probe") need(cfg.spectral.has_value(), "spectral");
    if (!full) {
        if (cfg.pipeline != "certify-sparse") forbid(cfg.certify.has_value(), "certify");
        if (cfg.pipeline != "certify-quasi1d") forbid(cfg.quasi1d.has_value(), "quasi1d");
        if (cfg.pipeline != "lemma-mc") forbid(cfg.lemma.has_value(), "lemma");
        if (cfg.pipeline != "spectral-probe") forbid(cfg.spectral.has_value(), "spectral");
    } else if (!cfg.certify && !cfg.quasi1d && !cfg.lemma && !cfg.spectral) {
        r.fail("pipeline", "full-report needs at least one of certify, quasi1d, lemma, spectral");
    }

    // windows the stages will need, checked against the site list
    const double window = cfg.model->sites.window_radius();
    if (cfg.certify || cfg.quasi1d) {
        const double need_r = certify_radius(cfg);
        if (need_r > window)
            r.fail(cfg.certify ? "certify.n_count" : "quasi1d.n_count",
                   "scales need site window radius " + num(need_r) + " but the model has " + num(window));
    }
    if (cfg.lemma && std::pow(cfg.lemma->a, cfg.lemma->n_max + 1) > window)
        r.fail("lemma.n_max", "a^(n_max+1) exceeds the model's site window radius " + num(window));
    if (cfg.spectral && reach_of(cfg.spectral->box) + cfg.model->rho() + cfg.spectral->h > window)
        r.fail("spectral.box", "box plus support radius exceeds the model's site window radius " + num(window));

    json canon = j;
    canon.erase("output_dir");
    canon.erase("model_file");
    canon["model"] = json::parse(cfg.model_json);
    cfg.canonical = canon.dump();
    cfg.hash = fnv1a_hex(cfg.canonical);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    if (!fs::is_regular_file(path)) throw ConfigError("", 0, "no such config file '" + path + "'");
    const auto base = fs::path(path).parent_path();
    return parse_config(read_file(path), base.empty() ? "." : base.string());
}

// ---------------------------------------------------------------------------

namespace {

struct Cell {
    std::string construction;  // "sparse" or "quasi1d"
    std::size_t seed_index = 0;
    double gamma = 0.0;
    geometry::TotalDecomposition decomposition;
};

class Runner {
public:
    explicit Runner(const ExperimentConfig& cfg) : cfg_(cfg), dir_(cfg.output_dir) {
        manifest_.config_hash = cfg.hash;
        manifest_.tool_version = SPARSELOC_VERSION;
        manifest_.pipeline = cfg.pipeline;
        manifest_.output_dir = cfg.output_dir;
        manifest_.seeds = cfg.seeds;
    }

    RunManifest run() {
        fs::create_directories(dir_);
        const bool certifying = cfg_.certify || cfg_.quasi1d;
        bool ok = true;
        if (certifying) {
            ok = ok && stage("sample", [&] { return sample(); });
            ok = ok && stage("construct", [&] { return construct(); });
            ok = ok && stage("certify", [&] { return certify(); });
        }
        if (cfg_.lemma) ok = ok && stage("estimate", [&] { return estimate(); });
        if (cfg_.spectral) ok = ok && stage("spectral", [&] { return spectral(); });
        write_file(dir_ / "manifest.jsonl", manifest_to_jsonl(manifest_));
        return manifest_;
    }

private:
    bool stage(const std::string& name, const std::function<std::vector<std::string>()>& body) {
        StageRecord rec;
        rec.name = name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            rec.files = body();
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest_.stages.push_back(rec);
        return rec.ok;
    }

    std::vector<std::string> sample() {
        const double radius = certify_radius(cfg_);
        couplings_.resize(cfg_.seeds.size());
        std::string out;
        for (std::size_t s = 0; s < cfg_.seeds.size(); ++s) {
            couplings_[s] = models::sample_couplings(*cfg_.model, cfg_.seeds[s],
                                                     geometry::make_ball(Point(cfg_.model->dim(), 0.0), radius));
            const auto& c = couplings_[s];
            json rec{{"record", "sample"},
                     {"seed", cfg_.seeds[s]},
                     {"window_radius", radius},
                     {"covered_radius", c.covered_radius},
                     {"sites", c.size()}};
            auto spoilers = [&](double eps) {
                return std::count_if(c.values.begin(), c.values.end(), [eps](double w) { return w > eps; });
            };
            if (cfg_.certify) rec["spoiling_certify"] = spoilers(cfg_.certify->eps);
            if (cfg_.quasi1d) rec["spoiling_quasi1d"] = spoilers(cfg_.quasi1d->eps);
            out += rec.dump() + "\n";
        }
        write_file(dir_ / "samples.jsonl", out);
        return {"samples.jsonl"};
    }

    static json annuli_json(const std::vector<certify::FreeAnnulusRecord>& annuli) {
        json arr = json::array();
        for (const auto& a : annuli)
            arr.push_back({{"n", a.n}, {"r_n", a.r_n}, {"width", a.width}, {"free", a.free}, {"degenerate", a.degenerate}});
        return arr;
    }
    static json gaps_json(const std::vector<certify::Gap>& gaps) {
        json arr = json::array();
        for (const auto& g : gaps) arr.push_back({{"n", g.n}, {"reason", g.reason}});
        return arr;
    }

    std::vector<std::string> construct() {
        std::string out;
        const int d = cfg_.model->dim();
        for (std::size_t s = 0; s < cfg_.seeds.size(); ++s) {
            if (cfg_.certify) {
                const auto& p = *cfg_.certify;
                for (double g : p.gammas) {
                    const double a = sparse_growth(p, g, d);
                    const int n_min = sparse_n_min(p, a);
                    const int n_max = n_min + p.n_count - 1;
                    auto b = certify::build_decomposition_sparse(*cfg_.model, couplings_[s], p.eps, g, n_min, n_max, a);
                    json rec{{"record", "construction"}, {"construction", "sparse"}, {"seed", cfg_.seeds[s]},
                             {"gamma", g}, {"a", b.a}, {"ell", b.ell}, {"rho", b.rho}, {"n_min", n_min},
                             {"n_max", n_max}, {"members", b.decomposition.members.size()},
                             {"gaps", gaps_json(b.gaps)}, {"annuli", annuli_json(b.annuli)}};
                    out += rec.dump() + "\n";
                    cells_.push_back({"sparse", s, g, std::move(b.decomposition)});
                }
            }
            if (cfg_.quasi1d) {
                const auto& p = *cfg_.quasi1d;
                const int n_min = p.n_min ? *p.n_min : certify::first_nondegenerate_n(p.a);
                const int n_max = n_min + p.n_count - 1;
                for (double g : p.gammas) {
                    auto b = certify::build_decomposition_quasi1d(*cfg_.model, couplings_[s], p.eps, g, p.alpha, p.a,
                                                                  n_min, n_max);
                    json counts = json::array();
                    for (const auto& c : b.counts)
                        counts.push_back({{"n", c.n}, {"points", c.points}, {"caps", c.caps},
                                          {"member_bound", c.member_bound}, {"point_bound", c.point_bound},
                                          {"cheese_bound_applies", c.cheese_bound_applies}});
                    json rec{{"record", "construction"}, {"construction", "quasi1d"}, {"seed", cfg_.seeds[s]},
                             {"gamma", g}, {"a", b.a}, {"alpha", b.alpha}, {"rho", b.rho},
                             {"quasi_constant", b.quasi_constant}, {"delta", b.delta},
                             {"threshold_a", b.threshold_a}, {"cheese_threshold_n", b.cheese_threshold_n},
                             {"n_min", n_min}, {"n_max", n_max}, {"members", b.decomposition.members.size()},
                             {"gaps", gaps_json(b.gaps)}, {"annuli", annuli_json(b.annuli)}, {"counts", counts},
                             {"warnings", b.warnings}};
                    out += rec.dump() + "\n";
                    cells_.push_back({"quasi1d", s, g, std::move(b.decomposition)});
                }
            }
        }
        write_file(dir_ / "decompositions.jsonl", out);
        return {"decompositions.jsonl"};
    }

    std::vector<std::string> certify() {
        std::string jsonl;
        std::ostringstream terms, verdicts;
        terms.precision(17);
        verdicts.precision(17);
        terms << "construction,seed,gamma,n,role,delta,sigma,term,envelope\n";
        verdicts << "construction,seed,gamma,verdict,partial_sum,observed_ratio,tail_bound,reason\n";
        for (const auto& cell : cells_) {
            const bool sparse = cell.construction == "sparse";
            const double eps = sparse ? cfg_.certify->eps : cfg_.quasi1d->eps;
            certify::CertifyOptions opts;
            opts.resolution = sparse ? cfg_.certify->resolution : cfg_.quasi1d->resolution;
            opts.k = sparse ? cfg_.certify->k : cfg_.quasi1d->k;
            const auto& c = couplings_[cell.seed_index];
            const auto diff = certify::difference_support(*cfg_.model, c, eps);
            auto cert = certify::certify_ac(cell.decomposition, diff, cell.gamma, opts);
            const auto seed = cfg_.seeds[cell.seed_index];
            std::istringstream lines(certify::certificate_to_jsonl(cert));
            for (std::string line; std::getline(lines, line);) {
                auto rec = json::parse(line);
                rec["construction"] = cell.construction;
                rec["seed"] = seed;
                rec["gamma"] = cell.gamma;
                jsonl += rec.dump() + "\n";
            }
            for (const auto& t : cert.terms)
                terms << cell.construction << ',' << seed << ',' << cell.gamma << ',' << t.n << ',' << t.role << ','
                      << t.delta << ',' << t.size << ',' << t.term << ',' << t.envelope << '\n';
            verdicts << cell.construction << ',' << seed << ',' << cell.gamma << ',' << certify::to_string(cert.verdict)
                     << ',' << cert.partial_sum << ',' << cert.observed_ratio << ',' << cert.tail_bound << ','
                     << '"' << cert.reason << '"' << '\n';
        }
        write_file(dir_ / "certificates.jsonl", jsonl);
        write_file(dir_ / "terms.csv", terms.str());
        write_file(dir_ / "verdicts.csv", verdicts.str());
        return {"certificates.jsonl", "terms.csv", "verdicts.csv"};
    }

    std::vector<std::string> estimate() {
        const auto& p = *cfg_.lemma;
        std::string jsonl;
        std::string csv = "seed,n,exact,estimate,std_error,bound,partial_sum\n";
        stochastic::ReportOptions opts;
        opts.exact_budget = p.exact_budget;
        for (auto seed : cfg_.seeds) {
            auto rep = stochastic::borel_cantelli_report(*cfg_.model, p.eps, p.a, p.n_min, p.n_max, p.trials, seed, opts);
            std::istringstream lines(stochastic::report_to_jsonl(rep));
            for (std::string line; std::getline(lines, line);) {
                auto rec = json::parse(line);
                rec["seed"] = seed;
                jsonl += rec.dump() + "\n";
            }
            std::istringstream rows(stochastic::report_to_csv(rep));
            std::string line;
            std::getline(rows, line);  // header
            while (std::getline(rows, line)) csv += std::to_string(seed) + "," + line + "\n";
        }
        write_file(dir_ / "an_series.jsonl", jsonl);
        write_file(dir_ / "an_series_raw.csv", csv);
        return {"an_series.jsonl", "an_series_raw.csv"};
    }

    std::vector<std::string> spectral() {
        const auto& p = *cfg_.spectral;
        spectral::LocalizationOptions opts;
        opts.resolution = p.resolution;
        opts.bulk_states = p.bulk_states;
        opts.fit_quality = p.fit_quality;
        std::vector<spectral::ProbeResult> results(cfg_.seeds.size());
        parallel_for(cfg_.seeds.size(), [&](std::size_t s) {
            results[s] = spectral::localization_probe(*cfg_.model, cfg_.seeds[s], p.box, p.h, p.coupling_scale,
                                                      p.max_doublings, opts);
        });

        std::ostringstream states;
        states.precision(12);
        states << "seed,energy,ipr,decay_rate,fit_quality,center,in_gap\n";
        std::string summary;
        for (std::size_t s = 0; s < results.size(); ++s) {
            const auto& rep = results[s].report;
            for (const auto& st : rep.states) {
                states << cfg_.seeds[s] << ',' << st.energy << ',' << st.ipr << ',' << st.decay_rate << ','
                       << st.fit_quality << ',';
                for (std::size_t a = 0; a < st.center.size(); ++a) states << (a ? ";" : "") << st.center[a];
                states << ',' << (st.in_gap ? 1 : 0) << '\n';
            }
            json gaps = json::array();
            for (const auto& g : rep.gaps) gaps.push_back({jnum(g.lo), jnum(g.hi)});
            json rec{{"record", "localization"},
                     {"seed", cfg_.seeds[s]},
                     {"box_lo", results[s].box.lo},
                     {"box_hi", results[s].box.hi},
                     {"doublings", results[s].doublings},
                     {"gap_states", rep.gap_states},
                     {"bulk_states", rep.bulk_states},
                     {"median_gap_ipr", rep.median_gap_ipr},
                     {"median_bulk_ipr", rep.median_bulk_ipr},
                     {"good_fit_fraction", rep.good_fit_fraction},
                     {"boundary_amplitude", rep.boundary_amplitude},
                     {"localized", rep.localized},
                     {"verdict", rep.verdict},
                     {"gaps", gaps}};
            summary += rec.dump() + "\n";
        }
        write_file(dir_ / "spectral_states.csv", states.str());
        write_file(dir_ / "spectral_summary.jsonl", summary);
        std::vector<std::string> files{"spectral_states.csv", "spectral_summary.jsonl"};

        if (!p.energies.empty()) {
            // background operator: the coupling values do not enter at scale 0
            const double reach = reach_of(p.box) + cfg_.model->rho() + p.h;
            auto c = models::sample_couplings(*cfg_.model, cfg_.seeds.front(),
                                              geometry::make_ball(Point(cfg_.model->dim(), 0.0), reach));
            auto h0 = spectral::discretize(*cfg_.model, c, p.box, p.h, 0.0);
            auto probes = spectral::default_probes(h0);
            std::ostringstream res;
            res.precision(12);
            res << "energy,spectral_distance,rate,quality,status\n";
            for (double e : p.energies) {
                try {
                    auto r = spectral::resolvent_decay(h0, e, probes, p.resolution);
                    res << e << ',' << r.spectral_distance << ',' << r.rate << ',' << r.quality << ",ok\n";
                } catch (const InvalidArgument&) {
                    res << e << ",,,,refused\n";
                }
            }
            write_file(dir_ / "resolvent.csv", res.str());
            files.push_back("resolvent.csv");
        }
        return files;
    }

    const ExperimentConfig& cfg_;
    fs::path dir_;
    RunManifest manifest_;
    std::vector<models::CouplingMap> couplings_;
    std::vector<Cell> cells_;
};

}  // namespace

RunManifest run(const ExperimentConfig& config) { return Runner(config).run(); }

std::string manifest_to_jsonl(const RunManifest& m) {
    std::string out = json{{"record", "run"},
                           {"config_hash", m.config_hash},
                           {"tool_version", m.tool_version},
                           {"pipeline", m.pipeline},
                           {"seeds", m.seeds}}
                          .dump() +
                      "\n";
    for (const auto& s : m.stages)
        out += json{{"record", "stage"},         {"stage", s.name},
                    {"files", s.files},          {"wall_seconds", s.wall_seconds},
                    {"status", s.ok ? "ok" : "error"}, {"error", s.error}}
                   .dump() +
               "\n";
    return out;
}

RunManifest manifest_from_jsonl(const std::string& text, const std::string& output_dir) {
    RunManifest m;
    m.output_dir = output_dir;
    std::istringstream is(text);
    bool header = false;
    for (std::string line; std::getline(is, line);) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw InvalidArgument("manifest: malformed line");
        }
        const auto kind = j.value("record", "");
        if (kind == "run") {
            header = true;
            m.config_hash = j.value("config_hash", "");
            m.tool_version = j.value("tool_version", "");
            m.pipeline = j.value("pipeline", "");
            m.seeds = j.value("seeds", std::vector<std::uint64_t>{});
        } else if (kind == "stage") {
            StageRecord s;
            s.name = j.value("stage", "");
            s.files = j.value("files", std::vector<std::string>{});
            s.wall_seconds = j.value("wall_seconds", 0.0);
            s.ok = j.value("status", "") == "ok";
            s.error = j.value("error", "");
            m.stages.push_back(s);
        } else {
            throw InvalidArgument("manifest: unknown record '" + kind + "'");
        }
    }
    if (!header) throw InvalidArgument("manifest: missing run record");
    return m;
}

RunManifest read_manifest(const std::string& path) {
    if (!fs::is_regular_file(path)) throw InvalidArgument("no such manifest '" + path + "'");
    const auto dir = fs::path(path).parent_path();
    return manifest_from_jsonl(read_file(path), dir.empty() ? "." : dir.string());
}

std::vector<std::string> emit_plotdata(const RunManifest& m) {
    require(!m.stages.empty(), "manifest lists no stages");
    const fs::path dir(m.output_dir);
    std::map<std::string, std::string> files;  // name -> contents, completed stages only
    for (const auto& s : m.stages) {
        if (!s.ok) continue;
        for (const auto& f : s.files) {
            if (!fs::is_regular_file(dir / f)) throw InvalidArgument("missing stage output '" + f + "'");
            files[f] = read_file((dir / f).string());
        }
    }
    require(!files.empty(), "manifest lists no completed stage outputs");

    auto rows = [](const std::string& csv) {
        std::vector<std::vector<std::string>> out;
        std::istringstream is(csv);
        std::string line;
        std::getline(is, line);
        while (std::getline(is, line))
            if (!line.empty()) out.push_back(split(line, ','));
        return out;
    };

    const fs::path pdir = dir / "plotdata";
    fs::create_directories(pdir);
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& text) {
        write_file(pdir / name, text);
        written.push_back("plotdata/" + name);
    };

    if (files.count("an_series.jsonl")) {
        std::string out = "seed,n,exact,estimate,stderr,bound\n";
        std::istringstream is(files["an_series.jsonl"]);
        for (std::string line; std::getline(is, line);) {
            auto j = json::parse(line);
            if (j.value("record", "") != "a_n") continue;
            auto opt = [](const json& v) { return v.is_null() ? std::string() : num(v.get<double>()); };
            out += std::to_string(j["seed"].get<std::uint64_t>()) + "," + std::to_string(j["n"].get<int>()) + "," +
                   opt(j["exact"]) + "," + num(j["estimate"].get<double>()) + "," +
                   num(j["std_error"].get<double>()) + "," + opt(j["bound"]) + "\n";
        }
        emit("an_series.csv", out);
    }
    if (files.count("terms.csv")) {
        std::string out = "construction,seed,gamma,n,role,delta,term\n";
        for (const auto& r : rows(files["terms.csv"]))
            out += r[0] + "," + r[1] + "," + r[2] + "," + r[3] + "," + r[4] + "," + r[5] + "," + r[7] + "\n";
        emit("delta_terms.csv", out);
    }
    if (files.count("spectral_states.csv")) {
        std::string out = "seed,energy,ipr,in_gap\n";
        for (const auto& r : rows(files["spectral_states.csv"]))
            out += r[0] + "," + r[1] + "," + r[2] + "," + r[6] + "\n";
        emit("ipr_vs_energy.csv", out);
    }
    if (files.count("resolvent.csv")) {
        std::string out = "energy,gap_distance,gamma\n";
        for (const auto& r : rows(files["resolvent.csv"]))
            if (r.size() == 5 && r[4] == "ok") out += r[0] + "," + r[1] + "," + r[2] + "\n";
        emit("gamma_vs_gap_distance.csv", out);
    }
    require(!written.empty(), "manifest has no plottable stage outputs");
    return written;
}

}  // namespace sparseloc::pipeline
