#include "sparseloc/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "sparseloc/rng.hpp"

namespace sparseloc::stochastic {

namespace {

using models::CouplingLaw;
constexpr double kInf = std::numeric_limits<double>::infinity();

EstimateRecord make_record(std::uint64_t hits, std::uint64_t trials, std::uint64_t seed) {
    EstimateRecord r;
    r.trials = trials;
    r.seed = seed;
    r.value = double(hits) / double(trials);
    r.std_error = std::sqrt(r.value * (1.0 - r.value) / double(trials));
    return r;
}

void require_covered(const RandomPotentialModel& model, double radius) {
    if (radius > model.sites.window_radius() + 1e-9) {
        std::ostringstream os;
        os << "site window B(0," << model.sites.window_radius() << ") does not cover radius " << radius;
        throw WindowError(os.str());
    }
}

// Sites of a shell range, split by whether their eps-status is random.
struct ShellSites {
    std::vector<double> fixed_spoilers;  // exceed probability 1
    std::vector<double> norms;           // random sites, increasing norm
    std::vector<double> q;               // μ((ε,1])
    std::vector<CouplingLaw> laws;
    std::vector<std::uint64_t> keys;
};

ShellSites collect(const RandomPotentialModel& model, double eps, double lo, double hi) {
    ShellSites s;
    for (std::size_t i : model.sites.with_norm_in(lo, hi)) {
        auto law = model.law(i);
        const double q = law.exceed_probability(eps);
        if (q <= 0.0) continue;
        const double t = norm(model.sites.sites()[i]);
        if (q >= 1.0) {
            s.fixed_spoilers.push_back(t);
            continue;
        }
        s.norms.push_back(t);
        s.q.push_back(q);
        s.laws.push_back(std::move(law));
        s.keys.push_back(model.sites.site_key(i));
    }
    return s;
}

bool degenerate_range(double a, int n) { return std::pow(a, n + 1) - n < std::pow(a, n); }

void check_an_args(double eps, double a, int n) {
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0,1]");
    require(a > 1.0, "growth ratio a must be > 1");
    require(n >= 1, "n must be >= 1");
}

// Sorted norms of sites with lo < |i| <= hi, each with -log(1 - q).
struct NormWeights {
    std::vector<double> t;
    std::vector<double> w;
};

NormWeights norm_weights(const RandomPotentialModel& model, double eps, double lo, double hi) {
    NormWeights out;
    for (std::size_t i : model.sites.with_norm_in(lo, hi)) {
        out.t.push_back(norm(model.sites.sites()[i]));
        const double q = eps > 0.0 ? model.law(i).exceed_probability(eps) : 0.0;
        out.w.push_back(q >= 1.0 ? kInf : -std::log1p(-q));
    }
    return out;
}

// Calls f(r, first, last) for every candidate radius r where the content
// {r < t <= r+n} can change, with [first, last) the covered index range.
template <class F>
void for_each_window(const std::vector<double>& t, double lo, double hi, double width, F f) {
    std::vector<double> cand{lo};
    for (double v : t) {
        if (v - width > lo && v - width <= hi) cand.push_back(v - width);
        if (v > lo && v <= hi) cand.push_back(v);
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    for (double r : cand) {
        const auto first = std::upper_bound(t.begin(), t.end(), r) - t.begin();
        const auto last = std::upper_bound(t.begin(), t.end(), r + width) - t.begin();
        f(r, static_cast<std::size_t>(first), static_cast<std::size_t>(last));
    }
}

}  // namespace

std::vector<std::size_t> sites_in_region(const RandomPotentialModel& model, const RegionSet& region) {
    std::vector<std::size_t> out;
    if (region.empty()) return out;
    const double R = region.circumradius();
    for (std::size_t i : model.sites.with_norm_in(-1.0, R + 1e-9)) {
        const auto& x = model.sites.sites()[i];
        bool in = false;
        for (const auto& p : region.primitives()) {
            if (const auto* an = std::get_if<geometry::Annulus>(&p)) {
                const double t = norm(x);
                in = t > an->inner && t <= an->outer;
            } else {
                RegionSet one(region.dim());
                one.add(p);
                in = one.contains(x, 0.0);
            }
            if (in) break;
        }
        if (in) out.push_back(i);
    }
    std::sort(out.begin(), out.end());
    return out;
}

EstimateRecord estimate_free_probability(const RandomPotentialModel& model, const RegionSet& region, double eps,
                                         std::uint64_t trials, std::uint64_t seed) {
    require(trials > 0, "trials must be positive");
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0,1]");
    require(region.dim() == model.dim(), "region dimension does not match the model");
    require_covered(model, region.circumradius());

    std::vector<CouplingLaw> laws;
    std::vector<std::uint64_t> keys;
    double exact = 1.0;
    for (std::size_t i : sites_in_region(model, region)) {
        laws.push_back(model.law(i));
        keys.push_back(model.sites.site_key(i));
        exact *= 1.0 - laws.back().exceed_probability(eps);
    }
    std::vector<char> free_trial(trials, 0);
    parallel_for(trials, [&](std::size_t t) {
        for (std::size_t k = 0; k < laws.size(); ++k) {
            CounterRng rng(seed, combine_ids(keys[k], t));
            if (laws[k].sample(rng) > eps) return;
        }
        free_trial[t] = 1;
    });
    auto rec = make_record(std::accumulate(free_trial.begin(), free_trial.end(), std::uint64_t{0}), trials, seed);
    rec.exact = exact;
    return rec;
}

EstimateRecord estimate_a_n(const RandomPotentialModel& model, double eps, double a, int n, std::uint64_t trials,
                            std::uint64_t seed) {
    check_an_args(eps, a, n);
    require(trials > 0, "trials must be positive");
    if (degenerate_range(a, n)) {
        EstimateRecord r;
        r.trials = trials;
        r.seed = seed;
        r.exact = 0.0;
        r.degenerate = true;
        return r;
    }
    const double lo = std::pow(a, n), hi = std::pow(a, n + 1);
    require_covered(model, hi);
    const auto s = collect(model, eps, lo, hi);

    std::vector<char> blocked(trials, 0);
    parallel_for(trials, [&](std::size_t t) {
        std::vector<double> spoil = s.fixed_spoilers;
        for (std::size_t k = 0; k < s.laws.size(); ++k) {
            CounterRng rng(seed, combine_ids(s.keys[k], t));
            if (s.laws[k].sample(rng) > eps) spoil.push_back(s.norms[k]);
        }
        blocked[t] = certify::smallest_free_radius(std::move(spoil), lo, hi - n, n) ? 0 : 1;
    });
    return make_record(std::accumulate(blocked.begin(), blocked.end(), std::uint64_t{0}), trials, seed);
}

double brute_force_a_n(const RandomPotentialModel& model, double eps, double a, int n, int max_sites) {
    check_an_args(eps, a, n);
    if (degenerate_range(a, n)) return 0.0;
    const double lo = std::pow(a, n), hi = std::pow(a, n + 1);
    require_covered(model, hi);
    const auto s = collect(model, eps, lo - n, hi);
    const int k = static_cast<int>(s.norms.size());
    if (k > max_sites) {
        std::ostringstream os;
        os << k << " random sites in the shell range exceed the enumeration budget of " << max_sites;
        throw BudgetExceeded(os.str());
    }
    double blocked = 0.0;
    const std::uint64_t patterns = std::uint64_t{1} << k;
    std::vector<double> spoil;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
        double w = 1.0;
        spoil = s.fixed_spoilers;
        for (int j = 0; j < k; ++j) {
            if (mask >> j & 1) {
                w *= s.q[j];
                spoil.push_back(s.norms[j]);
            } else {
                w *= 1.0 - s.q[j];
            }
        }
        if (w == 0.0) continue;
        if (!certify::smallest_free_radius(spoil, lo, hi - n, n)) blocked += w;
    }
    return std::clamp(blocked, 0.0, 1.0);
}

AnBound a_n_bound(double a, double eta, int n) {
    require(eta > 0.0 && eta < 1.0, "eta must lie in (0,1)");
    require(n >= 1, "n must be >= 1");
    if (!(a * (1.0 - eta) > 1.0)) throw InvalidArgument("a(1 - eta) must exceed 1 for a summable bound");
    AnBound b;
    b.value = std::exp(-std::pow(1.0 - eta, n) * (std::pow(a, n) * (a - 1.0) / n - 1.0));
    b.vacuous = b.value >= 1.0;
    return b;
}

double a_n_bound_ratio(double a, double eta, int n_lo, int n_hi) {
    require(n_lo >= 1 && n_hi > n_lo, "need a range with at least two values");
    const int start = n_lo + (n_hi - n_lo) / 2;
    double worst = 0.0;
    for (int n = start; n < n_hi; ++n) {
        // ratio in log space: the values underflow long before the ratio does
        const auto f = [&](int m) {
            return -std::pow(1.0 - eta, m) * (std::pow(a, m) * (a - 1.0) / m - 1.0);
        };
        a_n_bound(a, eta, n);
        worst = std::max(worst, std::exp(f(n + 1) - f(n)));
    }
    return worst;
}

double min_free_probability(const RandomPotentialModel& model, double eps, double a, int n) {
    check_an_args(eps, a, n);
    if (degenerate_range(a, n)) return 1.0;
    const double lo = std::pow(a, n), hi = std::pow(a, n + 1);
    require_covered(model, hi);
    const auto nw = norm_weights(model, eps, lo, hi);
    double worst = 0.0;  // largest -log P
    for_each_window(nw.t, lo, hi - n, n, [&](double, std::size_t first, std::size_t last) {
        double s = 0.0;
        for (std::size_t k = first; k < last && s < kInf; ++k) s += nw.w[k];
        worst = std::max(worst, s);
    });
    return std::exp(-worst);
}

double shell_count_constant(const RandomPotentialModel& model, double a, int n) {
    require(a > 1.0 && n >= 1, "need a > 1 and n >= 1");
    if (degenerate_range(a, n)) return 0.0;
    const double lo = std::pow(a, n), hi = std::pow(a, n + 1);
    require_covered(model, hi);
    const auto nw = norm_weights(model, 0.0, lo, hi);
    const int d = model.dim();
    double c = 0.0;
    for_each_window(nw.t, lo, hi - n, n, [&](double r, std::size_t first, std::size_t last) {
        c = std::max(c, double(last - first) / (n * std::pow(std::max(r, 1.0), d - 1)));
    });
    return c;
}

ANSeriesReport borel_cantelli_report(const RandomPotentialModel& model, double eps, double a, int n_lo, int n_hi,
                                     std::uint64_t trials, std::uint64_t seed, const ReportOptions& opts) {
    require(n_lo >= 1 && n_hi >= n_lo, "invalid n range");
    ANSeriesReport rep;
    rep.eps = eps;
    rep.a = a;
    double sum = 0.0;
    for (int n = n_lo; n <= n_hi; ++n) {
        ANSeriesRow row;
        row.n = n;
        row.estimate = estimate_a_n(model, eps, a, n, trials, combine_ids(seed, std::uint64_t(n)));
        row.degenerate = row.estimate.degenerate;
        if (row.degenerate) {
            row.method = "degenerate";
            row.exact = 0.0;
        } else {
            try {
                row.exact = brute_force_a_n(model, eps, a, n, opts.exact_budget);
                row.method = "enumeration";
            } catch (const BudgetExceeded&) {
                row.method = "monte-carlo";
            }
            row.estimate.exact = row.exact;
            row.min_free_probability = min_free_probability(model, eps, a, n);
            row.count_constant = shell_count_constant(model, a, n);
            // The bound holds for any η with (1-η)^n <= every candidate free
            // probability; the smallest such η gives the tightest value.
            const double eta = std::max(1.0 - std::pow(row.min_free_probability, 1.0 / n), 1e-12);
            if (a * (1.0 - eta) > 1.0) {
                row.eta = eta;
                row.bound = a_n_bound(a, eta, n);
            }
        }
        sum += row.value();
        row.partial_sum = sum;
        rep.rows.push_back(std::move(row));
    }

    std::vector<const ANSeriesRow*> live;
    for (const auto& r : rep.rows)
        if (!r.degenerate) live.push_back(&r);
    if (live.size() < 2) {
        rep.reason = "fewer than two nondegenerate scales";
        return rep;
    }
    const std::size_t half = live.size() - (live.size() + 1) / 2;
    bool all_zero = true;
    double ratio = 0.0;
    for (std::size_t k = half; k < live.size(); ++k) {
        if (live[k]->value() != 0.0) all_zero = false;
        if (k == half) continue;
        const double p = live[k - 1]->value(), c = live[k]->value();
        if (p == 0.0 && c == 0.0) continue;
        ratio = std::max(ratio, p == 0.0 ? kInf : c / p);
    }
    rep.top_half_ratio = ratio;
    // least-squares slope of a_n against n
    double mn = 0.0, mv = 0.0;
    for (auto* r : live) {
        mn += r->n;
        mv += r->value();
    }
    mn /= live.size();
    mv /= live.size();
    double sxy = 0.0, sxx = 0.0;
    for (auto* r : live) {
        sxy += (r->n - mn) * (r->value() - mv);
        sxx += (r->n - mn) * (r->n - mn);
    }
    rep.decreasing = all_zero || sxy / sxx < 0.0;
    if (all_zero) {
        rep.summable = true;
        rep.reason = "a_n vanishes over the top half of the range";
    } else {
        rep.summable = rep.decreasing && ratio < 1.0;
        std::ostringstream os;
        os << (rep.decreasing ? "decreasing" : "not decreasing") << ", top-half ratio " << ratio;
        rep.reason = os.str();
    }
    return rep;
}

std::string report_to_csv(const ANSeriesReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << "n,exact,estimate,std_error,bound,partial_sum\n";
    for (const auto& row : r.rows) {
        os << row.n << ',';
        if (row.exact) os << *row.exact;
        os << ',' << row.estimate.value << ',' << row.estimate.std_error << ',';
        if (row.eta) os << row.bound.value;
        os << ',' << row.partial_sum << '\n';
    }
    return os.str();
}

std::string report_to_jsonl(const ANSeriesReport& r) {
    using nlohmann::json;
    std::string out;
    for (const auto& row : r.rows) {
        json j{{"record", "a_n"},
               {"n", row.n},
               {"method", row.method},
               {"estimate", row.estimate.value},
               {"std_error", row.estimate.std_error},
               {"trials", row.estimate.trials},
               {"min_free_probability", row.min_free_probability},
               {"count_constant", row.count_constant},
               {"partial_sum", row.partial_sum}};
        j["exact"] = row.exact ? json(*row.exact) : json(nullptr);
        j["eta"] = row.eta ? json(*row.eta) : json(nullptr);
        j["bound"] = row.eta ? json(row.bound.value) : json(nullptr);
        j["bound_vacuous"] = row.bound.vacuous;
        out += j.dump() + "\n";
    }
    json s{{"record", "summary"},   {"eps", r.eps},           {"a", r.a},
           {"summable", r.summable}, {"decreasing", r.decreasing}, {"reason", r.reason}};
    s["top_half_ratio"] = std::isfinite(r.top_half_ratio) ? json(r.top_half_ratio) : json("inf");
    out += s.dump() + "\n";
    return out;
}

}  // namespace sparseloc::stochastic
