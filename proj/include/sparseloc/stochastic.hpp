#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparseloc/certify.hpp"
#include "sparseloc/geometry.hpp"
#include "sparseloc/models.hpp"

namespace sparseloc::stochastic {

using geometry::RegionSet;
using models::RandomPotentialModel;

struct EstimateRecord {
    double value = 0.0;
    std::uint64_t trials = 0;
    double std_error = 0.0;  // sqrt(value (1 - value) / trials)
    std::uint64_t seed = 0;
    std::optional<double> exact;  // closed form or enumeration, when available
    bool degenerate = false;      // a_n over an empty radius range
};

/// Sites of the model lying in `region`. An annulus primitive is taken
/// half-open, {inner < |x| <= outer}; everything else is closed.
std::vector<std::size_t> sites_in_region(const RandomPotentialModel& model, const RegionSet& region);

/// Frequency with which `region` is eps-free over independent coupling
/// draws, with the exact product of (1 - μ_i((ε,1])) alongside.
EstimateRecord estimate_free_probability(const RandomPotentialModel& model, const RegionSet& region, double eps,
                                         std::uint64_t trials, std::uint64_t seed);

/// Frequency of "no eps-free shell {r < |x| <= r+n} for r in [a^n, a^(n+1) - n]".
/// A degenerate range gives 0 with the flag set.
EstimateRecord estimate_a_n(const RandomPotentialModel& model, double eps, double a, int n, std::uint64_t trials,
                            std::uint64_t seed);

/// Exact a_n by enumerating the {<= eps, > eps} patterns of the random sites
/// with a^n - n < |i| <= a^(n+1). Throws BudgetExceeded above `max_sites`.
double brute_force_a_n(const RandomPotentialModel& model, double eps, double a, int n, int max_sites = 24);

struct AnBound {
    double value = 1.0;  // exp(-(1-η)^n (a^n (a-1)/n - 1)), may exceed 1
    bool vacuous = true;  // value >= 1
};

AnBound a_n_bound(double a, double eta, int n);

/// Ratio test on the bound over [n_lo, n_hi]: the largest successive ratio
/// over the top half of the range.
double a_n_bound_ratio(double a, double eta, int n_lo, int n_hi);

/// min over r in [a^n, a^(n+1) - n] of P({r < |x| <= r+n} is eps-free).
double min_free_probability(const RandomPotentialModel& model, double eps, double a, int n);

/// max over r of #(Σ ∩ {r < |x| <= r+n}) / (n max(r,1)^(d-1)) on the same range.
double shell_count_constant(const RandomPotentialModel& model, double a, int n);

using certify::quasi1d_threshold;

struct ANSeriesRow {
    int n = 0;
    bool degenerate = false;
    std::optional<double> exact;
    EstimateRecord estimate;
    std::string method;  // "enumeration", "monte-carlo" or "degenerate"
    double min_free_probability = 0.0;
    std::optional<double> eta;  // best admissible η, absent when none exists
    AnBound bound;
    double count_constant = 0.0;
    double partial_sum = 0.0;

    double value() const { return exact ? *exact : estimate.value; }
};

struct ANSeriesReport {
    double eps = 0.0;
    double a = 0.0;
    std::vector<ANSeriesRow> rows;
    double top_half_ratio = 0.0;
    bool decreasing = false;
    bool summable = false;
    std::string reason;
};

struct ReportOptions {
    int exact_budget = 20;  // enumerate when the random site count is at most this
};

ANSeriesReport borel_cantelli_report(const RandomPotentialModel& model, double eps, double a, int n_lo, int n_hi,
                                     std::uint64_t trials, std::uint64_t seed, const ReportOptions& opts = {});

/// Columns: n, exact, estimate, std_error, bound, partial_sum.
std::string report_to_csv(const ANSeriesReport& r);
std::string report_to_jsonl(const ANSeriesReport& r);

}  // namespace sparseloc::stochastic
