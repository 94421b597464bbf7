#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sparseloc/geometry.hpp"
#include "sparseloc/models.hpp"

namespace sparseloc::certify {

using geometry::RegionSet;
using models::CouplingMap;
using models::RandomPotentialModel;

/// True iff every sampled site inside `region` has coupling <= eps.
/// Throws WindowError when the region reaches past the sampled window.
bool is_epsilon_free(const CouplingMap& couplings, const RegionSet& region, double eps);

/// Smallest r in [lo, hi] such that no value t in `norms` satisfies
/// r < t <= r + width, i.e. the shell {r < |x| <= r + width} avoids all of
/// them. Each t forbids the half-open interval [t - width, t), so the
/// infimum is attained.
std::optional<double> smallest_free_radius(std::vector<double> norms, double lo, double hi, double width);

/// Every maximal r-interval in [lo, hi] on which the shell is free, as
/// (start, end) pairs; an interval contains its start and excludes its end
/// unless end == hi.
std::vector<std::pair<double, double>> free_radius_intervals(std::vector<double> norms, double lo, double hi,
                                                             double width);

struct FreeAnnulusRecord {
    int n = 0;
    double r_n = 0.0;
    double width = 0.0;
    double host_lo = 0.0;  // a^n
    double host_hi = 0.0;  // a^(n+1)
    bool free = false;
    bool degenerate = false;  // a^(n+1) - n < a^n: no candidate radius
};

/// Scans r over [a^n, a^(n+1) - n] for an eps-free shell of width n.
/// `excluded` (a model site index) is ignored when deciding freeness.
FreeAnnulusRecord find_free_subannulus(const CouplingMap& couplings, double eps, double a, int n,
                                       std::optional<std::size_t> excluded = std::nullopt);

/// ω̃_i = min(ω_i, eps).
CouplingMap truncate_couplings(const CouplingMap& couplings, double eps);

/// Union of B(i, ρ_i) over sampled sites with ω_i > eps.
RegionSet difference_support(const RandomPotentialModel& model, const CouplingMap& couplings, double eps,
                             std::optional<std::size_t> excluded = std::nullopt);

/// Smallest integer strictly greater than x (x >= 0).
int smallest_integer_above(double x);
/// ℓ for the surface-area construction: smallest integer > 2(d-1)/γ.
int ell_sparse(double gamma, int d);
/// ℓ for the volume construction: smallest integer > 2d/γ.
int ell_pp(double gamma, int d);
/// First n >= 1 with a^(n+1) - n >= a^n.
int first_nondegenerate_n(double a);
/// Smallest n0 such that a^m >= 2 m^(2α-1) for every m >= n0.
int cheese_threshold(double a, double alpha);

struct Gap {
    int n = 0;
    std::string reason;  // "degenerate-range" or "no-free-annulus"
};

struct SparseConstruction {
    geometry::TotalDecomposition decomposition;
    std::vector<FreeAnnulusRecord> annuli;
    std::vector<Gap> gaps;
    int ell = 0;
    double a = 0.0;
    double rho = 0.0;
    bool partial() const { return !gaps.empty(); }
};

/// Spheres ∂B(0, r_n + n/2) over free sub-annuli, n in [n_min, n_max].
/// a defaults to 1 + 1/ℓ with ℓ = ell_sparse(γ, d).
SparseConstruction build_decomposition_sparse(const RandomPotentialModel& model, const CouplingMap& couplings,
                                              double eps, double gamma, int n_min, int n_max,
                                              std::optional<double> a = std::nullopt);

struct ShellConstruction {
    geometry::ShellSequence shells;
    std::vector<FreeAnnulusRecord> annuli;
    std::vector<Gap> gaps;
    int ell = 0;
    double a = 0.0;
    double rho = 0.0;
    std::optional<std::size_t> excluded;
};

/// Nested balls A_n = B(0, r_n + n/2) with the distinguished site excluded.
ShellConstruction build_shell_sequence_pp(const RandomPotentialModel& model, const CouplingMap& couplings, double eps,
                                          double gamma, int n_min, int n_max,
                                          std::optional<std::size_t> distinguished = std::nullopt,
                                          std::optional<double> a = std::nullopt);

struct CapCount {
    int n = 0;
    std::size_t points = 0;  // #P_n
    std::size_t caps = 0;    // distinct caps after merging equal directions
    double member_bound = 0.0;  // 2 n^α + 2
    double point_bound = 0.0;   // 2 C (n^α + 1)
    bool cheese_bound_applies = false;  // R_n >= 2 n^(2α-1)
    double cheese_distance = 0.0;
    double cheese_lower_bound = 0.0;    // n^α - ρ
};

struct Quasi1DConstruction {
    geometry::TotalDecomposition decomposition;
    std::vector<FreeAnnulusRecord> annuli;
    std::vector<Gap> gaps;
    std::vector<CapCount> counts;
    double a = 0.0;
    double alpha = 2.0;
    double rho = 0.0;
    double quasi_constant = 0.0;
    double delta = 0.0;          // sup p_i(eps) over the window
    double threshold_a = 1.0;    // (1 - delta)^(-C)
    int cheese_threshold_n = 0;
    std::vector<std::string> warnings;
};

/// Cap/cheese split of the spheres ∂B(0, r_n + n/2). Refuses (InvalidArgument)
/// when the site window fails the quasi-1D count test.
Quasi1DConstruction build_decomposition_quasi1d(const RandomPotentialModel& model, const CouplingMap& couplings,
                                                double eps, double gamma, double alpha, double a, int n_min,
                                                int n_max);

double quasi1d_threshold(double delta, double c);

// ---------------------------------------------------------------------------
// Certificates

enum class Verdict { Certified, NotCertified, Inconclusive };
std::string to_string(Verdict v);

struct TermRecord {
    int n = 0;
    std::string role;
    double delta = 0.0;       // δ_n (or δ'_n)
    double size = 0.0;        // σ(S_n) or |A_{n+1} \ A_{n-1}|
    double size_error = 0.0;
    bool symbolic = false;    // size from a closed-form bound
    double term = 0.0;        // size * exp(-γ δ)
    double envelope = 0.0;    // tail-rule bound at this n (0 when absent)
};

struct Certificate {
    std::string form;  // "ac" or "pp"
    int dim = 1;
    geometry::DecompositionKind kind = geometry::DecompositionKind::Custom;
    double gamma = 0.0;
    std::vector<TermRecord> terms;
    double partial_sum = 0.0;
    double observed_ratio = 0.0;  // max ratio of per-n sums over the last k steps
    double tail_ratio = 0.0;      // limiting ratio of the tail envelope (0 without a rule)
    double tail_bound = 0.0;      // bound on the omitted terms n > N (+inf if unbounded)
    int k = 5;
    bool has_tail_rule = false;
    Verdict verdict = Verdict::Inconclusive;
    std::string reason;
    std::string witness;
};

struct CertifyOptions {
    double resolution = 0.01;  // r-grid spacing for σ
    int k = 5;
};

/// Σ σ(S_n) e^{-γ δ_n} with δ_n = dist(diff_support, S_n).
Certificate certify_ac(const geometry::TotalDecomposition& dec, const RegionSet& diff_support, double gamma,
                       const CertifyOptions& opts = {});

/// Σ |A_{n+1} \ A_{n-1}| e^{-γ δ'_n}. The last shell has no successor and is
/// not scored.
Certificate certify_pp(const geometry::ShellSequence& shells, const RegionSet& diff_support, double gamma,
                       const CertifyOptions& opts = {});

/// Verdict logic over precomputed member records; used by both forms.
Certificate certify_terms(std::string form, int dim, geometry::DecompositionKind kind, double gamma,
                          std::vector<TermRecord> terms, const std::optional<geometry::TailRule>& tail, int k = 5);

/// Log of the tail envelope at index n for the given form and kind.
double log_envelope(const std::string& form, geometry::DecompositionKind kind, const geometry::TailRule& tail, int d,
                    double gamma, int n, const std::string& role);

std::string certificate_to_jsonl(const Certificate& c);
std::string certificate_to_csv(const Certificate& c);

}  // namespace sparseloc::certify
