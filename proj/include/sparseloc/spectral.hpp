#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sparseloc/geometry.hpp"
#include "sparseloc/models.hpp"

namespace sparseloc::spectral {

/// -Δ_h + V on the interior nodes of a box with Dirichlet boundary. Node
/// (k_1, ..., k_d) sits at origin + h (k_1 + 1, ..., k_d + 1), first axis
/// fastest.
struct GridOperator {
    int dim = 1;
    std::vector<int> extents;       // interior nodes per axis
    double h = 1.0;
    Point origin;                   // box corner
    std::vector<double> potential;  // V at each node

    std::size_t size() const { return potential.size(); }
    Point node(std::size_t k) const;
    std::vector<int> multi_index(std::size_t k) const;
    double stencil_diagonal() const { return 2.0 * dim / (h * h); }
    double stencil_offdiagonal() const { return -1.0 / (h * h); }
    /// Neighbors of node k inside the box.
    std::vector<std::size_t> neighbors(std::size_t k) const;
    /// y = H x.
    std::vector<double> apply(const std::vector<double>& x) const;
    /// Gershgorin enclosure [lo, hi] of the spectrum.
    std::pair<double, double> gershgorin() const;
    /// Upper bound on ||H||_2.
    double norm_bound() const;
    bool is_symmetric() const;
};

/// Free operator (V = c) on a box with the given node counts.
GridOperator free_operator(std::vector<int> extents, double h, double constant = 0.0);

/// Operator with an explicit node potential.
GridOperator grid_operator(std::vector<int> extents, double h, Point origin, std::vector<double> potential);

/// Samples V_0 + λ V_ω at the interior nodes of `box`. Throws WindowError
/// when a node's potential needs couplings outside the sampled window.
GridOperator discretize(const models::RandomPotentialModel& model, const models::CouplingMap& couplings,
                        const geometry::Box& box, double h, double coupling_scale = 1.0);

/// Triplet text export: a header line, then "row col value" per nonzero.
std::string to_triplets(const GridOperator& op);

struct SpectralWindowResult {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> values;                // ascending
    std::vector<std::vector<double>> vectors;  // unit ℓ² norm
    std::vector<double> residuals;             // ||H v - λ v||
    double max_residual = 0.0;
    double tolerance = 0.0;                    // 1e-8 ||H||
    bool converged = true;
    std::string method;                        // "dense", "tridiagonal" or "shift-invert-lanczos"
    std::size_t expected = 0;                  // eigenvalue count in the window by inertia
};

/// Number of eigenvalues strictly below E (Sylvester inertia of H - E).
std::size_t count_below(const GridOperator& op, double E);

/// All eigenpairs with lo <= λ <= hi.
SpectralWindowResult eigenpairs(const GridOperator& op, double lo, double hi, bool with_vectors = true);
/// The `count` lowest eigenpairs.
SpectralWindowResult lowest_eigenpairs(const GridOperator& op, std::size_t count, bool with_vectors = true);
/// Every eigenpair (dense or tridiagonal path only).
SpectralWindowResult all_eigenpairs(const GridOperator& op, bool with_vectors = true);

struct Interval {
    double lo;
    double hi;
};

/// Gaps of the spectrum of op at the given merge resolution, starting with
/// the principal gap (-inf, λ_min).
std::vector<Interval> spectrum_gaps(const GridOperator& op, double resolution);
/// E inside some gap, at least `margin` away from its edges.
bool in_gaps(const std::vector<Interval>& gaps, double E, double margin = 0.0);

double ipr(const std::vector<double>& v);

struct DecayFit {
    double rate = 0.0;     // per unit length
    double quality = 0.0;  // coefficient of determination
    std::size_t points = 0;
};

/// Least-squares slope of log|v| against distance over |v| > 1e-12.
DecayFit decay_rate_fit(const std::vector<double>& v, const std::vector<double>& distance);
/// Index distance |j - center| for a 1-D vector.
DecayFit decay_rate_fit(const std::vector<double>& v, std::size_t center);
/// Euclidean node distance on the operator's grid.
DecayFit decay_rate_fit(const GridOperator& op, const std::vector<double>& v, std::size_t center);

struct ResolventProbe {
    std::size_t source = 0;
    std::vector<std::size_t> targets;
};

/// Probes from the box center outward along the first axis, up to a
/// fraction of the distance to the boundary.
std::vector<ResolventProbe> default_probes(const GridOperator& op, double reach = 0.6);

struct ResolventDecay {
    double energy = 0.0;
    double rate = 0.0;
    double quality = 0.0;
    double spectral_distance = 0.0;  // dist(E, σ(op))
};

/// Solves (H - E) u = δ_y per probe and fits the decay of |u(x)| in |x - y|.
/// Refused (InvalidArgument) when an eigenvalue lies within `resolution` of E.
ResolventDecay resolvent_decay(const GridOperator& op, double E, const std::vector<ResolventProbe>& probes,
                               double resolution = 1e-3);

struct ResolventTable {
    std::vector<ResolventDecay> rows;  // sorted by spectral distance
    bool strictly_increasing = false;  // rate increases with spectral distance
};

ResolventTable resolvent_decay_table(const GridOperator& op, const std::vector<double>& energies,
                                     const std::vector<ResolventProbe>& probes, double resolution = 1e-3);

struct StateRecord {
    double energy = 0.0;
    double ipr = 0.0;
    double decay_rate = 0.0;
    double fit_quality = 0.0;
    Point center;
    bool in_gap = false;
};

struct LocalizationOptions {
    double resolution = 1e-3;   // gap merge resolution
    std::size_t bulk_states = 200;  // in-band states, sampled evenly by index
    double fit_quality = 0.9;
};

struct LocalizationReport {
    std::vector<Interval> gaps;
    std::vector<StateRecord> states;
    std::size_t gap_states = 0;
    std::size_t bulk_states = 0;
    double median_gap_ipr = 0.0;
    double median_bulk_ipr = 0.0;
    double good_fit_fraction = 0.0;  // gap states with quality >= threshold
    double boundary_amplitude = 0.0;  // max |v| on boundary-adjacent nodes over gap states
    bool localized = false;
    std::string verdict;
};

LocalizationReport localization_report(const GridOperator& h, const GridOperator& h0,
                                       const LocalizationOptions& opts = {});

/// Samples the model, discretizes the box, and doubles the box (up to
/// `max_doublings` times, within the site window) while gap states reach
/// the boundary above 1e-8.
struct ProbeResult {
    LocalizationReport report;
    geometry::Box box;
    int doublings = 0;
};
ProbeResult localization_probe(const models::RandomPotentialModel& model, std::uint64_t seed, geometry::Box box,
                               double h, double coupling_scale = 1.0, int max_doublings = 2,
                               const LocalizationOptions& opts = {});

std::string states_to_csv(const LocalizationReport& r);

}  // namespace sparseloc::spectral
