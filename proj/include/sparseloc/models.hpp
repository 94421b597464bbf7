#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sparseloc/common.hpp"
#include "sparseloc/geometry.hpp"
#include "sparseloc/rng.hpp"

namespace sparseloc::models {

// ---------------------------------------------------------------------------
// Site sets

enum class SiteGenerator { Lattice, Tube, Explicit };

std::string to_string(SiteGenerator g);

/// Finite window of a uniformly discrete scatterer set Σ.
class SiteSet {
public:
    /// Z^d ∩ B(0, window_radius), lexicographic order.
    static SiteSet lattice(int d, double window_radius);
    /// Z × S ∩ B(0, window_radius), S ⊂ Z^(d-1) a finite cross-section.
    static SiteSet tube(int d, std::vector<Point> cross_section, double window_radius);
    static SiteSet explicit_list(int d, std::vector<Point> sites);

    int dim() const { return dim_; }
    SiteGenerator generator() const { return generator_; }
    const std::vector<Point>& sites() const { return sites_; }
    const std::vector<Point>& cross_section() const { return cross_section_; }
    std::size_t size() const { return sites_.size(); }
    /// Radius of the origin ball inside which the list is complete
    /// (+inf for explicit lists).
    double window_radius() const { return window_radius_; }

    /// Canonical 64-bit key of site i, a function of its coordinates only.
    std::uint64_t site_key(std::size_t i) const;

    struct Separation {
        double r_sigma = 0.0;
        std::size_t first = 0;
        std::size_t second = 0;
    };
    /// Minimum pairwise distance with a witness pair (+inf for < 2 sites).
    Separation separation() const;

    /// Regenerates the list from the generator tag and compares.
    bool generator_consistent() const;

    /// Indices of sites within distance `radius` of x.
    std::vector<std::size_t> near(const Point& x, double radius) const;
    /// Indices of sites with lo < |i| <= hi, in increasing norm.
    std::vector<std::size_t> with_norm_in(double lo, double hi) const;
    /// #{i : |i| <= r}.
    std::size_t count_within(double r) const;

private:
    SiteSet(int dim, SiteGenerator g, std::vector<Point> sites, double window_radius);
    void build_index();

    int dim_;
    SiteGenerator generator_;
    std::vector<Point> sites_;
    std::vector<Point> cross_section_;
    double window_radius_;
    std::vector<std::size_t> by_norm_;
    std::vector<double> norms_sorted_;
    std::shared_ptr<const class SiteLocator> locator_;
};

/// Uniform-grid spatial hash over a point list for neighbor queries.
class SiteLocator {
public:
    SiteLocator(std::vector<Point> points, double cell);
    std::vector<std::size_t> near(const Point& x, double radius) const;

private:
    std::vector<std::int64_t> cell_of(const Point& x) const;
    static std::uint64_t hash_cell(const std::vector<std::int64_t>& c);

    std::vector<Point> points_;
    double cell_;
    std::vector<std::uint64_t> keys_;   // sorted cell hashes
    std::vector<std::size_t> order_;    // point index per sorted key
};

// ---------------------------------------------------------------------------
// Single-site potentials

enum class Sign { Nonnegative, Nonpositive, Indefinite };
std::string to_string(Sign s);

struct LowerBump {
    double c = 0.0;
    double s = 0.0;
};

/// Radially symmetric single-site profile f with declared support radius ρ.
struct SingleSitePotential {
    enum class Profile { Indicator, RadialTable };
    Profile profile = Profile::Indicator;
    double height = 1.0;               // Indicator: height * χ_{B(0, radius)}
    double radius = 1.0;
    std::vector<double> table_r;       // RadialTable: piecewise linear in |x|,
    std::vector<double> table_value;   // zero beyond the last node
    double support_radius = 1.0;       // declared ρ
    double p_exponent = 2.0;
    double norm_bound = 1.0;           // declared M
    Sign sign = Sign::Indefinite;
    std::optional<LowerBump> lower_bump;

    static SingleSitePotential indicator(double height, double radius);

    double at_radius(double r) const;
    double operator()(const Point& offset) const { return at_radius(norm(offset)); }
    /// Largest radius where the profile is nonzero.
    double actual_support_radius() const;
    double sup_abs() const;
    /// ||f||_q by radial quadrature (exact for indicators).
    double lp_norm(double q, int d) const;
};

// ---------------------------------------------------------------------------
// Coupling laws

/// Distribution μ on [0,1], stored as atoms plus uniform components.
class CouplingLaw {
public:
    enum class Kind { PointMasses, Uniform, Bernoulli, BernoulliTimesUniform, Mixture };

    static CouplingLaw point_masses(std::vector<double> atoms, std::vector<double> weights);
    static CouplingLaw uniform(double lo, double hi);
    static CouplingLaw bernoulli(double p);
    /// ξ·q with ξ ~ bernoulli(p), q ~ uniform[lo, hi] independent.
    static CouplingLaw bernoulli_times_uniform(double p, double lo, double hi);
    static CouplingLaw mixture(const std::vector<CouplingLaw>& parts, const std::vector<double>& weights);

    /// Point mass at 0.
    CouplingLaw();

    Kind kind() const { return kind_; }

    /// p(ε) = μ([ε, 1]).
    double p_epsilon(double eps) const;
    /// μ((ε, 1]): probability that a site spoils ε-freeness.
    double exceed_probability(double eps) const;
    /// μ([0, ε)).
    double mass_below(double eps) const;
    /// Mass of the absolutely continuous part.
    double ac_mass() const;
    double mean() const;
    double second_moment() const;
    double total_mass() const;

    /// Inverse-CDF style draw from a single uniform.
    double sample_from_uniform(double u) const;
    double sample(CounterRng& rng) const { return sample_from_uniform(rng.uniform()); }

    struct Atom {
        double at;
        double weight;
    };
    struct UniformPart {
        double lo;
        double hi;
        double weight;
    };
    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::vector<UniformPart>& uniforms() const { return uniforms_; }

    // Construction parameters, kept for serialization.
    double param_p = 0.0;
    double param_lo = 0.0;
    double param_hi = 0.0;
    std::vector<CouplingLaw> parts;
    std::vector<double> part_weights;

private:
    void validate() const;

    Kind kind_ = Kind::PointMasses;
    std::vector<Atom> atoms_;
    std::vector<UniformPart> uniforms_;
};

/// Rule assigning a coupling law to every site.
struct LawRule {
    enum class Kind { Constant, DecayingBernoulli, Shells, PerSite };
    struct ShellLaw {
        double r_min = 0.0;
        double r_max = 0.0;
        CouplingLaw law;
    };

    Kind kind = Kind::Constant;
    std::vector<CouplingLaw> base;         // Constant / Shells default (one element)
    double scale = 1.0;                    // DecayingBernoulli: p_i = min(1, scale |i|^-tau)
    double tau = 0.0;
    std::vector<CouplingLaw> amplitude;    // optional (zero or one element): Model 2 amplitude
    std::vector<ShellLaw> shells;          // first match wins; |i| in [r_min, r_max]
    std::vector<CouplingLaw> per_site;

    static LawRule constant(CouplingLaw law);
    static LawRule decaying_bernoulli(double scale, double tau,
                                      std::optional<CouplingLaw> amplitude = std::nullopt);
    static LawRule by_shells(CouplingLaw fallback, std::vector<ShellLaw> shells);
    static LawRule explicit_laws(std::vector<CouplingLaw> laws);

    CouplingLaw law_at(const Point& site, std::size_t index) const;
};

// ---------------------------------------------------------------------------
// Background potential V0

struct Background {
    enum class Kind { Zero, Constant, Periodic };
    Kind kind = Kind::Zero;
    double value = 0.0;
    double period = 1.0;            // Periodic: piecewise constant along the first axis
    std::vector<double> values;

    static Background zero() { return {}; }
    static Background constant(double c);
    static Background periodic(double period, std::vector<double> values);

    double operator()(const Point& x) const;
    double sup_abs() const;
};

// ---------------------------------------------------------------------------

struct RandomPotentialModel {
    SiteSet sites;
    std::vector<SingleSitePotential> potentials;  // one shared entry, or one per site
    LawRule laws;
    Background background;
    std::optional<std::size_t> distinguished_site;

    int dim() const { return sites.dim(); }
    const SingleSitePotential& potential(std::size_t i) const;
    CouplingLaw law(std::size_t i) const { return laws.law_at(sites.sites()[i], i); }
    /// Largest declared support radius ρ.
    double rho() const;
};

/// Sampled couplings ω_i for the sites inside a window.
struct CouplingMap {
    int dim = 1;
    std::uint64_t seed = 0;
    std::vector<std::size_t> site_index;  // index into the model's SiteSet
    std::vector<Point> positions;
    std::vector<double> values;
    geometry::RegionSet window{1};
    /// Radius of the largest origin-centered ball known to lie in the window
    /// and in the site list's completeness window.
    double covered_radius = 0.0;

    std::size_t size() const { return values.size(); }
};

CouplingMap sample_couplings(const RandomPotentialModel& model, std::uint64_t seed,
                             const geometry::RegionSet& window);

/// Origin-centered inner radius of a window (ball / box / annulus with r=0).
double window_inner_radius(const geometry::RegionSet& window);

double p_epsilon(const CouplingLaw& law, double eps);
double ac_mass(const CouplingLaw& law);

struct PotentialValue {
    double value = 0.0;
    bool truncated = false;  // x too close to the window edge
};

/// V_ω evaluator with a spatial index over the sampled sites.
class PotentialEvaluator {
public:
    PotentialEvaluator(const RandomPotentialModel& model, const CouplingMap& couplings);
    PotentialValue operator()(const Point& x, bool include_background = false) const;

private:
    const RandomPotentialModel* model_;
    const CouplingMap* couplings_;
    SiteLocator locator_;
    double rho_;
};

PotentialValue evaluate_potential(const RandomPotentialModel& model, const CouplingMap& couplings,
                                  const Point& x, bool include_background = false);

/// W(x) = E(V_ω(x)^2)^(1/2), exact from per-site first and second moments.
double second_moment_profile(const RandomPotentialModel& model, const Point& x);

struct DecayFit {
    double exponent = 0.0;      // W ~ (1+|x|)^-exponent
    double quality = 0.0;       // R^2 of the log-log fit
    bool exceeds_one = false;   // Cook-criterion regime
    std::vector<double> radii;
    std::vector<double> values;
};

/// Fits the decay exponent of W along a ray, evaluating W at the site nearest
/// to each probe point R·u.
DecayFit fit_second_moment_decay(const RandomPotentialModel& model, const Point& direction,
                                 const std::vector<double>& radii);

struct QuasiDimensionReport {
    double constant = 0.0;          // max count / max(R^(m-1), 1)
    bool pass = false;
    double growth_slope = 0.0;      // log-log slope over the last half of R
    double cumulative_constant = 0.0;  // max #(Σ ∩ B(0,R)) / R over R >= 1
    bool cumulative_pass = false;
    double cumulative_slope = 0.0;
    std::vector<double> radii;
    std::vector<std::size_t> counts;
};

/// Annulus counts #(Σ ∩ A_{R,R+1}) over R ∈ {0, 1/2, ..., R_max}.
QuasiDimensionReport quasi_dimension_bound(const SiteSet& sites, double m, double r_max);

struct AssumptionEntry {
    std::string id;
    bool checked = false;
    bool passed = false;
    std::string detail;
};

struct AssumptionReport {
    std::vector<AssumptionEntry> entries;
    double r_sigma = 0.0;
    bool all_passed() const;
    const AssumptionEntry& entry(const std::string& id) const;
};

AssumptionReport validate_assumptions(const RandomPotentialModel& model);

// JSON model description (see docs in README).
RandomPotentialModel model_from_json(const std::string& text);
std::string model_to_json(const RandomPotentialModel& model);
CouplingLaw law_from_json(const std::string& text);

}  // namespace sparseloc::models
