#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sparseloc/common.hpp"

namespace sparseloc::geometry {

// Primitive shapes. Balls are closed; spheres are boundaries of balls.

struct PointShape {
    Point at;
};

struct Ball {
    Point center;
    double radius = 0.0;
};

struct Sphere {
    Point center;
    double radius = 0.0;
};

/// Solid annulus B(0, outer) \ B(0, inner), centered at the origin.
struct Annulus {
    int dim = 1;
    double inner = 0.0;
    double outer = 0.0;
};

/// ∂B(0, sphere_radius) ∩ B(sphere_radius * direction, ball_radius).
struct Cap {
    double sphere_radius = 0.0;
    Point direction;  // unit
    double ball_radius = 0.0;
};

/// Closure of ∂B(0, radius) minus the closed caps listed in `holes`.
struct PerforatedSphere {
    double radius = 0.0;
    int dim = 2;
    std::vector<Point> hole_directions;  // unit
    std::vector<double> hole_radii;
};

struct Box {
    Point lo;
    Point hi;
};

using Primitive = std::variant<PointShape, Ball, Sphere, Annulus, Cap, PerforatedSphere, Box>;

/// Result of a distance query. `exact` is false when the value came from
/// surface sampling; the true distance then lies in [value - tolerance, value].
struct DistanceResult {
    double value = 0.0;
    double tolerance = 0.0;
    bool exact = true;
};

struct BoundingBox {
    Point lo;
    Point hi;
};

/// A compact subset of R^d represented as a finite union of primitives.
class RegionSet {
public:
    explicit RegionSet(int dim);

    int dim() const { return dim_; }
    bool empty() const { return prims_.empty(); }
    const std::vector<Primitive>& primitives() const { return prims_; }

    /// Validates and appends a primitive.
    RegionSet& add(Primitive p);

    /// dist(x, S); +inf for the empty set.
    DistanceResult distance_to(const Point& x) const;
    bool contains(const Point& x, double tol = 1e-9) const;

    /// sup_{x in S} |x| (circumscribing radius about the origin).
    double circumradius() const;
    BoundingBox bounds() const;
    /// Diameter; exact for a single point, ball, sphere or cap, and an upper
    /// bound from circumscribing balls for unions.
    double diameter() const;
    /// True when every primitive has Lebesgue measure zero.
    bool is_null_set() const;
    /// Exact Lebesgue measure when it is available in closed form (single
    /// primitive or a union of null sets).
    std::optional<double> volume() const;
    /// (d-1)-dimensional measure for a single surface primitive in d = 2 or 3.
    std::optional<double> surface_measure() const;

    /// Center when every primitive is radially symmetric about one point.
    std::optional<Point> radial_center() const;

private:
    int dim_;
    std::vector<Primitive> prims_;
};

RegionSet make_point(const Point& x);
RegionSet make_ball(const Point& center, double radius);
RegionSet make_sphere(const Point& center, double radius);
/// Solid annulus A_{r,R} = B(0,R) \ B(0,r) with exact volume accessor.
RegionSet make_annulus(double r, double R, int d);
/// Cap of the origin sphere; the full sphere when cap_ball_radius >= 2R and a
/// single point when cap_ball_radius == 0.
RegionSet spherical_cap(double sphere_radius, const Point& direction, double cap_ball_radius);

/// Half-angle of the cap ∂B(0,R) ∩ B(R u, rho), in radians (π = full sphere).
double cap_half_angle(double sphere_radius, double ball_radius);

DistanceResult distance_between(const RegionSet& a, const RegionSet& b);

struct MeasureEstimate {
    double value = 0.0;
    double error = 0.0;
};

/// |{x : r <= dist(x,S) <= r+1}| by deterministic grid quadrature.
MeasureEstimate shell_measure(const RegionSet& s, double r, double resolution);

struct SurfaceAreaEstimate {
    double sigma = 0.0;
    double argmax_r = 0.0;
    double error = 0.0;
    double r_max = 0.0;
};

/// sup_{0 <= r <= r_max} shell_measure(S, r) / (r^d + 1) on an r-grid of the
/// given spacing. r_max defaults to diam(S) + d + 2.
SurfaceAreaEstimate generalized_surface_area(const RegionSet& s, double resolution = 0.01,
                                             std::optional<double> r_max = std::nullopt);

/// C_d in σ(S) <= C_d((diam S)^d + 1): V_d * 4^(d-1).
double surface_area_constant(int d);

// ---------------------------------------------------------------------------
// Decompositions

enum class DecompositionKind { SphereShells, CapCheese, Custom };

std::string to_string(DecompositionKind k);
DecompositionKind decomposition_kind_from_string(const std::string& s);

struct DecompositionMember {
    int n = 0;
    std::string role;  // "sphere", "cap", "cheese", "custom"
    RegionSet set;
};

/// Symbolic rule describing the untruncated tail of a construction:
/// radii R_n lie in [a^n + n/2, a^(n+1) - n/2]; member distances obey the
/// construction's lower bounds in terms of rho (and alpha for cap/cheese).
struct TailRule {
    double growth = 0.0;  // a
    double rho = 0.0;
    double alpha = 0.0;   // 0 unless cap/cheese
    double cap_count_constant = 0.0;  // quasi-1D C
};

struct TotalDecomposition {
    int dim = 1;
    DecompositionKind kind = DecompositionKind::Custom;
    double gamma = 0.0;
    std::vector<DecompositionMember> members;
    bool truncated = true;  // finite prefix of an infinite sequence
    std::optional<TailRule> tail;
};

struct ShellSequence {
    int dim = 1;
    std::vector<int> n;
    std::vector<double> radii;  // R_n, strictly increasing; A_n = B(0, R_n)
    std::optional<TailRule> tail;
};

/// Open component of the complement of a sphere-shell decomposition.
struct ComplementComponent {
    double inner = 0.0;  // 0 for the inner ball
    double outer = 0.0;  // +inf for the exterior
    bool bounded = true;
    double volume = 0.0;
};

TotalDecomposition sphere_shell_decomposition(std::span<const double> radii, int d,
                                              double gamma = 0.0);
std::vector<ComplementComponent> complement_components(const TotalDecomposition& dec);

struct StructureCheck {
    bool ok = false;
    bool weak = false;  // sampled check only
    std::string detail;
};

/// Structural total-decomposition check. Sphere shells: concentric with
/// strictly increasing radii. Cap/cheese: per n, caps and cheese cover the
/// sphere (sampled membership). Custom: members are null sets (weak).
StructureCheck check_structure(const TotalDecomposition& dec, int samples_per_sphere = 720);

/// Points sampled on a surface primitive with spacing at most `spacing`
/// (d <= 3). Used for sampled distances and coverage checks.
std::vector<Point> sample_surface(const Primitive& p, int dim, double spacing);

// JSON-lines: one header record, then one record per primitive / member.
std::string region_to_jsonl(const RegionSet& s);
RegionSet region_from_jsonl(const std::string& text);
std::string decomposition_to_jsonl(const TotalDecomposition& dec);
TotalDecomposition decomposition_from_jsonl(const std::string& text);

}  // namespace sparseloc::geometry
