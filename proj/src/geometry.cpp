#include "sparseloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace sparseloc::geometry {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Point scaled(const Point& u, double s) {
    Point out(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) out[k] = u[k] * s;
    return out;
}

Point unit(const Point& v) {
    const double n = norm(v);
    require(n > 0.0 && std::isfinite(n), "zero direction vector");
    return scaled(v, 1.0 / n);
}

int prim_dim(const Primitive& p) {
    return std::visit(overloaded{
                          [](const PointShape& s) { return static_cast<int>(s.at.size()); },
                          [](const Ball& s) { return static_cast<int>(s.center.size()); },
                          [](const Sphere& s) { return static_cast<int>(s.center.size()); },
                          [](const Annulus& s) { return s.dim; },
                          [](const Cap& s) { return static_cast<int>(s.direction.size()); },
                          [](const PerforatedSphere& s) { return s.dim; },
                          [](const Box& s) { return static_cast<int>(s.lo.size()); },
                      },
                      p);
}

// Closed arcs (start angle, length) of a perforated circle.
std::vector<std::pair<double, double>> cheese_arcs_2d(const PerforatedSphere& s) {
    std::vector<std::pair<double, double>> removed;  // [lo, hi] angles, may exceed 2π
    for (std::size_t j = 0; j < s.hole_directions.size(); ++j) {
        const double half = cap_half_angle(s.radius, s.hole_radii[j]);
        if (half <= 0.0) continue;  // a removed point is restored by the closure
        if (half >= kPi) return {};
        double phi = std::atan2(s.hole_directions[j][1], s.hole_directions[j][0]);
        if (phi < 0) phi += 2 * kPi;
        removed.emplace_back(phi - half, phi + half);
    }
    if (removed.empty()) return {{0.0, 2 * kPi}};
    // Unroll onto [0, 2π) by splitting wrapped intervals.
    std::vector<std::pair<double, double>> flat;
    for (auto [lo, hi] : removed) {
        if (lo < 0) {
            flat.emplace_back(lo + 2 * kPi, 2 * kPi);
            flat.emplace_back(0.0, hi);
        } else if (hi > 2 * kPi) {
            flat.emplace_back(lo, 2 * kPi);
            flat.emplace_back(0.0, hi - 2 * kPi);
        } else {
            flat.emplace_back(lo, hi);
        }
    }
    std::sort(flat.begin(), flat.end());
    std::vector<std::pair<double, double>> merged;
    for (auto iv : flat) {
        if (!merged.empty() && iv.first <= merged.back().second) {
            merged.back().second = std::max(merged.back().second, iv.second);
        } else {
            merged.push_back(iv);
        }
    }
    std::vector<std::pair<double, double>> arcs;
    const double start = merged.front().first;
    for (std::size_t k = 0; k < merged.size(); ++k) {
        const double gap_lo = merged[k].second;
        const double gap_hi = (k + 1 < merged.size()) ? merged[k + 1].first : start + 2 * kPi;
        if (gap_hi > gap_lo) arcs.emplace_back(gap_lo, gap_hi - gap_lo);
    }
    return arcs;
}

double angle_in_arc(double psi, double start, double length) {
    double rel = std::fmod(psi - start, 2 * kPi);
    if (rel < 0) rel += 2 * kPi;
    return rel <= length ? 0.0 : rel;
}

bool in_open_hole(const PerforatedSphere& s, const Point& y) {
    for (std::size_t j = 0; j < s.hole_directions.size(); ++j) {
        if (distance(y, scaled(s.hole_directions[j], s.radius)) < s.hole_radii[j]) return true;
    }
    return false;
}

std::vector<Point> fibonacci_sphere(double radius, std::size_t count) {
    std::vector<Point> pts;
    pts.reserve(count);
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (std::size_t k = 0; k < count; ++k) {
        const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(count);
        const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double th = golden * static_cast<double>(k);
        pts.push_back({radius * rxy * std::cos(th), radius * rxy * std::sin(th), radius * z});
    }
    return pts;
}

// Orthonormal pair spanning the plane orthogonal to u (d = 3).
std::pair<Point, Point> orthonormal_complement(const Point& u) {
    Point a = std::abs(u[0]) < 0.9 ? Point{1, 0, 0} : Point{0, 1, 0};
    const double p = dot(a, u);
    for (int k = 0; k < 3; ++k) a[k] -= p * u[k];
    a = unit(a);
    Point b{u[1] * a[2] - u[2] * a[1], u[2] * a[0] - u[0] * a[2], u[0] * a[1] - u[1] * a[0]};
    return {a, b};
}

// Points of the circle {R cos θ u + R sin θ (cos t a + sin t b)}.
std::vector<Point> cap_rim(double R, const Point& u, double theta, double spacing) {
    auto [a, b] = orthonormal_complement(u);
    const double rim = R * std::sin(theta);
    const auto count = static_cast<std::size_t>(std::max(8.0, std::ceil(2 * kPi * rim / spacing)));
    std::vector<Point> pts;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = 2 * kPi * static_cast<double>(k) / static_cast<double>(count);
        Point y(3);
        for (int i = 0; i < 3; ++i) {
            y[i] = R * std::cos(theta) * u[i] + rim * (std::cos(t) * a[i] + std::sin(t) * b[i]);
        }
        pts.push_back(std::move(y));
    }
    return pts;
}

DistanceResult cap_distance(const Cap& c, const Point& x) {
    const double R = c.sphere_radius;
    const double theta = cap_half_angle(R, c.ball_radius);
    const double rho = norm(x);
    if (x.size() == 1) {
        double best = std::abs(x[0] - R * c.direction[0]);
        if (theta >= kPi) best = std::min(best, std::abs(x[0] + R * c.direction[0]));
        return {best};
    }
    if (theta >= kPi) return {std::abs(rho - R)};
    if (rho == 0.0) return {R};
    const double cosphi = std::clamp(dot(x, c.direction) / rho, -1.0, 1.0);
    const double phi = std::acos(cosphi);
    if (phi <= theta) return {std::abs(rho - R)};
    const double d2 = rho * rho + R * R - 2 * rho * R * std::cos(phi - theta);
    return {std::sqrt(std::max(0.0, d2))};
}

double sampling_spacing(double scale, int dim) {
    const double s = std::max(scale, 1e-6);
    return dim <= 2 ? 0.002 * s : 0.02 * s;
}

DistanceResult cheese_distance(const PerforatedSphere& s, const Point& x) {
    const double R = s.radius;
    if (s.dim == 1) {
        double best = kInf;
        for (double sgn : {-1.0, 1.0}) {
            const Point y{sgn * R};
            bool removed = false;
            for (std::size_t j = 0; j < s.hole_directions.size(); ++j) {
                if (distance(y, scaled(s.hole_directions[j], R)) <= s.hole_radii[j]) removed = true;
            }
            if (!removed) best = std::min(best, std::abs(x[0] - y[0]));
        }
        return {best};
    }
    if (s.dim == 2) {
        const auto arcs = cheese_arcs_2d(s);
        if (arcs.empty()) return {kInf};
        const double rho = norm(x);
        if (rho == 0.0) return {R};
        const double psi = std::atan2(x[1], x[0]);
        double best = kInf;
        for (auto [start, len] : arcs) {
            if (angle_in_arc(psi, start, len) == 0.0) return {std::abs(rho - R)};
            for (double ang : {start, start + len}) {
                best = std::min(best, distance(x, Point{R * std::cos(ang), R * std::sin(ang)}));
            }
        }
        return {best};
    }
    if (s.dim == 3) {
        const double spacing = sampling_spacing(R, 3);
        const auto pts = sample_surface(s, 3, spacing);
        double best = kInf;
        for (const auto& y : pts) best = std::min(best, distance(x, y));
        return {best, spacing, false};
    }
    throw InvalidArgument("perforated sphere distance supported for d <= 3");
}

DistanceResult prim_distance(const Primitive& p, const Point& x) {
    return std::visit(
        overloaded{
            [&](const PointShape& s) { return DistanceResult{distance(x, s.at)}; },
            [&](const Ball& s) {
                return DistanceResult{std::max(0.0, distance(x, s.center) - s.radius)};
            },
            [&](const Sphere& s) {
                return DistanceResult{std::abs(distance(x, s.center) - s.radius)};
            },
            [&](const Annulus& s) {
                const double rho = norm(x);
                if (rho < s.inner) return DistanceResult{s.inner - rho};
                if (rho > s.outer) return DistanceResult{rho - s.outer};
                return DistanceResult{0.0};
            },
            [&](const Cap& s) { return cap_distance(s, x); },
            [&](const PerforatedSphere& s) { return cheese_distance(s, x); },
            [&](const Box& s) {
                double acc = 0.0;
                for (std::size_t k = 0; k < x.size(); ++k) {
                    const double g = std::max({s.lo[k] - x[k], 0.0, x[k] - s.hi[k]});
                    acc += g * g;
                }
                return DistanceResult{std::sqrt(acc)};
            },
        },
        p);
}

struct Circumball {
    Point center;
    double radius;
};

Circumball circumball(const Primitive& p) {
    return std::visit(
        overloaded{
            [](const PointShape& s) { return Circumball{s.at, 0.0}; },
            [](const Ball& s) { return Circumball{s.center, s.radius}; },
            [](const Sphere& s) { return Circumball{s.center, s.radius}; },
            [](const Annulus& s) { return Circumball{Point(s.dim, 0.0), s.outer}; },
            [](const Cap& s) {
                const double th = cap_half_angle(s.sphere_radius, s.ball_radius);
                if (s.direction.size() == 1) {
                    if (th >= kPi) return Circumball{Point{0.0}, s.sphere_radius};
                    return Circumball{scaled(s.direction, s.sphere_radius), 0.0};
                }
                if (th <= kPi / 2) {
                    return Circumball{scaled(s.direction, s.sphere_radius * std::cos(th)),
                                      s.sphere_radius * std::sin(th)};
                }
                return Circumball{Point(s.direction.size(), 0.0), s.sphere_radius};
            },
            [](const PerforatedSphere& s) { return Circumball{Point(s.dim, 0.0), s.radius}; },
            [](const Box& s) {
                Point c(s.lo.size());
                for (std::size_t k = 0; k < c.size(); ++k) c[k] = 0.5 * (s.lo[k] + s.hi[k]);
                return Circumball{c, 0.5 * distance(s.lo, s.hi)};
            },
        },
        p);
}

double prim_diameter(const Primitive& p) {
    return std::visit(overloaded{
                          [](const PointShape&) { return 0.0; },
                          [](const Ball& s) { return 2 * s.radius; },
                          [](const Sphere& s) { return 2 * s.radius; },
                          [](const Annulus& s) { return 2 * s.outer; },
                          [](const Cap& s) {
                              const double th = cap_half_angle(s.sphere_radius, s.ball_radius);
                              if (s.direction.size() == 1) return th >= kPi ? 2 * s.sphere_radius : 0.0;
                              return th <= kPi / 2 ? 2 * s.sphere_radius * std::sin(th)
                                                   : 2 * s.sphere_radius;
                          },
                          [](const PerforatedSphere& s) { return 2 * s.radius; },
                          [](const Box& s) { return distance(s.lo, s.hi); },
                      },
                      p);
}

bool prim_is_null(const Primitive& p) {
    return std::visit(overloaded{
                          [](const PointShape&) { return true; },
                          [](const Ball& s) { return s.radius == 0.0; },
                          [](const Sphere&) { return true; },
                          [](const Annulus& s) { return s.inner == s.outer; },
                          [](const Cap&) { return true; },
                          [](const PerforatedSphere&) { return true; },
                          [](const Box& s) {
                              for (std::size_t k = 0; k < s.lo.size(); ++k)
                                  if (s.hi[k] == s.lo[k]) return true;
                              return false;
                          },
                      },
                      p);
}

DistanceResult pair_distance(const Primitive& a, const Primitive& b, int dim) {
    if (const auto* pa = std::get_if<PointShape>(&a)) return prim_distance(b, pa->at);
    if (const auto* pb = std::get_if<PointShape>(&b)) return prim_distance(a, pb->at);
    if (const auto* ba = std::get_if<Ball>(&a)) {
        auto r = prim_distance(b, ba->center);
        r.value = std::max(0.0, r.value - ba->radius);
        return r;
    }
    if (const auto* bb = std::get_if<Ball>(&b)) {
        auto r = prim_distance(a, bb->center);
        r.value = std::max(0.0, r.value - bb->radius);
        return r;
    }
    if (const auto* sa = std::get_if<Sphere>(&a)) {
        if (const auto* sb = std::get_if<Sphere>(&b)) {
            const double c = distance(sa->center, sb->center);
            if (c >= sa->radius + sb->radius) return {c - sa->radius - sb->radius};
            if (c <= std::abs(sa->radius - sb->radius)) return {std::abs(sa->radius - sb->radius) - c};
            return {0.0};
        }
    }
    if (const auto* xa = std::get_if<Box>(&a)) {
        if (const auto* xb = std::get_if<Box>(&b)) {
            double acc = 0.0;
            for (std::size_t k = 0; k < xa->lo.size(); ++k) {
                const double g = std::max({xb->lo[k] - xa->hi[k], 0.0, xa->lo[k] - xb->hi[k]});
                acc += g * g;
            }
            return {std::sqrt(acc)};
        }
    }
    // Sampled fallback: min over boundary samples of each side against the
    // exact point distance to the other (catches containment both ways).
    const auto ca = circumball(a);
    const auto cb = circumball(b);
    const double scale = std::max({ca.radius, cb.radius, 1e-3});
    const double spacing = sampling_spacing(scale, dim);
    double best = kInf;
    double tol = spacing;
    for (int side = 0; side < 2; ++side) {
        const Primitive& src = side == 0 ? a : b;
        const Primitive& dst = side == 0 ? b : a;
        for (const auto& y : sample_surface(src, dim, spacing)) {
            const auto r = prim_distance(dst, y);
            if (r.value < best) {
                best = r.value;
                tol = spacing + r.tolerance;
            }
        }
    }
    return {best, tol, false};
}

}  // namespace

// ---------------------------------------------------------------------------

double cap_half_angle(double sphere_radius, double ball_radius) {
    if (ball_radius >= 2 * sphere_radius) return kPi;
    if (sphere_radius <= 0.0) return kPi;
    return 2 * std::asin(std::clamp(ball_radius / (2 * sphere_radius), 0.0, 1.0));
}

RegionSet::RegionSet(int dim) : dim_(dim) { require(dim >= 1, "dimension must be positive"); }

RegionSet& RegionSet::add(Primitive p) {
    require(prim_dim(p) == dim_, "primitive dimension does not match region dimension");
    std::visit(overloaded{
                   [](PointShape&) {},
                   [](Ball& s) { require(s.radius >= 0.0, "ball radius must be >= 0"); },
                   [](Sphere& s) { require(s.radius >= 0.0, "sphere radius must be >= 0"); },
                   [](Annulus& s) {
                       require(s.inner >= 0.0, "annulus inner radius must be >= 0");
                       require(s.inner <= s.outer, "annulus inner radius exceeds outer radius");
                   },
                   [](Cap& s) {
                       require(s.sphere_radius > 0.0, "cap sphere radius must be > 0");
                       require(s.ball_radius >= 0.0, "cap ball radius must be >= 0");
                       s.direction = unit(s.direction);
                   },
                   [](PerforatedSphere& s) {
                       require(s.radius > 0.0, "sphere radius must be > 0");
                       require(s.hole_directions.size() == s.hole_radii.size(), "hole list mismatch");
                       for (auto& u : s.hole_directions) {
                           require(static_cast<int>(u.size()) == s.dim, "hole direction dimension");
                           u = unit(u);
                       }
                       for (double r : s.hole_radii) require(r >= 0.0, "hole radius must be >= 0");
                   },
                   [](Box& s) {
                       require(s.lo.size() == s.hi.size(), "box corner dimension mismatch");
                       for (std::size_t k = 0; k < s.lo.size(); ++k)
                           require(s.lo[k] <= s.hi[k], "box lower corner exceeds upper corner");
                   },
               },
               p);
    prims_.push_back(std::move(p));
    return *this;
}

DistanceResult RegionSet::distance_to(const Point& x) const {
    require(static_cast<int>(x.size()) == dim_, "point dimension mismatch");
    DistanceResult best{kInf, 0.0, true};
    for (const auto& p : prims_) {
        const auto r = prim_distance(p, x);
        if (r.value < best.value) best = r;
        if (best.value == 0.0) break;
    }
    return best;
}

bool RegionSet::contains(const Point& x, double tol) const {
    const auto r = distance_to(x);
    return r.value <= tol + r.tolerance;
}

double RegionSet::circumradius() const {
    double best = 0.0;
    for (const auto& p : prims_) {
        const double r = std::visit(
            overloaded{
                [](const PointShape& s) { return norm(s.at); },
                [](const Ball& s) { return norm(s.center) + s.radius; },
                [](const Sphere& s) { return norm(s.center) + s.radius; },
                [](const Annulus& s) { return s.outer; },
                [](const Cap& s) { return s.sphere_radius; },
                [](const PerforatedSphere& s) { return s.radius; },
                [](const Box& s) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < s.lo.size(); ++k) {
                        const double m = std::max(std::abs(s.lo[k]), std::abs(s.hi[k]));
                        acc += m * m;
                    }
                    return std::sqrt(acc);
                },
            },
            p);
        best = std::max(best, r);
    }
    return best;
}

BoundingBox RegionSet::bounds() const {
    BoundingBox box{Point(dim_, kInf), Point(dim_, -kInf)};
    for (const auto& p : prims_) {
        Point lo(dim_), hi(dim_);
        if (const auto* b = std::get_if<Box>(&p)) {
            lo = b->lo;
            hi = b->hi;
        } else {
            const auto cb = circumball(p);
            for (int k = 0; k < dim_; ++k) {
                lo[k] = cb.center[k] - cb.radius;
                hi[k] = cb.center[k] + cb.radius;
            }
        }
        for (int k = 0; k < dim_; ++k) {
            box.lo[k] = std::min(box.lo[k], lo[k]);
            box.hi[k] = std::max(box.hi[k], hi[k]);
        }
    }
    return box;
}

double RegionSet::diameter() const {
    if (prims_.empty()) return 0.0;
    double best = 0.0;
    std::vector<Circumball> balls;
    for (const auto& p : prims_) {
        best = std::max(best, prim_diameter(p));
        balls.push_back(circumball(p));
    }
    for (std::size_t i = 0; i < balls.size(); ++i) {
        for (std::size_t j = i + 1; j < balls.size(); ++j) {
            best = std::max(best, distance(balls[i].center, balls[j].center) + balls[i].radius +
                                      balls[j].radius);
        }
    }
    return best;
}

bool RegionSet::is_null_set() const {
    return std::all_of(prims_.begin(), prims_.end(), prim_is_null);
}

std::optional<double> RegionSet::volume() const {
    if (is_null_set()) return 0.0;
    if (prims_.size() != 1) return std::nullopt;
    const double vd = unit_ball_volume(dim_);
    return std::visit(overloaded{
                          [&](const Ball& s) -> std::optional<double> {
                              return vd * std::pow(s.radius, dim_);
                          },
                          [&](const Annulus& s) -> std::optional<double> {
                              return vd * (std::pow(s.outer, dim_) - std::pow(s.inner, dim_));
                          },
                          [&](const Box& s) -> std::optional<double> {
                              double v = 1.0;
                              for (int k = 0; k < dim_; ++k) v *= s.hi[k] - s.lo[k];
                              return v;
                          },
                          [](const auto&) -> std::optional<double> { return 0.0; },
                      },
                      prims_.front());
}

std::optional<double> RegionSet::surface_measure() const {
    if (prims_.size() != 1 || (dim_ != 2 && dim_ != 3)) return std::nullopt;
    const auto& p = prims_.front();
    if (const auto* s = std::get_if<Sphere>(&p)) {
        return dim_ == 2 ? 2 * kPi * s->radius : 4 * kPi * s->radius * s->radius;
    }
    if (const auto* c = std::get_if<Cap>(&p)) {
        const double th = cap_half_angle(c->sphere_radius, c->ball_radius);
        const double R = c->sphere_radius;
        return dim_ == 2 ? 2 * R * th : 2 * kPi * R * R * (1 - std::cos(th));
    }
    if (const auto* c = std::get_if<PerforatedSphere>(&p); c != nullptr && dim_ == 2) {
        double total = 0.0;
        for (auto [start, len] : cheese_arcs_2d(*c)) total += len;
        return c->radius * total;
    }
    if (std::holds_alternative<PointShape>(p)) return 0.0;
    return std::nullopt;
}

std::optional<Point> RegionSet::radial_center() const {
    if (prims_.empty()) return std::nullopt;
    std::optional<Point> center;
    for (const auto& p : prims_) {
        std::optional<Point> c = std::visit(
            overloaded{
                [](const PointShape& s) -> std::optional<Point> { return s.at; },
                [](const Ball& s) -> std::optional<Point> { return s.center; },
                [](const Sphere& s) -> std::optional<Point> { return s.center; },
                [&](const Annulus&) -> std::optional<Point> { return Point(dim_, 0.0); },
                [](const auto&) -> std::optional<Point> { return std::nullopt; },
            },
            p);
        if (!c) return std::nullopt;
        if (!center) {
            center = c;
        } else if (distance(*center, *c) > 1e-12) {
            return std::nullopt;
        }
    }
    return center;
}

RegionSet make_point(const Point& x) {
    RegionSet s(static_cast<int>(x.size()));
    s.add(PointShape{x});
    return s;
}

RegionSet make_ball(const Point& center, double radius) {
    RegionSet s(static_cast<int>(center.size()));
    s.add(Ball{center, radius});
    return s;
}

RegionSet make_sphere(const Point& center, double radius) {
    RegionSet s(static_cast<int>(center.size()));
    s.add(Sphere{center, radius});
    return s;
}

RegionSet make_annulus(double r, double R, int d) {
    require(r >= 0.0, "annulus inner radius must be >= 0");
    require(r <= R, "annulus inner radius exceeds outer radius");
    RegionSet s(d);
    s.add(Annulus{d, r, R});
    return s;
}

RegionSet spherical_cap(double sphere_radius, const Point& direction, double cap_ball_radius) {
    require(sphere_radius > 0.0, "sphere radius must be > 0");
    require(cap_ball_radius >= 0.0, "cap ball radius must be >= 0");
    const Point u = unit(direction);
    const int d = static_cast<int>(u.size());
    RegionSet s(d);
    if (cap_ball_radius >= 2 * sphere_radius) {
        s.add(Sphere{Point(d, 0.0), sphere_radius});
    } else if (cap_ball_radius == 0.0) {
        s.add(PointShape{scaled(u, sphere_radius)});
    } else {
        s.add(Cap{sphere_radius, u, cap_ball_radius});
    }
    return s;
}

DistanceResult distance_between(const RegionSet& a, const RegionSet& b) {
    require(a.dim() == b.dim(), "dimension mismatch");
    if (a.empty() || b.empty()) return {kInf, 0.0, true};
    DistanceResult best{kInf, 0.0, true};
    for (const auto& pa : a.primitives()) {
        for (const auto& pb : b.primitives()) {
            const auto r = pair_distance(pa, pb, a.dim());
            if (r.value < best.value) best = r;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Surface sampling

std::vector<Point> sample_surface(const Primitive& p, int dim, double spacing) {
    require(spacing > 0.0, "sampling spacing must be > 0");
    auto circle = [&](const Point& c, double r) {
        std::vector<Point> pts;
        if (dim == 1) return std::vector<Point>{{c[0] - r}, {c[0] + r}};
        if (dim == 2) {
            const auto n = static_cast<std::size_t>(std::max(8.0, std::ceil(2 * kPi * r / spacing)));
            for (std::size_t k = 0; k < n; ++k) {
                const double t = 2 * kPi * static_cast<double>(k) / static_cast<double>(n);
                pts.push_back({c[0] + r * std::cos(t), c[1] + r * std::sin(t)});
            }
            return pts;
        }
        if (dim == 3) {
            const auto n = static_cast<std::size_t>(
                std::max(16.0, std::ceil(4.0 * kPi * r * r / (spacing * spacing))));
            for (auto y : fibonacci_sphere(r, n)) {
                for (int k = 0; k < 3; ++k) y[k] += c[k];
                pts.push_back(std::move(y));
            }
            return pts;
        }
        throw InvalidArgument("surface sampling supported for d <= 3");
    };
    return std::visit(
        overloaded{
            [&](const PointShape& s) { return std::vector<Point>{s.at}; },
            [&](const Ball& s) {
                auto pts = circle(s.center, s.radius);
                pts.push_back(s.center);
                return pts;
            },
            [&](const Sphere& s) { return circle(s.center, s.radius); },
            [&](const Annulus& s) {
                const Point o(dim, 0.0);
                auto pts = circle(o, s.outer);
                if (s.inner > 0) {
                    auto inner = circle(o, s.inner);
                    pts.insert(pts.end(), inner.begin(), inner.end());
                }
                Point mid(dim, 0.0);
                mid[0] = 0.5 * (s.inner + s.outer);
                pts.push_back(mid);
                return pts;
            },
            [&](const Cap& s) {
                const double th = cap_half_angle(s.sphere_radius, s.ball_radius);
                const double R = s.sphere_radius;
                std::vector<Point> pts;
                if (dim == 1) {
                    pts.push_back(scaled(s.direction, R));
                    if (th >= kPi) pts.push_back(scaled(s.direction, -R));
                    return pts;
                }
                if (dim == 2) {
                    const double phi = std::atan2(s.direction[1], s.direction[0]);
                    const auto n = static_cast<std::size_t>(std::max(2.0, std::ceil(2 * R * th / spacing)));
                    for (std::size_t k = 0; k <= n; ++k) {
                        const double t = phi - th + 2 * th * static_cast<double>(k) / static_cast<double>(n);
                        pts.push_back({R * std::cos(t), R * std::sin(t)});
                    }
                    return pts;
                }
                for (auto& y : circle(Point(dim, 0.0), R)) {
                    if (std::acos(std::clamp(dot(y, s.direction) / R, -1.0, 1.0)) <= th) pts.push_back(y);
                }
                if (th < kPi) {
                    auto rim = cap_rim(R, s.direction, th, spacing);
                    pts.insert(pts.end(), rim.begin(), rim.end());
                }
                return pts;
            },
            [&](const PerforatedSphere& s) {
                std::vector<Point> pts;
                const double R = s.radius;
                if (dim == 1) {
                    for (auto& y : circle(Point{0.0}, R)) {
                        bool removed = false;
                        for (std::size_t j = 0; j < s.hole_directions.size(); ++j)
                            if (distance(y, scaled(s.hole_directions[j], R)) <= s.hole_radii[j]) removed = true;
                        if (!removed) pts.push_back(y);
                    }
                    return pts;
                }
                if (dim == 2) {
                    for (auto [start, len] : cheese_arcs_2d(s)) {
                        const auto n = static_cast<std::size_t>(std::max(2.0, std::ceil(R * len / spacing)));
                        for (std::size_t k = 0; k <= n; ++k) {
                            const double t = start + len * static_cast<double>(k) / static_cast<double>(n);
                            pts.push_back({R * std::cos(t), R * std::sin(t)});
                        }
                    }
                    return pts;
                }
                for (auto& y : circle(Point(dim, 0.0), R))
                    if (!in_open_hole(s, y)) pts.push_back(y);
                for (std::size_t j = 0; j < s.hole_directions.size(); ++j) {
                    const double th = cap_half_angle(R, s.hole_radii[j]);
                    if (th <= 0.0 || th >= kPi) continue;
                    for (auto& y : cap_rim(R, s.hole_directions[j], th, spacing))
                        if (!in_open_hole(s, y)) pts.push_back(y);
                }
                return pts;
            },
            [&](const Box& s) {
                std::vector<Point> pts;
                if (dim > 3) throw InvalidArgument("surface sampling supported for d <= 3");
                std::vector<std::size_t> counts(dim);
                std::size_t total = 1;
                for (int k = 0; k < dim; ++k) {
                    counts[k] = static_cast<std::size_t>(std::ceil((s.hi[k] - s.lo[k]) / spacing)) + 1;
                    total *= counts[k];
                }
                std::vector<std::size_t> idx(dim, 0);
                for (std::size_t flat = 0; flat < total; ++flat) {
                    std::size_t rem = flat;
                    bool on_face = false;
                    Point y(dim);
                    for (int k = 0; k < dim; ++k) {
                        idx[k] = rem % counts[k];
                        rem /= counts[k];
                        const double frac = counts[k] > 1 ? static_cast<double>(idx[k]) / (counts[k] - 1) : 0.0;
                        y[k] = s.lo[k] + frac * (s.hi[k] - s.lo[k]);
                        if (idx[k] == 0 || idx[k] + 1 == counts[k]) on_face = true;
                    }
                    if (on_face) pts.push_back(std::move(y));
                }
                return pts;
            },
        },
        p);
}

// ---------------------------------------------------------------------------
// Shell measures

namespace {

// Distribution of dist(·, S) over R^d restricted to dist <= max_dist.
class DistanceProfile {
public:
    DistanceProfile(const RegionSet& s, double max_dist, double h) : h_(h) {
        if (s.empty()) return;
        if (auto c = s.radial_center()) {
            build_radial(s, *c, max_dist);
        } else {
            build_cartesian(s, max_dist);
        }
    }

    /// |{x : a <= dist(x,S) <= b}|
    double within(double a, double b) const {
        if (radial_) {
            const auto lo = std::lower_bound(dist_.begin(), dist_.end(), a) - dist_.begin();
            const auto hi = std::upper_bound(dist_.begin(), dist_.end(), b) - dist_.begin();
            return hi > lo ? prefix_[hi] - prefix_[lo] : 0.0;
        }
        if (counts_.empty()) return 0.0;
        // Bin k covers [k*bin, (k+1)*bin); included when its midpoint is in [a, b].
        const double bin = bin_width();
        const auto first = static_cast<long>(std::ceil(a / bin - 0.5));
        const auto last = static_cast<long>(std::floor(b / bin - 0.5));
        const long lo = std::max(0L, first);
        const long hi = std::min(static_cast<long>(counts_.size()) - 1, last);
        if (hi < lo) return 0.0;
        return cell_volume_ * static_cast<double>(count_prefix_[hi + 1] - count_prefix_[lo]);
    }

    /// |{x : dist(x,S) <= t}|
    double sublevel(double t) const { return t < 0 ? 0.0 : within(0.0, t); }

    double quadrature_error(double r) const {
        const double spread = radial_ ? 1.0 : 1.125;
        auto band = [&](double t) { return 0.5 * (sublevel(t + h_) - sublevel(t - h_)); };
        return spread * (band(r) + band(r + 1.0));
    }

private:
    double bin_width() const { return h_ / 8.0; }

    void build_radial(const RegionSet& s, const Point& c, double max_dist) {
        radial_ = true;
        const int d = s.dim();
        double extent = 0.0;
        for (const auto& p : s.primitives()) extent = std::max(extent, circumball(p).radius);
        const double rho_max = extent + max_dist + h_;
        const auto cells = static_cast<std::size_t>(std::ceil(rho_max / h_));
        const double vd = unit_ball_volume(d);
        std::vector<std::pair<double, double>> samples;
        samples.reserve(cells);
        Point x = c;
        for (std::size_t k = 0; k < cells; ++k) {
            const double lo = static_cast<double>(k) * h_;
            const double hi = lo + h_;
            x[0] = c[0] + 0.5 * (lo + hi);
            const double dist = s.distance_to(x).value;
            if (dist > max_dist) continue;
            samples.emplace_back(dist, vd * (std::pow(hi, d) - std::pow(lo, d)));
        }
        std::sort(samples.begin(), samples.end());
        dist_.reserve(samples.size());
        prefix_.assign(samples.size() + 1, 0.0);
        for (std::size_t k = 0; k < samples.size(); ++k) {
            dist_.push_back(samples[k].first);
            prefix_[k + 1] = prefix_[k] + samples[k].second;
        }
    }

    void build_cartesian(const RegionSet& s, double max_dist) {
        const int d = s.dim();
        const auto box = s.bounds();
        const double pad = max_dist + h_;
        std::vector<std::size_t> n(d);
        std::vector<double> lo(d);
        double total = 1.0;
        for (int k = 0; k < d; ++k) {
            lo[k] = box.lo[k] - pad;
            n[k] = static_cast<std::size_t>(std::ceil((box.hi[k] + pad - lo[k]) / h_));
            total *= static_cast<double>(n[k]);
        }
        if (total > 4.0e8) {
            throw InvalidArgument("grid quadrature needs " + std::to_string(total) +
                                  " cells; use a coarser resolution");
        }
        cell_volume_ = std::pow(h_, d);
        const auto bins = static_cast<std::size_t>(std::ceil(max_dist / bin_width())) + 2;
        const std::size_t slabs = n[0];
        const std::size_t chunks = std::min<std::size_t>(slabs, 64);
        std::vector<std::vector<std::int64_t>> partial(chunks, std::vector<std::int64_t>(bins, 0));
        std::size_t inner = 1;
        for (int k = 1; k < d; ++k) inner *= n[k];
        parallel_for(chunks, [&](std::size_t chunk) {
            auto& hist = partial[chunk];
            Point x(d);
            const std::size_t s0 = chunk * slabs / chunks;
            const std::size_t s1 = (chunk + 1) * slabs / chunks;
            for (std::size_t i = s0; i < s1; ++i) {
                x[0] = lo[0] + (static_cast<double>(i) + 0.5) * h_;
                for (std::size_t flat = 0; flat < inner; ++flat) {
                    std::size_t rem = flat;
                    for (int k = 1; k < d; ++k) {
                        x[k] = lo[k] + (static_cast<double>(rem % n[k]) + 0.5) * h_;
                        rem /= n[k];
                    }
                    const double dist = s.distance_to(x).value;
                    if (dist > max_dist) continue;
                    const auto b = static_cast<std::size_t>(dist / bin_width());
                    if (b < bins) ++hist[b];
                }
            }
        });
        counts_.assign(bins, 0);
        for (const auto& hist : partial)
            for (std::size_t b = 0; b < bins; ++b) counts_[b] += hist[b];
        count_prefix_.assign(bins + 1, 0);
        for (std::size_t b = 0; b < bins; ++b) count_prefix_[b + 1] = count_prefix_[b] + counts_[b];
    }

    double h_;
    bool radial_ = false;
    std::vector<double> dist_;
    std::vector<double> prefix_;
    double cell_volume_ = 0.0;
    std::vector<std::int64_t> counts_;
    std::vector<std::int64_t> count_prefix_;
};

}  // namespace

MeasureEstimate shell_measure(const RegionSet& s, double r, double resolution) {
    require(r >= 0.0, "shell distance r must be >= 0");
    require(resolution > 0.0, "resolution must be > 0");
    if (s.empty()) return {0.0, 0.0};
    const DistanceProfile profile(s, r + 1.0 + 2 * resolution, resolution);
    return {profile.within(r, r + 1.0), profile.quadrature_error(r)};
}

double surface_area_constant(int d) { return unit_ball_volume(d) * std::pow(4.0, d - 1); }

SurfaceAreaEstimate generalized_surface_area(const RegionSet& s, double resolution,
                                             std::optional<double> r_max) {
    require(resolution > 0.0, "resolution must be > 0");
    const int d = s.dim();
    const double diam = s.diameter();
    const double floor_rmax = diam + d + 1.0;
    const double rmax = r_max.value_or(diam + d + 2.0);
    require(rmax >= floor_rmax - 1e-12, "r_max must be at least diam(S) + d + 1");
    SurfaceAreaEstimate out;
    out.r_max = rmax;
    if (s.empty()) return out;
    const DistanceProfile profile(s, rmax + 1.0 + 2 * resolution, resolution);
    const auto steps = static_cast<std::size_t>(std::floor(rmax / resolution + 1e-9));
    double best = -1.0;
    double best_r = 0.0;
    for (std::size_t k = 0; k <= steps; ++k) {
        const double r = static_cast<double>(k) * resolution;
        const double ratio = profile.within(r, r + 1.0) / (std::pow(r, d) + 1.0);
        if (ratio > best) {
            best = ratio;
            best_r = r;
        }
    }
    out.sigma = best;
    out.argmax_r = best_r;
    out.error = profile.quadrature_error(best_r) / (std::pow(best_r, d) + 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// Decompositions

std::string to_string(DecompositionKind k) {
    switch (k) {
        case DecompositionKind::SphereShells: return "sphere-shells";
        case DecompositionKind::CapCheese: return "cap-cheese";
        case DecompositionKind::Custom: return "custom";
    }
    return "custom";
}

DecompositionKind decomposition_kind_from_string(const std::string& s) {
    if (s == "sphere-shells") return DecompositionKind::SphereShells;
    if (s == "cap-cheese") return DecompositionKind::CapCheese;
    if (s == "custom") return DecompositionKind::Custom;
    throw InvalidArgument("unknown decomposition kind: " + s);
}

TotalDecomposition sphere_shell_decomposition(std::span<const double> radii, int d, double gamma) {
    require(!radii.empty(), "at least one radius required");
    for (std::size_t k = 0; k < radii.size(); ++k) {
        require(radii[k] > 0.0, "radii must be > 0");
        if (k > 0) require(radii[k] > radii[k - 1], "radii must be strictly increasing");
    }
    TotalDecomposition dec;
    dec.dim = d;
    dec.kind = DecompositionKind::SphereShells;
    dec.gamma = gamma;
    for (std::size_t k = 0; k < radii.size(); ++k) {
        dec.members.push_back({static_cast<int>(k) + 1, "sphere", make_sphere(Point(d, 0.0), radii[k])});
    }
    return dec;
}

namespace {

double sphere_member_radius(const DecompositionMember& m) {
    require(m.set.primitives().size() == 1, "sphere member must be a single sphere");
    const auto* s = std::get_if<Sphere>(&m.set.primitives().front());
    require(s != nullptr, "sphere member must be a sphere");
    require(norm(s->center) <= 1e-12, "sphere member must be centered at the origin");
    return s->radius;
}

}  // namespace

std::vector<ComplementComponent> complement_components(const TotalDecomposition& dec) {
    require(dec.kind == DecompositionKind::SphereShells,
            "complement components are available for sphere shells only");
    const double vd = unit_ball_volume(dec.dim);
    std::vector<ComplementComponent> out;
    double prev = 0.0;
    for (const auto& m : dec.members) {
        const double R = sphere_member_radius(m);
        out.push_back({prev, R, true, vd * (std::pow(R, dec.dim) - std::pow(prev, dec.dim))});
        prev = R;
    }
    out.push_back({prev, kInf, false, kInf});
    return out;
}

StructureCheck check_structure(const TotalDecomposition& dec, int samples_per_sphere) {
    for (const auto& m : dec.members) {
        if (!m.set.is_null_set()) return {false, false, "member n=" + std::to_string(m.n) + " has positive measure"};
    }
    if (dec.kind == DecompositionKind::SphereShells) {
        double prev = 0.0;
        for (const auto& m : dec.members) {
            double R = 0.0;
            try {
                R = sphere_member_radius(m);
            } catch (const InvalidArgument& e) {
                return {false, false, e.what()};
            }
            if (R <= prev) return {false, false, "radii not strictly increasing at n=" + std::to_string(m.n)};
            prev = R;
        }
        return {true, false, "concentric spheres with increasing radii"};
    }
    if (dec.kind == DecompositionKind::CapCheese) {
        if (dec.dim < 2 || dec.dim > 3) return {true, true, "coverage not sampled for this dimension"};
        std::vector<int> ns;
        for (const auto& m : dec.members) ns.push_back(m.n);
        std::sort(ns.begin(), ns.end());
        ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
        for (int n : ns) {
            double R = 0.0;
            std::vector<const RegionSet*> parts;
            for (const auto& m : dec.members) {
                if (m.n != n) continue;
                parts.push_back(&m.set);
                for (const auto& p : m.set.primitives()) {
                    if (const auto* c = std::get_if<PerforatedSphere>(&p)) R = c->radius;
                    if (const auto* c = std::get_if<Cap>(&p)) R = c->sphere_radius;
                    if (const auto* c = std::get_if<Sphere>(&p)) R = c->radius;
                }
            }
            if (R <= 0.0) return {false, true, "cannot determine sphere radius for n=" + std::to_string(n)};
            const double spacing = dec.dim == 2 ? 2 * kPi * R / samples_per_sphere
                                                : R * std::sqrt(4 * kPi / samples_per_sphere);
            const auto samples = sample_surface(Sphere{Point(dec.dim, 0.0), R}, dec.dim, spacing);
            for (const auto& y : samples) {
                const double tol = 1e-9 * std::max(1.0, R);
                const bool covered = std::any_of(parts.begin(), parts.end(),
                                                 [&](const RegionSet* s) { return s->contains(y, tol); });
                if (!covered) return {false, true, "sphere point uncovered at n=" + std::to_string(n)};
            }
        }
        return {true, true, "caps and cheese cover each sphere (sampled)"};
    }
    return {true, true, "custom family: null members only (sampled check)"};
}

// ---------------------------------------------------------------------------
// JSON-lines

namespace {

using nlohmann::json;

json prim_to_json(const Primitive& p) {
    return std::visit(
        overloaded{
            [](const PointShape& s) { return json{{"type", "point"}, {"at", s.at}}; },
            [](const Ball& s) { return json{{"type", "ball"}, {"center", s.center}, {"radius", s.radius}}; },
            [](const Sphere& s) {
                return json{{"type", "sphere"}, {"center", s.center}, {"radius", s.radius}};
            },
            [](const Annulus& s) {
                return json{{"type", "annulus"}, {"dim", s.dim}, {"inner", s.inner}, {"outer", s.outer}};
            },
            [](const Cap& s) {
                return json{{"type", "cap"},
                            {"sphere_radius", s.sphere_radius},
                            {"direction", s.direction},
                            {"ball_radius", s.ball_radius}};
            },
            [](const PerforatedSphere& s) {
                return json{{"type", "cheese"},
                            {"dim", s.dim},
                            {"radius", s.radius},
                            {"hole_directions", s.hole_directions},
                            {"hole_radii", s.hole_radii}};
            },
            [](const Box& s) { return json{{"type", "box"}, {"lo", s.lo}, {"hi", s.hi}}; },
        },
        p);
}

Primitive prim_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "point") return PointShape{j.at("at").get<Point>()};
    if (type == "ball") return Ball{j.at("center").get<Point>(), j.at("radius").get<double>()};
    if (type == "sphere") return Sphere{j.at("center").get<Point>(), j.at("radius").get<double>()};
    if (type == "annulus")
        return Annulus{j.at("dim").get<int>(), j.at("inner").get<double>(), j.at("outer").get<double>()};
    if (type == "cap")
        return Cap{j.at("sphere_radius").get<double>(), j.at("direction").get<Point>(),
                   j.at("ball_radius").get<double>()};
    if (type == "cheese")
        return PerforatedSphere{j.at("radius").get<double>(), j.at("dim").get<int>(),
                                j.at("hole_directions").get<std::vector<Point>>(),
                                j.at("hole_radii").get<std::vector<double>>()};
    if (type == "box") return Box{j.at("lo").get<Point>(), j.at("hi").get<Point>()};
    throw InvalidArgument("unknown primitive type: " + type);
}

std::vector<json> parse_lines(const std::string& text) {
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(json::parse(line));
    }
    return out;
}

}  // namespace

std::string region_to_jsonl(const RegionSet& s) {
    std::string out = json{{"record", "region"}, {"dim", s.dim()}, {"primitives", s.primitives().size()}}.dump();
    out += '\n';
    for (const auto& p : s.primitives()) {
        out += prim_to_json(p).dump();
        out += '\n';
    }
    return out;
}

RegionSet region_from_jsonl(const std::string& text) {
    const auto lines = parse_lines(text);
    require(!lines.empty() && lines.front().value("record", "") == "region", "missing region header");
    RegionSet s(lines.front().at("dim").get<int>());
    const auto count = lines.front().at("primitives").get<std::size_t>();
    require(lines.size() == count + 1, "region primitive count mismatch");
    for (std::size_t k = 1; k < lines.size(); ++k) s.add(prim_from_json(lines[k]));
    return s;
}

std::string decomposition_to_jsonl(const TotalDecomposition& dec) {
    json head{{"record", "decomposition"},
              {"dim", dec.dim},
              {"kind", to_string(dec.kind)},
              {"gamma", dec.gamma},
              {"truncated", dec.truncated},
              {"members", dec.members.size()}};
    if (dec.tail) {
        head["tail"] = {{"growth", dec.tail->growth},
                        {"rho", dec.tail->rho},
                        {"alpha", dec.tail->alpha},
                        {"cap_count_constant", dec.tail->cap_count_constant}};
    } else {
        head["tail"] = nullptr;
    }
    std::string out = head.dump() + '\n';
    for (const auto& m : dec.members) {
        json prims = json::array();
        for (const auto& p : m.set.primitives()) prims.push_back(prim_to_json(p));
        out += json{{"record", "member"}, {"n", m.n}, {"role", m.role}, {"dim", m.set.dim()}, {"primitives", prims}}
                   .dump();
        out += '\n';
    }
    return out;
}

TotalDecomposition decomposition_from_jsonl(const std::string& text) {
    const auto lines = parse_lines(text);
    require(!lines.empty() && lines.front().value("record", "") == "decomposition",
            "missing decomposition header");
    const auto& head = lines.front();
    TotalDecomposition dec;
    dec.dim = head.at("dim").get<int>();
    dec.kind = decomposition_kind_from_string(head.at("kind").get<std::string>());
    dec.gamma = head.at("gamma").get<double>();
    dec.truncated = head.at("truncated").get<bool>();
    if (!head.at("tail").is_null()) {
        const auto& t = head.at("tail");
        dec.tail = TailRule{t.at("growth").get<double>(), t.at("rho").get<double>(), t.at("alpha").get<double>(),
                            t.at("cap_count_constant").get<double>()};
    }
    require(lines.size() == head.at("members").get<std::size_t>() + 1, "decomposition member count mismatch");
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto& j = lines[k];
        RegionSet s(j.at("dim").get<int>());
        for (const auto& p : j.at("primitives")) s.add(prim_from_json(p));
        dec.members.push_back({j.at("n").get<int>(), j.at("role").get<std::string>(), std::move(s)});
    }
    return dec;
}

}  // namespace sparseloc::geometry
