#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "sparseloc/geometry.hpp"

using namespace sparseloc;
using namespace sparseloc::geometry;

namespace {
constexpr double pi = std::numbers::pi;

// Closed-form shell volumes used as oracles.
double point_shell_2d(double r) { return pi * ((r + 1) * (r + 1) - r * r); }
double circle_shell(double R, double r) {
    // {r <= dist <= r+1} around a circle of radius R in the plane
    auto disk = [](double t) { return pi * t * t; };
    double outer = disk(R + r + 1) - disk(R + r);
    double inner = 0.0;
    if (R - r > 0) inner = disk(R - r) - disk(std::max(0.0, R - r - 1));
    return outer + inner;
}
}  // namespace

TEST_CASE("annulus volume") {
    CHECK(make_annulus(1, 2, 2).volume().value() == doctest::Approx(3 * pi));
    CHECK(make_annulus(0, 1, 2).volume().value() == doctest::Approx(pi));
    CHECK(make_annulus(2, 2, 3).volume().value() == 0.0);
    CHECK_THROWS_AS(make_annulus(2, 1, 2), InvalidArgument);
    CHECK_THROWS_AS(make_annulus(-1, 1, 2), InvalidArgument);
}

TEST_CASE("distance between supported pairs") {
    CHECK(distance_between(make_point({0}), make_point({3})).value == doctest::Approx(3));
    CHECK(distance_between(make_sphere({0, 0}, 1), make_sphere({0, 0}, 4)).value == doctest::Approx(3));
    CHECK(distance_between(make_ball({0, 0}, 2), make_ball({1, 0}, 2)).value == 0.0);
    CHECK(std::isinf(distance_between(RegionSet(2), make_point({0, 0})).value));

    // symmetric, including sampled fallbacks
    auto cap = spherical_cap(10, {1, 0}, 2);
    auto ball = make_ball({0, 14}, 1);
    auto ab = distance_between(cap, ball), ba = distance_between(ball, cap);
    CHECK(ab.value == doctest::Approx(ba.value));
    // oracle: nearest point of the arc to (0,14) is its endpoint
    const double theta = 2 * std::asin(0.1);
    const Point end{10 * std::cos(theta), 10 * std::sin(theta)};
    CHECK(ab.value <= distance(end, {0, 14}) - 1 + 1e-9);
    CHECK(ab.value >= distance(end, {0, 14}) - 1 - ab.tolerance - 1e-9);
}

TEST_CASE("membership agrees with distance") {
    auto s = make_sphere({0, 0}, 2);
    CHECK(s.contains({2, 0}));
    CHECK_FALSE(s.contains({1, 0}));
    CHECK(s.distance_to({1, 0}).value == doctest::Approx(1));
}

TEST_CASE("shell measure closed forms") {
    auto e = shell_measure(make_point({0}), 0, 0.01);
    CHECK(std::abs(e.value - 2) <= e.error + 1e-9);
    e = shell_measure(make_point({0}), 3, 0.01);
    CHECK(std::abs(e.value - 2) <= e.error + 1e-9);
    e = shell_measure(make_sphere({0, 0}, 5), 0, 0.01);
    CHECK(std::abs(e.value - 20 * pi) <= e.error + 1e-9);
    for (double r : {0.0, 0.5, 2.0, 7.0}) {
        e = shell_measure(make_point({0, 0}), r, 0.01);
        CHECK(std::abs(e.value - point_shell_2d(r)) <= e.error + 1e-9);
        e = shell_measure(make_sphere({0, 0}, 3), r, 0.01);
        CHECK(std::abs(e.value - circle_shell(3, r)) <= e.error + 1e-9);
    }
    // ball in d=3: {r <= dist <= r+1} = B(R+r+1) \ B(R+r)
    e = shell_measure(make_ball({0, 0, 0}, 1), 1, 0.01);
    const double oracle = 4.0 / 3.0 * pi * (27 - 8);
    CHECK(std::abs(e.value - oracle) <= e.error + 1e-9);
}

TEST_CASE("shell measure on the cartesian path") {
    // off-origin point forces the grid path
    auto e = shell_measure(make_point({0.3, -0.2}), 1.0, 0.05);
    CHECK(std::abs(e.value - point_shell_2d(1.0)) <= e.error + 1e-9);
    CHECK(e.error < 0.1 * point_shell_2d(1.0));
}

TEST_CASE("generalized surface area oracles") {
    auto t0 = std::chrono::steady_clock::now();
    auto s1 = generalized_surface_area(make_point({0}));
    CHECK(s1.sigma == doctest::Approx(2).epsilon(0.05));
    CHECK(s1.argmax_r == doctest::Approx(0).epsilon(0.02));

    const double phi = (1 + std::sqrt(5.0)) / 2;
    auto s2 = generalized_surface_area(make_point({0, 0}));
    CHECK(s2.sigma == doctest::Approx(phi * pi).epsilon(0.05));
    CHECK(std::abs(s2.argmax_r - (std::sqrt(5.0) - 1) / 2) < 0.02);

    auto s3 = generalized_surface_area(make_sphere({0, 0}, 5));
    CHECK(s3.sigma == doctest::Approx(20 * pi).epsilon(0.1));
    CHECK(s3.argmax_r == doctest::Approx(0).epsilon(0.02));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 90);
}

TEST_CASE("sphere family obeys the surface bound") {
    for (double R : {1.0, 2.0, 5.0, 10.0, 20.0}) {
        auto s = generalized_surface_area(make_sphere({0, 0}, R));
        CHECK(s.sigma <= 4 * pi * R * (1 + 0.01) + s.error);
        auto c = surface_area_constant(2);
        CHECK(s.sigma <= c * (std::pow(2 * R, 2) + 1) + s.error);
    }
}

TEST_CASE("refinement stability") {
    auto coarse = generalized_surface_area(make_point({0, 0}), 0.02);
    auto fine = generalized_surface_area(make_point({0, 0}), 0.01);
    CHECK(std::abs(coarse.sigma - fine.sigma) <= coarse.error + fine.error + 1e-12);
}

TEST_CASE("r_max must clear the diameter") {
    CHECK_THROWS_AS(generalized_surface_area(make_sphere({0, 0}, 5), 0.01, 3.0), InvalidArgument);
}

TEST_CASE("spherical caps") {
    auto full = spherical_cap(10, {0, 1}, 25);
    REQUIRE(full.primitives().size() == 1);
    CHECK(std::holds_alternative<Sphere>(full.primitives()[0]));

    auto arc = spherical_cap(10, {1, 0}, 2);
    CHECK(arc.surface_measure().value() == doctest::Approx(40 * std::asin(0.1)));
    CHECK(arc.surface_measure().value() == doctest::Approx(4.0067).epsilon(1e-4));

    auto pt = spherical_cap(10, {1, 0}, 0);
    CHECK(pt.contains({10, 0}));
    CHECK(pt.is_null_set());
    CHECK_THROWS_AS(spherical_cap(10, {0, 0}, 1), InvalidArgument);
}

TEST_CASE("sphere shell decompositions") {
    std::vector<double> radii{1, 2, 3};
    auto dec = sphere_shell_decomposition(radii, 2);
    CHECK(dec.members.size() == 3);
    auto comps = complement_components(dec);
    int bounded = 0;
    for (const auto& c : comps) bounded += c.bounded ? 1 : 0;
    CHECK(bounded == 3);
    CHECK(check_structure(dec).ok);

    std::vector<double> one{5};
    auto d1 = sphere_shell_decomposition(one, 2);
    auto c1 = complement_components(d1);
    CHECK(c1.front().volume == doctest::Approx(25 * pi));

    std::vector<double> bad{1, 1, 2};
    CHECK_THROWS_AS(sphere_shell_decomposition(bad, 2), InvalidArgument);
}

TEST_CASE("cap and cheese cover the sphere") {
    TotalDecomposition dec;
    dec.dim = 2;
    dec.kind = DecompositionKind::CapCheese;
    const double R = 20;
    Point dir{1, 0};
    dec.members.push_back({1, "cap", spherical_cap(R, dir, 3)});
    RegionSet cheese(2);
    cheese.add(PerforatedSphere{R, 2, {dir}, {3}});
    dec.members.push_back({1, "cheese", cheese});
    auto chk = check_structure(dec);
    CHECK(chk.ok);
    CHECK(chk.weak);
}

TEST_CASE("jsonl round trip") {
    auto dec = sphere_shell_decomposition(std::vector<double>{1.5, 2.5}, 3, 0.5);
    auto text = decomposition_to_jsonl(dec);
    auto back = decomposition_from_jsonl(text);
    CHECK(back.members.size() == 2);
    CHECK(back.gamma == 0.5);
    CHECK(decomposition_to_jsonl(back) == text);

    RegionSet r(2);
    r.add(Ball{{1, 2}, 3}).add(Box{{0, 0}, {1, 1}});
    CHECK(region_to_jsonl(region_from_jsonl(region_to_jsonl(r))) == region_to_jsonl(r));
}
