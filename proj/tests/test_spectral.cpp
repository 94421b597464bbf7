#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numbers>

#include "sparseloc/spectral.hpp"

using namespace sparseloc;
using namespace sparseloc::spectral;

namespace {

std::vector<double> chain_values(int n, double h = 1.0) {
    std::vector<double> out;
    for (int k = 1; k <= n; ++k) out.push_back((2.0 - 2.0 * std::cos(k * std::numbers::pi / (n + 1))) / (h * h));
    return out;
}

double max_offdiag_overlap(const std::vector<std::vector<double>>& vs) {
    double worst = 0.0;
    for (std::size_t a = 0; a < vs.size(); ++a)
        for (std::size_t b = 0; b <= a; ++b) worst = std::max(worst, std::abs(dot(vs[a], vs[b]) - (a == b ? 1.0 : 0.0)));
    return worst;
}

}  // namespace

TEST_CASE("free chain eigenvalues") {
    auto r3 = all_eigenpairs(free_operator({3}, 1.0));
    REQUIRE(r3.values.size() == 3);
    CHECK(r3.values[0] == doctest::Approx(2 - std::sqrt(2.0)));
    CHECK(r3.values[1] == doctest::Approx(2.0));
    CHECK(r3.values[2] == doctest::Approx(2 + std::sqrt(2.0)));

    auto op = free_operator({100}, 1.0);
    auto r = eigenpairs(op, -1.0, 10.0);
    auto exact = chain_values(100);
    REQUIRE(r.values.size() == 100);
    double err = 0.0;
    for (int k = 0; k < 100; ++k) err = std::max(err, std::abs(r.values[k] - exact[k]));
    CHECK(err <= 1e-10);
    CHECK(r.converged);
    CHECK(r.max_residual <= 1e-8 * op.norm_bound());
    CHECK(max_offdiag_overlap(r.vectors) <= 1e-8);
    for (double v : r.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 4.0);
    }
    CHECK(eigenpairs(op, -5.0, -1.0).values.empty());
}

TEST_CASE("constant shift and separable 2-D spectrum") {
    auto a = all_eigenpairs(free_operator({7, 5}, 1.0), false).values;
    auto b = all_eigenpairs(free_operator({7, 5}, 1.0, 2.5), false).values;
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(b[k] - a[k] == doctest::Approx(2.5).epsilon(1e-12));

    std::vector<double> sums;
    for (double x : chain_values(7))
        for (double y : chain_values(5)) sums.push_back(x + y);
    std::sort(sums.begin(), sums.end());
    REQUIRE(sums.size() == a.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(sums[k]).epsilon(1e-12));
    CHECK(free_operator({7, 5}, 1.0).is_symmetric());
}

TEST_CASE("deep well gives one negative eigenvalue") {
    std::vector<double> v(100, 0.0);
    v[50] = -10.0;
    auto op = grid_operator({100}, 1.0, {0.0}, v);
    auto neg = eigenpairs(op, -100.0, 0.0);
    CHECK(neg.values.size() == 1);
    CHECK(count_below(op, 0.0) == 1);
    // rank-one perturbation of the free chain: E = 2 - sqrt(4 + 100) in the infinite chain
    CHECK(neg.values[0] == doctest::Approx(2.0 - std::sqrt(104.0)).epsilon(1e-8));
}

TEST_CASE("shift-invert path") {
    // 60 x 60 = 3600 unknowns takes the shift-invert route
    std::vector<double> pot(3600);
    CounterRng rng(4, 4);
    for (auto& x : pot) x = 3.0 * rng.uniform();
    auto big = grid_operator({60, 60}, 1.0, {0.0, 0.0}, pot);
    auto it = eigenpairs(big, 0.5, 1.0);
    CHECK(it.method == "shift-invert-lanczos");
    CHECK(it.converged);
    CHECK(it.values.size() == it.expected);
    CHECK(it.max_residual <= 1e-8 * big.norm_bound());
    CHECK(max_offdiag_overlap(it.vectors) <= 1e-8);
    CHECK(it.values.size() == count_below(big, 1.0) - count_below(big, 0.5));

    auto low = lowest_eigenpairs(big, 5);
    REQUIRE(low.values.size() == 5);
    for (std::size_t k = 1; k < 5; ++k) CHECK(low.values[k] >= low.values[k - 1]);
    CHECK(count_below(big, low.values[4] + 1e-9) >= 5);

    // degenerate free spectrum: every copy is recovered
    auto free2 = free_operator({60, 60}, 1.0);
    auto w = eigenpairs(free2, 0.0, 0.05);
    std::size_t expected = 0;
    auto c = chain_values(60);
    std::vector<double> sums;
    for (double x : c)
        for (double y : c)
            if (x + y <= 0.05) sums.push_back(x + y);
    std::sort(sums.begin(), sums.end());
    expected = sums.size();
    REQUIRE(w.values.size() == expected);
    for (std::size_t k = 0; k < expected; ++k) CHECK(w.values[k] == doctest::Approx(sums[k]).epsilon(1e-10));
    CHECK(w.converged);
}

TEST_CASE("spectrum gaps") {
    auto g = spectrum_gaps(free_operator({200}, 1.0), 0.1);
    REQUIRE(!g.empty());
    CHECK(std::isinf(g[0].lo));
    CHECK(g[0].hi == doctest::Approx(chain_values(200)[0]));
    CHECK(g[0].hi < 1e-3);
    CHECK(g.size() == 1);

    // dimer chain V = 0, 3, 0, 3, ...: bands [1, 2] and [5, 6]
    std::vector<double> v(400);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = k % 2 ? 3.0 : 0.0;
    auto d = spectrum_gaps(grid_operator({400}, 1.0, {0.0}, v), 0.1);
    REQUIRE(d.size() == 2);
    CHECK(d[1].lo == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(d[1].hi == doctest::Approx(5.0).epsilon(1e-3));
    CHECK(in_gaps(d, 3.0));
    CHECK_FALSE(in_gaps(d, 1.5));

    auto s = spectrum_gaps(free_operator({200}, 1.0, 5.0), 0.1);
    CHECK(s[0].hi == doctest::Approx(5.0).epsilon(1e-3));
}

TEST_CASE("inverse participation ratio") {
    CHECK(ipr({0.5, 0.5, 0.5, 0.5}) == doctest::Approx(0.25));
    CHECK(ipr({0.0, 1.0, 0.0}) == 1.0);
    CHECK(ipr({std::sqrt(0.8), std::sqrt(0.2)}) == doctest::Approx(0.68));
    CHECK_THROWS_AS(ipr({1.0, 1.0}), InvalidArgument);
}

TEST_CASE("decay rate fits") {
    std::vector<double> v1(41), v2(41), flat(41, 1.0);
    for (int j = 0; j < 41; ++j) {
        v1[j] = std::exp(-std::abs(j - 20));
        v2[j] = std::exp(-2.0 * std::abs(j - 20));
    }
    auto f1 = decay_rate_fit(v1, 20);
    CHECK(f1.rate == doctest::Approx(1.0));
    CHECK(f1.quality == doctest::Approx(1.0));
    CHECK(decay_rate_fit(v2, 20).rate == doctest::Approx(2.0));
    CHECK(std::abs(decay_rate_fit(flat, 20).rate) < 1e-12);
    CHECK_THROWS_AS(decay_rate_fit(std::vector<double>(5, 0.0), 2), NumericalError);
}

TEST_CASE("resolvent decay on the free chain") {
    auto op = free_operator({400}, 1.0);
    auto probes = default_probes(op);
    auto r2 = resolvent_decay(op, -2.0, probes);
    CHECK(r2.rate == doctest::Approx(std::acosh(2.0)).epsilon(0.01));
    CHECK(std::abs(r2.rate - 1.3170) <= 0.1 * 1.3170);
    CHECK(resolvent_decay(op, -0.5, probes).rate == doctest::Approx(std::acosh(1.25)).epsilon(0.01));
    auto t = resolvent_decay_table(op, {-0.5, -1.0, -2.0}, probes);
    CHECK(t.strictly_increasing);
    CHECK(t.rows.front().energy == -0.5);
    CHECK_THROWS_AS(resolvent_decay(op, chain_values(400)[3], probes), InvalidArgument);

    // physical units: rate scales like 1/h
    auto fine = free_operator({800}, 0.5);
    auto rf = resolvent_decay(fine, -2.0, default_probes(fine));
    CHECK(rf.rate == doctest::Approx(2.0 * std::acosh(1.0 + 2.0 * 0.25 / 2.0)).epsilon(0.01));
}

TEST_CASE("localization report") {
    // one shallow well in a free chain: depth 1, half-width 1 binds a single state
    const int n = 800;
    const double h = 0.25;
    std::vector<double> v(n, 0.0);
    for (int k = 0; k < n; ++k) {
        const double x = (k + 1) * h - 100.0;
        if (std::abs(x) <= 1.0) v[k] = -1.0;
    }
    Point origin{-100.0};
    auto H = grid_operator({n}, h, origin, v);
    auto H0 = grid_operator({n}, h, origin, std::vector<double>(n, 0.0));
    auto rep = localization_report(H, H0);
    REQUIRE(rep.gap_states == 1);
    CHECK(rep.localized);
    CHECK(rep.boundary_amplitude < 1e-8);
    const StateRecord* gs = nullptr;
    for (const auto& s : rep.states)
        if (s.in_gap) gs = &s;
    REQUIRE(gs);
    auto rd = resolvent_decay(H0, gs->energy, default_probes(H0));
    CHECK(std::abs(gs->decay_rate - rd.rate) <= 0.15 * rd.rate);
    CHECK(gs->decay_rate >= 0.5 * rd.rate);

    auto none = localization_report(H0, H0);
    CHECK(none.gap_states == 0);
    CHECK(none.verdict == "no gap states");
    CHECK(states_to_csv(rep).rfind("energy,ipr,decay_rate,center,in_gap\n", 0) == 0);
}

TEST_CASE("discretize a model") {
    using namespace sparseloc::models;
    RandomPotentialModel m{SiteSet::lattice(1, 60), {SingleSitePotential::indicator(-3.0, 1.0)},
                           LawRule::constant(CouplingLaw::point_masses({1.0}, {1.0})), Background::constant(0.5),
                           std::nullopt};
    auto c = sample_couplings(m, 1, geometry::make_ball({0.0}, 40));
    auto op = discretize(m, c, geometry::Box{{-10.0}, {10.0}}, 0.25);
    CHECK(op.size() == 79);
    CHECK(op.node(0)[0] == doctest::Approx(-9.75));
    // x = -9.5 lies within 1 of the sites -10 and -9
    CHECK(op.potential[1] == doctest::Approx(0.5 - 6.0));
    auto shifted = discretize(m, c, geometry::Box{{-10.0}, {10.0}}, 0.25, 0.0);
    for (double x : shifted.potential) CHECK(x == doctest::Approx(0.5));
    CHECK_THROWS_AS(discretize(m, c, geometry::Box{{-45.0}, {45.0}}, 0.25), WindowError);
    CHECK(to_triplets(free_operator({2}, 1.0)) == "# grid-operator dim=1 n=2 h=1\n0 0 2\n0 1 -1\n1 0 -1\n1 1 2\n");
}
