#include <doctest.h>

#include <chrono>
#include <cmath>

#include "sparseloc/stochastic.hpp"

using namespace sparseloc;
using namespace sparseloc::models;
using namespace sparseloc::stochastic;

namespace {

RandomPotentialModel with_law(SiteSet sites, LawRule rule) {
    return {std::move(sites), {SingleSitePotential::indicator(1.0, 0.4)}, std::move(rule), Background::zero(),
            std::nullopt};
}

// Σ = Z, p = 1/2 on 4 <= |i| <= 8, zero elsewhere.
RandomPotentialModel ten_site_line(double p = 0.5) {
    return with_law(SiteSet::lattice(1, 12),
                    LawRule::by_shells(CouplingLaw(), {{4.0, 8.0, CouplingLaw::bernoulli(p)}}));
}

// Independent oracle: enumerate the sign patterns of ±4..±8 and scan
// r in [4, 6] on a fine grid for a shell (r, r+2] with no spoiled site.
double line_oracle(double p) {
    std::vector<int> sites{-8, -7, -6, -5, -4, 4, 5, 6, 7, 8};
    double total = 0.0;
    for (int mask = 0; mask < 1 << 10; ++mask) {
        double w = 1.0;
        std::vector<double> spoiled;
        for (int j = 0; j < 10; ++j) {
            const bool on = mask >> j & 1;
            w *= on ? p : 1 - p;
            if (on) spoiled.push_back(std::abs(sites[j]));
        }
        bool found = false;
        for (int k = 0; k <= 2000 && !found; ++k) {
            const double r = 4.0 + k * 0.001;
            bool ok = true;
            for (double t : spoiled) ok = ok && !(r < t && t <= r + 2);
            found = ok;
        }
        if (!found) total += w;
    }
    return total;
}

}  // namespace

TEST_CASE("free probability of ten sites") {
    std::vector<Point> pts;
    for (int k = 1; k <= 10; ++k) pts.push_back({double(k)});
    auto m = with_law(SiteSet::explicit_list(1, pts), LawRule::constant(CouplingLaw::bernoulli(0.1)));
    auto region = geometry::make_ball({5.5}, 5.0);
    auto rec = estimate_free_probability(m, region, 0.5, 10000, 1);
    REQUIRE(rec.exact);
    CHECK(*rec.exact == doctest::Approx(std::pow(0.9, 10)));
    CHECK(*rec.exact == doctest::Approx(0.34868).epsilon(1e-4));
    CHECK(std::abs(rec.value - *rec.exact) <= 3 * rec.std_error);
    CHECK(rec.std_error == doctest::Approx(std::sqrt(rec.value * (1 - rec.value) / 1e4)));
    CHECK_THROWS_AS(estimate_free_probability(m, region, 0.5, 0, 1), InvalidArgument);
}

TEST_CASE("free probability calibration over 100 seeds") {
    std::vector<Point> pts;
    for (int k = 1; k <= 10; ++k) pts.push_back({double(k)});
    auto m = with_law(SiteSet::explicit_list(1, pts), LawRule::constant(CouplingLaw::bernoulli(0.1)));
    int inside = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto rec = estimate_free_probability(m, geometry::make_ball({5.5}, 5.0), 0.5, 10000, seed);
        inside += std::abs(rec.value - std::pow(0.9, 10)) <= 3 * rec.std_error ? 1 : 0;
    }
    CHECK(inside >= 99);
}

TEST_CASE("free probability trivial laws and every law kind") {
    auto lat = SiteSet::lattice(2, 10);
    auto ann = geometry::make_annulus(3.0, 5.0, 2);
    CHECK(estimate_free_probability(with_law(lat, LawRule::constant(CouplingLaw())), ann, 0.2, 100, 3).value == 1.0);
    auto ones = estimate_free_probability(with_law(lat, LawRule::constant(CouplingLaw::bernoulli(1))), ann, 0.2, 100, 3);
    CHECK(ones.value == 0.0);
    CHECK(*ones.exact == 0.0);

    // half-open annulus: sites with 3 < |i| <= 5
    std::size_t count = 0;
    for (const auto& x : lat.sites()) count += norm(x) > 3 && norm(x) <= 5 ? 1 : 0;
    CHECK(sites_in_region(with_law(lat, LawRule::constant(CouplingLaw())), ann).size() == count);

    auto few = SiteSet::explicit_list(2, {{1, 0}, {0, 1}, {-1, 0}});
    for (const auto& law : {CouplingLaw::uniform(0, 1), CouplingLaw::point_masses({0.1, 0.6}, {0.7, 0.3}),
                            CouplingLaw::bernoulli_times_uniform(0.5, 0.2, 1.0),
                            CouplingLaw::mixture({CouplingLaw(), CouplingLaw::uniform(0, 1)}, {0.6, 0.4})}) {
        auto rec = estimate_free_probability(with_law(few, LawRule::constant(law)), geometry::make_ball({0, 0}, 2), 0.5,
                                             20000, 11);
        const double q = law.exceed_probability(0.5);
        CHECK(*rec.exact == doctest::Approx(std::pow(1 - q, 3)));
        CHECK(std::abs(rec.value - *rec.exact) <= 3 * rec.std_error + 1e-12);
    }
}

TEST_CASE("brute force a_n on the ten-site line") {
    auto m = ten_site_line();
    const auto t0 = std::chrono::steady_clock::now();
    const double exact = brute_force_a_n(m, 0.5, 2.0, 2);
    CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 1.0);
    CHECK(exact > 0.0);
    CHECK(exact < 1.0);
    CHECK(exact == doctest::Approx(line_oracle(0.5)).epsilon(1e-12));

    auto mc = estimate_a_n(m, 0.5, 2.0, 2, 20000, 5);
    CHECK(std::abs(mc.value - exact) <= 3 * mc.std_error);

    int inside = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto r = estimate_a_n(m, 0.5, 2.0, 2, 4000, 1000 + seed);
        inside += std::abs(r.value - exact) <= 3 * r.std_error ? 1 : 0;
    }
    CHECK(inside >= 99);
}

TEST_CASE("a_n trivial cases") {
    auto lat = SiteSet::lattice(2, 40);
    auto zero = with_law(lat, LawRule::constant(CouplingLaw()));
    auto one = with_law(lat, LawRule::constant(CouplingLaw::bernoulli(1)));
    CHECK(estimate_a_n(zero, 0.5, 2.0, 3, 200, 1).value == 0.0);
    CHECK(brute_force_a_n(zero, 0.5, 2.0, 3) == 0.0);
    CHECK(estimate_a_n(one, 0.5, 2.0, 3, 200, 1).value == 1.0);
    CHECK(brute_force_a_n(one, 0.5, 2.0, 3) == 1.0);

    // p = 1 but the only sites sit far out: every candidate shell is empty
    auto sparse = with_law(SiteSet::explicit_list(2, {{30, 0}}), LawRule::constant(CouplingLaw::bernoulli(1)));
    CHECK(brute_force_a_n(sparse, 0.5, 2.0, 3) == 0.0);

    // (4/3)^2 - 1 < 4/3: no candidate radius
    auto deg = estimate_a_n(one, 0.5, 4.0 / 3.0, 1, 10, 1);
    CHECK(deg.degenerate);
    CHECK(deg.value == 0.0);

    CHECK_THROWS_AS(brute_force_a_n(with_law(SiteSet::lattice(2, 40), LawRule::constant(CouplingLaw::bernoulli(0.5))),
                                    0.5, 2.0, 3),
                    BudgetExceeded);
    CHECK_THROWS_AS(estimate_a_n(zero, 0.5, 2.0, 5, 10, 1), WindowError);
}

TEST_CASE("a_n is monotone under coupled sampling") {
    const double lo = estimate_a_n(ten_site_line(0.3), 0.5, 2.0, 2, 5000, 9).value;
    const double hi = estimate_a_n(ten_site_line(0.5), 0.5, 2.0, 2, 5000, 9).value;
    CHECK(lo <= hi);
    CHECK(brute_force_a_n(ten_site_line(0.3), 0.5, 2.0, 2) <= brute_force_a_n(ten_site_line(0.5), 0.5, 2.0, 2));
}

TEST_CASE("a_n estimates do not depend on the worker count") {
    auto m = with_law(SiteSet::lattice(2, 40), LawRule::decaying_bernoulli(1.0, 1.5));
    setenv("SPARSELOC_WORKERS", "1", 1);
    auto a = estimate_a_n(m, 0.5, 2.0, 4, 3000, 21);
    setenv("SPARSELOC_WORKERS", "8", 1);
    auto b = estimate_a_n(m, 0.5, 2.0, 4, 3000, 21);
    unsetenv("SPARSELOC_WORKERS");
    CHECK(a.value == b.value);
}

TEST_CASE("a_n bound closed form") {
    CHECK(a_n_bound(2.0, 0.25, 4).value == doctest::Approx(std::exp(-std::pow(0.75, 4) * 3.0)));
    CHECK(a_n_bound(2.0, 0.25, 4).value == doctest::Approx(0.3870).epsilon(1e-3));
    CHECK(std::abs(a_n_bound(2.0, 0.25, 10).value - 0.00332) <= 1e-5);
    CHECK(a_n_bound(2.0, 0.25, 1).value == doctest::Approx(std::exp(-0.75)));
    CHECK_FALSE(a_n_bound(2.0, 0.25, 1).vacuous);
    // a^n (a-1)/n <= 1
    CHECK(a_n_bound(1.5, 0.1, 1).vacuous);
    CHECK(a_n_bound(1.5, 0.1, 1).value >= 1.0);
    CHECK_THROWS_AS(a_n_bound(2.0, 0.5, 3), InvalidArgument);
    CHECK_THROWS_AS(a_n_bound(1.2, 0.25, 3), InvalidArgument);
    CHECK(a_n_bound_ratio(2.0, 0.25, 4, 20) < 1.0);
}

TEST_CASE("minimum free probability and count constant") {
    // every shell (r, r+2], r in [4,6], holds exactly two of ±5..±8 pairs' norms
    CHECK(min_free_probability(ten_site_line(), 0.5, 2.0, 2) == doctest::Approx(1.0 / 16));
    CHECK(shell_count_constant(ten_site_line(), 2.0, 2) == doctest::Approx(2.0));
}

TEST_CASE("Borel-Cantelli report") {
    auto lat = SiteSet::lattice(2, 130);
    auto zero = borel_cantelli_report(with_law(lat, LawRule::constant(CouplingLaw())), 0.5, 2.0, 2, 6, 200, 1);
    CHECK(zero.summable);
    for (const auto& r : zero.rows) CHECK(r.value() == 0.0);

    auto one = borel_cantelli_report(with_law(lat, LawRule::constant(CouplingLaw::bernoulli(1))), 0.5, 2.0, 2, 6, 200, 1);
    CHECK_FALSE(one.summable);
    for (const auto& r : one.rows) CHECK(r.value() == 1.0);

    auto dec = borel_cantelli_report(with_law(SiteSet::lattice(2, 130), LawRule::decaying_bernoulli(1.0, 3.0)), 0.5,
                                     2.0, 2, 6, 2000, 7);
    double prev = 0.0;
    for (const auto& r : dec.rows) {
        CHECK(r.partial_sum >= prev);
        prev = r.partial_sum;
        if (r.eta) CHECK(r.estimate.value <= r.bound.value + 3 * r.estimate.std_error);
        if (r.exact) CHECK(std::abs(r.estimate.value - *r.exact) <= 3 * r.estimate.std_error + 1e-12);
    }
    auto csv = report_to_csv(dec);
    CHECK(csv.rfind("n,exact,estimate,std_error,bound,partial_sum\n", 0) == 0);
    CHECK(report_to_jsonl(dec).find("\"record\":\"summary\"") != std::string::npos);
}

TEST_CASE("free-annulus success tends to one for the adapted ratio") {
    // p_i -> 0 and a = 1 + 1/ℓ with ℓ = 3
    auto m = with_law(SiteSet::lattice(1, 400), LawRule::decaying_bernoulli(1.0, 1.0));
    const double a = 4.0 / 3.0;
    const int n0 = certify::first_nondegenerate_n(a);
    double first = -1, last = -1;
    for (int n = n0; n <= 18; ++n) {
        const double s = 1.0 - estimate_a_n(m, 0.5, a, n, 2000, 3).value;
        if (first < 0) first = s;
        last = s;
    }
    CHECK(last > first);
    CHECK(last > 0.9);
}

TEST_CASE("quasi-1D threshold") {
    CHECK(quasi1d_threshold(0.0, 3.0) == 1.0);
    CHECK(quasi1d_threshold(0.5, 4.0) == doctest::Approx(16));
    CHECK(quasi1d_threshold(0.5, 1.0) == doctest::Approx(2));
    CHECK_THROWS_AS(quasi1d_threshold(1.0, 2.0), InvalidArgument);
}
