#include <doctest.h>

#include <cmath>

#include "sparseloc/models.hpp"

using namespace sparseloc;
using namespace sparseloc::models;
using geometry::make_ball;

namespace {

RandomPotentialModel single_site(CouplingLaw law, double height = 1.0) {
    return {SiteSet::explicit_list(1, {{0.0}}), {SingleSitePotential::indicator(height, 1.0)}, LawRule::constant(law),
            Background::zero(), std::nullopt};
}

RandomPotentialModel lattice_model(int d, double R, CouplingLaw law) {
    return {SiteSet::lattice(d, R), {SingleSitePotential::indicator(1.0, 0.4)}, LawRule::constant(law),
            Background::zero(), std::nullopt};
}

}  // namespace

TEST_CASE("p_epsilon closed forms") {
    CHECK(p_epsilon(CouplingLaw::bernoulli(0.3), 0.5) == doctest::Approx(0.3));
    CHECK(p_epsilon(CouplingLaw::uniform(0, 1), 0.25) == doctest::Approx(0.75));
    CHECK(p_epsilon(CouplingLaw(), 0.1) == 0.0);
    CHECK_THROWS_AS(p_epsilon(CouplingLaw::bernoulli(0.3), 0.0), InvalidArgument);
    CHECK_THROWS_AS(p_epsilon(CouplingLaw::bernoulli(0.3), -1.0), InvalidArgument);
}

TEST_CASE("p_epsilon is monotone and complements mass_below") {
    auto law = CouplingLaw::mixture({CouplingLaw::point_masses({0.2, 0.6}, {0.5, 0.5}), CouplingLaw::uniform(0.1, 0.9)},
                                    {0.4, 0.6});
    double prev = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double eps = k / 100.0;
        const double p = law.p_epsilon(eps);
        CHECK(p <= prev + 1e-15);
        CHECK(p + law.mass_below(eps) == doctest::Approx(1.0));
        prev = p;
    }
    // right-continuity at the atom 0.6: p(0.6) includes it, p(0.6+) does not
    CHECK(law.p_epsilon(0.6) - law.p_epsilon(0.6 + 1e-12) == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("bernoulli p_epsilon is flat in eps") {
    auto law = CouplingLaw::bernoulli(0.17);
    for (double eps : {1e-6, 0.3, 0.99, 1.0}) CHECK(law.p_epsilon(eps) == doctest::Approx(0.17));
}

TEST_CASE("ac mass") {
    CHECK(ac_mass(CouplingLaw::bernoulli(0.4)) == 0.0);
    CHECK(ac_mass(CouplingLaw::uniform(0, 1)) == 1.0);
    CHECK(ac_mass(CouplingLaw::mixture({CouplingLaw(), CouplingLaw::uniform(0, 1)}, {0.5, 0.5})) == doctest::Approx(0.5));
    CHECK(ac_mass(CouplingLaw::bernoulli_times_uniform(0.3, 0.5, 1.0)) == doctest::Approx(0.3));
}

TEST_CASE("laws reject bad support") {
    CHECK_THROWS_AS(CouplingLaw::uniform(0.5, 1.5), InvalidArgument);
    CHECK_THROWS_AS(CouplingLaw::point_masses({0.5}, {0.7}), InvalidArgument);
    CHECK_THROWS_AS(CouplingLaw::bernoulli(1.2), InvalidArgument);
}

TEST_CASE("empirical frequencies match p_epsilon") {
    const std::vector<CouplingLaw> laws{CouplingLaw::bernoulli(0.3), CouplingLaw::uniform(0.2, 0.8),
                                        CouplingLaw::point_masses({0.1, 0.5, 0.9}, {0.2, 0.3, 0.5}),
                                        CouplingLaw::bernoulli_times_uniform(0.6, 0.0, 1.0),
                                        CouplingLaw::mixture({CouplingLaw(), CouplingLaw::uniform(0, 1)}, {0.5, 0.5})};
    const int trials = 10000;
    for (const auto& law : laws) {
        const double eps = 0.5;
        const double p = law.p_epsilon(eps);
        CounterRng rng(99, 7);
        int hits = 0;
        for (int t = 0; t < trials; ++t) hits += law.sample(rng) >= eps ? 1 : 0;
        const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / trials);
        CHECK(std::abs(hits / double(trials) - p) <= 4 * se + 1e-12);
    }
}

TEST_CASE("sampling is deterministic and schedule independent") {
    auto model = lattice_model(2, 12, CouplingLaw::uniform(0, 1));
    auto window = make_ball({0, 0}, 10);
    setenv("SPARSELOC_WORKERS", "1", 1);
    auto a = sample_couplings(model, 5, window);
    setenv("SPARSELOC_WORKERS", "8", 1);
    auto b = sample_couplings(model, 5, window);
    unsetenv("SPARSELOC_WORKERS");
    CHECK(a.values == b.values);
    CHECK(a.site_index == b.site_index);
    auto c = sample_couplings(model, 6, window);
    CHECK(a.values != c.values);

    // a site's value depends only on its coordinates, not on the window
    auto small = sample_couplings(model, 5, make_ball({0, 0}, 4));
    for (std::size_t k = 0; k < small.size(); ++k) {
        auto it = std::find(a.site_index.begin(), a.site_index.end(), small.site_index[k]);
        REQUIRE(it != a.site_index.end());
        CHECK(a.values[static_cast<std::size_t>(it - a.site_index.begin())] == small.values[k]);
    }
}

TEST_CASE("degenerate laws sample exactly") {
    auto ones = sample_couplings(lattice_model(2, 6, CouplingLaw::bernoulli(1)), 1, make_ball({0, 0}, 5));
    for (double v : ones.values) CHECK(v == 1.0);
    auto zeros = sample_couplings(lattice_model(2, 6, CouplingLaw::bernoulli(0)), 1, make_ball({0, 0}, 5));
    for (double v : zeros.values) CHECK(v == 0.0);
}

TEST_CASE("potential evaluation") {
    auto model = single_site(CouplingLaw::point_masses({0.7}, {1.0}));
    auto map = sample_couplings(model, 1, make_ball({0}, 5));
    CHECK(evaluate_potential(model, map, {0.5}).value == doctest::Approx(0.7));
    CHECK(evaluate_potential(model, map, {2.0}).value == 0.0);

    RandomPotentialModel two{SiteSet::explicit_list(1, {{0.0}, {1.0}}), {SingleSitePotential::indicator(1.0, 1.0)},
                             LawRule::constant(CouplingLaw::point_masses({0.5}, {1.0})), Background::zero(),
                             std::nullopt};
    auto m2 = sample_couplings(two, 1, make_ball({0}, 5));
    CHECK(evaluate_potential(two, m2, {0.5}).value == doctest::Approx(1.0));

    // linear in couplings
    auto scaled = m2;
    for (auto& v : scaled.values) v *= 0.5;
    CHECK(evaluate_potential(two, scaled, {0.5}).value == doctest::Approx(0.5));

    // near the window edge the sum is flagged as truncated
    CHECK(evaluate_potential(two, m2, {4.5}).truncated);
}

TEST_CASE("second moment profile") {
    CHECK(second_moment_profile(single_site(CouplingLaw::uniform(0, 1)), {0.0}) ==
          doctest::Approx(std::sqrt(1.0 / 3.0)));
    CHECK(second_moment_profile(single_site(CouplingLaw::bernoulli(0.2)), {0.0}) == doctest::Approx(std::sqrt(0.2)));
    CHECK(second_moment_profile(single_site(CouplingLaw()), {0.0}) == 0.0);
}

TEST_CASE("second moment decay fit") {
    RandomPotentialModel m{SiteSet::lattice(1, 400), {SingleSitePotential::indicator(1.0, 0.4)},
                           LawRule::decaying_bernoulli(1.0, 3.0), Background::zero(), std::nullopt};
    auto fit = fit_second_moment_decay(m, {1.0}, {10, 20, 40, 80, 160, 320});
    // W = sqrt(p) ~ r^(-1.5)
    CHECK(fit.exponent == doctest::Approx(1.5).epsilon(0.05));
    CHECK(fit.exceeds_one);
    CHECK(fit.quality > 0.99);
}

TEST_CASE("quasi-dimension counts") {
    auto tube = SiteSet::tube(2, {{0.0}}, 60);
    auto q = quasi_dimension_bound(tube, 1, 50);
    CHECK(q.pass);
    CHECK(q.constant == doctest::Approx(2));
    CHECK(q.cumulative_pass);

    auto lat = SiteSet::lattice(2, 60);
    CHECK_FALSE(quasi_dimension_bound(lat, 1, 50).pass);
    auto q2 = quasi_dimension_bound(lat, 2, 50);
    CHECK(q2.pass);
    CHECK(q2.constant <= 8 * 3.1416);
    CHECK_THROWS_AS(quasi_dimension_bound(lat, 2, 80), WindowError);
}

TEST_CASE("assumption validation") {
    RandomPotentialModel m{SiteSet::lattice(2, 8), {SingleSitePotential::indicator(1.0, 0.4)},
                           LawRule::constant(CouplingLaw::bernoulli(0.2)), Background::zero(), std::nullopt};
    auto rep = validate_assumptions(m);
    CHECK(rep.all_passed());
    CHECK(rep.r_sigma == doctest::Approx(1.0));

    auto dup = m;
    dup.sites = SiteSet::explicit_list(2, {{0, 0}, {1, 0}, {0, 0}});
    auto r2 = validate_assumptions(dup);
    CHECK_FALSE(r2.entry("A2").passed);
    CHECK(r2.entry("A2").detail.find("0") != std::string::npos);

    auto wide = m;
    wide.potentials[0] = SingleSitePotential::indicator(1.0, 2.0);
    wide.potentials[0].support_radius = 1.0;
    CHECK_FALSE(validate_assumptions(wide).entry("A3").passed);

    auto k = m;
    k.distinguished_site = 0;
    k.potentials[0].lower_bump = LowerBump{1.0, 0.3};
    CHECK(validate_assumptions(k).entry("A5").checked);
}

TEST_CASE("model json round trip and strict keys") {
    const std::string text = R"({
      "dimension": 2,
      "sites": {"generator": "lattice", "window_radius": 10},
      "laws": {"rule": "decaying_bernoulli", "scale": 1, "tau": 1.5},
      "potential": {"profile": "indicator", "height": -3, "radius": 0.5},
      "background": {"kind": "zero"}
    })";
    auto m = model_from_json(text);
    CHECK(m.dim() == 2);
    CHECK(m.sites.size() > 300);
    CHECK(m.law(0).kind() == CouplingLaw::Kind::Bernoulli);
    auto again = model_from_json(model_to_json(m));
    CHECK(model_to_json(again) == model_to_json(m));

    CHECK_THROWS_AS(model_from_json(R"({"dimension":1,"sites":{"generator":"lattice","window_radius":3},
      "laws":{"rule":"constant","law":{"kind":"bernoulli","p":0.1}},"potential":{},"colour":1})"),
                    InvalidArgument);
    CHECK_THROWS_AS(law_from_json(R"({"kind":"bernoulli","q":0.1})"), InvalidArgument);
    CHECK(law_from_json(R"({"kind":"uniform","lo":0.2,"hi":0.4})").p_epsilon(0.3) == doctest::Approx(0.5));
}
