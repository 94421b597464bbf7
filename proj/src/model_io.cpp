#include <set>

#include <json.hpp>

#include "sparseloc/models.hpp"

namespace sparseloc::models {

namespace {

using json = nlohmann::json;

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    require(j.is_object(), where + ": expected an object");
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items()) {
        if (!ok.count(k)) throw InvalidArgument(where + ": unknown key '" + k + "'");
    }
}

template <class T>
T field(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw InvalidArgument(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument(where + "." + key + ": wrong type");
    }
}

template <class T>
T field_or(const json& j, const std::string& where, const char* key, T fallback) {
    return j.contains(key) ? field<T>(j, where, key) : fallback;
}

CouplingLaw parse_law(const json& j, const std::string& where) {
    const auto kind = field<std::string>(j, where, "kind");
    if (kind == "bernoulli") {
        allow_keys(j, where, {"kind", "p"});
        return CouplingLaw::bernoulli(field<double>(j, where, "p"));
    }
    if (kind == "uniform") {
        allow_keys(j, where, {"kind", "lo", "hi"});
        return CouplingLaw::uniform(field_or(j, where, "lo", 0.0), field_or(j, where, "hi", 1.0));
    }
    if (kind == "point_masses") {
        allow_keys(j, where, {"kind", "atoms", "weights"});
        return CouplingLaw::point_masses(field<std::vector<double>>(j, where, "atoms"),
                                         field<std::vector<double>>(j, where, "weights"));
    }
    if (kind == "bernoulli_times_uniform") {
        allow_keys(j, where, {"kind", "p", "lo", "hi"});
        return CouplingLaw::bernoulli_times_uniform(field<double>(j, where, "p"), field_or(j, where, "lo", 0.0),
                                                    field_or(j, where, "hi", 1.0));
    }
    if (kind == "mixture") {
        allow_keys(j, where, {"kind", "components", "weights"});
        const auto& comps = j.at("components");
        require(comps.is_array(), where + ".components: expected an array");
        std::vector<CouplingLaw> parts;
        for (std::size_t k = 0; k < comps.size(); ++k)
            parts.push_back(parse_law(comps[k], where + ".components[" + std::to_string(k) + "]"));
        return CouplingLaw::mixture(parts, field<std::vector<double>>(j, where, "weights"));
    }
    throw InvalidArgument(where + ".kind: unknown law kind '" + kind + "'");
}

json law_json(const CouplingLaw& law) {
    switch (law.kind()) {
        case CouplingLaw::Kind::Bernoulli: return {{"kind", "bernoulli"}, {"p", law.param_p}};
        case CouplingLaw::Kind::Uniform: return {{"kind", "uniform"}, {"lo", law.param_lo}, {"hi", law.param_hi}};
        case CouplingLaw::Kind::BernoulliTimesUniform:
            return {{"kind", "bernoulli_times_uniform"}, {"p", law.param_p}, {"lo", law.param_lo}, {"hi", law.param_hi}};
        case CouplingLaw::Kind::Mixture: {
            json comps = json::array();
            for (const auto& p : law.parts) comps.push_back(law_json(p));
            return {{"kind", "mixture"}, {"components", comps}, {"weights", law.part_weights}};
        }
        case CouplingLaw::Kind::PointMasses: {
            std::vector<double> at, w;
            for (const auto& a : law.atoms()) {
                at.push_back(a.at);
                w.push_back(a.weight);
            }
            return {{"kind", "point_masses"}, {"atoms", at}, {"weights", w}};
        }
    }
    return {};
}

SiteSet parse_sites(const json& j, int d) {
    const std::string where = "sites";
    allow_keys(j, where, {"generator", "window_radius", "cross_section", "points"});
    const auto gen = field<std::string>(j, where, "generator");
    if (gen == "lattice") return SiteSet::lattice(d, field<double>(j, where, "window_radius"));
    if (gen == "tube") {
        auto cs = field_or<std::vector<Point>>(j, where, "cross_section", {Point(d - 1, 0.0)});
        return SiteSet::tube(d, cs, field<double>(j, where, "window_radius"));
    }
    if (gen == "explicit") return SiteSet::explicit_list(d, field<std::vector<Point>>(j, where, "points"));
    throw InvalidArgument("sites.generator: unknown generator '" + gen + "'");
}

LawRule parse_rule(const json& j) {
    const std::string where = "laws";
    const auto rule = field<std::string>(j, where, "rule");
    if (rule == "constant") {
        allow_keys(j, where, {"rule", "law"});
        require(j.contains("law"), "laws: missing key 'law'");
        return LawRule::constant(parse_law(j.at("law"), "laws.law"));
    }
    if (rule == "decaying_bernoulli") {
        allow_keys(j, where, {"rule", "scale", "tau", "amplitude"});
        std::optional<CouplingLaw> amp;
        if (j.contains("amplitude")) amp = parse_law(j.at("amplitude"), "laws.amplitude");
        return LawRule::decaying_bernoulli(field_or(j, where, "scale", 1.0), field<double>(j, where, "tau"), amp);
    }
    if (rule == "shells") {
        allow_keys(j, where, {"rule", "shells", "fallback"});
        std::vector<LawRule::ShellLaw> shells;
        const auto& arr = j.at("shells");
        require(arr.is_array(), "laws.shells: expected an array");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            const std::string w = "laws.shells[" + std::to_string(k) + "]";
            allow_keys(arr[k], w, {"r_min", "r_max", "law"});
            require(arr[k].contains("law"), w + ": missing key 'law'");
            shells.push_back({field<double>(arr[k], w, "r_min"), field<double>(arr[k], w, "r_max"),
                              parse_law(arr[k].at("law"), w + ".law")});
        }
        CouplingLaw fb = j.contains("fallback") ? parse_law(j.at("fallback"), "laws.fallback") : CouplingLaw();
        return LawRule::by_shells(fb, shells);
    }
    if (rule == "per_site") {
        allow_keys(j, where, {"rule", "laws"});
        std::vector<CouplingLaw> laws;
        const auto& arr = j.at("laws");
        require(arr.is_array(), "laws.laws: expected an array");
        for (std::size_t k = 0; k < arr.size(); ++k)
            laws.push_back(parse_law(arr[k], "laws.laws[" + std::to_string(k) + "]"));
        return LawRule::explicit_laws(laws);
    }
    throw InvalidArgument("laws.rule: unknown rule '" + rule + "'");
}

Sign parse_sign(const std::string& s) {
    if (s == "nonnegative") return Sign::Nonnegative;
    if (s == "nonpositive") return Sign::Nonpositive;
    if (s == "indefinite") return Sign::Indefinite;
    throw InvalidArgument("potential.sign: unknown sign '" + s + "'");
}

SingleSitePotential parse_potential(const json& j, const std::string& where, int d) {
    allow_keys(j, where, {"profile", "height", "radius", "table_r", "table_value", "support_radius", "p",
                          "norm_bound", "sign", "lower_bump"});
    const auto profile = field_or<std::string>(j, where, "profile", "indicator");
    SingleSitePotential f;
    if (profile == "indicator") {
        f = SingleSitePotential::indicator(field_or(j, where, "height", 1.0), field_or(j, where, "radius", 1.0));
    } else if (profile == "table") {
        f.profile = SingleSitePotential::Profile::RadialTable;
        f.table_r = field<std::vector<double>>(j, where, "table_r");
        f.table_value = field<std::vector<double>>(j, where, "table_value");
        require(f.table_r.size() == f.table_value.size() && !f.table_r.empty(),
                where + ": table_r and table_value must be nonempty and of equal length");
        for (std::size_t k = 1; k < f.table_r.size(); ++k)
            require(f.table_r[k] > f.table_r[k - 1], where + ".table_r: must be strictly increasing");
        f.support_radius = f.actual_support_radius();
        f.sign = Sign::Indefinite;
    } else {
        throw InvalidArgument(where + ".profile: unknown profile '" + profile + "'");
    }
    f.support_radius = field_or(j, where, "support_radius", f.support_radius);
    f.p_exponent = field_or(j, where, "p", f.p_exponent);
    if (j.contains("sign")) f.sign = parse_sign(field<std::string>(j, where, "sign"));
    if (j.contains("lower_bump")) {
        const auto& b = j.at("lower_bump");
        allow_keys(b, where + ".lower_bump", {"c", "s"});
        f.lower_bump = LowerBump{field<double>(b, where + ".lower_bump", "c"), field<double>(b, where + ".lower_bump", "s")};
    }
    f.norm_bound = j.contains("norm_bound") ? field<double>(j, where, "norm_bound") : f.lp_norm(f.p_exponent, d);
    return f;
}

json potential_json(const SingleSitePotential& f) {
    json j;
    if (f.profile == SingleSitePotential::Profile::Indicator) {
        j = {{"profile", "indicator"}, {"height", f.height}, {"radius", f.radius}};
    } else {
        j = {{"profile", "table"}, {"table_r", f.table_r}, {"table_value", f.table_value}};
    }
    j["support_radius"] = f.support_radius;
    j["p"] = f.p_exponent;
    j["norm_bound"] = f.norm_bound;
    j["sign"] = to_string(f.sign);
    if (f.lower_bump) j["lower_bump"] = {{"c", f.lower_bump->c}, {"s", f.lower_bump->s}};
    return j;
}

Background parse_background(const json& j) {
    const std::string where = "background";
    const auto kind = field<std::string>(j, where, "kind");
    if (kind == "zero") {
        allow_keys(j, where, {"kind"});
        return Background::zero();
    }
    if (kind == "constant") {
        allow_keys(j, where, {"kind", "value"});
        return Background::constant(field<double>(j, where, "value"));
    }
    if (kind == "periodic") {
        allow_keys(j, where, {"kind", "period", "values"});
        return Background::periodic(field<double>(j, where, "period"), field<std::vector<double>>(j, where, "values"));
    }
    throw InvalidArgument("background.kind: unknown kind '" + kind + "'");
}

RandomPotentialModel parse_model(const json& j) {
    allow_keys(j, "model", {"dimension", "sites", "laws", "potential", "potentials", "background", "distinguished_site"});
    const int d = field<int>(j, "model", "dimension");
    require(d >= 1, "model.dimension: must be >= 1");
    require(j.contains("sites"), "model: missing key 'sites'");
    require(j.contains("laws"), "model: missing key 'laws'");
    RandomPotentialModel m{parse_sites(j.at("sites"), d), {}, parse_rule(j.at("laws")), Background::zero(), std::nullopt};
    if (j.contains("potential")) {
        m.potentials.push_back(parse_potential(j.at("potential"), "potential", d));
    } else if (j.contains("potentials")) {
        const auto& arr = j.at("potentials");
        require(arr.is_array(), "potentials: expected an array");
        for (std::size_t k = 0; k < arr.size(); ++k)
            m.potentials.push_back(parse_potential(arr[k], "potentials[" + std::to_string(k) + "]", d));
        require(m.potentials.size() == m.sites.size(), "potentials: need one entry per site");
    } else {
        throw InvalidArgument("model: missing key 'potential'");
    }
    if (j.contains("background")) m.background = parse_background(j.at("background"));
    if (j.contains("distinguished_site")) {
        const auto k = field<std::size_t>(j, "model", "distinguished_site");
        require(k < m.sites.size(), "distinguished_site: index outside the site list");
        m.distinguished_site = k;
    }
    if (m.laws.kind == LawRule::Kind::PerSite)
        require(m.laws.per_site.size() == m.sites.size(), "laws.laws: need one law per site");
    return m;
}

json parse_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidArgument(what + ": " + e.what());
    }
}

}  // namespace

RandomPotentialModel model_from_json(const std::string& text) { return parse_model(parse_text(text, "model")); }

CouplingLaw law_from_json(const std::string& text) { return parse_law(parse_text(text, "law"), "law"); }

std::string model_to_json(const RandomPotentialModel& m) {
    json j;
    j["dimension"] = m.dim();
    json sites;
    switch (m.sites.generator()) {
        case SiteGenerator::Lattice: sites = {{"generator", "lattice"}, {"window_radius", m.sites.window_radius()}}; break;
        case SiteGenerator::Tube:
            sites = {{"generator", "tube"},
                     {"window_radius", m.sites.window_radius()},
                     {"cross_section", m.sites.cross_section()}};
            break;
        case SiteGenerator::Explicit: sites = {{"generator", "explicit"}, {"points", m.sites.sites()}}; break;
    }
    j["sites"] = sites;
    const auto& r = m.laws;
    switch (r.kind) {
        case LawRule::Kind::Constant: j["laws"] = {{"rule", "constant"}, {"law", law_json(r.base.at(0))}}; break;
        case LawRule::Kind::DecayingBernoulli:
            j["laws"] = {{"rule", "decaying_bernoulli"}, {"scale", r.scale}, {"tau", r.tau}};
            if (!r.amplitude.empty()) j["laws"]["amplitude"] = law_json(r.amplitude.front());
            break;
        case LawRule::Kind::Shells: {
            json arr = json::array();
            for (const auto& s : r.shells) arr.push_back({{"r_min", s.r_min}, {"r_max", s.r_max}, {"law", law_json(s.law)}});
            j["laws"] = {{"rule", "shells"}, {"shells", arr}, {"fallback", law_json(r.base.at(0))}};
            break;
        }
        case LawRule::Kind::PerSite: {
            json arr = json::array();
            for (const auto& l : r.per_site) arr.push_back(law_json(l));
            j["laws"] = {{"rule", "per_site"}, {"laws", arr}};
            break;
        }
    }
    if (m.potentials.size() == 1) {
        j["potential"] = potential_json(m.potentials.front());
    } else {
        json arr = json::array();
        for (const auto& f : m.potentials) arr.push_back(potential_json(f));
        j["potentials"] = arr;
    }
    switch (m.background.kind) {
        case Background::Kind::Zero: j["background"] = {{"kind", "zero"}}; break;
        case Background::Kind::Constant: j["background"] = {{"kind", "constant"}, {"value", m.background.value}}; break;
        case Background::Kind::Periodic:
            j["background"] = {{"kind", "periodic"}, {"period", m.background.period}, {"values", m.background.values}};
            break;
    }
    if (m.distinguished_site) j["distinguished_site"] = *m.distinguished_site;
    return j.dump();
}

}  // namespace sparseloc::models
