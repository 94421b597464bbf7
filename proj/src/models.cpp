#include "sparseloc/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace sparseloc::models {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t coordinate_bits(double v) {
    if (v == 0.0) v = 0.0;  // fold -0.0
    return std::bit_cast<std::uint64_t>(v);
}

void lattice_points(int d, int bound, double radius, Point& cur, int axis, std::vector<Point>& out) {
    if (axis == d) {
        if (norm(cur) <= radius) out.push_back(cur);
        return;
    }
    for (int k = -bound; k <= bound; ++k) {
        cur[axis] = k;
        lattice_points(d, bound, radius, cur, axis + 1, out);
    }
}

// Least-squares slope and R^2 of y against x.
std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    if (x.size() < 2) return {0.0, 0.0};
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx == 0.0) return {0.0, 0.0};
    const double slope = sxy / sxx;
    const double r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    return {slope, r2};
}

}  // namespace

std::string to_string(SiteGenerator g) {
    switch (g) {
        case SiteGenerator::Lattice: return "lattice";
        case SiteGenerator::Tube: return "tube";
        case SiteGenerator::Explicit: return "explicit";
    }
    return "explicit";
}

std::string to_string(Sign s) {
    switch (s) {
        case Sign::Nonnegative: return "nonnegative";
        case Sign::Nonpositive: return "nonpositive";
        case Sign::Indefinite: return "indefinite";
    }
    return "indefinite";
}

// ---------------------------------------------------------------------------
// SiteLocator

SiteLocator::SiteLocator(std::vector<Point> points, double cell) : points_(std::move(points)), cell_(cell) {
    require(cell > 0.0, "locator cell must be > 0");
    std::vector<std::pair<std::uint64_t, std::size_t>> tagged;
    tagged.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) tagged.emplace_back(hash_cell(cell_of(points_[i])), i);
    std::sort(tagged.begin(), tagged.end());
    keys_.reserve(tagged.size());
    order_.reserve(tagged.size());
    for (auto [k, i] : tagged) {
        keys_.push_back(k);
        order_.push_back(i);
    }
}

std::vector<std::int64_t> SiteLocator::cell_of(const Point& x) const {
    std::vector<std::int64_t> c(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) c[k] = static_cast<std::int64_t>(std::floor(x[k] / cell_));
    return c;
}

std::uint64_t SiteLocator::hash_cell(const std::vector<std::int64_t>& c) {
    std::uint64_t h = 0x2545F4914F6CDD1Dull;
    for (auto v : c) h = combine_ids(h, static_cast<std::uint64_t>(v));
    return h;
}

std::vector<std::size_t> SiteLocator::near(const Point& x, double radius) const {
    std::vector<std::size_t> out;
    if (points_.empty()) return out;
    const int d = static_cast<int>(x.size());
    std::vector<std::int64_t> lo(d), hi(d), cur(d);
    for (int k = 0; k < d; ++k) {
        lo[k] = static_cast<std::int64_t>(std::floor((x[k] - radius) / cell_));
        hi[k] = static_cast<std::int64_t>(std::floor((x[k] + radius) / cell_));
    }
    cur = lo;
    while (true) {
        const auto h = hash_cell(cur);
        auto range = std::equal_range(keys_.begin(), keys_.end(), h);
        for (auto it = range.first; it != range.second; ++it) {
            const std::size_t i = order_[static_cast<std::size_t>(it - keys_.begin())];
            if (distance(points_[i], x) <= radius) out.push_back(i);
        }
        int axis = 0;
        while (axis < d) {
            if (++cur[axis] <= hi[axis]) break;
            cur[axis] = lo[axis];
            ++axis;
        }
        if (axis == d) break;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// SiteSet

SiteSet::SiteSet(int dim, SiteGenerator g, std::vector<Point> sites, double window_radius)
    : dim_(dim), generator_(g), sites_(std::move(sites)), window_radius_(window_radius) {
    require(dim >= 1, "dimension must be positive");
    for (const auto& s : sites_) require(static_cast<int>(s.size()) == dim, "site dimension mismatch");
    build_index();
}

void SiteSet::build_index() {
    by_norm_.resize(sites_.size());
    std::iota(by_norm_.begin(), by_norm_.end(), 0);
    std::vector<double> norms(sites_.size());
    for (std::size_t i = 0; i < sites_.size(); ++i) norms[i] = norm(sites_[i]);
    std::stable_sort(by_norm_.begin(), by_norm_.end(), [&](auto a, auto b) { return norms[a] < norms[b]; });
    norms_sorted_.resize(sites_.size());
    for (std::size_t k = 0; k < by_norm_.size(); ++k) norms_sorted_[k] = norms[by_norm_[k]];
    locator_ = std::make_shared<const SiteLocator>(sites_, 2.0);
}

SiteSet SiteSet::lattice(int d, double window_radius) {
    require(d >= 1 && d <= 4, "lattice generator supports 1 <= d <= 4");
    require(window_radius >= 0.0 && std::isfinite(window_radius), "window radius must be finite and >= 0");
    std::vector<Point> pts;
    Point cur(d, 0.0);
    lattice_points(d, static_cast<int>(std::floor(window_radius)), window_radius, cur, 0, pts);
    return SiteSet(d, SiteGenerator::Lattice, std::move(pts), window_radius);
}

SiteSet SiteSet::tube(int d, std::vector<Point> cross_section, double window_radius) {
    require(d >= 2, "tube generator needs d >= 2");
    require(!cross_section.empty(), "tube cross-section must be nonempty");
    for (const auto& c : cross_section) require(static_cast<int>(c.size()) == d - 1, "cross-section dimension");
    std::vector<Point> pts;
    const int bound = static_cast<int>(std::floor(window_radius));
    for (int k = -bound; k <= bound; ++k) {
        for (const auto& c : cross_section) {
            Point p(d);
            p[0] = k;
            for (int j = 1; j < d; ++j) p[j] = c[j - 1];
            if (norm(p) <= window_radius) pts.push_back(std::move(p));
        }
    }
    SiteSet s(d, SiteGenerator::Tube, std::move(pts), window_radius);
    s.cross_section_ = std::move(cross_section);
    return s;
}

SiteSet SiteSet::explicit_list(int d, std::vector<Point> sites) {
    return SiteSet(d, SiteGenerator::Explicit, std::move(sites), kInf);
}

std::uint64_t SiteSet::site_key(std::size_t i) const {
    std::uint64_t h = 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(dim_);
    for (double v : sites_.at(i)) h = combine_ids(h, coordinate_bits(v));
    return h;
}

SiteSet::Separation SiteSet::separation() const {
    Separation best{kInf, 0, 0};
    if (sites_.size() < 2) return best;
    std::vector<std::size_t> order(sites_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return sites_[a][0] < sites_[b][0]; });
    for (std::size_t a = 0; a < order.size(); ++a) {
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const auto i = order[a];
            const auto j = order[b];
            if (sites_[j][0] - sites_[i][0] > best.r_sigma) break;
            const double dist = distance(sites_[i], sites_[j]);
            if (dist < best.r_sigma) best = {dist, std::min(i, j), std::max(i, j)};
        }
    }
    return best;
}

bool SiteSet::generator_consistent() const {
    switch (generator_) {
        case SiteGenerator::Lattice: return lattice(dim_, window_radius_).sites_ == sites_;
        case SiteGenerator::Tube: return tube(dim_, cross_section_, window_radius_).sites_ == sites_;
        case SiteGenerator::Explicit: return true;
    }
    return true;
}

std::vector<std::size_t> SiteSet::near(const Point& x, double radius) const {
    return locator_->near(x, radius);
}

std::vector<std::size_t> SiteSet::with_norm_in(double lo, double hi) const {
    const auto first = std::upper_bound(norms_sorted_.begin(), norms_sorted_.end(), lo) - norms_sorted_.begin();
    const auto last = std::upper_bound(norms_sorted_.begin(), norms_sorted_.end(), hi) - norms_sorted_.begin();
    std::vector<std::size_t> out;
    for (auto k = first; k < last; ++k) out.push_back(by_norm_[static_cast<std::size_t>(k)]);
    return out;
}

std::size_t SiteSet::count_within(double r) const {
    return static_cast<std::size_t>(std::upper_bound(norms_sorted_.begin(), norms_sorted_.end(), r) -
                                    norms_sorted_.begin());
}

// ---------------------------------------------------------------------------
// Single-site potentials

SingleSitePotential SingleSitePotential::indicator(double height, double radius) {
    require(radius >= 0.0, "indicator radius must be >= 0");
    SingleSitePotential f;
    f.profile = Profile::Indicator;
    f.height = height;
    f.radius = radius;
    f.support_radius = radius;
    f.norm_bound = f.lp_norm(f.p_exponent, 1);
    f.sign = height > 0 ? Sign::Nonnegative : (height < 0 ? Sign::Nonpositive : Sign::Indefinite);
    return f;
}

double SingleSitePotential::at_radius(double r) const {
    if (profile == Profile::Indicator) return r <= radius ? height : 0.0;
    if (table_r.empty()) return 0.0;
    if (r <= table_r.front()) return table_value.front();
    if (r > table_r.back()) return 0.0;
    const auto it = std::lower_bound(table_r.begin(), table_r.end(), r);
    const auto k = static_cast<std::size_t>(it - table_r.begin());
    if (table_r[k] == r) return table_value[k];
    const double t = (r - table_r[k - 1]) / (table_r[k] - table_r[k - 1]);
    return table_value[k - 1] + t * (table_value[k] - table_value[k - 1]);
}

double SingleSitePotential::actual_support_radius() const {
    if (profile == Profile::Indicator) return height != 0.0 ? radius : 0.0;
    for (std::size_t k = table_value.size(); k-- > 0;) {
        if (table_value[k] != 0.0) return k + 1 < table_r.size() ? table_r[k + 1] : table_r[k];
    }
    return 0.0;
}

double SingleSitePotential::sup_abs() const {
    if (profile == Profile::Indicator) return std::abs(height);
    double m = 0.0;
    for (double v : table_value) m = std::max(m, std::abs(v));
    return m;
}

double SingleSitePotential::lp_norm(double q, int d) const {
    require(q >= 1.0, "norm exponent must be >= 1");
    const double vd = unit_ball_volume(d);
    if (profile == Profile::Indicator) return std::abs(height) * std::pow(vd * std::pow(radius, d), 1.0 / q);
    const double rmax = actual_support_radius();
    if (rmax <= 0.0) return 0.0;
    constexpr int steps = 20000;
    const double h = rmax / steps;
    double acc = 0.0;
    for (int k = 0; k < steps; ++k) {
        const double r = (k + 0.5) * h;
        acc += std::pow(std::abs(at_radius(r)), q) * std::pow(r, d - 1) * h;
    }
    return std::pow(d * vd * acc, 1.0 / q);
}

// ---------------------------------------------------------------------------
// Coupling laws

CouplingLaw::CouplingLaw() : kind_(Kind::PointMasses), atoms_{{0.0, 1.0}} {}

void CouplingLaw::validate() const {
    double total = 0.0;
    for (const auto& a : atoms_) {
        require(a.weight >= 0.0, "law weights must be >= 0");
        require(a.at >= 0.0 && a.at <= 1.0, "law support must lie in [0,1]");
        total += a.weight;
    }
    for (const auto& u : uniforms_) {
        require(u.weight >= 0.0, "law weights must be >= 0");
        require(u.lo >= 0.0 && u.hi <= 1.0 && u.lo < u.hi, "uniform component must satisfy 0 <= lo < hi <= 1");
        total += u.weight;
    }
    require(std::abs(total - 1.0) <= 1e-12, "law total mass must be 1");
}

CouplingLaw CouplingLaw::point_masses(std::vector<double> atoms, std::vector<double> weights) {
    require(atoms.size() == weights.size() && !atoms.empty(), "atoms and weights must match and be nonempty");
    CouplingLaw law;
    law.kind_ = Kind::PointMasses;
    law.atoms_.clear();
    for (std::size_t k = 0; k < atoms.size(); ++k) law.atoms_.push_back({atoms[k], weights[k]});
    law.validate();
    return law;
}

CouplingLaw CouplingLaw::uniform(double lo, double hi) {
    require(lo <= hi, "uniform law needs lo <= hi");
    CouplingLaw law;
    law.kind_ = Kind::Uniform;
    law.param_lo = lo;
    law.param_hi = hi;
    law.atoms_.clear();
    if (lo == hi) {
        law.atoms_.push_back({lo, 1.0});
    } else {
        law.uniforms_.push_back({lo, hi, 1.0});
    }
    law.validate();
    return law;
}

CouplingLaw CouplingLaw::bernoulli(double p) {
    require(p >= 0.0 && p <= 1.0, "bernoulli parameter must lie in [0,1]");
    CouplingLaw law;
    law.kind_ = Kind::Bernoulli;
    law.param_p = p;
    law.atoms_ = {{0.0, 1.0 - p}, {1.0, p}};
    law.validate();
    return law;
}

CouplingLaw CouplingLaw::bernoulli_times_uniform(double p, double lo, double hi) {
    require(p >= 0.0 && p <= 1.0, "bernoulli parameter must lie in [0,1]");
    require(lo <= hi, "uniform law needs lo <= hi");
    CouplingLaw law;
    law.kind_ = Kind::BernoulliTimesUniform;
    law.param_p = p;
    law.param_lo = lo;
    law.param_hi = hi;
    law.atoms_ = {{0.0, 1.0 - p}};
    if (lo == hi) {
        law.atoms_.push_back({lo, p});
    } else {
        law.uniforms_.push_back({lo, hi, p});
    }
    law.validate();
    return law;
}

CouplingLaw CouplingLaw::mixture(const std::vector<CouplingLaw>& parts, const std::vector<double>& weights) {
    require(parts.size() == weights.size() && !parts.empty(), "mixture parts and weights must match");
    CouplingLaw law;
    law.kind_ = Kind::Mixture;
    law.atoms_.clear();
    law.parts = parts;
    law.part_weights = weights;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        require(weights[k] >= 0.0, "mixture weights must be >= 0");
        for (const auto& a : parts[k].atoms_) law.atoms_.push_back({a.at, a.weight * weights[k]});
        for (const auto& u : parts[k].uniforms_) law.uniforms_.push_back({u.lo, u.hi, u.weight * weights[k]});
    }
    law.validate();
    return law;
}

double CouplingLaw::p_epsilon(double eps) const {
    double m = 0.0;
    for (const auto& a : atoms_)
        if (a.at >= eps) m += a.weight;
    for (const auto& u : uniforms_) {
        const double lo = std::max(u.lo, eps);
        if (u.hi > lo) m += u.weight * (u.hi - lo) / (u.hi - u.lo);
    }
    return std::min(1.0, m);
}

double CouplingLaw::exceed_probability(double eps) const {
    double m = 0.0;
    for (const auto& a : atoms_)
        if (a.at > eps) m += a.weight;
    for (const auto& u : uniforms_) {
        const double lo = std::max(u.lo, eps);
        if (u.hi > lo) m += u.weight * (u.hi - lo) / (u.hi - u.lo);
    }
    return std::min(1.0, m);
}

double CouplingLaw::mass_below(double eps) const {
    double m = 0.0;
    for (const auto& a : atoms_)
        if (a.at < eps) m += a.weight;
    for (const auto& u : uniforms_) {
        const double hi = std::min(u.hi, eps);
        if (hi > u.lo) m += u.weight * (hi - u.lo) / (u.hi - u.lo);
    }
    return m;
}

double CouplingLaw::ac_mass() const {
    double m = 0.0;
    for (const auto& u : uniforms_) m += u.weight;
    return m;
}

double CouplingLaw::mean() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.weight * a.at;
    for (const auto& u : uniforms_) m += u.weight * 0.5 * (u.lo + u.hi);
    return m;
}

double CouplingLaw::second_moment() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.weight * a.at * a.at;
    for (const auto& u : uniforms_)
        m += u.weight * (u.hi * u.hi * u.hi - u.lo * u.lo * u.lo) / (3.0 * (u.hi - u.lo));
    return m;
}

double CouplingLaw::total_mass() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.weight;
    for (const auto& u : uniforms_) m += u.weight;
    return m;
}

double CouplingLaw::sample_from_uniform(double u) const {
    double c = 0.0;
    for (const auto& a : atoms_) {
        if (u < c + a.weight) return a.at;
        c += a.weight;
    }
    for (const auto& part : uniforms_) {
        if (u < c + part.weight) {
            const double frac = (u - c) / part.weight;
            return std::min(part.hi, part.lo + frac * (part.hi - part.lo));
        }
        c += part.weight;
    }
    // Rounding at the top of the cumulative weights.
    for (auto it = uniforms_.rbegin(); it != uniforms_.rend(); ++it)
        if (it->weight > 0) return it->hi;
    for (auto it = atoms_.rbegin(); it != atoms_.rend(); ++it)
        if (it->weight > 0) return it->at;
    return 0.0;
}

LawRule LawRule::constant(CouplingLaw law) {
    LawRule r;
    r.kind = Kind::Constant;
    r.base = {std::move(law)};
    return r;
}

LawRule LawRule::decaying_bernoulli(double scale, double tau, std::optional<CouplingLaw> amplitude) {
    require(scale >= 0.0, "decay scale must be >= 0");
    require(tau >= 0.0, "decay exponent must be >= 0");
    LawRule r;
    r.kind = Kind::DecayingBernoulli;
    r.scale = scale;
    r.tau = tau;
    if (amplitude) r.amplitude = {*amplitude};
    return r;
}

LawRule LawRule::by_shells(CouplingLaw fallback, std::vector<ShellLaw> shells) {
    LawRule r;
    r.kind = Kind::Shells;
    r.base = {std::move(fallback)};
    for (const auto& s : shells) require(s.r_min <= s.r_max, "shell law needs r_min <= r_max");
    r.shells = std::move(shells);
    return r;
}

LawRule LawRule::explicit_laws(std::vector<CouplingLaw> laws) {
    LawRule r;
    r.kind = Kind::PerSite;
    r.per_site = std::move(laws);
    return r;
}

CouplingLaw LawRule::law_at(const Point& site, std::size_t index) const {
    switch (kind) {
        case Kind::Constant: return base.at(0);
        case Kind::DecayingBernoulli: {
            const double r = norm(site);
            const double p = r == 0.0 ? 1.0 : std::min(1.0, scale * std::pow(r, -tau));
            if (amplitude.empty()) return CouplingLaw::bernoulli(p);
            return CouplingLaw::mixture({CouplingLaw(), amplitude.front()}, {1.0 - p, p});
        }
        case Kind::Shells: {
            const double r = norm(site);
            for (const auto& s : shells)
                if (r >= s.r_min && r <= s.r_max) return s.law;
            return base.at(0);
        }
        case Kind::PerSite:
            require(index < per_site.size(), "no law for site index " + std::to_string(index));
            return per_site[index];
    }
    return base.at(0);
}

// ---------------------------------------------------------------------------
// Background

Background Background::constant(double c) {
    Background b;
    b.kind = Kind::Constant;
    b.value = c;
    return b;
}

Background Background::periodic(double period, std::vector<double> values) {
    require(period > 0.0, "period must be > 0");
    require(!values.empty(), "periodic background needs values");
    Background b;
    b.kind = Kind::Periodic;
    b.period = period;
    b.values = std::move(values);
    return b;
}

double Background::operator()(const Point& x) const {
    switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::Constant: return value;
        case Kind::Periodic: {
            const auto m = static_cast<std::int64_t>(values.size());
            auto cell = static_cast<std::int64_t>(std::floor(x.at(0) * static_cast<double>(m) / period + 1e-9));
            cell %= m;
            if (cell < 0) cell += m;
            return values[static_cast<std::size_t>(cell)];
        }
    }
    return 0.0;
}

double Background::sup_abs() const {
    switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::Constant: return std::abs(value);
        case Kind::Periodic: {
            double m = 0.0;
            for (double v : values) m = std::max(m, std::abs(v));
            return m;
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Model

const SingleSitePotential& RandomPotentialModel::potential(std::size_t i) const {
    require(!potentials.empty(), "model has no single-site potential");
    if (potentials.size() == 1) return potentials.front();
    return potentials.at(i);
}

double RandomPotentialModel::rho() const {
    double r = 0.0;
    for (const auto& f : potentials) r = std::max(r, f.support_radius);
    return r;
}

double window_inner_radius(const geometry::RegionSet& window) {
    using namespace geometry;
    double best = 0.0;
    for (const auto& p : window.primitives()) {
        if (const auto* b = std::get_if<Ball>(&p)) {
            best = std::max(best, b->radius - norm(b->center));
        } else if (const auto* a = std::get_if<Annulus>(&p)) {
            if (a->inner == 0.0) best = std::max(best, a->outer);
        } else if (const auto* x = std::get_if<Box>(&p)) {
            double m = kInf;
            for (std::size_t k = 0; k < x->lo.size(); ++k) m = std::min({m, -x->lo[k], x->hi[k]});
            best = std::max(best, m);
        }
    }
    return std::max(0.0, best);
}

CouplingMap sample_couplings(const RandomPotentialModel& model, std::uint64_t seed,
                             const geometry::RegionSet& window) {
    require(window.dim() == model.dim(), "window dimension mismatch");
    const double bound = window.circumradius();
    require(std::isfinite(bound), "window must be bounded");
    CouplingMap map;
    map.dim = model.dim();
    map.seed = seed;
    map.window = window;
    map.covered_radius = std::min(window_inner_radius(window), model.sites.window_radius());
    for (std::size_t i : model.sites.with_norm_in(-1.0, bound)) {
        if (window.contains(model.sites.sites()[i], 0.0)) map.site_index.push_back(i);
    }
    std::sort(map.site_index.begin(), map.site_index.end());
    map.positions.resize(map.site_index.size());
    map.values.resize(map.site_index.size());
    parallel_for(map.site_index.size(), [&](std::size_t k) {
        const std::size_t i = map.site_index[k];
        map.positions[k] = model.sites.sites()[i];
        CounterRng rng(seed, model.sites.site_key(i));
        map.values[k] = model.law(i).sample(rng);
    });
    return map;
}

double p_epsilon(const CouplingLaw& law, double eps) {
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1]");
    return law.p_epsilon(eps);
}

double ac_mass(const CouplingLaw& law) { return law.ac_mass(); }

PotentialEvaluator::PotentialEvaluator(const RandomPotentialModel& model, const CouplingMap& couplings)
    : model_(&model),
      couplings_(&couplings),
      locator_(couplings.positions, std::max(1.0, model.rho())),
      rho_(model.rho()) {}

PotentialValue PotentialEvaluator::operator()(const Point& x, bool include_background) const {
    PotentialValue out;
    for (std::size_t k : locator_.near(x, rho_)) {
        const std::size_t i = couplings_->site_index[k];
        const double w = couplings_->values[k];
        if (w == 0.0) continue;
        Point off(x.size());
        for (std::size_t c = 0; c < x.size(); ++c) off[c] = x[c] - couplings_->positions[k][c];
        out.value += w * model_->potential(i)(off);
    }
    if (include_background) out.value += model_->background(x);
    out.truncated = norm(x) + rho_ > couplings_->covered_radius;
    return out;
}

PotentialValue evaluate_potential(const RandomPotentialModel& model, const CouplingMap& couplings,
                                  const Point& x, bool include_background) {
    return PotentialEvaluator(model, couplings)(x, include_background);
}

double second_moment_profile(const RandomPotentialModel& model, const Point& x) {
    double sum_m2 = 0.0;
    double sum_m1 = 0.0;
    double sum_m1_sq = 0.0;
    for (std::size_t i : model.sites.near(x, model.rho())) {
        Point off(x.size());
        for (std::size_t c = 0; c < x.size(); ++c) off[c] = x[c] - model.sites.sites()[i][c];
        const double f = model.potential(i)(off);
        if (f == 0.0) continue;
        const auto law = model.law(i);
        const double m1 = law.mean() * f;
        sum_m2 += law.second_moment() * f * f;
        sum_m1 += m1;
        sum_m1_sq += m1 * m1;
    }
    return std::sqrt(std::max(0.0, sum_m2 + sum_m1 * sum_m1 - sum_m1_sq));
}

DecayFit fit_second_moment_decay(const RandomPotentialModel& model, const Point& direction,
                                 const std::vector<double>& radii) {
    require(static_cast<int>(direction.size()) == model.dim(), "direction dimension mismatch");
    const double dn = norm(direction);
    require(dn > 0.0, "zero direction vector");
    DecayFit fit;
    std::vector<double> lx, ly;
    for (double R : radii) {
        Point probe(direction.size());
        for (std::size_t c = 0; c < probe.size(); ++c) probe[c] = direction[c] / dn * R;
        std::vector<std::size_t> cand;
        for (double search = 1.0; cand.empty() && search < 1e6; search *= 2) cand = model.sites.near(probe, search);
        if (cand.empty()) continue;
        std::size_t best = cand.front();
        for (auto i : cand)
            if (distance(model.sites.sites()[i], probe) < distance(model.sites.sites()[best], probe)) best = i;
        const Point& site = model.sites.sites()[best];
        const double w = second_moment_profile(model, site);
        fit.radii.push_back(norm(site));
        fit.values.push_back(w);
        if (w > 0.0) {
            lx.push_back(std::log1p(norm(site)));
            ly.push_back(std::log(w));
        }
    }
    auto [slope, r2] = linear_fit(lx, ly);
    fit.exponent = -slope;
    fit.quality = r2;
    fit.exceeds_one = lx.size() >= 2 && fit.exponent > 1.0;
    return fit;
}

// ---------------------------------------------------------------------------

QuasiDimensionReport quasi_dimension_bound(const SiteSet& sites, double m, double r_max) {
    require(m >= 1.0, "quasi-dimension m must be >= 1");
    require(r_max >= 1.0, "R_max must be >= 1");
    if (r_max + 1.0 > sites.window_radius()) {
        throw WindowError("R_max + 1 exceeds the site window radius");
    }
    QuasiDimensionReport rep;
    std::vector<double> lx, ly;
    for (double R = 0.0; R <= r_max + 1e-12; R += 0.5) {
        const std::size_t count = sites.count_within(R + 1.0) - sites.count_within(R);
        const double normalized = static_cast<double>(count) / std::max(std::pow(R, m - 1.0), 1.0);
        rep.radii.push_back(R);
        rep.counts.push_back(count);
        rep.constant = std::max(rep.constant, normalized);
        if (R >= 0.5 * r_max && R >= 1.0) {
            lx.push_back(std::log(R));
            ly.push_back(std::log1p(normalized));
        }
    }
    rep.growth_slope = linear_fit(lx, ly).first;
    rep.pass = rep.growth_slope < 0.25;

    std::vector<double> cx, cy;
    for (double R = 1.0; R <= r_max + 1e-12; R += 0.5) {
        const double normalized = static_cast<double>(sites.count_within(R)) / R;
        rep.cumulative_constant = std::max(rep.cumulative_constant, normalized);
        if (R >= 0.5 * r_max) {
            cx.push_back(std::log(R));
            cy.push_back(std::log1p(normalized));
        }
    }
    rep.cumulative_slope = linear_fit(cx, cy).first;
    rep.cumulative_pass = rep.cumulative_slope < 0.25;
    return rep;
}

// ---------------------------------------------------------------------------

bool AssumptionReport::all_passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return !e.checked || e.passed; });
}

const AssumptionEntry& AssumptionReport::entry(const std::string& id) const {
    for (const auto& e : entries)
        if (e.id == id) return e;
    throw InvalidArgument("no assumption entry " + id);
}

namespace {

// sup over centers of ∫_{B(x,1)} |V0|^p, for backgrounds depending on x_0 only.
double background_local_lp(const Background& v0, double p, int d) {
    const double vd = unit_ball_volume(d);
    switch (v0.kind) {
        case Background::Kind::Zero: return 0.0;
        case Background::Kind::Constant: return std::pow(std::abs(v0.value), p) * vd;
        case Background::Kind::Periodic: break;
    }
    const double slice = d >= 2 ? unit_ball_volume(d - 1) : 1.0;
    double best = 0.0;
    constexpr int centers = 64;
    constexpr int steps = 4000;
    for (int c = 0; c < centers; ++c) {
        const double x0 = v0.period * c / centers;
        double acc = 0.0;
        for (int k = 0; k < steps; ++k) {
            const double t = -1.0 + (k + 0.5) * 2.0 / steps;
            const double weight = d >= 2 ? slice * std::pow(1.0 - t * t, 0.5 * (d - 1)) : 1.0;
            Point x(d, 0.0);
            x[0] = x0 + t;
            acc += std::pow(std::abs(v0(x)), p) * weight * (2.0 / steps);
        }
        best = std::max(best, acc);
    }
    return best;
}

bool potentials_equal(const SingleSitePotential& a, const SingleSitePotential& b) {
    return a.profile == b.profile && a.height == b.height && a.radius == b.radius && a.table_r == b.table_r &&
           a.table_value == b.table_value && a.support_radius == b.support_radius &&
           a.p_exponent == b.p_exponent && a.norm_bound == b.norm_bound;
}

}  // namespace

AssumptionReport validate_assumptions(const RandomPotentialModel& model) {
    AssumptionReport rep;
    const int d = model.dim();
    std::ostringstream msg;

    // (A1)
    {
        AssumptionEntry e{"A1", true, true, ""};
        double p = 2.0;
        for (const auto& f : model.potentials) p = std::max(p, f.p_exponent);
        const bool exponent_ok = d <= 3 ? p >= 2.0 : p > 0.5 * d;
        const double local = background_local_lp(model.background, p, d);
        e.passed = exponent_ok && std::isfinite(local);
        std::ostringstream s;
        s << "p=" << p << (exponent_ok ? " admissible" : " inadmissible for d=" + std::to_string(d))
          << "; sup_x int_{B(x,1)} |V0|^p = " << local;
        e.detail = s.str();
        rep.entries.push_back(e);
    }
    // (A2)
    {
        AssumptionEntry e{"A2", true, true, ""};
        const auto sep = model.sites.separation();
        rep.r_sigma = sep.r_sigma;
        e.passed = sep.r_sigma > 0.0;
        std::ostringstream s;
        s << "r_sigma=" << sep.r_sigma;
        if (!e.passed) {
            s << " witness sites " << sep.first << " and " << sep.second;
        }
        e.detail = s.str();
        rep.entries.push_back(e);
        AssumptionEntry g{"generator", true, model.sites.generator_consistent(),
                          "generator " + to_string(model.sites.generator())};
        rep.entries.push_back(g);
    }
    // (A3)
    {
        AssumptionEntry e{"A3", true, true, ""};
        std::ostringstream s;
        std::vector<const SingleSitePotential*> distinct;
        for (const auto& f : model.potentials) {
            if (std::none_of(distinct.begin(), distinct.end(), [&](auto* g) { return potentials_equal(*g, f); }))
                distinct.push_back(&f);
        }
        for (const auto* f : distinct) {
            const double supp = f->actual_support_radius();
            const double lp = f->lp_norm(f->p_exponent, d);
            if (supp > f->support_radius + 1e-12) {
                e.passed = false;
                s << "support radius " << supp << " exceeds declared rho=" << f->support_radius << "; ";
            }
            if (lp > f->norm_bound * (1.0 + 1e-9) + 1e-12) {
                e.passed = false;
                s << "||f||_p=" << lp << " exceeds M=" << f->norm_bound << "; ";
            }
        }
        if (e.passed) s << "supports and L^p norms within declared bounds";
        e.detail = s.str();
        rep.entries.push_back(e);
    }
    // (A4)
    {
        AssumptionEntry e{"A4", true, true, "laws supported in [0,1] with unit mass"};
        for (std::size_t i = 0; i < model.sites.size(); ++i) {
            try {
                const auto law = model.law(i);
                if (std::abs(law.total_mass() - 1.0) > 1e-12) throw InvalidArgument("mass");
            } catch (const InvalidArgument& err) {
                e.passed = false;
                e.detail = "site " + std::to_string(i) + ": " + err.what();
                break;
            }
        }
        rep.entries.push_back(e);
    }
    // (A5)
    {
        AssumptionEntry e{"A5", false, false, "no distinguished site"};
        AssumptionEntry integ{"A5-integrability", false, false, "no distinguished site"};
        if (model.distinguished_site) {
            const std::size_t k = *model.distinguished_site;
            e.checked = true;
            integ.checked = true;
            std::ostringstream s;
            if (k >= model.sites.size()) {
                e.passed = false;
                s << "distinguished site index " << k << " out of range";
            } else {
                const auto& f = model.potential(k);
                bool ok = f.sign != Sign::Indefinite;
                const double supp = std::max(f.actual_support_radius(), f.support_radius);
                for (int j = 0; j <= 2000 && ok; ++j) {
                    const double v = f.at_radius(supp * j / 2000.0);
                    if (f.sign == Sign::Nonnegative && v < 0) ok = false;
                    if (f.sign == Sign::Nonpositive && v > 0) ok = false;
                }
                if (!ok) s << "profile not of the declared definite sign; ";
                if (!f.lower_bump) {
                    ok = false;
                    s << "no lower bump |f| >= c chi_{B(0,s)} declared; ";
                } else {
                    const auto [c, rad] = *f.lower_bump;
                    if (c <= 0 || rad <= 0) {
                        ok = false;
                        s << "lower bump needs c > 0 and s > 0; ";
                    }
                    for (int j = 0; j <= 2000 && ok; ++j) {
                        if (std::abs(f.at_radius(rad * j / 2000.0)) < c) {
                            ok = false;
                            s << "|f| < c inside B(0,s); ";
                        }
                    }
                }
                if (!std::isfinite(f.sup_abs())) {
                    ok = false;
                    s << "profile unbounded; ";
                }
                e.passed = ok;
                if (ok) s << "site " << k << " has a definite-sign bounded profile with lower bump";
                const double q = 0.5 * (d + 1);
                const bool integ_ok = std::isfinite(f.lp_norm(std::max(1.0, q), d)) &&
                                      std::isfinite(background_local_lp(model.background, std::max(1.0, q), d));
                integ.passed = integ_ok;
                integ.detail = "V0, f_i in L^{(d+1)/2}_loc: " + std::string(integ_ok ? "yes" : "no");
            }
            e.detail = s.str();
        }
        rep.entries.push_back(e);
        rep.entries.push_back(integ);
    }
    return rep;
}

}  // namespace sparseloc::models
