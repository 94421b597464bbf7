#include "sparseloc/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

namespace sparseloc::certify {

namespace {

using geometry::DecompositionKind;
using geometry::TailRule;
constexpr double kInf = std::numeric_limits<double>::infinity();

void require_window(const CouplingMap& c, double radius) {
    if (radius > c.covered_radius + 1e-9) {
        std::ostringstream os;
        os << "couplings cover B(0," << c.covered_radius << ") but radius " << radius << " is needed";
        throw WindowError(os.str());
    }
}

// Norms of sampled sites in (lo, hi] that spoil eps-freeness.
std::vector<double> spoiling_norms(const CouplingMap& c, double eps, double lo, double hi,
                                   std::optional<std::size_t> excluded) {
    std::vector<double> out;
    for (std::size_t k = 0; k < c.size(); ++k) {
        if (c.values[k] <= eps) continue;
        if (excluded && c.site_index[k] == *excluded) continue;
        const double t = norm(c.positions[k]);
        if (t > lo && t <= hi) out.push_back(t);
    }
    return out;
}

// Forbidden r-intervals [t - w, t), sorted and merged.
std::vector<std::pair<double, double>> forbidden(std::vector<double> norms, double width) {
    std::sort(norms.begin(), norms.end());
    std::vector<std::pair<double, double>> out;
    for (double t : norms) {
        const double lo = t - width;
        if (!out.empty() && lo <= out.back().second) {
            out.back().second = std::max(out.back().second, t);
        } else {
            out.emplace_back(lo, t);
        }
    }
    return out;
}

double log_sum_exp(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double term_value(double size, double delta, double gamma) {
    if (size == 0.0 || delta == kInf) return 0.0;
    return size * std::exp(-gamma * delta);
}

}  // namespace

bool is_epsilon_free(const CouplingMap& couplings, const RegionSet& region, double eps) {
    if (region.empty()) return true;
    require_window(couplings, region.circumradius());
    for (std::size_t k = 0; k < couplings.size(); ++k) {
        if (couplings.values[k] > eps && region.contains(couplings.positions[k], 0.0)) return false;
    }
    return true;
}

std::vector<std::pair<double, double>> free_radius_intervals(std::vector<double> norms, double lo, double hi,
                                                             double width) {
    std::vector<std::pair<double, double>> out;
    if (hi < lo) return out;
    double r = lo;
    for (auto [flo, fhi] : forbidden(std::move(norms), width)) {
        if (fhi <= r) continue;
        if (flo > hi) break;
        if (flo > r) out.emplace_back(r, flo);
        r = std::max(r, fhi);
        if (r > hi) break;
    }
    if (r <= hi) out.emplace_back(r, hi);
    return out;
}

std::optional<double> smallest_free_radius(std::vector<double> norms, double lo, double hi, double width) {
    auto iv = free_radius_intervals(std::move(norms), lo, hi, width);
    if (iv.empty()) return std::nullopt;
    return iv.front().first;
}

FreeAnnulusRecord find_free_subannulus(const CouplingMap& couplings, double eps, double a, int n,
                                       std::optional<std::size_t> excluded) {
    require(a > 1.0, "growth ratio a must be > 1");
    require(n >= 1, "width n must be >= 1");
    FreeAnnulusRecord rec;
    rec.n = n;
    rec.width = n;
    rec.host_lo = std::pow(a, n);
    rec.host_hi = std::pow(a, n + 1);
    const double hi = rec.host_hi - n;
    if (hi < rec.host_lo) {
        rec.degenerate = true;
        return rec;
    }
    require_window(couplings, rec.host_hi);
    auto r = smallest_free_radius(spoiling_norms(couplings, eps, rec.host_lo, rec.host_hi, excluded), rec.host_lo,
                                  hi, n);
    if (r) {
        rec.free = true;
        rec.r_n = *r;
    }
    return rec;
}

CouplingMap truncate_couplings(const CouplingMap& couplings, double eps) {
    CouplingMap out = couplings;
    for (auto& v : out.values) v = std::min(v, eps);
    return out;
}

RegionSet difference_support(const RandomPotentialModel& model, const CouplingMap& couplings, double eps,
                             std::optional<std::size_t> excluded) {
    RegionSet s(model.dim());
    for (std::size_t k = 0; k < couplings.size(); ++k) {
        if (couplings.values[k] <= eps) continue;
        if (excluded && couplings.site_index[k] == *excluded) continue;
        s.add(geometry::Ball{couplings.positions[k], model.potential(couplings.site_index[k]).support_radius});
    }
    return s;
}

int smallest_integer_above(double x) {
    require(x >= 0.0 && std::isfinite(x), "expected a finite nonnegative value");
    return static_cast<int>(std::floor(x)) + 1;
}

int ell_sparse(double gamma, int d) {
    require(gamma > 0.0, "gamma must be > 0");
    return smallest_integer_above(2.0 * (d - 1) / gamma);
}

int ell_pp(double gamma, int d) {
    require(gamma > 0.0, "gamma must be > 0");
    return smallest_integer_above(2.0 * d / gamma);
}

int first_nondegenerate_n(double a) {
    require(a > 1.0, "growth ratio a must be > 1");
    for (int n = 1; n < 100000; ++n) {
        if (std::pow(a, n) * (a - 1.0) >= n) return n;
    }
    throw NumericalError("no nondegenerate scale below n = 100000");
}

int cheese_threshold(double a, double alpha) {
    require(a > 1.0 && alpha > 1.0, "cheese threshold needs a > 1 and alpha > 1");
    // n log a - log 2 - (2α-1) log n is eventually increasing; scan past its minimum.
    int last_fail = 0;
    const int stop = static_cast<int>(std::ceil(4.0 * (2 * alpha - 1) / std::log(a))) + 100;
    for (int n = 1; n <= stop; ++n) {
        if (n * std::log(a) < std::log(2.0) + (2 * alpha - 1) * std::log(static_cast<double>(n))) last_fail = n;
    }
    return last_fail + 1;
}

double quasi1d_threshold(double delta, double c) {
    require(delta >= 0.0 && delta < 1.0, "delta must lie in [0,1)");
    require(c >= 1.0, "quasi-1D constant must be >= 1");
    return std::pow(1.0 - delta, -c);
}

namespace {

template <class Rec>
void scan_scales(const CouplingMap& couplings, double eps, double a, int n_min, int n_max,
                 std::optional<std::size_t> excluded, std::vector<FreeAnnulusRecord>& annuli, std::vector<Gap>& gaps,
                 Rec&& on_free) {
    require(n_min >= 1 && n_min <= n_max, "need 1 <= n_min <= n_max");
    for (int n = n_min; n <= n_max; ++n) {
        auto rec = find_free_subannulus(couplings, eps, a, n, excluded);
        annuli.push_back(rec);
        if (rec.degenerate) {
            gaps.push_back({n, "degenerate-range"});
        } else if (!rec.free) {
            gaps.push_back({n, "no-free-annulus"});
        } else {
            on_free(rec);
        }
    }
}

}  // namespace

SparseConstruction build_decomposition_sparse(const RandomPotentialModel& model, const CouplingMap& couplings,
                                              double eps, double gamma, int n_min, int n_max,
                                              std::optional<double> a) {
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0,1]");
    const int d = model.dim();
    SparseConstruction out;
    out.ell = ell_sparse(gamma, d);
    out.a = a.value_or(1.0 + 1.0 / out.ell);
    out.rho = model.rho();
    auto& dec = out.decomposition;
    dec.dim = d;
    dec.kind = DecompositionKind::SphereShells;
    dec.gamma = gamma;
    dec.tail = TailRule{out.a, out.rho, 0.0, 0.0};
    scan_scales(couplings, eps, out.a, n_min, n_max, std::nullopt, out.annuli, out.gaps, [&](const FreeAnnulusRecord& r) {
        dec.members.push_back({r.n, "sphere", geometry::make_sphere(Point(d, 0.0), r.r_n + 0.5 * r.n)});
    });
    return out;
}

ShellConstruction build_shell_sequence_pp(const RandomPotentialModel& model, const CouplingMap& couplings, double eps,
                                          double gamma, int n_min, int n_max,
                                          std::optional<std::size_t> distinguished, std::optional<double> a) {
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0,1]");
    const int d = model.dim();
    ShellConstruction out;
    out.ell = ell_pp(gamma, d);
    out.a = a.value_or(1.0 + 1.0 / out.ell);
    out.rho = model.rho();
    out.excluded = distinguished ? distinguished : model.distinguished_site;
    out.shells.dim = d;
    out.shells.tail = TailRule{out.a, out.rho, 0.0, 0.0};
    scan_scales(couplings, eps, out.a, n_min, n_max, out.excluded, out.annuli, out.gaps, [&](const FreeAnnulusRecord& r) {
        out.shells.n.push_back(r.n);
        out.shells.radii.push_back(r.r_n + 0.5 * r.n);
    });
    return out;
}

Quasi1DConstruction build_decomposition_quasi1d(const RandomPotentialModel& model, const CouplingMap& couplings,
                                                double eps, double gamma, double alpha, double a, int n_min,
                                                int n_max) {
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0,1]");
    require(alpha > 1.0, "alpha must be > 1");
    require(a > 1.0, "growth ratio a must be > 1");
    const int d = model.dim();
    Quasi1DConstruction out;
    out.a = a;
    out.alpha = alpha;
    out.rho = model.rho();

    const double count_radius = std::min(couplings.covered_radius, model.sites.window_radius()) - 1.0;
    require(count_radius >= 2.0, "window too small for the quasi-1D count test");
    const auto q = models::quasi_dimension_bound(model.sites, 1.0, count_radius);
    if (!q.pass) throw InvalidArgument("site set fails the quasi-1D count test; cap/cheese construction refused");
    out.quasi_constant = std::max(1.0, q.constant);
    for (std::size_t k = 0; k < couplings.size(); ++k)
        out.delta = std::max(out.delta, model.law(couplings.site_index[k]).p_epsilon(eps));
    if (out.delta >= 1.0) {
        out.threshold_a = kInf;
        out.warnings.push_back("sup p_i(eps) = 1: no growth ratio satisfies the summability condition");
    } else {
        out.threshold_a = quasi1d_threshold(out.delta, out.quasi_constant);
        if (a <= out.threshold_a) {
            std::ostringstream os;
            os << "a = " << a << " is not above the threshold " << out.threshold_a;
            out.warnings.push_back(os.str());
        }
    }
    out.cheese_threshold_n = cheese_threshold(a, alpha);

    auto& dec = out.decomposition;
    dec.dim = d;
    dec.kind = DecompositionKind::CapCheese;
    dec.gamma = gamma;
    dec.tail = TailRule{a, out.rho, alpha, out.quasi_constant};
    const RegionSet diff = difference_support(model, couplings, eps);

    scan_scales(couplings, eps, a, n_min, n_max, std::nullopt, out.annuli, out.gaps, [&](const FreeAnnulusRecord& r) {
        const int n = r.n;
        const double na = std::pow(static_cast<double>(n), alpha);
        const double R = r.r_n + 0.5 * n;
        require_window(couplings, r.r_n + n + na);
        std::vector<Point> dirs;
        std::size_t points = 0;
        for (std::size_t k = 0; k < couplings.size(); ++k) {
            const double t = norm(couplings.positions[k]);
            const bool inner = t > r.r_n - na && t <= r.r_n;
            const bool outer = t > r.r_n + n && t <= r.r_n + n + na;
            if (!inner && !outer) continue;
            ++points;
            // the origin is at distance R from every point of S_n; it has no cap direction
            if (t == 0.0) continue;
            Point u = couplings.positions[k];
            for (auto& x : u) x /= t;
            const bool seen = std::any_of(dirs.begin(), dirs.end(), [&](const Point& v) { return distance(u, v) < 1e-12; });
            if (!seen) dirs.push_back(u);
        }
        std::sort(dirs.begin(), dirs.end());
        geometry::PerforatedSphere cheese{R, d, {}, {}};
        for (const auto& u : dirs) {
            dec.members.push_back({n, "cap", geometry::spherical_cap(R, u, na)});
            cheese.hole_directions.push_back(u);
            cheese.hole_radii.push_back(na);
        }
        RegionSet cheese_set(d);
        if (dirs.empty()) {
            cheese_set.add(geometry::Sphere{Point(d, 0.0), R});
        } else {
            cheese_set.add(cheese);
        }
        CapCount cc;
        cc.n = n;
        cc.points = points;
        cc.caps = dirs.size();
        cc.member_bound = 2.0 * na + 2.0;
        cc.point_bound = 2.0 * out.quasi_constant * (na + 1.0);
        cc.cheese_bound_applies = R >= 2.0 * std::pow(static_cast<double>(n), 2 * alpha - 1);
        cc.cheese_lower_bound = na - out.rho;
        const auto dist = geometry::distance_between(diff, cheese_set);
        cc.cheese_distance = dist.value - dist.tolerance;
        out.counts.push_back(cc);
        dec.members.push_back({n, "cheese", std::move(cheese_set)});
    });
    return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::Certified: return "certified";
        case Verdict::NotCertified: return "not-certified";
        case Verdict::Inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

double log_envelope(const std::string& form, DecompositionKind kind, const TailRule& tail, int d, double gamma, int n,
                    const std::string& role) {
    const double a = tail.growth;
    const double nd = n;
    const double cd = geometry::surface_area_constant(d);
    // log of R_max = a^(n+1) - n/2 (R_n = r_n + n/2), kept in log space: a^(n+1) overflows long
    // before the tail sums settle
    const double log_top = (nd + 1) * std::log(a);
    const double shrink = 0.5 * nd * std::exp(-log_top);
    const double log_r_max = shrink < 1.0 ? log_top + std::log1p(-shrink) : -kInf;
    // log(1 + x^k) for x = e^lx
    auto log1p_pow = [](double lx, double k) {
        const double v = k * lx;
        return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    };
    const double delta_lb = 0.5 * nd - tail.rho;
    if (form == "pp") {
        // |A_{n+1} \ A_{n-1}| <= V_d R_{n+1}^d <= V_d a^((n+2)d)
        return std::log(unit_ball_volume(d)) + (nd + 2) * d * std::log(a) - gamma * delta_lb;
    }
    if (kind == DecompositionKind::CapCheese) {
        const double na = std::pow(nd, tail.alpha);
        if (role == "cap") return std::log(cd * (std::pow(2 * na, d) + 1)) - gamma * delta_lb;
        double delta = delta_lb;
        if (n >= cheese_threshold(a, tail.alpha)) delta = std::max(delta, na - tail.rho);
        return std::log(cd) + log1p_pow(std::log(2.0) + log_r_max, d) - gamma * delta;
    }
    // sphere: σ(∂B(0,R)) <= d V_d 2^d (R+1)^(d-1)
    return std::log(d * unit_ball_volume(d)) + d * std::log(2.0) + (d - 1) * log1p_pow(log_r_max, 1) - gamma * delta_lb;
}

namespace {

// Log of the summed envelope at scale n (all members at that scale).
double log_envelope_at(const std::string& form, DecompositionKind kind, const TailRule& tail, int d, double gamma,
                       int n) {
    if (form != "pp" && kind == DecompositionKind::CapCheese) {
        const double caps = 2.0 * std::max(1.0, tail.cap_count_constant) * (std::pow(double(n), tail.alpha) + 1);
        return log_sum_exp(std::log(caps) + log_envelope(form, kind, tail, d, gamma, n, "cap"),
                           log_envelope(form, kind, tail, d, gamma, n, "cheese"));
    }
    return log_envelope(form, kind, tail, d, gamma, n, "");
}

double limiting_ratio(const std::string& form, DecompositionKind kind, const TailRule& tail, int d, double gamma) {
    const double la = std::log(tail.growth);
    if (form == "pp") return std::exp(d * la - gamma / 2);
    if (kind == DecompositionKind::CapCheese) return std::exp(-gamma / 2);
    return std::exp((d - 1) * la - gamma / 2);
}

// Σ_{n > N} envelope(n): explicit sum until the ratio settles below q < 1,
// then a geometric remainder. +inf when the limiting ratio is >= 1.
double tail_sum(const std::string& form, DecompositionKind kind, const TailRule& tail, int d, double gamma, int N,
                double q_lim) {
    if (q_lim >= 1.0) return kInf;
    const int floor_n = kind == DecompositionKind::CapCheese ? std::max(N + 1, cheese_threshold(tail.growth, tail.alpha))
                                                               : N + 1;
    double log_acc = -kInf;
    double prev = log_envelope_at(form, kind, tail, d, gamma, N + 1);
    log_acc = prev;
    for (int n = N + 2; n < N + 200000; ++n) {
        const double cur = log_envelope_at(form, kind, tail, d, gamma, n);
        log_acc = log_sum_exp(log_acc, cur);
        const double ratio = std::exp(cur - prev);
        // Envelope ratios are monotone in n past floor_n; once below 1 and
        // within reach of the limit, bound the rest geometrically.
        if (n > floor_n + 2 && ratio < 1.0 && (ratio <= q_lim * (1 + 1e-6) || n > N + 5000)) {
            const double q = std::max(ratio, q_lim);
            if (q < 1.0) return std::exp(log_sum_exp(log_acc, cur + std::log(q / (1 - q))));
        }
        if (cur < -745.0 && n > floor_n + 2 && ratio < 1.0) return std::exp(log_acc);
        prev = cur;
    }
    return kInf;
}

}  // namespace

Certificate certify_terms(std::string form, int dim, DecompositionKind kind, double gamma,
                          std::vector<TermRecord> terms, const std::optional<TailRule>& tail, int k) {
    require(gamma > 0.0, "gamma must be > 0");
    Certificate c;
    c.form = std::move(form);
    c.dim = dim;
    c.kind = kind;
    c.gamma = gamma;
    c.k = k;
    c.has_tail_rule = tail.has_value();
    c.terms = std::move(terms);
    for (auto& t : c.terms) {
        t.term = term_value(t.size, t.delta, gamma);
        if (tail) t.envelope = std::exp(log_envelope(c.form, kind, *tail, dim, gamma, t.n, t.role));
        c.partial_sum += t.term;
    }
    if (c.terms.empty()) {
        c.verdict = Verdict::Inconclusive;
        c.reason = "no terms";
        return c;
    }
    for (const auto& t : c.terms) {
        if (!(t.delta > 0.0)) {
            c.verdict = Verdict::NotCertified;
            c.reason = "member meets the difference support";
            std::ostringstream os;
            os << "n=" << t.n << " role=" << t.role << " delta=" << t.delta;
            c.witness = os.str();
            c.tail_bound = kInf;
            return c;
        }
    }

    // per-n sums, in n order
    std::map<int, double> by_n;
    std::map<int, double> delta_min;
    for (const auto& t : c.terms) {
        by_n[t.n] += t.term;
        auto it = delta_min.find(t.n);
        delta_min[t.n] = it == delta_min.end() ? t.delta : std::min(it->second, t.delta);
    }
    std::vector<int> ns;
    std::vector<double> sums, deltas;
    for (auto [n, s] : by_n) {
        ns.push_back(n);
        sums.push_back(s);
        deltas.push_back(delta_min[n]);
    }
    const std::size_t m = sums.size();
    const std::size_t first = m > static_cast<std::size_t>(k) ? m - static_cast<std::size_t>(k) - 1 : 0;
    double q = 0.0;
    for (std::size_t j = first + 1; j < m; ++j) {
        if (sums[j] == 0.0) continue;
        q = std::max(q, sums[j - 1] == 0.0 ? kInf : sums[j] / sums[j - 1]);
    }
    c.observed_ratio = q;
    const bool growing = m >= 2 && sums[m - 1] > sums[first];

    // δ trend: suffix minima must rise (or all infinite)
    std::vector<double> suffix(m);
    for (std::size_t j = m; j-- > 0;) suffix[j] = j + 1 < m ? std::min(deltas[j], suffix[j + 1]) : deltas[j];
    const bool all_inf = std::all_of(deltas.begin(), deltas.end(), [](double v) { return v == kInf; });
    const bool delta_rising = all_inf || (m >= 2 && suffix[m - 1] > suffix[0]);

    if (tail) {
        c.tail_ratio = limiting_ratio(c.form, kind, *tail, dim, gamma);
        for (const auto& t : c.terms) {
            if (t.term > t.envelope * (1 + 1e-9) + 1e-300) {
                c.verdict = Verdict::Inconclusive;
                c.reason = "tail rule does not dominate a computed term";
                std::ostringstream os;
                os << "n=" << t.n << " role=" << t.role << " term=" << t.term << " envelope=" << t.envelope;
                c.witness = os.str();
                c.tail_bound = kInf;
                return c;
            }
        }
        c.tail_bound = tail_sum(c.form, kind, *tail, dim, gamma, ns.back(), c.tail_ratio);
        if (c.tail_ratio < 1.0 && std::isfinite(c.tail_bound)) {
            c.verdict = Verdict::Certified;
            c.reason = "terms dominated by a summable tail envelope";
        } else if (growing && q >= 1.0) {
            c.verdict = Verdict::NotCertified;
            c.reason = "terms grow and the tail envelope ratio is >= 1";
        } else {
            c.verdict = Verdict::Inconclusive;
            c.reason = "tail envelope ratio is >= 1";
        }
        return c;
    }

    if (m < static_cast<std::size_t>(k) + 1) {
        c.verdict = Verdict::Inconclusive;
        c.reason = "fewer than k+1 scales and no tail rule";
        c.tail_bound = kInf;
        return c;
    }
    if (q < 1.0 && delta_rising) {
        c.verdict = Verdict::Certified;
        c.reason = "geometric ratio test over the last k scales";
        c.tail_bound = sums[m - 1] * q / (1.0 - q);
    } else if (growing && q >= 1.0) {
        c.verdict = Verdict::NotCertified;
        c.reason = "terms grow over the last k scales";
        c.tail_bound = kInf;
    } else {
        c.verdict = Verdict::Inconclusive;
        c.reason = delta_rising ? "ratio test inconclusive" : "distances do not increase";
        c.tail_bound = kInf;
    }
    return c;
}

Certificate certify_ac(const geometry::TotalDecomposition& dec, const RegionSet& diff_support, double gamma,
                       const CertifyOptions& opts) {
    require(gamma > 0.0, "gamma must be > 0");
    std::vector<TermRecord> terms(dec.members.size());
    const double cd = geometry::surface_area_constant(dec.dim);
    parallel_for(dec.members.size(), [&](std::size_t j) {
        const auto& mem = dec.members[j];
        TermRecord t;
        t.n = mem.n;
        t.role = mem.role;
        const auto dist = geometry::distance_between(diff_support, mem.set);
        t.delta = dist.value == kInf ? kInf : dist.value - dist.tolerance;
        if (dec.kind == DecompositionKind::CapCheese) {
            t.size = cd * (std::pow(mem.set.diameter(), dec.dim) + 1);
            t.symbolic = true;
        } else {
            const auto s = geometry::generalized_surface_area(mem.set, opts.resolution);
            t.size = s.sigma;
            t.size_error = s.error;
        }
        terms[j] = t;
    });
    return certify_terms("ac", dec.dim, dec.kind, gamma, std::move(terms), dec.tail, opts.k);
}

Certificate certify_pp(const geometry::ShellSequence& shells, const RegionSet& diff_support, double gamma,
                       const CertifyOptions& opts) {
    require(gamma > 0.0, "gamma must be > 0");
    require(shells.radii.size() == shells.n.size(), "shell indices and radii must match");
    const int d = shells.dim;
    const double vd = unit_ball_volume(d);
    const std::size_t count = shells.radii.size();
    std::vector<TermRecord> terms(count > 0 ? count - 1 : 0);
    parallel_for(terms.size(), [&](std::size_t j) {
        const double r = shells.radii[j];
        const double prev = j > 0 ? shells.radii[j - 1] : 0.0;
        const double next = shells.radii[j + 1];
        TermRecord t;
        t.n = shells.n[j];
        t.role = "shell";
        const auto dist = geometry::distance_between(diff_support, geometry::make_sphere(Point(d, 0.0), r));
        double spacing = next - r;
        if (j > 0) spacing = std::min(spacing, r - prev);
        const double support = dist.value == kInf ? kInf : dist.value - dist.tolerance;
        t.delta = std::min(support, 0.5 * spacing);
        t.size = vd * (std::pow(next, d) - std::pow(prev, d));
        terms[j] = t;
    });
    return certify_terms("pp", d, DecompositionKind::SphereShells, gamma, std::move(terms), shells.tail, opts.k);
}

std::string certificate_to_jsonl(const Certificate& c) {
    using json = nlohmann::json;
    auto num = [](double v) -> json {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        return v;
    };
    std::ostringstream os;
    for (const auto& t : c.terms) {
        json j{{"record", "term"}, {"n", t.n},         {"role", t.role},         {"delta", num(t.delta)},
               {"size", t.size},   {"size_error", t.size_error}, {"symbolic", t.symbolic}, {"term", t.term},
               {"envelope", num(t.envelope)}};
        os << j.dump() << "\n";
    }
    json s{{"record", "summary"},
           {"form", c.form},
           {"dim", c.dim},
           {"kind", geometry::to_string(c.kind)},
           {"gamma", c.gamma},
           {"partial_sum", c.partial_sum},
           {"observed_ratio", num(c.observed_ratio)},
           {"tail_ratio", c.tail_ratio},
           {"tail_bound", num(c.tail_bound)},
           {"k", c.k},
           {"tail_rule", c.has_tail_rule},
           {"verdict", to_string(c.verdict)},
           {"reason", c.reason},
           {"witness", c.witness}};
    os << s.dump() << "\n";
    return os.str();
}

std::string certificate_to_csv(const Certificate& c) {
    std::ostringstream os;
    os.precision(17);
    os << "n,role,delta,sigma,term\n";
    for (const auto& t : c.terms) os << t.n << "," << t.role << "," << t.delta << "," << t.size << "," << t.term << "\n";
    return os.str();
}

}  // namespace sparseloc::certify
