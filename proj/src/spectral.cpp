#include "sparseloc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <lapacke.h>

#include "sparseloc/rng.hpp"

namespace sparseloc::spectral {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kDenseLimit = 3000;
constexpr std::size_t kTridiagonalLimit = 6000;
constexpr std::size_t kWindowChunk = 60;

using SpMat = Eigen::SparseMatrix<double>;

SpMat shifted_matrix(const GridOperator& op, double shift) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(op.size() * (1 + 2 * op.dim));
    for (std::size_t k = 0; k < op.size(); ++k) {
        t.emplace_back(int(k), int(k), op.stencil_diagonal() + op.potential[k] - shift);
        for (std::size_t j : op.neighbors(k)) t.emplace_back(int(k), int(j), op.stencil_offdiagonal());
    }
    SpMat m(int(op.size()), int(op.size()));
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

Eigen::MatrixXd dense_matrix(const GridOperator& op) {
    const auto n = Eigen::Index(op.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < op.size(); ++k) {
        m(Eigen::Index(k), Eigen::Index(k)) = op.stencil_diagonal() + op.potential[k];
        for (std::size_t j : op.neighbors(k)) m(Eigen::Index(k), Eigen::Index(j)) = op.stencil_offdiagonal();
    }
    return m;
}

double residual(const GridOperator& op, const std::vector<double>& v, double lambda) {
    auto hv = op.apply(v);
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) s += (hv[k] - lambda * v[k]) * (hv[k] - lambda * v[k]);
    return std::sqrt(s);
}

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
    std::vector<double> out(std::size_t(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[std::size_t(i)] = m(i, j);
    return out;
}

bool direct_path(const GridOperator& op) {
    return (op.dim == 1 && op.size() <= kTridiagonalLimit) || op.size() < kDenseLimit;
}

SpectralWindowResult direct_solve(const GridOperator& op, bool with_vectors) {
    SpectralWindowResult res;
    const int opts = with_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    if (op.dim == 1) {
        // MRRR on the tridiagonal matrix: O(n^2) with vectors
        const lapack_int n = lapack_int(op.size());
        std::vector<double> diag(op.size()), sub(op.size(), op.stencil_offdiagonal()), w(op.size());
        for (std::size_t k = 0; k < op.size(); ++k) diag[k] = op.stencil_diagonal() + op.potential[k];
        std::vector<double> z(with_vectors ? op.size() * op.size() : 1);
        std::vector<lapack_int> support(2 * op.size());
        lapack_int found = 0;
        const lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, with_vectors ? 'V' : 'N', 'A', n, diag.data(),
                                               sub.data(), 0.0, 0.0, 0, 0, 0.0, &found, w.data(), z.data(),
                                               with_vectors ? n : 1, support.data());
        if (info != 0) throw NumericalError("tridiagonal eigensolver failed");
        res.method = "tridiagonal";
        res.tolerance = 1e-8 * op.norm_bound();
        for (lapack_int j = 0; j < found; ++j) {
            res.values.push_back(w[std::size_t(j)]);
            if (!with_vectors) continue;
            const double* col = z.data() + std::size_t(j) * op.size();
            res.vectors.emplace_back(col, col + op.size());
            res.residuals.push_back(residual(op, res.vectors.back(), res.values.back()));
            res.max_residual = std::max(res.max_residual, res.residuals.back());
        }
        res.converged = res.max_residual <= res.tolerance;
        res.expected = res.values.size();
        if (!res.values.empty()) {
            res.lo = res.values.front();
            res.hi = res.values.back();
        }
        return res;
    }
    es.compute(dense_matrix(op), opts);
    res.method = "dense";
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver did not converge");
    res.tolerance = 1e-8 * op.norm_bound();
    for (Eigen::Index j = 0; j < es.eigenvalues().size(); ++j) {
        res.values.push_back(es.eigenvalues()(j));
        if (with_vectors) {
            res.vectors.push_back(column(es.eigenvectors(), j));
            res.residuals.push_back(residual(op, res.vectors.back(), res.values.back()));
            res.max_residual = std::max(res.max_residual, res.residuals.back());
        }
    }
    res.converged = res.max_residual <= res.tolerance;
    res.expected = res.values.size();
    if (!res.values.empty()) {
        res.lo = res.values.front();
        res.hi = res.values.back();
    }
    return res;
}

SpectralWindowResult restrict_window(SpectralWindowResult all, double lo, double hi) {
    SpectralWindowResult out;
    out.lo = lo;
    out.hi = hi;
    out.method = all.method;
    out.tolerance = all.tolerance;
    for (std::size_t j = 0; j < all.values.size(); ++j) {
        if (all.values[j] < lo || all.values[j] > hi) continue;
        out.values.push_back(all.values[j]);
        if (!all.vectors.empty()) {
            out.vectors.push_back(std::move(all.vectors[j]));
            out.residuals.push_back(all.residuals[j]);
            out.max_residual = std::max(out.max_residual, all.residuals[j]);
        }
    }
    out.converged = out.max_residual <= out.tolerance;
    out.expected = out.values.size();
    return out;
}

void orthogonalize(std::vector<double>& w, const std::vector<std::vector<double>>& basis) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) {
            const double c = dot(w, b);
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= c * b[i];
        }
    }
}

// Shift-invert Lanczos with full reorthogonalization and deflation against
// pairs already found. Returns Ritz pairs in [lo, hi] that meet `tol`.
void lanczos_window(const GridOperator& op, double lo, double hi, double sigma, std::size_t expected, double tol,
                    SpectralWindowResult& out) {
    const std::size_t n = op.size();
    const double scale = std::max(1.0, op.norm_bound());
    Eigen::SimplicialLDLT<SpMat> ldlt;
    for (int attempt = 0; attempt < 8; ++attempt) {
        ldlt.compute(shifted_matrix(op, sigma));
        if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array().abs() > 1e-14 * scale).all()) break;
        sigma += (hi - lo) * 1e-3 * (attempt + 1) + 1e-9 * scale;
    }
    if (ldlt.info() != Eigen::Success) throw NumericalError("factorization of the shifted operator failed");

    // Ritz values converge from the inside only up to rounding
    const double slack = 1e-6 * (hi - lo) + 1e-10 * scale;
    std::vector<std::vector<double>> found;
    CounterRng rng(0x5eed, std::uint64_t(std::llround(lo * 1e6)) ^ std::uint64_t(n));
    for (int round = 0; round < 8 && found.size() < expected; ++round) {
        const std::size_t m = std::min(n - found.size(), std::max<std::size_t>(3 * expected + 30, 80) << round);
        std::vector<std::vector<double>> V;
        std::vector<double> alpha, beta;
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform() - 0.5;
        orthogonalize(v, found);
        double nv = std::sqrt(dot(v, v));
        for (auto& x : v) x /= nv;
        for (std::size_t j = 0; j < m; ++j) {
            V.push_back(v);
            Eigen::Map<const Eigen::VectorXd> vin(v.data(), Eigen::Index(n));
            Eigen::VectorXd wv = ldlt.solve(vin);
            std::vector<double> w(wv.data(), wv.data() + n);
            const double a = dot(w, v);
            alpha.push_back(a);
            orthogonalize(w, found);
            orthogonalize(w, V);
            const double b = std::sqrt(dot(w, w));
            if (j + 1 == m || b < 1e-12) break;
            beta.push_back(b);
            for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / b;
        }
        const auto k = Eigen::Index(alpha.size());
        Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), k);
        Eigen::VectorXd sub = Eigen::Map<Eigen::VectorXd>(beta.data(), Eigen::Index(beta.size()));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, sub.head(k - 1), Eigen::ComputeEigenvectors);
        std::size_t added = 0;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double theta = es.eigenvalues()(j);
            if (std::abs(theta) < 1e-300) continue;
            const double lambda = sigma + 1.0 / theta;
            if (lambda < lo - slack || lambda > hi + slack) continue;
            std::vector<double> x(n, 0.0);
            for (Eigen::Index c = 0; c < k; ++c) {
                const double y = es.eigenvectors()(c, j);
                const auto& vc = V[std::size_t(c)];
                for (std::size_t i = 0; i < n; ++i) x[i] += y * vc[i];
            }
            orthogonalize(x, found);
            const double nx = std::sqrt(dot(x, x));
            if (nx < 0.5) continue;  // mostly inside the span already found
            for (auto& e : x) e /= nx;
            const double lam = dot(x, op.apply(x));
            const double r = residual(op, x, lam);
            if (r > tol || lam < lo || lam > hi) continue;
            found.push_back(x);
            out.values.push_back(lam);
            out.vectors.push_back(std::move(x));
            out.residuals.push_back(r);
            ++added;
        }
        if (added == 0 && round > 2) break;
    }
    if (found.size() < expected) out.converged = false;
}

// E with count_below(E) >= target, by bisection on [lo, hi].
double energy_for_count(const GridOperator& op, std::size_t target, double lo, double hi) {
    for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (count_below(op, mid) >= target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

SpectralWindowResult iterative_window(const GridOperator& op, double lo, double hi) {
    SpectralWindowResult res;
    res.lo = lo;
    res.hi = hi;
    res.method = "shift-invert-lanczos";
    res.tolerance = 1e-8 * op.norm_bound();
    const double pad = 1e-12 * std::max(1.0, op.norm_bound());
    const std::size_t total = count_below(op, hi + pad) - count_below(op, lo - pad);
    res.expected = total;
    // split so each Lanczos run targets a modest number of pairs
    std::vector<std::pair<double, double>> stack{{lo, hi}};
    while (!stack.empty()) {
        auto [a, b] = stack.back();
        stack.pop_back();
        const std::size_t cnt = count_below(op, b + pad) - count_below(op, a - pad);
        if (cnt == 0) continue;
        if (cnt > kWindowChunk && b - a > 1e-9) {
            const double mid = 0.5 * (a + b);
            stack.push_back({mid + pad, b});
            stack.push_back({a, mid});
            continue;
        }
        // shift to the middle of the eigenvalues actually present
        const std::size_t below = count_below(op, a - pad);
        const double first = energy_for_count(op, below + 1, a - pad, b + pad);
        const double last = energy_for_count(op, below + cnt, a - pad, b + pad);
        lanczos_window(op, a - pad, b + pad, 0.5 * (first + last), cnt, res.tolerance, res);
    }
    // sort pairs by value
    std::vector<std::size_t> order(res.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return res.values[x] < res.values[y]; });
    SpectralWindowResult sorted = res;
    sorted.values.clear();
    sorted.vectors.clear();
    sorted.residuals.clear();
    for (auto k : order) {
        sorted.values.push_back(res.values[k]);
        sorted.vectors.push_back(std::move(res.vectors[k]));
        sorted.residuals.push_back(res.residuals[k]);
        sorted.max_residual = std::max(sorted.max_residual, res.residuals[k]);
    }
    if (sorted.values.size() != total) sorted.converged = false;
    return sorted;
}

// Rotates each run of eigenvalues closer than `tol` into the eigenbasis of
// the first coordinate restricted to that run. Such runs are unresolved at
// the residual tolerance, and any basis of them is equally valid.
void localize_clusters(const GridOperator& op, std::vector<double>& values, std::vector<std::vector<double>>& vectors,
                       double tol) {
    std::vector<double> x(op.size());
    for (std::size_t j = 0; j < op.size(); ++j) x[j] = op.node(j)[0];
    std::size_t start = 0;
    while (start < values.size()) {
        std::size_t end = start + 1;
        while (end < values.size() && values[end] - values[end - 1] <= tol) ++end;
        const auto g = Eigen::Index(end - start);
        if (g > 1) {
            Eigen::MatrixXd m(g, g);
            for (Eigen::Index a = 0; a < g; ++a)
                for (Eigen::Index b = 0; b <= a; ++b) {
                    double s = 0.0;
                    const auto& va = vectors[start + std::size_t(a)];
                    const auto& vb = vectors[start + std::size_t(b)];
                    for (std::size_t j = 0; j < x.size(); ++j) s += x[j] * va[j] * vb[j];
                    m(a, b) = m(b, a) = s;
                }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
            std::vector<std::vector<double>> rotated(std::size_t(g), std::vector<double>(op.size(), 0.0));
            for (Eigen::Index c = 0; c < g; ++c) {
                auto& r = rotated[std::size_t(c)];
                for (Eigen::Index a = 0; a < g; ++a) {
                    const double u = es.eigenvectors()(a, c);
                    const auto& va = vectors[start + std::size_t(a)];
                    for (std::size_t j = 0; j < r.size(); ++j) r[j] += u * va[j];
                }
            }
            for (Eigen::Index c = 0; c < g; ++c) {
                auto& r = rotated[std::size_t(c)];
                const double nr = std::sqrt(dot(r, r));
                for (auto& e : r) e /= nr;
                values[start + std::size_t(c)] = dot(r, op.apply(r));
                vectors[start + std::size_t(c)] = std::move(r);
            }
        }
        start = end;
    }
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}


}  // namespace

Point GridOperator::node(std::size_t k) const {
    Point x(static_cast<std::size_t>(dim));
    auto idx = multi_index(k);
    for (int a = 0; a < dim; ++a) x[std::size_t(a)] = origin[std::size_t(a)] + h * (idx[std::size_t(a)] + 1);
    return x;
}

std::vector<int> GridOperator::multi_index(std::size_t k) const {
    std::vector<int> idx(static_cast<std::size_t>(dim));
    for (int a = 0; a < dim; ++a) {
        idx[std::size_t(a)] = int(k % std::size_t(extents[std::size_t(a)]));
        k /= std::size_t(extents[std::size_t(a)]);
    }
    return idx;
}

std::vector<std::size_t> GridOperator::neighbors(std::size_t k) const {
    std::vector<std::size_t> out;
    auto idx = multi_index(k);
    std::size_t stride = 1;
    for (int a = 0; a < dim; ++a) {
        const int e = extents[std::size_t(a)];
        if (idx[std::size_t(a)] > 0) out.push_back(k - stride);
        if (idx[std::size_t(a)] + 1 < e) out.push_back(k + stride);
        stride *= std::size_t(e);
    }
    return out;
}

std::vector<double> GridOperator::apply(const std::vector<double>& x) const {
    require(x.size() == size(), "vector length does not match the operator");
    std::vector<double> y(size());
    const double off = stencil_offdiagonal();
    for (std::size_t k = 0; k < size(); ++k) {
        double s = (stencil_diagonal() + potential[k]) * x[k];
        for (std::size_t j : neighbors(k)) s += off * x[j];
        y[k] = s;
    }
    return y;
}

std::pair<double, double> GridOperator::gershgorin() const {
    double lo = kInf, hi = -kInf;
    for (std::size_t k = 0; k < size(); ++k) {
        const double c = stencil_diagonal() + potential[k];
        const double r = double(neighbors(k).size()) * std::abs(stencil_offdiagonal());
        lo = std::min(lo, c - r);
        hi = std::max(hi, c + r);
    }
    return {lo, hi};
}

double GridOperator::norm_bound() const {
    auto [lo, hi] = gershgorin();
    return std::max(std::abs(lo), std::abs(hi));
}

bool GridOperator::is_symmetric() const {
    for (std::size_t k = 0; k < size(); ++k) {
        for (std::size_t j : neighbors(k)) {
            auto back = neighbors(j);
            if (std::find(back.begin(), back.end(), k) == back.end()) return false;
        }
    }
    return true;
}

GridOperator grid_operator(std::vector<int> extents, double h, Point origin, std::vector<double> potential) {
    require(!extents.empty() && extents.size() <= 2, "grid dimension must be 1 or 2");
    require(h > 0.0, "grid spacing must be positive");
    std::size_t n = 1;
    for (int e : extents) {
        require(e >= 1, "every axis needs at least one interior node");
        n *= std::size_t(e);
    }
    require(potential.size() == n, "potential length does not match the grid");
    require(origin.size() == extents.size(), "origin dimension does not match the grid");
    GridOperator op;
    op.dim = int(extents.size());
    op.extents = std::move(extents);
    op.h = h;
    op.origin = std::move(origin);
    op.potential = std::move(potential);
    return op;
}

GridOperator free_operator(std::vector<int> extents, double h, double constant) {
    std::size_t n = 1;
    for (int e : extents) n *= std::size_t(std::max(e, 0));
    Point origin(extents.size(), 0.0);
    return grid_operator(std::move(extents), h, std::move(origin), std::vector<double>(n, constant));
}

GridOperator discretize(const models::RandomPotentialModel& model, const models::CouplingMap& couplings,
                        const geometry::Box& box, double h, double coupling_scale) {
    const int d = model.dim();
    require(d == 1 || d == 2, "grid operators support d = 1 or 2");
    require(int(box.lo.size()) == d && int(box.hi.size()) == d, "box dimension does not match the model");
    require(h > 0.0, "grid spacing must be positive");
    std::vector<int> extents;
    std::size_t n = 1;
    for (int a = 0; a < d; ++a) {
        const double len = box.hi[std::size_t(a)] - box.lo[std::size_t(a)];
        const int e = int(std::lround(len / h)) - 1;
        require(e >= 1, "box too small for the grid spacing");
        extents.push_back(e);
        n *= std::size_t(e);
    }
    GridOperator op = grid_operator(extents, h, box.lo, std::vector<double>(n, 0.0));
    models::PotentialEvaluator eval(model, couplings);
    std::vector<char> bad(n, 0);
    parallel_for(n, [&](std::size_t k) {
        const Point x = op.node(k);
        const auto v = eval(x, false);
        bad[k] = v.truncated ? 1 : 0;
        op.potential[k] = model.background(x) + coupling_scale * v.value;
    });
    if (std::find(bad.begin(), bad.end(), 1) != bad.end()) {
        std::ostringstream os;
        os << "box reaches past the sampled window (covered radius " << couplings.covered_radius << ")";
        throw WindowError(os.str());
    }
    return op;
}

std::string to_triplets(const GridOperator& op) {
    std::ostringstream os;
    os.precision(17);
    os << "# grid-operator dim=" << op.dim << " n=" << op.size() << " h=" << op.h << "\n";
    for (std::size_t k = 0; k < op.size(); ++k) {
        std::vector<std::pair<std::size_t, double>> row{{k, op.stencil_diagonal() + op.potential[k]}};
        for (std::size_t j : op.neighbors(k)) row.emplace_back(j, op.stencil_offdiagonal());
        std::sort(row.begin(), row.end());
        for (auto [j, v] : row) os << k << ' ' << j << ' ' << v << '\n';
    }
    return os.str();
}

std::size_t count_below(const GridOperator& op, double E) {
    if (op.dim == 1) {
        // Sturm count from the LDL^T recurrence of the tridiagonal matrix
        const double b2 = op.stencil_offdiagonal() * op.stencil_offdiagonal();
        const double tiny = 1e-300;
        std::size_t neg = 0;
        double dk = 1.0;
        for (std::size_t k = 0; k < op.size(); ++k) {
            const double a = op.stencil_diagonal() + op.potential[k] - E;
            dk = k == 0 ? a : a - b2 / dk;
            if (dk == 0.0) dk = -tiny;
            if (dk < 0) ++neg;
        }
        return neg;
    }
    Eigen::SimplicialLDLT<SpMat> ldlt(shifted_matrix(op, E));
    if (ldlt.info() != Eigen::Success) throw NumericalError("inertia factorization failed");
    const auto& D = ldlt.vectorD();
    return std::size_t((D.array() < 0).count());
}

SpectralWindowResult eigenpairs(const GridOperator& op, double lo, double hi, bool with_vectors) {
    require(lo <= hi, "empty energy window");
    if (direct_path(op)) return restrict_window(direct_solve(op, with_vectors), lo, hi);
    auto [glo, ghi] = op.gershgorin();
    return iterative_window(op, std::max(lo, glo - 1.0), std::min(hi, ghi + 1.0));
}

SpectralWindowResult lowest_eigenpairs(const GridOperator& op, std::size_t count, bool with_vectors) {
    count = std::min(count, op.size());
    if (direct_path(op)) {
        auto all = direct_solve(op, with_vectors);
        if (count == 0) return restrict_window(std::move(all), 0.0, -1.0);
        return restrict_window(std::move(all), all.values.front(), all.values[count - 1]);
    }
    auto [glo, ghi] = op.gershgorin();
    if (count == 0) return iterative_window(op, glo, glo - 1.0);
    const double top = energy_for_count(op, count, glo - 1.0, ghi + 1.0) + 1e-9 * std::max(1.0, op.norm_bound());
    auto res = iterative_window(op, glo - 1.0, top);
    while (res.values.size() > count) {
        res.values.pop_back();
        res.vectors.pop_back();
        res.residuals.pop_back();
    }
    return res;
}

SpectralWindowResult all_eigenpairs(const GridOperator& op, bool with_vectors) {
    if (!direct_path(op)) throw NumericalError("operator too large for a full eigendecomposition");
    return direct_solve(op, with_vectors);
}

std::vector<Interval> spectrum_gaps(const GridOperator& op, double resolution) {
    require(resolution > 0.0, "resolution must be positive");
    auto all = all_eigenpairs(op, false);
    std::vector<Interval> gaps{{-kInf, all.values.front()}};
    for (std::size_t k = 0; k + 1 < all.values.size(); ++k) {
        if (all.values[k + 1] - all.values[k] > resolution) gaps.push_back({all.values[k], all.values[k + 1]});
    }
    return gaps;
}

bool in_gaps(const std::vector<Interval>& gaps, double E, double margin) {
    return std::any_of(gaps.begin(), gaps.end(),
                       [&](const Interval& g) { return E > g.lo + margin && E < g.hi - margin; });
}

double ipr(const std::vector<double>& v) {
    double n2 = 0.0, s = 0.0;
    for (double x : v) {
        n2 += x * x;
        s += x * x * x * x;
    }
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-10) throw InvalidArgument("ipr needs a unit vector");
    return s;
}

DecayFit decay_rate_fit(const std::vector<double>& v, const std::vector<double>& distance) {
    require(v.size() == distance.size(), "vector and distance lengths differ");
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    std::size_t m = 0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (!(std::abs(v[k]) > 1e-12)) continue;
        const double x = distance[k], y = std::log(std::abs(v[k]));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        ++m;
    }
    if (m < 2) throw NumericalError("decay fit needs at least two entries above 1e-12");
    const double cxx = sxx - sx * sx / m, cxy = sxy - sx * sy / m, cyy = syy - sy * sy / m;
    if (cxx <= 0.0) throw NumericalError("decay fit needs entries at two or more distances");
    DecayFit f;
    f.points = m;
    f.rate = -cxy / cxx;
    // a flat profile is fitted exactly by a zero slope
    f.quality = cyy <= 1e-24 * std::max(1.0, syy) ? 1.0 : cxy * cxy / (cxx * cyy);
    return f;
}

DecayFit decay_rate_fit(const std::vector<double>& v, std::size_t center) {
    std::vector<double> dist(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) dist[j] = std::abs(double(j) - double(center));
    return decay_rate_fit(v, dist);
}

DecayFit decay_rate_fit(const GridOperator& op, const std::vector<double>& v, std::size_t center) {
    require(v.size() == op.size(), "vector length does not match the operator");
    const Point c = op.node(center);
    std::vector<double> dist(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) dist[j] = distance(op.node(j), c);
    return decay_rate_fit(v, dist);
}

std::vector<ResolventProbe> default_probes(const GridOperator& op, double reach) {
    std::size_t center = 0, stride = 1;
    for (int a = 0; a < op.dim; ++a) {
        center += std::size_t(op.extents[std::size_t(a)] / 2) * stride;
        stride *= std::size_t(op.extents[std::size_t(a)]);
    }
    const int c0 = op.extents[0] / 2;
    const int room = op.extents[0] - 1 - c0;
    const int steps = std::max(2, int(reach * room));
    ResolventProbe p;
    p.source = center;
    for (int s = 1; s <= std::min(steps, room); ++s) p.targets.push_back(center + std::size_t(s));
    return {p};
}

ResolventDecay resolvent_decay(const GridOperator& op, double E, const std::vector<ResolventProbe>& probes,
                               double resolution) {
    require(!probes.empty(), "need at least one probe");
    require(resolution > 0.0, "resolution must be positive");
    if (count_below(op, E + resolution) != count_below(op, E - resolution)) {
        std::ostringstream os;
        os << "energy " << E << " lies within " << resolution << " of the spectrum";
        throw InvalidArgument(os.str());
    }
    ResolventDecay out;
    out.energy = E;
    // distance to the spectrum: nearest eigenvalues on either side
    const std::size_t below = count_below(op, E);
    auto [glo, ghi] = op.gershgorin();
    double dist = kInf;
    if (below > 0) dist = std::min(dist, E - eigenpairs(op, glo - 1.0, E, false).values.back());
    if (below < op.size()) dist = std::min(dist, eigenpairs(op, E, ghi + 1.0, false).values.front() - E);
    out.spectral_distance = dist;

    SpMat m = shifted_matrix(op, E);
    Eigen::SimplicialLDLT<SpMat> ldlt(m);
    Eigen::SparseLU<SpMat> lu;
    bool use_lu = ldlt.info() != Eigen::Success;
    std::vector<double> u_all, d_all;
    for (const auto& p : probes) {
        require(p.source < op.size(), "probe source outside the grid");
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(Eigen::Index(op.size()));
        rhs(Eigen::Index(p.source)) = 1.0;
        Eigen::VectorXd u;
        if (!use_lu) {
            u = ldlt.solve(rhs);
            if ((m * u - rhs).norm() > 1e-8) use_lu = true;
        }
        if (use_lu) {
            if (lu.rows() == 0) {
                lu.compute(m);
                if (lu.info() != Eigen::Success) throw NumericalError("resolvent factorization failed");
            }
            u = lu.solve(rhs);
        }
        const double u0 = std::abs(u(Eigen::Index(p.source)));
        const Point y = op.node(p.source);
        for (std::size_t t : p.targets) {
            u_all.push_back(u(Eigen::Index(t)) / u0);
            d_all.push_back(distance(op.node(t), y));
        }
    }
    auto fit = decay_rate_fit(u_all, d_all);
    out.rate = fit.rate;
    out.quality = fit.quality;
    return out;
}

ResolventTable resolvent_decay_table(const GridOperator& op, const std::vector<double>& energies,
                                     const std::vector<ResolventProbe>& probes, double resolution) {
    ResolventTable t;
    for (double E : energies) t.rows.push_back(resolvent_decay(op, E, probes, resolution));
    std::sort(t.rows.begin(), t.rows.end(),
              [](const auto& a, const auto& b) { return a.spectral_distance < b.spectral_distance; });
    t.strictly_increasing = t.rows.size() >= 2;
    for (std::size_t k = 1; k < t.rows.size(); ++k)
        if (!(t.rows[k].rate > t.rows[k - 1].rate)) t.strictly_increasing = false;
    return t;
}

LocalizationReport localization_report(const GridOperator& h, const GridOperator& h0,
                                       const LocalizationOptions& opts) {
    require(h.extents == h0.extents && h.h == h0.h, "H and H0 must share a grid");
    LocalizationReport rep;

    // gaps of H0, merged above ten mean level spacings
    auto spec0 = all_eigenpairs(h0, false);
    const double spacing = (spec0.values.back() - spec0.values.front()) / double(std::max<std::size_t>(1, h0.size() - 1));
    rep.gaps = spectrum_gaps(h0, std::max(opts.resolution, 10.0 * spacing));
    const double band_bottom = spec0.values.front();

    std::vector<double> values;
    std::vector<std::vector<double>> vectors;
    if (direct_path(h)) {
        auto all = all_eigenpairs(h, true);
        values = std::move(all.values);
        vectors = std::move(all.vectors);
    } else {
        auto [glo, ghi] = h.gershgorin();
        for (const auto& g : rep.gaps) {
            auto w = eigenpairs(h, std::max(g.lo, glo - 1.0), g.hi, true);
            for (std::size_t k = 0; k < w.values.size(); ++k) {
                values.push_back(w.values[k]);
                vectors.push_back(std::move(w.vectors[k]));
            }
        }
        const std::size_t k0 = count_below(h, band_bottom);
        const double top = energy_for_count(h, k0 + opts.bulk_states, band_bottom, ghi + 1.0);
        auto w = eigenpairs(h, band_bottom, top, true);
        for (std::size_t k = 0; k < w.values.size(); ++k) {
            values.push_back(w.values[k]);
            vectors.push_back(std::move(w.vectors[k]));
        }
    }

    {
        std::vector<std::size_t> order(values.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
        std::vector<double> sv;
        std::vector<std::vector<double>> svec;
        for (auto k : order) {
            sv.push_back(values[k]);
            svec.push_back(std::move(vectors[k]));
        }
        values = std::move(sv);
        vectors = std::move(svec);
    }
    const double tol = 1e-8 * h.norm_bound();
    localize_clusters(h, values, vectors, tol);

    std::vector<std::size_t> gap_idx, bulk_idx;
    for (std::size_t k = 0; k < values.size(); ++k) (in_gaps(rep.gaps, values[k], tol) ? gap_idx : bulk_idx).push_back(k);
    // evenly spaced sample of in-band states
    if (bulk_idx.size() > opts.bulk_states) {
        std::vector<std::size_t> pick;
        for (std::size_t j = 0; j < opts.bulk_states; ++j)
            pick.push_back(bulk_idx[j * bulk_idx.size() / opts.bulk_states]);
        bulk_idx = std::move(pick);
    }

    auto record = [&](std::size_t k, bool gap) {
        const auto& v = vectors[k];
        StateRecord s;
        s.energy = values[k];
        s.in_gap = gap;
        s.ipr = ipr(v);
        std::size_t c = 0;
        for (std::size_t j = 0; j < v.size(); ++j)
            if (std::abs(v[j]) > std::abs(v[c])) c = j;
        s.center = h.node(c);
        try {
            auto f = decay_rate_fit(h, v, c);
            s.decay_rate = f.rate;
            s.fit_quality = f.quality;
        } catch (const NumericalError&) {
        }
        return s;
    };
    std::vector<double> gap_ipr, bulk_ipr;
    std::size_t good = 0;
    for (auto k : gap_idx) {
        rep.states.push_back(record(k, true));
        gap_ipr.push_back(rep.states.back().ipr);
        if (rep.states.back().fit_quality >= opts.fit_quality) ++good;
        const auto& v = vectors[k];
        for (std::size_t j = 0; j < v.size(); ++j) {
            auto idx = h.multi_index(j);
            bool edge = false;
            for (int a = 0; a < h.dim; ++a)
                edge = edge || idx[std::size_t(a)] == 0 || idx[std::size_t(a)] + 1 == h.extents[std::size_t(a)];
            if (edge) rep.boundary_amplitude = std::max(rep.boundary_amplitude, std::abs(v[j]));
        }
    }
    for (auto k : bulk_idx) {
        rep.states.push_back(record(k, false));
        bulk_ipr.push_back(rep.states.back().ipr);
    }
    std::sort(rep.states.begin(), rep.states.end(), [](const auto& a, const auto& b) { return a.energy < b.energy; });
    rep.gap_states = gap_idx.size();
    rep.bulk_states = bulk_idx.size();
    rep.median_gap_ipr = median(gap_ipr);
    rep.median_bulk_ipr = median(bulk_ipr);
    rep.good_fit_fraction = gap_idx.empty() ? 0.0 : double(good) / double(gap_idx.size());
    if (gap_idx.empty()) {
        rep.verdict = "no gap states";
    } else {
        rep.localized = rep.median_gap_ipr >= 10.0 * rep.median_bulk_ipr && rep.good_fit_fraction >= 0.9;
        rep.verdict = rep.localized ? "gap states localized" : "gap states not localized";
    }
    return rep;
}

ProbeResult localization_probe(const models::RandomPotentialModel& model, std::uint64_t seed, geometry::Box box,
                               double h, double coupling_scale, int max_doublings, const LocalizationOptions& opts) {
    ProbeResult out;
    const double rho = model.rho();
    for (int round = 0;; ++round) {
        double reach = 0.0;
        for (std::size_t a = 0; a < box.lo.size(); ++a) {
            const double m = std::max(std::abs(box.lo[a]), std::abs(box.hi[a]));
            reach += m * m;
        }
        reach = std::sqrt(reach) + rho + h;
        auto couplings = models::sample_couplings(model, seed, geometry::make_ball(Point(box.lo.size(), 0.0), reach));
        auto H = discretize(model, couplings, box, h, coupling_scale);
        auto H0 = discretize(model, couplings, box, h, 0.0);
        out.report = localization_report(H, H0, opts);
        out.box = box;
        out.doublings = round;
        if (out.report.boundary_amplitude <= 1e-8 || round >= max_doublings) break;
        geometry::Box next = box;
        for (std::size_t a = 0; a < box.lo.size(); ++a) {
            const double c = 0.5 * (box.lo[a] + box.hi[a]), w = box.hi[a] - box.lo[a];
            next.lo[a] = c - w;
            next.hi[a] = c + w;
        }
        double need = 0.0;
        for (std::size_t a = 0; a < next.lo.size(); ++a) {
            const double m = std::max(std::abs(next.lo[a]), std::abs(next.hi[a]));
            need += m * m;
        }
        if (std::sqrt(need) + rho + h > model.sites.window_radius()) break;
        box = next;
    }
    return out;
}

std::string states_to_csv(const LocalizationReport& r) {
    std::ostringstream os;
    os.precision(12);
    os << "energy,ipr,decay_rate,center,in_gap\n";
    for (const auto& s : r.states) {
        os << s.energy << ',' << s.ipr << ',' << s.decay_rate << ',';
        for (std::size_t a = 0; a < s.center.size(); ++a) os << (a ? ";" : "") << s.center[a];
        os << ',' << (s.in_gap ? 1 : 0) << '\n';
    }
    return os.str();
}

}  // namespace sparseloc::spectral
