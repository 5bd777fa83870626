#include "eclrr/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "eclrr/errors.hpp"

namespace eclrr {

namespace {

constexpr int kMaxSweeps = 64;

// Core one-sided Jacobi on a tall (or square) matrix: rows >= cols.
// Orthogonalizes the columns of b in place while accumulating the right
// rotations into v (cols x cols).
void jacobi_orthogonalize(Matrix& b, Matrix& v) {
    const std::size_t m = b.rows(), n = b.cols();
    const double tol = 1e-14;

    int sweep = 0;
    for (; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::fabs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                rotated = true;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;

                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) return;
    }
    throw NumericFailure("thin_svd: Jacobi sweeps did not converge", sweep);
}

// Deterministic fill-in for u columns whose singular value is numerically
// zero: Gram-Schmidt the standard basis vectors against every column filled
// so far (unfilled ones are still zero and project to nothing) and take the
// first axis that survives. Restarting the axis scan per column is safe: an
// axis already used projects to a zero residual and is skipped.
void complete_u_columns(Matrix& u, const std::vector<std::size_t>& missing) {
    const std::size_t m = u.rows();
    for (std::size_t j : missing) {
        bool filled = false;
        for (std::size_t axis = 0; axis < m && !filled; ++axis) {
            Vec cand(m, 0.0);
            cand[axis] = 1.0;
            for (std::size_t k = 0; k < u.cols(); ++k) {
                if (k == j) continue;
                double proj = 0.0;
                for (std::size_t i = 0; i < m; ++i) proj += u(i, k) * cand[i];
                if (proj == 0.0) continue;
                for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, k);
            }
            double nn = norm2(cand);
            if (nn > 1e-8) {
                for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / nn;
                filled = true;
            }
        }
        if (!filled)
            throw NumericFailure("thin_svd: could not complete orthonormal basis", 0);
    }
}

SvdResult thin_svd_tall(const Matrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Matrix b = a;
    Matrix v = Matrix::identity(n);
    jacobi_orthogonalize(b, v);

    // Column norms are the singular values.
    Vec s(n);
    for (std::size_t j = 0; j < n; ++j) {
        double nn = 0.0;
        for (std::size_t i = 0; i < m; ++i) nn += b(i, j) * b(i, j);
        s[j] = std::sqrt(nn);
    }

    // Stable descending sort.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

    Matrix u(m, n), vs(n, n);
    Vec ss(n);
    const double smax = s.empty() ? 0.0 : s[order[0]];
    const double zero_tol = static_cast<double>(std::max(m, n)) *
                            std::numeric_limits<double>::epsilon() * smax;
    std::vector<std::size_t> missing;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        ss[j] = s[src];
        for (std::size_t i = 0; i < n; ++i) vs(i, j) = v(i, src);
        if (ss[j] > zero_tol && ss[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) u(i, j) = b(i, src) / ss[j];
        } else {
            missing.push_back(j);
        }
    }
    if (!missing.empty()) complete_u_columns(u, missing);
    return SvdResult{std::move(u), std::move(ss), std::move(vs)};
}

// Sign convention: first entry of largest magnitude in each u column is made
// positive; the matching v column flips too so the product is unchanged.
// Applied after any transpose swap so it always refers to the final u.
void normalize_signs(SvdResult& f) {
    for (std::size_t j = 0; j < f.u.cols(); ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < f.u.rows(); ++i) {
            double av = std::fabs(f.u(i, j));
            if (av > best) {
                best = av;
                arg = i;
            }
        }
        if (f.u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < f.u.rows(); ++i) f.u(i, j) = -f.u(i, j);
            for (std::size_t i = 0; i < f.v.rows(); ++i) f.v(i, j) = -f.v(i, j);
        }
    }
}

}  // namespace

SvdResult thin_svd(const Matrix& a) {
    if (a.empty()) throw std::invalid_argument("thin_svd: empty matrix");
    if (!all_finite(a)) throw std::invalid_argument("thin_svd: non-finite input");
    SvdResult f;
    if (a.rows() >= a.cols()) {
        f = thin_svd_tall(a);
    } else {
        // Wide: factor the transpose and swap the roles of u and v.
        SvdResult t = thin_svd_tall(a.transposed());
        f = SvdResult{std::move(t.v), std::move(t.s), std::move(t.u)};
    }
    normalize_signs(f);
    return f;
}

std::size_t numerical_rank(const SvdResult& svd, std::size_t rows, std::size_t cols) {
    if (svd.s.empty()) return 0;
    const double thresh = static_cast<double>(std::max(rows, cols)) *
                          std::numeric_limits<double>::epsilon() * svd.s[0];
    std::size_t r = 0;
    for (double v : svd.s)
        if (v > thresh) ++r;
    return r;
}

}  // namespace eclrr
