#include "eclrr/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eclrr/errors.hpp"
#include "eclrr/svd.hpp"

namespace eclrr {

RepresentationMatrix::RepresentationMatrix(int layer_id, std::size_t dim,
                                           std::size_t budget, RngState rng)
    : layer_id_(layer_id), dim_(dim), budget_(budget), rng_(rng) {
    if (dim == 0 || budget == 0)
        throw std::invalid_argument("RepresentationMatrix: dim and budget must be > 0");
}

void RepresentationMatrix::push_snapshot(const Vec& mu, int session) {
    if (mu.size() != dim_)
        throw std::invalid_argument("push_snapshot: dimension mismatch");
    if (cols_.size() == budget_) {
        // Evict uniformly at random among the oldest session's columns.
        int oldest = *std::min_element(sessions_.begin(), sessions_.end());
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < sessions_.size(); ++i)
            if (sessions_[i] == oldest) idx.push_back(i);
        std::size_t victim = idx[rng_.uniform_index(idx.size())];
        cols_.erase(cols_.begin() + static_cast<std::ptrdiff_t>(victim));
        sessions_.erase(sessions_.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    cols_.push_back(mu);
    sessions_.push_back(session);
}

Matrix RepresentationMatrix::as_matrix() const { return Matrix::from_cols(cols_); }

Matrix extract_bases(const RepresentationMatrix& rep, double energy_fraction) {
    if (rep.empty()) throw std::invalid_argument("extract_bases: empty representation");
    return extract_bases(rep.as_matrix(), energy_fraction);
}

Matrix extract_bases(const Matrix& r, double energy_fraction) {
    if (r.empty()) throw std::invalid_argument("extract_bases: empty representation");
    if (!(energy_fraction > 0.0) || energy_fraction > 1.0)
        throw std::invalid_argument("extract_bases: energy_fraction must be in (0, 1]");
    SvdResult f = thin_svd(r);

    double total = 0.0;
    for (double s : f.s) total += s * s;
    const std::size_t rank = numerical_rank(f, r.rows(), r.cols());
    if (total == 0.0 || rank == 0) return Matrix(r.rows(), 0);

    std::size_t k = 0;
    double cum = 0.0;
    for (std::size_t i = 0; i < f.s.size(); ++i) {
        cum += f.s[i] * f.s[i];
        k = i + 1;
        // Tiny slack so fraction = 1.0 terminates at the rank despite round-off.
        if (cum >= energy_fraction * total * (1.0 - 1e-12)) break;
    }
    k = std::min(k, rank);

    Matrix bases(r.rows(), k);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < r.rows(); ++i) bases(i, j) = f.u(i, j);
    return bases;
}

Vec project(const Matrix& basis, const Vec& v) {
    if (basis.empty()) return Vec(v.size(), 0.0);
    if (basis.rows() != v.size())
        throw std::invalid_argument("project: dimension mismatch");
    Vec coeffs = matvec_t(basis, v);  // B^T v
    return matvec(basis, coeffs);     // B (B^T v)
}

Vec project(const SubspaceBundle& bundle, BundlePart part, const Vec& v) {
    if (part == BundlePart::kCommon) return project(bundle.o_common, v);
    // O_C and O_D are mutually orthogonal, so the combined projector is the
    // sum of the two parts.
    Vec p = project(bundle.o_common, v);
    Vec d = project(bundle.o_distinct, v);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += d[i];
    return p;
}

Matrix residual_update(const RepresentationMatrix& rep, const Matrix& o_common) {
    Matrix r = rep.as_matrix();
    if (o_common.empty()) return r;
    if (o_common.rows() != r.rows())
        throw std::invalid_argument("residual_update: dimension mismatch");
    for (std::size_t j = 0; j < r.cols(); ++j) {
        Vec col = r.col(j);
        Vec proj = project(o_common, col);
        for (std::size_t i = 0; i < r.rows(); ++i) r(i, j) = col[i] - proj[i];
    }
    return r;
}

namespace {

constexpr double kDropTol = 1e-8;

// Gram-Schmidt `v` against the columns of each matrix in `against` (two
// passes for numerical hygiene); returns false when the residual norm dies.
bool orthogonalize(Vec& v, const std::vector<const Matrix*>& against) {
    for (int pass = 0; pass < 2; ++pass) {
        for (const Matrix* m : against) {
            if (m->empty()) continue;
            Vec coeffs = matvec_t(*m, v);
            Vec back = matvec(*m, coeffs);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= back[i];
        }
    }
    double n = norm2(v);
    if (n < kDropTol) return false;
    for (auto& x : v) x /= n;
    return true;
}

void append_columns(Matrix& target, const std::vector<Vec>& cols, std::size_t dim) {
    if (cols.empty()) return;
    Matrix extra = Matrix::from_cols(cols);
    if (target.empty()) target = Matrix(dim, 0);
    target = hcat(target, extra);
}

void extend(SubspaceBundle& bundle, const Matrix& new_bases, bool into_common) {
    if (new_bases.empty()) return;
    const std::size_t dim = new_bases.rows();
    if ((!bundle.o_common.empty() && bundle.o_common.rows() != dim) ||
        (!bundle.o_distinct.empty() && bundle.o_distinct.rows() != dim))
        throw std::invalid_argument("extend: dimension mismatch");

    Matrix& target = into_common ? bundle.o_common : bundle.o_distinct;
    std::vector<Vec> kept;
    for (std::size_t j = 0; j < new_bases.cols(); ++j) {
        Vec v = new_bases.col(j);
        std::vector<const Matrix*> against = {&bundle.o_common, &bundle.o_distinct};
        // Also orthogonalize against bases accepted in this very call.
        Matrix pending = kept.empty() ? Matrix() : Matrix::from_cols(kept);
        if (!pending.empty()) against.push_back(&pending);
        if (orthogonalize(v, against)) kept.push_back(std::move(v));
    }
    append_columns(target, kept, dim);
}

}  // namespace

void extend_distinctive(SubspaceBundle& bundle, const Matrix& new_bases) {
    extend(bundle, new_bases, false);
}

void extend_common(SubspaceBundle& bundle, const Matrix& new_bases) {
    extend(bundle, new_bases, true);
}

void promote_bases(SubspaceBundle& bundle, const Matrix& candidates, bool gate) {
    if (!gate || candidates.empty()) return;
    if (bundle.o_distinct.empty())
        throw std::invalid_argument("promote_bases: O_D is empty");
    if (candidates.rows() != bundle.o_distinct.rows())
        throw std::invalid_argument("promote_bases: dimension mismatch");

    // Match each candidate to a distinct O_D column (by near-equality).
    std::vector<bool> taken(bundle.o_distinct.cols(), false);
    for (std::size_t j = 0; j < candidates.cols(); ++j) {
        Vec c = candidates.col(j);
        bool found = false;
        for (std::size_t k = 0; k < bundle.o_distinct.cols() && !found; ++k) {
            if (taken[k]) continue;
            double diff = 0.0;
            for (std::size_t i = 0; i < c.size(); ++i)
                diff = std::max(diff, std::fabs(c[i] - bundle.o_distinct(i, k)));
            if (diff < 1e-8) {
                taken[k] = true;
                found = true;
            }
        }
        if (!found)
            throw std::invalid_argument("promote_bases: candidate is not an O_D column");
    }

    // Rebuild O_D from the survivors, then fold the promoted columns into O_C.
    std::vector<Vec> remaining, promoted;
    for (std::size_t k = 0; k < bundle.o_distinct.cols(); ++k) {
        if (taken[k])
            promoted.push_back(bundle.o_distinct.col(k));
        else
            remaining.push_back(bundle.o_distinct.col(k));
    }
    const std::size_t dim = bundle.o_distinct.rows();
    bundle.o_distinct = Matrix(dim, 0);
    append_columns(bundle.o_distinct, remaining, dim);

    for (auto& v : promoted) {
        std::vector<const Matrix*> against = {&bundle.o_common};
        if (orthogonalize(v, against)) {
            std::vector<Vec> one = {std::move(v)};
            append_columns(bundle.o_common, one, dim);
        }
        // A candidate parallel to existing O_C simply drops out.
    }
}

double bundle_defect(const SubspaceBundle& bundle) {
    double worst = 0.0;
    auto check_orthonormal = [&](const Matrix& m) {
        if (m.empty()) return;
        Matrix g = matmul_tn(m, m);
        worst = std::max(worst, max_abs_diff(g, Matrix::identity(m.cols())));
    };
    check_orthonormal(bundle.o_common);
    check_orthonormal(bundle.o_distinct);
    if (!bundle.o_common.empty() && !bundle.o_distinct.empty()) {
        Matrix cross = matmul_tn(bundle.o_common, bundle.o_distinct);
        for (double v : cross.data()) worst = std::max(worst, std::fabs(v));
    }
    return worst;
}

void check_bundle(const SubspaceBundle& bundle) {
    double d = bundle_defect(bundle);
    if (d > 1e-8)
        throw InvalidState("subspace bundle invariant violated, defect " +
                           std::to_string(d));
}

}  // namespace eclrr
