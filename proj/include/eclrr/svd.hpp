#pragma once

#include "eclrr/matrix.hpp"

namespace eclrr {

// Thin SVD a = u * diag(s) * v^T with k = min(rows, cols):
//   u: rows x k, orthonormal columns
//   s: k singular values, descending, all >= 0
//   v: cols x k, orthonormal columns
struct SvdResult {
    Matrix u;
    Vec s;
    Matrix v;
};

// One-sided Jacobi SVD. Deterministic: fixed sweep order, sign convention
// (first largest-magnitude entry of each u column is made positive), and
// rank-deficient u columns completed by Gram-Schmidt against the standard
// basis. Throws NumericFailure (with the sweep count) if column pairs fail
// to decouple within the sweep budget, std::invalid_argument on empty or
// non-finite input.
SvdResult thin_svd(const Matrix& a);

// Effective rank given a relative threshold: number of s[i] strictly above
// max(rows, cols) * eps * s[0].
std::size_t numerical_rank(const SvdResult& svd, std::size_t rows, std::size_t cols);

}  // namespace eclrr
