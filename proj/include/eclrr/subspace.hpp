#pragma once

#include <cstddef>
#include <vector>

#include "eclrr/matrix.hpp"
#include "eclrr/rng.hpp"

namespace eclrr {

// Per-layer store of flattened end-of-epoch mu snapshots, capped at `budget`
// columns. When full, one column of the oldest session is evicted uniformly
// at random using the matrix's own seeded rng, so retention is reproducible.
class RepresentationMatrix {
  public:
    RepresentationMatrix(int layer_id, std::size_t dim, std::size_t budget, RngState rng);

    void push_snapshot(const Vec& mu, int session);

    bool empty() const { return cols_.empty(); }
    std::size_t size() const { return cols_.size(); }
    std::size_t dim() const { return dim_; }
    std::size_t budget() const { return budget_; }
    int layer_id() const { return layer_id_; }
    const std::vector<int>& sessions() const { return sessions_; }

    Matrix as_matrix() const;  // dim x size

  private:
    int layer_id_;
    std::size_t dim_;
    std::size_t budget_;
    std::vector<Vec> cols_;
    std::vector<int> sessions_;
    RngState rng_;
};

// Common / distinctive orthonormal bases for one layer. Both matrices are
// dim x k (possibly empty) with mutually orthogonal columns.
struct SubspaceBundle {
    int layer_id = 0;
    Matrix o_common;
    Matrix o_distinct;
};

enum class BundlePart { kCommon, kCombined };

// Smallest leading set of left singular vectors whose energy (sum of squared
// singular values) reaches energy_fraction of the total; fraction 1.0 yields
// the numerical rank. Throws invalid_argument on empty rep or fraction
// outside (0, 1].
Matrix extract_bases(const RepresentationMatrix& rep, double energy_fraction);
// Same rule over an explicit column matrix (e.g. a residual_update result).
Matrix extract_bases(const Matrix& columns, double energy_fraction);

// B B^T v. An empty basis projects to the zero vector.
Vec project(const Matrix& basis, const Vec& v);
Vec project(const SubspaceBundle& bundle, BundlePart part, const Vec& v);

// R - O_C O_C^T R: the part of the stored snapshots outside the common
// subspace. Empty O_C passes the representation through unchanged.
Matrix residual_update(const RepresentationMatrix& rep, const Matrix& o_common);

// Append new bases to O_D after Gram-Schmidt against O_C and the existing
// O_D; candidates that collapse below norm 1e-8 are dropped.
void extend_distinctive(SubspaceBundle& bundle, const Matrix& new_bases);

// Same, into O_C (used to seed the common subspace on the first session).
void extend_common(SubspaceBundle& bundle, const Matrix& new_bases);

// Move `candidates` (each must match a current O_D column) into O_C,
// re-orthonormalizing along the way. `gate` carries the trainer's promotion
// decision; false leaves the bundle untouched.
void promote_bases(SubspaceBundle& bundle, const Matrix& candidates, bool gate);

// Largest deviation from the bundle invariants (orthonormality of each part
// and mutual orthogonality); 0 for empty parts.
double bundle_defect(const SubspaceBundle& bundle);
// Throws InvalidState when bundle_defect exceeds 1e-8.
void check_bundle(const SubspaceBundle& bundle);

}  // namespace eclrr
