#pragma once

#include <cstddef>
#include <vector>

#include "eclrr/matrix.hpp"
#include "eclrr/rng.hpp"

namespace eclrr {

// Compact generator G_psi mapping seed vectors to mean-parameter vectors.
// One generator per dense layer slice; the rows of the layer's mu matrix are
// the targets, each paired with a fixed random seed, so storing psi plus the
// seeds replaces storing the slice itself.
struct PlnGenerator {
    int layer_id = -1;
    std::size_t seed_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t target_dim = 0;
    Matrix w1;    // hidden x seed
    Vec b1;       // hidden
    Matrix w2;    // target x hidden
    Vec b2;       // target
    Matrix seeds; // n_targets x seed_dim, fixed by train_pln

    // Size of psi alone (seeds are bookkeeping, not network parameters).
    std::size_t param_count() const;
};

// ceil(target_dim / 16), capped at 64. Keeps psi comfortably smaller than
// the slice it stands in for.
std::size_t pln_hidden_width(std::size_t target_dim);

// Builds an untrained generator and asserts the compression invariant:
// param_count() must be strictly below n_targets * target_dim.
PlnGenerator make_pln(int layer_id, std::size_t target_dim, std::size_t n_targets,
                      std::size_t seed_dim, RngState& rng);

// Fits the generator to the targets: per-target seeds are drawn once from
// uniform [0,1)^seed_dim, the output layer is solved by least squares, and
// `epochs` rounds of first-layer refinement follow (each re-solving the
// output layer, keeping the best psi seen). Returns the final RMSE over all
// target coordinates.
double train_pln(const std::vector<Vec>& targets, PlnGenerator& gen, int epochs,
                 RngState& rng);

// Deterministic forward map seed -> vector.
Vec generate(const PlnGenerator& gen, const Vec& seed);

// generate() at the stored seed for target `index`.
Vec reconstruct(const PlnGenerator& gen, std::size_t index);

}  // namespace eclrr
