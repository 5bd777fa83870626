#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eclrr/bayes_net.hpp"
#include "eclrr/pln.hpp"
#include "eclrr/subspace.hpp"

namespace eclrr {

// Everything a finished task leaves behind: the full variational network,
// the per-layer subspace bundles, and any trained generators. Serialized as
// gzip-compressed JSON; doubles round-trip bit-exactly through the decimal
// encoding.
struct Checkpoint {
    int version = 1;
    int task = 0;  // id of the last finished task
    std::uint64_t seed = 0;
    BayesMlp net;
    std::vector<SubspaceBundle> bundles;
    std::vector<PlnGenerator> plns;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);

// Reads gzip or plain JSON (gzread is transparent for uncompressed files).
// Throws FormatError on unreadable files or schema mismatches.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace eclrr
