#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace eclrr {

// Deterministic RNG: xoshiro256++ seeded via splitmix64 from a (seed, stream)
// pair. Identical (seed, stream) gives a bit-identical draw sequence on every
// platform, which std::mt19937 + std::normal_distribution does not guarantee
// (the distribution adapters are implementation-defined). Gaussians come from
// Box-Muller; the spare draw is cached in the state so the stream stays
// reproducible under copying.
class RngState {
  public:
    explicit RngState(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    double uniform();                       // [0, 1), 53-bit resolution
    double uniform(double lo, double hi);   // [lo, hi)
    std::uint64_t uniform_index(std::uint64_t n);  // [0, n), unbiased
    double gaussian();                      // N(0, 1)

    // Derives an independent stream from this one's identity; drawing from the
    // parent afterwards does not affect the child.
    RngState split(std::uint64_t substream) const;

    // Seeded in-place Fisher-Yates shuffle of 0..n-1 index vectors and the like.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

  private:
    std::uint64_t s_[4];
    std::uint64_t seed_;
    std::uint64_t stream_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace eclrr
