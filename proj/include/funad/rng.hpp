#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace funad {

/// Seeded random source with platform-independent output.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard.
/// The distribution helpers are written out here because the standard
/// library distributions are implementation-defined, and every artifact
/// produced with a seed must be byte-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). Requires n > 0.
    std::size_t uniform_index(std::size_t n);

    /// Standard normal via the Box-Muller transform.
    double normal();

    /// Independent child generator for a named sub-stream.
    [[nodiscard]] Rng fork(std::uint64_t stream) const;

    template <class T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

    /// k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

/// SplitMix64 finalizer, used to derive stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace funad
