// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace mgfn {

/// Counter-based, splittable generator.
///
/// Every draw is `mix(key + golden * counter)` where `mix` is the SplitMix64
/// finalizer, so a stream is fully described by its 64-bit key and position.
/// `split(name)` derives an independent child key from the parent key and a
/// FNV-1a hash of `name`; the parent stream is not advanced. The algorithm is
/// small enough to reimplement bit-exactly in any language.
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "splitmix64-counter/fnv1a-split";

    explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6d67666e2d726e67ULL)) {}

    Rng split(std::string_view name) const;
    Rng split(std::uint64_t index) const;

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller; consumes two draws, no caching.
    double normal();
    /// Uniform integer in [0, n) by rejection sampling.
    std::uint64_t below(std::uint64_t n);

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    static std::uint64_t mix(std::uint64_t z);

private:
    struct FromKey {};
    Rng(FromKey, std::uint64_t key) : key_(key) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace mgfn
