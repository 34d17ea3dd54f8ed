#pragma once

#include <cstdint>
#include <string_view>

namespace sweepkit {

/// Seeded generator shared by every stochastic operation.
///
/// The recurrence is SplitMix64: the state advances by the golden-ratio
/// increment 0x9E3779B97F4A7C15 and each output is the state passed through
/// the finalizer
///
///     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///     z =  z ^ (z >> 31)
///
/// uniform01() takes the top 53 bits of one output, giving u in [0, 1), and
/// uniform(a, b) = a + (b - a) * u. below(n) = floor(u * n). Only integer
/// arithmetic and one multiply by 2^-53 are involved, so sequences are
/// bit-identical on every IEEE-754 platform.
///
/// An Rng is single-owner. Parallel work derives child seeds with derive_seed().
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    double uniform01();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n);

    [[nodiscard]] std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z);

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

/// Child seed for (master, purpose, index):
///     mix64(mix64(master ^ fnv1a64(purpose)) + (index + 1) * 0x9E3779B97F4A7C15)
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0);

} // namespace sweepkit
