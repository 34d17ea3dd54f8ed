#include "sweepkit/rng.hpp"

namespace sweepkit {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64()
{
    state_ += kGolden;
    return mix64(state_);
}

double Rng::uniform01()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n)
{
    const auto k = static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
    return k < n ? k : n - 1;
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index)
{
    return mix64(mix64(master ^ fnv1a64(purpose)) + (index + 1) * kGolden);
}

} // namespace sweepkit
