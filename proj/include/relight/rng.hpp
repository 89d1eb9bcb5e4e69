#pragma once

#include <cstdint>

namespace relight {

/// SplitMix64 finalizer; a strong 64-bit integer mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

/// Counter-based random stream: value(dim) depends only on (key, dim), so any
/// evaluation order or thread schedule reproduces the same numbers.
class SampleStream {
public:
    constexpr explicit SampleStream(std::uint64_t key) : key_(key) {}

    static constexpr SampleStream for_sample(std::uint64_t seed, std::uint64_t pixel, std::uint64_t sample) {
        return SampleStream(hash_combine(hash_combine(mix64(seed), pixel), sample));
    }

    constexpr SampleStream child(std::uint64_t tag) const { return SampleStream(hash_combine(key_, tag)); }

    /// Uniform double in [0, 1).
    constexpr double uniform(std::uint32_t dim) const {
        return static_cast<double>(hash_combine(key_, dim) >> 11) * 0x1.0p-53;
    }

    constexpr std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
};

}  // namespace relight
