#pragma once

// Counter-based splittable random streams. A stream is a 64-bit key; its
// k-th output is a fixed mixing function of (key, k), so streams can be
// derived for any (seed, replication, purpose) triple without shared state.

#include <cstdint>
#include <limits>

namespace qaoi {

constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

enum class StreamPurpose : std::uint64_t {
    Channel = 1,
    Policy = 2,
    Initial = 3,
    Arrival = 0x100,  // + source index
    Query = 0x200,    // + source index
};

class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit constexpr CounterRng(std::uint64_t key = 0) : key_(key) {}

    static constexpr CounterRng derive(std::uint64_t seed, std::uint64_t replication, std::uint64_t purpose) {
        return CounterRng(mix64(mix64(mix64(seed) ^ replication) + 0x9e3779b97f4a7c15ull * (purpose + 1)));
    }
    static constexpr CounterRng derive(std::uint64_t seed, std::uint64_t replication, StreamPurpose purpose,
                                       std::uint64_t index = 0) {
        return derive(seed, replication, static_cast<std::uint64_t>(purpose) + index);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() { return mix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

    /// Uniform double in [0, 1) with 53 random bits.
    constexpr double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
    constexpr bool bernoulli(double prob) { return uniform() < prob; }

    constexpr std::uint64_t key() const { return key_; }
    constexpr std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace qaoi
