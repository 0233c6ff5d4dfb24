#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace lake {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

bool is_hex_digest(std::string_view s);

/// splitmix64; the harness derives every per-agent stream from it.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) from the top 53 bits.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    std::uint64_t below(std::uint64_t bound) { return bound == 0 ? 0 : next() % bound; }

    // UniformRandomBitGenerator, so <algorithm> shuffles accept it.
    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next(); }

private:
    std::uint64_t state_;
};

/// RFC 4122 version-4 UUID drawn from `rng`.
std::string uuid_v4(SplitMix64& rng);

/// UUIDv4 from the process-wide random device.
std::string random_uuid_v4();

} // namespace lake
