#pragma once

#include <cstdint>

namespace homsim {

// xoshiro256++ with splitmix64 key expansion. All samplers are implemented
// here rather than with std::*_distribution so that streams are bit-identical
// across platforms and standard libraries, and so that every (seed, index,
// tag) triple yields an independent substream.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag);

    std::uint64_t next_u64();
    double uniform01();                // in [0, 1)
    double uniform_pos();              // in (0, 1]
    double gaussian();                 // standard normal, Box-Muller
    double exponential(double mean);   // mean >= 0; mean 0 returns 0
    int poisson(double mean);          // Knuth's method, intended for small means

private:
    std::uint64_t s_[4];
};

// Stream tags used across the simulator; gathered here so substreams never collide.
namespace rng_tag {
inline constexpr std::uint64_t kPair = 0x70616972;      // per pulse-pair simulation
inline constexpr std::uint64_t kGate = 0x67617465;      // standalone event gating
inline constexpr std::uint64_t kSweepSeed = 0x73776565; // per-point seeds in sweeps
inline constexpr std::uint64_t kNoise = 0x6e6f6973;     // synthetic-data helpers in tests
}  // namespace rng_tag

// splitmix64 finalizer, exposed for deterministic key derivation (sweep-point seeds).
std::uint64_t mix64(std::uint64_t x);

}  // namespace homsim
