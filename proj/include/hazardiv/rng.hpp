#pragma once

#include <array>
#include <cstdint>

namespace hazardiv {

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// splitmix64 finalizer, used to derive seeds for independent cells.
std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based stream: key = seed, counter = (block, stream). Streams with
/// different indices never overlap, so replicate r can be generated on any
/// thread and give the same draws.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Exponential with the given rate.
    double exponential(double rate);
    int bernoulli(double p);

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;  // 32-bit words consumed from buffer_
};

}  // namespace hazardiv
