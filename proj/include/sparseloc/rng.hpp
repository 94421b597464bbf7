#pragma once

#include <array>
#include <cstdint>

namespace sparseloc {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// SplitMix64 finalizer; used to fold identifiers into stream ids.
std::uint64_t mix64(std::uint64_t x);

/// Combines two 64-bit identifiers into one stream id (order-sensitive).
std::uint64_t combine_ids(std::uint64_t a, std::uint64_t b);

/// Counter-based random stream. The sequence is a pure function of
/// (seed, stream): any stream can be regenerated independently of how many
/// others were drawn before it, in any order, on any thread.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
};

}  // namespace sparseloc
