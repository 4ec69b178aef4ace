#pragma once

#include <cmath>
#include <cstdint>

namespace mtbp {

/* Counter-style random stream: the state walks a fixed-increment lattice and
 * every output is a finalizer hash of the state, so stream (seed, id) is a
 * pure function of its inputs and draw index. Streams for distinct ids are
 * decorrelated by double-hashing the id into the start point. All sampling
 * helpers are implemented here (not std::<distribution>) so sequences are
 * identical across standard libraries and across serial/parallel schedules.
 */
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id)
        : state_(mix(mix(seed + golden) ^ mix(stream_id * golden + 0x632be59bd9b4e019ull))) {}

    std::uint64_t next_u64() {
        state_ += golden;
        return mix(state_);
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // exponential with given rate; uniform()<1 keeps the log argument positive
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

private:
    static constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ull;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}
