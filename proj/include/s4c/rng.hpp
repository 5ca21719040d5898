#pragma once

#include <cstdint>
#include <span>

namespace s4c {

// Counter-based deterministic RNG. Every draw hashes (seed, stream, counter), so a
// given seed reproduces the exact same sequence on any platform and independent
// streams can be split off without sharing state.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) : seed_(seed), stream_(stream) {}

    uint64_t next_u64();
    double   uniform();                                 // [0, 1)
    double   gaussian(double mean = 0.0, double stddev = 1.0);
    int      sample(std::span<const double> probs);     // inverse-CDF walk

    // Derived stream with its own counter; deterministic in (seed, stream, key).
    Rng split(uint64_t key) const;

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t seed_;
    uint64_t stream_;
    uint64_t counter_ = 0;
};

} // namespace s4c
