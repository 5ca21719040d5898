#include "s4c/rng.hpp"

#include <cmath>

#include "s4c/errors.hpp"

namespace s4c {

static constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

static uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27; x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

uint64_t Rng::next_u64() {
    uint64_t h = mix64(seed_ ^ (kGolden * (stream_ + 1)));
    h = mix64(h ^ (counter_ * kGolden + 1));
    ++counter_;
    return h;
}

double Rng::uniform() {
    // 53 mantissa bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian(double mean, double stddev) {
    // Box-Muller, cosine branch only; two uniforms per draw keeps the stream simple.
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

int Rng::sample(std::span<const double> probs) {
    if (probs.empty()) throw ArgError("rng: cannot sample from empty distribution");
    double u = uniform();
    double acc = 0.0;
    int last_positive = -1;
    for (size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_positive = static_cast<int>(i);
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    if (last_positive < 0) throw ArgError("rng: distribution has no positive mass");
    return last_positive;  // u landed in the rounding gap past the final cumsum
}

Rng Rng::split(uint64_t key) const {
    return Rng(seed_, mix64(stream_ ^ (kGolden * (key + 1))));
}

} // namespace s4c
