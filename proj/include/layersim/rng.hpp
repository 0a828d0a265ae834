#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace layersim {

// Deterministic RNG. The engine is mt19937_64 but all distributions are
// hand-rolled from raw bits, so identical seeds give identical streams on
// every platform/toolchain.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    uint64_t bits() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return double(bits() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_index(uint64_t n) {
        return uint64_t((static_cast<unsigned __int128>(bits()) * n) >> 64);
    }

    // standard normal, Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

  private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// SplitMix64 mix, used to derive independent per-sequence seeds.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace layersim
