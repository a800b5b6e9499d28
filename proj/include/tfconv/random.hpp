#pragma once

// Reproducible random numbers.
//
// Rng is SplitMix64 used as a counter-based generator: the n-th output is
// mix(seed + n * 0x9E3779B97F4A7C15), where mix is the SplitMix64 finalizer
// (xor-shift 30/27/31 with multipliers 0xBF58476D1CE4E5B9, 0x94D049BB133111EB).
// Uniforms take the top 53 bits; Gaussians use the Box-Muller transform and
// consume two uniforms per pair, caching the second variate. The integer
// stream is fully specified here; Gaussian draws additionally depend only on
// the platform's log/sin/cos (unlike std::normal_distribution, whose algorithm
// varies between standard libraries).

#include <cmath>
#include <cstdint>
#include <limits>

#include "tfconv/matrix.hpp"

namespace tfconv {

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(seed_ + (++counter_) * kGolden); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer on [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>((*this)() % span);
    }

    /// Standard normal variate.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // (0, 1] keeps the logarithm finite.
        const double u1 = static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent stream derived from this generator's seed and a tag.
    Rng fork(std::uint64_t tag) const { return Rng(mix(seed_ ^ mix(tag + kGolden))); }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// rows x cols matrix with i.i.d. N(0, stddev^2) entries, filled row-major.
template <Real T = double>
Matrix<T> gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev = 1.0) {
    Matrix<T> m(rows, cols);
    for (auto& v : m.data()) v = T(rng.normal(0.0, stddev));
    return m;
}

}  // namespace tfconv
