#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace s5cl {

// Deterministic, splittable random stream. All draws are derived from the raw
// mt19937_64 output so sequences are identical across platforms (the standard
// library distributions are implementation-defined and must not be used here).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(expand_seed(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi)
    {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next_u64()); // full 64-bit range
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return lo + static_cast<std::int64_t>(draw % range);
    }

    // Standard normal via Box-Muller; one value per call, no cached state.
    double normal()
    {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Child stream derived from the creation seed, not the current state:
    // split(k) yields the same stream no matter how many draws happened before.
    Rng split(std::uint64_t stream) const { return Rng(mix(seed_, stream)); }

    std::uint64_t seed() const { return seed_; }

    // Seeded Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n)
    {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

    template <typename T>
    void shuffle(std::vector<T>& values)
    {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    static std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream)
    {
        return splitmix64(splitmix64(seed) ^ (stream + 0x9E3779B97F4A7C15ULL));
    }

    static std::mt19937_64 expand_seed(std::uint64_t seed)
    {
        return std::mt19937_64(splitmix64(seed ^ 0xA5A5A5A55A5A5A5AULL));
    }

    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

// Fixed stream ids so independent consumers of one run seed never collide.
namespace stream {
inline constexpr std::uint64_t model_init = 1;
inline constexpr std::uint64_t epoch_base = 2;
inline constexpr std::uint64_t dataset_colors = 3;
inline constexpr std::uint64_t dataset_images = 4;
inline constexpr std::uint64_t split_shuffle = 5;
inline constexpr std::uint64_t eval_views = 6;
inline constexpr std::uint64_t test_pool = 7;
} // namespace stream

} // namespace s5cl
