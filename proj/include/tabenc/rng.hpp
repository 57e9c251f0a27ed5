#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace tabenc {

/// Master seed of an experiment. Streams are derived per (tag, index).
struct Seed {
    std::uint64_t master = 0;
};

/// xoshiro256** seeded through SplitMix64. All derived quantities (integer
/// ranges, reals, shuffles) use fixed algorithms so output is identical on
/// every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    using result_type = std::uint64_t;
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next(); }

    std::uint64_t next();
    /// Uniform integer in [lo, hi], unbiased (rejection sampling).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1)); }
    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01();
    bool bernoulli(double p) { return uniform01() < p; }
    /// Standard normal (Box-Muller, no cached spare).
    double normal();

    template <typename T>
    void shuffle(std::span<T> xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view bytes);

/// Independent, reproducible stream for (seed.master, tag, index).
Rng derive_rng(Seed seed, std::string_view tag, std::uint64_t index);

}  // namespace tabenc
