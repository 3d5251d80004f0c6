#pragma once

#include <cstdint>
#include <algorithm>
#include <initializer_list>
#include <limits>
#include <random>
#include <string_view>

namespace dashlab {

// Seeded stream for every stochastic step of the lab.
//
// std::mt19937_64 engine with in-house uniform, normal and bounded-integer draws.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Box-Muller; one engine pair per draw, no cached second variate.
    double normal(double mean = 0.0, double sd = 1.0);
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    template <class It>
    void shuffle(It first, It last)
    {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            std::iter_swap(first + (i - 1), first + j);
        }
    }

private:
    std::mt19937_64 engine_;
};

std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t tag);
std::uint64_t mixSeed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);
std::uint64_t hashTag(std::string_view text);

}  // namespace dashlab
