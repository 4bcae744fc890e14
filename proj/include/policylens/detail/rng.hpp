#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace policylens::detail {

// std distributions are implementation-defined; these draws are portable
// given the fully specified mt19937_64 engine.

inline std::uint64_t uniform_below(std::mt19937_64& gen, std::uint64_t bound)
{
    if (bound <= 1) {
        return 0;
    }
    std::uint64_t const limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
    std::uint64_t x = gen();
    while (x >= limit) {
        x = gen();
    }
    return x % bound;
}

/// Uniform real in [0, 1) with 53 bits of precision.
inline double uniform_unit(std::mt19937_64& gen)
{
    return static_cast<double>(gen() >> 11U) * 0x1.0p-53;
}

inline double uniform_real(std::mt19937_64& gen, double lo, double hi)
{
    return lo + (hi - lo) * uniform_unit(gen);
}

template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& gen)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(uniform_below(gen, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace policylens::detail
