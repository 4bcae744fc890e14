#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace policylens::detail {

inline constexpr std::uint32_t fnv1a_32(std::string_view bytes) noexcept
{
    std::uint32_t h = 2166136261U;
    for (char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 16777619U;
    }
    return h;
}

inline constexpr std::uint64_t fnv1a_64_init = 14695981039346656037ULL;

inline constexpr std::uint64_t fnv1a_64(std::string_view bytes,
                                        std::uint64_t h = fnv1a_64_init) noexcept
{
    for (char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t fnv1a_64(std::span<std::byte const> bytes,
                              std::uint64_t h = fnv1a_64_init) noexcept
{
    for (auto b : bytes) {
        h ^= static_cast<std::uint8_t>(b);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace policylens::detail
