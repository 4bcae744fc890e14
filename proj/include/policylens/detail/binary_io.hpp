#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "policylens/detail/hash.hpp"
#include "policylens/error.hpp"

namespace policylens::detail {

static_assert(std::endian::native == std::endian::little,
              "binary model formats are little-endian");

/// Append-only byte buffer for model files.
class byte_writer {
  public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value)
    {
        auto const* p = reinterpret_cast<char const*>(&value);
        m_bytes.append(p, sizeof(T));
    }

    void put_string(std::string_view s)
    {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        m_bytes.append(s);
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    void put_array(std::vector<T> const& values)
    {
        put<std::uint64_t>(values.size());
        auto const* p = reinterpret_cast<char const*>(values.data());
        m_bytes.append(p, values.size() * sizeof(T));
    }

    void put_raw(std::string_view s) { m_bytes.append(s); }

    [[nodiscard]] std::string const& bytes() const noexcept { return m_bytes; }

    /// Appends the FNV-1a 64 checksum of everything written so far.
    void seal() { put<std::uint64_t>(fnv1a_64(m_bytes)); }

  private:
    std::string m_bytes;
};

class byte_reader {
  public:
    explicit byte_reader(std::string_view bytes) : m_bytes(bytes) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get()
    {
        need(sizeof(T));
        T value;
        std::memcpy(&value, m_bytes.data() + m_pos, sizeof(T));
        m_pos += sizeof(T);
        return value;
    }

    std::string get_string()
    {
        auto n = get<std::uint32_t>();
        need(n);
        std::string s(m_bytes.substr(m_pos, n));
        m_pos += n;
        return s;
    }

    template <typename T>
        requires std::is_arithmetic_v<T>
    std::vector<T> get_array()
    {
        auto n = get<std::uint64_t>();
        if (n > (m_bytes.size() - m_pos) / sizeof(T)) {
            throw corruption_error("array length exceeds file size");
        }
        std::vector<T> values(n);
        std::memcpy(values.data(), m_bytes.data() + m_pos, n * sizeof(T));
        m_pos += n * sizeof(T);
        return values;
    }

    std::string_view get_raw(std::size_t n)
    {
        need(n);
        auto s = m_bytes.substr(m_pos, n);
        m_pos += n;
        return s;
    }

    [[nodiscard]] bool at_end() const noexcept { return m_pos == m_bytes.size(); }

  private:
    void need(std::size_t n) const
    {
        if (m_bytes.size() - m_pos < n) {
            throw corruption_error("unexpected end of data");
        }
    }

    std::string_view m_bytes;
    std::size_t m_pos = 0;
};

/// Verifies and strips the trailing checksum written by byte_writer::seal.
inline std::string_view verify_sealed(std::string_view bytes)
{
    if (bytes.size() < sizeof(std::uint64_t)) {
        throw corruption_error("file too short");
    }
    auto payload = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + payload.size(), sizeof(stored));
    if (stored != fnv1a_64(payload)) {
        throw corruption_error("checksum mismatch");
    }
    return payload;
}

inline std::string read_file(std::string const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw error("cannot open '" + path + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(std::string const& path, std::string_view bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw error("cannot open '" + path + "' for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw error("failed writing '" + path + "'");
    }
}

}  // namespace policylens::detail
