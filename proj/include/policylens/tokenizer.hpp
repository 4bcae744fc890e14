#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace policylens {

// Rule table (see docs/tokenizer.md):
//   1. ASCII letters are lowercased; U+2018/U+2019 become '.
//   2. Whitespace separates chunks.
//   3. Trailing  . , ; : ! ? ) ] } " '  are detached one at a time, except
//      the final '.' of a dotted abbreviation such as "e.g." or "u.s.".
//   4. A chunk equal to a contraction suffix ('s 're 've 'll 'd 'm n't) is kept.
//   5. Leading  ( [ { " ' `  are detached one at a time.
//   6. A word ending in n't splits before n't ("don't" -> do n't,
//      "can't" -> ca n't); a word ending in 's 're 've 'll 'd 'm splits
//      before the apostrophe.

namespace detail {

inline constexpr std::string_view leading_punct = "([{\"'`";
inline constexpr std::string_view trailing_punct = ".,;:!?)]}\"'";
inline constexpr std::array<std::string_view, 6> clitics = {"'s", "'re", "'ve", "'ll", "'d", "'m"};

inline bool is_dotted_abbreviation(std::string_view s)
{
    // ([a-z]\.){2,}
    if (s.size() < 4 || s.size() % 2 != 0) {
        return false;
    }
    for (std::size_t i = 0; i < s.size(); i += 2) {
        if (std::isalpha(static_cast<unsigned char>(s[i])) == 0 || s[i + 1] != '.') {
            return false;
        }
    }
    return true;
}

inline bool is_clitic(std::string_view s)
{
    return s == "n't" || std::find(clitics.begin(), clitics.end(), s) != clitics.end();
}

inline std::string normalize_for_tokens(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        auto c = static_cast<unsigned char>(text[i]);
        // U+2018 / U+2019 are E2 80 98 / E2 80 99.
        if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
            (static_cast<unsigned char>(text[i + 2]) == 0x98 || static_cast<unsigned char>(text[i + 2]) == 0x99)) {
            out += '\'';
            i += 2;
            continue;
        }
        out += c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c);
    }
    return out;
}

inline void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out)
{
    std::vector<std::string> tail;
    while (!chunk.empty() && trailing_punct.find(chunk.back()) != std::string_view::npos) {
        if (chunk.back() == '.' && is_dotted_abbreviation(chunk)) {
            break;
        }
        if (is_clitic(chunk)) {
            break;
        }
        tail.emplace_back(1, chunk.back());
        chunk.remove_suffix(1);
    }
    if (is_clitic(chunk)) {
        out.emplace_back(chunk);
    } else {
        while (!chunk.empty() && leading_punct.find(chunk.front()) != std::string_view::npos &&
               !is_clitic(chunk)) {
            out.emplace_back(1, chunk.front());
            chunk.remove_prefix(1);
        }
        if (is_clitic(chunk)) {
            out.emplace_back(chunk);
        } else if (!chunk.empty()) {
            bool split = false;
            if (chunk.size() > 3 && chunk.ends_with("n't")) {
                out.emplace_back(chunk.substr(0, chunk.size() - 3));
                out.emplace_back("n't");
                split = true;
            } else {
                for (auto c : clitics) {
                    if (chunk.size() > c.size() && chunk.ends_with(c)) {
                        out.emplace_back(chunk.substr(0, chunk.size() - c.size()));
                        out.emplace_back(c);
                        split = true;
                        break;
                    }
                }
            }
            if (!split) {
                out.emplace_back(chunk);
            }
        }
    }
    out.insert(out.end(), tail.rbegin(), tail.rend());
}

}  // namespace detail

/// Lowercased Penn-Treebank-style tokens. Deterministic; idempotent on its own
/// space-joined output.
inline std::vector<std::string> tokenize(std::string_view text)
{
    auto norm = detail::normalize_for_tokens(text);
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < norm.size()) {
        while (i < norm.size() && std::isspace(static_cast<unsigned char>(norm[i])) != 0) {
            ++i;
        }
        std::size_t j = i;
        while (j < norm.size() && std::isspace(static_cast<unsigned char>(norm[j])) == 0) {
            ++j;
        }
        if (j > i) {
            detail::tokenize_chunk(std::string_view(norm).substr(i, j - i), out);
        }
        i = j;
    }
    return out;
}

/// True when the token carries at least one letter or digit.
inline bool is_word_token(std::string_view token)
{
    return std::any_of(token.begin(), token.end(), [](char c) {
        auto u = static_cast<unsigned char>(c);
        return u >= 0x80 || std::isalnum(u) != 0;
    });
}

inline std::vector<std::string> word_tokens(std::string_view text)
{
    auto tokens = tokenize(text);
    std::erase_if(tokens, [](std::string const& t) { return !is_word_token(t); });
    return tokens;
}

/// Tokens padded (with empty strings) or truncated to exactly `max_len`.
struct token_sequence {
    std::vector<std::string> tokens;
    std::size_t max_len = 300;

    /// Number of real (non-padding) tokens.
    [[nodiscard]] std::size_t length() const noexcept
    {
        return std::min(tokens.size(), max_len);
    }

    [[nodiscard]] std::vector<std::string> padded() const
    {
        std::vector<std::string> out(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(length()));
        out.resize(max_len);
        return out;
    }
};

inline token_sequence make_sequence(std::string_view text, std::size_t max_len = 300)
{
    return {tokenize(text), max_len};
}

}  // namespace policylens
