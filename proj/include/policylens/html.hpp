#pragma once

// Tolerant HTML reader: enough of the tree-construction rules to recover
// block structure from real-world policy pages. Not a conforming HTML5 parser.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace policylens::html {

struct node {
    std::string tag;  // lowercase element name; empty for text nodes
    std::map<std::string, std::string> attrs;
    std::string text;  // text nodes only, entities decoded
    std::vector<std::unique_ptr<node>> children;
    node* parent = nullptr;

    [[nodiscard]] bool is_text() const noexcept { return tag.empty(); }

    node* append(std::unique_ptr<node> child)
    {
        child->parent = this;
        children.push_back(std::move(child));
        return children.back().get();
    }

    [[nodiscard]] std::string attr(std::string const& name) const
    {
        auto it = attrs.find(name);
        return it == attrs.end() ? std::string{} : it->second;
    }
};

inline std::unique_ptr<node> make_element(std::string tag)
{
    auto n = std::make_unique<node>();
    n->tag = std::move(tag);
    return n;
}

inline std::unique_ptr<node> make_text(std::string text)
{
    auto n = std::make_unique<node>();
    n->text = std::move(text);
    return n;
}

inline bool is_void_element(std::string_view tag)
{
    static std::set<std::string_view> const v{"area", "base",  "br",    "col",    "embed", "hr",  "img",
                                              "input", "link", "meta", "param", "source", "track", "wbr"};
    return v.contains(tag);
}

/// Elements whose content is raw text up to the matching end tag.
inline bool is_raw_text_element(std::string_view tag)
{
    return tag == "script" || tag == "style" || tag == "textarea" || tag == "title" || tag == "noscript" ||
           tag == "template" || tag == "xmp";
}

inline bool is_block_element(std::string_view tag)
{
    static std::set<std::string_view> const b{
        "address", "article", "aside",  "blockquote", "body",   "caption", "center", "dd",     "details",
        "dialog",  "div",     "dl",     "dt",         "fieldset", "figcaption", "figure", "footer", "form",
        "h1",      "h2",      "h3",     "h4",         "h5",     "h6",      "header", "hr",     "html",
        "li",      "main",    "nav",    "ol",         "p",      "pre",     "section", "summary", "table",
        "tbody",   "td",      "tfoot",  "th",         "thead",  "tr",      "ul"};
    return b.contains(tag);
}

inline bool is_list_element(std::string_view tag) { return tag == "ul" || tag == "ol"; }

/// Block starts that implicitly close an open <p>.
inline bool closes_paragraph(std::string_view tag)
{
    return is_block_element(tag) && tag != "li" && tag != "dd" && tag != "dt" && tag != "td" && tag != "th" &&
           tag != "tr" && tag != "caption" && tag != "tbody" && tag != "thead" && tag != "tfoot" && tag != "body" &&
           tag != "html";
}

namespace detail {

inline void append_utf8(std::string& out, std::uint32_t cp)
{
    if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        cp = 0xFFFD;
    }
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

inline std::uint32_t named_entity(std::string_view name)
{
    static const std::map<std::string_view, std::uint32_t> table{
        {"amp", '&'},      {"lt", '<'},       {"gt", '>'},        {"quot", '"'},     {"apos", '\''},
        {"nbsp", 0xA0},    {"copy", 0xA9},    {"reg", 0xAE},      {"trade", 0x2122}, {"mdash", 0x2014},
        {"ndash", 0x2013}, {"hellip", 0x2026}, {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201C},
        {"rdquo", 0x201D}, {"bull", 0x2022},  {"middot", 0xB7},   {"sect", 0xA7},    {"para", 0xB6},
        {"laquo", 0xAB},   {"raquo", 0xBB},   {"eacute", 0xE9},   {"egrave", 0xE8},  {"aacute", 0xE1},
        {"agrave", 0xE0},  {"iacute", 0xED},  {"oacute", 0xF3},   {"uacute", 0xFA},  {"ntilde", 0xF1},
        {"ccedil", 0xE7},  {"uuml", 0xFC},    {"ouml", 0xF6},     {"auml", 0xE4},    {"szlig", 0xDF},
        {"euro", 0x20AC},  {"pound", 0xA3},   {"yen", 0xA5},      {"cent", 0xA2},    {"deg", 0xB0},
        {"times", 0xD7},   {"shy", 0xAD},     {"zwnj", 0x200C},   {"zwj", 0x200D},   {"ensp", 0x2002},
        {"emsp", 0x2003},  {"thinsp", 0x2009},
    };
    auto it = table.find(name);
    return it == table.end() ? 0 : it->second;
}

}  // namespace detail

/// Decodes named (common subset) and numeric character references.
/// Unknown references are kept verbatim.
inline std::string decode_entities(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out += s[i];
            continue;
        }
        auto semi = s.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 12) {
            out += '&';
            continue;
        }
        auto body = s.substr(i + 1, semi - i - 1);
        std::uint32_t cp = 0;
        if (!body.empty() && body[0] == '#') {
            bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
            auto digits = body.substr(hex ? 2 : 1);
            bool ok = !digits.empty();
            for (char c : digits) {
                auto u = static_cast<unsigned char>(c);
                ok = ok && (hex ? std::isxdigit(u) != 0 : std::isdigit(u) != 0);
            }
            if (ok) {
                cp = static_cast<std::uint32_t>(std::min<unsigned long>(std::stoul(std::string(digits), nullptr, hex ? 16 : 10), 0x110000UL));
                if (cp == 0) {
                    cp = 0xFFFD;
                }
            }
        } else {
            cp = detail::named_entity(body);
        }
        if (cp == 0) {
            out += '&';
            continue;
        }
        detail::append_utf8(out, cp);
        i = semi;
    }
    return out;
}

namespace detail {

inline std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f'; }

inline std::size_t find_ci(std::string_view hay, std::string_view needle, std::size_t from)
{
    for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < needle.size() && match; ++j) {
            match = std::tolower(static_cast<unsigned char>(hay[i + j])) == static_cast<unsigned char>(needle[j]);
        }
        if (match) {
            return i;
        }
    }
    return std::string_view::npos;
}

class tree_builder {
  public:
    explicit tree_builder(node* root) : m_root(root) { m_stack.push_back(root); }

    void text(std::string_view raw)
    {
        if (raw.empty()) {
            return;
        }
        auto* top = m_stack.back();
        if (!top->children.empty() && top->children.back()->is_text()) {
            top->children.back()->text += decode_entities(raw);
        } else {
            top->append(make_text(decode_entities(raw)));
        }
    }

    void raw_text(std::string const& tag, std::map<std::string, std::string> attrs, std::string_view content)
    {
        auto el = make_element(tag);
        el->attrs = std::move(attrs);
        if (!content.empty()) {
            el->append(make_text(std::string(content)));
        }
        m_stack.back()->append(std::move(el));
    }

    void start(std::string const& tag, std::map<std::string, std::string> attrs, bool self_closing)
    {
        if (closes_paragraph(tag)) {
            close_in_scope("p", {});
        }
        if (tag == "li") {
            close_in_scope("li", {"ul", "ol"});
        } else if (tag == "dt" || tag == "dd") {
            close_in_scope("dt", {"dl"});
            close_in_scope("dd", {"dl"});
        } else if (tag == "tr") {
            close_in_scope("tr", {"table"});
        } else if (tag == "td" || tag == "th") {
            close_in_scope("td", {"tr", "table"});
            close_in_scope("th", {"tr", "table"});
        }
        auto el = make_element(tag);
        el->attrs = std::move(attrs);
        auto* added = m_stack.back()->append(std::move(el));
        if (!self_closing && !is_void_element(tag)) {
            m_stack.push_back(added);
        }
    }

    void end(std::string const& tag)
    {
        for (std::size_t i = m_stack.size(); i-- > 1;) {
            if (m_stack[i]->tag == tag) {
                m_stack.resize(i);
                return;
            }
        }
        // Stray end tag: ignored. </p> without an open <p> is an empty paragraph.
        if (tag == "p") {
            m_stack.back()->append(make_element("p"));
        }
    }

  private:
    // Closes the nearest open `tag` unless a boundary element intervenes.
    void close_in_scope(std::string_view tag, std::vector<std::string_view> const& boundaries)
    {
        for (std::size_t i = m_stack.size(); i-- > 1;) {
            auto const& t = m_stack[i]->tag;
            if (t == tag) {
                m_stack.resize(i);
                return;
            }
            if (std::find(boundaries.begin(), boundaries.end(), t) != boundaries.end()) {
                return;
            }
            // A <p> never implicitly closes across another block container.
            if (tag == "p" && is_block_element(t)) {
                return;
            }
        }
    }

    node* m_root;
    std::vector<node*> m_stack;
};

inline std::map<std::string, std::string> parse_attributes(std::string_view s, bool& self_closing)
{
    std::map<std::string, std::string> attrs;
    self_closing = false;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (is_space(s[i]) || s[i] == '/')) {
            if (s[i] == '/' && i + 1 == s.size()) {
                self_closing = true;
            }
            ++i;
        }
        std::size_t name_start = i;
        while (i < s.size() && !is_space(s[i]) && s[i] != '=' && s[i] != '/') {
            ++i;
        }
        if (i == name_start) {
            break;
        }
        auto name = lower(s.substr(name_start, i - name_start));
        while (i < s.size() && is_space(s[i])) {
            ++i;
        }
        std::string value;
        if (i < s.size() && s[i] == '=') {
            ++i;
            while (i < s.size() && is_space(s[i])) {
                ++i;
            }
            if (i < s.size() && (s[i] == '"' || s[i] == '\'')) {
                char q = s[i++];
                auto close = s.find(q, i);
                if (close == std::string_view::npos) {
                    close = s.size();
                }
                value = decode_entities(s.substr(i, close - i));
                i = std::min(s.size(), close + 1);
            } else {
                std::size_t vs = i;
                while (i < s.size() && !is_space(s[i])) {
                    ++i;
                }
                value = decode_entities(s.substr(vs, i - vs));
            }
        }
        attrs.emplace(std::move(name), std::move(value));
    }
    return attrs;
}

}  // namespace detail

/// Parses `source` into a tree rooted at an element with tag "#document".
/// Never throws: malformed markup degrades to text or is dropped.
inline std::unique_ptr<node> parse(std::string_view source)
{
    auto root = make_element("#document");
    detail::tree_builder b(root.get());
    std::size_t i = 0;
    std::size_t text_start = 0;
    auto flush = [&](std::size_t upto) {
        if (upto > text_start) {
            b.text(source.substr(text_start, upto - text_start));
        }
    };
    while (i < source.size()) {
        if (source[i] != '<') {
            ++i;
            continue;
        }
        auto rest = source.substr(i);
        if (rest.starts_with("<!--")) {
            flush(i);
            auto close = source.find("-->", i + 4);
            i = close == std::string_view::npos ? source.size() : close + 3;
            text_start = i;
            continue;
        }
        if (rest.starts_with("<!") || rest.starts_with("<?")) {
            flush(i);
            auto close = source.find('>', i);
            i = close == std::string_view::npos ? source.size() : close + 1;
            text_start = i;
            continue;
        }
        bool closing = rest.size() > 1 && rest[1] == '/';
        std::size_t name_start = i + (closing ? 2 : 1);
        std::size_t j = name_start;
        while (j < source.size() && (std::isalnum(static_cast<unsigned char>(source[j])) != 0 || source[j] == '-' ||
                                     source[j] == ':' || source[j] == '_')) {
            ++j;
        }
        if (j == name_start || std::isalpha(static_cast<unsigned char>(source[name_start])) == 0) {
            ++i;  // a literal '<'
            continue;
        }
        // Find the end of the tag, honoring quoted attribute values.
        std::size_t k = j;
        char quote = 0;
        while (k < source.size()) {
            char c = source[k];
            if (quote != 0) {
                if (c == quote) {
                    quote = 0;
                }
            } else if (c == '"' || c == '\'') {
                quote = c;
            } else if (c == '>') {
                break;
            }
            ++k;
        }
        if (k >= source.size()) {
            break;  // unterminated tag: drop the remainder
        }
        flush(i);
        auto tag = detail::lower(source.substr(name_start, j - name_start));
        auto inner = source.substr(j, k - j);
        i = k + 1;
        text_start = i;
        if (closing) {
            b.end(tag);
            continue;
        }
        bool self_closing = false;
        auto attrs = detail::parse_attributes(inner, self_closing);
        if (is_raw_text_element(tag) && !self_closing) {
            auto close = detail::find_ci(source, "</" + tag, i);
            auto content_end = close == std::string_view::npos ? source.size() : close;
            b.raw_text(tag, std::move(attrs), source.substr(i, content_end - i));
            if (close == std::string_view::npos) {
                i = source.size();
            } else {
                auto gt = source.find('>', close);
                i = gt == std::string_view::npos ? source.size() : gt + 1;
            }
            text_start = i;
            continue;
        }
        b.start(tag, std::move(attrs), self_closing);
    }
    flush(source.size());
    return root;
}

/// Concatenated descendant text, with a space at block and <br> boundaries.
inline void collect_text(node const& n, std::string& out)
{
    if (n.is_text()) {
        out += n.text;
        return;
    }
    bool const block = is_block_element(n.tag) || n.tag == "br";
    if (block) {
        out += ' ';
    }
    for (auto const& c : n.children) {
        collect_text(*c, out);
    }
    if (block) {
        out += ' ';
    }
}

/// Collapses runs of whitespace (including no-break space) to one space and trims.
inline std::string normalize_space(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        bool space = detail::is_space(c) || c == '\v';
        std::size_t skip = 0;
        if (!space && static_cast<unsigned char>(c) == 0xC2 && i + 1 < s.size() &&
            static_cast<unsigned char>(s[i + 1]) == 0xA0) {
            space = true;
            skip = 1;
        }
        if (space) {
            pending = !out.empty();
            i += skip;
            continue;
        }
        if (pending) {
            out += ' ';
            pending = false;
        }
        out += c;
    }
    return out;
}

inline std::string text_content(node const& n)
{
    std::string raw;
    collect_text(n, raw);
    return normalize_space(raw);
}

}  // namespace policylens::html
