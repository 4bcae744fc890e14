#pragma once

// Policy document -> ordered segments: boilerplate removal, list
// aggregation, coarse block segmentation, then a similarity-graph split of
// long blocks into runs of related sentences.

#include <algorithm>
#include <cctype>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "policylens/corpus_io.hpp"
#include "policylens/embeddings.hpp"
#include "policylens/error.hpp"
#include "policylens/html.hpp"
#include "policylens/tokenizer.hpp"

namespace policylens {

enum class segment_origin : std::uint8_t { paragraph, merged_list, list_item_expanded, fine_split };

inline std::string_view to_string(segment_origin o)
{
    switch (o) {
        case segment_origin::paragraph: return "paragraph";
        case segment_origin::merged_list: return "merged_list";
        case segment_origin::list_item_expanded: return "list_item_expanded";
        case segment_origin::fine_split: return "fine_split";
    }
    return "paragraph";
}

inline segment_origin segment_origin_from_string(std::string_view s)
{
    for (auto o : {segment_origin::paragraph, segment_origin::merged_list, segment_origin::list_item_expanded,
                   segment_origin::fine_split}) {
        if (to_string(o) == s) {
            return o;
        }
    }
    throw error("unknown segment origin '" + std::string(s) + "'");
}

struct segment {
    std::string policy_id;
    std::size_t index = 0;
    std::string text;
    segment_origin origin = segment_origin::paragraph;

    friend bool operator==(segment const&, segment const&) = default;
};

struct segmenter_config {
    double threshold = 0.25;
    std::size_t min_sentences = 2;
    std::size_t short_item_max_words = 20;
};

// ---------------------------------------------------------------------------
// Sentences

namespace detail {

inline bool is_abbreviation(std::string_view word)
{
    static std::set<std::string_view> const known{
        "e.g.", "i.e.", "etc.", "vs.",  "mr.",  "mrs.", "ms.",  "dr.",   "prof.", "inc.", "ltd.", "co.",
        "corp.", "llc.", "no.", "st.",  "jr.",  "sr.",  "jan.", "feb.",  "mar.",  "apr.", "jun.", "jul.",
        "aug.", "sep.", "sept.", "oct.", "nov.", "dec.", "approx.", "dept.", "est.", "fig.", "viz.", "cf.",
        "al.",  "art.", "sec.", "para."};
    std::string w;
    for (char c : word) {
        w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (!w.empty() && (w.front() == '(' || w.front() == '"' || w.front() == '\'')) {
        w.erase(w.begin());
    }
    if (known.contains(w)) {
        return true;
    }
    // Single initials ("J.") and dotted forms ("u.s.", "a.m.").
    if (w.size() == 2 && std::isalpha(static_cast<unsigned char>(w[0])) != 0) {
        return true;
    }
    if (w.size() >= 4 && w.size() % 2 == 0) {
        for (std::size_t i = 0; i < w.size(); i += 2) {
            if (std::isalpha(static_cast<unsigned char>(w[i])) == 0 || w[i + 1] != '.') {
                return false;
            }
        }
        return true;
    }
    return false;
}

inline bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

}  // namespace detail

/// Rule-based sentence split. Each sentence keeps its trailing whitespace,
/// so the pieces concatenate back to `text` exactly.
inline std::vector<std::string> split_sentences(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (c != '.' && c != '!' && c != '?') {
            ++i;
            continue;
        }
        std::size_t end = i + 1;
        while (end < text.size() && (text[end] == '.' || text[end] == '!' || text[end] == '?' ||
                                     detail::is_closer(text[end]))) {
            ++end;
        }
        // UTF-8 closing quotes.
        while (end + 2 < text.size() + 1 && text.substr(end, 3) == "\xE2\x80\x9D") {
            end += 3;
        }
        while (end + 2 < text.size() + 1 && text.substr(end, 3) == "\xE2\x80\x99") {
            end += 3;
        }
        if (end < text.size() && !html::detail::is_space(text[end])) {
            i = end;
            continue;
        }
        std::size_t next = end;
        while (next < text.size() && html::detail::is_space(text[next])) {
            ++next;
        }
        bool boundary = true;
        if (next < text.size()) {
            auto n = static_cast<unsigned char>(text[next]);
            if (std::islower(n) != 0 || text[next] == ',' || text[next] == ';' || text[next] == ':') {
                boundary = false;
            } else if (c == '.') {
                std::size_t ws = i;
                while (ws > start && !html::detail::is_space(text[ws - 1])) {
                    --ws;
                }
                if (detail::is_abbreviation(text.substr(ws, i + 1 - ws))) {
                    boundary = false;
                }
            }
        }
        if (boundary) {
            out.emplace_back(text.substr(start, next - start));
            start = next;
        }
        i = next > i ? next : i + 1;
    }
    if (start < text.size()) {
        auto rest = text.substr(start);
        bool blank = std::all_of(rest.begin(), rest.end(), [](char ch) { return html::detail::is_space(ch); });
        if (blank && !out.empty()) {
            out.back() += std::string(rest);
        } else {
            out.emplace_back(rest);
        }
    }
    return out;
}

inline std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && html::detail::is_space(s[b])) {
        ++b;
    }
    while (e > b && html::detail::is_space(s[e - 1])) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

/// Whitespace-separated tokens.
inline std::size_t word_count(std::string_view s)
{
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        bool space = html::detail::is_space(c);
        if (!space && !in_word) {
            ++n;
        }
        in_word = !space;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Extraction

namespace detail {

inline bool is_boilerplate(html::node const& n)
{
    static std::set<std::string_view> const tags{
        "script", "style", "nav",    "header", "footer", "aside",  "noscript", "template", "head",
        "iframe", "svg",   "canvas", "object", "button", "select", "menu",     "title",    "link",
        "meta",   "input", "textarea", "img",  "map"};
    if (tags.contains(n.tag)) {
        return true;
    }
    auto role = n.attr("role");
    return role == "navigation" || role == "banner" || role == "contentinfo" || role == "complementary" ||
           role == "menu" || role == "menubar";
}

inline void strip_boilerplate(html::node& n)
{
    std::erase_if(n.children, [](auto const& c) { return !c->is_text() && is_boilerplate(*c); });
    for (auto& c : n.children) {
        strip_boilerplate(*c);
    }
}

inline std::unique_ptr<html::node> plain_text_fragment(std::string_view text)
{
    auto root = html::make_element("#document");
    // Blank lines separate paragraphs.
    std::size_t pos = 0;
    std::string para;
    auto flush = [&] {
        if (!trim(para).empty()) {
            root->append(html::make_element("p"))->append(html::make_text(para));
        }
        para.clear();
    };
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (trim(line).empty()) {
            flush();
        } else {
            if (!para.empty()) {
                para += '\n';
            }
            para += line;
        }
        if (nl == std::string_view::npos) {
            break;
        }
        pos = nl + 1;
    }
    flush();
    return root;
}

}  // namespace detail

/// Cleaned block tree. Plain-text documents pass through as paragraphs
/// split at blank lines. Throws when nothing textual survives.
inline std::unique_ptr<html::node> extract_text(policy_document const& doc)
{
    std::unique_ptr<html::node> root;
    if (doc.is_html) {
        root = html::parse(doc.source);
        detail::strip_boilerplate(*root);
    } else {
        root = detail::plain_text_fragment(doc.source);
    }
    if (html::text_content(*root).empty()) {
        throw error("policy '" + doc.policy_id + "' has no text content after extraction");
    }
    return root;
}

// ---------------------------------------------------------------------------
// List aggregation

inline constexpr std::string_view origin_attribute = "data-segment-origin";

namespace detail {

inline bool has_block_descendant(html::node const& n)
{
    for (auto const& c : n.children) {
        if (!c->is_text() && (html::is_block_element(c->tag) || has_block_descendant(*c))) {
            return true;
        }
    }
    return false;
}

/// Element that behaves as a block: a block tag, or a wrapper around blocks.
inline bool acts_as_block(html::node const& n)
{
    return !n.is_text() && (html::is_block_element(n.tag) || n.tag == "#document" || has_block_descendant(n));
}

/// Removes and returns the final sentence of `text` (trimmed); `text` keeps the rest.
inline std::string pop_last_sentence(std::string& text)
{
    auto normalized = html::normalize_space(text);
    auto sentences = split_sentences(normalized);
    if (sentences.empty()) {
        text.clear();
        return {};
    }
    auto last = trim(sentences.back());
    sentences.pop_back();
    std::string rest;
    for (auto const& s : sentences) {
        rest += s;
    }
    text = trim(rest);
    return last;
}

/// Replaces children [first, last] of `parent` with one text node of their text.
inline html::node* flatten_run(html::node& parent, std::size_t first, std::size_t last)
{
    std::string text;
    for (std::size_t k = first; k <= last; ++k) {
        html::collect_text(*parent.children[k], text);
    }
    parent.children.erase(parent.children.begin() + static_cast<std::ptrdiff_t>(first),
                          parent.children.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    auto t = html::make_text(std::move(text));
    t->parent = &parent;
    parent.children.insert(parent.children.begin() + static_cast<std::ptrdiff_t>(first), std::move(t));
    return parent.children[first].get();
}

inline bool blank(html::node const& n) { return html::text_content(n).empty(); }

/// Takes the final sentence of the content ending just before child `pos`
/// of `parent`. `stop` is set when a list boundary blocks the search.
inline std::string take_trailing_sentence(html::node& parent, std::size_t pos, bool& stop)
{
    std::size_t j = pos;
    while (j > 0) {
        auto& c = *parent.children[j - 1];
        if (blank(c)) {
            --j;
            continue;
        }
        if (!c.attr(std::string(origin_attribute)).empty()) {
            stop = true;  // directly after another (already rewritten) list
            return {};
        }
        if (acts_as_block(c)) {
            bool inner_stop = false;
            auto s = take_trailing_sentence(c, c.children.size(), inner_stop);
            if (!s.empty() || inner_stop) {
                stop = inner_stop;
                return s;
            }
            --j;
            continue;
        }
        // Inline run ending at j-1.
        std::size_t first = j - 1;
        while (first > 0 && !acts_as_block(*parent.children[first - 1])) {
            --first;
        }
        auto* t = flatten_run(parent, first, j - 1);
        return pop_last_sentence(t->text);
    }
    return {};
}

/// Introductory statement of the list at child `pos` of `parent`: searches
/// preceding siblings, then climbs out of plain containers.
inline std::string take_intro(html::node& parent, std::size_t pos)
{
    html::node* p = &parent;
    std::size_t at = pos;
    for (;;) {
        bool stop = false;
        auto s = take_trailing_sentence(*p, at, stop);
        if (!s.empty() || stop) {
            return s;
        }
        bool climbable = p->parent != nullptr && (p->tag == "div" || p->tag == "section" || p->tag == "article" ||
                                                  p->tag == "main" || p->tag == "body" || p->tag == "html" ||
                                                  p->tag == "span" || p->tag == "blockquote");
        if (!climbable) {
            return {};
        }
        auto* up = p->parent;
        auto it = std::find_if(up->children.begin(), up->children.end(), [&](auto const& c) { return c.get() == p; });
        at = static_cast<std::size_t>(it - up->children.begin());
        p = up;
    }
}

inline std::string strip_item_punctuation(std::string s)
{
    while (!s.empty() && (s.back() == ';' || s.back() == ',' || html::detail::is_space(s.back()))) {
        s.pop_back();
    }
    return s;
}

inline std::unique_ptr<html::node> paragraph(std::string text, segment_origin origin)
{
    auto p = html::make_element("p");
    p->attrs[std::string(origin_attribute)] = std::string(to_string(origin));
    p->append(html::make_text(std::move(text)));
    return p;
}

inline void aggregate(html::node& n, std::size_t max_words, std::vector<std::string>& warnings)
{
    for (auto& c : n.children) {
        if (!c->is_text()) {
            aggregate(*c, max_words, warnings);
        }
    }
    for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (n.children[i]->is_text() || !html::is_list_element(n.children[i]->tag)) {
            continue;
        }
        std::unique_ptr<html::node> list = std::move(n.children[i]);
        n.children.erase(n.children.begin() + static_cast<std::ptrdiff_t>(i));
        std::vector<std::string> items;
        for (auto const& item : list->children) {
            auto t = html::text_content(*item);
            if (!t.empty()) {
                items.push_back(std::move(t));
            }
        }
        if (items.empty()) {
            --i;
            continue;
        }
        // Flattening inline runs before the list shifts indices; a marker keeps the spot.
        auto* marker = html::make_element("#list-marker").release();
        marker->parent = &n;
        n.children.insert(n.children.begin() + static_cast<std::ptrdiff_t>(i), std::unique_ptr<html::node>(marker));
        auto intro = take_intro(n, i);
        auto at = std::find_if(n.children.begin(), n.children.end(), [&](auto const& c) { return c.get() == marker; });
        i = static_cast<std::size_t>(at - n.children.begin());
        n.children.erase(at);
        if (intro.empty()) {
            warnings.push_back("list without introductory statement: \"" + items.front().substr(0, 60) + "\"");
        }
        bool const short_items =
            std::all_of(items.begin(), items.end(), [&](auto const& t) { return word_count(t) <= max_words; });
        std::vector<std::unique_ptr<html::node>> out;
        if (short_items) {
            std::string joined;
            for (auto const& t : items) {
                auto s = strip_item_punctuation(t);
                if (s.empty()) {
                    continue;
                }
                if (!joined.empty()) {
                    joined += "; ";
                }
                joined += s;
            }
            out.push_back(paragraph(intro.empty() ? joined : intro + " " + joined, segment_origin::merged_list));
        } else {
            for (auto const& t : items) {
                out.push_back(paragraph(intro.empty() ? t : intro + " " + t, segment_origin::list_item_expanded));
            }
        }
        std::size_t const added = out.size();
        for (auto& p : out) {
            p->parent = &n;
        }
        n.children.insert(n.children.begin() + static_cast<std::ptrdiff_t>(i), std::make_move_iterator(out.begin()),
                          std::make_move_iterator(out.end()));
        i += added - 1;
    }
}

}  // namespace detail

/// Rewrites every <ul>/<ol>, innermost first. Lists whose items all have at
/// most `max_words` words merge with their introductory statement into one
/// paragraph; otherwise each item becomes "intro + item".
inline void aggregate_lists(html::node& root, std::size_t max_words = 20, std::vector<std::string>* warnings = nullptr)
{
    std::vector<std::string> local;
    detail::aggregate(root, max_words, warnings != nullptr ? *warnings : local);
}

// ---------------------------------------------------------------------------
// Coarse segmentation

struct raw_segment {
    std::string text;
    segment_origin origin = segment_origin::paragraph;
};

namespace detail {

inline void coarse(html::node const& n, std::vector<raw_segment>& out)
{
    auto origin_attr = n.attr(std::string(origin_attribute));
    auto origin = origin_attr.empty() ? segment_origin::paragraph : segment_origin_from_string(origin_attr);
    std::string run;
    auto flush = [&] {
        auto t = html::normalize_space(run);
        if (!t.empty()) {
            out.push_back({std::move(t), origin});
        }
        run.clear();
    };
    for (auto const& c : n.children) {
        if (acts_as_block(*c)) {
            flush();
            coarse(*c, out);
        } else {
            html::collect_text(*c, run);
        }
    }
    flush();
}

}  // namespace detail

/// One raw segment per leaf block, plus text runs sitting beside blocks.
inline std::vector<raw_segment> coarse_segment(html::node const& root)
{
    std::vector<raw_segment> out;
    detail::coarse(root, out);
    return out;
}

// ---------------------------------------------------------------------------
// Fine segmentation

struct sentence_graph {
    std::vector<std::string> sentences;
    std::vector<std::vector<double>> similarity;
    double threshold = 0.25;

    [[nodiscard]] bool related(std::size_t a, std::size_t b) const { return similarity[a][b] >= threshold; }
};

/// Mean of the word vectors of its word tokens; zero when it has none.
inline std::vector<double> sentence_vector(std::string_view sentence, subword_embedding_model const& emb)
{
    std::vector<double> acc(emb.dim(), 0.0);
    std::vector<double> tmp(emb.dim());
    std::size_t n = 0;
    for (auto const& t : word_tokens(sentence)) {
        emb.word_vector_into(t, tmp);
        for (std::size_t d = 0; d < acc.size(); ++d) {
            acc[d] += tmp[d];
        }
        ++n;
    }
    if (n > 0) {
        for (auto& x : acc) {
            x /= static_cast<double>(n);
        }
    }
    return acc;
}

inline sentence_graph build_sentence_graph(std::vector<std::string> sentences, subword_embedding_model const& emb,
                                           double threshold)
{
    sentence_graph g;
    g.threshold = threshold;
    std::vector<std::vector<double>> vecs;
    for (auto const& s : sentences) {
        vecs.push_back(sentence_vector(s, emb));
    }
    auto const n = sentences.size();
    g.similarity.assign(n, std::vector<double>(n, 1.0));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            g.similarity[a][b] = g.similarity[b][a] = cosine_similarity(vecs[a], vecs[b]);
        }
    }
    g.sentences = std::move(sentences);
    return g;
}

/// Block lengths: greedy leftmost-maximal runs of mutually related sentences,
/// then blocks under `min_len` sentences fold into their predecessor (the
/// first block folds forward).
inline std::vector<std::size_t> partition_sentences(std::vector<std::vector<double>> const& similarity,
                                                    double threshold, std::size_t min_len)
{
    auto const n = similarity.size();
    std::vector<std::size_t> blocks;
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n) {
            bool clique = true;
            for (std::size_t k = start; k < end && clique; ++k) {
                clique = similarity[k][end] >= threshold;
            }
            if (!clique) {
                break;
            }
            ++end;
        }
        blocks.push_back(end - start);
        start = end;
    }
    std::vector<std::size_t> merged;
    for (auto b : blocks) {
        if (!merged.empty() && (b < min_len || merged.back() < min_len)) {
            merged.back() += b;
        } else {
            merged.push_back(b);
        }
    }
    return merged;
}

/// Splits `raw` at sentence boundaries into runs of related sentences. The
/// pieces concatenate back to `raw`.
inline std::vector<std::string> fine_segment(std::string_view raw, subword_embedding_model const& emb,
                                             double threshold = 0.25, std::size_t min_len = 2)
{
    auto sentences = split_sentences(raw);
    if (sentences.size() <= 1) {
        return {std::string(raw)};
    }
    auto g = build_sentence_graph(sentences, emb, threshold);
    auto blocks = partition_sentences(g.similarity, threshold, min_len);
    std::vector<std::string> out;
    std::size_t k = 0;
    for (auto b : blocks) {
        std::string piece;
        for (std::size_t i = 0; i < b; ++i) {
            piece += g.sentences[k++];
        }
        out.push_back(std::move(piece));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline

inline std::vector<segment> segment_policy(policy_document const& doc, subword_embedding_model const& emb,
                                           segmenter_config const& cfg = {},
                                           std::vector<std::string>* warnings = nullptr)
{
    auto tree = extract_text(doc);
    aggregate_lists(*tree, cfg.short_item_max_words, warnings);
    std::vector<segment> out;
    for (auto const& raw : coarse_segment(*tree)) {
        auto pieces = fine_segment(raw.text, emb, cfg.threshold, cfg.min_sentences);
        for (auto const& piece : pieces) {
            auto text = trim(piece);
            if (text.empty()) {
                continue;
            }
            auto origin = pieces.size() > 1 ? segment_origin::fine_split : raw.origin;
            out.push_back({doc.policy_id, out.size(), std::move(text), origin});
        }
    }
    return out;
}

}  // namespace policylens
