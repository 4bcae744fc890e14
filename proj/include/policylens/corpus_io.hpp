#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "policylens/detail/binary_io.hpp"
#include "policylens/detail/rng.hpp"
#include "policylens/error.hpp"
#include "policylens/taxonomy.hpp"

namespace policylens {

struct policy_document {
    std::string policy_id;
    std::string source;
    std::optional<std::string> url;
    bool is_html = true;
};

struct annotated_segment_record {
    std::string policy_id;
    std::size_t segment_index = 0;
    std::string text;
    std::string annotator_id;
    std::set<std::string> categories;
    std::set<attribute_value> attribute_values;
};

/// Labels of one segment after merging all annotators.
struct merged_segment_labels {
    std::string policy_id;
    std::size_t segment_index = 0;
    std::string text;
    std::set<std::string> annotators;
    std::set<std::string> categories;
    std::set<attribute_value> attribute_values;
};

struct qa_record {
    std::string question;
    std::string policy_id;
    std::set<std::size_t> ground_truth;

    /// No segment of the policy answers the question.
    [[nodiscard]] bool unanswerable() const noexcept { return ground_truth.empty(); }
};

struct dataset_split {
    std::set<std::string> train_policy_ids;
    std::set<std::string> test_policy_ids;
};

namespace detail {

/// Calls `fn(json, line_number)` for every non-blank line.
template <typename Fn>
void for_each_json_line(std::string_view text, Fn&& fn)
{
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        ++line_no;
        pos = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        nlohmann::json node;
        try {
            node = nlohmann::json::parse(line);
        } catch (nlohmann::json::parse_error const& e) {
            throw parse_error(e.what(), line_no);
        }
        if (!node.is_object()) {
            throw parse_error("record must be an object", line_no);
        }
        fn(node, line_no);
        if (end == text.size()) {
            break;
        }
    }
}

template <typename T>
T line_field(nlohmann::json const& node, char const* key, std::size_t line)
{
    if (!node.contains(key)) {
        throw parse_error("missing required field", line, key);
    }
    try {
        return node.at(key).get<T>();
    } catch (nlohmann::json::exception const& e) {
        throw parse_error(std::string("wrong type: ") + e.what(), line, key);
    }
}

}  // namespace detail

/// Reads JSON-lines annotations and resolves every label against `t`.
/// All unresolved labels are reported together.
inline std::vector<annotated_segment_record> load_annotations(std::string_view text, taxonomy const& t)
{
    std::vector<annotated_segment_record> out;
    std::vector<std::string> offenders;
    detail::for_each_json_line(text, [&](nlohmann::json const& node, std::size_t line) {
        annotated_segment_record r;
        r.policy_id = detail::line_field<std::string>(node, "policy_id", line);
        auto idx = detail::line_field<long long>(node, "segment_index", line);
        if (idx < 0) {
            throw parse_error("segment_index must be non-negative", line, "segment_index");
        }
        r.segment_index = static_cast<std::size_t>(idx);
        r.text = node.value("text", std::string{});
        r.annotator_id = node.value("annotator", std::string{"unknown"});
        for (auto const& c : node.value("categories", std::vector<std::string>{})) {
            if (t.find_category(c) == nullptr) {
                offenders.push_back("line " + std::to_string(line) + ": category " + c);
            }
            r.categories.insert(c);
        }
        if (node.contains("attribute_values")) {
            if (!node["attribute_values"].is_array()) {
                throw parse_error("expected array", line, "attribute_values");
            }
            for (auto const& av : node["attribute_values"]) {
                attribute_value v{detail::line_field<std::string>(av, "attribute", line),
                                  detail::line_field<std::string>(av, "value", line)};
                if (!t.has_value(v.attribute, v.value)) {
                    offenders.push_back("line " + std::to_string(line) + ": " + v.str());
                }
                r.attribute_values.insert(std::move(v));
            }
        }
        out.push_back(std::move(r));
    });
    if (!offenders.empty()) {
        throw unknown_label_error(std::move(offenders));
    }
    return out;
}

inline std::string to_jsonl(std::vector<annotated_segment_record> const& records)
{
    std::string out;
    for (auto const& r : records) {
        nlohmann::json avs = nlohmann::json::array();
        for (auto const& av : r.attribute_values) {
            avs.push_back({{"attribute", av.attribute}, {"value", av.value}});
        }
        nlohmann::json node{{"policy_id", r.policy_id},
                            {"segment_index", r.segment_index},
                            {"text", r.text},
                            {"annotator", r.annotator_id},
                            {"categories", r.categories},
                            {"attribute_values", avs}};
        out += node.dump() + "\n";
    }
    return out;
}

/// Set-union of every annotator's labels per (policy, segment), ordered by key.
inline std::vector<merged_segment_labels>
union_expert_labels(std::vector<annotated_segment_record> const& records)
{
    std::map<std::pair<std::string, std::size_t>, merged_segment_labels> merged;
    for (auto const& r : records) {
        auto& m = merged[{r.policy_id, r.segment_index}];
        m.policy_id = r.policy_id;
        m.segment_index = r.segment_index;
        if (m.text.empty()) {
            m.text = r.text;
        }
        m.annotators.insert(r.annotator_id);
        m.categories.insert(r.categories.begin(), r.categories.end());
        m.attribute_values.insert(r.attribute_values.begin(), r.attribute_values.end());
    }
    std::vector<merged_segment_labels> out;
    out.reserve(merged.size());
    for (auto& [key, m] : merged) {
        out.push_back(std::move(m));
    }
    return out;
}

/// Policy-level split; the first `train_count` policies of a seeded shuffle train.
template <typename Record>
dataset_split split_dataset(std::vector<Record> const& records, std::size_t train_count, std::uint64_t seed)
{
    std::set<std::string> ids;
    for (auto const& r : records) {
        ids.insert(r.policy_id);
    }
    if (train_count > ids.size()) {
        throw error("train_count " + std::to_string(train_count) + " exceeds policy count " +
                    std::to_string(ids.size()));
    }
    std::vector<std::string> order(ids.begin(), ids.end());
    std::mt19937_64 gen(seed);
    detail::shuffle(order, gen);
    dataset_split split;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < train_count ? split.train_policy_ids : split.test_policy_ids).insert(order[i]);
    }
    return split;
}

/// Reads a JSON-lines QA set. `segment_counts` maps each known policy to its
/// segment count; records naming other policies or out-of-range indices throw.
inline std::vector<qa_record> load_qa_dataset(std::string_view text,
                                              std::map<std::string, std::size_t> const& segment_counts)
{
    std::vector<qa_record> out;
    detail::for_each_json_line(text, [&](nlohmann::json const& node, std::size_t line) {
        qa_record r;
        r.question = detail::line_field<std::string>(node, "question", line);
        if (r.question.find_first_not_of(" \t\r\n") == std::string::npos) {
            throw parse_error("question must be non-empty", line, "question");
        }
        r.policy_id = detail::line_field<std::string>(node, "policy_id", line);
        auto it = segment_counts.find(r.policy_id);
        if (it == segment_counts.end()) {
            throw error("line " + std::to_string(line) + ": dangling policy_id '" + r.policy_id + "'");
        }
        for (auto idx : node.value("ground_truth", std::vector<long long>{})) {
            if (idx < 0 || static_cast<std::size_t>(idx) >= it->second) {
                throw parse_error("ground-truth index " + std::to_string(idx) + " out of range for policy " +
                                      r.policy_id + " with " + std::to_string(it->second) + " segments",
                                  line, "ground_truth");
            }
            r.ground_truth.insert(static_cast<std::size_t>(idx));
        }
        out.push_back(std::move(r));
    });
    return out;
}

/// Newline-delimited documents; blank lines are skipped.
inline std::vector<std::string> load_embedding_corpus(std::string_view text)
{
    std::vector<std::string> docs;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") != std::string::npos) {
            docs.push_back(line);
        }
    }
    return docs;
}

/// Loads `<policy_id>.html`, `.htm` and `.txt` files, sorted by id.
inline std::vector<policy_document> load_policy_directory(std::filesystem::path const& dir)
{
    std::vector<policy_document> docs;
    std::set<std::string> seen;
    for (auto const& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        auto ext = entry.path().extension().string();
        if (ext != ".html" && ext != ".htm" && ext != ".txt") {
            continue;
        }
        policy_document d;
        d.policy_id = entry.path().stem().string();
        d.is_html = ext != ".txt";
        d.source = detail::read_file(entry.path().string());
        if (d.source.empty()) {
            throw error("empty policy source: " + entry.path().string());
        }
        if (!seen.insert(d.policy_id).second) {
            throw invariant_error("duplicate policy id", d.policy_id);
        }
        docs.push_back(std::move(d));
    }
    std::sort(docs.begin(), docs.end(),
              [](auto const& a, auto const& b) { return a.policy_id < b.policy_id; });
    return docs;
}

namespace detail {

/// RFC 4180 style CSV; quoted fields may contain separators, quotes ("") and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text)
{
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
                ++i;
            }
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) {
        throw parse_error("unterminated quoted CSV field", 1 + static_cast<std::size_t>(rows.size()));
    }
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// "First Party Collection/Use" -> "first-party-collection-use".
inline std::string kebab(std::string_view name)
{
    std::string out;
    for (char c : name) {
        auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) != 0) {
            out += static_cast<char>(std::tolower(u));
        } else if (!out.empty() && out.back() != '-') {
            out += '-';
        }
    }
    while (!out.empty() && out.back() == '-') {
        out.pop_back();
    }
    return out;
}

}  // namespace detail

struct opp115_conversion {
    std::vector<annotated_segment_record> records;
    /// Labels present in the CSV that the taxonomy does not define.
    std::set<std::string> dropped_labels;
};

/// Converts the OPP-115 annotation CSV (annotation id, batch id, annotator id,
/// policy id, segment id, category name, attribute-value JSON, date, url) into
/// records. Span-level attribute values attach to their whole segment.
/// `segments` maps policy id to its segment texts.
inline opp115_conversion convert_opp115_csv(std::string_view csv, std::string const& policy_id,
                                            std::vector<std::string> const& segments, taxonomy const& t)
{
    static std::map<std::string, std::string> const aliases{
        {"user-access-edit-and-deletion", "user-access-edit-deletion"},
    };
    auto resolve = [](std::string id) {
        auto it = aliases.find(id);
        return it == aliases.end() ? id : it->second;
    };

    opp115_conversion out;
    auto rows = detail::parse_csv(csv);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto const& row = rows[i];
        if (row.size() < 7) {
            throw parse_error("expected at least 7 columns", i + 1);
        }
        annotated_segment_record r;
        r.policy_id = policy_id;
        r.annotator_id = row[2];
        try {
            r.segment_index = static_cast<std::size_t>(std::stoul(row[4]));
        } catch (std::exception const&) {
            throw parse_error("segment id is not an integer", i + 1, "segment_id");
        }
        if (r.segment_index >= segments.size()) {
            throw parse_error("segment id out of range", i + 1, "segment_id");
        }
        r.text = segments[r.segment_index];

        auto cat = resolve(detail::kebab(row[5]));
        nlohmann::json pairs;
        try {
            pairs = nlohmann::json::parse(row[6]);
        } catch (nlohmann::json::parse_error const& e) {
            throw parse_error(e.what(), i + 1, "attribute_value_pairs");
        }
        if (cat == "other") {
            // The "Other" category is refined by its Other Type value.
            if (pairs.contains("Other Type") && pairs["Other Type"].contains("value")) {
                cat = resolve(detail::kebab(pairs["Other Type"]["value"].get<std::string>()));
            }
        }
        if (t.find_category(cat) != nullptr) {
            r.categories.insert(cat);
        } else {
            out.dropped_labels.insert("category:" + cat);
        }
        for (auto const& [attr_name, span] : pairs.items()) {
            if (!span.is_object() || !span.contains("value") || !span["value"].is_string()) {
                continue;
            }
            auto attr = detail::kebab(attr_name);
            auto value = detail::kebab(span["value"].get<std::string>());
            if (attr == "other-type" || value == "not-selected") {
                continue;
            }
            if (t.has_value(attr, value)) {
                r.attribute_values.insert({attr, value});
            } else {
                out.dropped_labels.insert(attr + "=" + value);
            }
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

}  // namespace policylens
