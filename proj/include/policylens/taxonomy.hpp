#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "policylens/detail/binary_io.hpp"
#include "policylens/detail/hash.hpp"
#include "policylens/error.hpp"

namespace policylens {

struct value_label {
    std::string id;
    std::string display_name;

    friend bool operator==(value_label const&, value_label const&) = default;
};

struct attribute {
    std::string id;
    std::string display_name;
    std::vector<value_label> values;
    bool mandatory = false;

    friend bool operator==(attribute const&, attribute const&) = default;
};

struct category {
    std::string id;
    std::string display_name;
    std::vector<std::string> attributes;  // attribute ids, in declaration order
    bool in_segment_classifier = true;
    bool in_query_classifier = true;
    /// Part of the catch-all "Other" group; may have no attributes.
    bool other = false;

    friend bool operator==(category const&, category const&) = default;
};

/// An (attribute, value) label, e.g. personal-information-type=location.
struct attribute_value {
    std::string attribute;
    std::string value;

    friend auto operator<=>(attribute_value const&, attribute_value const&) = default;
    friend bool operator==(attribute_value const&, attribute_value const&) = default;

    [[nodiscard]] std::string str() const { return attribute + "=" + value; }
};

/// One coordinate of a practice vector: a value reached through a specific category.
struct pair_coordinate {
    std::string category;
    std::string attribute;
    std::string value;
    std::size_t category_index;
    std::size_t attribute_index;
    std::size_t value_index;

    friend bool operator==(pair_coordinate const&, pair_coordinate const&) = default;
};

/// Category -> attribute -> value hierarchy. Immutable once built.
class taxonomy {
  public:
    taxonomy() = default;

    /// Validates every structural invariant; throws invariant_error naming the offender.
    taxonomy(std::vector<category> categories, std::vector<attribute> attributes)
        : m_categories(std::move(categories)), m_attributes(std::move(attributes))
    {
        validate();
        build_pairs();
    }

    [[nodiscard]] std::vector<category> const& categories() const noexcept { return m_categories; }
    [[nodiscard]] std::vector<attribute> const& attributes() const noexcept { return m_attributes; }

    [[nodiscard]] category const* find_category(std::string_view id) const
    {
        auto it = m_category_index.find(std::string(id));
        return it == m_category_index.end() ? nullptr : &m_categories[it->second];
    }

    [[nodiscard]] attribute const* find_attribute(std::string_view id) const
    {
        auto it = m_attribute_index.find(std::string(id));
        return it == m_attribute_index.end() ? nullptr : &m_attributes[it->second];
    }

    [[nodiscard]] std::size_t category_index(std::string_view id) const
    {
        auto it = m_category_index.find(std::string(id));
        if (it == m_category_index.end()) {
            throw unknown_category_error(std::string(id));
        }
        return it->second;
    }

    [[nodiscard]] std::size_t attribute_index(std::string_view id) const
    {
        auto it = m_attribute_index.find(std::string(id));
        if (it == m_attribute_index.end()) {
            throw unknown_label_error({std::string(id)});
        }
        return it->second;
    }

    [[nodiscard]] bool has_value(std::string_view attr, std::string_view value) const
    {
        auto const* a = find_attribute(attr);
        if (a == nullptr) {
            return false;
        }
        return std::any_of(a->values.begin(), a->values.end(),
                           [&](value_label const& v) { return v.id == value; });
    }

    /// Categories of the given attribute, in category order.
    [[nodiscard]] std::vector<std::string> owners(std::string_view attr) const
    {
        std::vector<std::string> out;
        for (auto const& c : m_categories) {
            if (std::find(c.attributes.begin(), c.attributes.end(), attr) != c.attributes.end()) {
                out.push_back(c.id);
            }
        }
        return out;
    }

    [[nodiscard]] std::vector<std::string> segment_category_ids() const
    {
        std::vector<std::string> out;
        for (auto const& c : m_categories) {
            if (c.in_segment_classifier) {
                out.push_back(c.id);
            }
        }
        return out;
    }

    [[nodiscard]] std::vector<std::string> query_category_ids() const
    {
        std::vector<std::string> out;
        for (auto const& c : m_categories) {
            if (c.in_query_classifier) {
                out.push_back(c.id);
            }
        }
        return out;
    }

    /// Every (attribute, value) label in attribute order.
    [[nodiscard]] std::vector<attribute_value> all_values() const
    {
        std::vector<attribute_value> out;
        for (auto const& a : m_attributes) {
            for (auto const& v : a.values) {
                out.push_back({a.id, v.id});
            }
        }
        return out;
    }

    [[nodiscard]] std::vector<pair_coordinate> const& pairs() const noexcept { return m_pairs; }

    /// Stable 64-bit digest of the canonical serialization.
    [[nodiscard]] std::uint64_t checksum() const;

    friend bool operator==(taxonomy const& a, taxonomy const& b)
    {
        return a.m_categories == b.m_categories && a.m_attributes == b.m_attributes;
    }

  private:
    void validate();
    void build_pairs();

    std::vector<category> m_categories;
    std::vector<attribute> m_attributes;
    std::map<std::string, std::size_t> m_category_index;
    std::map<std::string, std::size_t> m_attribute_index;
    std::vector<pair_coordinate> m_pairs;
};

inline void taxonomy::validate()
{
    m_category_index.clear();
    m_attribute_index.clear();
    for (std::size_t i = 0; i < m_attributes.size(); ++i) {
        auto const& a = m_attributes[i];
        if (a.id.empty()) {
            throw invariant_error("attribute with empty id", "#" + std::to_string(i));
        }
        if (!m_attribute_index.emplace(a.id, i).second) {
            throw invariant_error("duplicate attribute id", a.id);
        }
        if (a.values.empty()) {
            throw invariant_error("attribute has no values", a.id);
        }
        std::set<std::string> seen;
        for (auto const& v : a.values) {
            if (v.id.empty() || !seen.insert(v.id).second) {
                throw invariant_error("duplicate or empty value id in attribute " + a.id, v.id);
            }
        }
    }
    std::set<std::string> reached;
    for (std::size_t i = 0; i < m_categories.size(); ++i) {
        auto const& c = m_categories[i];
        if (c.id.empty()) {
            throw invariant_error("category with empty id", "#" + std::to_string(i));
        }
        if (!m_category_index.emplace(c.id, i).second) {
            throw invariant_error("duplicate category id", c.id);
        }
        if (c.attributes.empty() && !c.other) {
            throw invariant_error("category has no attributes", c.id);
        }
        std::set<std::string> local;
        for (auto const& a : c.attributes) {
            if (!m_attribute_index.contains(a)) {
                throw invariant_error("category " + c.id + " references undeclared attribute", a);
            }
            if (!local.insert(a).second) {
                throw invariant_error("category " + c.id + " lists attribute twice", a);
            }
            reached.insert(a);
        }
    }
    for (auto const& a : m_attributes) {
        if (!reached.contains(a.id)) {
            throw invariant_error("attribute not reachable from any category", a.id);
        }
    }
}

inline void taxonomy::build_pairs()
{
    m_pairs.clear();
    for (std::size_t ci = 0; ci < m_categories.size(); ++ci) {
        auto const& c = m_categories[ci];
        for (auto const& attr_id : c.attributes) {
            auto ai = m_attribute_index.at(attr_id);
            auto const& a = m_attributes[ai];
            for (std::size_t vi = 0; vi < a.values.size(); ++vi) {
                m_pairs.push_back({c.id, a.id, a.values[vi].id, ci, ai, vi});
            }
        }
    }
}

/// A(c) with V(b) for each b, in declaration order.
inline std::vector<std::pair<attribute, std::vector<value_label>>>
descendants(taxonomy const& t, std::string_view category_id)
{
    auto const* c = t.find_category(category_id);
    if (c == nullptr) {
        throw unknown_category_error(std::string(category_id));
    }
    std::vector<std::pair<attribute, std::vector<value_label>>> out;
    for (auto const& attr_id : c->attributes) {
        auto const& a = *t.find_attribute(attr_id);
        out.emplace_back(a, a.values);
    }
    return out;
}

/// The coordinate system of practice vectors: every (category, value) with
/// the value's attribute under the category.
inline std::vector<pair_coordinate> const& pair_index(taxonomy const& t) { return t.pairs(); }

namespace detail {

template <typename T>
T json_field(nlohmann::json const& obj, char const* key, std::string const& path)
{
    if (!obj.is_object() || !obj.contains(key)) {
        throw parse_error("missing required field", 0, path + "." + key);
    }
    try {
        return obj.at(key).get<T>();
    } catch (nlohmann::json::exception const& e) {
        throw parse_error(std::string("wrong type: ") + e.what(), 0, path + "." + key);
    }
}

template <typename T>
T json_field_or(nlohmann::json const& obj, char const* key, T fallback, std::string const& path)
{
    if (!obj.contains(key)) {
        return fallback;
    }
    return json_field<T>(obj, key, path);
}

inline std::size_t line_of_offset(std::string_view text, std::size_t offset)
{
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

inline nlohmann::json parse_json_document(std::string_view text)
{
    try {
        return nlohmann::json::parse(text);
    } catch (nlohmann::json::parse_error const& e) {
        throw parse_error(e.what(), line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1));
    }
}

}  // namespace detail

/// Parses the JSON taxonomy document (`categories[]`, `attributes[]`).
inline taxonomy load_taxonomy(std::string_view text)
{
    auto doc = detail::parse_json_document(text);
    if (!doc.is_object()) {
        throw parse_error("taxonomy document must be an object", 1);
    }
    if (!doc.contains("categories") || !doc["categories"].is_array()) {
        throw parse_error("missing array", 0, "categories");
    }
    if (!doc.contains("attributes") || !doc["attributes"].is_array()) {
        throw parse_error("missing array", 0, "attributes");
    }

    std::vector<attribute> attributes;
    for (std::size_t i = 0; i < doc["attributes"].size(); ++i) {
        auto const& node = doc["attributes"][i];
        auto path = "attributes[" + std::to_string(i) + "]";
        attribute a;
        a.id = detail::json_field<std::string>(node, "id", path);
        a.display_name = detail::json_field_or<std::string>(node, "name", a.id, path);
        a.mandatory = detail::json_field_or<bool>(node, "mandatory", false, path);
        if (!node.contains("values") || !node["values"].is_array()) {
            throw parse_error("missing array", 0, path + ".values");
        }
        for (std::size_t j = 0; j < node["values"].size(); ++j) {
            auto const& v = node["values"][j];
            auto vpath = path + ".values[" + std::to_string(j) + "]";
            if (v.is_string()) {
                auto id = v.get<std::string>();
                a.values.push_back({id, id});
            } else {
                auto id = detail::json_field<std::string>(v, "id", vpath);
                a.values.push_back({id, detail::json_field_or<std::string>(v, "name", id, vpath)});
            }
        }
        attributes.push_back(std::move(a));
    }

    std::vector<category> categories;
    for (std::size_t i = 0; i < doc["categories"].size(); ++i) {
        auto const& node = doc["categories"][i];
        auto path = "categories[" + std::to_string(i) + "]";
        category c;
        c.id = detail::json_field<std::string>(node, "id", path);
        c.display_name = detail::json_field_or<std::string>(node, "name", c.id, path);
        c.attributes = detail::json_field_or<std::vector<std::string>>(node, "attributes", {}, path);
        c.in_segment_classifier = detail::json_field_or<bool>(node, "in_segment_classifier", true, path);
        c.in_query_classifier = detail::json_field_or<bool>(node, "in_query_classifier", true, path);
        c.other = detail::json_field_or<bool>(node, "other", false, path);
        categories.push_back(std::move(c));
    }
    return {std::move(categories), std::move(attributes)};
}

inline taxonomy load_taxonomy_file(std::string const& path)
{
    return load_taxonomy(detail::read_file(path));
}

inline nlohmann::json to_json(taxonomy const& t)
{
    nlohmann::json doc;
    doc["version"] = 1;
    doc["categories"] = nlohmann::json::array();
    for (auto const& c : t.categories()) {
        doc["categories"].push_back({{"id", c.id},
                                     {"name", c.display_name},
                                     {"attributes", c.attributes},
                                     {"in_segment_classifier", c.in_segment_classifier},
                                     {"in_query_classifier", c.in_query_classifier},
                                     {"other", c.other}});
    }
    doc["attributes"] = nlohmann::json::array();
    for (auto const& a : t.attributes()) {
        nlohmann::json values = nlohmann::json::array();
        for (auto const& v : a.values) {
            values.push_back({{"id", v.id}, {"name", v.display_name}});
        }
        doc["attributes"].push_back(
            {{"id", a.id}, {"name", a.display_name}, {"mandatory", a.mandatory}, {"values", values}});
    }
    return doc;
}

inline std::string serialize(taxonomy const& t) { return to_json(t).dump(2); }

inline std::uint64_t taxonomy::checksum() const { return detail::fnv1a_64(to_json(*this).dump()); }

}  // namespace policylens
