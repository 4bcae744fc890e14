#pragma once

// Privacy icons assigned by first-order rules over per-segment labels, plus
// agreement statistics between two icon assignments.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "policylens/corpus_io.hpp"
#include "policylens/error.hpp"
#include "policylens/hierarchy.hpp"
#include "policylens/metrics.hpp"
#include "policylens/taxonomy.hpp"

namespace policylens {

enum class icon : std::uint8_t { expected_use, expected_collection, precise_location, data_retention, children_privacy };
enum class icon_color : std::uint8_t { red, yellow, green, gray };
enum class icon_strategy : std::uint8_t { conservative, permissive, very_permissive };

inline constexpr std::array<icon, 5> all_icons = {icon::expected_use, icon::expected_collection,
                                                  icon::precise_location, icon::data_retention,
                                                  icon::children_privacy};
inline constexpr std::array<icon_strategy, 3> all_strategies = {
    icon_strategy::conservative, icon_strategy::permissive, icon_strategy::very_permissive};

inline std::string_view to_string(icon i)
{
    switch (i) {
        case icon::expected_use: return "expected-use";
        case icon::expected_collection: return "expected-collection";
        case icon::precise_location: return "precise-location";
        case icon::data_retention: return "data-retention";
        case icon::children_privacy: return "children-privacy";
    }
    return "expected-use";
}

inline std::string_view to_string(icon_color c)
{
    switch (c) {
        case icon_color::red: return "red";
        case icon_color::yellow: return "yellow";
        case icon_color::green: return "green";
        case icon_color::gray: return "gray";
    }
    return "red";
}

inline std::string_view to_string(icon_strategy s)
{
    switch (s) {
        case icon_strategy::conservative: return "conservative";
        case icon_strategy::permissive: return "permissive";
        case icon_strategy::very_permissive: return "very-permissive";
    }
    return "conservative";
}

inline icon_strategy icon_strategy_from_string(std::string_view s)
{
    for (auto st : all_strategies) {
        if (to_string(st) == s) {
            return st;
        }
    }
    if (s == "very_permissive") {
        return icon_strategy::very_permissive;
    }
    throw error("unknown icon strategy '" + std::string(s) + "'");
}

struct labeled_segment {
    std::size_t index = 0;
    std::set<std::string> categories;
    std::set<attribute_value> values;

    [[nodiscard]] bool has(std::string const& category) const { return categories.contains(category); }
    [[nodiscard]] bool has(std::string const& attr, std::string const& value) const
    {
        return values.contains({attr, value});
    }
};

struct labeled_policy {
    std::string policy_id;
    std::vector<labeled_segment> segments;
};

struct icon_assignment {
    icon which = icon::expected_use;
    icon_color color = icon_color::green;
    std::set<std::size_t> evidence;
    icon_strategy strategy = icon_strategy::conservative;

    friend bool operator==(icon_assignment const&, icon_assignment const&) = default;
};

/// Labels from automatic annotations, gated at `threshold`.
inline labeled_policy labeled_policy_from_annotations(taxonomy const& t, std::string policy_id,
                                                      std::vector<segment_annotation> const& anns,
                                                      double threshold = 0.5)
{
    labeled_policy lp{std::move(policy_id), {}};
    for (auto const& a : anns) {
        auto present = present_labels(t, a, threshold);
        lp.segments.push_back({a.segment_index, std::move(present.categories), std::move(present.values)});
    }
    return lp;
}

/// Labels from (merged) expert annotations of one policy.
inline labeled_policy labeled_policy_from_expert(std::string policy_id,
                                                 std::vector<merged_segment_labels> const& segments)
{
    labeled_policy lp{std::move(policy_id), {}};
    for (auto const& s : segments) {
        if (s.policy_id == lp.policy_id) {
            lp.segments.push_back({s.segment_index, s.categories, s.attribute_values});
        }
    }
    return lp;
}

namespace detail {

inline bool any_value(labeled_segment const& s, std::string const& attr, std::initializer_list<char const*> values)
{
    return std::any_of(values.begin(), values.end(), [&](char const* v) { return s.has(attr, v); });
}

/// The choice condition shared by the Yellow rules.
inline bool offers_choice(labeled_segment const& s)
{
    return s.has("user-choice-control") &&
           any_value(s, "choice-type", {"opt-in", "opt-out-link", "opt-out-via-contacting-company"});
}

inline bool in_selection(labeled_segment const& s, icon which)
{
    switch (which) {
        case icon::expected_use:
            return s.has("first-party-collection-use") && s.has("purpose", "advertising");
        case icon::expected_collection:
            return s.has("third-party-sharing-collection") &&
                   any_value(s, "purpose", {"advertising", "analytics-research"}) &&
                   any_value(s, "action-third-party",
                             {"track-on-first-party-website-app", "collect-on-first-party-website-app"});
        case icon::precise_location:
            return s.has("personal-information-type", "location");
        case icon::data_retention:
            return s.has("data-retention");
        case icon::children_privacy:
            return s.has("international-and-specific-audiences") && s.has("audience-type", "children");
    }
    return false;
}

}  // namespace detail

/// The evidence set S for an icon.
inline std::set<std::size_t> select_segments(labeled_policy const& lp, icon which)
{
    std::set<std::size_t> out;
    for (auto const& s : lp.segments) {
        if (detail::in_selection(s, which)) {
            out.insert(s.index);
        }
    }
    return out;
}

/// Strategies other than conservative change only the expected-use and expected-collection icons.
inline icon_assignment assign_icon(labeled_policy const& lp, icon which,
                                   icon_strategy strategy = icon_strategy::conservative)
{
    icon_assignment out;
    out.which = which;
    out.strategy = strategy;
    out.evidence = select_segments(lp, which);
    std::vector<labeled_segment const*> in_s;
    for (auto const& s : lp.segments) {
        if (detail::in_selection(s, which)) {
            in_s.push_back(&s);
        }
    }
    bool const empty = in_s.empty();
    switch (which) {
        case icon::data_retention: {
            bool all_limited = std::all_of(in_s.begin(), in_s.end(), [](labeled_segment const* s) {
                return detail::any_value(*s, "retention-period", {"stated-period", "limited"});
            });
            out.color = empty ? icon_color::red : (all_limited ? icon_color::green : icon_color::yellow);
            return out;
        }
        case icon::children_privacy:
            out.color = empty ? icon_color::red : icon_color::green;
            return out;
        default:
            break;
    }
    if (empty) {
        out.color = icon_color::green;
        return out;
    }
    auto effective = which == icon::precise_location ? icon_strategy::conservative : strategy;
    bool yellow = false;
    switch (effective) {
        case icon_strategy::conservative:
            yellow = std::all_of(in_s.begin(), in_s.end(), [](auto const* s) { return detail::offers_choice(*s); });
            break;
        case icon_strategy::permissive:
            yellow = std::any_of(in_s.begin(), in_s.end(), [](auto const* s) { return detail::offers_choice(*s); });
            break;
        case icon_strategy::very_permissive:
            yellow = std::any_of(lp.segments.begin(), lp.segments.end(),
                                 [](labeled_segment const& s) { return detail::offers_choice(s); });
            break;
    }
    out.color = yellow ? icon_color::yellow : icon_color::red;
    return out;
}

inline std::vector<icon_assignment> assign_all(labeled_policy const& lp,
                                               icon_strategy strategy = icon_strategy::conservative)
{
    std::vector<icon_assignment> out;
    for (auto i : all_icons) {
        out.push_back(assign_icon(lp, i, strategy));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Agreement between two assignments

inline constexpr std::array<icon_color, 4> all_colors = {icon_color::red, icon_color::yellow, icon_color::green,
                                                         icon_color::gray};

struct icon_comparison {
    icon which = icon::expected_use;
    std::size_t policies = 0;
    double accuracy = 0.0;
    double kappa = 0.0;
    double hellinger = 0.0;
    std::map<icon_color, std::size_t> histogram_a;
    std::map<icon_color, std::size_t> histogram_b;
};

/// `a[p]` and `b[p]` are the assign_all outputs for policy p under two labelings.
inline std::vector<icon_comparison> compare_assignments(std::vector<std::vector<icon_assignment>> const& a,
                                                        std::vector<std::vector<icon_assignment>> const& b)
{
    if (a.size() != b.size()) {
        throw error("compare_assignments: policy counts differ");
    }
    if (a.empty()) {
        throw error("compare_assignments: no policies");
    }
    std::vector<icon_comparison> out;
    std::vector<std::string> universe;
    for (auto c : all_colors) {
        universe.emplace_back(to_string(c));
    }
    for (auto which : all_icons) {
        icon_comparison cmp;
        cmp.which = which;
        std::vector<std::string> ca;
        std::vector<std::string> cb;
        for (auto c : all_colors) {
            cmp.histogram_a[c] = 0;
            cmp.histogram_b[c] = 0;
        }
        for (std::size_t p = 0; p < a.size(); ++p) {
            auto find = [&](std::vector<icon_assignment> const& v) {
                auto it = std::find_if(v.begin(), v.end(), [&](icon_assignment const& x) { return x.which == which; });
                if (it == v.end()) {
                    throw error("compare_assignments: icon missing for a policy");
                }
                return it->color;
            };
            auto x = find(a[p]);
            auto y = find(b[p]);
            ++cmp.histogram_a[x];
            ++cmp.histogram_b[y];
            ca.emplace_back(to_string(x));
            cb.emplace_back(to_string(y));
        }
        std::size_t agree = 0;
        for (std::size_t p = 0; p < ca.size(); ++p) {
            agree += ca[p] == cb[p] ? 1 : 0;
        }
        cmp.policies = ca.size();
        cmp.accuracy = static_cast<double>(agree) / static_cast<double>(ca.size());
        cmp.kappa = cohen_kappa(ca, cb, universe);
        std::vector<double> pa;
        std::vector<double> pb;
        for (auto c : all_colors) {
            pa.push_back(static_cast<double>(cmp.histogram_a[c]) / static_cast<double>(ca.size()));
            pb.push_back(static_cast<double>(cmp.histogram_b[c]) / static_cast<double>(ca.size()));
        }
        cmp.hellinger = hellinger(pa, pb);
        out.push_back(std::move(cmp));
    }
    return out;
}

/// Plain-text table: icon, accuracy, kappa, Hellinger and per-color counts for both sides.
inline std::string format_comparison(std::vector<icon_comparison> const& rows)
{
    std::ostringstream out;
    out << std::left << std::setw(20) << "Icon" << "  Acc.  Kappa  Hell.  N(R) N(G) N(Y)  N'(R) N'(G) N'(Y)\n";
    out << std::fixed << std::setprecision(2);
    for (auto const& r : rows) {
        auto h = [&](std::map<icon_color, std::size_t> const& m, icon_color c) { return m.at(c); };
        out << std::left << std::setw(20) << to_string(r.which) << "  " << std::setw(4) << r.accuracy << "  "
            << std::setw(5) << r.kappa << "  " << std::setw(5) << r.hellinger << "  " << std::setw(4)
            << h(r.histogram_a, icon_color::red) << " " << std::setw(4) << h(r.histogram_a, icon_color::green)
            << " " << std::setw(4) << h(r.histogram_a, icon_color::yellow) << "  " << std::setw(5)
            << h(r.histogram_b, icon_color::red) << " " << std::setw(5) << h(r.histogram_b, icon_color::green)
            << " " << h(r.histogram_b, icon_color::yellow) << "\n";
    }
    return out.str();
}

}  // namespace policylens
