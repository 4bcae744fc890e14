#pragma once

// Evaluation statistics: presence/absence macro P/R/F1, top-1 precision,
// ranking metrics (top-k, NDCG, MAP with length buckets), Hellinger
// distance and Cohen's kappa.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "policylens/error.hpp"

namespace policylens {

// ---------------------------------------------------------------------------
// Classification

struct confusion_counts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    [[nodiscard]] std::size_t total() const noexcept { return tp + fp + tn + fn; }
    friend bool operator==(confusion_counts const&, confusion_counts const&) = default;
};

struct prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct presence_absence_prf {
    prf presence;
    prf absence;
    prf macro;  // mean of the two directions
};

namespace detail {

inline double ratio(std::size_t num, std::size_t den)
{
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline prf directional(std::size_t tp, std::size_t fp, std::size_t fn)
{
    prf r;
    r.precision = ratio(tp, tp + fp);
    r.recall = ratio(tp, tp + fn);
    r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

}  // namespace detail

/// Presence and absence scored separately, then averaged. 0/0 counts as 0.
inline presence_absence_prf macro_prf(confusion_counts const& c)
{
    presence_absence_prf r;
    r.presence = detail::directional(c.tp, c.fp, c.fn);
    r.absence = detail::directional(c.tn, c.fn, c.fp);
    r.macro.precision = (r.presence.precision + r.absence.precision) / 2.0;
    r.macro.recall = (r.presence.recall + r.absence.recall) / 2.0;
    r.macro.f1 = (r.presence.f1 + r.absence.f1) / 2.0;
    return r;
}

/// Per-label counts from predicted and true label sets.
inline std::map<std::string, confusion_counts>
multilabel_confusion(std::vector<std::set<std::string>> const& predicted, std::vector<std::set<std::string>> const& truth,
                     std::vector<std::string> const& labels)
{
    if (predicted.size() != truth.size()) {
        throw error("multilabel_confusion: size mismatch");
    }
    std::map<std::string, confusion_counts> out;
    for (auto const& l : labels) {
        auto& c = out[l];
        for (std::size_t i = 0; i < predicted.size(); ++i) {
            bool p = predicted[i].contains(l);
            bool t = truth[i].contains(l);
            (p ? (t ? c.tp : c.fp) : (t ? c.fn : c.tn))++;
        }
    }
    return out;
}

/// Fraction of rows whose top label is in the truth set.
inline double top1_precision(std::vector<std::pair<std::string, std::set<std::string>>> const& rows)
{
    if (rows.empty()) {
        throw error("top1_precision: no rows");
    }
    std::size_t hits = 0;
    for (auto const& [top, truth] : rows) {
        hits += truth.contains(top) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(rows.size());
}

struct label_report {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double top1_precision = 0.0;
    std::size_t support = 0;
};

/// Table-style report: one row per label plus averages.
struct classification_report {
    std::vector<label_report> rows;
    label_report average;           // unweighted mean of rows
    label_report weighted_average;  // support-weighted mean of rows
    double top1_precision = 0.0;    // over examples with non-empty truth
    std::size_t examples = 0;
};

/// `scores[i]` aligned with `labels`; predictions are scores above `threshold`.
inline classification_report evaluate_multilabel(std::vector<std::vector<double>> const& scores,
                                                 std::vector<std::set<std::string>> const& truth,
                                                 std::vector<std::string> const& labels, double threshold = 0.5)
{
    if (scores.size() != truth.size()) {
        throw error("evaluate_multilabel: size mismatch");
    }
    std::vector<std::set<std::string>> predicted(scores.size());
    std::vector<std::pair<std::string, std::set<std::string>>> top_rows;
    std::map<std::string, std::pair<std::size_t, std::size_t>> top_by_label;  // label -> (hits, times top)
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i].size() != labels.size()) {
            throw error("evaluate_multilabel: score width mismatch");
        }
        for (std::size_t l = 0; l < labels.size(); ++l) {
            if (scores[i][l] > threshold) {
                predicted[i].insert(labels[l]);
            }
        }
        if (!truth[i].empty() && !labels.empty()) {
            auto best = static_cast<std::size_t>(std::max_element(scores[i].begin(), scores[i].end()) - scores[i].begin());
            top_rows.emplace_back(labels[best], truth[i]);
            auto& [hits, times] = top_by_label[labels[best]];
            ++times;
            hits += truth[i].contains(labels[best]) ? 1 : 0;
        }
    }
    auto counts = multilabel_confusion(predicted, truth, labels);
    classification_report rep;
    rep.examples = scores.size();
    std::size_t total_support = 0;
    for (auto const& l : labels) {
        auto m = macro_prf(counts[l]);
        label_report row{l, m.macro.precision, m.macro.recall, m.macro.f1, 0.0, counts[l].tp + counts[l].fn};
        if (auto it = top_by_label.find(l); it != top_by_label.end()) {
            row.top1_precision = detail::ratio(it->second.first, it->second.second);
        }
        rep.rows.push_back(row);
        total_support += row.support;
    }
    rep.top1_precision = top_rows.empty() ? 0.0 : top1_precision(top_rows);
    rep.average.label = "average";
    rep.weighted_average.label = "weighted average";
    for (auto const& r : rep.rows) {
        auto const n = static_cast<double>(rep.rows.size());
        rep.average.precision += r.precision / n;
        rep.average.recall += r.recall / n;
        rep.average.f1 += r.f1 / n;
        rep.average.top1_precision += r.top1_precision / n;
        rep.average.support += r.support;
        if (total_support > 0) {
            double w = static_cast<double>(r.support) / static_cast<double>(total_support);
            rep.weighted_average.precision += w * r.precision;
            rep.weighted_average.recall += w * r.recall;
            rep.weighted_average.f1 += w * r.f1;
            rep.weighted_average.top1_precision += w * r.top1_precision;
        }
    }
    rep.weighted_average.support = total_support;
    return rep;
}

/// Aligned plain-text table in the Prec./Recall/F1/Top-1 Prec./Support layout.
inline std::string format_report(classification_report const& rep, std::string const& title = "Label")
{
    std::size_t width = title.size();
    for (auto const& r : rep.rows) {
        width = std::max(width, r.label.size());
    }
    width = std::max(width, rep.weighted_average.label.size());
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << std::left << std::setw(static_cast<int>(width)) << title << "  Prec.  Recall  F1    Top-1  Support\n";
    auto line = [&](label_report const& r) {
        out << std::left << std::setw(static_cast<int>(width)) << r.label << "  " << std::setw(5) << r.precision
            << "  " << std::setw(6) << r.recall << "  " << std::setw(4) << r.f1 << "  " << std::setw(5)
            << r.top1_precision << "  " << r.support << "\n";
    };
    for (auto const& r : rep.rows) {
        line(r);
    }
    line(rep.average);
    line(rep.weighted_average);
    return out.str();
}

// ---------------------------------------------------------------------------
// Ranking

struct ranked_prediction {
    std::vector<std::size_t> candidates;  // best first
    std::set<std::size_t> relevant;
};

/// Questions with at least one relevant answer in the top k; empty
/// ground truth counts as a miss.
inline double top_k_score(std::vector<ranked_prediction> const& preds, std::size_t k)
{
    if (k == 0) {
        throw error("top_k_score: k must be >= 1");
    }
    if (preds.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (auto const& p : preds) {
        auto n = std::min(k, p.candidates.size());
        hits += std::any_of(p.candidates.begin(), p.candidates.begin() + static_cast<std::ptrdiff_t>(n),
                            [&](std::size_t c) { return p.relevant.contains(c); })
                    ? 1
                    : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Binary-relevance NDCG; the ideal ranking packs min(k, |relevant|) hits on top.
inline double ndcg_at_k(ranked_prediction const& p, std::size_t k)
{
    if (k == 0) {
        throw error("ndcg_at_k: k must be >= 1");
    }
    if (p.relevant.empty()) {
        return 0.0;
    }
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, p.candidates.size()); ++i) {
        if (p.relevant.contains(p.candidates[i])) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    double ideal = 0.0;
    for (std::size_t i = 0; i < std::min(k, p.relevant.size()); ++i) {
        ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / ideal;
}

/// Mean NDCG@k over questions that have ground truth.
inline double mean_ndcg(std::vector<ranked_prediction> const& preds, std::size_t k)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (auto const& p : preds) {
        if (!p.relevant.empty()) {
            sum += ndcg_at_k(p, k);
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Mean precision at the rank of each relevant item (unretrieved ones add 0).
inline double average_precision(ranked_prediction const& p)
{
    if (p.relevant.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < p.candidates.size(); ++i) {
        if (p.relevant.contains(p.candidates[i])) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(p.relevant.size());
}

/// Mean AP over questions that have ground truth.
inline double mean_average_precision(std::vector<ranked_prediction> const& preds)
{
    if (preds.empty()) {
        throw error("mean_average_precision: no predictions");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (auto const& p : preds) {
        if (!p.relevant.empty()) {
            sum += average_precision(p);
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

/// Linear-interpolation percentile (p in [0, 100]).
inline double percentile(std::vector<double> values, double p)
{
    if (values.empty()) {
        throw error("percentile: empty sample");
    }
    std::sort(values.begin(), values.end());
    double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(rank));
    auto hi = std::min(lo + 1, values.size() - 1);
    double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

enum class length_bucket : std::uint8_t { short_policy, medium_policy, long_policy };

inline std::string_view to_string(length_bucket b)
{
    switch (b) {
        case length_bucket::short_policy: return "short";
        case length_bucket::medium_policy: return "medium";
        case length_bucket::long_policy: return "high";
    }
    return "short";
}

struct bucket_bounds {
    double p33 = 0.0;
    double p66 = 0.0;

    [[nodiscard]] length_bucket of(double length) const
    {
        if (length <= p33) {
            return length_bucket::short_policy;
        }
        return length <= p66 ? length_bucket::medium_policy : length_bucket::long_policy;
    }
};

inline bucket_bounds length_buckets(std::vector<double> const& lengths)
{
    return {percentile(lengths, 33.0), percentile(lengths, 66.0)};
}

/// MAP per length bucket; `policy_lengths[i]` is the segment count of the
/// policy behind `preds[i]`. Buckets come from the distribution of those lengths.
inline std::map<length_bucket, double> bucketed_map(std::vector<ranked_prediction> const& preds,
                                                    std::vector<double> const& policy_lengths)
{
    if (preds.size() != policy_lengths.size()) {
        throw error("bucketed_map: size mismatch");
    }
    auto bounds = length_buckets(policy_lengths);
    std::map<length_bucket, std::vector<ranked_prediction>> groups;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        groups[bounds.of(policy_lengths[i])].push_back(preds[i]);
    }
    std::map<length_bucket, double> out;
    for (auto const& [b, g] : groups) {
        out[b] = mean_average_precision(g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distributions and agreement

/// sqrt(1 - sum sqrt(p_i q_i)), computed as ||sqrt p - sqrt q|| / sqrt 2 so
/// that identical inputs give exactly 0.
inline double hellinger(std::vector<double> const& p, std::vector<double> const& q)
{
    if (p.size() != q.size() || p.empty()) {
        throw error("hellinger: distributions must share a non-empty support");
    }
    double sp = 0.0;
    double sq = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) {
            throw error("hellinger: negative mass");
        }
        sp += p[i];
        sq += q[i];
        double d = std::sqrt(p[i]) - std::sqrt(q[i]);
        sum += d * d;
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
        throw error("hellinger: distributions must sum to 1");
    }
    return std::min(1.0, std::sqrt(sum / 2.0));
}

/// Chance-corrected agreement. When chance agreement is 1 the value is 1 for
/// perfect agreement and 0 otherwise.
inline double cohen_kappa(std::vector<std::string> const& a, std::vector<std::string> const& b,
                          std::vector<std::string> const& universe)
{
    if (a.size() != b.size()) {
        throw error("cohen_kappa: rating sequences differ in length");
    }
    if (a.empty()) {
        throw error("cohen_kappa: no ratings");
    }
    std::set<std::string> u(universe.begin(), universe.end());
    std::map<std::string, double> ma;
    std::map<std::string, double> mb;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!u.contains(a[i]) || !u.contains(b[i])) {
            throw unknown_label_error({u.contains(a[i]) ? b[i] : a[i]});
        }
        ma[a[i]] += 1.0;
        mb[b[i]] += 1.0;
        agree += a[i] == b[i] ? 1 : 0;
    }
    auto const n = static_cast<double>(a.size());
    double po = static_cast<double>(agree) / n;
    double pe = 0.0;
    for (auto const& l : u) {
        pe += (ma[l] / n) * (mb[l] / n);
    }
    if (std::abs(1.0 - pe) < 1e-15) {
        return po == 1.0 ? 1.0 : 0.0;
    }
    return (po - pe) / (1.0 - pe);
}

}  // namespace policylens
