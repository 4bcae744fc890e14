#pragma once

// Evaluation drivers: QA ranking for the question-answering approach and
// its baselines, and icon agreement between expert and automatic labels.

#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "policylens/corpus_io.hpp"
#include "policylens/hierarchy.hpp"
#include "policylens/icons.hpp"
#include "policylens/metrics.hpp"
#include "policylens/qa.hpp"
#include "policylens/segmenter.hpp"

namespace policylens {

struct approach_scores {
    std::string name;
    std::map<std::size_t, double> top_k;
    std::map<std::size_t, double> ndcg;
    double map = 0.0;
    std::map<length_bucket, double> map_by_length;
    std::vector<ranked_prediction> predictions;
};

struct qa_evaluation {
    std::size_t questions = 0;
    std::size_t unanswerable = 0;
    /// Questions the ranking approach rejected as carrying no signal.
    std::size_t ambiguous = 0;
    std::vector<approach_scores> approaches;
};

struct qa_evaluation_config {
    std::vector<std::size_t> ks = {1, 2, 3, 4, 5};
    std::uint64_t seed = 1;
};

namespace detail {

inline approach_scores score_approach(std::string name, std::vector<ranked_prediction> preds,
                                      std::vector<double> const& lengths, qa_evaluation_config const& cfg)
{
    approach_scores out;
    out.name = std::move(name);
    for (auto k : cfg.ks) {
        out.top_k[k] = top_k_score(preds, k);
        out.ndcg[k] = mean_ndcg(preds, k);
    }
    bool any_relevant = std::any_of(preds.begin(), preds.end(), [](auto const& p) { return !p.relevant.empty(); });
    if (any_relevant) {
        out.map = mean_average_precision(preds);
        out.map_by_length = bucketed_map(preds, lengths);
    }
    out.predictions = std::move(preds);
    return out;
}

inline std::vector<std::size_t> candidates_of(std::vector<scored_segment> const& v)
{
    std::vector<std::size_t> out;
    for (auto const& s : v) {
        out.push_back(s.segment_index);
    }
    return out;
}

}  // namespace detail

/// Ranks every policy's segments for every question with the hierarchy, BM25,
/// the semantic-vector model (when given) and the random control.
/// `policies` maps a policy id to its segments in index order.
inline qa_evaluation evaluate_qa(classifier_hierarchy const& h, std::map<std::string, std::vector<segment>> const& policies,
                                 std::vector<qa_record> const& questions, bm25_index const& bm25,
                                 cnn_classifier const* semvec_model = nullptr, qa_evaluation_config const& cfg = {})
{
    if (questions.empty()) {
        throw error("evaluate_qa: no questions");
    }
    qa_evaluation out;
    out.questions = questions.size();
    std::map<std::string, std::vector<segment_annotation>> annotations;
    std::map<std::string, std::vector<ranked_prediction>> preds;
    std::vector<double> lengths;
    std::uint64_t n = 0;
    for (auto const& q : questions) {
        auto it = policies.find(q.policy_id);
        if (it == policies.end()) {
            throw error("evaluate_qa: unknown policy '" + q.policy_id + "'");
        }
        auto const& segs = it->second;
        lengths.push_back(static_cast<double>(segs.size()));
        out.unanswerable += q.unanswerable() ? 1 : 0;
        auto& anns = annotations[q.policy_id];
        if (anns.empty()) {
            for (auto const& s : segs) {
                anns.push_back(classify_segment(h, s));
            }
        }
        ranked_prediction ours{{}, q.ground_truth};
        try {
            for (auto const& a : rank_answers(h, anns, q.question).answers) {
                ours.candidates.push_back(a.segment_index);
            }
        } catch (ambiguous_question_error const&) {
            ++out.ambiguous;
        }
        preds["policylens"].push_back(std::move(ours));
        preds["bm25"].push_back({detail::candidates_of(baseline_bm25(bm25, q.question, segs)), q.ground_truth});
        if (semvec_model != nullptr) {
            preds["semvec"].push_back(
                {detail::candidates_of(baseline_semvec(*semvec_model, h.embedding(), q.question, segs)), q.ground_truth});
        }
        preds["random"].push_back({detail::candidates_of(baseline_random(segs, cfg.seed + n)), q.ground_truth});
        ++n;
    }
    for (auto const* name : {"policylens", "bm25", "semvec", "random"}) {
        if (preds.contains(name)) {
            out.approaches.push_back(detail::score_approach(name, std::move(preds[name]), lengths, cfg));
        }
    }
    return out;
}

/// Three tables (top-k, NDCG@k, MAP by policy length), one row per approach.
inline std::string format_qa_evaluation(qa_evaluation const& ev)
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(3);
    out << "questions: " << ev.questions << "  unanswerable: " << ev.unanswerable << "  ambiguous: " << ev.ambiguous
        << "\n";
    auto table = [&](char const* title, auto field) {
        out << "\n" << title << "\n" << std::left << std::setw(12) << "approach";
        if (!ev.approaches.empty()) {
            for (auto const& [k, v] : field(ev.approaches.front())) {
                out << "  k=" << std::setw(5) << k;
            }
        }
        out << "\n";
        for (auto const& a : ev.approaches) {
            out << std::left << std::setw(12) << a.name;
            for (auto const& [k, v] : field(a)) {
                out << "  " << std::setw(7) << v;
            }
            out << "\n";
        }
    };
    table("top-k score", [](approach_scores const& a) { return a.top_k; });
    table("NDCG@k", [](approach_scores const& a) { return a.ndcg; });
    out << "\nMAP\n" << std::left << std::setw(12) << "approach" << "  all    ";
    for (auto b : {length_bucket::short_policy, length_bucket::medium_policy, length_bucket::long_policy}) {
        out << "  " << std::setw(7) << to_string(b);
    }
    out << "\n";
    for (auto const& a : ev.approaches) {
        out << std::left << std::setw(12) << a.name << "  " << std::setw(7) << a.map;
        for (auto b : {length_bucket::short_policy, length_bucket::medium_policy, length_bucket::long_policy}) {
            auto it = a.map_by_length.find(b);
            out << "  ";
            if (it == a.map_by_length.end()) {
                out << std::setw(7) << "-";
            } else {
                out << std::setw(7) << it->second;
            }
        }
        out << "\n";
    }
    return out.str();
}

inline nlohmann::json to_json(qa_evaluation const& ev)
{
    nlohmann::json approaches = nlohmann::json::array();
    for (auto const& a : ev.approaches) {
        nlohmann::json topk = nlohmann::json::object();
        nlohmann::json ndcg = nlohmann::json::object();
        for (auto const& [k, v] : a.top_k) {
            topk[std::to_string(k)] = v;
        }
        for (auto const& [k, v] : a.ndcg) {
            ndcg[std::to_string(k)] = v;
        }
        nlohmann::json buckets = nlohmann::json::object();
        for (auto const& [b, v] : a.map_by_length) {
            buckets[std::string(to_string(b))] = v;
        }
        approaches.push_back({{"name", a.name}, {"top_k", topk}, {"ndcg", ndcg}, {"map", a.map}, {"map_by_length", buckets}});
    }
    return {{"questions", ev.questions},
            {"unanswerable", ev.unanswerable},
            {"ambiguous", ev.ambiguous},
            {"approaches", approaches}};
}

// ---------------------------------------------------------------------------
// Icons

struct icon_evaluation {
    icon_strategy strategy = icon_strategy::conservative;
    std::vector<std::string> policy_ids;
    std::vector<icon_comparison> comparisons;
};

/// Expert labels against the hierarchy's labels of the same segment texts, per policy.
inline icon_evaluation evaluate_icons(classifier_hierarchy const& h, std::vector<merged_segment_labels> const& expert,
                                      icon_strategy strategy = icon_strategy::conservative, double threshold = 0.5)
{
    std::map<std::string, std::vector<merged_segment_labels>> by_policy;
    for (auto const& m : expert) {
        by_policy[m.policy_id].push_back(m);
    }
    if (by_policy.empty()) {
        throw error("evaluate_icons: no policies");
    }
    icon_evaluation out;
    out.strategy = strategy;
    std::vector<std::vector<icon_assignment>> a;
    std::vector<std::vector<icon_assignment>> b;
    for (auto const& [id, segs] : by_policy) {
        std::vector<segment_annotation> anns;
        for (auto const& m : segs) {
            auto ann = h.classify(m.text);
            ann.policy_id = id;
            ann.segment_index = m.segment_index;
            anns.push_back(std::move(ann));
        }
        a.push_back(assign_all(labeled_policy_from_expert(id, segs), strategy));
        b.push_back(assign_all(labeled_policy_from_annotations(h.taxonomy_ref(), id, anns, threshold), strategy));
        out.policy_ids.push_back(id);
    }
    out.comparisons = compare_assignments(a, b);
    return out;
}

}  // namespace policylens
