#pragma once

// Answer ranking: questions and segments become category-weighted value
// vectors, segments are scored against the question, and the scores carry
// a user-facing confidence. Also the BM25, semantic-vector and random
// baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "policylens/detail/rng.hpp"
#include "policylens/embeddings.hpp"
#include "policylens/error.hpp"
#include "policylens/hierarchy.hpp"
#include "policylens/neuralnet.hpp"
#include "policylens/taxonomy.hpp"
#include "policylens/tokenizer.hpp"

namespace policylens {

// ---------------------------------------------------------------------------
// Scoring primitives

/// 1 - H(p_n) / ln|C| where p_n is `probs` normalized to sum 1.
inline double certainty(std::span<double const> probs)
{
    if (probs.size() < 2) {
        throw error("certainty: need at least two categories");
    }
    double sum = 0.0;
    for (double p : probs) {
        if (p < 0.0 || !std::isfinite(p)) {
            throw error("certainty: probabilities must be finite and non-negative");
        }
        sum += p;
    }
    if (sum <= 0.0) {
        throw error("certainty: all probabilities are zero");
    }
    double entropy = 0.0;
    for (double p : probs) {
        double pn = p / sum;
        if (pn > 0.0) {
            entropy -= pn * std::log(pn);
        }
    }
    return std::clamp(1.0 - entropy / std::log(static_cast<double>(probs.size())), 0.0, 1.0);
}

inline double certainty(label_probabilities const& probs)
{
    std::vector<double> v;
    v.reserve(probs.size());
    for (auto const& [c, p] : probs) {
        v.push_back(p);
    }
    return certainty(v);
}

enum class vector_source : std::uint8_t { answer, question };

/// One coordinate per taxonomy pair: p(c|x)^2 * p(v|x).
struct practice_vector {
    std::vector<double> coords;
    vector_source source = vector_source::answer;
};

inline practice_vector make_practice_vector(taxonomy const& t, label_probabilities const& category_probs,
                                            std::map<attribute_value, double> const& value_probs,
                                            vector_source source)
{
    practice_vector out;
    out.source = source;
    out.coords.reserve(t.pairs().size());
    for (auto const& pc : t.pairs()) {
        auto c = category_probs.find(pc.category);
        auto v = value_probs.find({pc.attribute, pc.value});
        if (c == category_probs.end()) {
            throw unknown_category_error(pc.category);
        }
        if (v == value_probs.end()) {
            throw unknown_label_error({pc.attribute + "=" + pc.value});
        }
        out.coords.push_back(c->second * c->second * v->second);
    }
    return out;
}

inline practice_vector make_practice_vector(taxonomy const& t, segment_annotation const& ann)
{
    return make_practice_vector(t, ann.category_probs, ann.value_probs, vector_source::answer);
}

/// sum(beta * min(beta, alpha)) / sum(beta^2) * cer(a).
inline double rank_score(practice_vector const& beta, practice_vector const& alpha, double cer_a)
{
    if (beta.coords.size() != alpha.coords.size()) {
        throw error("rank_score: vectors use different coordinate systems");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < beta.coords.size(); ++i) {
        num += beta.coords[i] * std::min(beta.coords[i], alpha.coords[i]);
        den += beta.coords[i] * beta.coords[i];
    }
    if (den == 0.0) {
        throw ambiguous_question_error("the question carries no category or value signal");
    }
    return num / den * cer_a;
}

/// Share of the question's word tokens present in the embedding vocabulary.
inline double known_word_fraction(std::string_view question, subword_embedding_model const& emb)
{
    auto tokens = word_tokens(question);
    if (tokens.empty()) {
        throw ambiguous_question_error("the question contains no words");
    }
    std::size_t known = 0;
    for (auto const& t : tokens) {
        known += emb.contains(t) ? 1 : 0;
    }
    return static_cast<double>(known) / static_cast<double>(tokens.size());
}

inline double confidence(double s, double cer_q, double frac_q) { return s * (cer_q + frac_q) / 2.0; }

// ---------------------------------------------------------------------------
// Ranking

struct ranked_answer {
    std::size_t segment_index = 0;
    double score = 0.0;
    double confidence = 0.0;
    std::size_t rank = 0;  // 1-based
    std::set<std::size_t> conflict_with;  // segment indices
};

struct question_analysis {
    label_probabilities category_probs;  // query model
    std::map<attribute_value, double> value_probs;
    practice_vector beta;
    double cer_q = 0.0;
    double frac_q = 0.0;
};

struct qa_config {
    /// Answers examined pairwise for contradictory polarity.
    std::size_t conflict_window = 3;
    /// Top-1 confidence below this marks the response as possibly unanswerable.
    double low_confidence_threshold = 0.6;
};

struct qa_response {
    question_analysis question;
    std::vector<ranked_answer> answers;
    bool low_confidence = false;
};

inline question_analysis analyze_question(classifier_hierarchy const& h, std::string_view question)
{
    question_analysis qa;
    qa.frac_q = known_word_fraction(question, h.embedding());
    qa.category_probs = h.classify_query(question);
    qa.value_probs = h.classify(question).value_probs;
    // Query-only categories (the Other group) own no pairs, so zeros are safe.
    label_probabilities full = qa.category_probs;
    for (auto const& c : h.taxonomy_ref().categories()) {
        full.emplace(c.id, 0.0);
    }
    qa.beta = make_practice_vector(h.taxonomy_ref(), full, qa.value_probs, vector_source::question);
    qa.cer_q = certainty(qa.category_probs);
    return qa;
}

namespace detail {

inline void sort_by_score(std::vector<ranked_answer>& answers)
{
    std::stable_sort(answers.begin(), answers.end(), [](ranked_answer const& a, ranked_answer const& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.segment_index < b.segment_index;
    });
    for (std::size_t i = 0; i < answers.size(); ++i) {
        answers[i].rank = i + 1;
    }
}

inline bool polarity_conflict(segment_annotation const& a, segment_annotation const& b, taxonomy const& t)
{
    bool a_does = a.p_does >= a.p_does_not;
    bool b_does = b.p_does >= b.p_does_not;
    if (a_does == b_does) {
        return false;
    }
    auto ca = present_labels(t, a).categories;
    auto cb = present_labels(t, b).categories;
    return std::any_of(ca.begin(), ca.end(), [&](std::string const& c) { return cb.contains(c); });
}

}  // namespace detail

/// Scores every annotated segment against an analyzed question.
inline qa_response rank_answers(classifier_hierarchy const& h, std::vector<segment_annotation> const& segments,
                                question_analysis question, qa_config const& cfg = {})
{
    qa_response out;
    std::map<std::size_t, segment_annotation const*> by_index;
    for (auto const& ann : segments) {
        auto alpha = make_practice_vector(h.taxonomy_ref(), ann);
        ranked_answer a;
        a.segment_index = ann.segment_index;
        a.score = rank_score(question.beta, alpha, certainty(ann.category_probs));
        a.confidence = confidence(a.score, question.cer_q, question.frac_q);
        out.answers.push_back(a);
        by_index[ann.segment_index] = &ann;
    }
    detail::sort_by_score(out.answers);
    if (h.polarity_model().trained()) {
        auto const window = std::min(cfg.conflict_window, out.answers.size());
        for (std::size_t i = 0; i < window; ++i) {
            for (std::size_t j = i + 1; j < window; ++j) {
                auto& a = out.answers[i];
                auto& b = out.answers[j];
                if (detail::polarity_conflict(*by_index[a.segment_index], *by_index[b.segment_index],
                                              h.taxonomy_ref())) {
                    a.conflict_with.insert(b.segment_index);
                    b.conflict_with.insert(a.segment_index);
                }
            }
        }
    }
    out.low_confidence = out.answers.empty() || out.answers.front().confidence < cfg.low_confidence_threshold;
    out.question = std::move(question);
    return out;
}

inline qa_response rank_answers(classifier_hierarchy const& h, std::vector<segment_annotation> const& segments,
                                std::string_view question, qa_config const& cfg = {})
{
    return rank_answers(h, segments, analyze_question(h, question), cfg);
}

inline qa_response rank_answers(classifier_hierarchy const& h, std::vector<segment> const& segments,
                                std::string_view question, qa_config const& cfg = {})
{
    std::vector<segment_annotation> anns;
    anns.reserve(segments.size());
    for (auto const& s : segments) {
        anns.push_back(classify_segment(h, s));
    }
    return rank_answers(h, anns, question, cfg);
}

/// Answers with confidence >= tau, in their original order.
inline std::vector<ranked_answer> filter_by_confidence(std::vector<ranked_answer> const& answers, double tau)
{
    std::vector<ranked_answer> out;
    std::copy_if(answers.begin(), answers.end(), std::back_inserter(out),
                 [&](ranked_answer const& a) { return a.confidence >= tau; });
    return out;
}

// ---------------------------------------------------------------------------
// Baselines

struct scored_segment {
    std::size_t segment_index = 0;
    double score = 0.0;
};

namespace detail {

/// Descending by score, then by segment index.
inline void sort_scored(std::vector<scored_segment>& v)
{
    std::stable_sort(v.begin(), v.end(), [](scored_segment const& a, scored_segment const& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.segment_index < b.segment_index;
    });
}

}  // namespace detail

/// Okapi BM25 with document frequencies taken from an external corpus.
class bm25_index {
  public:
    bm25_index(std::vector<std::string> const& corpus, double k1 = 1.2, double b = 0.75) : m_k1(k1), m_b(b)
    {
        if (k1 <= 0.0 || b < 0.0 || b > 1.0) {
            throw error("bm25: need k1 > 0 and 0 <= b <= 1");
        }
        for (auto const& doc : corpus) {
            auto toks = word_tokens(doc);
            std::set<std::string> unique(toks.begin(), toks.end());
            for (auto const& t : unique) {
                ++m_df[t];
            }
        }
        m_documents = corpus.size();
    }

    [[nodiscard]] std::size_t document_count() const noexcept { return m_documents; }
    [[nodiscard]] double k1() const noexcept { return m_k1; }
    [[nodiscard]] double b() const noexcept { return m_b; }

    /// ln(1 + (N - df + 0.5) / (df + 0.5)); always finite and positive.
    [[nodiscard]] double idf(std::string const& term) const
    {
        auto it = m_df.find(term);
        double df = it == m_df.end() ? 0.0 : static_cast<double>(it->second);
        double n = static_cast<double>(m_documents);
        return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }

    /// Scores of `texts` (one per segment) for the question; lengths are normalized within `texts`.
    [[nodiscard]] std::vector<double> scores(std::string_view question, std::vector<std::string> const& texts) const
    {
        if (m_documents == 0) {
            throw error("bm25: empty index");
        }
        std::vector<std::map<std::string, double>> tf(texts.size());
        std::vector<double> len(texts.size());
        double total = 0.0;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            auto toks = word_tokens(texts[i]);
            for (auto const& t : toks) {
                tf[i][t] += 1.0;
            }
            len[i] = static_cast<double>(toks.size());
            total += len[i];
        }
        double avgdl = texts.empty() || total == 0.0 ? 1.0 : total / static_cast<double>(texts.size());
        std::vector<double> out(texts.size(), 0.0);
        for (auto const& q : word_tokens(question)) {
            double w = idf(q);
            for (std::size_t i = 0; i < texts.size(); ++i) {
                auto it = tf[i].find(q);
                if (it == tf[i].end()) {
                    continue;
                }
                double f = it->second;
                out[i] += w * f * (m_k1 + 1.0) / (f + m_k1 * (1.0 - m_b + m_b * len[i] / avgdl));
            }
        }
        return out;
    }

  private:
    double m_k1;
    double m_b;
    std::size_t m_documents = 0;
    std::map<std::string, std::size_t> m_df;
};

inline std::vector<scored_segment> baseline_bm25(bm25_index const& index, std::string_view question,
                                                 std::vector<segment> const& segments)
{
    std::vector<std::string> texts;
    for (auto const& s : segments) {
        texts.push_back(s.text);
    }
    auto sc = index.scores(question, texts);
    std::vector<scored_segment> out;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        out.push_back({segments[i].index, sc[i]});
    }
    detail::sort_scored(out);
    return out;
}

/// Ascending Euclidean distance between penultimate-layer vectors; the score is the negated distance.
inline std::vector<scored_segment> baseline_semvec(cnn_classifier const& model, subword_embedding_model const& emb,
                                                   std::string_view question, std::vector<segment> const& segments)
{
    if (!model.trained()) {
        throw untrained_model_error("semantic-vector model is not trained");
    }
    auto const max_len = model.shape().max_len;
    auto qv = model.forward(encode(emb, make_sequence(question, max_len))).semantic_vector;
    std::vector<scored_segment> out;
    for (auto const& s : segments) {
        auto sv = model.forward(encode(emb, make_sequence(s.text, max_len))).semantic_vector;
        double d = 0.0;
        for (std::size_t i = 0; i < qv.size(); ++i) {
            d += (qv[i] - sv[i]) * (qv[i] - sv[i]);
        }
        out.push_back({s.index, -std::sqrt(d)});
    }
    detail::sort_scored(out);
    return out;
}

/// Uniform permutation, deterministic per seed.
inline std::vector<scored_segment> baseline_random(std::vector<segment> const& segments, std::uint64_t seed)
{
    std::vector<scored_segment> out;
    for (auto const& s : segments) {
        out.push_back({s.index, 0.0});
    }
    std::mt19937_64 gen(seed);
    detail::shuffle(out, gen);
    return out;
}

/// Labels of the flat value classifier behind the semantic-vector baseline:
/// every value of the mandatory attributes, or of all attributes if none is mandatory.
inline std::vector<std::string> flat_value_labels(taxonomy const& t)
{
    bool any_mandatory = std::any_of(t.attributes().begin(), t.attributes().end(),
                                     [](attribute const& a) { return a.mandatory; });
    std::vector<std::string> out;
    for (auto const& a : t.attributes()) {
        if (any_mandatory && !a.mandatory) {
            continue;
        }
        for (auto const& v : a.values) {
            out.push_back(a.id + "=" + v.id);
        }
    }
    return out;
}

/// Single classifier over all flat value labels, trained on the split's training policies.
inline cnn_classifier train_flat_value_model(taxonomy const& t, subword_embedding_model const& emb,
                                             std::vector<merged_segment_labels> const& segments,
                                             dataset_split const& split, hierarchy_config cfg)
{
    cfg.shape.embedding_dim = emb.dim();
    auto labels = flat_value_labels(t);
    std::set<std::string> known(labels.begin(), labels.end());
    cnn_classifier model(cfg.shape, labels, cfg.seed + 104729, emb.fingerprint());
    std::vector<training_example> data;
    for (auto const& s : segments) {
        if (!split.train_policy_ids.contains(s.policy_id)) {
            continue;
        }
        std::set<std::string> l;
        for (auto const& av : s.attribute_values) {
            if (known.contains(av.str())) {
                l.insert(av.str());
            }
        }
        data.push_back({encode(emb, make_sequence(s.text, cfg.shape.max_len)), std::move(l)});
    }
    if (data.empty()) {
        throw error("train_flat_value_model: no training segments");
    }
    train(model, data, cfg.training);
    return model;
}

}  // namespace policylens
