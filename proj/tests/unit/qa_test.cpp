#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "policylens/qa.hpp"
#include "support/trained_synthetic.hpp"

using namespace policylens;
namespace pt = policylens::testing;

namespace {

practice_vector pv(std::vector<double> v) { return {std::move(v), vector_source::answer}; }

/// Annotation over the synthetic taxonomy: one dominant category and value.
segment_annotation hand_annotation(std::size_t index, std::string const& category, attribute_value const& value,
                                   double p_does = 0.5)
{
    auto const& t = pt::setup().tax;
    segment_annotation a;
    a.segment_index = index;
    for (auto const& c : t.segment_category_ids()) {
        a.category_probs[c] = c == category ? 1.0 : 0.0;
    }
    for (auto const& v : t.all_values()) {
        a.value_probs[v] = v == value ? 1.0 : 0.0;
    }
    a.p_does = p_does;
    a.p_does_not = 1.0 - p_does;
    return a;
}

question_analysis hand_question(segment_annotation const& like)
{
    question_analysis q;
    q.category_probs = like.category_probs;
    q.value_probs = like.value_probs;
    q.beta = make_practice_vector(pt::setup().tax, like.category_probs, like.value_probs, vector_source::question);
    q.cer_q = 1.0;
    q.frac_q = 1.0;
    return q;
}

classifier_hierarchy untrained_hierarchy()
{
    return classifier_hierarchy(pt::setup().tax, pt::setup().emb, pt::small_config());
}

std::vector<segment> as_segments(std::vector<std::string> const& texts)
{
    std::vector<segment> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        out.push_back({"p", i, texts[i], segment_origin::paragraph});
    }
    return out;
}

}  // namespace

TEST(Certainty, HandValues)
{
    std::vector<double> uniform(9, 1.0 / 9);
    EXPECT_NEAR(certainty(uniform), 0.0, 1e-9);
    std::vector<double> one_hot(9, 0.0);
    one_hot[4] = 1.0;
    EXPECT_NEAR(certainty(one_hot), 1.0, 1e-9);
    std::vector<double> split(9, 0.0);
    split[0] = split[1] = 0.5;
    EXPECT_NEAR(certainty(split), 1.0 - std::log(2.0) / std::log(9.0), 1e-9);
    EXPECT_NEAR(certainty(split), 0.6845, 1e-4);
    // Unnormalized input is normalized first.
    std::vector<double> scaled(9, 0.0);
    scaled[0] = scaled[1] = 0.9;
    EXPECT_NEAR(certainty(scaled), certainty(split), 1e-12);
    EXPECT_THROW(certainty(std::vector<double>(9, 0.0)), error);
    EXPECT_THROW(certainty(std::vector<double>{1.0}), error);
}

TEST(PracticeVector, CoordinatesAreSquaredCategoryTimesValue)
{
    auto const& t = pt::setup().tax;
    label_probabilities cats;
    for (auto const& c : t.segment_category_ids()) {
        cats[c] = 0.0;
    }
    std::map<attribute_value, double> vals;
    for (auto const& v : t.all_values()) {
        vals[v] = 0.3;
    }
    cats["data-security"] = 0.5;
    vals[{"security-measure", "audit"}] = 0.8;
    cats["data-retention"] = 1.0;
    vals[{"personal-information-type", "location"}] = 1.0;
    auto p = make_practice_vector(t, cats, vals, vector_source::answer);
    ASSERT_EQ(p.coords.size(), t.pairs().size());
    for (std::size_t i = 0; i < t.pairs().size(); ++i) {
        auto const& pc = t.pairs()[i];
        if (pc.category == "data-security" && pc.value == "audit") {
            EXPECT_NEAR(p.coords[i], 0.2, 1e-12);
        } else if (pc.category == "data-retention" && pc.value == "location") {
            EXPECT_EQ(p.coords[i], 1.0);
        } else if (cats[pc.category] == 0.0) {
            EXPECT_EQ(p.coords[i], 0.0);
        }
    }
    cats.erase("policy-change");
    EXPECT_THROW(make_practice_vector(t, cats, vals, vector_source::answer), unknown_category_error);
}

TEST(RankScore, HandValues)
{
    EXPECT_DOUBLE_EQ(rank_score(pv({0.3, 0.7}), pv({0.3, 0.7}), 1.0), 1.0);
    EXPECT_EQ(rank_score(pv({0.3, 0.7}), pv({0.0, 0.0}), 1.0), 0.0);
    EXPECT_NEAR(rank_score(pv({0.8, 0.2}), pv({0.4, 0.6}), 1.0), 0.36 / 0.68, 1e-12);
    EXPECT_NEAR(rank_score(pv({0.8, 0.2}), pv({0.4, 0.6}), 1.0), 0.5294, 1e-4);
    EXPECT_THROW(rank_score(pv({0.0, 0.0}), pv({0.4, 0.6}), 1.0), ambiguous_question_error);
    EXPECT_THROW(rank_score(pv({0.1}), pv({0.4, 0.6}), 1.0), error);
}

TEST(RankScore, BoundsAndScaleResponse)
{
    std::mt19937_64 gen(41);
    for (int trial = 0; trial < 2000; ++trial) {
        std::size_t n = 1 + detail::uniform_below(gen, 10);
        std::vector<double> b(n);
        std::vector<double> a(n);
        for (std::size_t i = 0; i < n; ++i) {
            b[i] = detail::uniform_unit(gen);
            a[i] = detail::uniform_unit(gen);
        }
        b[0] += 1e-3;
        double cer = detail::uniform_unit(gen);
        double s = rank_score(pv(b), pv(a), cer);
        ASSERT_GE(s, 0.0);
        ASSERT_LE(s, 1.0 + 1e-12);
        double lambda = 1e-3 + detail::uniform_unit(gen) * (1 - 1e-3);
        auto scaled = a;
        for (auto& x : scaled) {
            x *= lambda;
        }
        ASSERT_LE(rank_score(pv(b), pv(scaled), cer), s + 1e-12);
        auto dominating = b;
        for (std::size_t i = 0; i < n; ++i) {
            dominating[i] += a[i];
        }
        ASSERT_NEAR(rank_score(pv(b), pv(dominating), 1.0), 1.0, 1e-12);
    }
}

TEST(KnownWordFraction, CountsVocabularyMembershipOnly)
{
    auto emb = import_text_vectors("3 2\ndo 0.1 0.2\nyou 0.3 0.1\nsell 0.2 0.2\n");
    EXPECT_DOUBLE_EQ(known_word_fraction("Do you sell?", emb), 1.0);
    EXPECT_DOUBLE_EQ(known_word_fraction("Do you sell cookies?", emb), 0.75);
    EXPECT_DOUBLE_EQ(known_word_fraction("zzz qqq", emb), 0.0);
    EXPECT_THROW(known_word_fraction("?!", emb), ambiguous_question_error);
}

TEST(Confidence, HandValuesAndMonotonicity)
{
    EXPECT_DOUBLE_EQ(confidence(1.0, 1.0, 1.0), 1.0);
    EXPECT_EQ(confidence(0.0, 0.7, 0.3), 0.0);
    double s = 0.36 / 0.68;
    double cer = 1.0 - std::log(2.0) / std::log(9.0);
    EXPECT_NEAR(confidence(s, cer, 1.0), s * (cer + 1.0) / 2.0, 1e-12);
    EXPECT_NEAR(confidence(s, cer, 1.0), 0.4459, 1e-4);
    std::mt19937_64 gen(43);
    for (int trial = 0; trial < 1000; ++trial) {
        double a = detail::uniform_unit(gen);
        double b = detail::uniform_unit(gen);
        double c = detail::uniform_unit(gen);
        double d = detail::uniform_unit(gen) * 0.1;
        double base = confidence(a, b, c);
        ASSERT_LE(base, a);
        ASSERT_LE(base, confidence(std::min(1.0, a + d), b, c));
        ASSERT_LE(base, confidence(a, std::min(1.0, b + d), c));
        ASSERT_LE(base, confidence(a, b, std::min(1.0, c + d)));
    }
}

TEST(RankAnswers, IdenticalAnnotationScoresOneAndRanksFirst)
{
    auto h = untrained_hierarchy();
    auto target = hand_annotation(2, "data-security", {"security-measure", "audit"});
    std::vector<segment_annotation> anns = {
        hand_annotation(0, "policy-change", {"does-does-not", "does"}),
        hand_annotation(1, "data-retention", {"personal-information-type", "location"}),
        target,
    };
    auto r = rank_answers(h, anns, hand_question(target));
    ASSERT_EQ(r.answers.size(), 3u);
    EXPECT_EQ(r.answers[0].segment_index, 2u);
    EXPECT_DOUBLE_EQ(r.answers[0].score, 1.0);
    EXPECT_DOUBLE_EQ(r.answers[0].confidence, 1.0);
    EXPECT_EQ(r.answers[0].rank, 1u);
    EXPECT_FALSE(r.low_confidence);
    // Ties keep document order.
    EXPECT_EQ(r.answers[1].segment_index, 0u);
    EXPECT_EQ(r.answers[2].segment_index, 1u);
    EXPECT_EQ(r.answers[1].score, 0.0);
}

TEST(RankAnswers, OppositePolarityOnSharedCategoryConflicts)
{
    auto h = untrained_hierarchy();
    h.polarity_model().mark_trained(true);
    attribute_value loc{"personal-information-type", "location"};
    std::vector<segment_annotation> anns = {
        hand_annotation(0, "third-party-sharing-collection", loc, 0.9),
        hand_annotation(1, "third-party-sharing-collection", loc, 0.1),
        hand_annotation(2, "data-retention", loc, 0.1),
        hand_annotation(3, "third-party-sharing-collection", loc, 0.1),
    };
    auto r = rank_answers(h, anns, hand_question(anns[0]));
    // Top 3: 0, 1, 3 (2 is off-category).
    ASSERT_EQ(r.answers[0].segment_index, 0u);
    ASSERT_EQ(r.answers[1].segment_index, 1u);
    ASSERT_EQ(r.answers[2].segment_index, 3u);
    EXPECT_EQ(r.answers[0].conflict_with, (std::set<std::size_t>{1, 3}));
    EXPECT_EQ(r.answers[1].conflict_with, (std::set<std::size_t>{0}));
    EXPECT_EQ(r.answers[2].conflict_with, (std::set<std::size_t>{0}));
    EXPECT_TRUE(r.answers[3].conflict_with.empty());
    for (auto const& a : r.answers) {
        for (auto other : a.conflict_with) {
            auto it = std::find_if(r.answers.begin(), r.answers.end(),
                                   [&](ranked_answer const& x) { return x.segment_index == other; });
            EXPECT_TRUE(it->conflict_with.contains(a.segment_index));
        }
    }
}

TEST(RankAnswers, ConfidenceFilterKeepsOrder)
{
    std::vector<ranked_answer> answers;
    std::mt19937_64 gen(47);
    for (std::size_t i = 0; i < 20; ++i) {
        answers.push_back({i, 0.0, detail::uniform_unit(gen), i + 1, {}});
    }
    auto kept = filter_by_confidence(answers, 0.6);
    std::size_t expected = 0;
    for (auto const& a : answers) {
        expected += a.confidence >= 0.6 ? 1 : 0;
    }
    EXPECT_EQ(kept.size(), expected);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        EXPECT_GE(kept[i].confidence, 0.6);
        if (i > 0) {
            EXPECT_LT(kept[i - 1].rank, kept[i].rank);
        }
    }
}

TEST(RankAnswers, TrainedModelsPreferTheQuestionsCategory)
{
    auto const& h = pt::trained().hierarchy;
    auto segs = as_segments({
        "We update this privacy policy and post the new version online.",
        "We share your gps location with advertising partners.",
        "We encrypt your information with ssl encryption.",
        "We keep your gps location until the account expires.",
    });
    auto r = rank_answers(h, segs, "Do you share my location with advertisers?");
    EXPECT_EQ(r.answers.front().segment_index, 1u);
    for (std::size_t i = 1; i < r.answers.size(); ++i) {
        EXPECT_GE(r.answers[i - 1].score, r.answers[i].score);
        EXPECT_LE(r.answers[i].confidence, r.answers[i].score + 1e-12);
    }
    auto sec = rank_answers(h, segs, "How do you safeguard my information?");
    EXPECT_EQ(sec.answers.front().segment_index, 2u);
    EXPECT_THROW(rank_answers(h, segs, "?? !!"), ambiguous_question_error);
}

TEST(Bm25, HandComputedScores)
{
    bm25_index idx({"data share", "data keep", "cookies", "share cookies"});
    auto segs = as_segments({"we share data", "we keep data data", "cookies and more"});
    auto r = baseline_bm25(idx, "share data", segs);
    double ln2 = std::log(2.0);
    double avgdl = 10.0 / 3.0;
    double s0 = 2 * ln2 * (1 * 2.2) / (1 + 1.2 * (0.25 + 0.75 * 3 / avgdl));
    double s1 = ln2 * (2 * 2.2) / (2 + 1.2 * (0.25 + 0.75 * 4 / avgdl));
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].segment_index, 0u);
    EXPECT_NEAR(r[0].score, s0, 1e-12);
    EXPECT_EQ(r[1].segment_index, 1u);
    EXPECT_NEAR(r[1].score, s1, 1e-12);
    EXPECT_EQ(r[2].score, 0.0);
    EXPECT_NEAR(idx.idf("share"), ln2, 1e-12);
    EXPECT_TRUE(std::isfinite(idx.idf("never-seen")));
}

TEST(Bm25, UniqueTermAndNoMatches)
{
    bm25_index idx({"alpha beta", "beta gamma", "gamma delta"});
    auto segs = as_segments({"beta beta", "gamma", "alpha here", "delta"});
    EXPECT_EQ(baseline_bm25(idx, "alpha", segs).front().segment_index, 2u);
    auto none = baseline_bm25(idx, "zeta", segs);
    for (std::size_t i = 0; i < none.size(); ++i) {
        EXPECT_EQ(none[i].segment_index, i);
        EXPECT_EQ(none[i].score, 0.0);
    }
    EXPECT_THROW(baseline_bm25(bm25_index({}), "alpha", segs), error);
    EXPECT_THROW(bm25_index({}, 0.0), error);
}

TEST(RandomBaseline, DeterministicPermutationAndUniform)
{
    auto segs = as_segments({"a", "b", "c", "d"});
    auto a = baseline_random(segs, 5);
    auto b = baseline_random(segs, 5);
    ASSERT_EQ(a.size(), 4u);
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(a[i].segment_index, b[i].segment_index);
        seen.insert(a[i].segment_index);
    }
    EXPECT_EQ(seen.size(), 4u);
    std::vector<double> first(4, 0.0);
    for (std::uint64_t seed = 0; seed < 10'000; ++seed) {
        first[baseline_random(segs, seed).front().segment_index] += 1.0;
    }
    for (double f : first) {
        EXPECT_NEAR(f / 10'000, 0.25, 0.02);
    }
}

TEST(SemVecBaseline, DistanceOrdering)
{
    auto const& s = pt::setup();
    auto cfg = pt::small_config();
    auto model = train_flat_value_model(s.tax, s.emb, s.segments, s.split, cfg);
    EXPECT_EQ(model.label_count(), flat_value_labels(s.tax).size());
    std::string q = "We encrypt your information with ssl encryption.";
    auto segs = as_segments({"We share your phone number with affiliated companies.", q, q});
    auto r = baseline_semvec(model, s.emb, q, segs);
    EXPECT_EQ(r[0].segment_index, 1u);
    EXPECT_EQ(r[0].score, 0.0);
    EXPECT_EQ(r[1].segment_index, 2u);

    auto on_off = baseline_semvec(model, s.emb, "Do you encrypt my information using encryption?",
                                  as_segments({"We keep your bank account for two years after closure.",
                                               "Our company safeguards your information with ssl encryption."}));
    EXPECT_EQ(on_off[0].segment_index, 1u);

    cnn_classifier untrained(model.shape(), model.label_ids());
    EXPECT_THROW(baseline_semvec(untrained, s.emb, q, segs), untrained_model_error);
}
