// Acceptance gate: one PASS/FAIL line per primary criterion, each checked
// against its runtime budget. Exit status is nonzero if any line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "policylens/evaluation.hpp"
#include "policylens/service.hpp"
#include "support/fixtures.hpp"
#include "support/icon_oracle.hpp"
#include "support/metric_oracles.hpp"
#include "support/properties.hpp"
#include "support/qa_benchmark.hpp"
#include "support/segmentation_oracle.hpp"
#include "support/service_golden.hpp"

using namespace policylens;
namespace pt = policylens::testing;

namespace {

/// Collects failed expectations with a short reason each.
class tally {
  public:
    void expect(bool ok, std::string const& what)
    {
        ++m_checks;
        if (!ok && m_failures.size() < 5) {
            m_failures.push_back(what);
        }
        m_failed += ok ? 0 : 1;
    }

    void near(double got, double want, double tol, std::string const& what)
    {
        std::ostringstream s;
        s.precision(17);
        s << what << ": got " << got << " want " << want;
        expect(std::abs(got - want) <= tol, s.str());
    }

    [[nodiscard]] bool ok() const { return m_failed == 0; }
    [[nodiscard]] std::size_t checks() const { return m_checks; }

    [[nodiscard]] std::string summary() const
    {
        std::string s = std::to_string(m_checks - m_failed) + "/" + std::to_string(m_checks) + " checks";
        for (auto const& f : m_failures) {
            s += "; " + f;
        }
        return s;
    }

  private:
    std::size_t m_checks = 0;
    std::size_t m_failed = 0;
    std::vector<std::string> m_failures;
};

struct outcome {
    bool pass = false;
    std::string detail;
};

struct criterion {
    char const* name;
    double budget_seconds;
    std::function<outcome()> run;
};

std::string fmt(char const* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------

outcome formula_exactness()
{
    tally t;
    std::vector<double> uniform(9, 1.0 / 9);
    std::vector<double> one_hot(9, 0.0);
    one_hot[4] = 1.0;
    std::vector<double> split(9, 0.0);
    split[0] = split[1] = 0.5;
    t.near(certainty(uniform), 0.0, 1e-9, "cer uniform");
    t.near(certainty(one_hot), 1.0, 1e-9, "cer one-hot");
    t.near(certainty(split), 1.0 - std::log(2.0) / std::log(9.0), 1e-9, "cer two-way split");
    t.expect(std::abs(certainty(split) - 0.6845) < 5e-5, "cer two-way split rounds to 0.6845");

    auto pv = [](std::vector<double> v) { return practice_vector{std::move(v), vector_source::answer}; };
    t.near(rank_score(pv({0.3, 0.7}), pv({0.3, 0.7}), 1.0), 1.0, 1e-9, "s identical");
    t.near(rank_score(pv({0.3, 0.7}), pv({0.0, 0.0}), 1.0), 0.0, 1e-9, "s zero answer");
    double s = rank_score(pv({0.8, 0.2}), pv({0.4, 0.6}), 1.0);
    t.near(s, 0.36 / 0.68, 1e-9, "s partial overlap");
    t.expect(std::abs(s - 0.5294) < 5e-5, "s partial overlap rounds to 0.5294");

    double c = confidence(s, certainty(split), 1.0);
    t.near(c, s * (certainty(split) + 1.0) / 2.0, 1e-9, "conf");
    t.expect(std::abs(c - 0.4459) < 5e-5, "conf rounds to 0.4459");
    return {t.ok(), t.summary()};
}

outcome icon_oracle()
{
    tally t;
    std::mt19937_64 gen(67);
    std::size_t cells = 0;
    std::size_t agree = 0;
    std::size_t monotone_violations = 0;
    for (int trial = 0; trial < 10'000; ++trial) {
        auto lp = pt::random_labeled_policy(gen);
        for (auto i : all_icons) {
            std::map<icon_strategy, icon_color> colors;
            for (auto st : all_strategies) {
                auto got = assign_icon(lp, i, st).color;
                colors[st] = got;
                ++cells;
                agree += got == pt::oracle_color(lp, i, st) ? 1 : 0;
            }
            auto const y = icon_color::yellow;
            bool mono = (colors[icon_strategy::conservative] != y || colors[icon_strategy::permissive] == y) &&
                        (colors[icon_strategy::permissive] != y || colors[icon_strategy::very_permissive] == y);
            monotone_violations += mono ? 0 : 1;
        }
    }
    t.expect(agree == cells, "oracle disagreements: " + std::to_string(cells - agree));
    t.expect(monotone_violations == 0, "monotonicity violations: " + std::to_string(monotone_violations));
    return {t.ok(), std::to_string(agree) + "/" + std::to_string(cells) + " cells agree; " + t.summary()};
}

outcome metric_oracle()
{
    tally t;
    std::mt19937_64 gen(17);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<ranked_prediction> preds;
        for (std::size_t i = 0, n = 1 + detail::uniform_below(gen, 6); i < n; ++i) {
            preds.push_back(pt::random_ranking(gen));
        }
        std::size_t k = 1 + detail::uniform_below(gen, 8);
        t.near(top_k_score(preds, k), pt::naive_top_k(preds, k), 1e-12, "top-k");
        for (auto const& p : preds) {
            t.near(ndcg_at_k(p, k), pt::naive_ndcg(p, k), 1e-12, "ndcg");
        }
        t.near(mean_average_precision(preds), pt::naive_map(preds), 1e-12, "map");

        std::size_t n = 1 + detail::uniform_below(gen, 6);
        auto p = pt::random_distribution(gen, n, true);
        auto q = pt::random_distribution(gen, n, true);
        double h = hellinger(p, q);
        // The naive sqrt(1 - BC) form loses digits near zero.
        if (h > 1e-4) {
            t.near(h, pt::naive_hellinger(p, q), 1e-12, "hellinger");
        }

        std::vector<std::string> u = {"red", "yellow", "green", "gray"};
        std::vector<std::string> a;
        std::vector<std::string> b;
        for (std::size_t i = 0, m = 1 + detail::uniform_below(gen, 25); i < m; ++i) {
            a.push_back(u[detail::uniform_below(gen, u.size())]);
            b.push_back(detail::uniform_unit(gen) < 0.5 ? a.back() : u[detail::uniform_below(gen, u.size())]);
        }
        t.near(cohen_kappa(a, b, u), pt::naive_kappa(a, b, u), 1e-12, "kappa");

        std::vector<bool> pred;
        std::vector<bool> truth;
        confusion_counts cc;
        for (std::size_t i = 0, m = 1 + detail::uniform_below(gen, 30); i < m; ++i) {
            pred.push_back(detail::uniform_unit(gen) < 0.5);
            truth.push_back(detail::uniform_unit(gen) < 0.4);
            (pred.back() ? (truth.back() ? cc.tp : cc.fp) : (truth.back() ? cc.fn : cc.tn))++;
        }
        auto got = macro_prf(cc).macro;
        auto want = pt::naive_macro_prf(pred, truth);
        t.near(got.precision, want.precision, 1e-12, "macro-P");
        t.near(got.recall, want.recall, 1e-12, "macro-R");
        t.near(got.f1, want.f1, 1e-12, "macro-F1");
    }

    t.expect(std::abs(ndcg_at_k({{0, 1, 2}, {1}}, 2) - 0.6309) < 5e-5, "ndcg 0.6309");
    t.expect(std::abs(ndcg_at_k({{0, 1, 2}, {0, 2}}, 3) - 0.9197) < 5e-5, "ndcg 0.9197");
    t.expect(std::abs(hellinger({0.5, 0.5, 0.0}, {1.0, 0.0, 0.0}) - 0.5412) < 5e-5, "hellinger 0.5412");
    std::vector<std::string> ra;
    std::vector<std::string> rb;
    for (auto [x, y, n] : {std::tuple{"yes", "yes", 20}, {"yes", "no", 5}, {"no", "yes", 10}, {"no", "no", 15}}) {
        ra.insert(ra.end(), static_cast<std::size_t>(n), x);
        rb.insert(rb.end(), static_cast<std::size_t>(n), y);
    }
    t.near(cohen_kappa(ra, rb, {"yes", "no"}), 0.4, 1e-12, "kappa 0.4");
    t.near(macro_prf({.tp = 8, .fp = 2, .tn = 0, .fn = 0}).macro.precision, 0.4, 1e-12, "degenerate macro-P 0.4");
    return {t.ok(), t.summary()};
}

outcome neural_net()
{
    tally t;
    auto sweep = pt::gradient_check_sweep(100, 17);
    t.expect(sweep.failed == 0 && sweep.max_relative_error < 1e-4,
             "gradient check max relative error " + fmt("%.3g", sweep.max_relative_error));
    double gap = pt::position_invariance_gap(50, 19);
    t.expect(gap < 1e-12, "position gap " + fmt("%.3g", gap));
    auto sep = pt::train_separable(1);
    t.expect(sep.embedding_unchanged, "embedding checksum changed during training");
    t.expect(sep.macro_f1 >= 0.95, "separable held-out macro-F1 " + fmt("%.3f", sep.macro_f1));
    double lo = 1.0;
    double sum = 0.0;
    for (std::uint64_t seed = 2; seed <= 20; ++seed) {
        double f = pt::train_separable(seed).macro_f1;
        lo = std::min(lo, f);
        sum += f;
    }
    return {t.ok(), "grad max rel err " + fmt("%.2e", sweep.max_relative_error) + ", position gap " +
                        fmt("%.1e", gap) + ", macro-F1 " + fmt("%.3f", sep.macro_f1) + " after 30 epochs (seeds 2-20: min " +
                        fmt("%.3f", lo) + ", mean " + fmt("%.3f", sum / 19) + "); " + t.summary()};
}

outcome embedding_properties()
{
    tally t;
    skipgram_config cfg;
    cfg.shape = {.dim = 16, .min_n = 3, .max_n = 6, .bucket_count = 5000};
    cfg.epochs = 3;
    auto model = train_skipgram(pt::two_topic_corpus(1), cfg).model;
    std::size_t total = 0;
    for (auto const& s : pt::random_tokens(10'000, 31)) {
        try {
            auto v = model.word_vector(s);
            bool finite = std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
            total += v.size() == model.dim() && finite ? 1 : 0;
        } catch (std::exception const&) {
        }
    }
    t.expect(total == 10'000, "word_vector failed on " + std::to_string(10'000 - total) + " strings");

    auto back = deserialize_model(serialize_model(model));
    bool exact = back.words() == model.words() && back.word_table() == model.word_table() &&
                 back.bucket_table() == model.bucket_table() && back.fingerprint() == model.fingerprint();
    for (auto const& w : {"encrypt", "advertising", "unseenword"}) {
        exact = exact && back.word_vector(w) == model.word_vector(w);
    }
    t.expect(exact, "save/load round trip not bit-exact");

    int ordered = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        ordered += pt::two_topic_ordering(seed) ? 1 : 0;
    }
    t.expect(ordered >= 19, "cosine ordering in " + std::to_string(ordered) + "/20 runs");
    return {t.ok(), "OOV " + std::to_string(total) + "/10000, cosine ordering " + std::to_string(ordered) +
                        "/20 runs; " + t.summary()};
}

outcome segmenter()
{
    tally t;
    subword_embedding_model emb({.dim = 16, .min_n = 3, .max_n = 6, .bucket_count = 512});
    std::mt19937_64 noise(99);
    std::uniform_real_distribution<float> u(-1.0F, 1.0F);
    for (auto& x : emb.bucket_table()) {
        x = u(noise);
    }
    for (int n = 0; n < 20; ++n) {
        char name[32];
        std::snprintf(name, sizeof name, "policies/%02d", n);
        policy_document doc{name, pt::read_fixture(std::string(name) + ".html"), "", true};
        auto side = nlohmann::json::parse(pt::read_fixture(std::string(name) + ".json"));
        auto segs = segment_policy(doc, emb);
        t.expect(segment_policy(doc, emb) == segs, std::string(name) + " not deterministic");
        std::string joined;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            t.expect(segs[i].index == i && !segs[i].text.empty(), std::string(name) + " bad index or empty segment");
            joined += segs[i].text + "\n";
        }
        for (auto const& unit : side["units"]) {
            t.expect(pt::count_occurrences(joined, unit.get<std::string>()) == 1,
                     std::string(name) + " lost or duplicated: " + unit.get<std::string>());
        }
        for (auto const& [intro, max_count] : side["intros"].items()) {
            auto c = pt::count_occurrences(joined, intro);
            t.expect(c >= 1 && c <= max_count.get<std::size_t>(), std::string(name) + " intro count: " + intro);
        }
        for (auto const& b : side["boilerplate"]) {
            t.expect(pt::count_occurrences(joined, b.get<std::string>()) == 0,
                     std::string(name) + " kept boilerplate: " + b.get<std::string>());
        }
    }

    auto tree = extract_text({"fig", pt::read_fixture("figure2.html"), "", true});
    aggregate_lists(*tree, 20);
    auto coarse = coarse_segment(*tree);
    std::string const intro = "We collect information in the following ways:";
    t.expect(coarse.size() == 3, "figure fixture segment count " + std::to_string(coarse.size()));
    if (coarse.size() == 3) {
        t.expect(coarse[0].origin == segment_origin::paragraph, "figure: first segment is a paragraph");
        t.expect(coarse[1].origin == segment_origin::list_item_expanded &&
                     coarse[1].text.starts_with(intro + " Information you give us."),
                 "figure: first item expanded with its intro");
        t.expect(coarse[2].text == intro +
                                       " Information we get from your use of our services. We collect information "
                                       "about the services that you use and how you use them. This information "
                                       "includes: Device information; Log information; Location information",
                 "figure: nested short list merged into its item");
    }

    std::vector<std::vector<double>> hand{
        {1.0, 0.6, 0.4, 0.1, 0.0, 0.0}, {0.6, 1.0, 0.5, 0.2, 0.1, 0.0}, {0.4, 0.5, 1.0, 0.7, 0.0, 0.1},
        {0.1, 0.2, 0.7, 1.0, 0.2, 0.0}, {0.0, 0.1, 0.0, 0.2, 1.0, 0.9}, {0.0, 0.0, 0.1, 0.0, 0.9, 1.0}};
    t.expect(partition_sentences(hand, 0.3, 1) == pt::exhaustive_partition(hand, 0.3, 1), "hand matrix");
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t agree = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        std::size_t n = 1 + gen() % 8;
        std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                sim[a][b] = sim[b][a] = std::round(unit(gen) * 10) / 10;
            }
        }
        double threshold = std::round(unit(gen) * 10) / 10;
        std::size_t min_len = 1 + gen() % 3;
        bool same = partition_sentences(sim, threshold, min_len) == pt::exhaustive_partition(sim, threshold, min_len);
        agree += same ? 1 : 0;
        t.expect(same, "partition differs from the exhaustive oracle in trial " + std::to_string(trial));
    }
    return {t.ok(), "20 policies conserved; partition oracle " + std::to_string(agree) + "/3000; " + t.summary()};
}

outcome end_to_end()
{
    auto const& h = pt::trained().hierarchy;
    auto bench = pt::make_qa_benchmark(50);
    bm25_index idx(bench.corpus);
    std::size_t hits = 0;
    std::size_t random_hits = 0;
    std::size_t syn = 0;
    std::size_t syn_hits = 0;
    std::size_t syn_bm25 = 0;
    std::size_t accepted = 0;
    std::size_t accepted_hits = 0;
    double conf_ok = 0.0;
    double conf_bad = 0.0;
    for (std::size_t i = 0; i < bench.questions.size(); ++i) {
        auto const& q = bench.questions[i];
        auto const& segs = bench.policies.at(q.policy_id);
        auto r = rank_answers(h, segs, q.question);
        auto const& top = r.answers.front();
        bool ok = q.ground_truth.contains(top.segment_index);
        hits += ok ? 1 : 0;
        (ok ? conf_ok : conf_bad) += top.confidence;
        if (top.confidence >= 0.6) {
            ++accepted;
            accepted_hits += ok ? 1 : 0;
        }
        random_hits += q.ground_truth.contains(baseline_random(segs, i).front().segment_index) ? 1 : 0;
        if (bench.synonym[i]) {
            ++syn;
            syn_hits += ok ? 1 : 0;
            syn_bm25 += q.ground_truth.contains(baseline_bm25(idx, q.question, segs).front().segment_index) ? 1 : 0;
        }
    }
    double const n = static_cast<double>(bench.questions.size());
    double top1 = static_cast<double>(hits) / n;
    double random_top1 = static_cast<double>(random_hits) / n;
    std::size_t misses = bench.questions.size() - hits;
    double mean_ok = hits == 0 ? 0.0 : conf_ok / static_cast<double>(hits);
    double mean_bad = misses == 0 ? 0.0 : conf_bad / static_cast<double>(misses);
    double accepted_top1 = accepted == 0 ? 0.0 : static_cast<double>(accepted_hits) / static_cast<double>(accepted);

    tally t;
    t.expect(top1 >= 0.9, "(a) top-1 " + fmt("%.2f", top1));
    t.expect(top1 - random_top1 >= 0.5, "(a) margin over random " + fmt("%.2f", top1 - random_top1));
    t.expect(syn_hits > syn_bm25, "(a) synonym subset " + std::to_string(syn_hits) + " vs bm25 " +
                                      std::to_string(syn_bm25));
    t.expect(misses == 0 || mean_ok - mean_bad >= 0.05, "(b) confidence separation " + fmt("%.3f", mean_ok - mean_bad));
    t.expect(accepted > 0 && accepted_top1 >= top1, "(c) accepted top-1 " + fmt("%.2f", accepted_top1));

    std::ostringstream d;
    d << "top-1 " << fmt("%.2f", top1) << " vs random " << fmt("%.2f", random_top1) << "; synonyms " << syn_hits << "/"
      << syn << " vs bm25 " << syn_bm25 << "/" << syn << "; mean conf correct " << fmt("%.3f", mean_ok)
      << " incorrect " << (misses == 0 ? std::string("n/a") : fmt("%.3f", mean_bad)) << "; conf>=0.6 keeps "
      << accepted << " at top-1 " << fmt("%.2f", accepted_top1) << "; " << t.summary();
    return {t.ok(), d.str()};
}

outcome service_contract()
{
    tally t;
    {
        engine e(engine_config{}, pt::synthetic_bundle(true));
        auto g = pt::run_golden_suite(e, pt::golden_dir() / "service" / "trained", false);
        t.expect(g.failures.empty(), "trained suite: " + (g.failures.empty() ? std::string() : g.failures.front()));
        t.expect(g.cases > 0, "trained suite is empty");
    }
    {
        engine e(engine_config{}, pt::synthetic_bundle(false));
        auto g = pt::run_golden_suite(e, pt::golden_dir() / "service" / "no_models", false);
        t.expect(g.failures.empty(), "no-model suite: " + (g.failures.empty() ? std::string() : g.failures.front()));
    }
    engine e(engine_config{}, pt::synthetic_bundle(true));
    api_request ingest{"POST", "/policies", {}, nlohmann::json{{"policy_id", "p"}, {"source", pt::golden_policy_html()}}.dump()};
    auto first = handle_request(e, ingest);
    auto segments_before = handle_request(e, {"GET", "/policies/p/segments", {}, ""});
    auto second = handle_request(e, ingest);
    auto segments_after = handle_request(e, {"GET", "/policies/p/segments", {}, ""});
    t.expect(first.status == 201 || first.status == 200, "first ingest status " + std::to_string(first.status));
    t.expect(second.status == 200, "repeat ingest status " + std::to_string(second.status));
    t.expect(segments_before.body == segments_after.body, "segments changed after repeat ingest");
    t.expect(e.policy_count() == 1, "policy count " + std::to_string(e.policy_count()));
    api_request ask{"POST", "/policies/p/ask", {}, R"({"question":"Do you share my location with advertisers?"})"};
    t.expect(handle_request(e, ask).body == handle_request(e, ask).body, "ask is not replayable");
    return {t.ok(), t.summary()};
}

}  // namespace

int main()
{
    std::vector<criterion> criteria = {
        {"Formula exactness", 1.0, formula_exactness},
        {"Icon-rule oracle", 30.0, icon_oracle},
        {"Metric oracle", 10.0, metric_oracle},
        {"Neural-net correctness", 120.0, neural_net},
        {"Embedding properties", 300.0, embedding_properties},
        {"Segmenter", 30.0, segmenter},
        {"End-to-end pipeline", 600.0, end_to_end},
        {"Service contract", 30.0, service_contract},
    };
    int failed = 0;
    for (auto const& c : criteria) {
        auto start = std::chrono::steady_clock::now();
        outcome o;
        try {
            o = c.run();
        } catch (std::exception const& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        bool in_time = secs < c.budget_seconds;
        bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::printf("%s  %-24s %7.2fs / %.0fs  %s%s\n", pass ? "PASS" : "FAIL", c.name, secs, c.budget_seconds,
                    in_time ? "" : "over budget; ", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
