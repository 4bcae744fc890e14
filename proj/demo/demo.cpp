// Walkthrough on a synthetic corpus: train, label a policy, assign icons,
// answer questions. With --data DIR the synthetic inputs are also written
// out as files the command-line tool accepts.

#include <filesystem>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "policylens/evaluation.hpp"
#include "policylens/service.hpp"
#include "support/qa_benchmark.hpp"

namespace fs = std::filesystem;
using namespace policylens;
namespace pt = policylens::testing;

namespace {

char const* const sample_policy =
    "<html><body>\n"
    "<h1>Privacy Policy</h1>\n"
    "<p>Please read this part carefully. We collect your email address at account registration.</p>\n"
    "<p>We share your gps location with advertising partners.</p>\n"
    "<p>We do not share your bank account with affiliated companies.</p>\n"
    "<p>We retain your phone number for two years after closure.</p>\n"
    "<p>We encrypt your information using strong encryption.</p>\n"
    "<p>We update this privacy policy and post the new version online.</p>\n"
    "</body></html>\n";

void write_data(fs::path const& dir, pt::qa_benchmark const& bench)
{
    fs::create_directories(dir);
    auto const& s = pt::setup();
    detail::write_file((dir / "taxonomy.json").string(), serialize(s.tax) + "\n");
    std::string corpus;
    for (auto const& line : pt::synthetic_embedding_corpus()) {
        corpus += line + "\n";
    }
    detail::write_file((dir / "corpus.txt").string(), corpus);
    detail::write_file((dir / "annotations.jsonl").string(),
                       to_jsonl(pt::synthetic_annotations({.policies = 50, .segments_per_policy = 10})));
    std::string qa;
    for (auto const& q : bench.questions) {
        qa += nlohmann::json{{"question", q.question}, {"policy_id", q.policy_id}, {"ground_truth", q.ground_truth}}
                  .dump() +
              "\n";
    }
    detail::write_file((dir / "qa.jsonl").string(), qa);
    detail::write_file((dir / "sample_policy.html").string(), sample_policy);
    std::cout << "wrote taxonomy.json, corpus.txt, annotations.jsonl, qa.jsonl and sample_policy.html to " << dir
              << "\n";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"policylens walkthrough on synthetic data"};
    std::string data_dir;
    bool data_only = false;
    app.add_option("--data", data_dir, "also write the synthetic inputs here");
    app.add_flag("--data-only", data_only, "write the inputs and exit");
    CLI11_PARSE(app, argc, argv);

    auto bench = pt::make_qa_benchmark(50);
    if (!data_dir.empty()) {
        write_data(data_dir, bench);
    }
    if (data_only) {
        return 0;
    }

    std::cout << "training on " << pt::setup().segments.size() << " synthetic segments...\n";
    model_bundle models{pt::setup().tax, std::make_unique<subword_embedding_model>(pt::setup().emb),
                        pt::trained().hierarchy};
    engine e(engine_config{}, std::move(models));

    auto id = e.ingest({"sample", sample_policy, true, std::nullopt}).policy->document.policy_id;
    std::cout << "\n-- segments and labels\n";
    auto labels = e.labels_view(id);
    for (auto const& s : labels.at("segments")) {
        std::cout << "[" << s.at("index").get<std::size_t>() << "] " << s.at("present").at("categories").dump() << "\n";
    }
    auto segs = e.segments_view(id);
    for (auto const& s : segs.at("segments")) {
        std::cout << "    " << s.at("index").get<std::size_t>() << ": " << s.at("text").get<std::string>() << "\n";
    }

    std::cout << "\n-- icons\n";
    for (auto st : all_strategies) {
        std::cout << std::left << std::setw(16) << to_string(st);
        auto view = e.icons_view(id, st);
        for (auto const& ic : view.at("icons")) {
            std::cout << " " << ic.at("icon").get<std::string>() << "=" << ic.at("color").get<std::string>();
        }
        std::cout << "\n";
    }

    std::cout << "\n-- questions\n";
    for (auto const* q : {"Do you share my location with advertisers?", "Do you keep my phone number?",
                          "Can you tell me if you protect my information with encryption?", "do you bla bla bla"}) {
        auto r = e.ask_view(id, q);
        std::cout << q << "\n";
        for (auto const& a : r.at("answers")) {
            std::cout << "  " << a.at("rank").get<std::size_t>() << ". conf " << std::fixed << std::setprecision(2)
                      << a.at("confidence").get<double>() << "  " << a.at("text").get<std::string>() << "\n";
        }
        for (auto const& n : r.at("notices")) {
            std::cout << "  notice: " << n.at("code").get<std::string>() << "\n";
        }
    }

    std::cout << "\n-- held-out questions\n";
    bm25_index idx(bench.corpus);
    auto ev = evaluate_qa(pt::trained().hierarchy, bench.policies, bench.questions, idx, nullptr, {{1, 2, 3}, 1});
    std::cout << format_qa_evaluation(ev);
    return 0;
}
