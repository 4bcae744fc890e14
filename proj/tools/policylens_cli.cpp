// policylens: command-line front end for training, labeling, asking and evaluating.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "policylens/evaluation.hpp"
#include "policylens/service.hpp"

namespace fs = std::filesystem;
using namespace policylens;

namespace {

struct common_options {
    std::string config_file;
    std::string model_dir;
    std::string cache_dir;
    std::string out;
};

std::string read_input(std::string const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw api_error(api_error_code::bad_input, "cannot read '" + path + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to --out when given, stdout otherwise.
void emit(common_options const& o, std::string const& text)
{
    if (o.out.empty()) {
        std::cout << text;
        std::cout.flush();
        return;
    }
    detail::write_file(o.out, text);
}

engine_config load_config(common_options const& o)
{
    std::optional<fs::path> file;
    if (!o.config_file.empty()) {
        file = o.config_file;
    }
    auto cfg = resolve_engine_config(file);
    if (!o.model_dir.empty()) {
        cfg.model_dir = o.model_dir;
    }
    if (!o.cache_dir.empty()) {
        cfg.cache_dir = o.cache_dir;
    }
    return cfg;
}

fs::path require_model_dir(engine_config const& cfg)
{
    if (cfg.model_dir.empty()) {
        throw api_error(api_error_code::bad_input, "no model directory (use --model-dir or ENGINE_MODEL_DIR)");
    }
    return cfg.model_dir;
}

bool looks_like_html(std::string const& path, std::string const& text)
{
    auto ext = fs::path(path).extension().string();
    if (ext == ".txt") {
        return false;
    }
    if (ext == ".html" || ext == ".htm") {
        return true;
    }
    return text.find('<') != std::string::npos;
}

std::vector<std::size_t> parse_ks(std::string const& s)
{
    std::vector<std::size_t> ks;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            continue;
        }
        std::size_t pos = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &pos);
        } catch (std::exception const&) {
            pos = 0;
        }
        if (pos != item.size() || v < 1) {
            throw api_error(api_error_code::bad_input, "--k expects positive integers separated by commas", s);
        }
        ks.push_back(static_cast<std::size_t>(v));
    }
    if (ks.empty()) {
        throw api_error(api_error_code::bad_input, "--k is empty");
    }
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

nlohmann::json split_to_json(dataset_split const& s)
{
    return {{"train", s.train_policy_ids}, {"test", s.test_policy_ids}};
}

std::optional<dataset_split> load_split(fs::path const& model_dir)
{
    auto path = model_dir / "split.json";
    if (!fs::exists(path)) {
        return std::nullopt;
    }
    auto j = nlohmann::json::parse(detail::read_file(path.string()));
    dataset_split s;
    s.train_policy_ids = j.at("train").get<std::set<std::string>>();
    s.test_policy_ids = j.at("test").get<std::set<std::string>>();
    return s;
}

std::string format_hierarchy_report(hierarchy_report const& rep)
{
    std::ostringstream out;
    for (auto const& m : rep.models) {
        out << "== " << m.model << " (" << m.train_examples << " training examples)";
        if (m.skipped) {
            out << " skipped";
        }
        out << "\n";
        if (!m.excluded_labels.empty()) {
            out << "excluded labels:";
            for (auto const& l : m.excluded_labels) {
                out << " " << l;
            }
            out << "\n";
        }
        if (!m.skipped) {
            out << format_report(m.metrics) << "\n";
        }
    }
    for (auto const& w : rep.warnings) {
        out << "warning: " << w << "\n";
    }
    return out.str();
}

/// Annotated segments grouped by policy, as segments in index order.
std::map<std::string, std::vector<segment>> segments_by_policy(std::vector<merged_segment_labels> const& merged)
{
    std::map<std::string, std::vector<segment>> out;
    for (auto const& m : merged) {
        auto& v = out[m.policy_id];
        if (v.size() <= m.segment_index) {
            v.resize(m.segment_index + 1);
        }
        v[m.segment_index] = {m.policy_id, m.segment_index, m.text, segment_origin::paragraph};
    }
    for (auto& [id, v] : out) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i].policy_id.empty()) {
                throw api_error(api_error_code::bad_input,
                                "policy '" + id + "' has no annotation for segment " + std::to_string(i));
            }
        }
    }
    return out;
}

/// Policy text from --policy, ingested into the engine, or a cached --policy-id.
std::string resolve_policy(engine& e, std::string const& policy_file, std::string const& policy_id)
{
    if (policy_file.empty()) {
        if (policy_id.empty()) {
            throw api_error(api_error_code::bad_input, "one of --policy or --policy-id is required");
        }
        static_cast<void>(e.get(policy_id));
        return policy_id;
    }
    auto text = read_input(policy_file);
    ingest_request req;
    req.source = text;
    req.is_html = looks_like_html(policy_file, text);
    if (!policy_id.empty()) {
        req.policy_id = policy_id;
    }
    return e.ingest(req).policy->document.policy_id;
}

icon_strategy parse_strategy(std::string const& s)
{
    try {
        return icon_strategy_from_string(s);
    } catch (error const& e) {
        throw api_error(api_error_code::bad_input, e.what(), s);
    }
}

int report_error(std::exception_ptr ep)
{
    auto err = to_api_error(ep);
    if (err.code() == api_error_code::internal) {
        try {
            std::rethrow_exception(ep);
        } catch (std::exception const& ex) {
            err = api_error(api_error_code::internal, "internal error", ex.what());
        } catch (...) {
        }
    }
    std::cerr << err.to_json().dump() << "\n";
    return err.code() == api_error_code::internal ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Privacy policy segmentation, labeling, question answering and icons"};
    app.require_subcommand(1);
    app.fallthrough();
    common_options common;
    app.add_option("--config", common.config_file, "key=value engine config file (default: $ENGINE_CONFIG)");
    app.add_option("--model-dir", common.model_dir, "model directory (default: config or $ENGINE_MODEL_DIR)");
    app.add_option("--cache-dir", common.cache_dir, "policy cache directory (default: config)");
    app.add_option("-o,--out", common.out, "write output here instead of stdout");

    // train-embeddings
    auto* te = app.add_subcommand("train-embeddings", "train subword skip-gram embeddings on a corpus");
    std::string corpus_file;
    std::string taxonomy_file;
    skipgram_config sg;
    te->add_option("--corpus", corpus_file, "newline-delimited documents")->required();
    te->add_option("--taxonomy", taxonomy_file, "taxonomy JSON stored with the models (default: built-in)");
    te->add_option("--dim", sg.shape.dim, "vector dimension")->capture_default_str();
    te->add_option("--min-n", sg.shape.min_n, "shortest character n-gram")->capture_default_str();
    te->add_option("--max-n", sg.shape.max_n, "longest character n-gram")->capture_default_str();
    te->add_option("--buckets", sg.shape.bucket_count, "n-gram hash buckets")->capture_default_str();
    te->add_option("--window", sg.window, "context window")->capture_default_str();
    te->add_option("--negatives", sg.negatives, "negative samples per pair")->capture_default_str();
    te->add_option("--epochs", sg.epochs, "passes over the corpus")->capture_default_str();
    te->add_option("--lr", sg.learning_rate, "initial learning rate")->capture_default_str();
    te->add_option("--min-count", sg.min_count, "minimum word frequency")->capture_default_str();
    te->add_option("--seed", sg.seed, "random seed")->capture_default_str();

    // train-classifiers
    auto* tc = app.add_subcommand("train-classifiers", "train the classifier hierarchy on annotated segments");
    std::string annotations_file;
    std::size_t train_policies = 0;
    std::uint64_t split_seed = 1;
    bool no_semvec = false;
    hierarchy_config hc;
    tc->add_option("--annotations", annotations_file, "JSON-lines annotation records")->required();
    tc->add_option("--train-policies", train_policies, "policies in the training split (default: 80%)");
    tc->add_option("--split-seed", split_seed, "seed of the policy split")->capture_default_str();
    tc->add_option("--epochs", hc.training.epochs, "training epochs per model")->capture_default_str();
    tc->add_option("--batch-size", hc.training.batch_size, "mini-batch size")->capture_default_str();
    tc->add_option("--lr", hc.training.adam.learning_rate, "Adam learning rate")->capture_default_str();
    tc->add_option("--filters", hc.shape.filter_count, "convolution filters")->capture_default_str();
    tc->add_option("--filter-size", hc.shape.filter_size, "convolution width")->capture_default_str();
    tc->add_option("--dense", hc.shape.dense_size, "hidden dense units")->capture_default_str();
    tc->add_option("--max-len", hc.shape.max_len, "tokens per input")->capture_default_str();
    tc->add_option("--min-value-annotations", hc.min_value_annotations,
                   "values with this many annotations or fewer are not trained")
        ->capture_default_str();
    tc->add_option("--seed", hc.seed, "model seed")->capture_default_str();
    tc->add_flag("--no-semvec", no_semvec, "skip the flat value model used by the semantic-vector baseline");

    // segment / classify
    std::string policy_file;
    std::string policy_id;
    auto* sc = app.add_subcommand("segment", "split a policy into segments (JSON lines)");
    sc->add_option("--policy", policy_file, "policy HTML or text file")->required();
    sc->add_option("--policy-id", policy_id, "id stored in the segments (default: file stem)");

    auto* cl = app.add_subcommand("classify", "label every segment of a policy (JSON lines)");
    cl->add_option("--policy", policy_file, "policy HTML or text file")->required();
    cl->add_option("--policy-id", policy_id, "policy id (default: derived from the content)");

    // ask
    auto* ak = app.add_subcommand("ask", "rank a policy's segments as answers to a question");
    std::string question;
    std::size_t top_k = 0;
    ak->add_option("--policy", policy_file, "policy HTML or text file");
    ak->add_option("--policy-id", policy_id, "a policy in the cache directory, or the id to ingest --policy under");
    ak->add_option("-q,--question", question, "the question")->required();
    ak->add_option("--top-k", top_k, "answers returned (default: config, 3)");

    // icons
    auto* ic = app.add_subcommand("icons", "assign the five privacy icons");
    std::string strategy = "conservative";
    ic->add_option("--policy", policy_file, "policy HTML or text file");
    ic->add_option("--policy-id", policy_id, "a policy in the cache directory, or the id to ingest --policy under");
    ic->add_option("--strategy", strategy, "conservative, permissive or very_permissive")->capture_default_str();

    // evaluate-qa
    auto* eq = app.add_subcommand("evaluate-qa", "top-k, NDCG and MAP of the ranking and its baselines");
    std::string qa_file;
    std::string ks = "1,2,3,4,5";
    std::string bm25_corpus;
    std::uint64_t eval_seed = 1;
    bool as_json = false;
    eq->add_option("--qa", qa_file, "JSON-lines questions with ground truth")->required();
    eq->add_option("--annotations", annotations_file, "annotated segments of the policies asked about")->required();
    eq->add_option("--k", ks, "comma-separated cutoffs")->capture_default_str();
    eq->add_option("--bm25-corpus", bm25_corpus, "document-frequency corpus (default: the policies' segments)");
    eq->add_option("--seed", eval_seed, "seed of the random baseline")->capture_default_str();
    eq->add_flag("--json", as_json, "emit JSON instead of tables");

    // evaluate-icons
    auto* ei = app.add_subcommand("evaluate-icons", "agreement of icons from expert and automatic labels");
    bool test_only = false;
    std::string eval_strategy;
    ei->add_option("--annotations", annotations_file, "expert annotation records")->required();
    ei->add_option("--strategy", eval_strategy, "one strategy (default: all three)");
    ei->add_flag("--test-only", test_only, "only policies in the stored test split");

    // convert-opp115
    auto* co = app.add_subcommand("convert-opp115", "convert an OPP-115 annotation CSV to JSON lines");
    std::string csv_file;
    std::string segments_file;
    co->add_option("--csv", csv_file, "annotation CSV of one policy")->required();
    co->add_option("--segments", segments_file, "sanitized policy text with segments separated by |||")->required();
    co->add_option("--policy-id", policy_id, "policy id (default: CSV file stem)");

    // serve
    auto* sv = app.add_subcommand("serve", "run the HTTP API");
    std::string host;
    int port = 0;
    sv->add_option("--host", host, "bind address (default: config, 127.0.0.1)");
    sv->add_option("--port", port, "port (default: config, 8080)");

    try {
        app.parse(argc, argv);
    } catch (CLI::CallForHelp const& e) {
        return app.exit(e);
    } catch (CLI::CallForAllHelp const& e) {
        return app.exit(e);
    } catch (CLI::ParseError const& e) {
        std::cerr << api_error(api_error_code::bad_input, e.what()).to_json().dump() << "\n";
        return 1;
    }

    try {
        auto cfg = load_config(common);

        if (te->parsed()) {
            auto dir = require_model_dir(cfg);
            auto corpus = load_embedding_corpus(read_input(corpus_file));
            auto tax = taxonomy_file.empty() ? load_model_dir(dir).tax : load_taxonomy(read_input(taxonomy_file));
            auto result = train_skipgram(corpus, sg);
            save_model_dir(dir, tax, result.model);
            std::ostringstream out;
            out << "words: " << result.model.words().size() << "\n";
            for (std::size_t i = 0; i < result.epoch_loss.size(); ++i) {
                out << "epoch " << i + 1 << " loss " << result.epoch_loss[i] << "\n";
            }
            out << "wrote " << (dir / "embeddings.bin").string() << "\n";
            emit(common, out.str());
            return 0;
        }

        if (tc->parsed()) {
            auto dir = require_model_dir(cfg);
            auto bundle = load_model_dir(dir);
            if (!bundle.embedding) {
                throw api_error(api_error_code::model_missing, "no embeddings in " + dir.string());
            }
            auto records = load_annotations(read_input(annotations_file), bundle.tax);
            auto merged = union_expert_labels(records);
            std::set<std::string> ids;
            for (auto const& m : merged) {
                ids.insert(m.policy_id);
            }
            auto n_train = train_policies != 0 ? train_policies : std::max<std::size_t>(1, ids.size() * 4 / 5);
            auto split = split_dataset(merged, n_train, split_seed);
            auto trained = train_hierarchy(bundle.tax, *bundle.embedding, merged, split, hc);
            save_model_dir(dir, bundle.tax, *bundle.embedding, &trained.hierarchy);
            detail::write_file((dir / "split.json").string(), split_to_json(split).dump(2) + "\n");
            if (!no_semvec) {
                auto flat = train_flat_value_model(bundle.tax, *bundle.embedding, merged, split, hc);
                detail::write_file((dir / "semvec.cnn").string(), serialize_classifier(flat));
            }
            emit(common, format_hierarchy_report(trained.report));
            return 0;
        }

        if (sc->parsed()) {
            auto bundle = load_model_dir(require_model_dir(cfg));
            if (!bundle.embedding) {
                throw api_error(api_error_code::model_missing, "segmentation needs embeddings");
            }
            auto text = read_input(policy_file);
            policy_document doc{policy_id.empty() ? fs::path(policy_file).stem().string() : policy_id, text,
                                std::nullopt, looks_like_html(policy_file, text)};
            std::vector<std::string> warnings;
            std::string out;
            for (auto const& s : segment_policy(doc, *bundle.embedding, cfg.segmenter, &warnings)) {
                out += to_json(s).dump() + "\n";
            }
            for (auto const& w : warnings) {
                std::cerr << "warning: " << w << "\n";
            }
            emit(common, out);
            return 0;
        }

        if (cl->parsed()) {
            engine e(cfg);
            auto id = resolve_policy(e, policy_file, policy_id);
            auto p = e.get(id);
            std::string out;
            for (std::size_t i = 0; i < p->segments.size(); ++i) {
                auto j = to_json(p->annotations[i], e.taxonomy_ref(), cfg.label_threshold);
                j["policy_id"] = id;
                j["text"] = p->segments[i].text;
                out += j.dump() + "\n";
            }
            emit(common, out);
            return 0;
        }

        if (ak->parsed()) {
            engine e(cfg);
            auto id = resolve_policy(e, policy_file, policy_id);
            std::optional<std::size_t> k;
            if (top_k != 0) {
                k = top_k;
            }
            emit(common, e.ask_view(id, question, k).dump(2) + "\n");
            return 0;
        }

        if (ic->parsed()) {
            auto st = parse_strategy(strategy);
            engine e(cfg);
            auto id = resolve_policy(e, policy_file, policy_id);
            emit(common, e.icons_view(id, st).dump(2) + "\n");
            return 0;
        }

        if (eq->parsed()) {
            auto dir = require_model_dir(cfg);
            engine e(cfg);
            auto const& h = e.hierarchy();
            auto merged = union_expert_labels(load_annotations(read_input(annotations_file), e.taxonomy_ref()));
            auto policies = segments_by_policy(merged);
            std::map<std::string, std::size_t> counts;
            std::vector<std::string> docs;
            for (auto const& [id, segs] : policies) {
                counts[id] = segs.size();
                for (auto const& s : segs) {
                    docs.push_back(s.text);
                }
            }
            auto questions = load_qa_dataset(read_input(qa_file), counts);
            if (!bm25_corpus.empty()) {
                docs = load_embedding_corpus(read_input(bm25_corpus));
            }
            bm25_index idx(docs);
            std::optional<cnn_classifier> semvec;
            if (fs::exists(dir / "semvec.cnn")) {
                semvec = deserialize_classifier(detail::read_file((dir / "semvec.cnn").string()),
                                                e.embedding().fingerprint());
            } else {
                std::cerr << "warning: no semvec.cnn in the model directory; skipping the semantic-vector baseline\n";
            }
            qa_evaluation_config qc{parse_ks(ks), eval_seed};
            auto ev = evaluate_qa(h, policies, questions, idx, semvec ? &*semvec : nullptr, qc);
            emit(common, as_json ? to_json(ev).dump(2) + "\n" : format_qa_evaluation(ev));
            return 0;
        }

        if (ei->parsed()) {
            auto dir = require_model_dir(cfg);
            engine e(cfg);
            auto merged = union_expert_labels(load_annotations(read_input(annotations_file), e.taxonomy_ref()));
            if (test_only) {
                auto split = load_split(dir);
                if (!split) {
                    throw api_error(api_error_code::bad_input, "--test-only needs split.json in the model directory");
                }
                std::erase_if(merged, [&](auto const& m) { return !split->test_policy_ids.contains(m.policy_id); });
            }
            std::vector<icon_strategy> strategies(all_strategies.begin(), all_strategies.end());
            if (!eval_strategy.empty()) {
                strategies = {parse_strategy(eval_strategy)};
            }
            std::ostringstream out;
            for (auto st : strategies) {
                auto ev = evaluate_icons(e.hierarchy(), merged, st, cfg.label_threshold);
                out << "strategy: " << to_string(st) << " (" << ev.policy_ids.size() << " policies)\n"
                    << format_comparison(ev.comparisons) << "\n";
            }
            emit(common, out.str());
            return 0;
        }

        if (co->parsed()) {
            auto tax = load_model_dir(cfg.model_dir).tax;
            auto text = read_input(segments_file);
            std::vector<std::string> segments;
            std::size_t start = 0;
            while (true) {
                auto pos = text.find("|||", start);
                segments.push_back(trim(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
                if (pos == std::string::npos) {
                    break;
                }
                start = pos + 3;
            }
            auto id = policy_id.empty() ? fs::path(csv_file).stem().string() : policy_id;
            auto conv = convert_opp115_csv(read_input(csv_file), id, segments, tax);
            for (auto const& l : conv.dropped_labels) {
                std::cerr << "warning: dropped label not in the taxonomy: " << l << "\n";
            }
            emit(common, to_jsonl(conv.records));
            return 0;
        }

        if (sv->parsed()) {
            if (!host.empty()) {
                cfg.host = host;
            }
            if (port != 0) {
                cfg.port = port;
            }
            engine e(cfg);
            auto server = make_http_server(e);
            std::cerr << "listening on " << cfg.host << ":" << cfg.port << "\n";
            if (!server->listen(cfg.host, cfg.port)) {
                throw api_error(api_error_code::internal, "cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
            }
            return 0;
        }
    } catch (...) {
        return report_error(std::current_exception());
    }
    return 0;
}
