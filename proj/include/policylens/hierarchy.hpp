#pragma once

// Two-level classifier ensemble: segment categories, query categories,
// one model per attribute and a does/does-not polarity model.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "policylens/corpus_io.hpp"
#include "policylens/detail/binary_io.hpp"
#include "policylens/embeddings.hpp"
#include "policylens/error.hpp"
#include "policylens/metrics.hpp"
#include "policylens/neuralnet.hpp"
#include "policylens/segmenter.hpp"
#include "policylens/taxonomy.hpp"
#include "policylens/tokenizer.hpp"

namespace policylens {

inline constexpr std::string_view polarity_attribute = "does-does-not";
inline constexpr std::string_view polarity_does = "does";
inline constexpr std::string_view polarity_does_not = "does-not";

/// Returned for every value of an attribute whose model could not be trained.
inline constexpr double skipped_attribute_probability = 1e-6;

struct segment_annotation {
    std::string policy_id;
    std::size_t segment_index = 0;
    label_probabilities category_probs;
    std::map<attribute_value, double> value_probs;
    double p_does = 0.5;
    double p_does_not = 0.5;
    /// Penultimate-layer activations of the segment category model.
    std::vector<double> semantic_vector;
};

struct present_label_set {
    std::set<std::string> categories;
    std::set<attribute_value> values;
};

struct hierarchy_config {
    cnn_shape shape{};
    cnn_train_config training{};
    /// Values with this many training annotations or fewer never become positive labels.
    std::size_t min_value_annotations = 20;
    /// Attributes with fewer applicable training segments are skipped.
    std::size_t min_attribute_examples = 2;
    std::uint64_t seed = 1;
};

inline nlohmann::json to_json(hierarchy_config const& c)
{
    return {{"shape",
             {{"embedding_dim", c.shape.embedding_dim},
              {"filter_count", c.shape.filter_count},
              {"filter_size", c.shape.filter_size},
              {"dense_size", c.shape.dense_size},
              {"max_len", c.shape.max_len}}},
            {"training",
             {{"epochs", c.training.epochs},
              {"batch_size", c.training.batch_size},
              {"learning_rate", c.training.adam.learning_rate},
              {"beta1", c.training.adam.beta1},
              {"beta2", c.training.adam.beta2},
              {"epsilon", c.training.adam.epsilon},
              {"seed", c.training.seed}}},
            {"min_value_annotations", c.min_value_annotations},
            {"min_attribute_examples", c.min_attribute_examples},
            {"seed", c.seed}};
}

inline hierarchy_config hierarchy_config_from_json(nlohmann::json const& j)
{
    hierarchy_config c;
    try {
        auto const& s = j.at("shape");
        c.shape.embedding_dim = s.at("embedding_dim").get<std::size_t>();
        c.shape.filter_count = s.at("filter_count").get<std::size_t>();
        c.shape.filter_size = s.at("filter_size").get<std::size_t>();
        c.shape.dense_size = s.at("dense_size").get<std::size_t>();
        c.shape.max_len = s.at("max_len").get<std::size_t>();
        auto const& t = j.at("training");
        c.training.epochs = t.at("epochs").get<std::size_t>();
        c.training.batch_size = t.at("batch_size").get<std::size_t>();
        c.training.adam.learning_rate = t.at("learning_rate").get<double>();
        c.training.adam.beta1 = t.at("beta1").get<double>();
        c.training.adam.beta2 = t.at("beta2").get<double>();
        c.training.adam.epsilon = t.at("epsilon").get<double>();
        c.training.seed = t.at("seed").get<std::uint64_t>();
        c.min_value_annotations = j.at("min_value_annotations").get<std::size_t>();
        c.min_attribute_examples = j.at("min_attribute_examples").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (nlohmann::json::exception const& e) {
        throw parse_error(std::string("hierarchy config: ") + e.what());
    }
    return c;
}

namespace detail {

inline double open_unit(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

inline std::vector<std::string> value_ids(attribute const& a)
{
    std::vector<std::string> out;
    for (auto const& v : a.values) {
        out.push_back(v.id);
    }
    return out;
}

}  // namespace detail

/// Immutable once trained; classify_* calls are safe from several threads.
class classifier_hierarchy {
  public:
    classifier_hierarchy() = default;

    /// Fresh, untrained models shaped after `t` and `emb`.
    classifier_hierarchy(taxonomy t, subword_embedding_model const& emb, hierarchy_config cfg)
        : m_taxonomy(std::move(t)), m_embedding(&emb), m_config(cfg)
    {
        m_config.shape.embedding_dim = emb.dim();
        auto const fp = emb.fingerprint();
        std::uint64_t seed = cfg.seed;
        m_segment = cnn_classifier(m_config.shape, m_taxonomy.segment_category_ids(), seed++, fp);
        m_query = cnn_classifier(m_config.shape, m_taxonomy.query_category_ids(), seed++, fp);
        m_polarity = cnn_classifier(m_config.shape, {std::string(polarity_does), std::string(polarity_does_not)},
                                    seed++, fp);
        for (auto const& a : m_taxonomy.attributes()) {
            m_attributes.emplace(a.id, cnn_classifier(m_config.shape, detail::value_ids(a), seed++, fp));
        }
    }

    [[nodiscard]] taxonomy const& taxonomy_ref() const noexcept { return m_taxonomy; }
    [[nodiscard]] subword_embedding_model const& embedding() const { return *m_embedding; }
    [[nodiscard]] hierarchy_config const& config() const noexcept { return m_config; }

    [[nodiscard]] cnn_classifier const& segment_category_model() const noexcept { return m_segment; }
    [[nodiscard]] cnn_classifier const& query_category_model() const noexcept { return m_query; }
    [[nodiscard]] cnn_classifier const& polarity_model() const noexcept { return m_polarity; }
    [[nodiscard]] std::map<std::string, cnn_classifier> const& attribute_models() const noexcept
    {
        return m_attributes;
    }

    cnn_classifier& segment_category_model() noexcept { return m_segment; }
    cnn_classifier& query_category_model() noexcept { return m_query; }
    cnn_classifier& polarity_model() noexcept { return m_polarity; }
    std::map<std::string, cnn_classifier>& attribute_models() noexcept { return m_attributes; }

    [[nodiscard]] encoded_sequence encode_text(std::string_view text) const
    {
        return encode(*m_embedding, make_sequence(text, m_config.shape.max_len));
    }

    [[nodiscard]] segment_annotation classify(std::string_view text) const
    {
        require_trained(m_segment, "segment category");
        auto x = encode_text(text);
        segment_annotation ann;
        auto out = m_segment.forward(x);
        for (std::size_t i = 0; i < out.probabilities.size(); ++i) {
            ann.category_probs[m_segment.label_ids()[i]] = detail::open_unit(out.probabilities[i]);
        }
        ann.semantic_vector = std::move(out.semantic_vector);
        for (auto const& [attr, model] : m_attributes) {
            if (!model.trained()) {
                for (auto const& v : model.label_ids()) {
                    ann.value_probs[{attr, v}] = skipped_attribute_probability;
                }
                continue;
            }
            auto probs = model.forward(x).probabilities;
            for (std::size_t i = 0; i < probs.size(); ++i) {
                ann.value_probs[{attr, model.label_ids()[i]}] = detail::open_unit(probs[i]);
            }
        }
        if (m_polarity.trained()) {
            auto probs = m_polarity.forward(x).probabilities;
            ann.p_does = detail::open_unit(probs[0]);
            ann.p_does_not = detail::open_unit(probs[1]);
        }
        return ann;
    }

    [[nodiscard]] label_probabilities classify_query(std::string_view question) const
    {
        if (trim_view(question).empty()) {
            throw error("classify_query: empty question");
        }
        require_trained(m_query, "query category");
        auto probs = m_query.forward_labels(encode_text(question));
        for (auto& [l, p] : probs) {
            p = detail::open_unit(p);
        }
        return probs;
    }

    [[nodiscard]] std::pair<double, double> classify_polarity(std::string_view text) const
    {
        require_trained(m_polarity, "polarity");
        auto probs = m_polarity.forward(encode_text(text)).probabilities;
        return {detail::open_unit(probs[0]), detail::open_unit(probs[1])};
    }

    /// Penultimate-layer vector of the segment category model, for questions and segments alike.
    [[nodiscard]] std::vector<double> semantic_vector(std::string_view text) const
    {
        require_trained(m_segment, "segment category");
        return m_segment.forward(encode_text(text)).semantic_vector;
    }

    /// Binds the hierarchy to another embedding instance with the same fingerprint.
    void rebind(subword_embedding_model const& emb)
    {
        if (emb.fingerprint() != m_segment.embedding_fingerprint()) {
            throw version_error("embedding fingerprint does not match the hierarchy");
        }
        m_embedding = &emb;
    }

  private:
    static std::string_view trim_view(std::string_view s)
    {
        auto b = s.find_first_not_of(" \t\r\n\f\v");
        if (b == std::string_view::npos) {
            return {};
        }
        auto e = s.find_last_not_of(" \t\r\n\f\v");
        return s.substr(b, e - b + 1);
    }

    static void require_trained(cnn_classifier const& m, std::string_view what)
    {
        if (!m.trained()) {
            throw untrained_model_error(std::string(what) + " model is not trained");
        }
    }

    taxonomy m_taxonomy;
    subword_embedding_model const* m_embedding = nullptr;
    hierarchy_config m_config;
    cnn_classifier m_segment;
    cnn_classifier m_query;
    cnn_classifier m_polarity;
    std::map<std::string, cnn_classifier> m_attributes;
};

inline segment_annotation classify_segment(classifier_hierarchy const& h, segment const& seg)
{
    auto ann = h.classify(seg.text);
    ann.policy_id = seg.policy_id;
    ann.segment_index = seg.index;
    return ann;
}

inline label_probabilities classify_query(classifier_hierarchy const& h, std::string_view question)
{
    return h.classify_query(question);
}

inline std::pair<double, double> classify_polarity(classifier_hierarchy const& h, std::string_view text)
{
    return h.classify_polarity(text);
}

/// Categories above threshold, and values above threshold whose attribute
/// belongs to at least one of those categories.
inline present_label_set present_labels(taxonomy const& t, segment_annotation const& ann, double threshold = 0.5)
{
    present_label_set out;
    for (auto const& [c, p] : ann.category_probs) {
        if (p > threshold) {
            out.categories.insert(c);
        }
    }
    std::set<std::string> reachable;
    for (auto const& c : out.categories) {
        if (auto const* cat = t.find_category(c)) {
            reachable.insert(cat->attributes.begin(), cat->attributes.end());
        }
    }
    for (auto const& [v, p] : ann.value_probs) {
        if (p > threshold && reachable.contains(v.attribute)) {
            out.values.insert(v);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct model_report {
    std::string model;  // "segment", "query", "polarity" or "attribute:<id>"
    std::size_t train_examples = 0;
    bool skipped = false;
    std::vector<std::string> excluded_labels;  // too few annotations to train on
    classification_report metrics;
};

struct hierarchy_report {
    std::vector<model_report> models;
    std::vector<std::string> warnings;

    [[nodiscard]] model_report const& at(std::string_view name) const
    {
        for (auto const& m : models) {
            if (m.model == name) {
                return m;
            }
        }
        throw error("no report for model '" + std::string(name) + "'");
    }
};

struct trained_hierarchy {
    classifier_hierarchy hierarchy;
    hierarchy_report report;
};

namespace detail {

struct labelled_text {
    std::string const* text;
    std::set<std::string> labels;
};

/// Trains `model` on `train`, scores it on `test`, and fills a report entry.
inline model_report fit_and_score(classifier_hierarchy const& h, cnn_classifier& model, std::string name,
                                  std::vector<labelled_text> const& train_rows,
                                  std::vector<labelled_text> const& test_rows, cnn_train_config cfg)
{
    model_report rep;
    rep.model = std::move(name);
    rep.train_examples = train_rows.size();
    {
        std::vector<training_example> data;
        data.reserve(train_rows.size());
        for (auto const& r : train_rows) {
            data.push_back({h.encode_text(*r.text), r.labels});
        }
        train(model, data, cfg);
    }
    std::vector<std::vector<double>> scores;
    std::vector<std::set<std::string>> truth;
    for (auto const& r : test_rows) {
        scores.push_back(model.forward(h.encode_text(*r.text)).probabilities);
        truth.push_back(r.labels);
    }
    rep.metrics = evaluate_multilabel(scores, truth, model.label_ids());
    return rep;
}

inline std::set<std::string> intersect(std::set<std::string> const& a, std::vector<std::string> const& allowed)
{
    std::set<std::string> out;
    for (auto const& x : a) {
        if (std::find(allowed.begin(), allowed.end(), x) != allowed.end()) {
            out.insert(x);
        }
    }
    return out;
}

}  // namespace detail

/// Trains every model on the split's training policies and reports metrics on
/// its test policies. Deterministic for a fixed config.
inline trained_hierarchy train_hierarchy(taxonomy const& t, subword_embedding_model const& emb,
                                         std::vector<merged_segment_labels> const& segments,
                                         dataset_split const& split, hierarchy_config const& cfg)
{
    trained_hierarchy out{classifier_hierarchy(t, emb, cfg), {}};
    auto& h = out.hierarchy;
    auto& report = out.report;

    std::vector<merged_segment_labels const*> train_set;
    std::vector<merged_segment_labels const*> test_set;
    for (auto const& s : segments) {
        if (split.train_policy_ids.contains(s.policy_id)) {
            train_set.push_back(&s);
        } else if (split.test_policy_ids.contains(s.policy_id)) {
            test_set.push_back(&s);
        }
    }
    if (train_set.empty()) {
        throw error("train_hierarchy: no training segments in the split");
    }

    auto model_cfg = [&, n = std::uint64_t{0}]() mutable {
        auto c = cfg.training;
        c.seed = cfg.training.seed + 7919 * n++;
        return c;
    };

    // Segment categories.
    {
        auto const labels = t.segment_category_ids();
        auto rows = [&](std::vector<merged_segment_labels const*> const& set) {
            std::vector<detail::labelled_text> r;
            for (auto const* s : set) {
                r.push_back({&s->text, detail::intersect(s->categories, labels)});
            }
            return r;
        };
        report.models.push_back(
            detail::fit_and_score(h, h.segment_category_model(), "segment", rows(train_set), rows(test_set), model_cfg()));
    }

    // Query categories: segments carrying at least one non-Other category.
    {
        auto const labels = t.query_category_ids();
        auto rows = [&](std::vector<merged_segment_labels const*> const& set) {
            std::vector<detail::labelled_text> r;
            for (auto const* s : set) {
                auto l = detail::intersect(s->categories, labels);
                if (!l.empty()) {
                    r.push_back({&s->text, std::move(l)});
                }
            }
            return r;
        };
        auto train_rows = rows(train_set);
        if (train_rows.empty()) {
            report.warnings.push_back("query model: no training segments outside the Other group; model left untrained");
            report.models.push_back({"query", 0, true, {}, {}});
        } else {
            report.models.push_back(
                detail::fit_and_score(h, h.query_category_model(), "query", train_rows, rows(test_set), model_cfg()));
        }
    }

    // Attributes: only segments whose categories own the attribute.
    for (auto const& a : t.attributes()) {
        auto const owners = t.owners(a.id);
        auto applicable = [&](merged_segment_labels const& s) {
            return std::any_of(owners.begin(), owners.end(), [&](std::string const& c) { return s.categories.contains(c); });
        };
        auto values_of = [&](merged_segment_labels const& s) {
            std::set<std::string> v;
            for (auto const& av : s.attribute_values) {
                if (av.attribute == a.id) {
                    v.insert(av.value);
                }
            }
            return v;
        };
        std::map<std::string, std::size_t> counts;
        std::vector<detail::labelled_text> train_rows;
        for (auto const* s : train_set) {
            if (applicable(*s)) {
                train_rows.push_back({&s->text, values_of(*s)});
                for (auto const& v : train_rows.back().labels) {
                    ++counts[v];
                }
            }
        }
        std::set<std::string> excluded;
        for (auto const& v : a.values) {
            if (counts[v.id] <= cfg.min_value_annotations) {
                excluded.insert(v.id);
            }
        }
        for (auto& r : train_rows) {
            for (auto const& v : excluded) {
                r.labels.erase(v);
            }
        }
        auto name = "attribute:" + a.id;
        auto cfg_for_model = model_cfg();
        if (train_rows.size() < cfg.min_attribute_examples) {
            report.warnings.push_back(name + ": " + std::to_string(train_rows.size()) +
                                      " training segments, model skipped");
            report.models.push_back({name, train_rows.size(), true, {excluded.begin(), excluded.end()}, {}});
            continue;
        }
        std::vector<detail::labelled_text> test_rows;
        for (auto const* s : test_set) {
            if (applicable(*s)) {
                test_rows.push_back({&s->text, values_of(*s)});
            }
        }
        auto rep = detail::fit_and_score(h, h.attribute_models().at(a.id), name, train_rows, test_rows, cfg_for_model);
        rep.excluded_labels.assign(excluded.begin(), excluded.end());
        report.models.push_back(std::move(rep));
    }

    // Polarity: every segment with a does/does-not label.
    {
        auto rows = [&](std::vector<merged_segment_labels const*> const& set) {
            std::vector<detail::labelled_text> r;
            for (auto const* s : set) {
                std::set<std::string> l;
                for (auto const& av : s->attribute_values) {
                    if (av.attribute == polarity_attribute &&
                        (av.value == polarity_does || av.value == polarity_does_not)) {
                        l.insert(av.value);
                    }
                }
                if (!l.empty()) {
                    r.push_back({&s->text, std::move(l)});
                }
            }
            return r;
        };
        auto train_rows = rows(train_set);
        auto cfg_for_model = model_cfg();
        if (train_rows.size() < cfg.min_attribute_examples) {
            report.warnings.push_back("polarity model: " + std::to_string(train_rows.size()) +
                                      " labelled training segments, model skipped");
            report.models.push_back({"polarity", train_rows.size(), true, {}, {}});
        } else {
            report.models.push_back(
                detail::fit_and_score(h, h.polarity_model(), "polarity", train_rows, rows(test_set), cfg_for_model));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int hierarchy_manifest_version = 1;

/// Writes one file per model plus manifest.json into `dir` (created if needed).
inline void save_hierarchy(classifier_hierarchy const& h, std::filesystem::path const& dir)
{
    std::filesystem::create_directories(dir / "attributes");
    detail::write_file((dir / "segment.cnn").string(), serialize_classifier(h.segment_category_model()));
    detail::write_file((dir / "query.cnn").string(), serialize_classifier(h.query_category_model()));
    detail::write_file((dir / "polarity.cnn").string(), serialize_classifier(h.polarity_model()));
    nlohmann::json attrs = nlohmann::json::object();
    for (auto const& [id, m] : h.attribute_models()) {
        auto rel = "attributes/" + id + ".cnn";
        detail::write_file((dir / rel).string(), serialize_classifier(m));
        attrs[id] = rel;
    }
    nlohmann::json manifest = {
        {"version", hierarchy_manifest_version},
        {"taxonomy_checksum", std::to_string(h.taxonomy_ref().checksum())},
        {"embedding_fingerprint", std::to_string(h.embedding().fingerprint())},
        {"config", to_json(h.config())},
        {"models", {{"segment", "segment.cnn"}, {"query", "query.cnn"}, {"polarity", "polarity.cnn"}, {"attributes", attrs}}},
    };
    detail::write_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
}

/// Loads a saved hierarchy; the taxonomy and embedding must be the ones it was trained with.
inline classifier_hierarchy load_hierarchy(std::filesystem::path const& dir, taxonomy const& t,
                                           subword_embedding_model const& emb)
{
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(detail::read_file((dir / "manifest.json").string()));
    } catch (nlohmann::json::parse_error const& e) {
        throw parse_error(std::string("hierarchy manifest: ") + e.what());
    }
    if (manifest.value("version", 0) != hierarchy_manifest_version) {
        throw version_error("unsupported hierarchy manifest version");
    }
    if (manifest.value("taxonomy_checksum", "") != std::to_string(t.checksum())) {
        throw version_error("hierarchy was trained against a different taxonomy");
    }
    auto const fp = emb.fingerprint();
    if (manifest.value("embedding_fingerprint", "") != std::to_string(fp)) {
        throw version_error("hierarchy was trained against a different embedding model");
    }
    classifier_hierarchy h(t, emb, hierarchy_config_from_json(manifest.at("config")));
    auto load = [&](std::string const& rel, std::vector<std::string> const& labels) {
        auto m = deserialize_classifier(detail::read_file((dir / rel).string()), fp);
        if (m.label_ids() != labels) {
            throw corruption_error("model " + rel + " has unexpected labels");
        }
        return m;
    };
    auto const& models = manifest.at("models");
    h.segment_category_model() = load(models.at("segment"), h.segment_category_model().label_ids());
    h.query_category_model() = load(models.at("query"), h.query_category_model().label_ids());
    h.polarity_model() = load(models.at("polarity"), h.polarity_model().label_ids());
    for (auto& [id, m] : h.attribute_models()) {
        if (!models.at("attributes").contains(id)) {
            throw corruption_error("manifest lacks attribute model '" + id + "'");
        }
        m = load(models.at("attributes").at(id), m.label_ids());
    }
    return h;
}

}  // namespace policylens
