#pragma once

// Engine state shared by the CLI and the HTTP API: configuration, model
// directory persistence, the policy cache and a transport-independent router.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "policylens/corpus_io.hpp"
#include "policylens/default_taxonomy.hpp"
#include "policylens/detail/binary_io.hpp"
#include "policylens/detail/hash.hpp"
#include "policylens/embeddings.hpp"
#include "policylens/error.hpp"
#include "policylens/hierarchy.hpp"
#include "policylens/icons.hpp"
#include "policylens/qa.hpp"
#include "policylens/segmenter.hpp"
#include "policylens/taxonomy.hpp"

namespace policylens {

// ---------------------------------------------------------------------------
// Errors

enum class api_error_code : std::uint8_t { bad_input, not_found, model_missing, ambiguous_question, internal };

inline std::string_view to_string(api_error_code c)
{
    switch (c) {
        case api_error_code::bad_input: return "bad_input";
        case api_error_code::not_found: return "not_found";
        case api_error_code::model_missing: return "model_missing";
        case api_error_code::ambiguous_question: return "ambiguous_question";
        case api_error_code::internal: return "internal";
    }
    return "internal";
}

inline int http_status(api_error_code c)
{
    switch (c) {
        case api_error_code::bad_input: return 400;
        case api_error_code::not_found: return 404;
        case api_error_code::model_missing: return 409;
        case api_error_code::ambiguous_question: return 422;
        case api_error_code::internal: return 500;
    }
    return 500;
}

class api_error : public error {
  public:
    api_error(api_error_code code, std::string const& message, nlohmann::json detail = nullptr)
        : error(message), m_code(code), m_detail(std::move(detail))
    {}

    [[nodiscard]] api_error_code code() const noexcept { return m_code; }
    [[nodiscard]] nlohmann::json const& detail() const noexcept { return m_detail; }

    [[nodiscard]] nlohmann::json to_json() const
    {
        return {{"error", {{"code", to_string(m_code)}, {"message", what()}, {"detail", m_detail}}}};
    }

  private:
    api_error_code m_code;
    nlohmann::json m_detail;
};

/// Maps any exception to the error record sent over the wire. Messages of
/// unexpected exceptions are not forwarded.
inline api_error to_api_error(std::exception_ptr ep)
{
    try {
        std::rethrow_exception(ep);
    } catch (api_error const& e) {
        return e;
    } catch (ambiguous_question_error const& e) {
        return {api_error_code::ambiguous_question, e.what()};
    } catch (untrained_model_error const& e) {
        return {api_error_code::model_missing, e.what()};
    } catch (unknown_label_error const& e) {
        return {api_error_code::bad_input, e.what(), e.offenders()};
    } catch (unknown_category_error const& e) {
        return {api_error_code::bad_input, e.what()};
    } catch (parse_error const& e) {
        return {api_error_code::bad_input, e.what()};
    } catch (nlohmann::json::exception const& e) {
        return {api_error_code::bad_input, std::string("malformed JSON: ") + e.what()};
    } catch (...) {
        return {api_error_code::internal, "internal error"};
    }
}

// ---------------------------------------------------------------------------
// Configuration

struct engine_config {
    std::filesystem::path model_dir;
    /// Ingested policies are written here and reloaded at startup; empty keeps them in memory only.
    std::filesystem::path cache_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t threads = 8;
    /// Top-1 confidence below this flags the answer set as low confidence.
    double accept_threshold = 0.6;
    /// cer(q) below this flags the question as ambiguous.
    double ambiguous_certainty = 0.1;
    std::size_t top_k = 3;
    std::size_t conflict_window = 3;
    double label_threshold = 0.5;
    segmenter_config segmenter{};
};

namespace detail {

inline double parse_double(std::string const& key, std::string const& v, std::size_t line)
{
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return d;
    } catch (std::exception const&) {
        throw parse_error("expected a number, got '" + v + "'", line, key);
    }
}

inline std::size_t parse_count(std::string const& key, std::string const& v, std::size_t line)
{
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw parse_error("expected a non-negative integer, got '" + v + "'", line, key);
    }
    return out;
}

inline double parse_unit(std::string const& key, std::string const& v, std::size_t line)
{
    double d = parse_double(key, v, line);
    if (!(d >= 0.0 && d <= 1.0)) {
        throw parse_error("expected a value in [0, 1], got '" + v + "'", line, key);
    }
    return d;
}

}  // namespace detail

/// Applies `key = value` lines on top of `base`. `#` starts a comment; unknown keys are errors.
inline engine_config parse_engine_config(std::string_view text, engine_config base = {})
{
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (auto hash = raw.find('#'); hash != std::string::npos) {
            raw.erase(hash);
        }
        auto body = trim(raw);
        if (body.empty()) {
            continue;
        }
        auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw parse_error("expected key = value", line);
        }
        auto key = trim(body.substr(0, eq));
        auto value = trim(body.substr(eq + 1));
        if (key == "model_dir") {
            base.model_dir = value;
        } else if (key == "cache_dir") {
            base.cache_dir = value;
        } else if (key == "server.host") {
            base.host = value;
        } else if (key == "server.port") {
            auto p = detail::parse_count(key, value, line);
            if (p > 65535) {
                throw parse_error("port out of range", line, key);
            }
            base.port = static_cast<int>(p);
        } else if (key == "server.threads") {
            base.threads = std::max<std::size_t>(1, detail::parse_count(key, value, line));
        } else if (key == "qa.accept_threshold") {
            base.accept_threshold = detail::parse_unit(key, value, line);
        } else if (key == "qa.ambiguous_certainty") {
            base.ambiguous_certainty = detail::parse_unit(key, value, line);
        } else if (key == "qa.top_k") {
            base.top_k = detail::parse_count(key, value, line);
            if (base.top_k == 0) {
                throw parse_error("top_k must be positive", line, key);
            }
        } else if (key == "qa.conflict_window") {
            base.conflict_window = detail::parse_count(key, value, line);
        } else if (key == "labels.threshold") {
            base.label_threshold = detail::parse_unit(key, value, line);
        } else if (key == "segmenter.threshold") {
            base.segmenter.threshold = detail::parse_double(key, value, line);
        } else if (key == "segmenter.min_sentences") {
            base.segmenter.min_sentences = std::max<std::size_t>(1, detail::parse_count(key, value, line));
        } else if (key == "segmenter.short_item_max_words") {
            base.segmenter.short_item_max_words = detail::parse_count(key, value, line);
        } else {
            throw parse_error("unknown configuration key", line, key);
        }
    }
    return base;
}

using environment_lookup = std::function<char const*(char const*)>;

/// Defaults, then the file named by `config_file` or ENGINE_CONFIG, then ENGINE_MODEL_DIR.
inline engine_config resolve_engine_config(std::optional<std::filesystem::path> config_file = std::nullopt,
                                           environment_lookup const& env = [](char const* k) { return std::getenv(k); })
{
    engine_config cfg;
    if (!config_file) {
        if (char const* p = env("ENGINE_CONFIG"); p != nullptr && *p != '\0') {
            config_file = p;
        }
    }
    if (config_file) {
        cfg = parse_engine_config(detail::read_file(config_file->string()), cfg);
    }
    if (char const* d = env("ENGINE_MODEL_DIR"); d != nullptr && *d != '\0') {
        cfg.model_dir = d;
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Model directory
//
//   taxonomy.json     optional; the built-in taxonomy otherwise
//   embeddings.bin
//   classifiers/      a saved classifier hierarchy

struct model_bundle {
    taxonomy tax;
    std::unique_ptr<subword_embedding_model> embedding;
    std::optional<classifier_hierarchy> hierarchy;
};

inline void save_model_dir(std::filesystem::path const& dir, taxonomy const& t, subword_embedding_model const& emb,
                           classifier_hierarchy const* h = nullptr)
{
    std::filesystem::create_directories(dir);
    detail::write_file((dir / "taxonomy.json").string(), serialize(t) + "\n");
    save_model(emb, (dir / "embeddings.bin").string());
    if (h != nullptr) {
        save_hierarchy(*h, dir / "classifiers");
    }
}

/// Missing pieces stay empty; a present but inconsistent piece is an error.
inline model_bundle load_model_dir(std::filesystem::path const& dir)
{
    model_bundle b{default_taxonomy(), nullptr, std::nullopt};
    if (dir.empty()) {
        return b;
    }
    if (std::filesystem::exists(dir / "taxonomy.json")) {
        b.tax = load_taxonomy_file((dir / "taxonomy.json").string());
    }
    if (std::filesystem::exists(dir / "embeddings.bin")) {
        b.embedding = std::make_unique<subword_embedding_model>(load_model((dir / "embeddings.bin").string()));
        if (std::filesystem::exists(dir / "classifiers" / "manifest.json")) {
            b.hierarchy = load_hierarchy(dir / "classifiers", b.tax, *b.embedding);
        }
    }
    return b;
}

// ---------------------------------------------------------------------------
// JSON views

inline nlohmann::json to_json(segment const& s)
{
    return {{"policy_id", s.policy_id}, {"index", s.index}, {"text", s.text}, {"origin", to_string(s.origin)}};
}

inline nlohmann::json to_json(segment_annotation const& a, taxonomy const& t, double threshold)
{
    nlohmann::json values = nlohmann::json::object();
    for (auto const& [v, p] : a.value_probs) {
        values[v.str()] = p;
    }
    auto present = present_labels(t, a, threshold);
    nlohmann::json present_values = nlohmann::json::array();
    for (auto const& v : present.values) {
        present_values.push_back(v.str());
    }
    return {{"index", a.segment_index},
            {"categories", a.category_probs},
            {"values", values},
            {"polarity", {{"does", a.p_does}, {"does_not", a.p_does_not}}},
            {"present", {{"categories", present.categories}, {"values", present_values}}}};
}

inline nlohmann::json to_json(icon_assignment const& a)
{
    return {{"icon", to_string(a.which)}, {"color", to_string(a.color)}, {"evidence", a.evidence}};
}

// ---------------------------------------------------------------------------
// Engine

struct ingest_request {
    std::optional<std::string> policy_id;
    std::string source;
    bool is_html = true;
    std::optional<std::string> url;
};

struct cached_policy {
    policy_document document;
    std::vector<segment> segments;
    std::vector<segment_annotation> annotations;
    labeled_policy labels;
    std::vector<std::string> warnings;
};

struct ingest_result {
    std::shared_ptr<cached_policy const> policy;
    bool created = false;
};

namespace detail {

inline bool valid_policy_id(std::string_view id)
{
    return !id.empty() && id.size() <= 128 && std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
               c == '_' || c == '.';
    }) && id != "." && id != "..";
}

inline std::string hex64(std::uint64_t v)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

}  // namespace detail

/// Models are immutable after construction; the policy cache is the only
/// shared mutable state and ingestion its only writer.
class engine {
  public:
    engine(engine_config cfg, model_bundle models) : m_config(std::move(cfg)), m_models(std::move(models))
    {
        if (m_models.hierarchy) {
            if (!m_models.embedding) {
                throw error("engine: classifiers need an embedding model");
            }
            if (m_models.hierarchy->taxonomy_ref().checksum() != m_models.tax.checksum()) {
                throw version_error("engine: classifiers were trained against a different taxonomy");
            }
            m_models.hierarchy->rebind(*m_models.embedding);
        }
        if (!m_config.cache_dir.empty() && std::filesystem::exists(m_config.cache_dir)) {
            reload_cache();
        }
    }

    explicit engine(engine_config cfg) : engine(cfg, load_model_dir(cfg.model_dir)) {}

    engine(engine const&) = delete;
    engine& operator=(engine const&) = delete;

    [[nodiscard]] engine_config const& config() const noexcept { return m_config; }
    [[nodiscard]] taxonomy const& taxonomy_ref() const noexcept { return m_models.tax; }
    [[nodiscard]] bool has_embedding() const noexcept { return m_models.embedding != nullptr; }
    [[nodiscard]] bool has_classifiers() const noexcept { return m_models.hierarchy.has_value(); }

    [[nodiscard]] subword_embedding_model const& embedding() const
    {
        if (!m_models.embedding) {
            throw api_error(api_error_code::model_missing, "no embedding model is loaded");
        }
        return *m_models.embedding;
    }

    [[nodiscard]] classifier_hierarchy const& hierarchy() const
    {
        if (!m_models.hierarchy) {
            throw api_error(api_error_code::model_missing, "no classifier models are loaded");
        }
        return *m_models.hierarchy;
    }

    [[nodiscard]] std::size_t policy_count() const
    {
        std::shared_lock lock(m_mutex);
        return m_policies.size();
    }

    /// Segments and classifies a policy. Re-ingesting identical content returns the cached entry.
    ingest_result ingest(ingest_request const& req)
    {
        if (trim(req.source).empty()) {
            throw api_error(api_error_code::bad_input, "policy source is empty");
        }
        std::string id = req.policy_id.value_or("policy-" + detail::hex64(detail::fnv1a_64(req.source)));
        if (!detail::valid_policy_id(id)) {
            throw api_error(api_error_code::bad_input, "policy_id may only contain letters, digits, '-', '_' and '.'",
                            id);
        }
        if (auto existing = find(id)) {
            return {check_same(existing, req), false};
        }
        auto const& h = hierarchy();
        auto entry = std::make_shared<cached_policy>();
        entry->document = {id, req.source, req.url, req.is_html};
        entry->segments = segment_policy(entry->document, embedding(), m_config.segmenter, &entry->warnings);
        for (auto const& s : entry->segments) {
            entry->annotations.push_back(classify_segment(h, s));
        }
        entry->labels = labeled_policy_from_annotations(m_models.tax, id, entry->annotations, m_config.label_threshold);

        persist(*entry);
        std::unique_lock lock(m_mutex);
        auto [it, inserted] = m_policies.emplace(id, entry);
        if (!inserted) {
            return {check_same(it->second, req), false};
        }
        return {entry, true};
    }

    [[nodiscard]] std::shared_ptr<cached_policy const> find(std::string const& id) const
    {
        std::shared_lock lock(m_mutex);
        auto it = m_policies.find(id);
        return it == m_policies.end() ? nullptr : it->second;
    }

    [[nodiscard]] std::shared_ptr<cached_policy const> get(std::string const& id) const
    {
        auto p = find(id);
        if (!p) {
            throw api_error(api_error_code::not_found, "unknown policy '" + id + "'", id);
        }
        return p;
    }

    [[nodiscard]] nlohmann::json health() const
    {
        return {{"status", "ok"},
                {"models", {{"embeddings", has_embedding()}, {"classifiers", has_classifiers()}}},
                {"taxonomy_checksum", std::to_string(m_models.tax.checksum())},
                {"embedding_fingerprint",
                 has_embedding() ? nlohmann::json(std::to_string(m_models.embedding->fingerprint())) : nullptr},
                {"policies", policy_count()}};
    }

    [[nodiscard]] nlohmann::json ingest_view(cached_policy const& p) const
    {
        nlohmann::json segs = nlohmann::json::array();
        for (auto const& s : p.segments) {
            segs.push_back(to_json(s));
        }
        return {{"policy_id", p.document.policy_id},
                {"segment_count", p.segments.size()},
                {"segments", segs},
                {"warnings", p.warnings}};
    }

    [[nodiscard]] nlohmann::json segments_view(std::string const& id) const
    {
        auto p = get(id);
        nlohmann::json segs = nlohmann::json::array();
        for (auto const& s : p->segments) {
            segs.push_back(to_json(s));
        }
        return {{"policy_id", id}, {"segments", segs}};
    }

    [[nodiscard]] nlohmann::json labels_view(std::string const& id) const
    {
        auto p = get(id);
        nlohmann::json segs = nlohmann::json::array();
        for (auto const& a : p->annotations) {
            segs.push_back(to_json(a, m_models.tax, m_config.label_threshold));
        }
        return {{"policy_id", id}, {"threshold", m_config.label_threshold}, {"segments", segs}};
    }

    [[nodiscard]] nlohmann::json icons_view(std::string const& id, icon_strategy strategy) const
    {
        auto p = get(id);
        nlohmann::json icons = nlohmann::json::array();
        for (auto const& a : assign_all(p->labels, strategy)) {
            icons.push_back(to_json(a));
        }
        return {{"policy_id", id}, {"strategy", to_string(strategy)}, {"icons", icons}};
    }

    /// Top answers with their confidence components; throws ambiguous_question_error when
    /// the question has no words or no classification signal.
    [[nodiscard]] nlohmann::json ask_view(std::string const& id, std::string const& question,
                                          std::optional<std::size_t> top_k = std::nullopt) const
    {
        if (trim(question).empty()) {
            throw api_error(api_error_code::bad_input, "question is empty");
        }
        auto const& h = hierarchy();
        auto p = get(id);
        qa_config qc{m_config.conflict_window, m_config.accept_threshold};
        auto response = rank_answers(h, p->annotations, question, qc);
        auto const k = std::min(top_k.value_or(m_config.top_k), response.answers.size());

        nlohmann::json answers = nlohmann::json::array();
        for (std::size_t i = 0; i < k; ++i) {
            auto const& a = response.answers[i];
            auto const& ann = p->annotations.at(a.segment_index);
            auto top = std::max_element(ann.category_probs.begin(), ann.category_probs.end(),
                                        [](auto const& x, auto const& y) { return x.second < y.second; });
            answers.push_back({{"rank", a.rank},
                               {"segment_index", a.segment_index},
                               {"text", p->segments.at(a.segment_index).text},
                               {"category", top == ann.category_probs.end() ? "" : top->first},
                               {"score", a.score},
                               {"confidence", a.confidence},
                               {"conflict_with", a.conflict_with}});
        }

        std::vector<std::string> unknown;
        for (auto const& w : word_tokens(question)) {
            if (!h.embedding().contains(w) && std::find(unknown.begin(), unknown.end(), w) == unknown.end()) {
                unknown.push_back(w);
            }
        }
        auto const& q = response.question;
        bool const ambiguous = q.cer_q < m_config.ambiguous_certainty;
        nlohmann::json notices = nlohmann::json::array();
        if (response.low_confidence) {
            notices.push_back({{"code", "low_confidence"},
                               {"message", "The policy might not contain an answer to this question."}});
        }
        if (!unknown.empty()) {
            notices.push_back({{"code", "unknown_words"},
                               {"message", "Some words of the question are unknown; rephrasing may help."}});
        }
        if (ambiguous) {
            notices.push_back({{"code", "ambiguous_question"},
                               {"message", "The question matches several topics equally; please be more specific."}});
        }
        bool any_conflict = std::any_of(response.answers.begin(), response.answers.begin() + static_cast<long>(k),
                                        [](ranked_answer const& a) { return !a.conflict_with.empty(); });
        if (any_conflict) {
            notices.push_back({{"code", "conflict"}, {"message", "Some answers appear to contradict each other."}});
        }
        return {{"policy_id", id},
                {"question", question},
                {"answers", answers},
                {"low_confidence", response.low_confidence},
                {"ambiguous_question", ambiguous},
                {"components",
                 {{"certainty", q.cer_q}, {"known_word_fraction", q.frac_q}, {"unknown_words", unknown}}},
                {"notices", notices}};
    }

  private:
    std::shared_ptr<cached_policy const> check_same(std::shared_ptr<cached_policy const> existing,
                                                    ingest_request const& req) const
    {
        if (existing->document.source != req.source || existing->document.is_html != req.is_html) {
            throw api_error(api_error_code::bad_input, "policy id already ingested with different content",
                            existing->document.policy_id);
        }
        return existing;
    }

    void persist(cached_policy const& p) const
    {
        if (m_config.cache_dir.empty()) {
            return;
        }
        std::filesystem::create_directories(m_config.cache_dir);
        nlohmann::json j = {{"policy_id", p.document.policy_id},
                            {"format", p.document.is_html ? "html" : "text"},
                            {"source", p.document.source},
                            {"url", p.document.url ? nlohmann::json(*p.document.url) : nullptr}};
        detail::write_file((m_config.cache_dir / (p.document.policy_id + ".json")).string(), j.dump() + "\n");
    }

    void reload_cache()
    {
        std::vector<std::filesystem::path> files;
        for (auto const& e : std::filesystem::directory_iterator(m_config.cache_dir)) {
            if (e.is_regular_file() && e.path().extension() == ".json") {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (auto const& f : files) {
            auto j = nlohmann::json::parse(detail::read_file(f.string()));
            ingest_request req;
            req.policy_id = j.at("policy_id").get<std::string>();
            req.source = j.at("source").get<std::string>();
            req.is_html = j.value("format", "html") == "html";
            if (j.contains("url") && j["url"].is_string()) {
                req.url = j["url"].get<std::string>();
            }
            ingest(req);
        }
    }

    engine_config m_config;
    model_bundle m_models;
    mutable std::shared_mutex m_mutex;
    std::map<std::string, std::shared_ptr<cached_policy const>> m_policies;
};

// ---------------------------------------------------------------------------
// Routing

struct api_request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct api_response {
    int status = 200;
    nlohmann::json body;
};

namespace detail {

inline std::vector<std::string> path_parts(std::string_view path)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        auto j = path.find('/', i);
        if (j == std::string_view::npos) {
            j = path.size();
        }
        if (j > i) {
            out.emplace_back(path.substr(i, j - i));
        }
        i = j + 1;
    }
    return out;
}

inline nlohmann::json parse_body(std::string const& body)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (nlohmann::json::parse_error const&) {
        throw api_error(api_error_code::bad_input, "request body is not valid JSON");
    }
    if (!j.is_object()) {
        throw api_error(api_error_code::bad_input, "request body must be a JSON object");
    }
    return j;
}

inline std::optional<std::string> optional_string(nlohmann::json const& j, char const* key)
{
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    if (!j[key].is_string()) {
        throw api_error(api_error_code::bad_input, std::string("field '") + key + "' must be a string", key);
    }
    return j[key].get<std::string>();
}

inline api_response handle_ingest(engine& e, api_request const& req)
{
    auto j = parse_body(req.body);
    ingest_request in;
    auto source = optional_string(j, "source");
    if (!source) {
        throw api_error(api_error_code::bad_input, "field 'source' is required", "source");
    }
    in.source = *source;
    in.policy_id = optional_string(j, "policy_id");
    in.url = optional_string(j, "url");
    auto format = optional_string(j, "format").value_or("html");
    if (format != "html" && format != "text") {
        throw api_error(api_error_code::bad_input, "field 'format' must be 'html' or 'text'", "format");
    }
    in.is_html = format == "html";
    auto r = e.ingest(in);
    return {r.created ? 201 : 200, e.ingest_view(*r.policy)};
}

inline api_response handle_ask(engine const& e, std::string const& id, api_request const& req)
{
    auto j = parse_body(req.body);
    auto question = optional_string(j, "question");
    if (!question) {
        throw api_error(api_error_code::bad_input, "field 'question' is required", "question");
    }
    std::optional<std::size_t> top_k;
    if (j.contains("top_k") && !j["top_k"].is_null()) {
        if (!j["top_k"].is_number_integer() || j["top_k"].get<long long>() < 1) {
            throw api_error(api_error_code::bad_input, "field 'top_k' must be a positive integer", "top_k");
        }
        top_k = j["top_k"].get<std::size_t>();
    }
    return {200, e.ask_view(id, *question, top_k)};
}

}  // namespace detail

/// Dispatches one request. Never throws; failures become ApiError bodies.
inline api_response handle_request(engine& e, api_request const& req)
{
    try {
        auto parts = detail::path_parts(req.path);
        auto const& m = req.method;
        if (parts.size() == 1 && parts[0] == "health" && m == "GET") {
            return {200, e.health()};
        }
        if (!parts.empty() && parts[0] == "policies") {
            if (parts.size() == 1 && m == "POST") {
                return detail::handle_ingest(e, req);
            }
            if (parts.size() == 3) {
                auto const& id = parts[1];
                auto const& what = parts[2];
                if (what == "segments" && m == "GET") {
                    return {200, e.segments_view(id)};
                }
                if (what == "labels" && m == "GET") {
                    return {200, e.labels_view(id)};
                }
                if (what == "ask" && m == "POST") {
                    return detail::handle_ask(e, id, req);
                }
                if (what == "icons" && m == "GET") {
                    auto it = req.query.find("strategy");
                    auto strategy = icon_strategy::conservative;
                    if (it != req.query.end()) {
                        try {
                            strategy = icon_strategy_from_string(it->second);
                        } catch (error const&) {
                            throw api_error(api_error_code::bad_input,
                                            "strategy must be conservative, permissive or very-permissive",
                                            it->second);
                        }
                    }
                    return {200, e.icons_view(id, strategy)};
                }
            }
        }
        throw api_error(api_error_code::not_found, "no route for " + m + " " + req.path);
    } catch (...) {
        auto err = to_api_error(std::current_exception());
        return {http_status(err.code()), err.to_json()};
    }
}

/// An httplib server whose routes all go through handle_request.
inline std::unique_ptr<httplib::Server> make_http_server(engine& e)
{
    auto server = std::make_unique<httplib::Server>();
    auto const threads = e.config().threads;
    server->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    auto handler = [&e](httplib::Request const& req, httplib::Response& res) {
        api_request r{req.method, req.path, {}, req.body};
        for (auto const& [k, v] : req.params) {
            r.query.emplace(k, v);
        }
        auto out = handle_request(e, r);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json");
    };
    server->Get(R"(/.*)", handler);
    server->Post(R"(/.*)", handler);
    server->Put(R"(/.*)", handler);
    server->Delete(R"(/.*)", handler);
    return server;
}

}  // namespace policylens
