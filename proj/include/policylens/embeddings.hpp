#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "policylens/detail/binary_io.hpp"
#include "policylens/detail/hash.hpp"
#include "policylens/detail/rng.hpp"
#include "policylens/error.hpp"
#include "policylens/tokenizer.hpp"

namespace policylens {

namespace detail {

/// Splits UTF-8 into code points (invalid bytes become single units).
inline std::vector<std::string_view> utf8_units(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t j = i + 1;
        while (j < s.size() && (static_cast<unsigned char>(s[j]) & 0xC0U) == 0x80U) {
            ++j;
        }
        out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace detail

/// Character n-grams of `<word>` with lengths in [min_n, max_n] code points,
/// ordered by length then start position.
inline std::vector<std::string> subword_ngrams(std::string_view word, std::size_t min_n = 3, std::size_t max_n = 6)
{
    std::string wrapped = "<" + std::string(word) + ">";
    auto units = detail::utf8_units(wrapped);
    std::vector<std::string> out;
    for (std::size_t n = min_n; n <= max_n && n <= units.size(); ++n) {
        for (std::size_t start = 0; start + n <= units.size(); ++start) {
            std::string g;
            for (std::size_t k = start; k < start + n; ++k) {
                g += units[k];
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

/// FNV-1a (32-bit) of the n-gram bytes modulo the bucket count.
inline std::uint64_t ngram_bucket(std::string_view ngram, std::uint64_t bucket_count)
{
    return detail::fnv1a_32(ngram) % bucket_count;
}

/// Cosine similarity; 0 when either vector is all zeros.
inline double cosine_similarity(std::span<double const> u, std::span<double const> v)
{
    if (u.size() != v.size()) {
        throw error("cosine_similarity: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                    std::to_string(v.size()) + ")");
    }
    double dot = 0.0;
    double nu = 0.0;
    double nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

struct embedding_shape {
    std::size_t dim = 300;
    std::size_t min_n = 3;
    std::size_t max_n = 6;
    std::uint64_t bucket_count = 2'000'000;
};

/// Word vectors plus hashed character n-gram vectors. Immutable after
/// training or loading; word_vector() is safe for concurrent callers.
class subword_embedding_model {
  public:
    /// How in-vocabulary words are resolved.
    enum class composition : std::uint8_t {
        /// Mean of the word row and its n-gram rows.
        subword_mean = 0,
        /// Word row alone; used for vectors imported from text.
        word_only = 1,
    };

    subword_embedding_model() = default;

    explicit subword_embedding_model(embedding_shape shape, std::vector<std::string> words = {})
        : m_shape(shape), m_words(std::move(words))
    {
        if (shape.dim == 0 || shape.bucket_count == 0 || shape.min_n == 0 || shape.min_n > shape.max_n) {
            throw error("invalid embedding shape");
        }
        for (std::size_t i = 0; i < m_words.size(); ++i) {
            if (!m_index.emplace(m_words[i], i).second) {
                throw invariant_error("duplicate vocabulary word", m_words[i]);
            }
        }
        m_word_vectors.assign(m_words.size() * shape.dim, 0.0F);
        m_bucket_vectors.assign(static_cast<std::size_t>(shape.bucket_count) * shape.dim, 0.0F);
    }

    [[nodiscard]] embedding_shape const& shape() const noexcept { return m_shape; }
    [[nodiscard]] std::size_t dim() const noexcept { return m_shape.dim; }
    [[nodiscard]] std::vector<std::string> const& words() const noexcept { return m_words; }
    [[nodiscard]] bool trained() const noexcept { return m_trained; }
    [[nodiscard]] composition mode() const noexcept { return m_mode; }

    [[nodiscard]] bool contains(std::string_view word) const { return m_index.contains(std::string(word)); }

    [[nodiscard]] std::size_t word_id(std::string_view word) const
    {
        auto it = m_index.find(std::string(word));
        return it == m_index.end() ? npos : it->second;
    }

    [[nodiscard]] std::span<float> word_row(std::size_t id)
    {
        return {m_word_vectors.data() + id * m_shape.dim, m_shape.dim};
    }
    [[nodiscard]] std::span<float const> word_row(std::size_t id) const
    {
        return {m_word_vectors.data() + id * m_shape.dim, m_shape.dim};
    }
    [[nodiscard]] std::span<float> bucket_row(std::uint64_t bucket)
    {
        return {m_bucket_vectors.data() + bucket * m_shape.dim, m_shape.dim};
    }
    [[nodiscard]] std::span<float const> bucket_row(std::uint64_t bucket) const
    {
        return {m_bucket_vectors.data() + bucket * m_shape.dim, m_shape.dim};
    }

    [[nodiscard]] std::vector<std::uint64_t> buckets_of(std::string_view word) const
    {
        std::vector<std::uint64_t> out;
        for (auto const& g : subword_ngrams(word, m_shape.min_n, m_shape.max_n)) {
            out.push_back(ngram_bucket(g, m_shape.bucket_count));
        }
        return out;
    }

    /// Total over non-empty words: out-of-vocabulary words compose from n-grams alone.
    [[nodiscard]] std::vector<double> word_vector(std::string_view word) const
    {
        if (word.empty()) {
            throw error("word_vector: empty word");
        }
        std::vector<double> out(m_shape.dim, 0.0);
        word_vector_into(word, out);
        return out;
    }

    void word_vector_into(std::string_view word, std::span<double> out) const
    {
        if (word.empty()) {
            throw error("word_vector: empty word");
        }
        std::fill(out.begin(), out.end(), 0.0);
        auto id = word_id(word);
        if (id != npos && m_mode == composition::word_only) {
            auto row = word_row(id);
            std::copy(row.begin(), row.end(), out.begin());
            return;
        }
        std::size_t count = 0;
        if (id != npos) {
            add(out, word_row(id));
            ++count;
        }
        for (auto b : buckets_of(word)) {
            add(out, bucket_row(b));
            ++count;
        }
        for (auto& x : out) {
            x /= static_cast<double>(count);
        }
    }

    /// Stable digest of the serialized model; fixed once the model is built.
    [[nodiscard]] std::uint64_t fingerprint() const;

    void mark_trained(bool t) noexcept { m_trained = t; }
    void set_mode(composition m) noexcept { m_mode = m; }

    [[nodiscard]] std::vector<float> const& word_table() const noexcept { return m_word_vectors; }
    [[nodiscard]] std::vector<float> const& bucket_table() const noexcept { return m_bucket_vectors; }
    std::vector<float>& word_table() noexcept { return m_word_vectors; }
    std::vector<float>& bucket_table() noexcept { return m_bucket_vectors; }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  private:
    static void add(std::span<double> acc, std::span<float const> row)
    {
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += static_cast<double>(row[i]);
        }
    }

    embedding_shape m_shape;
    std::vector<std::string> m_words;
    std::unordered_map<std::string, std::size_t> m_index;
    std::vector<float> m_word_vectors;
    std::vector<float> m_bucket_vectors;
    bool m_trained = false;
    composition m_mode = composition::subword_mean;
};

inline std::vector<double> word_vector(subword_embedding_model const& m, std::string_view word)
{
    return m.word_vector(word);
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {
inline constexpr std::string_view embedding_magic = "PLEMBED1";
inline constexpr std::uint32_t embedding_version = 1;
}  // namespace detail

inline std::string serialize_model(subword_embedding_model const& m)
{
    detail::byte_writer w;
    w.put_raw(detail::embedding_magic);
    w.put<std::uint32_t>(detail::embedding_version);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.shape().dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.shape().min_n));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.shape().max_n));
    w.put<std::uint64_t>(m.shape().bucket_count);
    w.put<std::uint8_t>(m.trained() ? 1 : 0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(m.mode()));
    w.put<std::uint64_t>(m.words().size());
    for (auto const& word : m.words()) {
        w.put_string(word);
    }
    w.put_array(m.word_table());
    w.put_array(m.bucket_table());
    w.seal();
    return w.bytes();
}

inline std::uint64_t subword_embedding_model::fingerprint() const
{
    return detail::fnv1a_64(serialize_model(*this));
}

inline subword_embedding_model deserialize_model(std::string_view bytes)
{
    if (bytes.size() < detail::embedding_magic.size() ||
        bytes.substr(0, detail::embedding_magic.size()) != detail::embedding_magic) {
        throw corruption_error("not an embedding model file (bad magic)");
    }
    auto payload = detail::verify_sealed(bytes);
    detail::byte_reader r(payload);
    r.get_raw(detail::embedding_magic.size());
    auto version = r.get<std::uint32_t>();
    if (version != detail::embedding_version) {
        throw version_error("unsupported embedding model version " + std::to_string(version));
    }
    embedding_shape shape;
    shape.dim = r.get<std::uint32_t>();
    shape.min_n = r.get<std::uint32_t>();
    shape.max_n = r.get<std::uint32_t>();
    shape.bucket_count = r.get<std::uint64_t>();
    bool trained = r.get<std::uint8_t>() != 0;
    auto mode = static_cast<subword_embedding_model::composition>(r.get<std::uint8_t>());
    auto n = r.get<std::uint64_t>();
    std::vector<std::string> words;
    words.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1U << 20U)));
    for (std::uint64_t i = 0; i < n; ++i) {
        words.push_back(r.get_string());
    }
    subword_embedding_model m(shape, std::move(words));
    auto wt = r.get_array<float>();
    auto bt = r.get_array<float>();
    if (wt.size() != m.word_table().size() || bt.size() != m.bucket_table().size()) {
        throw corruption_error("embedding table sizes do not match header");
    }
    if (!r.at_end()) {
        throw corruption_error("trailing bytes in embedding model");
    }
    m.word_table() = std::move(wt);
    m.bucket_table() = std::move(bt);
    m.mark_trained(trained);
    m.set_mode(mode);
    return m;
}

inline void save_model(subword_embedding_model const& m, std::string const& path)
{
    detail::write_file(path, serialize_model(m));
}

inline subword_embedding_model load_model(std::string const& path)
{
    return deserialize_model(detail::read_file(path));
}

/// Imports `vocab_count dim` + `word v1 ... v_dim` text vectors. Imported
/// words resolve to their own row; other words compose from (zero) buckets.
inline subword_embedding_model import_text_vectors(std::string_view text, std::uint64_t bucket_count = 1)
{
    std::istringstream in{std::string(text)};
    std::size_t count = 0;
    std::size_t dim = 0;
    if (!(in >> count >> dim) || dim == 0) {
        throw parse_error("expected header 'vocab_count dim'", 1);
    }
    std::vector<std::string> words;
    std::vector<float> rows;
    for (std::size_t i = 0; i < count; ++i) {
        std::string word;
        if (!(in >> word)) {
            throw parse_error("expected " + std::to_string(count) + " vectors, got " + std::to_string(i), i + 2);
        }
        words.push_back(word);
        for (std::size_t d = 0; d < dim; ++d) {
            float x;
            if (!(in >> x)) {
                throw parse_error("expected " + std::to_string(dim) + " components", i + 2, word);
            }
            rows.push_back(x);
        }
    }
    embedding_shape shape;
    shape.dim = dim;
    shape.bucket_count = bucket_count;
    subword_embedding_model m(shape, std::move(words));
    m.word_table() = std::move(rows);
    m.set_mode(subword_embedding_model::composition::word_only);
    m.mark_trained(true);
    return m;
}

// ---------------------------------------------------------------------------
// Skip-gram training with negative sampling over subword bags

struct skipgram_config {
    embedding_shape shape{.dim = 100, .min_n = 3, .max_n = 6, .bucket_count = 50'000};
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double learning_rate = 0.05;
    std::size_t min_count = 1;
    std::uint64_t seed = 1;
};

struct skipgram_result {
    subword_embedding_model model;
    /// Mean negative-sampling log-loss per (center, context) pair, per epoch.
    std::vector<double> epoch_loss;
};

/// The trainable state of skip-gram: input rows (the model's word and bucket
/// tables) plus output vectors per vocabulary word.
class skipgram_trainer {
  public:
    skipgram_trainer(subword_embedding_model& model, std::vector<std::size_t> const& counts)
        : m_model(model), m_output(model.words().size() * model.dim(), 0.0F)
    {
        for (std::size_t i = 0; i < model.words().size(); ++i) {
            std::vector<row_ref> rows;
            rows.push_back({row_kind::word, i});
            for (auto b : model.buckets_of(model.words()[i])) {
                rows.push_back({row_kind::bucket, b});
            }
            m_inputs.push_back(std::move(rows));
        }
        build_unigram_table(counts);
    }

    enum class row_kind : std::uint8_t { word, bucket, output };
    struct row_ref {
        row_kind kind;
        std::uint64_t index;
        friend auto operator<=>(row_ref const&, row_ref const&) = default;
    };

    [[nodiscard]] std::vector<row_ref> const& inputs_of(std::size_t word) const { return m_inputs[word]; }

    [[nodiscard]] std::span<float> row(row_ref r)
    {
        switch (r.kind) {
            case row_kind::word: return m_model.word_row(r.index);
            case row_kind::bucket: return m_model.bucket_row(r.index);
            case row_kind::output: break;
        }
        return {m_output.data() + r.index * m_model.dim(), m_model.dim()};
    }

    /// Hidden representation: mean of the center word's input rows.
    [[nodiscard]] std::vector<double> hidden(std::size_t center)
    {
        std::vector<double> h(m_model.dim(), 0.0);
        for (auto r : m_inputs[center]) {
            auto v = row(r);
            for (std::size_t d = 0; d < h.size(); ++d) {
                h[d] += static_cast<double>(v[d]);
            }
        }
        for (auto& x : h) {
            x /= static_cast<double>(m_inputs[center].size());
        }
        return h;
    }

    /// -log s(u_ctx.h) - sum log s(-u_neg.h)
    [[nodiscard]] double loss(std::size_t center, std::size_t context, std::span<std::size_t const> negatives)
    {
        auto h = hidden(center);
        double l = -log_sigmoid(dot({row_kind::output, context}, h));
        for (auto n : negatives) {
            l -= log_sigmoid(-dot({row_kind::output, n}, h));
        }
        return l;
    }

    /// Analytic gradient of loss() for every touched row.
    [[nodiscard]] std::map<row_ref, std::vector<double>>
    gradient(std::size_t center, std::size_t context, std::span<std::size_t const> negatives)
    {
        auto h = hidden(center);
        std::map<row_ref, std::vector<double>> grads;
        std::vector<double> grad_h(h.size(), 0.0);
        auto accumulate = [&](std::size_t target, double label) {
            row_ref out{row_kind::output, target};
            double g = sigmoid(dot(out, h)) - label;  // d loss / d score
            auto u = row(out);
            auto& gu = grads[out];
            gu.resize(h.size(), 0.0);
            for (std::size_t d = 0; d < h.size(); ++d) {
                grad_h[d] += g * static_cast<double>(u[d]);
                gu[d] += g * h[d];
            }
        };
        accumulate(context, 1.0);
        for (auto n : negatives) {
            accumulate(n, 0.0);
        }
        auto scale = 1.0 / static_cast<double>(m_inputs[center].size());
        for (auto r : m_inputs[center]) {
            auto& g = grads[r];
            g.resize(h.size(), 0.0);
            for (std::size_t d = 0; d < h.size(); ++d) {
                g[d] += grad_h[d] * scale;
            }
        }
        return grads;
    }

    /// One SGD step on a (center, context) pair; returns the pre-update loss.
    double step(std::size_t center, std::size_t context, std::span<std::size_t const> negatives, double lr)
    {
        auto h = hidden(center);
        std::vector<double> grad_h(h.size(), 0.0);
        double l = 0.0;
        auto update = [&](std::size_t target, double label) {
            row_ref out{row_kind::output, target};
            double score = dot(out, h);
            l -= label > 0.5 ? log_sigmoid(score) : log_sigmoid(-score);
            double g = sigmoid(score) - label;
            auto u = row(out);
            for (std::size_t d = 0; d < h.size(); ++d) {
                grad_h[d] += g * static_cast<double>(u[d]);
                u[d] = static_cast<float>(static_cast<double>(u[d]) - lr * g * h[d]);
            }
        };
        update(context, 1.0);
        for (auto n : negatives) {
            update(n, 0.0);
        }
        auto scale = lr / static_cast<double>(m_inputs[center].size());
        for (auto r : m_inputs[center]) {
            auto v = row(r);
            for (std::size_t d = 0; d < h.size(); ++d) {
                v[d] = static_cast<float>(static_cast<double>(v[d]) - scale * grad_h[d]);
            }
        }
        return l;
    }

    /// Negative sample drawn from the unigram^0.75 distribution, never `avoid`.
    std::size_t sample_negative(std::mt19937_64& gen, std::size_t avoid)
    {
        if (m_cumulative.size() <= 1) {
            return avoid;
        }
        for (;;) {
            double x = detail::uniform_unit(gen) * m_cumulative.back();
            auto it = std::upper_bound(m_cumulative.begin(), m_cumulative.end(), x);
            auto id = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - m_cumulative.begin(),
                                                                        static_cast<std::ptrdiff_t>(m_cumulative.size()) - 1));
            if (id != avoid) {
                return id;
            }
        }
    }

    static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
    static double log_sigmoid(double x)
    {
        return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
    }

  private:
    double dot(row_ref out, std::vector<double> const& h)
    {
        auto u = row(out);
        double s = 0.0;
        for (std::size_t d = 0; d < h.size(); ++d) {
            s += static_cast<double>(u[d]) * h[d];
        }
        return s;
    }

    void build_unigram_table(std::vector<std::size_t> const& counts)
    {
        double acc = 0.0;
        for (auto c : counts) {
            acc += std::pow(static_cast<double>(c), 0.75);
            m_cumulative.push_back(acc);
        }
    }

    subword_embedding_model& m_model;
    std::vector<float> m_output;
    std::vector<std::vector<row_ref>> m_inputs;
    std::vector<double> m_cumulative;
};

/// Trains skip-gram embeddings over word tokens of `corpus` (one document per
/// entry). Deterministic for a given seed. epochs == 0 returns the
/// initialized model flagged untrained.
inline skipgram_result train_skipgram(std::vector<std::string> const& corpus, skipgram_config const& cfg)
{
    if (cfg.window == 0 || cfg.shape.dim == 0 || cfg.learning_rate <= 0.0 || cfg.shape.bucket_count == 0) {
        throw error("train_skipgram: hyperparameters must be positive");
    }
    std::vector<std::vector<std::string>> docs;
    std::map<std::string, std::size_t> freq;
    for (auto const& d : corpus) {
        auto toks = word_tokens(d);
        for (auto const& t : toks) {
            ++freq[t];
        }
        docs.push_back(std::move(toks));
    }
    if (freq.empty()) {
        throw error("train_skipgram: empty corpus");
    }
    std::vector<std::string> vocab;
    std::vector<std::size_t> counts;
    for (auto const& [w, c] : freq) {
        if (c >= cfg.min_count) {
            vocab.push_back(w);
            counts.push_back(c);
        }
    }
    if (vocab.empty()) {
        throw error("train_skipgram: no word reaches min_count");
    }

    subword_embedding_model model(cfg.shape, vocab);
    std::mt19937_64 gen(cfg.seed);
    double bound = 1.0 / static_cast<double>(cfg.shape.dim);
    for (auto& x : model.word_table()) {
        x = static_cast<float>(detail::uniform_real(gen, -bound, bound));
    }
    for (auto& x : model.bucket_table()) {
        x = static_cast<float>(detail::uniform_real(gen, -bound, bound));
    }

    skipgram_result result{std::move(model), {}};
    if (cfg.epochs == 0) {
        result.model.mark_trained(false);
        return result;
    }

    std::vector<std::vector<std::size_t>> ids;
    std::size_t total_tokens = 0;
    for (auto const& d : docs) {
        std::vector<std::size_t> row;
        for (auto const& t : d) {
            auto id = result.model.word_id(t);
            if (id != subword_embedding_model::npos) {
                row.push_back(id);
            }
        }
        total_tokens += row.size();
        ids.push_back(std::move(row));
    }

    skipgram_trainer trainer(result.model, counts);
    std::vector<std::size_t> negs(cfg.negatives);
    std::size_t const total_steps = std::max<std::size_t>(1, total_tokens * cfg.epochs);
    std::size_t processed = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t pairs = 0;
        for (auto const& doc : ids) {
            for (std::size_t pos = 0; pos < doc.size(); ++pos) {
                double progress = static_cast<double>(processed++) / static_cast<double>(total_steps);
                double lr = cfg.learning_rate * std::max(1e-4, 1.0 - progress);
                auto span = 1 + static_cast<std::size_t>(detail::uniform_below(gen, cfg.window));
                std::size_t lo = pos >= span ? pos - span : 0;
                std::size_t hi = std::min(doc.size() - 1, pos + span);
                for (std::size_t c = lo; c <= hi; ++c) {
                    if (c == pos) {
                        continue;
                    }
                    for (auto& n : negs) {
                        n = trainer.sample_negative(gen, doc[c]);
                    }
                    loss_sum += trainer.step(doc[pos], doc[c], negs, lr);
                    ++pairs;
                }
            }
        }
        result.epoch_loss.push_back(pairs == 0 ? 0.0 : loss_sum / static_cast<double>(pairs));
    }
    result.model.mark_trained(true);
    return result;
}

}  // namespace policylens
