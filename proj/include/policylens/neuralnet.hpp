#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "policylens/detail/binary_io.hpp"
#include "policylens/detail/rng.hpp"
#include "policylens/embeddings.hpp"
#include "policylens/error.hpp"
#include "policylens/tokenizer.hpp"

namespace policylens {

/// Label id -> probability, every model label present.
using label_probabilities = std::map<std::string, double>;

struct cnn_shape {
    std::size_t embedding_dim = 300;
    std::size_t filter_count = 200;
    std::size_t filter_size = 3;
    std::size_t dense_size = 100;
    std::size_t max_len = 300;

    friend bool operator==(cnn_shape const&, cnn_shape const&) = default;
};

/// Token rows looked up in a frozen embedding. Rows past `length` up to
/// max_len are padding and implicitly zero.
struct encoded_sequence {
    std::size_t length = 0;
    std::size_t dim = 0;
    std::vector<double> rows;  // length x dim

    [[nodiscard]] std::span<double const> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }
};

/// Empty tokens are padding and map to the zero vector.
inline encoded_sequence encode(subword_embedding_model const& emb, token_sequence const& seq)
{
    encoded_sequence out;
    out.length = seq.length();
    out.dim = emb.dim();
    out.rows.assign(out.length * out.dim, 0.0);
    for (std::size_t i = 0; i < out.length; ++i) {
        if (!seq.tokens[i].empty()) {
            emb.word_vector_into(seq.tokens[i], {out.rows.data() + i * out.dim, out.dim});
        }
    }
    return out;
}

struct cnn_output {
    std::vector<double> probabilities;  // aligned with label_ids
    std::vector<double> semantic_vector;  // dense1 activations
};

/// Intermediate values of one forward pass, kept for backprop.
struct cnn_trace {
    static constexpr std::size_t padding_window = std::numeric_limits<std::size_t>::max();

    std::vector<std::size_t> argmax;  // per filter: window start, or padding_window
    std::vector<double> pooled;       // relu(max pre-activation)
    std::vector<double> max_pre;
    std::vector<double> dense_pre;
    std::vector<double> hidden;
    std::vector<double> logits;
    std::vector<double> probabilities;

    /// ReLU/max-pool branch pattern; a change means a kink was crossed.
    [[nodiscard]] std::vector<std::int64_t> pattern() const
    {
        std::vector<std::int64_t> p;
        for (std::size_t f = 0; f < argmax.size(); ++f) {
            p.push_back(max_pre[f] > 0 ? static_cast<std::int64_t>(argmax[f] == padding_window ? -1 : argmax[f]) : -2);
        }
        for (auto z : dense_pre) {
            p.push_back(z > 0 ? 1 : 0);
        }
        return p;
    }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Mean over labels of -[y log p + (1-y) log(1-p)], p clamped to [1e-12, 1-1e-12].
inline double multilabel_loss(std::span<double const> probs, std::span<double const> truth)
{
    constexpr double eps = 1e-12;
    if (probs.size() != truth.size() || probs.empty()) {
        throw error("multilabel_loss: size mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = std::clamp(probs[i], eps, 1.0 - eps);
        sum -= truth[i] * std::log(p) + (1.0 - truth[i]) * std::log(1.0 - p);
    }
    return sum / static_cast<double>(probs.size());
}

inline double multilabel_loss(label_probabilities const& probs, std::set<std::string> const& truth)
{
    std::vector<double> p;
    std::vector<double> y;
    for (auto const& [label, prob] : probs) {
        p.push_back(prob);
        y.push_back(truth.contains(label) ? 1.0 : 0.0);
    }
    for (auto const& t : truth) {
        if (!probs.contains(t)) {
            throw unknown_label_error({t});
        }
    }
    return multilabel_loss(p, y);
}

/// Convolution (width k, ReLU) -> max-pool -> dense (ReLU) -> dense -> sigmoid.
/// The embedding layer is external and frozen.
class cnn_classifier {
  public:
    cnn_classifier() = default;

    cnn_classifier(cnn_shape shape, std::vector<std::string> label_ids, std::uint64_t seed = 1,
                   std::uint64_t embedding_fingerprint = 0)
        : m_shape(shape), m_labels(std::move(label_ids)), m_seed(seed), m_embedding_fingerprint(embedding_fingerprint)
    {
        if (m_labels.empty()) {
            throw error("cnn_classifier: no labels");
        }
        if (shape.filter_size == 0 || shape.max_len < shape.filter_size || shape.embedding_dim == 0 ||
            shape.filter_count == 0 || shape.dense_size == 0) {
            throw error("cnn_classifier: invalid shape");
        }
        m_params.assign(param_count(), 0.0);
        initialize(seed);
    }

    [[nodiscard]] cnn_shape const& shape() const noexcept { return m_shape; }
    [[nodiscard]] std::vector<std::string> const& label_ids() const noexcept { return m_labels; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return m_seed; }
    [[nodiscard]] std::uint64_t embedding_fingerprint() const noexcept { return m_embedding_fingerprint; }
    [[nodiscard]] bool trained() const noexcept { return m_trained; }
    void mark_trained(bool t) noexcept { m_trained = t; }

    [[nodiscard]] std::vector<double> const& params() const noexcept { return m_params; }
    std::vector<double>& params() noexcept { return m_params; }

    [[nodiscard]] std::size_t label_count() const noexcept { return m_labels.size(); }
    [[nodiscard]] std::size_t window_width() const noexcept { return m_shape.filter_size * m_shape.embedding_dim; }

    // Flat parameter layout: conv W (F x kD), conv b (F), dense1 W (H x F),
    // dense1 b (H), dense2 W (L x H), dense2 b (L).
    [[nodiscard]] std::size_t conv_w() const noexcept { return 0; }
    [[nodiscard]] std::size_t conv_b() const noexcept { return m_shape.filter_count * window_width(); }
    [[nodiscard]] std::size_t dense1_w() const noexcept { return conv_b() + m_shape.filter_count; }
    [[nodiscard]] std::size_t dense1_b() const noexcept { return dense1_w() + m_shape.dense_size * m_shape.filter_count; }
    [[nodiscard]] std::size_t dense2_w() const noexcept { return dense1_b() + m_shape.dense_size; }
    [[nodiscard]] std::size_t dense2_b() const noexcept { return dense2_w() + label_count() * m_shape.dense_size; }
    [[nodiscard]] std::size_t param_count() const noexcept { return dense2_b() + label_count(); }

    [[nodiscard]] cnn_trace trace(encoded_sequence const& seq) const
    {
        check_input(seq);
        auto const F = m_shape.filter_count;
        auto const k = m_shape.filter_size;
        auto const D = m_shape.embedding_dim;
        auto const H = m_shape.dense_size;
        auto const L = label_count();
        std::size_t const windows = m_shape.max_len - k + 1;
        std::size_t const real = std::min(seq.length, windows);
        bool const has_padding_window = windows > seq.length;

        cnn_trace t;
        t.argmax.assign(F, cnn_trace::padding_window);
        t.max_pre.assign(F, -std::numeric_limits<double>::infinity());
        t.pooled.assign(F, 0.0);
        double const* P = m_params.data();
        for (std::size_t f = 0; f < F; ++f) {
            double const* w = P + conv_w() + f * k * D;
            double const b = P[conv_b() + f];
            for (std::size_t p = 0; p < real; ++p) {
                double z = b;
                for (std::size_t j = 0; j < k && p + j < seq.length; ++j) {
                    double const* x = seq.rows.data() + (p + j) * D;
                    double const* wj = w + j * D;
                    for (std::size_t d = 0; d < D; ++d) {
                        z += wj[d] * x[d];
                    }
                }
                if (z > t.max_pre[f]) {
                    t.max_pre[f] = z;
                    t.argmax[f] = p;
                }
            }
            if (has_padding_window && b > t.max_pre[f]) {
                t.max_pre[f] = b;
                t.argmax[f] = cnn_trace::padding_window;
            }
            t.pooled[f] = std::max(0.0, t.max_pre[f]);
        }

        t.dense_pre.assign(H, 0.0);
        t.hidden.assign(H, 0.0);
        for (std::size_t h = 0; h < H; ++h) {
            double z = P[dense1_b() + h];
            double const* w = P + dense1_w() + h * F;
            for (std::size_t f = 0; f < F; ++f) {
                z += w[f] * t.pooled[f];
            }
            t.dense_pre[h] = z;
            t.hidden[h] = std::max(0.0, z);
        }

        t.logits.assign(L, 0.0);
        t.probabilities.assign(L, 0.0);
        for (std::size_t l = 0; l < L; ++l) {
            double z = P[dense2_b() + l];
            double const* w = P + dense2_w() + l * H;
            for (std::size_t h = 0; h < H; ++h) {
                z += w[h] * t.hidden[h];
            }
            t.logits[l] = z;
            t.probabilities[l] = sigmoid(z);
        }
        return t;
    }

    [[nodiscard]] cnn_output forward(encoded_sequence const& seq) const
    {
        auto t = trace(seq);
        return {std::move(t.probabilities), std::move(t.hidden)};
    }

    [[nodiscard]] label_probabilities forward_labels(encoded_sequence const& seq) const
    {
        auto out = forward(seq);
        label_probabilities probs;
        for (std::size_t l = 0; l < label_count(); ++l) {
            probs[m_labels[l]] = out.probabilities[l];
        }
        return probs;
    }

    /// Adds d(multilabel loss)/d(params) for one example into `grad`; returns the loss.
    double accumulate_gradient(encoded_sequence const& seq, std::span<double const> truth, std::span<double> grad) const
    {
        auto t = trace(seq);
        auto const F = m_shape.filter_count;
        auto const k = m_shape.filter_size;
        auto const D = m_shape.embedding_dim;
        auto const H = m_shape.dense_size;
        auto const L = label_count();
        double const* P = m_params.data();

        double loss = 0.0;
        std::vector<double> dz2(L);
        for (std::size_t l = 0; l < L; ++l) {
            // Logit form of the clamped loss: softplus(z) - y z.
            double z = t.logits[l];
            loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - truth[l] * z;
            dz2[l] = (t.probabilities[l] - truth[l]) / static_cast<double>(L);
        }
        loss /= static_cast<double>(L);

        std::vector<double> dh(H, 0.0);
        for (std::size_t l = 0; l < L; ++l) {
            double* gw = grad.data() + dense2_w() + l * H;
            double const* w = P + dense2_w() + l * H;
            for (std::size_t h = 0; h < H; ++h) {
                gw[h] += dz2[l] * t.hidden[h];
                dh[h] += w[h] * dz2[l];
            }
            grad[dense2_b() + l] += dz2[l];
        }

        std::vector<double> dpooled(F, 0.0);
        for (std::size_t h = 0; h < H; ++h) {
            if (t.dense_pre[h] <= 0) {
                continue;
            }
            double dz1 = dh[h];
            double* gw = grad.data() + dense1_w() + h * F;
            double const* w = P + dense1_w() + h * F;
            for (std::size_t f = 0; f < F; ++f) {
                gw[f] += dz1 * t.pooled[f];
                dpooled[f] += w[f] * dz1;
            }
            grad[dense1_b() + h] += dz1;
        }

        for (std::size_t f = 0; f < F; ++f) {
            if (t.max_pre[f] <= 0 || dpooled[f] == 0.0) {
                continue;
            }
            grad[conv_b() + f] += dpooled[f];
            if (t.argmax[f] == cnn_trace::padding_window) {
                continue;
            }
            std::size_t const p = t.argmax[f];
            double* gw = grad.data() + conv_w() + f * k * D;
            for (std::size_t j = 0; j < k && p + j < seq.length; ++j) {
                double const* x = seq.rows.data() + (p + j) * D;
                for (std::size_t d = 0; d < D; ++d) {
                    gw[j * D + d] += dpooled[f] * x[d];
                }
            }
        }
        return loss;
    }

    [[nodiscard]] std::vector<double> truth_vector(std::set<std::string> const& labels) const
    {
        std::vector<double> y(label_count(), 0.0);
        for (auto const& l : labels) {
            auto it = std::find(m_labels.begin(), m_labels.end(), l);
            if (it == m_labels.end()) {
                throw unknown_label_error({l});
            }
            y[static_cast<std::size_t>(it - m_labels.begin())] = 1.0;
        }
        return y;
    }

  private:
    void check_input(encoded_sequence const& seq) const
    {
        if (seq.dim != m_shape.embedding_dim) {
            throw error("cnn_classifier: embedding dimension mismatch");
        }
        if (seq.length > m_shape.max_len) {
            throw error("cnn_classifier: sequence longer than max_len");
        }
    }

    void initialize(std::uint64_t seed)
    {
        std::mt19937_64 gen(seed);
        auto fill = [&](std::size_t offset, std::size_t count, double fan_in, double fan_out) {
            double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (std::size_t i = 0; i < count; ++i) {
                m_params[offset + i] = detail::uniform_real(gen, -limit, limit);
            }
        };
        auto const F = m_shape.filter_count;
        auto const H = m_shape.dense_size;
        fill(conv_w(), F * window_width(), static_cast<double>(window_width()), static_cast<double>(F));
        fill(dense1_w(), H * F, static_cast<double>(F), static_cast<double>(H));
        fill(dense2_w(), label_count() * H, static_cast<double>(H), static_cast<double>(label_count()));
        // Small positive biases keep ReLUs alive at the start.
        for (std::size_t i = 0; i < H; ++i) {
            m_params[dense1_b() + i] = 0.01;
        }
    }

    cnn_shape m_shape;
    std::vector<std::string> m_labels;
    std::vector<double> m_params;
    std::uint64_t m_seed = 1;
    std::uint64_t m_embedding_fingerprint = 0;
    bool m_trained = false;
};

inline cnn_output forward(cnn_classifier const& m, encoded_sequence const& seq) { return m.forward(seq); }

// ---------------------------------------------------------------------------
// Training

struct adam_config {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct cnn_train_config {
    std::size_t epochs = 10;
    std::size_t batch_size = 40;
    adam_config adam;
    std::uint64_t seed = 1;
};

struct training_example {
    encoded_sequence input;
    std::set<std::string> labels;
};

struct cnn_train_result {
    std::vector<double> epoch_loss;
};

/// Mini-batch Adam over the mean multi-label loss. Only the classifier's own
/// parameters change; the embedding is never touched. Deterministic per seed.
inline cnn_train_result train(cnn_classifier& model, std::vector<training_example> const& data,
                              cnn_train_config const& cfg)
{
    if (data.empty()) {
        throw error("train: empty dataset");
    }
    std::vector<std::vector<double>> truths;
    truths.reserve(data.size());
    for (auto const& ex : data) {
        truths.push_back(model.truth_vector(ex.labels));  // unknown labels throw before any update
    }
    cnn_train_result result;
    if (cfg.epochs == 0) {
        return result;
    }
    auto const n = model.param_count();
    std::vector<double> grad(n);
    std::vector<double> m1(n, 0.0);
    std::vector<double> m2(n, 0.0);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 gen(cfg.seed);
    std::size_t step = 0;
    auto const batch = std::max<std::size_t>(1, cfg.batch_size);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        detail::shuffle(order, gen);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::size_t const end = std::min(order.size(), start + batch);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t i = start; i < end; ++i) {
                loss_sum += model.accumulate_gradient(data[order[i]].input, truths[order[i]], grad);
            }
            double const scale = 1.0 / static_cast<double>(end - start);
            ++step;
            double const c1 = 1.0 - std::pow(cfg.adam.beta1, static_cast<double>(step));
            double const c2 = 1.0 - std::pow(cfg.adam.beta2, static_cast<double>(step));
            auto& params = model.params();
            for (std::size_t i = 0; i < n; ++i) {
                double g = grad[i] * scale;
                m1[i] = cfg.adam.beta1 * m1[i] + (1.0 - cfg.adam.beta1) * g;
                m2[i] = cfg.adam.beta2 * m2[i] + (1.0 - cfg.adam.beta2) * g * g;
                params[i] -= cfg.adam.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam.epsilon);
            }
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(data.size()));
    }
    model.mark_trained(true);
    return result;
}

// ---------------------------------------------------------------------------
// Gradient check

struct gradient_check_report {
    std::size_t checked = 0;
    /// Parameters whose perturbation crossed a ReLU or max-pool kink.
    std::vector<std::size_t> non_differentiable;
    std::vector<double> relative_error;  // per parameter; NaN when flagged
    double max_relative_error = 0.0;
    bool passed = true;
    /// The frozen embedding never appears in this report.
    static constexpr bool embedding_excluded = true;
};

/// Central differences (step h) of multilabel_loss against the analytic
/// gradient for every trainable parameter.
inline gradient_check_report gradient_check(cnn_classifier const& model, training_example const& ex,
                                            double tolerance = 1e-4, double h = 1e-4)
{
    auto truth = model.truth_vector(ex.labels);
    std::vector<double> analytic(model.param_count(), 0.0);
    model.accumulate_gradient(ex.input, truth, analytic);
    auto const base_pattern = model.trace(ex.input).pattern();

    gradient_check_report report;
    report.relative_error.assign(model.param_count(), 0.0);
    cnn_classifier probe = model;
    for (std::size_t i = 0; i < model.param_count(); ++i) {
        double const original = probe.params()[i];
        probe.params()[i] = original + h;
        auto up = probe.trace(ex.input);
        probe.params()[i] = original - h;
        auto down = probe.trace(ex.input);
        probe.params()[i] = original;
        ++report.checked;
        if (up.pattern() != base_pattern || down.pattern() != base_pattern) {
            report.non_differentiable.push_back(i);
            report.relative_error[i] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        double numeric = (multilabel_loss(up.probabilities, truth) - multilabel_loss(down.probabilities, truth)) / (2 * h);
        double denom = std::max(std::abs(numeric), std::abs(analytic[i]));
        double rel = denom < 1e-10 ? 0.0 : std::abs(numeric - analytic[i]) / denom;
        report.relative_error[i] = rel;
        report.max_relative_error = std::max(report.max_relative_error, rel);
    }
    report.passed = report.max_relative_error < tolerance;
    return report;
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {
inline constexpr std::string_view cnn_magic = "PLCNN001";
inline constexpr std::uint32_t cnn_version = 1;
}  // namespace detail

inline std::string serialize_classifier(cnn_classifier const& m)
{
    detail::byte_writer w;
    w.put_raw(detail::cnn_magic);
    w.put<std::uint32_t>(detail::cnn_version);
    auto const& s = m.shape();
    for (auto v : {s.embedding_dim, s.filter_count, s.filter_size, s.dense_size, s.max_len}) {
        w.put<std::uint64_t>(v);
    }
    w.put<std::uint64_t>(m.seed());
    w.put<std::uint64_t>(m.embedding_fingerprint());
    w.put<std::uint8_t>(m.trained() ? 1 : 0);
    w.put<std::uint64_t>(m.label_ids().size());
    for (auto const& l : m.label_ids()) {
        w.put_string(l);
    }
    w.put_array(m.params());
    w.seal();
    return w.bytes();
}

/// `expected_fingerprint` != 0 rejects models trained on another embedding.
inline cnn_classifier deserialize_classifier(std::string_view bytes, std::uint64_t expected_fingerprint = 0)
{
    if (bytes.substr(0, detail::cnn_magic.size()) != detail::cnn_magic) {
        throw corruption_error("not a classifier file (bad magic)");
    }
    detail::byte_reader r(detail::verify_sealed(bytes));
    r.get_raw(detail::cnn_magic.size());
    auto version = r.get<std::uint32_t>();
    if (version != detail::cnn_version) {
        throw version_error("unsupported classifier version " + std::to_string(version));
    }
    cnn_shape s;
    s.embedding_dim = r.get<std::uint64_t>();
    s.filter_count = r.get<std::uint64_t>();
    s.filter_size = r.get<std::uint64_t>();
    s.dense_size = r.get<std::uint64_t>();
    s.max_len = r.get<std::uint64_t>();
    auto seed = r.get<std::uint64_t>();
    auto fp = r.get<std::uint64_t>();
    bool trained = r.get<std::uint8_t>() != 0;
    auto n = r.get<std::uint64_t>();
    std::vector<std::string> labels;
    for (std::uint64_t i = 0; i < n; ++i) {
        labels.push_back(r.get_string());
    }
    if (expected_fingerprint != 0 && fp != expected_fingerprint) {
        throw version_error("classifier was trained against a different embedding model");
    }
    cnn_classifier m(s, std::move(labels), seed, fp);
    auto params = r.get_array<double>();
    if (params.size() != m.param_count()) {
        throw corruption_error("classifier parameter count does not match shape");
    }
    m.params() = std::move(params);
    m.mark_trained(trained);
    return m;
}

}  // namespace policylens
