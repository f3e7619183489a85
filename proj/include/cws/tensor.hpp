#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cws/error.hpp"
#include "cws/random.hpp"

namespace cws {

using Vector = std::vector<double>;
using TokenId = std::uint32_t;

/// Dense row-major matrix of doubles.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : m_rows(rows), m_cols(cols), m_values(rows * cols, fill)
    {}

    [[nodiscard]] std::size_t rows() const noexcept { return m_rows; }
    [[nodiscard]] std::size_t cols() const noexcept { return m_cols; }
    [[nodiscard]] std::size_t size() const noexcept { return m_values.size(); }

    double& operator()(std::size_t r, std::size_t c) { return m_values[r * m_cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return m_values[r * m_cols + c]; }

    std::span<double> row(std::size_t r) { return {m_values.data() + r * m_cols, m_cols}; }
    [[nodiscard]] std::span<double const> row(std::size_t r) const
    {
        return {m_values.data() + r * m_cols, m_cols};
    }

    std::span<double> values() noexcept { return m_values; }
    [[nodiscard]] std::span<double const> values() const noexcept { return m_values; }

    [[nodiscard]] Vector column(std::size_t c) const
    {
        Vector out(m_rows);
        for (std::size_t r = 0; r < m_rows; ++r) {
            out[r] = (*this)(r, c);
        }
        return out;
    }

    bool operator==(Matrix const&) const = default;

  private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_values;
};

enum class Activation { relu, sigmoid, softmax, identity };

enum class Mode { train, eval };

inline double dot(std::span<double const> a, std::span<double const> b)
{
    if (a.size() != b.size()) {
        throw ShapeError("dot: length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

inline double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double const e = std::exp(x);
    return e / (1.0 + e);
}

/// Max-shifted softmax.
inline Vector softmax(std::span<double const> logits)
{
    if (logits.empty()) {
        throw DegenerateInputError("softmax: empty input");
    }
    double const top = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - top);
        total += out[i];
    }
    for (auto& v : out) {
        v /= total;
    }
    return out;
}

inline Vector activate(Activation act, std::span<double const> pre)
{
    switch (act) {
    case Activation::relu: {
        Vector out(pre.begin(), pre.end());
        for (auto& v : out) {
            v = v > 0.0 ? v : 0.0;
        }
        return out;
    }
    case Activation::sigmoid: {
        Vector out(pre.size());
        std::transform(pre.begin(), pre.end(), out.begin(), [](double v) { return sigmoid(v); });
        return out;
    }
    case Activation::softmax: return softmax(pre);
    case Activation::identity: return {pre.begin(), pre.end()};
    }
    return {};
}

/// Gradient w.r.t. the pre-activation given the gradient w.r.t. the output.
/// relu'(0) is taken as 0.
inline Vector activation_backward(Activation act,
                                  std::span<double const> pre,
                                  std::span<double const> out,
                                  std::span<double const> grad_out)
{
    Vector grad(pre.size());
    switch (act) {
    case Activation::relu:
        for (std::size_t i = 0; i < pre.size(); ++i) {
            grad[i] = pre[i] > 0.0 ? grad_out[i] : 0.0;
        }
        break;
    case Activation::sigmoid:
        for (std::size_t i = 0; i < pre.size(); ++i) {
            grad[i] = grad_out[i] * out[i] * (1.0 - out[i]);
        }
        break;
    case Activation::softmax: {
        double const inner = dot(grad_out, out);
        for (std::size_t i = 0; i < pre.size(); ++i) {
            grad[i] = out[i] * (grad_out[i] - inner);
        }
        break;
    }
    case Activation::identity: std::copy(grad_out.begin(), grad_out.end(), grad.begin()); break;
    }
    return grad;
}

/// Fully connected layer: activation(W x + b), W is out x in.
struct DenseLayer {
    Matrix weights;
    Vector bias;
    Activation activation = Activation::identity;

    [[nodiscard]] std::size_t inputs() const noexcept { return weights.cols(); }
    [[nodiscard]] std::size_t outputs() const noexcept { return weights.rows(); }

    bool operator==(DenseLayer const&) const = default;
};

inline void validate(DenseLayer const& layer)
{
    if (layer.bias.size() != layer.weights.rows()) {
        throw ShapeError("dense layer: bias length " + std::to_string(layer.bias.size())
                         + " does not match " + std::to_string(layer.weights.rows()) + " rows");
    }
}

inline Vector dense_preactivation(DenseLayer const& layer, std::span<double const> input)
{
    validate(layer);
    if (input.size() != layer.inputs()) {
        throw ShapeError("dense layer: input length " + std::to_string(input.size())
                         + ", expected " + std::to_string(layer.inputs()));
    }
    Vector pre(layer.bias);
    for (std::size_t r = 0; r < layer.outputs(); ++r) {
        auto const w = layer.weights.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < input.size(); ++c) {
            acc += w[c] * input[c];
        }
        pre[r] += acc;
    }
    return pre;
}

inline Vector dense_apply(DenseLayer const& layer, std::span<double const> input)
{
    return activate(layer.activation, dense_preactivation(layer, input));
}

/// Backward through W x + b. Accumulates into `grad` (same shapes as `layer`)
/// and returns the gradient w.r.t. `input`.
inline Vector dense_backward(DenseLayer const& layer,
                             std::span<double const> input,
                             std::span<double const> grad_pre,
                             DenseLayer& grad)
{
    Vector grad_input(layer.inputs(), 0.0);
    for (std::size_t r = 0; r < layer.outputs(); ++r) {
        double const g = grad_pre[r];
        if (g == 0.0) {
            continue;
        }
        grad.bias[r] += g;
        auto const w = layer.weights.row(r);
        auto gw = grad.weights.row(r);
        for (std::size_t c = 0; c < input.size(); ++c) {
            gw[c] += g * input[c];
            grad_input[c] += g * w[c];
        }
    }
    return grad_input;
}

/// Glorot-uniform weights, zero bias.
inline DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng)
{
    DenseLayer layer{Matrix(out, in), Vector(out, 0.0), act};
    double const limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& w : layer.weights.values()) {
        w = rng.uniform(-limit, limit);
    }
    return layer;
}

struct EmbeddingTable {
    Matrix vectors;  // vocab_size x dim, one row per term
    TokenId unk_index = 0;
    /// Row kept at zero and never updated, when set.
    std::optional<TokenId> pad_index;

    [[nodiscard]] std::size_t vocab_size() const noexcept { return vectors.rows(); }
    [[nodiscard]] std::size_t dim() const noexcept { return vectors.cols(); }

    bool operator==(EmbeddingTable const&) const = default;
};

struct TermWeights {
    Vector weights;

    bool operator==(TermWeights const&) const = default;
};

/// f filters of shape m x h over a sliding window of h columns.
struct ConvBank {
    std::vector<Matrix> filters;
    Vector bias;

    [[nodiscard]] std::size_t filter_count() const noexcept { return filters.size(); }
    [[nodiscard]] std::size_t window() const noexcept
    {
        return filters.empty() ? 0 : filters.front().cols();
    }
    [[nodiscard]] std::size_t dim() const noexcept
    {
        return filters.empty() ? 0 : filters.front().rows();
    }

    bool operator==(ConvBank const&) const = default;
};

/// Columns are the embeddings of `tokens` (m x n).
inline Matrix embedding_lookup(EmbeddingTable const& table, std::span<TokenId const> tokens)
{
    if (tokens.empty()) {
        throw DegenerateInputError("embedding_lookup: empty token sequence");
    }
    Matrix out(table.dim(), tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= table.vocab_size()) {
            throw LookupError("embedding_lookup: token id " + std::to_string(tokens[i])
                              + " outside vocabulary of " + std::to_string(table.vocab_size()));
        }
        auto const e = table.vectors.row(tokens[i]);
        for (std::size_t k = 0; k < e.size(); ++k) {
            out(k, i) = e[k];
        }
    }
    return out;
}

/// Scatter-add of an m x n column gradient into the looked-up rows.
inline void embedding_backward(EmbeddingTable const& table,
                               std::span<TokenId const> tokens,
                               Matrix const& grad_columns,
                               Matrix& grad_vectors)
{
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (table.pad_index && tokens[i] == *table.pad_index) {
            continue;
        }
        auto row = grad_vectors.row(tokens[i]);
        for (std::size_t k = 0; k < row.size(); ++k) {
            row[k] += grad_columns(k, i);
        }
    }
}

/// Softmax-normalized weighted sum of the columns of `embeds`.
inline Vector term_weighted_composition(Matrix const& embeds, std::span<double const> weights)
{
    if (embeds.cols() == 0 || weights.size() != embeds.cols()) {
        throw ShapeError("composition: need one weight per column and at least one column");
    }
    Vector const alpha = softmax(weights);
    Vector out(embeds.rows(), 0.0);
    for (std::size_t r = 0; r < embeds.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < embeds.cols(); ++i) {
            acc += alpha[i] * embeds(r, i);
        }
        out[r] = acc;
    }
    return out;
}

struct CompositionGrad {
    Matrix embeds;
    Vector weights;
};

inline CompositionGrad term_weighted_composition_backward(Matrix const& embeds,
                                                          std::span<double const> weights,
                                                          std::span<double const> grad_out)
{
    Vector const alpha = softmax(weights);
    std::size_t const n = embeds.cols();
    CompositionGrad grad{Matrix(embeds.rows(), n), Vector(n, 0.0)};
    Vector projected(n, 0.0);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t r = 0; r < embeds.rows(); ++r) {
            acc += grad_out[r] * embeds(r, i);
            grad.embeds(r, i) = alpha[i] * grad_out[r];
        }
        projected[i] = acc;
        mean += alpha[i] * acc;
    }
    for (std::size_t i = 0; i < n; ++i) {
        grad.weights[i] = alpha[i] * (projected[i] - mean);
    }
    return grad;
}

/// Per-filter winning offset of the max pooling, kept for the backward pass.
struct ConvCache {
    std::vector<std::size_t> argmax;  // per filter, first maximizing offset
    Vector pooled_pre;                // per filter, max pre-activation including bias
};

inline Vector conv_encode(ConvBank const& bank, Matrix const& sentence, ConvCache* cache = nullptr)
{
    std::size_t const h = bank.window();
    if (bank.filter_count() == 0 || h == 0) {
        throw ConfigError("conv_encode: empty filter bank");
    }
    if (sentence.rows() != bank.dim()) {
        throw ShapeError("conv_encode: sentence has " + std::to_string(sentence.rows())
                         + " rows, filters expect " + std::to_string(bank.dim()));
    }
    if (sentence.cols() < h) {
        throw DegenerateInputError("conv_encode: sentence length " + std::to_string(sentence.cols())
                                   + " shorter than window " + std::to_string(h));
    }
    std::size_t const positions = sentence.cols() - h + 1;
    Vector pooled(bank.filter_count());
    if (cache != nullptr) {
        cache->argmax.assign(bank.filter_count(), 0);
        cache->pooled_pre.assign(bank.filter_count(), 0.0);
    }
    for (std::size_t k = 0; k < bank.filter_count(); ++k) {
        Matrix const& filter = bank.filters[k];
        double best = 0.0;
        std::size_t best_at = 0;
        for (std::size_t p = 0; p < positions; ++p) {
            double o = bank.bias[k];
            for (std::size_t r = 0; r < filter.rows(); ++r) {
                for (std::size_t c = 0; c < h; ++c) {
                    o += sentence(r, p + c) * filter(r, c);
                }
            }
            if (p == 0 || o > best) {
                best = o;
                best_at = p;
            }
        }
        pooled[k] = best > 0.0 ? best : 0.0;
        if (cache != nullptr) {
            cache->argmax[k] = best_at;
            cache->pooled_pre[k] = best;
        }
    }
    return pooled;
}

/// Backward of relu(max-over-offsets). Accumulates filter/bias gradients into
/// `grad` and returns the gradient w.r.t. the sentence matrix.
inline Matrix conv_backward(ConvBank const& bank,
                            Matrix const& sentence,
                            ConvCache const& cache,
                            std::span<double const> grad_pooled,
                            ConvBank& grad)
{
    Matrix grad_sentence(sentence.rows(), sentence.cols());
    for (std::size_t k = 0; k < bank.filter_count(); ++k) {
        if (cache.pooled_pre[k] <= 0.0 || grad_pooled[k] == 0.0) {
            continue;
        }
        double const g = grad_pooled[k];
        std::size_t const p = cache.argmax[k];
        Matrix const& filter = bank.filters[k];
        Matrix& gf = grad.filters[k];
        grad.bias[k] += g;
        for (std::size_t r = 0; r < filter.rows(); ++r) {
            for (std::size_t c = 0; c < filter.cols(); ++c) {
                gf(r, c) += g * sentence(r, p + c);
                grad_sentence(r, p + c) += g * filter(r, c);
            }
        }
    }
    return grad_sentence;
}

inline ConvBank make_conv_bank(std::size_t dim, std::size_t filters, std::size_t window, Rng& rng)
{
    if (window == 0 || filters == 0 || dim == 0) {
        throw ConfigError("conv bank needs window >= 1, filter_count >= 1 and dim >= 1");
    }
    ConvBank bank;
    std::size_t const fan = dim * window;
    double const limit = std::sqrt(6.0 / static_cast<double>(fan + fan));
    bank.filters.reserve(filters);
    for (std::size_t k = 0; k < filters; ++k) {
        Matrix f(dim, window);
        for (auto& v : f.values()) {
            v = rng.uniform(-limit, limit);
        }
        bank.filters.push_back(std::move(f));
    }
    bank.bias.assign(filters, 0.0);
    return bank;
}

/// Inverted dropout multipliers: 0 with probability `rate`, 1/(1-rate) otherwise.
/// Eval mode (or rate 0) yields all ones without touching `rng`.
inline Vector dropout_mask(std::size_t n, double rate, Mode mode, Rng* rng)
{
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    Vector mask(n, 1.0);
    if (mode == Mode::eval || rate == 0.0) {
        return mask;
    }
    if (rng == nullptr) {
        throw ConfigError("train-mode dropout needs a random generator");
    }
    double const keep = 1.0 / (1.0 - rate);
    for (auto& m : mask) {
        m = rng->uniform() < rate ? 0.0 : keep;
    }
    return mask;
}

inline Vector dropout_apply(std::span<double const> input, double rate, Mode mode, Rng* rng)
{
    Vector const mask = dropout_mask(input.size(), rate, mode, rng);
    Vector out(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        out[i] = input[i] * mask[i];
    }
    return out;
}

inline constexpr double probability_clamp = 1e-7;

inline double clamp_probability(double p)
{
    return std::clamp(p, probability_clamp, 1.0 - probability_clamp);
}

/// -t log p - (1-t) log(1-p). The gradient w.r.t. the pre-sigmoid logit is p - t.
inline double binary_cross_entropy(double target, double predicted)
{
    double const p = clamp_probability(predicted);
    return -target * std::log(p) - (1.0 - target) * std::log(1.0 - p);
}

inline void require_distribution(std::span<double const> d, char const* what)
{
    double const total = std::accumulate(d.begin(), d.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-6) {
        throw ValidationError(std::string(what) + " does not sum to 1 (sum "
                              + std::to_string(total) + ")");
    }
}

/// -sum_k t_k log p_k. The gradient w.r.t. pre-softmax logits is p - t.
inline double categorical_cross_entropy(std::span<double const> target,
                                        std::span<double const> predicted)
{
    if (target.size() != predicted.size()) {
        throw ShapeError("categorical_cross_entropy: length mismatch");
    }
    require_distribution(target, "target distribution");
    require_distribution(predicted, "predicted distribution");
    double loss = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
        if (target[k] != 0.0) {
            loss -= target[k] * std::log(clamp_probability(predicted[k]));
        }
    }
    return loss;
}

inline bool all_finite(std::span<double const> values)
{
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace cws
