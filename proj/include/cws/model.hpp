#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cws/adam.hpp"
#include "cws/annotators.hpp"
#include "cws/error.hpp"
#include "cws/random.hpp"
#include "cws/tensor.hpp"
#include "cws/vocabulary.hpp"

namespace cws {

enum class TaskKind { ranking, sentiment };

inline std::string to_string(TaskKind task)
{
    return task == TaskKind::ranking ? "ranking" : "sentiment";
}

/// Parameters are partitioned into three groups that strategies freeze or
/// update independently.
enum class ParamGroup { representation, supervision, confidence };

inline constexpr std::array all_groups{ParamGroup::representation, ParamGroup::supervision,
                                       ParamGroup::confidence};

/// A (query, doc+, doc-) triple of token ids.
struct RankInstance {
    std::vector<TokenId> query;
    std::vector<TokenId> doc_pos;
    std::vector<TokenId> doc_neg;
};

/// Sentence token ids, padded to at least the conv window.
struct SentenceInstance {
    std::vector<TokenId> tokens;
};

/// Weak or true label: width 1 (pairwise probability) or 3 (class distribution).
using Label = Vector;

struct ModelDims {
    std::size_t vocab_size = 0;
    std::size_t embedding_dim = 32;
    std::size_t filter_count = 16;
    std::size_t window = 3;
    std::vector<std::size_t> supervision_hidden{32, 32};
    std::vector<std::size_t> confidence_hidden{64, 64};
    TokenId unk_index = Vocabulary::unk;
    std::optional<TokenId> pad_index = Vocabulary::pad;
    /// Output units of the confidence head: 1 for the confidence network,
    /// the label width when the head is used as a label generator.
    std::size_t head_outputs = 1;
};

struct ModelParameters {
    TaskKind task = TaskKind::ranking;
    EmbeddingTable embedding;
    TermWeights term_weights;  // ranking only
    ConvBank conv;             // sentiment only
    std::vector<DenseLayer> supervision;
    std::vector<DenseLayer> confidence;
    AdamState representation_state;
    AdamState supervision_state;
    AdamState confidence_state;

    [[nodiscard]] std::size_t label_width() const noexcept
    {
        return task == TaskKind::ranking ? 1 : sentiment_classes;
    }

    [[nodiscard]] std::size_t representation_width() const noexcept
    {
        return task == TaskKind::ranking ? 3 * embedding.dim() : conv.filter_count();
    }

    std::vector<std::span<double>> tensors(ParamGroup group)
    {
        std::vector<std::span<double>> out;
        auto add_dense = [&out](std::vector<DenseLayer>& layers) {
            for (auto& l : layers) {
                out.emplace_back(l.weights.values());
                out.emplace_back(l.bias);
            }
        };
        switch (group) {
        case ParamGroup::representation:
            out.emplace_back(embedding.vectors.values());
            if (task == TaskKind::ranking) {
                out.emplace_back(term_weights.weights);
            } else {
                for (auto& f : conv.filters) {
                    out.emplace_back(f.values());
                }
                out.emplace_back(conv.bias);
            }
            break;
        case ParamGroup::supervision: add_dense(supervision); break;
        case ParamGroup::confidence: add_dense(confidence); break;
        }
        return out;
    }

    [[nodiscard]] std::vector<std::span<double const>> tensors(ParamGroup group) const
    {
        auto spans = const_cast<ModelParameters*>(this)->tensors(group);
        return {spans.begin(), spans.end()};
    }

    AdamState& state(ParamGroup group)
    {
        switch (group) {
        case ParamGroup::representation: return representation_state;
        case ParamGroup::supervision: return supervision_state;
        case ParamGroup::confidence: return confidence_state;
        }
        return representation_state;
    }

    /// Same shapes, all values zero, fresh optimizer state: a gradient buffer.
    [[nodiscard]] ModelParameters zeros_like() const
    {
        ModelParameters out;
        out.task = task;
        out.embedding = embedding;
        out.term_weights = term_weights;
        out.conv = conv;
        out.supervision = supervision;
        out.confidence = confidence;
        for (auto g : all_groups) {
            for (auto t : out.tensors(g)) {
                std::fill(t.begin(), t.end(), 0.0);
            }
        }
        return out;
    }
};

/// Bit-exact comparison of one parameter group.
inline bool same_values(ModelParameters const& a, ModelParameters const& b, ParamGroup group)
{
    auto const ta = a.tensors(group);
    auto const tb = b.tensors(group);
    if (ta.size() != tb.size()) {
        return false;
    }
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (!std::equal(ta[i].begin(), ta[i].end(), tb[i].begin(), tb[i].end())) {
            return false;
        }
    }
    return true;
}

inline double squared_norm(ModelParameters const& grads, std::span<ParamGroup const> groups)
{
    double total = 0.0;
    for (auto g : groups) {
        for (auto t : grads.tensors(g)) {
            for (double v : t) {
                total += v * v;
            }
        }
    }
    return total;
}

/// Whitespace-separated `word v1 ... vm` lines.
inline std::unordered_map<std::string, Vector> load_embeddings(std::string const& path,
                                                               std::size_t dim)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open embedding file '" + path + "'");
    }
    std::unordered_map<std::string, Vector> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::istringstream ss(line);
        std::string word;
        if (!(ss >> word)) {
            continue;
        }
        Vector values;
        std::string tok;
        while (ss >> tok) {
            try {
                values.push_back(std::stod(tok));
            } catch (std::exception const&) {
                throw ParseError(path, number, "bad number '" + tok + "'");
            }
        }
        if (values.size() != dim) {
            throw ValidationError(path + ":" + std::to_string(number) + ": embedding has "
                                  + std::to_string(values.size()) + " dimensions, expected "
                                  + std::to_string(dim));
        }
        out.insert_or_assign(word, std::move(values));
    }
    return out;
}

struct InitSources {
    /// Term list indexed by token id; needed to match pretrained vectors.
    std::vector<std::string> const* terms = nullptr;
    std::unordered_map<std::string, Vector> const* pretrained = nullptr;
    /// Term weights start at idf values over this corpus when set.
    InvertedIndex const* idf_corpus = nullptr;
};

inline ModelParameters init_parameters(TaskKind task,
                                       ModelDims const& dims,
                                       std::uint64_t seed,
                                       InitSources const& sources = {})
{
    if (dims.vocab_size == 0 || dims.embedding_dim == 0) {
        throw ConfigError("init_parameters: vocab_size and embedding_dim must be positive");
    }
    if (dims.unk_index >= dims.vocab_size
        || (dims.pad_index && *dims.pad_index >= dims.vocab_size)) {
        throw ConfigError("init_parameters: reserved ids outside vocabulary");
    }
    Rng rng(seed);
    ModelParameters p;
    p.task = task;
    p.embedding.unk_index = dims.unk_index;
    p.embedding.pad_index = task == TaskKind::sentiment ? dims.pad_index : std::nullopt;
    p.embedding.vectors = Matrix(dims.vocab_size, dims.embedding_dim);
    for (auto& v : p.embedding.vectors.values()) {
        v = rng.uniform(-0.05, 0.05);
    }
    if (sources.pretrained != nullptr) {
        if (sources.terms == nullptr || sources.terms->size() != dims.vocab_size) {
            throw ConfigError("init_parameters: pretrained vectors need the vocabulary term list");
        }
        for (std::size_t id = 0; id < dims.vocab_size; ++id) {
            auto it = sources.pretrained->find((*sources.terms)[id]);
            if (it == sources.pretrained->end()) {
                continue;
            }
            if (it->second.size() != dims.embedding_dim) {
                throw ValidationError("pretrained vector for '" + it->first + "' has wrong dimension");
            }
            std::copy(it->second.begin(), it->second.end(), p.embedding.vectors.row(id).begin());
        }
    }
    if (p.embedding.pad_index) {
        auto row = p.embedding.vectors.row(*p.embedding.pad_index);
        std::fill(row.begin(), row.end(), 0.0);
    }

    std::size_t rep_width = 0;
    if (task == TaskKind::ranking) {
        p.term_weights.weights.assign(dims.vocab_size, 0.0);
        if (sources.idf_corpus != nullptr) {
            for (std::size_t id = 0; id < dims.vocab_size; ++id) {
                p.term_weights.weights[id] =
                    bm25_idf(sources.idf_corpus->doc_count,
                             sources.idf_corpus->df(static_cast<TokenId>(id)));
            }
        }
        rep_width = 3 * dims.embedding_dim;
    } else {
        p.conv = make_conv_bank(dims.embedding_dim, dims.filter_count, dims.window, rng);
        rep_width = dims.filter_count;
    }

    std::size_t in = rep_width;
    for (auto width : dims.supervision_hidden) {
        p.supervision.push_back(make_dense(in, width, Activation::relu, rng));
        in = width;
    }
    p.supervision.push_back(make_dense(in, p.label_width(),
                                       task == TaskKind::ranking ? Activation::sigmoid
                                                                 : Activation::softmax,
                                       rng));

    in = rep_width + p.label_width();
    for (auto width : dims.confidence_hidden) {
        p.confidence.push_back(make_dense(in, width, Activation::relu, rng));
        in = width;
    }
    Activation const head = dims.head_outputs == 1 ? Activation::sigmoid : Activation::softmax;
    p.confidence.push_back(make_dense(in, dims.head_outputs, head, rng));
    return p;
}

/// Forward-pass settings: dropout is active only in train mode.
struct Pass {
    Mode mode = Mode::eval;
    double dropout = 0.0;
    Rng* rng = nullptr;
};

struct RepresentationCache {
    // ranking: one entry per text (query, doc+, doc-)
    std::array<Matrix, 3> embeds;
    std::array<Vector, 3> weights;
    // sentiment
    Matrix sentence;
    ConvCache conv;
    Vector mask;
};

inline Vector text_weights(ModelParameters const& p, std::span<TokenId const> tokens)
{
    Vector w(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= p.term_weights.weights.size()) {
            throw LookupError("term weight lookup: token id out of range");
        }
        w[i] = p.term_weights.weights[tokens[i]];
    }
    return w;
}

/// Weighted composition of one text (query or document).
inline Vector compose_text(ModelParameters const& p, std::span<TokenId const> tokens)
{
    if (tokens.empty()) {
        throw DegenerateInputError("compose_text: empty text");
    }
    return term_weighted_composition(embedding_lookup(p.embedding, tokens), text_weights(p, tokens));
}

/// [compose(q) || compose(d+) || compose(d-)], width 3m.
inline Vector represent(ModelParameters const& p,
                        RankInstance const& x,
                        Pass const& /*pass*/ = {},
                        RepresentationCache* cache = nullptr)
{
    std::array<std::vector<TokenId> const*, 3> texts{&x.query, &x.doc_pos, &x.doc_neg};
    std::size_t const m = p.embedding.dim();
    Vector out(3 * m);
    for (std::size_t b = 0; b < 3; ++b) {
        if (texts[b]->empty()) {
            throw DegenerateInputError("rank instance has an empty query or document");
        }
        Matrix embeds = embedding_lookup(p.embedding, *texts[b]);
        Vector weights = text_weights(p, *texts[b]);
        Vector block = term_weighted_composition(embeds, weights);
        std::copy(block.begin(), block.end(), out.begin() + static_cast<std::ptrdiff_t>(b * m));
        if (cache != nullptr) {
            cache->embeds[b] = std::move(embeds);
            cache->weights[b] = std::move(weights);
        }
    }
    return out;
}

inline void represent_backward(ModelParameters const& p,
                               RankInstance const& x,
                               RepresentationCache const& cache,
                               std::span<double const> grad,
                               ModelParameters& grads)
{
    std::array<std::vector<TokenId> const*, 3> texts{&x.query, &x.doc_pos, &x.doc_neg};
    std::size_t const m = p.embedding.dim();
    for (std::size_t b = 0; b < 3; ++b) {
        auto const block = grad.subspan(b * m, m);
        auto const g = term_weighted_composition_backward(cache.embeds[b], cache.weights[b], block);
        embedding_backward(p.embedding, *texts[b], g.embeds, grads.embedding.vectors);
        auto const& tokens = *texts[b];
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            grads.term_weights.weights[tokens[i]] += g.weights[i];
        }
    }
}

/// embedding lookup -> conv + relu + max pool -> dropout.
inline Vector represent(ModelParameters const& p,
                        SentenceInstance const& x,
                        Pass const& pass = {},
                        RepresentationCache* cache = nullptr)
{
    RepresentationCache local;
    RepresentationCache& c = cache != nullptr ? *cache : local;
    c.sentence = embedding_lookup(p.embedding, x.tokens);
    Vector pooled = conv_encode(p.conv, c.sentence, &c.conv);
    c.mask = dropout_mask(pooled.size(), pass.dropout, pass.mode, pass.rng);
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        pooled[i] *= c.mask[i];
    }
    return pooled;
}

inline void represent_backward(ModelParameters const& p,
                               SentenceInstance const& x,
                               RepresentationCache const& cache,
                               std::span<double const> grad,
                               ModelParameters& grads)
{
    Vector g(grad.begin(), grad.end());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] *= cache.mask[i];
    }
    Matrix const grad_sentence = conv_backward(p.conv, cache.sentence, cache.conv, g, grads.conv);
    embedding_backward(p.embedding, x.tokens, grad_sentence, grads.embedding.vectors);
}

inline Vector sentence_representation(ModelParameters const& p,
                                      SentenceInstance const& x,
                                      Pass const& pass = {})
{
    return represent(p, x, pass);
}

inline Vector rank_representation(ModelParameters const& p, RankInstance const& x)
{
    return represent(p, x);
}

struct MlpCache {
    std::vector<Vector> inputs;  // input seen by each layer (after dropout)
    std::vector<Vector> pre;
    std::vector<Vector> masks;   // dropout multipliers on each hidden output
    Vector output;
};

/// Hidden layers get dropout on their outputs in train mode; the last layer
/// applies its own activation.
inline Vector mlp_forward(std::span<DenseLayer const> layers,
                          std::span<double const> input,
                          Pass const& pass,
                          MlpCache* cache = nullptr)
{
    if (layers.empty()) {
        throw ConfigError("mlp_forward: no layers");
    }
    MlpCache local;
    MlpCache& c = cache != nullptr ? *cache : local;
    c.inputs.clear();
    c.pre.clear();
    c.masks.clear();
    Vector x(input.begin(), input.end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        c.inputs.push_back(x);
        Vector pre = dense_preactivation(layers[l], x);
        Vector out = activate(layers[l].activation, pre);
        if (l + 1 < layers.size()) {
            Vector mask = dropout_mask(out.size(), pass.dropout, pass.mode, pass.rng);
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] *= mask[i];
            }
            c.masks.push_back(std::move(mask));
        }
        c.pre.push_back(std::move(pre));
        x = std::move(out);
    }
    c.output = x;
    return x;
}

/// `grad_last_pre` is the gradient w.r.t. the last layer's pre-activation
/// (p - t for sigmoid/softmax with cross-entropy). Returns the input gradient.
inline Vector mlp_backward(std::span<DenseLayer const> layers,
                           MlpCache const& cache,
                           std::span<double const> grad_last_pre,
                           std::span<DenseLayer> grads)
{
    Vector grad_pre(grad_last_pre.begin(), grad_last_pre.end());
    for (std::size_t l = layers.size(); l-- > 0;) {
        Vector grad_in = dense_backward(layers[l], cache.inputs[l], grad_pre, grads[l]);
        if (l == 0) {
            return grad_in;
        }
        auto const& below = layers[l - 1];
        auto const& mask = cache.masks[l - 1];
        for (std::size_t i = 0; i < grad_in.size(); ++i) {
            grad_in[i] *= mask[i];
        }
        Vector const out = activate(below.activation, cache.pre[l - 1]);
        grad_pre = activation_backward(below.activation, cache.pre[l - 1], out, grad_in);
    }
    return {};
}

/// Target-network prediction: a probability (ranking) or class distribution.
inline Vector supervision_forward(ModelParameters const& p,
                                  std::span<double const> representation,
                                  Pass const& pass = {},
                                  MlpCache* cache = nullptr)
{
    return mlp_forward(p.supervision, representation, pass, cache);
}

inline Vector concat(std::span<double const> a, std::span<double const> b)
{
    Vector out(a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

/// Confidence head on representation || weak label; a probability.
inline double confidence_forward(ModelParameters const& p,
                                 std::span<double const> representation,
                                 std::span<double const> weak_label,
                                 Pass const& pass = {},
                                 MlpCache* cache = nullptr)
{
    if (weak_label.size() != p.label_width()) {
        throw ShapeError("confidence_forward: weak label width " + std::to_string(weak_label.size())
                         + ", expected " + std::to_string(p.label_width()));
    }
    return mlp_forward(p.confidence, concat(representation, weak_label), pass, cache).front();
}

/// Cross-entropy of a prediction against a label of the task's width.
inline double task_loss(TaskKind task, std::span<double const> target, std::span<double const> prediction)
{
    if (task == TaskKind::ranking) {
        return binary_cross_entropy(target[0], prediction[0]);
    }
    return categorical_cross_entropy(target, prediction);
}

inline Vector output_gradient(std::span<double const> target, std::span<double const> prediction, double scale)
{
    Vector g(prediction.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = (prediction[i] - target[i]) * scale;
    }
    return g;
}

/// Forward + backward of the task loss for one instance. Adds
/// `weight * dL/dtheta` for the representation and supervision groups into
/// `grads` (when given) and returns the unweighted loss.
template <typename Instance>
double target_loss_backward(ModelParameters const& p,
                            Instance const& x,
                            Label const& target,
                            double weight,
                            Pass const& pass,
                            ModelParameters* grads)
{
    RepresentationCache rep_cache;
    MlpCache mlp_cache;
    Vector const rep = represent(p, x, pass, &rep_cache);
    Vector const pred = supervision_forward(p, rep, pass, &mlp_cache);
    double const loss = task_loss(p.task, target, pred);
    if (grads != nullptr) {
        Vector const g_out = output_gradient(target, pred, weight);
        Vector const g_rep = mlp_backward(p.supervision, mlp_cache, g_out, grads->supervision);
        represent_backward(p, x, rep_cache, g_rep, *grads);
    }
    return loss;
}

/// As target_loss_backward, for the confidence loss BCE(c_j, c~_j); touches
/// the representation and confidence groups.
template <typename Instance>
double confidence_loss_backward(ModelParameters const& p,
                                Instance const& x,
                                Label const& weak,
                                double target,
                                double weight,
                                Pass const& pass,
                                ModelParameters* grads)
{
    RepresentationCache rep_cache;
    MlpCache mlp_cache;
    Vector const rep = represent(p, x, pass, &rep_cache);
    double const predicted = confidence_forward(p, rep, weak, pass, &mlp_cache);
    double const loss = binary_cross_entropy(target, predicted);
    if (grads != nullptr) {
        Vector const g_out{(predicted - target) * weight};
        Vector const g_in = mlp_backward(p.confidence, mlp_cache, g_out, grads->confidence);
        represent_backward(p, x, rep_cache, std::span<double const>(g_in).first(rep.size()), *grads);
    }
    return loss;
}

inline std::vector<TokenId> pad_tokens(std::vector<TokenId> tokens, std::size_t window, TokenId pad)
{
    while (tokens.size() < window) {
        tokens.push_back(pad);
    }
    return tokens;
}

}  // namespace cws
