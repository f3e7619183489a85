#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cws/gradcheck.hpp"
#include "cws/model.hpp"
#include "cws/random.hpp"
#include "cws/tensor.hpp"
#include "cws/training.hpp"

namespace cws {

/// Largest acceptable relative error.
inline constexpr double gradcheck_threshold = 1e-4;

struct GradcheckResult {
    std::string name;
    double max_error = 0.0;
};

namespace detail {

inline Vector random_values(std::size_t n, Rng& rng, double scale = 1.0)
{
    Vector v(n);
    for (auto& x : v) {
        x = rng.uniform(-scale, scale);
    }
    return v;
}

inline void randomize(std::span<double> values, Rng& rng, double scale)
{
    for (auto& v : values) {
        v = rng.uniform(-scale, scale);
    }
}

inline double check_all(std::function<double()> const& loss,
                        std::vector<std::span<double>> const& params,
                        std::vector<std::span<double const>> const& analytic,
                        double perturbation)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        worst = std::max(worst, grad_check(loss, params[i], analytic[i], perturbation));
    }
    return worst;
}

inline double check_dense(Activation act, Rng& rng, double h, double fault_scale = 1.0)
{
    DenseLayer layer = make_dense(5, 4, act, rng);
    randomize(layer.bias, rng, 0.5);
    Vector x = random_values(5, rng);
    Vector const r = random_values(4, rng);
    auto loss = [&] { return dot(r, dense_apply(layer, x)); };

    Vector const pre = dense_preactivation(layer, x);
    Vector const out = activate(act, pre);
    Vector const g_pre = activation_backward(act, pre, out, r);
    DenseLayer grad{Matrix(4, 5), Vector(4, 0.0), act};
    Vector const g_x = dense_backward(layer, x, g_pre, grad);
    for (auto& v : grad.weights.values()) {
        v *= fault_scale;
    }
    return check_all(loss, {layer.weights.values(), layer.bias, x},
                     {grad.weights.values(), grad.bias, g_x}, h);
}

inline double check_embedding_composition(Rng& rng, double h)
{
    EmbeddingTable table{Matrix(6, 4), 0, std::nullopt};
    randomize(table.vectors.values(), rng, 1.0);
    std::vector<TokenId> const tokens{1, 3, 3, 5};
    Vector w = random_values(tokens.size(), rng, 2.0);
    Vector const r = random_values(4, rng);
    auto loss = [&] { return dot(r, term_weighted_composition(embedding_lookup(table, tokens), w)); };

    Matrix const embeds = embedding_lookup(table, tokens);
    auto const g = term_weighted_composition_backward(embeds, w, r);
    Matrix g_table(6, 4);
    embedding_backward(table, tokens, g.embeds, g_table);
    return check_all(loss, {table.vectors.values(), w}, {g_table.values(), g.weights}, h);
}

inline double check_conv(Rng& rng, double h)
{
    ConvBank bank = make_conv_bank(4, 3, 2, rng);
    randomize(bank.bias, rng, 0.3);
    Matrix sentence(4, 6);
    randomize(sentence.values(), rng, 1.0);
    Vector const r = random_values(3, rng);
    auto loss = [&] { return dot(r, conv_encode(bank, sentence)); };

    ConvCache cache;
    conv_encode(bank, sentence, &cache);
    ConvBank grad = bank;
    for (auto& f : grad.filters) {
        std::fill(f.values().begin(), f.values().end(), 0.0);
    }
    std::fill(grad.bias.begin(), grad.bias.end(), 0.0);
    Matrix const g_sentence = conv_backward(bank, sentence, cache, r, grad);

    std::vector<std::span<double>> params{sentence.values(), bank.bias};
    std::vector<std::span<double const>> analytic{g_sentence.values(), grad.bias};
    for (std::size_t k = 0; k < bank.filter_count(); ++k) {
        params.emplace_back(bank.filters[k].values());
        analytic.emplace_back(grad.filters[k].values());
    }
    return check_all(loss, params, analytic, h);
}

inline double check_dropout(Rng& rng, double h)
{
    Vector x = random_values(8, rng);
    Vector const r = random_values(8, rng);
    auto loss = [&] {
        Rng fixed(99);
        return dot(r, dropout_apply(x, 0.4, Mode::train, &fixed));
    };
    Rng fixed(99);
    Vector const mask = dropout_mask(8, 0.4, Mode::train, &fixed);
    Vector g(8);
    for (std::size_t i = 0; i < 8; ++i) {
        g[i] = r[i] * mask[i];
    }
    return check_all(loss, {x}, {g}, h);
}

inline ModelDims small_dims()
{
    ModelDims d;
    d.vocab_size = 12;
    d.embedding_dim = 4;
    d.filter_count = 3;
    d.window = 2;
    d.supervision_hidden = {5};
    d.confidence_hidden = {6, 6};
    return d;
}

inline ModelParameters small_model(TaskKind task, Rng& rng)
{
    ModelParameters p = init_parameters(task, small_dims(), rng.next());
    if (task == TaskKind::ranking) {
        randomize(p.term_weights.weights, rng, 1.0);
    } else {
        randomize(p.conv.bias, rng, 0.2);
    }
    for (auto* stack : {&p.supervision, &p.confidence}) {
        for (auto& l : *stack) {
            randomize(l.bias, rng, 0.2);
        }
    }
    return p;
}

/// Loss through the whole network for one instance, checked on every tensor
/// of the representation group and of `head`.
template <typename Instance, typename LossFn>
double check_network(ModelParameters& p, ParamGroup head, double dropout, LossFn loss_fn, double h)
{
    auto loss = [&] {
        Rng fixed(7);
        Pass const pass{dropout > 0.0 ? Mode::train : Mode::eval, dropout, &fixed};
        return loss_fn(p, pass, nullptr);
    };
    ModelParameters grads = p.zeros_like();
    {
        Rng fixed(7);
        Pass const pass{dropout > 0.0 ? Mode::train : Mode::eval, dropout, &fixed};
        loss_fn(p, pass, &grads);
    }
    std::vector<std::span<double>> params;
    std::vector<std::span<double const>> analytic;
    for (auto g : {ParamGroup::representation, head}) {
        auto pt = p.tensors(g);
        auto gt = std::as_const(grads).tensors(g);
        params.insert(params.end(), pt.begin(), pt.end());
        analytic.insert(analytic.end(), gt.begin(), gt.end());
    }
    return check_all(loss, params, analytic, h);
}

}  // namespace detail

/// Finite-difference checks of every layer type and of the composed target,
/// confidence and label-generator networks for both tasks. `fault_scale`
/// multiplies the analytic weight gradient of the relu dense check.
inline std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed,
                                                        double perturbation = 1e-5,
                                                        double fault_scale = 1.0)
{
    using namespace detail;
    Rng rng(seed);
    std::vector<GradcheckResult> out;
    out.push_back({"dense_relu", check_dense(Activation::relu, rng, perturbation, fault_scale)});
    out.push_back({"dense_sigmoid", check_dense(Activation::sigmoid, rng, perturbation)});
    out.push_back({"dense_softmax", check_dense(Activation::softmax, rng, perturbation)});
    out.push_back({"dense_identity", check_dense(Activation::identity, rng, perturbation)});
    out.push_back({"embedding_composition", check_embedding_composition(rng, perturbation)});
    out.push_back({"conv_maxpool", check_conv(rng, perturbation)});
    out.push_back({"dropout", check_dropout(rng, perturbation)});

    RankInstance const pair{{2, 3}, {4, 5, 6}, {7, 3, 8}};
    Label const pair_label{0.7};
    SentenceInstance const sentence{{2, 3, 4, 5, 6, 9}};
    Label const soft{0.6, 0.3, 0.1};
    Label const truth{1.0, 0.0, 0.0};

    {
        ModelParameters p = small_model(TaskKind::ranking, rng);
        out.push_back({"ranking_target",
                       check_network<RankInstance>(p, ParamGroup::supervision, 0.0,
                                                   [&](ModelParameters const& m, Pass const& pass, ModelParameters* g) {
                                                       return target_loss_backward(m, pair, pair_label, 1.0, pass, g);
                                                   },
                                                   perturbation)});
        out.push_back({"ranking_confidence",
                       check_network<RankInstance>(p, ParamGroup::confidence, 0.0,
                                                   [&](ModelParameters const& m, Pass const& pass, ModelParameters* g) {
                                                       return confidence_loss_backward(m, pair, pair_label, 0.8, 1.0,
                                                                                       pass, g);
                                                   },
                                                   perturbation)});
    }
    {
        ModelParameters p = small_model(TaskKind::sentiment, rng);
        out.push_back({"sentiment_target",
                       check_network<SentenceInstance>(p, ParamGroup::supervision, 0.3,
                                                       [&](ModelParameters const& m, Pass const& pass,
                                                           ModelParameters* g) {
                                                           return target_loss_backward(m, sentence, soft, 1.0, pass, g);
                                                       },
                                                       perturbation)});
        out.push_back({"sentiment_confidence",
                       check_network<SentenceInstance>(p, ParamGroup::confidence, 0.3,
                                                       [&](ModelParameters const& m, Pass const& pass,
                                                           ModelParameters* g) {
                                                           return confidence_loss_backward(m, sentence, soft, 0.7, 1.0,
                                                                                           pass, g);
                                                       },
                                                       perturbation)});
    }
    for (auto task : {TaskKind::ranking, TaskKind::sentiment}) {
        LabelGenerator gen = make_label_generator(task, small_dims(), rng.next());
        randomize(gen.net.confidence.back().weights.values(), rng, 0.5);
        if (task == TaskKind::sentiment) {
            randomize(gen.net.conv.bias, rng, 0.2);
        } else {
            randomize(gen.net.term_weights.weights, rng, 1.0);
        }
        double err = 0.0;
        if (task == TaskKind::ranking) {
            err = check_network<RankInstance>(gen.net, ParamGroup::confidence, 0.0,
                                              [&](ModelParameters const& m, Pass const& pass, ModelParameters* g) {
                                                  LabelGenerator view{LabelGenerator::Kind::network, m, true};
                                                  return label_generator_loss_backward(view, pair, pair_label,
                                                                                       Label{1.0}, 1.0, pass, g);
                                              },
                                              perturbation);
        } else {
            err = check_network<SentenceInstance>(gen.net, ParamGroup::confidence, 0.0,
                                                  [&](ModelParameters const& m, Pass const& pass, ModelParameters* g) {
                                                      LabelGenerator view{LabelGenerator::Kind::network, m, true};
                                                      return label_generator_loss_backward(view, sentence, soft, truth,
                                                                                           1.0, pass, g);
                                                  },
                                                  perturbation);
        }
        out.push_back({to_string(task) + "_label_generator", err});
    }
    return out;
}

}  // namespace cws
