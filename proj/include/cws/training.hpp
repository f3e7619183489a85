#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cws/adam.hpp"
#include "cws/error.hpp"
#include "cws/model.hpp"
#include "cws/random.hpp"

namespace cws {

enum class Strategy {
    WA,
    WSO,
    FSO,
    WS_FT,
    WS_SFT,
    WS_RFT,
    NLI,
    CWS_JT,
    CWS_JT_PLUS,
    CWS_ST,
    CWS_CT,
};

inline constexpr std::array all_strategies{
    Strategy::WA,     Strategy::WSO,    Strategy::FSO,         Strategy::WS_FT,
    Strategy::WS_SFT, Strategy::WS_RFT, Strategy::NLI,         Strategy::CWS_JT,
    Strategy::CWS_JT_PLUS, Strategy::CWS_ST, Strategy::CWS_CT,
};

inline std::string to_string(Strategy s)
{
    switch (s) {
    case Strategy::WA: return "WA";
    case Strategy::WSO: return "WSO";
    case Strategy::FSO: return "FSO";
    case Strategy::WS_FT: return "WS_FT";
    case Strategy::WS_SFT: return "WS_SFT";
    case Strategy::WS_RFT: return "WS_RFT";
    case Strategy::NLI: return "NLI";
    case Strategy::CWS_JT: return "CWS_JT";
    case Strategy::CWS_JT_PLUS: return "CWS_JT_PLUS";
    case Strategy::CWS_ST: return "CWS_ST";
    case Strategy::CWS_CT: return "CWS_CT";
    }
    return "?";
}

inline Strategy parse_strategy(std::string const& name)
{
    if (name == "CWS_PT") {
        throw UnsupportedStrategyError("CWS_PT (progressive training) is not supported");
    }
    for (auto s : all_strategies) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError("unknown strategy '" + name + "'");
}

enum class Alternation { deterministic_cycle, stochastic };

struct TrainConfig {
    Strategy strategy = Strategy::CWS_JT;
    double lr = 1e-3;
    std::size_t batch_weak = 64;
    std::size_t batch_full = 64;
    std::size_t ratio_full = 1;
    std::size_t ratio_weak = 10;
    Alternation alternation = Alternation::deterministic_cycle;
    /// 0 means "until U is exhausted".
    std::size_t max_weak_batches = 0;
    /// 0 disables checkpoints.
    std::size_t checkpoint_every = 0;
    double dropout = 0.0;
    double l2_weight = 0.0;
    std::uint64_t seed = 0;
    /// Batches drawn from V by the supervised phases: FSO, fine-tuning,
    /// standalone/circular confidence training and the NLI label generator.
    std::size_t supervised_batches = 200;
};

inline TrainConfig default_config(TaskKind task)
{
    TrainConfig c;
    c.batch_weak = task == TaskKind::ranking ? 128 : 64;
    c.batch_full = c.batch_weak;
    return c;
}

inline void validate(TrainConfig const& c)
{
    if (!(c.lr > 0.0)) {
        throw ConfigError("learning rate must be positive");
    }
    if (c.batch_weak == 0 || c.batch_full == 0) {
        throw ConfigError("batch sizes must be at least 1");
    }
    if (c.ratio_full == 0 || c.ratio_weak == 0) {
        throw ConfigError("alternation ratio components must be at least 1");
    }
    if (!(c.dropout >= 0.0 && c.dropout < 1.0)) {
        throw ConfigError("dropout must lie in [0, 1)");
    }
    if (!(c.l2_weight >= 0.0)) {
        throw ConfigError("l2_weight must be non-negative");
    }
}

template <typename Instance>
struct WeakExample {
    Instance instance;
    Label weak;
};

template <typename Instance>
struct TrueExample {
    Instance instance;
    Label weak;
    Label truth;
    double target = 1.0;  // confidence target c_j
};

/// U (weakly labeled) and V (weak + true labels with confidence targets).
template <typename Instance>
struct LabeledSets {
    std::vector<WeakExample<Instance>> weak;
    std::vector<TrueExample<Instance>> full;
    /// Number of U items handed out by sample_weak_batch.
    mutable std::size_t weak_reads = 0;
};

enum class StepMode { weak, full };

struct TrainStepReport {
    StepMode mode = StepMode::weak;
    std::optional<double> loss_t;
    std::optional<double> loss_c;
    double mean_confidence = 1.0;
    std::size_t batch_index = 0;
};

struct CurveRecord {
    std::size_t weak_batch = 0;
    std::string split;
    std::optional<double> loss_t;
    std::optional<double> loss_c;
    std::optional<double> loss_wso;
    std::optional<double> metric_test;
};

/// Values computed by the caller at each checkpoint.
struct CheckpointEval {
    std::optional<double> validation_target_loss;
    std::optional<double> validation_confidence_loss;
    std::optional<double> test_metric;
};

struct TrainHooks {
    /// Called with the target network and, when one exists, the network that
    /// supplies confidence scores.
    std::function<CheckpointEval(ModelParameters const&, ModelParameters const*)> checkpoint;
};

struct TrainResult {
    std::vector<TrainStepReport> reports;
    std::vector<CurveRecord> curves;
    std::size_t weak_batches = 0;
    std::size_t full_batches = 0;
};

struct WeakBatch {
    std::vector<std::size_t> items;
    std::size_t cursor = 0;

    [[nodiscard]] bool end() const noexcept { return items.empty(); }
};

/// Epoch order over U, shuffled once.
inline std::vector<std::size_t> shuffled_order(std::size_t n, Rng& rng)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    return order;
}

/// Next `batch_weak` positions of `order` from `cursor`, without replacement.
/// An empty batch signals that U is exhausted.
template <typename Instance>
WeakBatch sample_weak_batch(LabeledSets<Instance> const& sets,
                            std::span<std::size_t const> order,
                            std::size_t cursor,
                            std::size_t batch_weak)
{
    if (cursor > order.size()) {
        throw ConfigError("sample_weak_batch: cursor beyond U");
    }
    std::size_t const take = std::min(batch_weak, order.size() - cursor);
    WeakBatch batch{{order.begin() + static_cast<std::ptrdiff_t>(cursor),
                     order.begin() + static_cast<std::ptrdiff_t>(cursor + take)},
                    cursor + take};
    sets.weak_reads += take;
    return batch;
}

/// I.i.d. uniform draws from V with replacement.
inline std::vector<std::size_t> sample_full_batch(std::size_t v_size, std::size_t batch_full, Rng& rng)
{
    if (v_size == 0) {
        throw ConfigError("sample_full_batch: V is empty");
    }
    std::vector<std::size_t> items(batch_full);
    for (auto& i : items) {
        i = rng.index(v_size);
    }
    return items;
}

/// grads += l2 * w, then one Adam step per listed group.
inline void apply_update(ModelParameters& params,
                         ModelParameters& grads,
                         std::initializer_list<ParamGroup> groups,
                         TrainConfig const& config)
{
    for (auto g : groups) {
        auto p = params.tensors(g);
        auto d = grads.tensors(g);
        if (config.l2_weight > 0.0) {
            for (std::size_t t = 0; t < p.size(); ++t) {
                for (std::size_t j = 0; j < p[t].size(); ++j) {
                    d[t][j] += config.l2_weight * p[t][j];
                }
            }
        }
        std::vector<std::span<double const>> dc(d.begin(), d.end());
        adam_update(p, dc, params.state(g), config.lr);
    }
}

template <typename Instance>
double confidence_score(ModelParameters const& source, Instance const& x, Label const& weak)
{
    Vector const rep = represent(source, x);
    return confidence_forward(source, rep, weak);
}

struct WeakGradient {
    ModelParameters grads;
    double weighted_loss = 0.0;    // (1/b) sum c_i L_i
    double unweighted_loss = 0.0;  // (1/b) sum L_i
};

/// Pre-optimizer gradient of (1/b) sum_i w_i L_i over a U batch, restricted
/// to the representation and supervision groups.
template <typename Instance>
WeakGradient weighted_target_gradient(ModelParameters const& params,
                                      std::span<WeakExample<Instance> const> examples,
                                      std::span<std::size_t const> batch,
                                      std::span<double const> weights,
                                      Pass const& pass)
{
    if (batch.empty()) {
        throw DegenerateInputError("weak step on an empty batch");
    }
    WeakGradient out{params.zeros_like()};
    auto const b = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto const& ex = examples[batch[i]];
        double const loss =
            target_loss_backward(params, ex.instance, ex.weak, weights[i] / b, pass, &out.grads);
        out.weighted_loss += weights[i] * loss / b;
        out.unweighted_loss += loss / b;
    }
    return out;
}

/// Confidence scores c~ of a U batch, in eval mode with no gradient.
template <typename Instance>
Vector batch_confidences(ModelParameters const& source,
                         std::span<WeakExample<Instance> const> examples,
                         std::span<std::size_t const> batch)
{
    Vector c(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto const& ex = examples[batch[i]];
        c[i] = confidence_score(source, ex.instance, ex.weak);
    }
    return c;
}

/// Controlled weak supervision step: loss (1/b) sum c~_i L_i with c~ from
/// `confidence_source` treated as constants. Updates representation and
/// supervision groups only.
template <typename Instance>
TrainStepReport weak_step(ModelParameters& params,
                          ModelParameters const& confidence_source,
                          std::span<WeakExample<Instance> const> examples,
                          std::span<std::size_t const> batch,
                          TrainConfig const& config,
                          Rng& dropout_rng)
{
    Vector const c = batch_confidences(confidence_source, examples, batch);
    Pass const pass{Mode::train, config.dropout, &dropout_rng};
    auto g = weighted_target_gradient(params, examples, batch, c, pass);
    apply_update(params, g.grads, {ParamGroup::representation, ParamGroup::supervision}, config);
    TrainStepReport r;
    r.mode = StepMode::weak;
    r.loss_t = g.weighted_loss;
    r.mean_confidence = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
    return r;
}

/// Unweighted weak-label step (all c~ = 1).
template <typename Instance>
TrainStepReport wso_step(ModelParameters& params,
                         std::span<WeakExample<Instance> const> examples,
                         std::span<std::size_t const> batch,
                         TrainConfig const& config,
                         Rng& dropout_rng)
{
    Vector const ones(batch.size(), 1.0);
    Pass const pass{Mode::train, config.dropout, &dropout_rng};
    auto g = weighted_target_gradient(params, examples, batch, ones, pass);
    apply_update(params, g.grads, {ParamGroup::representation, ParamGroup::supervision}, config);
    TrainStepReport r;
    r.mode = StepMode::weak;
    r.loss_t = g.unweighted_loss;
    return r;
}

/// Supervised step on V against true labels, updating `groups`.
template <typename Instance>
double supervised_step(ModelParameters& params,
                       std::span<TrueExample<Instance> const> examples,
                       std::span<std::size_t const> batch,
                       std::initializer_list<ParamGroup> groups,
                       TrainConfig const& config,
                       Rng& dropout_rng)
{
    ModelParameters grads = params.zeros_like();
    Pass const pass{Mode::train, config.dropout, &dropout_rng};
    auto const b = static_cast<double>(batch.size());
    double loss = 0.0;
    for (auto i : batch) {
        auto const& ex = examples[i];
        loss += target_loss_backward(params, ex.instance, ex.truth, 1.0 / b, pass, &grads) / b;
    }
    apply_update(params, grads, groups, config);
    return loss;
}

/// Gradient of L_c = mean_j BCE(c_j, c~_j) over a V batch.
template <typename Instance>
std::pair<ModelParameters, double> confidence_gradient(ModelParameters const& params,
                                                       std::span<TrueExample<Instance> const> examples,
                                                       std::span<std::size_t const> batch,
                                                       Pass const& pass,
                                                       double* mean_confidence = nullptr)
{
    if (batch.empty()) {
        throw DegenerateInputError("full step on an empty batch");
    }
    ModelParameters grads = params.zeros_like();
    auto const b = static_cast<double>(batch.size());
    double loss = 0.0;
    double conf = 0.0;
    for (auto i : batch) {
        auto const& ex = examples[i];
        loss += confidence_loss_backward(params, ex.instance, ex.weak, ex.target, 1.0 / b, pass, &grads) / b;
        if (mean_confidence != nullptr) {
            conf += confidence_score(params, ex.instance, ex.weak) / b;
        }
    }
    if (mean_confidence != nullptr) {
        *mean_confidence = conf;
    }
    return {std::move(grads), loss};
}

/// Full supervision step: L_c on a V batch, updating representation and
/// confidence groups. Under CWS_JT_PLUS a second, unweighted true-label step
/// on the same batch follows for representation and supervision groups.
template <typename Instance>
TrainStepReport full_step(ModelParameters& params,
                          std::span<TrueExample<Instance> const> examples,
                          std::span<std::size_t const> batch,
                          TrainConfig const& config,
                          Rng& dropout_rng,
                          bool update_representation = true)
{
    Pass const pass{Mode::train, config.dropout, &dropout_rng};
    auto [grads, loss] = confidence_gradient(params, examples, batch, pass);
    if (update_representation) {
        apply_update(params, grads, {ParamGroup::representation, ParamGroup::confidence}, config);
    } else {
        apply_update(params, grads, {ParamGroup::confidence}, config);
    }
    TrainStepReport r;
    r.mode = StepMode::full;
    r.loss_c = loss;
    if (config.strategy == Strategy::CWS_JT_PLUS) {
        supervised_step(params, examples, batch,
                        {ParamGroup::representation, ParamGroup::supervision}, config, dropout_rng);
    }
    return r;
}

/// Options of one pass over U.
struct WeakPhase {
    /// Scale each instance by its confidence score.
    bool weighted = false;
    /// Interleave full-supervision steps on V.
    bool alternate_full = false;
    /// Network producing c~; the trained network itself when null.
    ModelParameters const* confidence_source = nullptr;
    /// Added to weak batch indices in reports and curves.
    std::size_t batch_offset = 0;
    /// Distinguishes the U shuffle of repeated phases.
    std::uint64_t stream = 0;
};

struct RunStreams {
    Rng shuffle;
    Rng full;
    Rng dropout;
    Rng alternation;

    explicit RunStreams(std::uint64_t seed, std::uint64_t stream = 0)
        : shuffle(Rng(seed).derive(100 + stream)),
          full(Rng(seed).derive(200 + stream)),
          dropout(Rng(seed).derive(300 + stream)),
          alternation(Rng(seed).derive(400 + stream))
    {}
};

namespace detail {

struct Window {
    double target = 0.0;
    std::size_t target_n = 0;
    double confidence = 0.0;
    std::size_t confidence_n = 0;

    static std::optional<double> mean(double sum, std::size_t n)
    {
        return n == 0 ? std::nullopt : std::optional<double>(sum / static_cast<double>(n));
    }
};

inline void emit_checkpoint(TrainResult& result,
                            std::size_t weak_batch,
                            Window& window,
                            bool weighted,
                            bool has_confidence,
                            TrainHooks const& hooks,
                            ModelParameters const& params,
                            ModelParameters const* confidence)
{
    CheckpointEval eval;
    if (hooks.checkpoint) {
        eval = hooks.checkpoint(params, has_confidence ? confidence : nullptr);
    }
    CurveRecord train_row{weak_batch, "train", {}, {}, {}, eval.test_metric};
    CurveRecord valid_row{weak_batch, "validation", {}, {}, {}, eval.test_metric};
    auto const target = Window::mean(window.target, window.target_n);
    if (weighted) {
        train_row.loss_t = target;
        valid_row.loss_t = eval.validation_target_loss;
    } else {
        train_row.loss_wso = target;
        valid_row.loss_wso = eval.validation_target_loss;
    }
    if (has_confidence) {
        train_row.loss_c = Window::mean(window.confidence, window.confidence_n);
        valid_row.loss_c = eval.validation_confidence_loss;
    }
    result.curves.push_back(train_row);
    result.curves.push_back(valid_row);
    window = {};
}

}  // namespace detail

/// One pass over U (optionally interleaved with full steps on V), stopping
/// at the end of U or after max_weak_batches.
template <typename Instance>
TrainResult run_weak_phase(ModelParameters& params,
                           LabeledSets<Instance> const& sets,
                           std::span<WeakExample<Instance> const> weak_examples,
                           TrainConfig const& config,
                           WeakPhase const& phase,
                           TrainHooks const& hooks = {})
{
    validate(config);
    if (phase.alternate_full && sets.full.empty()) {
        throw ConfigError("alternating training needs a non-empty V");
    }
    RunStreams streams(config.seed, phase.stream);
    auto const order = shuffled_order(weak_examples.size(), streams.shuffle);
    std::span<TrueExample<Instance> const> const full(sets.full);
    ModelParameters const* confidence = phase.confidence_source != nullptr ? phase.confidence_source
                                                                           : &params;
    bool const has_confidence = phase.weighted || phase.alternate_full;

    TrainResult result;
    detail::Window window;
    std::size_t cursor = 0;
    double const full_share = static_cast<double>(config.ratio_full)
                              / static_cast<double>(config.ratio_full + config.ratio_weak);

    auto do_full = [&] {
        auto const batch = sample_full_batch(full.size(), config.batch_full, streams.full);
        auto r = full_step(params, full, batch, config, streams.dropout);
        r.batch_index = phase.batch_offset + result.weak_batches;
        window.confidence += *r.loss_c;
        ++window.confidence_n;
        ++result.full_batches;
        result.reports.push_back(r);
    };

    while (config.max_weak_batches == 0 || result.weak_batches < config.max_weak_batches) {
        if (phase.alternate_full && config.alternation == Alternation::stochastic
            && streams.alternation.uniform() < full_share) {
            do_full();
            continue;
        }
        auto const batch = sample_weak_batch(sets, std::span<std::size_t const>(order), cursor,
                                             config.batch_weak);
        if (batch.end()) {
            break;
        }
        cursor = batch.cursor;
        TrainStepReport r = phase.weighted
                                ? weak_step(params, *confidence, weak_examples, batch.items, config,
                                            streams.dropout)
                                : wso_step(params, weak_examples, batch.items, config, streams.dropout);
        ++result.weak_batches;
        r.batch_index = phase.batch_offset + result.weak_batches;
        window.target += *r.loss_t;
        ++window.target_n;
        result.reports.push_back(r);

        if (phase.alternate_full && config.alternation == Alternation::deterministic_cycle
            && result.weak_batches % config.ratio_weak == 0) {
            for (std::size_t k = 0; k < config.ratio_full; ++k) {
                do_full();
            }
        }
        std::size_t const global = phase.batch_offset + result.weak_batches;
        if (config.checkpoint_every > 0 && global % config.checkpoint_every == 0) {
            detail::emit_checkpoint(result, global, window, phase.weighted, has_confidence, hooks,
                                    params, confidence);
        }
    }
    return result;
}

/// Alternating full/weak training for the joint strategies, plain weak-label
/// training otherwise.
template <typename Instance>
TrainResult train(ModelParameters& params,
                  LabeledSets<Instance> const& sets,
                  TrainConfig const& config,
                  TrainHooks const& hooks = {})
{
    bool const joint = config.strategy == Strategy::CWS_JT || config.strategy == Strategy::CWS_JT_PLUS;
    WeakPhase phase;
    phase.weighted = joint;
    phase.alternate_full = joint;
    return run_weak_phase(params, sets, std::span<WeakExample<Instance> const>(sets.weak), config,
                          phase, hooks);
}

/// `batches` supervised steps on V with replacement.
template <typename Instance>
void run_supervised_phase(ModelParameters& params,
                          LabeledSets<Instance> const& sets,
                          std::initializer_list<ParamGroup> groups,
                          TrainConfig const& config,
                          std::uint64_t stream)
{
    RunStreams streams(config.seed, stream);
    std::span<TrueExample<Instance> const> const full(sets.full);
    for (std::size_t i = 0; i < config.supervised_batches; ++i) {
        auto const batch = sample_full_batch(full.size(), config.batch_full, streams.full);
        supervised_step(params, full, batch, groups, config, streams.dropout);
    }
}

/// `batches` full steps (L_c only) on V.
template <typename Instance>
void run_confidence_phase(ModelParameters& params,
                          LabeledSets<Instance> const& sets,
                          TrainConfig const& config,
                          bool update_representation,
                          std::uint64_t stream)
{
    RunStreams streams(config.seed, stream);
    std::span<TrueExample<Instance> const> const full(sets.full);
    TrainConfig plain = config;
    plain.strategy = Strategy::CWS_JT;
    for (std::size_t i = 0; i < config.supervised_batches; ++i) {
        auto const batch = sample_full_batch(full.size(), config.batch_full, streams.full);
        full_step(params, full, batch, plain, streams.dropout, update_representation);
    }
}

/// Confidence network of CWS_ST: its own representation copy trained on V.
template <typename Instance>
ModelParameters train_standalone_confidence(ModelParameters const& fresh,
                                            LabeledSets<Instance> const& sets,
                                            TrainConfig const& config)
{
    ModelParameters net = fresh;
    run_confidence_phase(net, sets, config, true, 11);
    return net;
}

// ---------------------------------------------------------------------------
// Label generator (NLI baseline)

/// Maps (representation, weak label) to a new label. The network variant
/// adds a learned correction to the weak label's logits, so an untrained
/// head with zero output weights reproduces the weak label.
struct LabelGenerator {
    enum class Kind { identity, network };
    Kind kind = Kind::identity;
    ModelParameters net;
    bool trained = false;
};

inline LabelGenerator identity_generator()
{
    return {LabelGenerator::Kind::identity, {}, true};
}

inline LabelGenerator make_label_generator(TaskKind task, ModelDims dims, std::uint64_t seed)
{
    std::size_t const width = task == TaskKind::ranking ? 1 : sentiment_classes;
    dims.head_outputs = width;
    LabelGenerator g{LabelGenerator::Kind::network, init_parameters(task, dims, seed), false};
    auto& last = g.net.confidence.back();
    last.activation = Activation::identity;
    std::fill(last.weights.values().begin(), last.weights.values().end(), 0.0);
    return g;
}

inline Vector label_logits(std::span<double const> weak)
{
    Vector base(weak.size());
    if (weak.size() == 1) {
        double const p = clamp_probability(weak[0]);
        base[0] = std::log(p / (1.0 - p));
    } else {
        for (std::size_t k = 0; k < weak.size(); ++k) {
            base[k] = std::log(clamp_probability(weak[k]));
        }
    }
    return base;
}

inline Vector finish_label(std::span<double const> logits)
{
    if (logits.size() == 1) {
        return {sigmoid(logits[0])};
    }
    return softmax(logits);
}

template <typename Instance>
Label generate_label(LabelGenerator const& gen,
                     Instance const& x,
                     Label const& weak,
                     Pass const& pass = {},
                     RepresentationCache* rep_cache = nullptr,
                     MlpCache* mlp_cache = nullptr)
{
    if (gen.kind == LabelGenerator::Kind::identity) {
        return weak;
    }
    Vector const rep = represent(gen.net, x, pass, rep_cache);
    Vector logits = mlp_forward(gen.net.confidence, concat(rep, weak), pass, mlp_cache);
    Vector const base = label_logits(weak);
    for (std::size_t k = 0; k < logits.size(); ++k) {
        logits[k] += base[k];
    }
    return finish_label(logits);
}

/// Cross-entropy of the generated label against `truth`; adds
/// `weight * gradient` for the representation and head groups of the
/// generator network into `grads` when given.
template <typename Instance>
double label_generator_loss_backward(LabelGenerator const& gen,
                                     Instance const& x,
                                     Label const& weak,
                                     Label const& truth,
                                     double weight,
                                     Pass const& pass,
                                     ModelParameters* grads)
{
    RepresentationCache rep_cache;
    MlpCache mlp_cache;
    Label const out = generate_label(gen, x, weak, pass, &rep_cache, &mlp_cache);
    double const loss = task_loss(gen.net.task, truth, out);
    if (grads != nullptr) {
        Vector const g_out = output_gradient(truth, out, weight);
        Vector const g_in = mlp_backward(gen.net.confidence, mlp_cache, g_out, grads->confidence);
        represent_backward(gen.net, x, rep_cache,
                           std::span<double const>(g_in).first(gen.net.representation_width()), *grads);
    }
    return loss;
}

/// Fits the generator on V: cross-entropy of generated labels against true
/// labels.
template <typename Instance>
void train_label_generator(LabelGenerator& gen, LabeledSets<Instance> const& sets, TrainConfig const& config)
{
    if (gen.kind == LabelGenerator::Kind::identity) {
        return;
    }
    if (sets.full.empty()) {
        throw ConfigError("label generator needs a non-empty V");
    }
    RunStreams streams(config.seed, 21);
    auto const b = static_cast<double>(config.batch_full);
    for (std::size_t step = 0; step < config.supervised_batches; ++step) {
        auto const batch = sample_full_batch(sets.full.size(), config.batch_full, streams.full);
        ModelParameters grads = gen.net.zeros_like();
        Pass const pass{Mode::train, config.dropout, &streams.dropout};
        for (auto i : batch) {
            auto const& ex = sets.full[i];
            label_generator_loss_backward(gen, ex.instance, ex.weak, ex.truth, 1.0 / b, pass, &grads);
        }
        apply_update(gen.net, grads, {ParamGroup::representation, ParamGroup::confidence}, config);
    }
    gen.trained = true;
}

/// U with weak labels replaced by generator outputs (eval mode).
template <typename Instance>
std::vector<WeakExample<Instance>> nli_generate_labels(LabelGenerator const& gen,
                                                       LabeledSets<Instance> const& sets)
{
    if (!gen.trained) {
        throw StateError("label generator has not been trained");
    }
    std::vector<WeakExample<Instance>> out;
    out.reserve(sets.weak.size());
    for (auto const& ex : sets.weak) {
        out.push_back({ex.instance, generate_label(gen, ex.instance, ex.weak)});
    }
    sets.weak_reads += sets.weak.size();
    return out;
}

// ---------------------------------------------------------------------------

struct StrategyResult {
    ModelParameters params;
    /// Separate confidence network (CWS_ST only).
    std::optional<ModelParameters> confidence_network;
    TrainResult log;
};

inline void append(TrainResult& into, TrainResult&& from)
{
    into.reports.insert(into.reports.end(), from.reports.begin(), from.reports.end());
    into.curves.insert(into.curves.end(), from.curves.begin(), from.curves.end());
    into.weak_batches += from.weak_batches;
    into.full_batches += from.full_batches;
}

/// Runs the phase sequence of `config.strategy` starting from `init`.
/// `dims` is used for networks that are not part of `init` (the separate
/// confidence network of CWS_ST and the NLI label generator).
template <typename Instance>
StrategyResult run_strategy(ModelParameters const& init,
                            ModelDims const& dims,
                            LabeledSets<Instance> const& sets,
                            TrainConfig const& config,
                            TrainHooks const& hooks = {})
{
    validate(config);
    Strategy const s = config.strategy;
    bool const needs_u = s != Strategy::WA && s != Strategy::FSO;
    bool const needs_v = s != Strategy::WA && s != Strategy::WSO;
    if (needs_u && sets.weak.empty()) {
        throw ConfigError(to_string(s) + " needs a non-empty U");
    }
    if (needs_v && sets.full.empty()) {
        throw ConfigError(to_string(s) + " needs a non-empty V");
    }

    StrategyResult out{init, std::nullopt, {}};
    std::span<WeakExample<Instance> const> const u(sets.weak);
    auto weak_only = [&](std::uint64_t stream, std::size_t offset) {
        WeakPhase phase;
        phase.stream = stream;
        phase.batch_offset = offset;
        return run_weak_phase(out.params, sets, u, config, phase, hooks);
    };

    switch (s) {
    case Strategy::WA: break;
    case Strategy::WSO: append(out.log, weak_only(0, 0)); break;
    case Strategy::FSO:
        run_supervised_phase(out.params, sets, {ParamGroup::representation, ParamGroup::supervision},
                             config, 1);
        break;
    case Strategy::WS_FT:
        append(out.log, weak_only(0, 0));
        run_supervised_phase(out.params, sets, {ParamGroup::representation, ParamGroup::supervision},
                             config, 1);
        break;
    case Strategy::WS_SFT:
        append(out.log, weak_only(0, 0));
        run_supervised_phase(out.params, sets, {ParamGroup::supervision}, config, 1);
        break;
    case Strategy::WS_RFT:
        append(out.log, weak_only(0, 0));
        run_supervised_phase(out.params, sets, {ParamGroup::representation}, config, 1);
        break;
    case Strategy::NLI: {
        LabelGenerator gen = make_label_generator(init.task, dims, config.seed ^ 0x4E4C49ULL);
        train_label_generator(gen, sets, config);
        auto const relabeled = nli_generate_labels(gen, sets);
        WeakPhase phase;
        append(out.log, run_weak_phase(out.params, sets,
                                       std::span<WeakExample<Instance> const>(relabeled), config,
                                       phase, hooks));
        break;
    }
    case Strategy::CWS_JT:
    case Strategy::CWS_JT_PLUS: append(out.log, train(out.params, sets, config, hooks)); break;
    case Strategy::CWS_ST: {
        ModelParameters const fresh = init_parameters(init.task, dims, config.seed ^ 0x5354ULL);
        out.confidence_network = train_standalone_confidence(fresh, sets, config);
        WeakPhase phase;
        phase.weighted = true;
        phase.confidence_source = &*out.confidence_network;
        append(out.log, run_weak_phase(out.params, sets, u, config, phase, hooks));
        break;
    }
    case Strategy::CWS_CT: {
        append(out.log, weak_only(0, 0));
        run_confidence_phase(out.params, sets, config, false, 2);
        WeakPhase phase;
        phase.weighted = true;
        phase.stream = 3;
        phase.batch_offset = out.log.weak_batches;
        append(out.log, run_weak_phase(out.params, sets, u, config, phase, hooks));
        break;
    }
    }
    return out;
}

}  // namespace cws
