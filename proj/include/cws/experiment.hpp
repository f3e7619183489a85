#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <algorithm>
#include <initializer_list>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cws/annotators.hpp"
#include "cws/data_io.hpp"
#include "cws/error.hpp"
#include "cws/evaluation.hpp"
#include "cws/model.hpp"
#include "cws/random.hpp"
#include "cws/training.hpp"

namespace cws {

// ---------------------------------------------------------------------------
// Manifest

struct RankingSplit {
    std::size_t test_queries = 60;
    std::size_t validation_queries = 20;
    std::size_t true_queries = 20;
    /// BM25 candidates per unlabeled query whose pairs form U.
    std::size_t top_k = 20;
    /// Cap on |V| in pairs (0 keeps all).
    std::size_t max_true_pairs = 50;
    std::size_t max_validation_pairs = 400;
    /// BM25 candidates retrieved per test query and the head re-ranked.
    std::size_t candidates = 100;
    std::size_t rerank_pool = 30;
};

struct ExperimentManifest {
    TaskKind task = TaskKind::sentiment;
    /// Generated data when true, files otherwise.
    bool synthetic = true;
    SyntheticSentimentSpec sentiment_spec;
    SyntheticRankingSpec ranking_spec;
    std::string sentences_path;
    std::string lexicon_path;
    std::string docs_path;
    std::string queries_path;
    std::string qrels_path;

    std::vector<Strategy> strategies;
    Strategy baseline = Strategy::WSO;
    std::vector<std::uint64_t> seeds;
    TrainConfig train;
    ModelDims model;
    SentimentSplit sentiment_split;
    RankingSplit ranking_split;
    std::string out_dir = "results";
};

namespace detail {

inline void check_keys(nlohmann::json const& obj, std::initializer_list<char const*> allowed, std::string const& where)
{
    if (!obj.is_object()) {
        throw ConfigError(where + " must be a JSON object");
    }
    for (auto const& [key, value] : obj.items()) {
        bool known = false;
        for (auto const* a : allowed) {
            known = known || key == a;
        }
        if (!known) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(nlohmann::json const& obj, char const* key, T& out)
{
    if (!obj.contains(key)) {
        return;
    }
    try {
        out = obj.at(key).get<T>();
    } catch (nlohmann::json::exception const&) {
        throw ConfigError(std::string("bad value for '") + key + "'");
    }
}

inline TaskKind parse_task(std::string const& name)
{
    if (name == "ranking") {
        return TaskKind::ranking;
    }
    if (name == "sentiment") {
        return TaskKind::sentiment;
    }
    throw ConfigError("unknown task '" + name + "'");
}

inline void read_sentiment_spec(nlohmann::json const& j, SyntheticSentimentSpec& s)
{
    check_keys(j,
               {"frequent_words_per_class", "rare_words_per_class", "background_words", "sentence_len",
                "frequent_rate", "rare_per_sentence", "confuser_rate", "profile_peak", "word_jitter", "num_labeled",
                "num_unlabeled", "noise_rate", "drop_share", "seed"},
               "synthetic sentiment spec");
    read(j, "frequent_words_per_class", s.frequent_words_per_class);
    read(j, "rare_words_per_class", s.rare_words_per_class);
    read(j, "background_words", s.background_words);
    read(j, "sentence_len", s.sentence_len);
    read(j, "frequent_rate", s.frequent_rate);
    read(j, "rare_per_sentence", s.rare_per_sentence);
    read(j, "confuser_rate", s.confuser_rate);
    read(j, "profile_peak", s.profile_peak);
    read(j, "word_jitter", s.word_jitter);
    read(j, "num_labeled", s.num_labeled);
    read(j, "num_unlabeled", s.num_unlabeled);
    read(j, "noise_rate", s.noise_rate);
    read(j, "drop_share", s.drop_share);
    read(j, "seed", s.seed);
    validate(s);
}

inline void read_ranking_spec(nlohmann::json const& j, SyntheticRankingSpec& s)
{
    check_keys(j,
               {"topics", "terms_per_topic", "background_terms", "docs_per_topic", "background_docs",
                "queries_per_topic", "doc_len", "topic_share", "collision_rate", "noise_rate", "seed"},
               "synthetic ranking spec");
    read(j, "topics", s.topics);
    read(j, "terms_per_topic", s.terms_per_topic);
    read(j, "background_terms", s.background_terms);
    read(j, "docs_per_topic", s.docs_per_topic);
    read(j, "background_docs", s.background_docs);
    read(j, "queries_per_topic", s.queries_per_topic);
    read(j, "doc_len", s.doc_len);
    read(j, "topic_share", s.topic_share);
    read(j, "collision_rate", s.collision_rate);
    read(j, "noise_rate", s.noise_rate);
    read(j, "seed", s.seed);
    validate(s);
}

inline void read_train(nlohmann::json const& j, TrainConfig& c)
{
    check_keys(j,
               {"lr", "batch_weak", "batch_full", "ratio_full", "ratio_weak", "alternation", "max_weak_batches",
                "checkpoint_every", "dropout", "l2_weight", "supervised_batches"},
               "train");
    read(j, "lr", c.lr);
    read(j, "batch_weak", c.batch_weak);
    read(j, "batch_full", c.batch_full);
    read(j, "ratio_full", c.ratio_full);
    read(j, "ratio_weak", c.ratio_weak);
    if (j.contains("alternation")) {
        std::string mode;
        read(j, "alternation", mode);
        if (mode == "deterministic_cycle") {
            c.alternation = Alternation::deterministic_cycle;
        } else if (mode == "stochastic") {
            c.alternation = Alternation::stochastic;
        } else {
            throw ConfigError("alternation must be 'deterministic_cycle' or 'stochastic'");
        }
    }
    read(j, "max_weak_batches", c.max_weak_batches);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "dropout", c.dropout);
    read(j, "l2_weight", c.l2_weight);
    read(j, "supervised_batches", c.supervised_batches);
    validate(c);
}

inline void read_model(nlohmann::json const& j, ModelDims& d)
{
    check_keys(j, {"embedding_dim", "filter_count", "window", "supervision_hidden", "confidence_hidden"}, "model");
    read(j, "embedding_dim", d.embedding_dim);
    read(j, "filter_count", d.filter_count);
    read(j, "window", d.window);
    read(j, "supervision_hidden", d.supervision_hidden);
    read(j, "confidence_hidden", d.confidence_hidden);
    if (d.embedding_dim == 0 || d.filter_count == 0 || d.window == 0) {
        throw ConfigError("model dimensions must be positive");
    }
}

}  // namespace detail

namespace detail {

inline ExperimentManifest parse_manifest_fields(nlohmann::json const& j)
{
    check_keys(j, {"task", "data", "strategies", "baseline", "seeds", "train", "model", "split", "out_dir"}, "manifest");
    ExperimentManifest m;
    if (!j.contains("task")) {
        throw ConfigError("manifest needs 'task'");
    }
    m.task = parse_task(j.at("task").get<std::string>());
    m.train = default_config(m.task);

    if (j.contains("data")) {
        auto const& data = j.at("data");
        check_keys(data, {"synthetic", "sentences", "lexicon", "docs", "queries", "qrels"}, "data");
        bool const has_files = data.contains("sentences") || data.contains("docs");
        if (has_files && data.contains("synthetic")) {
            throw ConfigError("data: give either 'synthetic' or file paths");
        }
        m.synthetic = !has_files;
        if (data.contains("synthetic")) {
            if (m.task == TaskKind::sentiment) {
                read_sentiment_spec(data.at("synthetic"), m.sentiment_spec);
            } else {
                read_ranking_spec(data.at("synthetic"), m.ranking_spec);
            }
        }
        if (!m.synthetic) {
            if (m.task == TaskKind::sentiment) {
                read(data, "sentences", m.sentences_path);
                read(data, "lexicon", m.lexicon_path);
                if (m.sentences_path.empty() || m.lexicon_path.empty()) {
                    throw ConfigError("sentiment data needs 'sentences' and 'lexicon'");
                }
            } else {
                read(data, "docs", m.docs_path);
                read(data, "queries", m.queries_path);
                read(data, "qrels", m.qrels_path);
                if (m.docs_path.empty() || m.queries_path.empty() || m.qrels_path.empty()) {
                    throw ConfigError("ranking data needs 'docs', 'queries' and 'qrels'");
                }
            }
        }
    }

    std::vector<std::string> names;
    read(j, "strategies", names);
    for (auto const& n : names) {
        m.strategies.push_back(parse_strategy(n));
    }
    if (m.strategies.empty()) {
        throw ConfigError("manifest needs at least one strategy");
    }
    if (j.contains("baseline")) {
        m.baseline = parse_strategy(j.at("baseline").get<std::string>());
    } else if (std::find(m.strategies.begin(), m.strategies.end(), Strategy::WSO) == m.strategies.end()) {
        m.baseline = m.strategies.front();
    }
    if (std::find(m.strategies.begin(), m.strategies.end(), m.baseline) == m.strategies.end()) {
        throw ConfigError("baseline " + to_string(m.baseline) + " is not among the strategies");
    }
    read(j, "seeds", m.seeds);
    if (m.seeds.empty()) {
        throw ConfigError("manifest needs at least one seed");
    }
    if (j.contains("train")) {
        read_train(j.at("train"), m.train);
    }
    if (j.contains("model")) {
        read_model(j.at("model"), m.model);
    }
    if (j.contains("split")) {
        auto const& s = j.at("split");
        if (m.task == TaskKind::sentiment) {
            check_keys(s, {"true_size", "validation_size"}, "split");
            read(s, "true_size", m.sentiment_split.true_size);
            read(s, "validation_size", m.sentiment_split.validation_size);
        } else {
            check_keys(s,
                       {"test_queries", "validation_queries", "true_queries", "top_k", "max_true_pairs",
                        "max_validation_pairs", "candidates", "rerank_pool"},
                       "split");
            auto& r = m.ranking_split;
            read(s, "test_queries", r.test_queries);
            read(s, "validation_queries", r.validation_queries);
            read(s, "true_queries", r.true_queries);
            read(s, "top_k", r.top_k);
            read(s, "max_true_pairs", r.max_true_pairs);
            read(s, "max_validation_pairs", r.max_validation_pairs);
            read(s, "candidates", r.candidates);
            read(s, "rerank_pool", r.rerank_pool);
            if (r.test_queries == 0 || r.candidates == 0 || r.rerank_pool == 0) {
                throw ConfigError("ranking split needs test queries, candidates and a rerank pool");
            }
        }
    }
    read(j, "out_dir", m.out_dir);
    return m;
}

}  // namespace detail

inline ExperimentManifest parse_manifest(nlohmann::json const& j)
{
    try {
        return detail::parse_manifest_fields(j);
    } catch (nlohmann::json::exception const& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
}

inline ExperimentManifest load_manifest(std::string const& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (nlohmann::json::exception const& e) {
        throw ParseError(path, 1, e.what());
    }
    return parse_manifest(j);
}

// ---------------------------------------------------------------------------
// Per-seed task data

inline std::uint64_t data_seed(std::uint64_t spec_seed, std::uint64_t run_seed)
{
    return splitmix64(spec_seed ^ splitmix64(run_seed));
}

struct SentimentTask {
    SentimentData data;
    ModelDims dims;
};

inline SentimentTask prepare_sentiment(ExperimentManifest const& m, std::uint64_t seed)
{
    SentimentCorpus corpus;
    SentimentLexicon lexicon;
    if (m.synthetic) {
        SyntheticSentimentSpec spec = m.sentiment_spec;
        spec.seed = data_seed(spec.seed, seed);
        auto synth = gen_synth_sentiment(spec);
        corpus = std::move(synth.corpus);
        lexicon = std::move(synth.released);
    } else {
        corpus = load_sentiment_corpus(m.sentences_path);
        lexicon = load_lexicon_tsv(m.lexicon_path);
    }
    SentimentSplit split = m.sentiment_split;
    split.seed = Rng(seed).derive(1).next();
    SentimentTask task{build_sentiment_sets(corpus, lexicon, m.model.window, split), m.model};
    task.dims.vocab_size = task.data.vocab.size();
    return task;
}

struct RankingTask {
    RankingCorpus corpus;
    InvertedIndex index;
    LabeledSets<RankInstance> sets;
    std::vector<TrueExample<RankInstance>> validation;
    std::vector<Query> test_queries;
    /// BM25 candidates of each test query, in BM25 order.
    std::vector<std::vector<Candidate>> candidates;
    std::vector<std::string> skipped_queries;
    ModelDims dims;
};

/// Queries with relevant judgments are shuffled and split into test,
/// validation and true-label queries; every remaining query feeds U.
inline RankingTask prepare_ranking(ExperimentManifest const& m, std::uint64_t seed)
{
    RankingTask t;
    if (m.synthetic) {
        SyntheticRankingSpec spec = m.ranking_spec;
        spec.seed = data_seed(spec.seed, seed);
        t.corpus = gen_synth_ranking(spec).corpus;
    } else {
        t.corpus = load_ranking_corpus(m.docs_path, m.queries_path, m.qrels_path);
    }
    t.index = build_index(t.corpus.documents);

    std::vector<std::size_t> judged;
    std::vector<Query> weak_queries;
    for (std::size_t i = 0; i < t.corpus.queries.size(); ++i) {
        if (has_relevant(t.corpus.qrels, t.corpus.queries[i].id)) {
            judged.push_back(i);
        } else {
            weak_queries.push_back(t.corpus.queries[i]);
        }
    }
    Rng rng = Rng(seed).derive(2);
    rng.shuffle(std::span<std::size_t>(judged));
    auto const& r = m.ranking_split;
    if (judged.size() < r.test_queries + r.validation_queries + r.true_queries) {
        throw ConfigError("only " + std::to_string(judged.size()) + " judged queries for the requested split");
    }
    std::vector<Query> validation_queries;
    std::vector<Query> true_queries;
    for (std::size_t k = 0; k < judged.size(); ++k) {
        Query const& q = t.corpus.queries[judged[k]];
        if (k < r.test_queries) {
            t.test_queries.push_back(q);
        } else if (k < r.test_queries + r.validation_queries) {
            validation_queries.push_back(q);
        } else if (k < r.test_queries + r.validation_queries + r.true_queries) {
            true_queries.push_back(q);
        } else {
            weak_queries.push_back(q);
        }
    }

    RankSetOptions options;
    options.top_k = r.top_k;
    options.max_true_pairs = r.max_true_pairs;
    options.seed = Rng(seed).derive(3).next();
    auto built = build_rank_sets(t.corpus, t.index, weak_queries, true_queries, options);
    t.sets = std::move(built.sets);
    t.skipped_queries = std::move(built.skipped_queries);

    RankSetOptions validation_options = options;
    validation_options.max_true_pairs = r.max_validation_pairs;
    validation_options.seed = Rng(seed).derive(4).next();
    t.validation = build_rank_sets(t.corpus, t.index, {}, validation_queries, validation_options).sets.full;

    for (auto const& q : t.test_queries) {
        t.candidates.push_back(bm25_candidates(t.corpus, t.index, q, r.candidates));
    }
    t.dims = m.model;
    t.dims.vocab_size = t.corpus.vocab.size();
    return t;
}

// ---------------------------------------------------------------------------
// Evaluation

inline std::vector<std::size_t> sentiment_predictions(ModelParameters const& p,
                                                      std::vector<TrueExample<SentenceInstance>> const& examples)
{
    std::vector<std::size_t> out;
    out.reserve(examples.size());
    for (auto const& ex : examples) {
        out.push_back(argmax(supervision_forward(p, represent(p, ex.instance))));
    }
    return out;
}

inline std::vector<std::size_t> gold_classes(std::vector<TrueExample<SentenceInstance>> const& examples)
{
    std::vector<std::size_t> out;
    for (auto const& ex : examples) {
        out.push_back(argmax(ex.truth));
    }
    return out;
}

inline double sentiment_f1(ModelParameters const& p, SentimentTask const& t)
{
    return macro_f1(sentiment_predictions(p, t.data.test), gold_classes(t.data.test), semeval_classes());
}

inline double weak_annotator_f1(SentimentTask const& t)
{
    std::vector<std::size_t> pred;
    for (auto const& ex : t.data.test) {
        pred.push_back(argmax(ex.weak));
    }
    return macro_f1(pred, gold_classes(t.data.test), semeval_classes());
}

inline std::vector<RankedList> rerank_test(ModelParameters const& p, RankingTask const& t, std::size_t pool)
{
    std::vector<RankedList> runs;
    for (std::size_t i = 0; i < t.test_queries.size(); ++i) {
        if (t.candidates[i].empty()) {
            continue;
        }
        runs.push_back(rerank(p, t.test_queries[i].id, t.test_queries[i].tokens, t.candidates[i], pool));
    }
    return runs;
}

inline std::vector<RankedList> bm25_test(RankingTask const& t)
{
    std::vector<RankedList> runs;
    for (std::size_t i = 0; i < t.test_queries.size(); ++i) {
        RankedList list{t.test_queries[i].id, {}};
        auto const top = bm25_top_k(t.index, {}, t.test_queries[i].tokens, t.candidates[i].size());
        for (auto const& s : top) {
            list.entries.push_back({t.index.doc_ids[s.doc], s.score});
        }
        if (!list.entries.empty()) {
            runs.push_back(std::move(list));
        }
    }
    return runs;
}

template <typename Instance>
double mean_target_loss(ModelParameters const& p, std::vector<TrueExample<Instance>> const& examples)
{
    double total = 0.0;
    for (auto const& ex : examples) {
        total += task_loss(p.task, ex.truth, supervision_forward(p, represent(p, ex.instance)));
    }
    return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

template <typename Instance>
double mean_confidence_loss(ModelParameters const& p, std::vector<TrueExample<Instance>> const& examples)
{
    double total = 0.0;
    for (auto const& ex : examples) {
        total += binary_cross_entropy(ex.target, confidence_forward(p, represent(p, ex.instance), ex.weak));
    }
    return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------------------
// Cells

struct Metric {
    std::string name;
    double value = 0.0;
};

struct CellResult {
    Strategy strategy = Strategy::WA;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    std::vector<Metric> metrics;
    std::vector<CurveRecord> curves;
    std::vector<RankedList> run;
    std::optional<ModelParameters> model;

    CellResult() = default;
    CellResult(Strategy s, std::uint64_t sd) : strategy(s), seed(sd) {}
};

inline std::vector<std::string> metric_names(TaskKind task)
{
    if (task == TaskKind::sentiment) {
        return {"macro_f1"};
    }
    return {"map", "ndcg@20"};
}

inline TrainConfig cell_config(ExperimentManifest const& m, Strategy s, std::uint64_t seed)
{
    TrainConfig c = m.train;
    c.strategy = s;
    c.seed = seed;
    return c;
}

inline CellResult run_sentiment_cell(ExperimentManifest const& m, SentimentTask const& t, Strategy s, std::uint64_t seed)
{
    CellResult out(s, seed);
    if (s == Strategy::WA) {
        out.metrics.push_back({"macro_f1", weak_annotator_f1(t)});
        return out;
    }
    TrainConfig const config = cell_config(m, s, seed);
    ModelParameters const init = init_parameters(TaskKind::sentiment, t.dims, seed);
    TrainHooks hooks;
    hooks.checkpoint = [&](ModelParameters const& p, ModelParameters const* conf) {
        CheckpointEval e;
        e.validation_target_loss = mean_target_loss(p, t.data.validation);
        if (conf != nullptr) {
            e.validation_confidence_loss = mean_confidence_loss(*conf, t.data.validation);
        }
        e.test_metric = sentiment_f1(p, t);
        return e;
    };
    auto result = run_strategy(init, t.dims, t.data.sets, config, hooks);
    out.metrics.push_back({"macro_f1", sentiment_f1(result.params, t)});
    out.curves = std::move(result.log.curves);
    out.model = std::move(result.params);
    return out;
}

inline CellResult run_ranking_cell(ExperimentManifest const& m, RankingTask const& t, Strategy s, std::uint64_t seed)
{
    CellResult out(s, seed);
    auto score = [&](std::vector<RankedList> const& runs) {
        out.metrics.push_back({"map", mean_average_precision(runs, t.corpus.qrels)});
        out.metrics.push_back({"ndcg@20", ndcg_at_k(runs, t.corpus.qrels, 20)});
    };
    if (s == Strategy::WA) {
        out.run = bm25_test(t);
        score(out.run);
        return out;
    }
    TrainConfig const config = cell_config(m, s, seed);
    InitSources sources;
    sources.idf_corpus = &t.index;
    ModelParameters const init = init_parameters(TaskKind::ranking, t.dims, seed, sources);
    std::size_t const pool = m.ranking_split.rerank_pool;
    TrainHooks hooks;
    hooks.checkpoint = [&](ModelParameters const& p, ModelParameters const* conf) {
        CheckpointEval e;
        if (!t.validation.empty()) {
            e.validation_target_loss = mean_target_loss(p, t.validation);
            if (conf != nullptr) {
                e.validation_confidence_loss = mean_confidence_loss(*conf, t.validation);
            }
        }
        e.test_metric = mean_average_precision(rerank_test(p, t, pool), t.corpus.qrels);
        return e;
    };
    auto result = run_strategy(init, t.dims, t.sets, config, hooks);
    out.run = rerank_test(result.params, t, pool);
    score(out.run);
    out.curves = std::move(result.log.curves);
    out.model = std::move(result.params);
    return out;
}

// ---------------------------------------------------------------------------
// Tables

inline std::string format_value(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(10) << v;
    return ss.str();
}

inline std::string cell_name(Strategy s, std::uint64_t seed)
{
    return to_string(s) + "_seed" + std::to_string(seed);
}

struct SignificanceRow {
    Strategy strategy;
    Strategy baseline;
    std::optional<TTestResult> test;
};

struct ExperimentResult {
    std::vector<std::string> metrics;
    std::vector<CellResult> cells;  // manifest order: strategy-major, then seed
    std::vector<SignificanceRow> significance;

    /// Values of `metric` for `strategy` in seed order; nullopt for failed cells.
    [[nodiscard]] std::vector<std::optional<double>> values(Strategy s, std::string const& metric) const
    {
        std::vector<std::optional<double>> out;
        for (auto const& c : cells) {
            if (c.strategy != s) {
                continue;
            }
            std::optional<double> v;
            for (auto const& mv : c.metrics) {
                if (mv.name == metric) {
                    v = mv.value;
                }
            }
            out.push_back(c.failed ? std::nullopt : v);
        }
        return out;
    }

    [[nodiscard]] std::optional<double> mean(Strategy s, std::string const& metric) const
    {
        double total = 0.0;
        std::size_t n = 0;
        for (auto const& v : values(s, metric)) {
            if (v) {
                total += *v;
                ++n;
            }
        }
        return n == 0 ? std::nullopt : std::optional<double>(total / static_cast<double>(n));
    }
};

inline void write_metrics_csv(std::ostream& out, ExperimentResult const& r)
{
    out << "strategy,seed,metric,value\n";
    for (auto const& c : r.cells) {
        for (auto const& name : r.metrics) {
            out << to_string(c.strategy) << ',' << c.seed << ',' << name << ',';
            if (c.failed) {
                out << "failed";
            } else {
                for (auto const& mv : c.metrics) {
                    if (mv.name == name) {
                        out << format_value(mv.value);
                    }
                }
            }
            out << '\n';
        }
    }
}

inline void write_significance_csv(std::ostream& out, ExperimentResult const& r)
{
    out << "strategy,baseline,t,p,bonferroni_significant\n";
    for (auto const& row : r.significance) {
        out << to_string(row.strategy) << ',' << to_string(row.baseline) << ',';
        if (row.test) {
            out << format_value(row.test->t) << ',' << format_value(row.test->p) << ','
                << (row.test->significant ? "true" : "false") << '\n';
        } else {
            out << "nan,nan,false\n";
        }
    }
}

inline void write_summary_csv(std::ostream& out, ExperimentResult const& r, std::vector<Strategy> const& strategies)
{
    out << "strategy,metric,mean,completed\n";
    std::vector<Strategy> seen;
    for (auto s : strategies) {
        if (std::find(seen.begin(), seen.end(), s) != seen.end()) {
            continue;
        }
        seen.push_back(s);
        for (auto const& name : r.metrics) {
            std::size_t n = 0;
            for (auto const& v : r.values(s, name)) {
                n += v ? 1 : 0;
            }
            auto const mean = r.mean(s, name);
            out << to_string(s) << ',' << name << ',' << (mean ? format_value(*mean) : "nan") << ',' << n << '\n';
        }
    }
}

/// Paired t-tests of every strategy entry other than the baseline's first
/// occurrence against the baseline, on the task's first metric, over seeds
/// where both cells completed.
inline std::vector<SignificanceRow> significance_rows(ExperimentManifest const& m, ExperimentResult const& r)
{
    std::string const metric = r.metrics.front();
    std::vector<std::size_t> compared;
    bool baseline_seen = false;
    for (std::size_t i = 0; i < m.strategies.size(); ++i) {
        if (m.strategies[i] == m.baseline && !baseline_seen) {
            baseline_seen = true;
            continue;
        }
        compared.push_back(i);
    }
    auto const base = r.values(m.baseline, metric);
    std::vector<SignificanceRow> rows;
    for (auto i : compared) {
        Strategy const s = m.strategies[i];
        // Cells of this entry: the occurrence index among identical names.
        std::size_t occurrence = 0;
        for (std::size_t k = 0; k < i; ++k) {
            occurrence += m.strategies[k] == s ? 1 : 0;
        }
        auto const all = r.values(s, metric);
        std::vector<double> a;
        std::vector<double> b;
        for (std::size_t k = 0; k < m.seeds.size(); ++k) {
            auto const v = all[occurrence * m.seeds.size() + k];
            if (v && base[k]) {
                a.push_back(*v);
                b.push_back(*base[k]);
            }
        }
        SignificanceRow row{s, m.baseline, std::nullopt};
        if (a.size() >= 2) {
            row.test = paired_t_test(a, b, compared.size());
        }
        rows.push_back(row);
    }
    return rows;
}

struct ExperimentOptions {
    /// Progress lines go here when set.
    std::ostream* log = nullptr;
    bool write_files = true;
};

/// Runs every strategy x seed cell, then writes metrics.csv,
/// significance.csv, summary.csv, curves/<cell>.csv and, for ranking,
/// runs/<cell>.run under the manifest's output directory.
inline ExperimentResult run_experiment(ExperimentManifest const& m, ExperimentOptions const& options = {})
{
    ExperimentResult r;
    r.metrics = metric_names(m.task);
    std::vector<CellResult> by_order(m.strategies.size() * m.seeds.size());

    for (std::size_t k = 0; k < m.seeds.size(); ++k) {
        std::uint64_t const seed = m.seeds[k];
        std::optional<SentimentTask> sentiment;
        std::optional<RankingTask> ranking;
        std::optional<std::string> data_error;
        try {
            if (m.task == TaskKind::sentiment) {
                sentiment = prepare_sentiment(m, seed);
            } else {
                ranking = prepare_ranking(m, seed);
            }
        } catch (Error const& e) {
            data_error = e.what();
        }
        for (std::size_t i = 0; i < m.strategies.size(); ++i) {
            Strategy const s = m.strategies[i];
            CellResult cell(s, seed);
            if (data_error) {
                cell.failed = true;
                cell.error = *data_error;
            } else {
                try {
                    cell = sentiment ? run_sentiment_cell(m, *sentiment, s, seed) : run_ranking_cell(m, *ranking, s, seed);
                } catch (Error const& e) {
                    cell.failed = true;
                    cell.error = e.what();
                }
            }
            cell.model.reset();
            if (options.log != nullptr) {
                *options.log << cell_name(s, seed) << (cell.failed ? " failed: " + cell.error : " done") << '\n';
            }
            by_order[i * m.seeds.size() + k] = std::move(cell);
        }
    }
    r.cells = std::move(by_order);
    r.significance = significance_rows(m, r);

    if (options.write_files) {
        namespace fs = std::filesystem;
        fs::path const dir(m.out_dir);
        {
            auto out = open_output(dir / "metrics.csv");
            write_metrics_csv(out, r);
        }
        {
            auto out = open_output(dir / "significance.csv");
            write_significance_csv(out, r);
        }
        {
            auto out = open_output(dir / "summary.csv");
            write_summary_csv(out, r, m.strategies);
        }
        for (auto const& c : r.cells) {
            if (c.failed) {
                continue;
            }
            write_curves_csv(c.curves, dir / "curves" / (cell_name(c.strategy, c.seed) + ".csv"));
            if (m.task == TaskKind::ranking) {
                auto out = open_output(dir / "runs" / (cell_name(c.strategy, c.seed) + ".run"));
                write_trec_run(out, c.run, to_string(c.strategy));
            }
        }
    }
    return r;
}

}  // namespace cws
