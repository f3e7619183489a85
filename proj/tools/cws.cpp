#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cws/data_io.hpp"
#include "cws/experiment.hpp"
#include "cws/gradcheck_suite.hpp"
#include "cws/model_io.hpp"

namespace {

using namespace cws;
namespace fs = std::filesystem;

enum Exit { ok = 0, usage = 1, data = 2, verification = 3 };

struct Overrides {
    std::string manifest;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string strategy;
    std::string task;
    std::optional<std::size_t> max_weak_batches;
    std::optional<std::size_t> checkpoint_every;
};

void add_common(CLI::App* cmd, Overrides& o, bool needs_manifest)
{
    auto* m = cmd->add_option("--manifest", o.manifest, "experiment manifest (JSON)");
    if (needs_manifest) {
        m->required();
    }
    cmd->add_option("--seed", o.seed, "run seed");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--strategy", o.strategy, "strategy name");
    cmd->add_option("--max-weak-batches", o.max_weak_batches, "stop after this many weak batches");
    cmd->add_option("--checkpoint-every", o.checkpoint_every, "weak batches between checkpoints");
}

ExperimentManifest manifest_with(Overrides const& o)
{
    ExperimentManifest m = load_manifest(o.manifest);
    if (!o.task.empty() && parse_manifest({{"task", o.task}, {"strategies", {"WA"}}, {"seeds", {0}}}).task != m.task) {
        throw ConfigError("--task " + o.task + " does not match the manifest");
    }
    if (o.seed) {
        m.seeds = {*o.seed};
    }
    if (!o.out_dir.empty()) {
        m.out_dir = o.out_dir;
    }
    if (!o.strategy.empty()) {
        m.strategies = {parse_strategy(o.strategy)};
        m.baseline = m.strategies.front();
    }
    if (o.max_weak_batches) {
        m.train.max_weak_batches = *o.max_weak_batches;
    }
    if (o.checkpoint_every) {
        m.train.checkpoint_every = *o.checkpoint_every;
    }
    return m;
}

TaskKind task_named(std::string const& name)
{
    if (name == "ranking") {
        return TaskKind::ranking;
    }
    if (name == "sentiment") {
        return TaskKind::sentiment;
    }
    throw ConfigError("--task must be 'ranking' or 'sentiment'");
}

void print_metrics(std::ostream& out, std::vector<Metric> const& metrics)
{
    out << "metric,value\n";
    for (auto const& m : metrics) {
        out << m.name << ',' << format_value(m.value) << '\n';
    }
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
    std::string task;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> noise_rate;
    std::string manifest;
};

int run_synth(SynthArgs const& a)
{
    TaskKind task = TaskKind::sentiment;
    SyntheticSentimentSpec sentiment;
    SyntheticRankingSpec ranking;
    if (!a.manifest.empty()) {
        auto const m = load_manifest(a.manifest);
        task = m.task;
        sentiment = m.sentiment_spec;
        ranking = m.ranking_spec;
    } else {
        task = task_named(a.task);
    }
    if (a.seed) {
        sentiment.seed = ranking.seed = *a.seed;
    }
    if (a.noise_rate) {
        sentiment.noise_rate = ranking.noise_rate = *a.noise_rate;
    }
    fs::path const dir(a.out_dir);
    if (task == TaskKind::sentiment) {
        auto const s = gen_synth_sentiment(sentiment);
        auto sentences = open_output(dir / "sentences.jsonl");
        write_sentiment_jsonl(sentences, s.corpus);
        auto released = open_output(dir / "lexicon.tsv");
        write_lexicon_tsv(released, s.released);
        auto hidden = open_output(dir / "hidden_lexicon.tsv");
        write_lexicon_tsv(hidden, s.hidden);
        std::cerr << "wrote " << s.corpus.labeled.size() << " labeled and " << s.corpus.unlabeled.size()
                  << " unlabeled sentences to " << dir.string() << '\n';
    } else {
        auto const r = gen_synth_ranking(ranking);
        write_ranking_corpus(dir, r.corpus);
        std::cerr << "wrote " << r.corpus.documents.size() << " documents and " << r.corpus.queries.size()
                  << " queries to " << dir.string() << '\n';
    }
    return ok;
}

// --- annotate --------------------------------------------------------------

struct AnnotateArgs {
    std::string task;
    std::string docs;
    std::string queries;
    std::string sentences;
    std::string lexicon;
    std::string out;
    std::size_t k = 100;
};

int run_annotate(AnnotateArgs const& a)
{
    auto out = open_output(a.out);
    if (task_named(a.task) == TaskKind::ranking) {
        if (a.docs.empty() || a.queries.empty()) {
            throw ConfigError("ranking annotation needs --docs and --queries");
        }
        auto docs_in = open_input(a.docs);
        auto queries_in = open_input(a.queries);
        auto const corpus =
            make_ranking_corpus(parse_tsv_records(docs_in, a.docs), parse_tsv_records(queries_in, a.queries), {});
        auto const index = build_index(corpus.documents);
        std::vector<RankedList> runs;
        for (auto const& q : corpus.queries) {
            RankedList list{q.id, {}};
            for (auto const& s : bm25_top_k(index, {}, q.tokens, a.k)) {
                list.entries.push_back({index.doc_ids[s.doc], s.score});
            }
            runs.push_back(std::move(list));
        }
        write_trec_run(out, runs, "BM25");
        return ok;
    }
    if (a.sentences.empty() || a.lexicon.empty()) {
        throw ConfigError("sentiment annotation needs --sentences and --lexicon");
    }
    auto const corpus = load_sentiment_corpus(a.sentences);
    auto const lexicon = load_lexicon_tsv(a.lexicon);
    out << std::setprecision(17);
    out << "id\tpositive\tnegative\tneutral\n";
    for (auto const* pool : {&corpus.labeled, &corpus.unlabeled}) {
        for (auto const& r : *pool) {
            auto const d = lexicon_annotate(lexicon, r.tokens);
            out << r.id << '\t' << d[0] << '\t' << d[1] << '\t' << d[2] << '\n';
        }
    }
    return ok;
}

// --- train -----------------------------------------------------------------

int run_train(Overrides const& o)
{
    auto m = manifest_with(o);
    if (m.strategies.size() != 1) {
        throw ConfigError("train runs one strategy; pass --strategy or list exactly one in the manifest");
    }
    std::uint64_t const seed = m.seeds.front();
    Strategy const s = m.strategies.front();
    fs::path const dir(m.out_dir);
    CellResult cell = m.task == TaskKind::sentiment ? run_sentiment_cell(m, prepare_sentiment(m, seed), s, seed)
                                                    : run_ranking_cell(m, prepare_ranking(m, seed), s, seed);
    if (cell.model) {
        save_model(*cell.model, (dir / "model.json").string());
        write_curves_csv(cell.curves, dir / "curves.csv");
    }
    if (m.task == TaskKind::ranking) {
        auto run = open_output(dir / "run.txt");
        write_trec_run(run, cell.run, to_string(s));
    }
    ExperimentResult r;
    r.metrics = metric_names(m.task);
    r.cells.push_back(std::move(cell));
    auto metrics = open_output(dir / "metrics.csv");
    write_metrics_csv(metrics, r);
    print_metrics(std::cout, r.cells.front().metrics);
    return ok;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    Overrides common;
    std::string run;
    std::string qrels;
    std::string model;
};

int run_eval(EvalArgs const& a)
{
    if (!a.run.empty() || !a.qrels.empty()) {
        if (a.run.empty() || a.qrels.empty()) {
            throw ConfigError("run evaluation needs both --run and --qrels");
        }
        auto run_in = open_input(a.run);
        auto qrels_in = open_input(a.qrels);
        auto const runs = read_trec_run(run_in, a.run);
        auto const qrels = read_qrels(qrels_in, a.qrels);
        print_metrics(std::cout, {{"map", mean_average_precision(runs, qrels)}, {"ndcg@20", ndcg_at_k(runs, qrels, 20)}});
        return ok;
    }
    if (a.common.manifest.empty() || a.model.empty()) {
        throw ConfigError("eval needs --run and --qrels, or --manifest and --model");
    }
    auto const m = manifest_with(a.common);
    auto const params = load_model(a.model);
    if (params.task != m.task) {
        throw ValidationError("model task does not match the manifest");
    }
    std::uint64_t const seed = m.seeds.front();
    if (m.task == TaskKind::sentiment) {
        auto const t = prepare_sentiment(m, seed);
        print_metrics(std::cout, {{"macro_f1", sentiment_f1(params, t)}});
    } else {
        auto const t = prepare_ranking(m, seed);
        auto const runs = rerank_test(params, t, m.ranking_split.rerank_pool);
        print_metrics(std::cout,
                      {{"map", mean_average_precision(runs, t.corpus.qrels)}, {"ndcg@20", ndcg_at_k(runs, t.corpus.qrels, 20)}});
    }
    return ok;
}

// --- experiment ------------------------------------------------------------

int run_experiment_cmd(Overrides const& o)
{
    auto const m = manifest_with(o);
    ExperimentOptions options;
    options.log = &std::cerr;
    auto const r = run_experiment(m, options);
    write_summary_csv(std::cout, r, m.strategies);
    for (auto const& c : r.cells) {
        if (c.failed) {
            std::cerr << cell_name(c.strategy, c.seed) << ": " << c.error << '\n';
        }
    }
    return ok;
}

// --- gradcheck -------------------------------------------------------------

int run_gradcheck(std::uint64_t seed, bool inject_fault)
{
    auto const results = run_gradcheck_suite(seed, 1e-5, inject_fault ? 2.0 : 1.0);
    bool pass = true;
    std::cout << "check,max_relative_error,status\n";
    for (auto const& r : results) {
        bool const good = r.max_error < gradcheck_threshold;
        pass = pass && good;
        std::cout << r.name << ',' << std::scientific << std::setprecision(3) << r.max_error << ','
                  << (good ? "ok" : "FAIL") << '\n';
    }
    if (!pass) {
        std::cerr << "gradient check failed: relative error at or above " << gradcheck_threshold << '\n';
        return verification;
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Confidence-weighted weak supervision"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus");
    synth_cmd->add_option("--task", synth.task, "ranking or sentiment")->check(CLI::IsMember({"ranking", "sentiment"}));
    synth_cmd->add_option("--out-dir", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--noise-rate", synth.noise_rate, "weak annotator corruption rate")->check(CLI::Range(0.0, 1.0));
    synth_cmd->add_option("--manifest", synth.manifest, "take the synthetic spec from a manifest");

    AnnotateArgs annotate;
    auto* annotate_cmd = app.add_subcommand("annotate", "emit weak labels for a corpus");
    annotate_cmd->add_option("--task", annotate.task, "ranking or sentiment")
        ->required()
        ->check(CLI::IsMember({"ranking", "sentiment"}));
    annotate_cmd->add_option("--docs", annotate.docs, "docs.tsv");
    annotate_cmd->add_option("--queries", annotate.queries, "queries.tsv");
    annotate_cmd->add_option("--sentences", annotate.sentences, "sentences JSONL");
    annotate_cmd->add_option("--lexicon", annotate.lexicon, "lexicon TSV");
    annotate_cmd->add_option("--k", annotate.k, "documents per query")->check(CLI::PositiveNumber);
    annotate_cmd->add_option("--out", annotate.out, "output file")->required();

    Overrides train;
    auto* train_cmd = app.add_subcommand("train", "train and evaluate one strategy");
    add_common(train_cmd, train, true);
    train_cmd->add_option("--task", train.task, "expected task");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "score a TREC run or a saved model");
    add_common(eval_cmd, eval.common, false);
    eval_cmd->add_option("--run", eval.run, "TREC run file");
    eval_cmd->add_option("--qrels", eval.qrels, "TREC qrels file");
    eval_cmd->add_option("--model", eval.model, "model JSON written by train");

    Overrides experiment;
    auto* experiment_cmd = app.add_subcommand("experiment", "run every strategy x seed cell of a manifest");
    add_common(experiment_cmd, experiment, true);
    experiment_cmd->add_option("--task", experiment.task, "expected task");

    std::uint64_t gradcheck_seed = 1;
    bool inject_fault = false;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of every layer and network");
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "seed for random parameters");
    gradcheck_cmd->add_flag("--inject-fault", inject_fault, "double one analytic gradient");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*synth_cmd) {
            if (synth.manifest.empty() && synth.task.empty()) {
                throw ConfigError("synth needs --task or --manifest");
            }
            return run_synth(synth);
        }
        if (*annotate_cmd) {
            return run_annotate(annotate);
        }
        if (*train_cmd) {
            return run_train(train);
        }
        if (*eval_cmd) {
            return run_eval(eval);
        }
        if (*experiment_cmd) {
            return run_experiment_cmd(experiment);
        }
        if (*gradcheck_cmd) {
            return run_gradcheck(gradcheck_seed, inject_fault);
        }
    } catch (ConfigError const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (UnsupportedStrategyError const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (Error const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return data;
    }
    return usage;
}
