// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "cws/experiment.hpp"
#include "cws/gradcheck_suite.hpp"
#include "oracles.hpp"

namespace {

using namespace cws;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double gradcheck_max_error = 1e-4;
constexpr double gradcheck_budget_s = 60.0;
constexpr int algebra_trials = 200;
constexpr double linearity_tol = 1e-12;
constexpr int target_trials = 10000;
constexpr double target_tol = 1e-12;
constexpr int metric_trials = 100;
constexpr double metric_tol = 1e-12;
constexpr double bm25_tol = 1e-9;
constexpr double main_margin = 0.02;
constexpr double main_budget_s = 600.0;
constexpr std::size_t strategy_table_max_v = 50;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fixed(double v, int digits = 4)
{
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

std::string slurp(fs::path const& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(std::string const& args)
{
    std::string const cmd = std::string(CWS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int const status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_correctness()
{
    auto const start = Clock::now();
    double worst = 0.0;
    std::string worst_name;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (auto const& r : run_gradcheck_suite(seed)) {
            if (r.max_error > worst) {
                worst = r.max_error;
                worst_name = r.name;
            }
        }
    }
    int const clean = run_cli("gradcheck --seed 1");
    int const faulty = run_cli("gradcheck --seed 1 --inject-fault");
    double const elapsed = seconds_since(start);
    Outcome o;
    o.pass = worst < gradcheck_max_error && clean == 0 && faulty == 3 && elapsed < gradcheck_budget_s;
    std::ostringstream ss;
    ss << "max relative error " << std::scientific << std::setprecision(2) << worst << " (" << worst_name
       << "), cli exit " << clean << ", with fault " << faulty << ", " << fixed(elapsed, 1) << " s";
    o.detail = ss.str();
    return o;
}

// --- 2 ---------------------------------------------------------------------

ModelDims algebra_dims(Rng& rng)
{
    ModelDims d;
    d.vocab_size = 12;
    d.embedding_dim = 3 + rng.index(4);
    d.filter_count = 2 + rng.index(3);
    d.window = 2;
    d.supervision_hidden = {4 + rng.index(4)};
    d.confidence_hidden = {4, 4};
    return d;
}

std::vector<TokenId> text(Rng& rng, std::size_t min_len)
{
    std::vector<TokenId> t;
    for (std::size_t i = 0, n = min_len + rng.index(4); i < n; ++i) {
        t.push_back(static_cast<TokenId>(2 + rng.index(10)));
    }
    return t;
}

std::vector<WeakExample<RankInstance>> rank_batch(Rng& rng, std::size_t n)
{
    std::vector<WeakExample<RankInstance>> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({{text(rng, 1), text(rng, 1), text(rng, 1)}, {rng.uniform()}});
    }
    return out;
}

std::vector<WeakExample<SentenceInstance>> sentence_batch(Rng& rng, std::size_t n)
{
    std::vector<WeakExample<SentenceInstance>> out;
    for (std::size_t i = 0; i < n; ++i) {
        Label d{rng.uniform(), rng.uniform(), rng.uniform()};
        double const s = d[0] + d[1] + d[2];
        for (auto& v : d) {
            v /= s;
        }
        out.push_back({{text(rng, 2)}, d});
    }
    return out;
}

void pin_confidence(ModelParameters& p, double bias)
{
    auto& last = p.confidence.back();
    std::fill(last.weights.values().begin(), last.weights.values().end(), 0.0);
    std::fill(last.bias.begin(), last.bias.end(), bias);
}

bool identical(ModelParameters const& a, ModelParameters const& b)
{
    return std::all_of(all_groups.begin(), all_groups.end(), [&](ParamGroup g) { return same_values(a, b, g); });
}

double max_linearity_gap(ModelParameters const& a, ModelParameters const& b, double scale)
{
    double gap = 0.0;
    for (auto g : {ParamGroup::representation, ParamGroup::supervision}) {
        auto const ta = a.tensors(g);
        auto const tb = b.tensors(g);
        for (std::size_t t = 0; t < ta.size(); ++t) {
            for (std::size_t j = 0; j < ta[t].size(); ++j) {
                gap = std::max(gap, std::fabs(tb[t][j] - scale * ta[t][j]));
            }
        }
    }
    return gap;
}

template <typename Instance>
void algebra_trial(TaskKind task,
                   std::vector<WeakExample<Instance>> const& examples,
                   ModelDims const& dims,
                   std::uint64_t seed,
                   Rng& rng,
                   int& unit_ok,
                   int& zero_ok,
                   double& worst_gap)
{
    std::span<WeakExample<Instance> const> const u(examples);
    std::vector<std::size_t> batch(examples.size());
    std::iota(batch.begin(), batch.end(), std::size_t{0});
    TrainConfig config;
    config.lr = 1e-2;
    config.dropout = rng.bernoulli(0.5) ? 0.3 : 0.0;

    // (a) c~ = 1 equals a WSO step from the same state and dropout stream.
    auto a = init_parameters(task, dims, seed);
    pin_confidence(a, 50.0);
    auto b = a;
    Rng ra(seed);
    Rng rb(seed);
    weak_step(a, a, u, batch, config, ra);
    wso_step(b, u, batch, config, rb);
    unit_ok += identical(a, b) ? 1 : 0;

    // (b) c~ = 0 without regularization leaves every parameter unchanged.
    auto z = init_parameters(task, dims, seed + 1);
    pin_confidence(z, -800.0);
    auto const before = z;
    config.l2_weight = 0.0;
    Rng rz(seed);
    weak_step(z, z, u, batch, config, rz);
    zero_ok += identical(z, before) ? 1 : 0;

    // (c) pre-optimizer gradient is linear in c~.
    auto const p = init_parameters(task, dims, seed + 2);
    Vector c(batch.size());
    for (auto& v : c) {
        v = rng.uniform();
    }
    double const scale = rng.uniform(0.1, 3.0);
    Vector scaled(c);
    for (auto& v : scaled) {
        v *= scale;
    }
    auto const g1 = weighted_target_gradient(p, u, batch, c, Pass{});
    auto const g2 = weighted_target_gradient(p, u, batch, scaled, Pass{});
    worst_gap = std::max(worst_gap, max_linearity_gap(g1.grads, g2.grads, scale));
}

Outcome weighting_algebra()
{
    Rng rng(2024);
    int unit_ok = 0;
    int zero_ok = 0;
    double worst_gap = 0.0;
    for (int trial = 0; trial < algebra_trials; ++trial) {
        auto const dims = algebra_dims(rng);
        std::size_t const n = 1 + rng.index(6);
        auto const seed = static_cast<std::uint64_t>(trial) * 7 + 1;
        if (trial % 2 == 0) {
            algebra_trial(TaskKind::ranking, rank_batch(rng, n), dims, seed, rng, unit_ok, zero_ok, worst_gap);
        } else {
            algebra_trial(TaskKind::sentiment, sentence_batch(rng, n), dims, seed, rng, unit_ok, zero_ok, worst_gap);
        }
    }
    Outcome o;
    o.pass = unit_ok == algebra_trials && zero_ok == algebra_trials && worst_gap <= linearity_tol;
    std::ostringstream ss;
    ss << "unit-confidence identical " << unit_ok << "/" << algebra_trials << ", zero-confidence unchanged " << zero_ok
       << "/" << algebra_trials << ", linearity gap " << std::scientific << std::setprecision(2) << worst_gap;
    o.detail = ss.str();
    return o;
}

// --- 3 ---------------------------------------------------------------------

Outcome label_and_target_formulas()
{
    Rng rng(77);
    double worst = 0.0;
    for (int i = 0; i < target_trials; ++i) {
        // Scores include exact zeros and wide magnitudes.
        double const a = rng.bernoulli(0.05) ? 0.0 : std::exp(rng.uniform(-5.0, 5.0));
        double const b = rng.bernoulli(0.05) ? 0.0 : std::exp(rng.uniform(-5.0, 5.0));
        double const ab = pairwise_weak_label(a, b);
        double const ba = pairwise_weak_label(b, a);
        worst = std::max(worst, std::fabs(ab + ba - 1.0));
        double const direct = a + b == 0.0 ? 0.5 : a / (a + b);
        worst = std::max(worst, std::fabs(ab - direct));

        double const y = rng.bernoulli(0.5) ? 1.0 : rng.uniform();
        worst = std::max(worst, std::fabs(confidence_target_rank(y, ab) - (1.0 - std::fabs(y - ab))));

        std::array<double, 3> t{};
        t[rng.index(3)] = 1.0;
        std::array<double, 3> w{rng.uniform(), rng.uniform(), rng.uniform()};
        double const s = w[0] + w[1] + w[2];
        for (auto& v : w) {
            v /= s;
        }
        double const expect = 1.0 - (std::fabs(t[0] - w[0]) + std::fabs(t[1] - w[1]) + std::fabs(t[2] - w[2])) / 3.0;
        worst = std::max(worst, std::fabs(confidence_target_class(t, w) - expect));
    }
    Outcome o;
    o.pass = worst <= target_tol;
    std::ostringstream ss;
    ss << target_trials << " inputs, worst deviation " << std::scientific << std::setprecision(2) << worst;
    o.detail = ss.str();
    return o;
}

// --- 4 ---------------------------------------------------------------------

double hand_bm25(std::vector<std::vector<int>> const& docs, std::vector<int> const& query, std::size_t d)
{
    double const k1 = 1.2;
    double const b = 0.75;
    double const n = static_cast<double>(docs.size());
    double avg = 0.0;
    for (auto const& doc : docs) {
        avg += static_cast<double>(doc.size()) / n;
    }
    double score = 0.0;
    for (int term : query) {
        double df = 0.0;
        for (auto const& doc : docs) {
            df += std::count(doc.begin(), doc.end(), term) > 0 ? 1.0 : 0.0;
        }
        double const tf = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), term));
        double const idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * static_cast<double>(docs[d].size()) / avg));
    }
    return score;
}

Outcome metric_oracles()
{
    Rng rng(4242);
    double worst = 0.0;
    for (int trial = 0; trial < metric_trials; ++trial) {
        Qrels qrels;
        std::vector<RankedList> runs;
        double ap_sum = 0.0;
        int with_relevant = 0;
        double ndcg_sum = 0.0;
        for (int q = 0; q < 3; ++q) {
            std::string const qid = "q" + std::to_string(q);
            std::vector<std::string> docs;
            for (int d = 0; d < 25; ++d) {
                docs.push_back("d" + std::to_string(d));
            }
            rng.shuffle(std::span<std::string>(docs));
            docs.resize(5 + rng.index(21));
            RankedList list{qid, {}};
            for (std::size_t r = 0; r < docs.size(); ++r) {
                list.entries.push_back({docs[r], static_cast<double>(docs.size() - r)});
            }
            runs.push_back(list);
            for (int j = 0; j < 7; ++j) {
                qrels[qid]["d" + std::to_string(rng.index(25))] = static_cast<int>(rng.index(4));
            }
            auto const& grades = qrels[qid];
            bool const any = std::any_of(grades.begin(), grades.end(), [](auto const& kv) { return kv.second >= 1; });
            if (any) {
                ap_sum += oracle::average_precision(docs, grades, 1000);
                ++with_relevant;
            }
            ndcg_sum += oracle::ndcg(docs, grades, 20);
        }
        if (with_relevant > 0) {
            worst = std::max(worst, std::fabs(mean_average_precision(runs, qrels) - ap_sum / with_relevant));
        }
        worst = std::max(worst, std::fabs(ndcg_at_k(runs, qrels, 20) - ndcg_sum / 3.0));

        std::vector<std::size_t> pred;
        std::vector<std::size_t> gold;
        for (std::size_t i = 0, n = 1 + rng.index(60); i < n; ++i) {
            pred.push_back(rng.index(3));
            gold.push_back(rng.index(3));
        }
        worst = std::max(worst, std::fabs(macro_f1(pred, gold, semeval_classes())
                                          - oracle::macro_f1(pred, gold, {0, 1})));
    }

    // Three documents over terms a=0 b=1 c=2 d=3 e=4, query "a b". By hand:
    // idf(a) = idf(b) = ln(1.5/2.5 + 1), average length 10/3.
    std::vector<std::vector<int>> const toy{{0, 1, 2}, {0, 0, 3}, {1, 4, 4, 4}};
    std::array const hand{0.9801023548252308, 0.664956903112938, 0.4344571362775708};
    std::vector<Document> const documents{{"d1", {0, 1, 2}}, {"d2", {0, 0, 3}}, {"d3", {1, 4, 4, 4}}};
    auto const index = build_index(documents);
    std::vector<TokenId> const query{0, 1};
    Bm25Params const params{1.2, 0.75};
    double bm25_worst = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
        double const got = bm25_score(index, params, query, d);
        bm25_worst = std::max(bm25_worst, std::fabs(got - hand[d]));
        bm25_worst = std::max(bm25_worst, std::fabs(got - hand_bm25(toy, {0, 1}, d)));
    }
    Outcome o;
    o.pass = worst <= metric_tol && bm25_worst <= bm25_tol;
    std::ostringstream ss;
    ss << metric_trials << " cases, worst metric deviation " << std::scientific << std::setprecision(2) << worst
       << ", bm25 deviation " << bm25_worst;
    o.detail = ss.str();
    return o;
}

// --- 5 and 6 ---------------------------------------------------------------

nlohmann::json main_manifest(fs::path const& out)
{
    return {
        {"task", "sentiment"},
        {"data",
         {{"synthetic",
           {{"noise_rate", 0.3},
            {"num_labeled", 2400},
            {"num_unlabeled", 20000},
            {"seed", 1}}}}},
        {"strategies", {"WA", "WSO", "CWS_JT"}},
        {"baseline", "WSO"},
        {"seeds", {1, 2, 3, 4, 5}},
        {"train", {{"lr", 0.01}, {"ratio_weak", 3}, {"dropout", 0.2}, {"checkpoint_every", 10}}},
        {"split", {{"true_size", 200}, {"validation_size", 200}}},
        {"out_dir", out.string()},
    };
}

struct MainRun {
    ExperimentResult result;
    double seconds = 0.0;
};

Outcome main_result(MainRun const& run)
{
    auto const& r = run.result;
    auto const jt = r.mean(Strategy::CWS_JT, "macro_f1");
    auto const wso = r.mean(Strategy::WSO, "macro_f1");
    auto const wa = r.mean(Strategy::WA, "macro_f1");
    Outcome o;
    if (!jt || !wso || !wa) {
        return {false, "a cell failed"};
    }
    double const margin = *jt - std::max(*wso, *wa);
    o.pass = *jt >= *wso && *jt >= *wa && margin >= main_margin && run.seconds < main_budget_s;
    o.detail = "mean Macro-F1 CWS_JT " + fixed(*jt) + ", WSO " + fixed(*wso) + ", WA " + fixed(*wa) + "; margin "
               + fixed(margin) + " (needs " + fixed(main_margin, 2) + "), " + fixed(run.seconds, 1) + " s";
    return o;
}

/// Index of the first checkpoint whose seed-averaged test metric exceeds
/// `line`, or nullopt if none does.
std::optional<std::size_t> first_crossing(ExperimentResult const& r, Strategy s, double line,
                                          std::vector<double>* curve_out = nullptr)
{
    std::vector<double> sum;
    std::size_t runs = 0;
    for (auto const& c : r.cells) {
        if (c.strategy != s || c.failed) {
            continue;
        }
        std::size_t k = 0;
        for (auto const& row : c.curves) {
            if (row.split != "train" || !row.metric_test) {
                continue;
            }
            if (sum.size() <= k) {
                sum.push_back(0.0);
            }
            sum[k++] += *row.metric_test;
        }
        ++runs;
    }
    std::optional<std::size_t> out;
    for (std::size_t k = 0; k < sum.size(); ++k) {
        sum[k] /= static_cast<double>(runs);
        if (!out && sum[k] > line) {
            out = k;
        }
    }
    if (curve_out != nullptr) {
        *curve_out = sum;
    }
    return out;
}

Outcome learning_pace(MainRun const& run)
{
    auto const wa = run.result.mean(Strategy::WA, "macro_f1");
    if (!wa) {
        return {false, "WA cells failed"};
    }
    auto const jt = first_crossing(run.result, Strategy::CWS_JT, *wa);
    auto const wso = first_crossing(run.result, Strategy::WSO, *wa);
    auto show = [](std::optional<std::size_t> i) { return i ? std::to_string(*i) : std::string("never"); };
    Outcome o;
    o.pass = jt.has_value() && (!wso || *jt <= *wso);
    o.detail = "first checkpoint above WA " + fixed(*wa) + ": CWS_JT " + show(jt) + ", WSO " + show(wso);
    return o;
}

// --- 7 ---------------------------------------------------------------------

nlohmann::json ranking_manifest(fs::path const& out)
{
    nlohmann::json strategies = nlohmann::json::array();
    for (auto s : all_strategies) {
        strategies.push_back(to_string(s));
    }
    return {
        {"task", "ranking"},
        {"data", {{"synthetic", {{"seed", 1}}}}},
        {"strategies", strategies},
        {"baseline", "WSO"},
        {"seeds", {1, 2, 3, 4, 5}},
        {"train", {{"lr", 0.001}, {"ratio_weak", 3}, {"supervised_batches", 100}}},
        {"split", {{"max_true_pairs", strategy_table_max_v}}},
        {"out_dir", out.string()},
    };
}

Outcome strategy_table(fs::path const& dir)
{
    auto const m = parse_manifest(ranking_manifest(dir));
    auto const start = Clock::now();
    auto const r = run_experiment(m);
    double const elapsed = seconds_since(start);
    std::size_t failed = 0;
    for (auto const& c : r.cells) {
        failed += c.failed ? 1 : 0;
        if (c.failed) {
            std::cerr << cell_name(c.strategy, c.seed) << ": " << c.error << '\n';
        }
    }
    std::istringstream metrics(slurp(dir / "metrics.csv"));
    std::string line;
    std::getline(metrics, line);
    std::map<std::pair<std::string, std::string>, std::size_t> rows;
    while (std::getline(metrics, line)) {
        std::istringstream fields(line);
        std::string strategy;
        std::string seed;
        std::getline(fields, strategy, ',');
        std::getline(fields, seed, ',');
        ++rows[{strategy, seed}];
    }
    std::size_t const cells = m.strategies.size() * m.seeds.size();
    bool const every_cell = rows.size() == cells
                            && std::all_of(rows.begin(), rows.end(), [&](auto const& kv) {
                                   return kv.second == r.metrics.size();
                               });
    auto const st = r.mean(Strategy::CWS_ST, "map");
    auto const jt = r.mean(Strategy::CWS_JT, "map");
    Outcome o;
    o.pass = failed == 0 && every_cell && st && jt && *st < *jt;
    o.detail = std::to_string(m.strategies.size()) + " strategies x " + std::to_string(m.seeds.size()) + " seeds, "
               + std::to_string(failed) + " failed, rows per cell " + std::to_string(r.metrics.size())
               + (every_cell ? "" : " (missing rows)") + "; mean MAP CWS_ST " + (st ? fixed(*st) : "nan")
               + " vs CWS_JT " + (jt ? fixed(*jt) : "nan") + ", |V| <= " + std::to_string(strategy_table_max_v)
               + "; " + fixed(elapsed, 1) + " s";
    return o;
}

// --- 8 ---------------------------------------------------------------------

Outcome determinism(fs::path const& base)
{
    std::vector<std::string> mismatched;
    auto check = [&](nlohmann::json manifest, std::string const& tag) {
        for (int rep = 0; rep < 2; ++rep) {
            manifest["out_dir"] = (base / (tag + std::to_string(rep))).string();
            run_experiment(parse_manifest(manifest));
        }
        fs::path const a = base / (tag + "0");
        fs::path const b = base / (tag + "1");
        for (auto const& [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
            for (auto const& entry : fs::recursive_directory_iterator(x)) {
                if (!entry.is_regular_file()) {
                    continue;
                }
                auto const rel = fs::relative(entry.path(), x);
                if (!fs::exists(y / rel) || slurp(entry.path()) != slurp(y / rel)) {
                    mismatched.push_back(tag + "/" + rel.string());
                }
            }
        }
    };
    auto sentiment = main_manifest("");
    sentiment["strategies"] = {"CWS_JT"};
    sentiment["baseline"] = "CWS_JT";
    sentiment["seeds"] = {3};
    check(sentiment, "sentiment");
    auto ranking = ranking_manifest("");
    ranking["strategies"] = {"CWS_JT", "CWS_ST"};
    ranking["baseline"] = "CWS_JT";
    ranking["seeds"] = {2};
    check(ranking, "ranking");
    Outcome o;
    o.pass = mismatched.empty();
    o.detail = mismatched.empty() ? "reruns byte-identical (metrics, significance, summary, curves, runs)"
                                  : "differs: " + mismatched.front();
    return o;
}

}  // namespace

int main()
{
    fs::path const work = fs::temp_directory_path() / "cws_acceptance";
    fs::remove_all(work);
    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
    MainRun main_run;
    bool main_done = false;
    auto ensure_main = [&] {
        if (!main_done) {
            auto const start = Clock::now();
            main_run.result = run_experiment(parse_manifest(main_manifest(work / "main")));
            main_run.seconds = seconds_since(start);
            main_done = true;
        }
    };
    criteria.emplace_back("gradient correctness", gradient_correctness);
    criteria.emplace_back("weighting algebra", weighting_algebra);
    criteria.emplace_back("weak label and confidence target formulas", label_and_target_formulas);
    criteria.emplace_back("metric oracles and BM25 fixture", metric_oracles);
    criteria.emplace_back("main result on synthetic sentiment", [&] {
        ensure_main();
        return main_result(main_run);
    });
    criteria.emplace_back("learning pace", [&] {
        ensure_main();
        return learning_pace(main_run);
    });
    criteria.emplace_back("strategy table on synthetic ranking", [&] { return strategy_table(work / "ranking"); });
    criteria.emplace_back("determinism", [&] { return determinism(work / "determinism"); });

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (std::exception const& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
