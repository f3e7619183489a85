#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "cws/annotators.hpp"
#include "cws/error.hpp"
#include "cws/model.hpp"

namespace cws {

struct RankedEntry {
    std::string doc_id;
    double score = 0.0;

    bool operator==(RankedEntry const&) const = default;
};

struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;
};

/// query-id -> doc-id -> grade
using Qrels = std::map<std::string, std::map<std::string, int>>;

/// Descending score, ties by ascending doc-id.
inline void sort_ranked(std::vector<RankedEntry>& entries)
{
    std::sort(entries.begin(), entries.end(), [](RankedEntry const& a, RankedEntry const& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_id < b.doc_id;
    });
}

struct Candidate {
    std::string doc_id;
    std::vector<TokenId> tokens;
};

/// Round-robin tournament over the first `pool_size` candidates (given in
/// BM25 order): s(d) = sum over d' != d of y^(q, d, d'). The pool is ranked by
/// s; the remaining candidates follow in their original order with scores
/// below every pool score.
inline RankedList rerank(ModelParameters const& params,
                         std::string const& query_id,
                         std::vector<TokenId> const& query,
                         std::vector<Candidate> const& candidates,
                         std::size_t pool_size)
{
    if (candidates.empty()) {
        throw DegenerateInputError("rerank: no candidates for query '" + query_id + "'");
    }
    std::size_t const pool = std::min(pool_size, candidates.size());
    std::size_t const m = params.embedding.dim();
    Vector const q = compose_text(params, query);
    std::vector<Vector> docs;
    docs.reserve(pool);
    for (std::size_t i = 0; i < pool; ++i) {
        docs.push_back(compose_text(params, candidates[i].tokens));
    }

    RankedList out{query_id, {}};
    Vector rep(3 * m);
    std::copy(q.begin(), q.end(), rep.begin());
    for (std::size_t i = 0; i < pool; ++i) {
        double s = 0.0;
        std::copy(docs[i].begin(), docs[i].end(), rep.begin() + static_cast<std::ptrdiff_t>(m));
        for (std::size_t j = 0; j < pool; ++j) {
            if (j == i) {
                continue;
            }
            std::copy(docs[j].begin(), docs[j].end(), rep.begin() + static_cast<std::ptrdiff_t>(2 * m));
            s += supervision_forward(params, rep)[0];
        }
        out.entries.push_back({candidates[i].doc_id, s});
    }
    sort_ranked(out.entries);
    for (std::size_t i = pool; i < candidates.size(); ++i) {
        out.entries.push_back({candidates[i].doc_id, -static_cast<double>(i - pool + 1)});
    }
    return out;
}

/// Binary-relevance AP (grade >= 1) truncated at `cutoff`, normalized by the
/// number of relevant documents in the judgments.
inline double average_precision(RankedList const& run,
                                std::map<std::string, int> const& judgments,
                                std::size_t cutoff = 1000)
{
    std::size_t relevant_total = 0;
    for (auto const& [doc, grade] : judgments) {
        relevant_total += grade >= 1 ? 1 : 0;
    }
    if (relevant_total == 0) {
        return 0.0;
    }
    double sum = 0.0;
    std::size_t hits = 0;
    std::size_t const n = std::min(cutoff, run.entries.size());
    for (std::size_t i = 0; i < n; ++i) {
        auto it = judgments.find(run.entries[i].doc_id);
        if (it != judgments.end() && it->second >= 1) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(relevant_total);
}

inline bool has_relevant(Qrels const& qrels, std::string const& query_id)
{
    auto it = qrels.find(query_id);
    if (it == qrels.end()) {
        return false;
    }
    return std::any_of(it->second.begin(), it->second.end(), [](auto const& kv) { return kv.second >= 1; });
}

/// AP of every run query that has at least one relevant judgment, in run order.
inline std::vector<double> per_query_average_precision(std::vector<RankedList> const& runs,
                                                       Qrels const& qrels,
                                                       std::size_t cutoff = 1000)
{
    std::vector<double> out;
    for (auto const& run : runs) {
        if (has_relevant(qrels, run.query_id)) {
            out.push_back(average_precision(run, qrels.at(run.query_id), cutoff));
        }
    }
    return out;
}

inline double mean_average_precision(std::vector<RankedList> const& runs, Qrels const& qrels, std::size_t cutoff = 1000)
{
    auto const ap = per_query_average_precision(runs, qrels, cutoff);
    if (ap.empty()) {
        throw DegenerateInputError("mean_average_precision: no query has a relevant judgment");
    }
    double total = 0.0;
    for (double v : ap) {
        total += v;
    }
    return total / static_cast<double>(ap.size());
}

/// Gain 2^g - 1, discount log2(rank + 1); 0 when the ideal DCG is 0.
inline double ndcg(RankedList const& run, std::map<std::string, int> const* judgments, std::size_t k = 20)
{
    if (judgments == nullptr) {
        return 0.0;
    }
    auto gain = [](int g) { return std::exp2(static_cast<double>(g)) - 1.0; };
    double dcg = 0.0;
    std::size_t const n = std::min(k, run.entries.size());
    for (std::size_t i = 0; i < n; ++i) {
        auto it = judgments->find(run.entries[i].doc_id);
        if (it != judgments->end() && it->second > 0) {
            dcg += gain(it->second) / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    std::vector<int> grades;
    for (auto const& [doc, g] : *judgments) {
        if (g > 0) {
            grades.push_back(g);
        }
    }
    std::sort(grades.rbegin(), grades.rend());
    double ideal = 0.0;
    for (std::size_t i = 0; i < std::min(k, grades.size()); ++i) {
        ideal += gain(grades[i]) / std::log2(static_cast<double>(i) + 2.0);
    }
    return ideal == 0.0 ? 0.0 : dcg / ideal;
}

inline std::vector<double> per_query_ndcg(std::vector<RankedList> const& runs, Qrels const& qrels, std::size_t k = 20)
{
    std::vector<double> out;
    out.reserve(runs.size());
    for (auto const& run : runs) {
        auto it = qrels.find(run.query_id);
        out.push_back(ndcg(run, it == qrels.end() ? nullptr : &it->second, k));
    }
    return out;
}

/// Mean over all run queries; queries without relevant judgments count as 0.
inline double ndcg_at_k(std::vector<RankedList> const& runs, Qrels const& qrels, std::size_t k = 20)
{
    if (runs.empty()) {
        throw DegenerateInputError("ndcg_at_k: no queries");
    }
    double total = 0.0;
    for (double v : per_query_ndcg(runs, qrels, k)) {
        total += v;
    }
    return total / static_cast<double>(runs.size());
}

inline std::vector<std::size_t> semeval_classes()
{
    return {static_cast<std::size_t>(Sentiment::positive), static_cast<std::size_t>(Sentiment::negative)};
}

/// Mean of per-class F1 over `classes`; F1 is 0 when precision + recall is 0.
inline double macro_f1(std::vector<std::size_t> const& predictions,
                       std::vector<std::size_t> const& gold,
                       std::vector<std::size_t> const& classes = semeval_classes())
{
    if (predictions.size() != gold.size()) {
        throw ShapeError("macro_f1: " + std::to_string(predictions.size()) + " predictions for "
                         + std::to_string(gold.size()) + " gold labels");
    }
    if (classes.empty()) {
        throw ConfigError("macro_f1: empty class set");
    }
    double total = 0.0;
    for (auto c : classes) {
        std::size_t tp = 0;
        std::size_t fp = 0;
        std::size_t fn = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            bool const p = predictions[i] == c;
            bool const g = gold[i] == c;
            tp += (p && g) ? 1 : 0;
            fp += (p && !g) ? 1 : 0;
            fn += (!p && g) ? 1 : 0;
        }
        double const precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        double const recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        total += precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    }
    return total / static_cast<double>(classes.size());
}

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    bool significant = false;
};

/// Two-tailed paired t-test of a - b with Bonferroni threshold 0.05 / comparisons.
inline TTestResult paired_t_test(std::vector<double> const& a, std::vector<double> const& b, std::size_t comparisons = 1)
{
    if (a.size() != b.size()) {
        throw ShapeError("paired_t_test: samples differ in length");
    }
    if (a.size() < 2) {
        throw DegenerateInputError("paired_t_test: need at least two pairs");
    }
    if (comparisons == 0) {
        throw ConfigError("paired_t_test: comparisons must be at least 1");
    }
    auto const n = static_cast<double>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean += (a[i] - b[i]) / n;
    }
    double ss = 0.0;
    bool all_zero = true;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double const d = a[i] - b[i];
        all_zero = all_zero && d == 0.0;
        ss += (d - mean) * (d - mean);
    }
    TTestResult r;
    if (all_zero) {
        return r;
    }
    double const threshold = 0.05 / static_cast<double>(comparisons);
    double const se = std::sqrt(ss / (n - 1.0) / n);
    if (se == 0.0) {
        r.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        r.significant = true;
        return r;
    }
    r.t = mean / se;
    double const dof = n - 1.0;
    r.p = boost::math::ibeta(dof / 2.0, 0.5, dof / (dof + r.t * r.t));
    r.significant = r.p < threshold;
    return r;
}

// ---------------------------------------------------------------------------
// TREC formats

/// `qid Q0 docid rank score tag`, ranks from 1.
inline void write_trec_run(std::ostream& out, std::vector<RankedList> const& runs, std::string const& tag)
{
    out << std::setprecision(12);
    for (auto const& run : runs) {
        for (std::size_t i = 0; i < run.entries.size(); ++i) {
            out << run.query_id << " Q0 " << run.entries[i].doc_id << ' ' << (i + 1) << ' '
                << run.entries[i].score << ' ' << tag << '\n';
        }
    }
}

inline std::vector<RankedList> read_trec_run(std::istream& in, std::string const& source = "run")
{
    std::map<std::string, std::size_t> position;
    std::vector<RankedList> runs;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::istringstream ss(line);
        std::string qid;
        std::string q0;
        std::string doc;
        std::size_t rank = 0;
        double score = 0.0;
        std::string tag;
        if (!(ss >> qid)) {
            continue;
        }
        if (!(ss >> q0 >> doc >> rank >> score >> tag)) {
            throw ParseError(source, number, "expected 'qid Q0 docid rank score tag'");
        }
        auto [it, fresh] = position.emplace(qid, runs.size());
        if (fresh) {
            runs.push_back({qid, {}});
        }
        runs[it->second].entries.push_back({doc, score});
    }
    for (auto& run : runs) {
        sort_ranked(run.entries);
    }
    return runs;
}

/// `qid 0 docid grade`.
inline Qrels read_qrels(std::istream& in, std::string const& source = "qrels")
{
    Qrels qrels;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::istringstream ss(line);
        std::string qid;
        std::string iter;
        std::string doc;
        int grade = 0;
        if (!(ss >> qid)) {
            continue;
        }
        if (!(ss >> iter >> doc >> grade)) {
            throw ParseError(source, number, "expected 'qid 0 docid grade'");
        }
        if (grade < 0) {
            throw ParseError(source, number, "negative relevance grade");
        }
        qrels[qid][doc] = grade;
    }
    return qrels;
}

inline void write_qrels(std::ostream& out, Qrels const& qrels)
{
    for (auto const& [qid, docs] : qrels) {
        for (auto const& [doc, grade] : docs) {
            out << qid << " 0 " << doc << ' ' << grade << '\n';
        }
    }
}

}  // namespace cws
