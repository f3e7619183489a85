#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cws/error.hpp"
#include "cws/tensor.hpp"

namespace cws {

struct Document {
    std::string id;
    std::vector<TokenId> tokens;
};

struct Posting {
    std::size_t doc;  // position in InvertedIndex::doc_ids
    std::size_t tf;

    bool operator==(Posting const&) const = default;
};

/// Term -> postings index over a fixed document list. Documents are numbered
/// in insertion order and postings are sorted by that number.
struct InvertedIndex {
    std::size_t doc_count = 0;
    double avg_doc_len = 0.0;
    std::vector<std::string> doc_ids;
    std::vector<std::size_t> doc_lengths;
    std::unordered_map<std::string, std::size_t> doc_number;
    std::unordered_map<TokenId, std::vector<Posting>> postings;
    std::unordered_map<TokenId, std::size_t> doc_freq;

    [[nodiscard]] std::size_t lookup(std::string const& doc_id) const
    {
        auto it = doc_number.find(doc_id);
        if (it == doc_number.end()) {
            throw LookupError("unknown document id '" + doc_id + "'");
        }
        return it->second;
    }

    [[nodiscard]] std::size_t df(TokenId term) const
    {
        auto it = doc_freq.find(term);
        return it == doc_freq.end() ? 0 : it->second;
    }

    [[nodiscard]] std::size_t tf(TokenId term, std::size_t doc) const
    {
        auto it = postings.find(term);
        if (it == postings.end()) {
            return 0;
        }
        auto const& list = it->second;
        auto pos = std::lower_bound(list.begin(), list.end(), doc,
                                    [](Posting const& p, std::size_t d) { return p.doc < d; });
        return (pos != list.end() && pos->doc == doc) ? pos->tf : 0;
    }
};

inline InvertedIndex build_index(std::span<Document const> documents)
{
    if (documents.empty()) {
        throw DegenerateInputError("build_index: empty corpus");
    }
    InvertedIndex index;
    index.doc_count = documents.size();
    index.doc_ids.reserve(documents.size());
    index.doc_lengths.reserve(documents.size());
    std::size_t total_len = 0;
    for (std::size_t d = 0; d < documents.size(); ++d) {
        auto const& doc = documents[d];
        if (!index.doc_number.emplace(doc.id, d).second) {
            throw ValidationError("build_index: duplicate document id '" + doc.id + "'");
        }
        index.doc_ids.push_back(doc.id);
        index.doc_lengths.push_back(doc.tokens.size());
        total_len += doc.tokens.size();

        std::map<TokenId, std::size_t> counts;
        for (auto t : doc.tokens) {
            ++counts[t];
        }
        for (auto const& [term, tf] : counts) {
            index.postings[term].push_back({d, tf});
            ++index.doc_freq[term];
        }
    }
    index.avg_doc_len = static_cast<double>(total_len) / static_cast<double>(documents.size());
    return index;
}

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
    double k3 = 1000.0;
};

inline void validate(Bm25Params const& p)
{
    if (!(p.k1 > 0.0) || !(p.b >= 0.0 && p.b <= 1.0) || !(p.k3 >= 0.0)) {
        throw ConfigError("BM25 parameters need k1 > 0, 0 <= b <= 1, k3 >= 0");
    }
}

/// Non-negative (Lucene-style) idf: ln((N - df + 0.5) / (df + 0.5) + 1).
inline double bm25_idf(std::size_t doc_count, std::size_t df)
{
    auto const n = static_cast<double>(doc_count);
    auto const f = static_cast<double>(df);
    return std::log((n - f + 0.5) / (f + 0.5) + 1.0);
}

/// Okapi BM25 of `query` against document number `doc`.
inline double bm25_score(InvertedIndex const& index,
                         Bm25Params const& params,
                         std::span<TokenId const> query,
                         std::size_t doc)
{
    validate(params);
    if (doc >= index.doc_count) {
        throw LookupError("bm25_score: document number " + std::to_string(doc) + " out of range");
    }
    std::map<TokenId, std::size_t> query_tf;
    for (auto t : query) {
        ++query_tf[t];
    }
    double const norm = 1.0 - params.b
                        + params.b * static_cast<double>(index.doc_lengths[doc]) / index.avg_doc_len;
    double score = 0.0;
    for (auto const& [term, qtf_count] : query_tf) {
        auto const tf = static_cast<double>(index.tf(term, doc));
        if (tf == 0.0) {
            continue;
        }
        auto const qtf = static_cast<double>(qtf_count);
        double const doc_part = tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
        double const query_part = qtf * (params.k3 + 1.0) / (params.k3 + qtf);
        score += bm25_idf(index.doc_count, index.df(term)) * doc_part * query_part;
    }
    return score;
}

inline double bm25_score(InvertedIndex const& index,
                         Bm25Params const& params,
                         std::span<TokenId const> query,
                         std::string const& doc_id)
{
    return bm25_score(index, params, query, index.lookup(doc_id));
}

struct ScoredDoc {
    std::size_t doc;
    double score;
};

/// Documents containing at least one query term, by descending score with
/// ties on ascending document id, truncated to `k`.
inline std::vector<ScoredDoc> bm25_top_k(InvertedIndex const& index,
                                         Bm25Params const& params,
                                         std::span<TokenId const> query,
                                         std::size_t k)
{
    std::vector<std::size_t> matched;
    for (auto t : query) {
        auto it = index.postings.find(t);
        if (it == index.postings.end()) {
            continue;
        }
        for (auto const& p : it->second) {
            matched.push_back(p.doc);
        }
    }
    std::sort(matched.begin(), matched.end());
    matched.erase(std::unique(matched.begin(), matched.end()), matched.end());

    std::vector<ScoredDoc> scored;
    scored.reserve(matched.size());
    for (auto d : matched) {
        scored.push_back({d, bm25_score(index, params, query, d)});
    }
    std::sort(scored.begin(), scored.end(), [&](ScoredDoc const& a, ScoredDoc const& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return index.doc_ids[a.doc] < index.doc_ids[b.doc];
    });
    if (scored.size() > k) {
        scored.resize(k);
    }
    return scored;
}

/// Probability that the first document outranks the second: s+ / (s+ + s-),
/// 0.5 when both scores are zero.
inline double pairwise_weak_label(double score_pos, double score_neg)
{
    if (!std::isfinite(score_pos) || !std::isfinite(score_neg) || score_pos < 0.0
        || score_neg < 0.0) {
        throw ValidationError("pairwise_weak_label: scores must be finite and non-negative");
    }
    double const total = score_pos + score_neg;
    if (total == 0.0) {
        return 0.5;
    }
    return score_pos / total;
}

inline constexpr std::size_t sentiment_classes = 3;

/// Class order is positive, negative, neutral.
using Distribution = std::array<double, sentiment_classes>;

enum class Sentiment : std::size_t { positive = 0, negative = 1, neutral = 2 };

inline std::string to_string(Sentiment s)
{
    switch (s) {
    case Sentiment::positive: return "positive";
    case Sentiment::negative: return "negative";
    case Sentiment::neutral: return "neutral";
    }
    return "?";
}

inline Distribution one_hot(Sentiment s)
{
    Distribution d{0.0, 0.0, 0.0};
    d[static_cast<std::size_t>(s)] = 1.0;
    return d;
}

struct SentimentLexicon {
    std::unordered_map<std::string, Distribution> entries;

    void add(std::string term, Distribution dist)
    {
        double total = 0.0;
        for (double p : dist) {
            if (!(p >= 0.0)) {
                throw ValidationError("lexicon entry '" + term + "' has a negative probability");
            }
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw ValidationError("lexicon entry '" + term + "' does not sum to 1");
        }
        entries.insert_or_assign(std::move(term), dist);
    }
};

/// Reads `term<TAB>p_pos<TAB>p_neg<TAB>p_neu` lines; '#' lines and blank
/// lines are skipped.
inline SentimentLexicon parse_lexicon_tsv(std::istream& in, std::string const& source = "lexicon")
{
    SentimentLexicon lexicon;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) {
            fields.push_back(field);
        }
        if (fields.size() != 4 || fields[0].empty()) {
            throw ParseError(source, number, "expected term and three probabilities");
        }
        Distribution dist{};
        for (std::size_t k = 0; k < sentiment_classes; ++k) {
            try {
                std::size_t used = 0;
                dist[k] = std::stod(fields[k + 1], &used);
                if (used != fields[k + 1].size()) {
                    throw std::invalid_argument("trailing characters");
                }
            } catch (std::exception const&) {
                throw ParseError(source, number, "bad probability '" + fields[k + 1] + "'");
            }
        }
        try {
            lexicon.add(fields[0], dist);
        } catch (ValidationError const& e) {
            throw ParseError(source, number, e.what());
        }
    }
    return lexicon;
}

inline SentimentLexicon load_lexicon_tsv(std::string const& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open lexicon file '" + path + "'");
    }
    return parse_lexicon_tsv(in, path);
}

/// Mean class distribution of the tokens found in the lexicon; uniform when
/// none are found.
inline Distribution lexicon_annotate(SentimentLexicon const& lexicon,
                                     std::span<std::string const> sentence)
{
    Distribution sum{0.0, 0.0, 0.0};
    std::size_t hits = 0;
    for (auto const& token : sentence) {
        auto it = lexicon.entries.find(token);
        if (it == lexicon.entries.end()) {
            continue;
        }
        for (std::size_t k = 0; k < sentiment_classes; ++k) {
            sum[k] += it->second[k];
        }
        ++hits;
    }
    if (hits == 0) {
        return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    }
    for (auto& v : sum) {
        v /= static_cast<double>(hits);
    }
    return sum;
}

/// Argmax with lowest-index tie-break.
inline std::size_t argmax(std::span<double const> values)
{
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end())
                                    - values.begin());
}

/// 1 - |y - y~| for pairwise ranking labels.
inline double confidence_target_rank(double true_label, double weak_label)
{
    if (!(true_label >= 0.0 && true_label <= 1.0) || !(weak_label >= 0.0 && weak_label <= 1.0)) {
        throw ValidationError("confidence_target_rank: labels must lie in [0, 1]");
    }
    return 1.0 - std::abs(true_label - weak_label);
}

/// 1 - mean_k |y_k - y~_k|, clamped into [0, 1].
inline double confidence_target_class(std::span<double const> true_dist,
                                      std::span<double const> weak_dist)
{
    if (true_dist.size() != weak_dist.size() || true_dist.empty()) {
        throw ShapeError("confidence_target_class: label widths differ");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < true_dist.size(); ++k) {
        total += std::abs(true_dist[k] - weak_dist[k]);
    }
    double const value = 1.0 - total / static_cast<double>(true_dist.size());
    return std::clamp(value, 0.0, 1.0);
}

}  // namespace cws
