#include <cmath>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "cws/annotators.hpp"
#include "cws/random.hpp"

namespace {

using namespace cws;

// a=0 b=1 c=2 d=3 e=4
std::vector<Document> toy_corpus()
{
    return {{"d1", {0, 1, 2}}, {"d2", {0, 0, 3}}, {"d3", {1, 4, 4, 4}}};
}

TEST(BuildIndex, SingleDocumentCounts)
{
    std::vector<Document> docs{{"x", {0, 1, 0}}};
    auto const index = build_index(docs);
    EXPECT_EQ(index.df(0), 1U);
    EXPECT_EQ(index.df(1), 1U);
    EXPECT_EQ(index.tf(0, 0), 2U);
    EXPECT_DOUBLE_EQ(index.avg_doc_len, 3.0);
}

TEST(BuildIndex, SharedTermCountsBothDocuments)
{
    std::vector<Document> docs{{"x", {0}}, {"y", {0, 1}}};
    EXPECT_EQ(build_index(docs).df(0), 2U);
}

TEST(BuildIndex, Errors)
{
    EXPECT_THROW(build_index({}), DegenerateInputError);
    std::vector<Document> docs{{"x", {0}}, {"x", {1}}};
    EXPECT_THROW(build_index(docs), ValidationError);
}

TEST(BuildIndex, MatchesRecountOnRandomCorpus)
{
    Rng rng(5);
    std::vector<Document> docs;
    for (int d = 0; d < 100; ++d) {
        Document doc{"doc" + std::to_string(d), {}};
        std::size_t const len = 1 + rng.index(20);
        for (std::size_t i = 0; i < len; ++i) {
            doc.tokens.push_back(static_cast<TokenId>(rng.index(30)));
        }
        docs.push_back(doc);
    }
    auto const index = build_index(docs);
    double total = 0.0;
    for (TokenId t = 0; t < 30; ++t) {
        std::size_t df = 0;
        for (std::size_t d = 0; d < docs.size(); ++d) {
            auto const tf = static_cast<std::size_t>(std::count(docs[d].tokens.begin(), docs[d].tokens.end(), t));
            df += tf > 0 ? 1 : 0;
            EXPECT_EQ(index.tf(t, d), tf);
        }
        EXPECT_EQ(index.df(t), df);
        if (df > 0) {
            auto const& list = index.postings.at(t);
            EXPECT_EQ(list.size(), df);
            EXPECT_TRUE(std::is_sorted(list.begin(), list.end(),
                                       [](Posting const& a, Posting const& b) { return a.doc < b.doc; }));
        }
    }
    for (auto const& d : docs) {
        total += static_cast<double>(d.tokens.size());
    }
    EXPECT_DOUBLE_EQ(index.avg_doc_len, total / 100.0);
}

TEST(Bm25, HandComputedToyCorpus)
{
    auto const index = build_index(toy_corpus());
    std::vector<TokenId> const query{0, 1};
    Bm25Params const params;
    // Evaluated by hand: idf(a) = idf(b) = ln(1.5/2.5 + 1), avg length 10/3.
    EXPECT_NEAR(bm25_score(index, params, query, "d1"), 0.9801023548252308, 1e-9);
    EXPECT_NEAR(bm25_score(index, params, query, "d2"), 0.664956903112938, 1e-9);
    EXPECT_NEAR(bm25_score(index, params, query, "d3"), 0.4344571362775708, 1e-9);
    EXPECT_NEAR(bm25_idf(3, 2), 0.47000362924573563, 1e-12);
}

TEST(Bm25, ZeroCases)
{
    auto const index = build_index(toy_corpus());
    std::vector<TokenId> const disjoint{4};
    EXPECT_EQ(bm25_score(index, {}, disjoint, "d1"), 0.0);
    EXPECT_EQ(bm25_score(index, {}, std::vector<TokenId>{}, "d1"), 0.0);
}

TEST(Bm25, Errors)
{
    auto const index = build_index(toy_corpus());
    std::vector<TokenId> const query{0};
    EXPECT_THROW(bm25_score(index, {}, query, "nope"), LookupError);
    EXPECT_THROW(bm25_score(index, {0.0, 0.75, 1000.0}, query, "d1"), ConfigError);
    EXPECT_THROW(bm25_score(index, {1.2, 1.5, 1000.0}, query, "d1"), ConfigError);
}

TEST(Bm25, IdfIsNonNegativeAndDecreasingInDf)
{
    for (std::size_t df = 0; df < 100; ++df) {
        EXPECT_GE(bm25_idf(100, df), 0.0);
        EXPECT_GT(bm25_idf(100, df), bm25_idf(100, df + 1));
    }
}

TEST(Bm25, RepeatedQueryTermSaturatesWithK3)
{
    auto const index = build_index(toy_corpus());
    std::vector<TokenId> const once{0};
    std::vector<TokenId> const twice{0, 0};
    double const one = bm25_score(index, {}, once, "d1");
    double const two = bm25_score(index, {}, twice, "d1");
    EXPECT_NEAR(two / one, 2.0 * 1001.0 / 1002.0, 1e-12);
}

TEST(Bm25, MonotoneInTermFrequency)
{
    // Raise tf of a query term in d0 by overwriting other tokens, so length
    // stays fixed; compare only when document frequencies are unchanged.
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Document> docs;
        for (int d = 0; d < 6; ++d) {
            Document doc{"d" + std::to_string(d), {}};
            for (std::size_t i = 0, n = 2 + rng.index(8); i < n; ++i) {
                doc.tokens.push_back(static_cast<TokenId>(rng.index(6)));
            }
            docs.push_back(doc);
        }
        std::vector<TokenId> const query{static_cast<TokenId>(rng.index(6)),
                                         static_cast<TokenId>(rng.index(6))};
        auto index = build_index(docs);
        for (auto& t : docs[0].tokens) {
            if (t == query[0] || t == query[1]) {
                continue;
            }
            t = query[0];
            auto after = build_index(docs);
            if (after.df(query[0]) == index.df(query[0]) && after.df(query[1]) == index.df(query[1])) {
                EXPECT_GE(bm25_score(after, {}, query, "d0"), bm25_score(index, {}, query, "d0"));
            }
            index = std::move(after);
        }
    }
}

TEST(Bm25, TopKOrderAndTies)
{
    std::vector<Document> docs{{"z", {0}}, {"y", {0}}, {"x", {1}}, {"w", {2, 0, 0}}};
    auto const index = build_index(docs);
    std::vector<TokenId> const query{0};
    auto const top = bm25_top_k(index, {}, query, 10);
    ASSERT_EQ(top.size(), 3U);
    EXPECT_EQ(index.doc_ids[top[0].doc], "y");  // short docs tie; y < z
    EXPECT_EQ(index.doc_ids[top[1].doc], "z");
    EXPECT_EQ(index.doc_ids[top[2].doc], "w");
    EXPECT_EQ(bm25_top_k(index, {}, query, 1).size(), 1U);
}

TEST(PairwiseWeakLabel, Examples)
{
    EXPECT_EQ(pairwise_weak_label(2.0, 2.0), 0.5);
    EXPECT_EQ(pairwise_weak_label(3.0, 1.0), 0.75);
    EXPECT_EQ(pairwise_weak_label(0.0, 0.0), 0.5);
    EXPECT_THROW(pairwise_weak_label(-1.0, 1.0), ValidationError);
    EXPECT_THROW(pairwise_weak_label(1.0, std::nan("")), ValidationError);
}

TEST(PairwiseWeakLabel, Antisymmetric)
{
    Rng rng(13);
    for (int i = 0; i < 10000; ++i) {
        double const a = rng.uniform(0.0, 50.0);
        double const b = rng.uniform(0.0, 50.0);
        EXPECT_NEAR(pairwise_weak_label(a, b) + pairwise_weak_label(b, a), 1.0, 1e-12);
    }
}

TEST(Lexicon, AveragesMatchedEntries)
{
    SentimentLexicon lex;
    lex.add("good", {0.8, 0.1, 0.1});
    lex.add("meh", {0.2, 0.3, 0.5});
    std::vector<std::string> const sentence{"good", "unknown", "meh"};
    auto const d = lexicon_annotate(lex, sentence);
    EXPECT_NEAR(d[0], 0.5, 1e-15);
    EXPECT_NEAR(d[1], 0.2, 1e-15);
    EXPECT_NEAR(d[2], 0.3, 1e-15);
}

TEST(Lexicon, NoHitsIsUniform)
{
    SentimentLexicon lex;
    lex.add("good", {0.8, 0.1, 0.1});
    std::vector<std::string> const sentence{"nothing", "here"};
    for (double p : lexicon_annotate(lex, sentence)) {
        EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
    }
}

TEST(Lexicon, MatchesReaverageOnRandomSentences)
{
    Rng rng(21);
    SentimentLexicon lex;
    std::vector<std::string> words;
    for (int w = 0; w < 20; ++w) {
        words.push_back("w" + std::to_string(w));
        if (w % 2 == 0) {
            double a = rng.uniform();
            double b = rng.uniform() * (1.0 - a);
            lex.add(words.back(), {a, b, 1.0 - a - b});
        }
    }
    for (int s = 0; s < 50; ++s) {
        std::vector<std::string> sentence;
        for (std::size_t i = 0, n = 1 + rng.index(12); i < n; ++i) {
            sentence.push_back(words[rng.index(words.size())]);
        }
        Distribution expect{0, 0, 0};
        int hits = 0;
        for (auto const& tok : sentence) {
            if (lex.entries.count(tok) != 0U) {
                ++hits;
                for (int k = 0; k < 3; ++k) {
                    expect[k] += lex.entries.at(tok)[k];
                }
            }
        }
        auto const got = lexicon_annotate(lex, sentence);
        for (int k = 0; k < 3; ++k) {
            double const e = hits == 0 ? 1.0 / 3.0 : expect[k] / hits;
            EXPECT_NEAR(got[k], e, 1e-12);
        }
        EXPECT_NEAR(got[0] + got[1] + got[2], 1.0, 1e-9);
    }
}

TEST(Lexicon, RejectsBadEntries)
{
    SentimentLexicon lex;
    EXPECT_THROW(lex.add("x", {0.5, 0.5, 0.5}), ValidationError);
    EXPECT_THROW(lex.add("x", {1.5, -0.5, 0.0}), ValidationError);
}

TEST(Lexicon, ParsesTsv)
{
    std::istringstream in("# comment\n\ngood\t0.8\t0.1\t0.1\nbad\t0.1\t0.8\t0.1\r\n");
    auto const lex = parse_lexicon_tsv(in);
    EXPECT_EQ(lex.entries.size(), 2U);
    EXPECT_DOUBLE_EQ(lex.entries.at("bad")[1], 0.8);
}

TEST(Lexicon, ParseErrorsCarryLineNumbers)
{
    std::istringstream bad_fields("good\t0.8\t0.1\t0.1\nbad\t0.5\n");
    try {
        parse_lexicon_tsv(bad_fields);
        FAIL();
    } catch (ParseError const& e) {
        EXPECT_EQ(e.line(), 2U);
    }
    std::istringstream bad_number("x\t0.8\tabc\t0.1\n");
    EXPECT_THROW(parse_lexicon_tsv(bad_number), ParseError);
    std::istringstream unnormalized("x\t0.8\t0.8\t0.1\n");
    EXPECT_THROW(parse_lexicon_tsv(unnormalized), ParseError);
    EXPECT_THROW(load_lexicon_tsv("/nonexistent/lexicon.tsv"), IoError);
}

TEST(ConfidenceTarget, RankExamples)
{
    EXPECT_EQ(confidence_target_rank(1.0, 1.0), 1.0);
    EXPECT_EQ(confidence_target_rank(1.0, 0.25), 0.25);
    EXPECT_EQ(confidence_target_rank(0.5, 0.5), 1.0);
    EXPECT_THROW(confidence_target_rank(1.5, 0.5), ValidationError);
    EXPECT_THROW(confidence_target_rank(0.5, -0.1), ValidationError);
}

TEST(ConfidenceTarget, ClassExamples)
{
    std::vector<double> const y{1, 0, 0};
    std::vector<double> const u{1.0 / 3, 1.0 / 3, 1.0 / 3};
    EXPECT_EQ(confidence_target_class(y, y), 1.0);
    EXPECT_NEAR(confidence_target_class(y, u), 5.0 / 9.0, 1e-12);
    EXPECT_THROW(confidence_target_class(y, std::vector<double>{1, 0}), ShapeError);
}

TEST(ConfidenceTarget, RandomPairsMatchFormula)
{
    Rng rng(34);
    for (int i = 0; i < 10000; ++i) {
        double const y = rng.uniform();
        double const w = rng.uniform();
        double const c = confidence_target_rank(y, w);
        EXPECT_NEAR(c, 1.0 - std::fabs(y - w), 1e-12);
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0);

        std::vector<double> a{rng.uniform(), rng.uniform(), rng.uniform()};
        std::vector<double> b{rng.uniform(), rng.uniform(), rng.uniform()};
        double sa = a[0] + a[1] + a[2];
        double sb = b[0] + b[1] + b[2];
        for (int k = 0; k < 3; ++k) {
            a[k] /= sa;
            b[k] /= sb;
        }
        double const expect = 1.0 - (std::fabs(a[0] - b[0]) + std::fabs(a[1] - b[1]) + std::fabs(a[2] - b[2])) / 3.0;
        EXPECT_NEAR(confidence_target_class(a, b), expect, 1e-12);
    }
}

TEST(Argmax, LowestIndexWinsTies)
{
    std::vector<double> const v{0.4, 0.4, 0.2};
    EXPECT_EQ(argmax(v), 0U);
}

}  // namespace
