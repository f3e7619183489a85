#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <span>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cws/annotators.hpp"
#include "cws/error.hpp"
#include "cws/evaluation.hpp"
#include "cws/model.hpp"
#include "cws/random.hpp"
#include "cws/training.hpp"
#include "cws/vocabulary.hpp"

namespace cws {

/// Lowercase ASCII alphanumeric runs; every other byte separates tokens.
inline std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        auto const c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) != 0) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

inline std::ifstream open_input(std::string const& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    return in;
}

inline std::ofstream open_output(std::filesystem::path const& path)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ranking corpus

struct TextRecord {
    std::string id;
    std::string text;
};

/// `id<TAB>text` lines; blank lines are skipped.
inline std::vector<TextRecord> parse_tsv_records(std::istream& in, std::string const& source)
{
    std::vector<TextRecord> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto const tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw ParseError(source, number, "expected 'id<TAB>text'");
        }
        out.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return out;
}

struct Query {
    std::string id;
    std::vector<TokenId> tokens;
};

struct RankingCorpus {
    Vocabulary vocab;
    std::vector<Document> documents;
    std::vector<Query> queries;
    Qrels qrels;
};

/// Tokenizes documents then queries, growing the vocabulary in that order.
inline RankingCorpus make_ranking_corpus(std::vector<TextRecord> const& docs,
                                         std::vector<TextRecord> const& queries,
                                         Qrels qrels)
{
    RankingCorpus corpus;
    auto encode = [&](std::string const& text) {
        std::vector<TokenId> ids;
        for (auto const& t : tokenize(text)) {
            ids.push_back(corpus.vocab.add(t));
        }
        return ids;
    };
    for (auto const& d : docs) {
        corpus.documents.push_back({d.id, encode(d.text)});
    }
    for (auto const& q : queries) {
        corpus.queries.push_back({q.id, encode(q.text)});
    }
    corpus.qrels = std::move(qrels);
    return corpus;
}

inline RankingCorpus load_ranking_corpus(std::string const& docs_path,
                                         std::string const& queries_path,
                                         std::string const& qrels_path)
{
    auto docs_in = open_input(docs_path);
    auto queries_in = open_input(queries_path);
    auto qrels_in = open_input(qrels_path);
    auto const docs = parse_tsv_records(docs_in, docs_path);
    auto const queries = parse_tsv_records(queries_in, queries_path);
    return make_ranking_corpus(docs, queries, read_qrels(qrels_in, qrels_path));
}

struct RankSetOptions {
    /// BM25 candidates per unlabeled query whose pairs form U.
    std::size_t top_k = 50;
    /// Cap on V pairs (0 keeps all), chosen by a seeded shuffle.
    std::size_t max_true_pairs = 0;
    std::uint64_t seed = 0;
    Bm25Params bm25;
};

struct RankSets {
    LabeledSets<RankInstance> sets;
    std::vector<std::string> skipped_queries;
};

inline double grade_label(int grade_a, int grade_b)
{
    if (grade_a == grade_b) {
        return 0.5;
    }
    return grade_a > grade_b ? 1.0 : 0.0;
}

/// U: every pair among the top-k BM25 documents of each weak query, with the
/// BM25-based pairwise weak label. Pair orientation alternates so that both
/// label directions occur.
///
/// V: judged relevant x judged non-relevant pairs of each true query, with
/// y from grade comparison, the same weak label and c = 1 - |y - y~|.
inline RankSets build_rank_sets(RankingCorpus const& corpus,
                                InvertedIndex const& index,
                                std::span<Query const> weak_queries,
                                std::span<Query const> true_queries,
                                RankSetOptions const& options)
{
    RankSets out;
    auto tokens_of = [&](std::size_t doc) -> std::vector<TokenId> const& { return corpus.documents[doc].tokens; };

    std::size_t parity = 0;
    for (auto const& q : weak_queries) {
        auto const top = bm25_top_k(index, options.bm25, q.tokens, options.top_k);
        if (top.size() < 2) {
            out.skipped_queries.push_back(q.id);
            continue;
        }
        for (std::size_t i = 0; i < top.size(); ++i) {
            for (std::size_t j = i + 1; j < top.size(); ++j) {
                auto a = top[i];
                auto b = top[j];
                if (parity++ % 2 == 1) {
                    std::swap(a, b);
                }
                out.sets.weak.push_back({{q.tokens, tokens_of(a.doc), tokens_of(b.doc)},
                                         {pairwise_weak_label(a.score, b.score)}});
            }
        }
    }

    std::vector<TrueExample<RankInstance>> pairs;
    parity = 0;
    for (auto const& q : true_queries) {
        auto it = corpus.qrels.find(q.id);
        if (it == corpus.qrels.end()) {
            out.skipped_queries.push_back(q.id);
            continue;
        }
        std::vector<std::pair<std::size_t, int>> relevant;
        std::vector<std::pair<std::size_t, int>> nonrelevant;
        for (auto const& [doc_id, grade] : it->second) {
            auto found = index.doc_number.find(doc_id);
            if (found == index.doc_number.end()) {
                continue;
            }
            (grade >= 1 ? relevant : nonrelevant).emplace_back(found->second, grade);
        }
        if (relevant.empty() || nonrelevant.empty()) {
            out.skipped_queries.push_back(q.id);
            continue;
        }
        for (auto const& [rd, rg] : relevant) {
            for (auto const& [nd, ng] : nonrelevant) {
                auto a = std::make_pair(rd, rg);
                auto b = std::make_pair(nd, ng);
                if (parity++ % 2 == 1) {
                    std::swap(a, b);
                }
                double const y = grade_label(a.second, b.second);
                double const weak = pairwise_weak_label(bm25_score(index, options.bm25, q.tokens, a.first),
                                                        bm25_score(index, options.bm25, q.tokens, b.first));
                pairs.push_back({{q.tokens, tokens_of(a.first), tokens_of(b.first)},
                                 {weak},
                                 {y},
                                 confidence_target_rank(y, weak)});
            }
        }
    }
    if (options.max_true_pairs > 0 && pairs.size() > options.max_true_pairs) {
        Rng rng(options.seed);
        rng.shuffle(std::span<TrueExample<RankInstance>>(pairs));
        pairs.resize(options.max_true_pairs);
    }
    out.sets.full = std::move(pairs);
    return out;
}

/// BM25 candidates of a query, in BM25 order.
inline std::vector<Candidate> bm25_candidates(RankingCorpus const& corpus,
                                              InvertedIndex const& index,
                                              Query const& query,
                                              std::size_t k,
                                              Bm25Params const& params = {})
{
    std::vector<Candidate> out;
    for (auto const& s : bm25_top_k(index, params, query.tokens, k)) {
        out.push_back({index.doc_ids[s.doc], corpus.documents[s.doc].tokens});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sentiment corpus

inline Sentiment parse_sentiment(std::string const& name)
{
    if (name == "positive") {
        return Sentiment::positive;
    }
    if (name == "negative") {
        return Sentiment::negative;
    }
    if (name == "neutral") {
        return Sentiment::neutral;
    }
    throw ValidationError("unknown sentiment label '" + name + "'");
}

struct SentenceRecord {
    std::string id;
    std::vector<std::string> tokens;
    std::optional<Sentiment> label;
};

struct SentimentCorpus {
    std::vector<SentenceRecord> labeled;
    std::vector<SentenceRecord> unlabeled;
};

/// One JSON object per line: {"id", "text", "label"?}. Records with a label
/// go to the labeled pool.
inline SentimentCorpus parse_sentiment_jsonl(std::istream& in, std::string const& source)
{
    SentimentCorpus corpus;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (nlohmann::json::exception const& e) {
            throw ParseError(source, number, e.what());
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("text") || !obj["text"].is_string()) {
            throw ParseError(source, number, "expected an object with 'id' and 'text'");
        }
        SentenceRecord record;
        record.id = obj["id"].is_string() ? obj["id"].get<std::string>() : obj["id"].dump();
        record.tokens = tokenize(obj["text"].get<std::string>());
        if (obj.contains("label") && !obj["label"].is_null()) {
            if (!obj["label"].is_string()) {
                throw ParseError(source, number, "label must be a string");
            }
            try {
                record.label = parse_sentiment(obj["label"].get<std::string>());
            } catch (ValidationError const& e) {
                throw ParseError(source, number, e.what());
            }
            corpus.labeled.push_back(std::move(record));
        } else {
            corpus.unlabeled.push_back(std::move(record));
        }
    }
    return corpus;
}

inline SentimentCorpus load_sentiment_corpus(std::string const& path)
{
    auto in = open_input(path);
    return parse_sentiment_jsonl(in, path);
}

inline void write_sentiment_jsonl(std::ostream& out, SentimentCorpus const& corpus)
{
    auto emit = [&](SentenceRecord const& r) {
        std::string text;
        for (auto const& t : r.tokens) {
            text += (text.empty() ? "" : " ") + t;
        }
        nlohmann::json obj{{"id", r.id}, {"text", text}};
        if (r.label) {
            obj["label"] = to_string(*r.label);
        }
        out << obj.dump() << '\n';
    };
    for (auto const& r : corpus.labeled) {
        emit(r);
    }
    for (auto const& r : corpus.unlabeled) {
        emit(r);
    }
}

inline Vocabulary sentiment_vocabulary(SentimentCorpus const& corpus)
{
    Vocabulary vocab;
    for (auto const* pool : {&corpus.unlabeled, &corpus.labeled}) {
        for (auto const& r : *pool) {
            for (auto const& t : r.tokens) {
                vocab.add(t);
            }
        }
    }
    return vocab;
}

inline SentenceInstance encode_sentence(Vocabulary const& vocab, std::vector<std::string> const& tokens, std::size_t window)
{
    return {pad_tokens(vocab.encode(tokens), window, Vocabulary::pad)};
}

inline Label to_label(Distribution const& d)
{
    return {d.begin(), d.end()};
}

struct SentimentData {
    Vocabulary vocab;
    LabeledSets<SentenceInstance> sets;
    std::vector<TrueExample<SentenceInstance>> validation;
    std::vector<TrueExample<SentenceInstance>> test;
};

struct SentimentSplit {
    std::size_t true_size = 200;
    std::size_t validation_size = 200;
    std::uint64_t seed = 0;
};

/// U from the unlabeled pool; the labeled pool is shuffled and split into V,
/// validation and test (the remainder). Weak labels come from `lexicon`.
inline SentimentData build_sentiment_sets(SentimentCorpus const& corpus,
                                          SentimentLexicon const& lexicon,
                                          std::size_t window,
                                          SentimentSplit const& split)
{
    SentimentData data;
    data.vocab = sentiment_vocabulary(corpus);
    for (auto const& r : corpus.unlabeled) {
        data.sets.weak.push_back({encode_sentence(data.vocab, r.tokens, window), to_label(lexicon_annotate(lexicon, r.tokens))});
    }
    std::vector<std::size_t> order(corpus.labeled.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(split.seed);
    rng.shuffle(std::span<std::size_t>(order));
    if (split.true_size + split.validation_size > order.size()) {
        throw ConfigError("labeled pool of " + std::to_string(order.size()) + " is smaller than |V| + validation");
    }
    for (std::size_t k = 0; k < order.size(); ++k) {
        auto const& r = corpus.labeled[order[k]];
        Label const weak = to_label(lexicon_annotate(lexicon, r.tokens));
        Label const truth = to_label(one_hot(*r.label));
        TrueExample<SentenceInstance> ex{encode_sentence(data.vocab, r.tokens, window), weak, truth,
                                         confidence_target_class(truth, weak)};
        if (k < split.true_size) {
            data.sets.full.push_back(std::move(ex));
        } else if (k < split.true_size + split.validation_size) {
            data.validation.push_back(std::move(ex));
        } else {
            data.test.push_back(std::move(ex));
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Synthetic sentiment task

struct SyntheticSentimentSpec {
    /// Class vocabulary: a few frequent words and a long tail of rare ones.
    std::size_t frequent_words_per_class = 10;
    std::size_t rare_words_per_class = 60;
    std::size_t background_words = 200;
    std::size_t sentence_len = 10;
    /// Probability that a sentence contains one frequent word of its class.
    double frequent_rate = 0.5;
    /// Rare words of the sentence's class.
    std::size_t rare_per_sentence = 3;
    /// Probability of one extra word from another class.
    double confuser_rate = 0.0;
    /// Probability mass a class word puts on its own class. The rest goes to
    /// the other classes, neutral taking twice a polar class's share.
    double profile_peak = 0.85;
    /// Per-word perturbation of the class profiles in the hidden lexicon.
    double word_jitter = 0.05;
    std::size_t num_labeled = 2400;
    std::size_t num_unlabeled = 20000;
    /// Fraction of lexicon entries perturbed in the released lexicon.
    double noise_rate = 0.3;
    /// Share of perturbed entries left out of the released lexicon; the rest
    /// have their distribution rotated.
    double drop_share = 0.0;
    std::uint64_t seed = 1;
};

inline void validate(SyntheticSentimentSpec const& s)
{
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(s.noise_rate) || !unit(s.drop_share) || !unit(s.frequent_rate) || !unit(s.confuser_rate)) {
        throw ConfigError("synthetic sentiment rates must lie in [0, 1]");
    }
    if (!(s.profile_peak > 0.5 && s.profile_peak < 1.0)) {
        throw ConfigError("profile_peak must lie in (0.5, 1)");
    }
    if (!(s.word_jitter >= 0.0 && s.word_jitter < 0.1)) {
        throw ConfigError("word_jitter must lie in [0, 0.1)");
    }
    if (s.frequent_words_per_class == 0 || s.rare_words_per_class == 0 || s.background_words == 0) {
        throw ConfigError("synthetic sentiment word lists must be non-empty");
    }
    if (s.rare_per_sentence == 0 || s.sentence_len < s.rare_per_sentence + 2) {
        throw ConfigError("synthetic sentiment needs 1 <= rare_per_sentence <= sentence_len - 2");
    }
}

struct SyntheticSentiment {
    SentimentCorpus corpus;
    SentimentLexicon hidden;
    SentimentLexicon released;
};

/// Each sentence has a latent class. It holds rare words of that class, with
/// probability frequent_rate one frequent word of that class, with
/// probability confuser_rate a rare word of another class, and background
/// filler. The true label is the argmax of the hidden-lexicon average.
/// A noise_rate fraction of the lexicon entries is perturbed in the released
/// lexicon: a drop_share of those is omitted, the others are rotated
/// (p, n, u) -> (u, p, n).
inline SyntheticSentiment gen_synth_sentiment(SyntheticSentimentSpec const& spec)
{
    validate(spec);
    Rng rng(spec.seed);
    SyntheticSentiment out;
    double const peak = spec.profile_peak;
    double const rest = 1.0 - peak;
    std::array<Distribution, 3> const profile{Distribution{peak, rest / 3.0, 2.0 * rest / 3.0},
                                              Distribution{rest / 3.0, peak, 2.0 * rest / 3.0},
                                              Distribution{rest / 2.0, rest / 2.0, peak}};
    std::array<std::vector<std::string>, 3> frequent;
    std::array<std::vector<std::string>, 3> rare;
    std::vector<std::string> lexicon_words;
    auto add_word = [&](std::string const& w, std::size_t c) {
        Distribution d = profile[c];
        double total = 0.0;
        for (auto& v : d) {
            v = std::max(v + rng.uniform(-spec.word_jitter, spec.word_jitter), 1e-3);
            total += v;
        }
        for (auto& v : d) {
            v /= total;
        }
        out.hidden.add(w, d);
        lexicon_words.push_back(w);
    };
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < spec.frequent_words_per_class; ++i) {
            frequent[c].push_back("f" + std::to_string(c) + "x" + std::to_string(i));
            add_word(frequent[c].back(), c);
        }
        for (std::size_t i = 0; i < spec.rare_words_per_class; ++i) {
            rare[c].push_back("r" + std::to_string(c) + "x" + std::to_string(i));
            add_word(rare[c].back(), c);
        }
    }

    std::vector<std::string> perturbed = lexicon_words;
    rng.shuffle(std::span<std::string>(perturbed));
    perturbed.resize(static_cast<std::size_t>(std::llround(spec.noise_rate * static_cast<double>(perturbed.size()))));
    auto const dropped_count = static_cast<std::size_t>(std::llround(spec.drop_share * static_cast<double>(perturbed.size())));
    std::set<std::string> const dropped(perturbed.begin(), perturbed.begin() + static_cast<std::ptrdiff_t>(dropped_count));
    std::set<std::string> const rotated(perturbed.begin() + static_cast<std::ptrdiff_t>(dropped_count), perturbed.end());
    for (auto const& w : lexicon_words) {
        Distribution d = out.hidden.entries.at(w);
        if (dropped.count(w) != 0U) {
            continue;
        }
        if (rotated.count(w) != 0U) {
            d = {d[2], d[0], d[1]};
        }
        out.released.add(w, d);
    }

    auto sentence = [&] {
        std::size_t const c = rng.index(3);
        std::vector<std::string> tokens;
        if (rng.bernoulli(spec.frequent_rate)) {
            tokens.push_back(frequent[c][rng.index(frequent[c].size())]);
        }
        for (std::size_t i = 0; i < spec.rare_per_sentence; ++i) {
            tokens.push_back(rare[c][rng.index(rare[c].size())]);
        }
        if (rng.bernoulli(spec.confuser_rate)) {
            std::size_t const other = (c + 1 + rng.index(2)) % 3;
            tokens.push_back(rare[other][rng.index(rare[other].size())]);
        }
        while (tokens.size() < spec.sentence_len) {
            tokens.push_back("b" + std::to_string(rng.index(spec.background_words)));
        }
        rng.shuffle(std::span<std::string>(tokens));
        auto const avg = lexicon_annotate(out.hidden, tokens);
        return std::make_pair(tokens, static_cast<Sentiment>(argmax(avg)));
    };
    for (std::size_t i = 0; i < spec.num_labeled; ++i) {
        auto [tokens, label] = sentence();
        out.corpus.labeled.push_back({"l" + std::to_string(i), std::move(tokens), label});
    }
    for (std::size_t i = 0; i < spec.num_unlabeled; ++i) {
        auto tokens = sentence().first;
        out.corpus.unlabeled.push_back({"u" + std::to_string(i), std::move(tokens), std::nullopt});
    }
    return out;
}

inline void write_lexicon_tsv(std::ostream& out, SentimentLexicon const& lexicon)
{
    std::vector<std::string> terms;
    for (auto const& [t, d] : lexicon.entries) {
        terms.push_back(t);
    }
    std::sort(terms.begin(), terms.end());
    out << std::setprecision(17);
    for (auto const& t : terms) {
        auto const& d = lexicon.entries.at(t);
        out << t << '\t' << d[0] << '\t' << d[1] << '\t' << d[2] << '\n';
    }
}

// ---------------------------------------------------------------------------
// Synthetic ranking task

struct SyntheticRankingSpec {
    std::size_t topics = 20;
    std::size_t terms_per_topic = 24;
    std::size_t background_terms = 400;
    std::size_t docs_per_topic = 15;
    std::size_t background_docs = 1200;
    std::size_t queries_per_topic = 15;
    std::size_t doc_len = 20;
    /// Share of topic terms in a relevant document.
    double topic_share = 0.6;
    /// Probability that a background token is replaced by a topic's core term.
    double collision_rate = 0.06;
    /// Probability that a relevant document avoids its query's terms.
    double noise_rate = 0.3;
    std::uint64_t seed = 1;
};

inline void validate(SyntheticRankingSpec const& s)
{
    if (!(s.noise_rate >= 0.0 && s.noise_rate <= 1.0) || !(s.collision_rate >= 0.0 && s.collision_rate <= 1.0)
        || !(s.topic_share >= 0.6 && s.topic_share <= 1.0)) {
        throw ConfigError("synthetic ranking spec: rates must lie in [0, 1] and topic_share in [0.6, 1]");
    }
    if (s.topics == 0 || s.terms_per_topic < 4 || s.doc_len < 2 || s.queries_per_topic == 0) {
        throw ConfigError("synthetic ranking spec: need topics >= 1, terms_per_topic >= 4, doc_len >= 2");
    }
}

struct SyntheticRanking {
    RankingCorpus corpus;
    /// Topic of each query, parallel to corpus.queries.
    std::vector<std::size_t> query_topic;
};

/// Every topic has a core term that appears in all of its queries, next to
/// one or two further topic terms. Documents of a topic are relevant
/// (grade 1) to every query of that topic. A relevant document draws
/// topic_share of its tokens from its topic's terms and contains the core
/// term. With probability noise_rate a document is hidden instead: it avoids
/// the core term and the terms of the query it was generated for. Background
/// documents pick up core terms of random topics at collision_rate per
/// token, which lets them outscore sparse relevant documents under BM25.
/// Qrels also judge the top BM25 non-relevant documents (grade 0), as many
/// as there are relevant ones.
inline SyntheticRanking gen_synth_ranking(SyntheticRankingSpec const& spec)
{
    validate(spec);
    Rng rng(spec.seed);
    std::vector<std::vector<std::string>> topic_terms(spec.topics);
    for (std::size_t t = 0; t < spec.topics; ++t) {
        for (std::size_t i = 0; i < spec.terms_per_topic; ++i) {
            topic_terms[t].push_back("k" + std::to_string(t * spec.terms_per_topic + i));
        }
    }
    std::vector<std::string> background;
    for (std::size_t i = 0; i < spec.background_terms; ++i) {
        background.push_back("g" + std::to_string(i));
    }

    std::vector<TextRecord> queries;
    std::vector<std::size_t> query_topic;
    std::vector<std::vector<std::string>> query_words;
    for (std::size_t t = 0; t < spec.topics; ++t) {
        for (std::size_t j = 0; j < spec.queries_per_topic; ++j) {
            std::vector<std::string> rest(topic_terms[t].begin() + 1, topic_terms[t].end());
            rng.shuffle(std::span<std::string>(rest));
            std::vector<std::string> terms{topic_terms[t][0]};
            terms.insert(terms.end(), rest.begin(), rest.begin() + 1 + static_cast<std::ptrdiff_t>(rng.index(2)));
            query_words.push_back(terms);
            query_topic.push_back(t);
        }
    }
    std::vector<std::size_t> query_order(query_topic.size());
    std::iota(query_order.begin(), query_order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(query_order));

    auto join = [](std::vector<std::string> const& words) {
        std::string s;
        for (auto const& w : words) {
            s += (s.empty() ? "" : " ") + w;
        }
        return s;
    };

    std::size_t const topical =
        std::min(spec.doc_len, static_cast<std::size_t>(std::ceil(spec.topic_share * static_cast<double>(spec.doc_len))));
    std::vector<std::string> docs;
    std::vector<std::size_t> doc_topic;
    for (std::size_t t = 0; t < spec.topics; ++t) {
        for (std::size_t j = 0; j < spec.docs_per_topic; ++j) {
            auto const& anchor = query_words[t * spec.queries_per_topic + rng.index(spec.queries_per_topic)];
            bool const hidden = rng.bernoulli(spec.noise_rate);
            std::vector<std::string> pool;
            for (std::size_t i = 1; i < topic_terms[t].size(); ++i) {
                auto const& w = topic_terms[t][i];
                if (!hidden || std::find(anchor.begin(), anchor.end(), w) == anchor.end()) {
                    pool.push_back(w);
                }
            }
            std::vector<std::string> words;
            for (std::size_t i = 0; i < spec.doc_len; ++i) {
                if (i < topical) {
                    words.push_back(pool[rng.index(pool.size())]);
                } else {
                    words.push_back(background[rng.index(background.size())]);
                }
            }
            if (!hidden) {
                words[0] = topic_terms[t][0];
            }
            rng.shuffle(std::span<std::string>(words));
            docs.push_back(join(words));
            doc_topic.push_back(t);
        }
    }
    for (std::size_t j = 0; j < spec.background_docs; ++j) {
        auto const& near = topic_terms[rng.index(spec.topics)];
        std::vector<std::string> words;
        for (std::size_t i = 0; i < spec.doc_len; ++i) {
            if (rng.bernoulli(spec.collision_rate)) {
                words.push_back(rng.bernoulli(0.5) ? near[0] : near[rng.index(near.size())]);
            } else {
                words.push_back(background[rng.index(background.size())]);
            }
        }
        docs.push_back(join(words));
        doc_topic.push_back(spec.topics);
    }
    // Ids follow a shuffled order so that BM25 tie-breaks carry no signal.
    std::vector<std::size_t> doc_order(docs.size());
    std::iota(doc_order.begin(), doc_order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(doc_order));
    std::vector<TextRecord> doc_records;
    std::vector<std::vector<std::string>> topic_docs(spec.topics);
    for (std::size_t k = 0; k < doc_order.size(); ++k) {
        std::string id = "d" + std::to_string(k);
        if (doc_topic[doc_order[k]] < spec.topics) {
            topic_docs[doc_topic[doc_order[k]]].push_back(id);
        }
        doc_records.push_back({std::move(id), docs[doc_order[k]]});
    }

    for (auto qi : query_order) {
        queries.push_back({"q" + std::to_string(qi), join(query_words[qi])});
    }

    SyntheticRanking out;
    out.corpus = make_ranking_corpus(doc_records, queries, {});
    for (auto qi : query_order) {
        out.query_topic.push_back(query_topic[qi]);
    }
    auto const index = build_index(out.corpus.documents);
    for (std::size_t i = 0; i < out.corpus.queries.size(); ++i) {
        auto const& q = out.corpus.queries[i];
        auto& judged = out.corpus.qrels[q.id];
        for (auto const& id : topic_docs[out.query_topic[i]]) {
            judged[id] = 1;
        }
        std::size_t const relevant = judged.size();
        std::size_t negatives = 0;
        for (auto const& s : bm25_top_k(index, {}, q.tokens, index.doc_count)) {
            if (negatives == relevant) {
                break;
            }
            auto const& id = index.doc_ids[s.doc];
            if (judged.count(id) == 0U) {
                judged[id] = 0;
                ++negatives;
            }
        }
    }
    return out;
}

inline void write_ranking_corpus(std::filesystem::path const& dir, RankingCorpus const& corpus)
{
    auto text = [&](std::vector<TokenId> const& ids) {
        std::string s;
        for (auto id : ids) {
            s += (s.empty() ? "" : " ") + corpus.vocab.term(id);
        }
        return s;
    };
    auto docs = open_output(dir / "docs.tsv");
    for (auto const& d : corpus.documents) {
        docs << d.id << '\t' << text(d.tokens) << '\n';
    }
    auto queries = open_output(dir / "queries.tsv");
    for (auto const& q : corpus.queries) {
        queries << q.id << '\t' << text(q.tokens) << '\n';
    }
    auto qrels = open_output(dir / "qrels.txt");
    write_qrels(qrels, corpus.qrels);
}

// ---------------------------------------------------------------------------
// Curves

inline std::string format_optional(std::optional<double> const& v)
{
    if (!v) {
        return "";
    }
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(6) << *v;
    return ss.str();
}

inline void write_curves_csv(std::ostream& out, std::vector<CurveRecord> const& records)
{
    out << "weak_batch,split,loss_t,loss_c,loss_wso,metric_test\n";
    for (auto const& r : records) {
        out << r.weak_batch << ',' << r.split << ',' << format_optional(r.loss_t) << ','
            << format_optional(r.loss_c) << ',' << format_optional(r.loss_wso) << ','
            << format_optional(r.metric_test) << '\n';
    }
}

inline void write_curves_csv(std::vector<CurveRecord> const& records, std::filesystem::path const& path)
{
    auto out = open_output(path);
    write_curves_csv(out, records);
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

inline std::vector<CurveRecord> read_curves_csv(std::istream& in, std::string const& source = "curves")
{
    std::vector<CurveRecord> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (number == 1) {
            if (line != "weak_batch,split,loss_t,loss_c,loss_wso,metric_test") {
                throw ParseError(source, number, "unexpected header");
            }
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) {
            fields.push_back(f);
        }
        if (!line.empty() && line.back() == ',') {
            fields.emplace_back();
        }
        if (fields.size() != 6) {
            throw ParseError(source, number, "expected 6 fields");
        }
        auto parse = [&](std::string const& s) -> std::optional<double> {
            if (s.empty()) {
                return std::nullopt;
            }
            try {
                return std::stod(s);
            } catch (std::exception const&) {
                throw ParseError(source, number, "bad number '" + s + "'");
            }
        };
        CurveRecord r;
        try {
            r.weak_batch = std::stoull(fields[0]);
        } catch (std::exception const&) {
            throw ParseError(source, number, "bad batch index");
        }
        r.split = fields[1];
        r.loss_t = parse(fields[2]);
        r.loss_c = parse(fields[3]);
        r.loss_wso = parse(fields[4]);
        r.metric_test = parse(fields[5]);
        out.push_back(r);
    }
    return out;
}

}  // namespace cws
