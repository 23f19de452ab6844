#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "qaemb/error.hpp"
#include "qaemb/matrix_io.hpp"
#include "qaemb/question_bank.hpp"
#include "qaemb/text.hpp"

namespace qaemb {

using SparseVector = std::map<std::string, double>;

/// Counts of contiguous word n-grams (lowercased, split on non-alphanumerics).
inline SparseVector bag_of_ngrams(std::string_view input, int n)
{
    require(n >= 1 && n <= 3, ErrorCode::InvalidArgument, "ngram order must be 1, 2 or 3");
    const auto toks = text::word_tokens(input);
    SparseVector out;
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= toks.size(); ++i) {
        std::string gram = toks[i];
        for (std::size_t k = 1; k < un; ++k) {
            gram += ' ';
            gram += toks[i + k];
        }
        out[gram] += 1.0;
    }
    return out;
}

inline double sparse_norm(const SparseVector& v)
{
    double s = 0;
    for (const auto& [_, x] : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

inline double sparse_cosine(const SparseVector& a, const SparseVector& b)
{
    const double na = sparse_norm(a);
    const double nb = sparse_norm(b);
    if (na == 0 || nb == 0) {
        return 0;
    }
    const auto& small = a.size() <= b.size() ? a : b;
    const auto& large = a.size() <= b.size() ? b : a;
    double dot = 0;
    for (const auto& [k, x] : small) {
        if (auto it = large.find(k); it != large.end()) {
            dot += x * it->second;
        }
    }
    return dot / (na * nb);
}

// ---------------------------------------------------------------------------
// Corpus

struct Posting {
    std::size_t doc = 0;
    double tf = 0;
};

/// Immutable document collection with unigram statistics for BM-25.
class Corpus {
  public:
    Corpus() = default;

    explicit Corpus(std::vector<std::pair<std::string, std::string>> docs)
    {
        m_ids.reserve(docs.size());
        m_texts.reserve(docs.size());
        double total_len = 0;
        for (auto& [id, body] : docs) {
            require(m_index.emplace(id, m_ids.size()).second, ErrorCode::MalformedRecord, "duplicate doc id " + id);
            const auto doc = m_ids.size();
            const auto counts = bag_of_ngrams(body, 1);
            double len = 0;
            for (const auto& [term, tf] : counts) {
                m_postings[term].push_back({doc, tf});
                len += tf;
            }
            m_lengths.push_back(len);
            total_len += len;
            m_ids.push_back(std::move(id));
            m_texts.push_back(std::move(body));
        }
        m_avg_len = m_ids.empty() ? 0.0 : total_len / static_cast<double>(m_ids.size());
    }

    std::size_t size() const noexcept { return m_ids.size(); }
    const std::vector<std::string>& ids() const noexcept { return m_ids; }
    const std::vector<std::string>& texts() const noexcept { return m_texts; }
    double avg_len() const noexcept { return m_avg_len; }
    double length(std::size_t doc) const { return m_lengths.at(doc); }

    std::size_t index_of(const std::string& id) const
    {
        auto it = m_index.find(id);
        require(it != m_index.end(), ErrorCode::UnknownDoc, "unknown document " + id);
        return it->second;
    }

    bool contains(const std::string& id) const { return m_index.count(id) != 0; }

    std::size_t df(const std::string& term) const
    {
        auto it = m_postings.find(term);
        return it == m_postings.end() ? 0 : it->second.size();
    }

    const std::vector<Posting>* postings(const std::string& term) const
    {
        auto it = m_postings.find(term);
        return it == m_postings.end() ? nullptr : &it->second;
    }

  private:
    std::vector<std::string> m_ids;
    std::vector<std::string> m_texts;
    std::unordered_map<std::string, std::size_t> m_index;
    std::unordered_map<std::string, std::vector<Posting>> m_postings;
    std::vector<double> m_lengths;
    double m_avg_len = 0;
};

// ---------------------------------------------------------------------------
// BM-25

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// ln((N - df + 0.5) / (df + 0.5) + 1); never negative.
inline double bm25_idf(std::size_t n_docs, std::size_t df)
{
    const auto n = static_cast<double>(n_docs);
    const auto f = static_cast<double>(df);
    return std::log((n - f + 0.5) / (f + 0.5) + 1.0);
}

inline double bm25_term_weight(double tf, double doc_len, double avg_len, const Bm25Params& p)
{
    const double norm = avg_len > 0 ? doc_len / avg_len : 0.0;
    return tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

inline std::vector<std::string> unique_terms(std::string_view query)
{
    auto toks = text::word_tokens(query);
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& t : toks) {
        if (seen.insert(t).second) {
            out.push_back(std::move(t));
        }
    }
    return out;
}

inline double bm25_score(std::string_view query, const std::string& doc_id, const Corpus& corpus,
                         const Bm25Params& p = {})
{
    const auto doc = corpus.index_of(doc_id);
    double score = 0;
    for (const auto& term : unique_terms(query)) {
        const auto* list = corpus.postings(term);
        if (list == nullptr) {
            continue;
        }
        auto it = std::lower_bound(list->begin(), list->end(), doc,
                                   [](const Posting& post, std::size_t d) { return post.doc < d; });
        if (it == list->end() || it->doc != doc) {
            continue;
        }
        score += bm25_idf(corpus.size(), list->size()) *
                 bm25_term_weight(it->tf, corpus.length(doc), corpus.avg_len(), p);
    }
    return score;
}

/// BM-25 of one query against every document, in corpus order.
inline std::vector<double> bm25_scores(std::string_view query, const Corpus& corpus, const Bm25Params& p = {})
{
    std::vector<double> scores(corpus.size(), 0.0);
    for (const auto& term : unique_terms(query)) {
        const auto* list = corpus.postings(term);
        if (list == nullptr) {
            continue;
        }
        const double idf = bm25_idf(corpus.size(), list->size());
        for (const auto& post : *list) {
            scores[post.doc] += idf * bm25_term_weight(post.tf, corpus.length(post.doc), corpus.avg_len(), p);
        }
    }
    return scores;
}

// ---------------------------------------------------------------------------
// QA-Emb similarity and learned per-question scalars

/// cosine(w * q, w * d); zero when either weighted vector vanishes.
inline double qa_similarity(const Vector& q, const Vector& d, const Vector& w)
{
    require(q.size() == d.size() && q.size() == w.size(), ErrorCode::ShapeMismatch, "qa_similarity size mismatch");
    const Vector a = w.cwiseProduct(q);
    const Vector b = w.cwiseProduct(d);
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0 || nb == 0) {
        return 0.0;
    }
    return a.dot(b) / (na * nb);
}

namespace detail {
/// cosine(w*q, w*d) and its gradient with respect to w.
inline double weighted_cosine_grad(const Vector& q, const Vector& d, const Vector& w, Vector& grad)
{
    const Vector a = w.cwiseProduct(q);
    const Vector b = w.cwiseProduct(d);
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0 || nb == 0) {
        grad.setZero(w.size());
        return 0.0;
    }
    const double c = a.dot(b) / (na * nb);
    const Vector da = b / (na * nb) - c * a / (na * na);
    const Vector db = a / (na * nb) - c * b / (nb * nb);
    grad = q.cwiseProduct(da) + d.cwiseProduct(db);
    return c;
}
}  // namespace detail

using QrelSet = std::map<std::string, std::set<std::string>>;

struct ScalarLearningConfig {
    double learning_rate = 1e-4;
    int epochs = 8;
    int negatives_per_positive = 32;
    double positive_weight = 10.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

struct ScalarLearningResult {
    Vector weights;
    std::vector<double> epoch_loss;
};

/// Learns one scalar per question by Adam on
///   positive_weight * mean(-cos_w(q, d+)) + mean(cos_w(q, d-)),
/// one (query, relevant doc) pair plus sampled non-relevant docs per step.
/// Embeddings: query_emb rows follow `query_ids`, doc_emb rows follow corpus.
inline ScalarLearningResult learn_scalars(const std::vector<std::string>& train_queries, const QrelSet& qrels,
                                          const std::map<std::string, Eigen::Index>& query_rows,
                                          const Matrix& query_emb, const Corpus& corpus, const Matrix& doc_emb,
                                          const ScalarLearningConfig& cfg = {})
{
    require(query_emb.cols() == doc_emb.cols(), ErrorCode::ShapeMismatch, "query/doc embedding widths differ");
    require(doc_emb.rows() == static_cast<Eigen::Index>(corpus.size()), ErrorCode::ShapeMismatch,
            "one doc embedding row per corpus document required");
    const auto d = query_emb.cols();
    const auto n_docs = corpus.size();

    struct Pair {
        Eigen::Index query_row;
        std::size_t doc;
        const std::set<std::string>* relevant;
    };
    std::vector<Pair> pairs;
    for (const auto& qid : train_queries) {
        auto rel = qrels.find(qid);
        if (rel == qrels.end()) {
            continue;
        }
        auto row = query_rows.find(qid);
        require(row != query_rows.end(), ErrorCode::MissingInput, "no embedding for query " + qid);
        for (const auto& doc : rel->second) {
            pairs.push_back({row->second, corpus.index_of(doc), &rel->second});
        }
    }
    require(!pairs.empty(), ErrorCode::NoPositives, "no relevant (query, document) pairs in the training split");

    ScalarLearningResult res;
    res.weights = Vector::Ones(d);
    if (cfg.epochs <= 0) {
        return res;
    }
    Vector m = Vector::Zero(d);
    Vector v = Vector::Zero(d);
    Vector grad(d);
    Vector g(d);
    std::mt19937_64 rng(cfg.seed);
    std::int64_t step = 0;
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng() % i]);
        }
        double loss_sum = 0;
        for (auto pi : order) {
            const auto& p = pairs[pi];
            const Vector q = query_emb.row(p.query_row).transpose();
            grad.setZero();
            const double pos = detail::weighted_cosine_grad(q, doc_emb.row(static_cast<Eigen::Index>(p.doc)).transpose(),
                                                            res.weights, g);
            grad -= cfg.positive_weight * g;
            double loss = -cfg.positive_weight * pos;
            int drawn = 0;
            double neg_sum = 0;
            Vector neg_grad = Vector::Zero(d);
            for (int attempt = 0; drawn < cfg.negatives_per_positive && attempt < 8 * cfg.negatives_per_positive;
                 ++attempt) {
                const auto doc = static_cast<std::size_t>(rng() % n_docs);
                if (p.relevant->count(corpus.ids()[doc]) != 0) {
                    continue;
                }
                neg_sum += detail::weighted_cosine_grad(q, doc_emb.row(static_cast<Eigen::Index>(doc)).transpose(),
                                                        res.weights, g);
                neg_grad += g;
                ++drawn;
            }
            if (drawn > 0) {
                grad += neg_grad / drawn;
                loss += neg_sum / drawn;
            }
            loss_sum += loss;

            ++step;
            m = cfg.beta1 * m + (1 - cfg.beta1) * grad;
            v = cfg.beta2 * v + (1 - cfg.beta2) * grad.cwiseProduct(grad);
            const double bc1 = 1 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1 - std::pow(cfg.beta2, static_cast<double>(step));
            res.weights.array() -=
                cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
        }
        res.epoch_loss.push_back(loss_sum / static_cast<double>(pairs.size()));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Rankings and metrics

struct QueryRanking {
    std::string query_id;
    std::vector<std::string> docs;  ///< best first
};

/// Corpus doc ids by decreasing score; ties keep corpus order.
inline std::vector<std::string> rank_by_scores(const std::vector<double>& scores, const Corpus& corpus)
{
    require(scores.size() == corpus.size(), ErrorCode::ShapeMismatch, "one score per document required");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        out.push_back(corpus.ids()[i]);
    }
    return out;
}

namespace detail {
inline const std::set<std::string>& relevant_for(const QrelSet& qrels, const std::string& qid)
{
    auto it = qrels.find(qid);
    require(it != qrels.end() && !it->second.empty(), ErrorCode::NoPositives, "query " + qid + " has no relevant docs");
    return it->second;
}
}  // namespace detail

/// Mean over queries of 1/rank of the first relevant document (0 if none
/// is retrieved).
inline double mrr(const std::vector<QueryRanking>& rankings, const QrelSet& qrels)
{
    require(!rankings.empty(), ErrorCode::EmptyDataset, "MRR over zero queries");
    double total = 0;
    for (const auto& r : rankings) {
        const auto& rel = detail::relevant_for(qrels, r.query_id);
        for (std::size_t i = 0; i < r.docs.size(); ++i) {
            if (rel.count(r.docs[i]) != 0) {
                total += 1.0 / static_cast<double>(i + 1);
                break;
            }
        }
    }
    return total / static_cast<double>(rankings.size());
}

/// Mean over queries of the fraction of relevant documents in the top k.
inline double recall_at_k(const std::vector<QueryRanking>& rankings, const QrelSet& qrels, std::size_t k)
{
    require(!rankings.empty(), ErrorCode::EmptyDataset, "recall over zero queries");
    require(k >= 1, ErrorCode::InvalidArgument, "recall cutoff must be >= 1");
    double total = 0;
    for (const auto& r : rankings) {
        const auto& rel = detail::relevant_for(qrels, r.query_id);
        std::size_t hit = 0;
        for (std::size_t i = 0; i < std::min(k, r.docs.size()); ++i) {
            hit += rel.count(r.docs[i]);
        }
        total += static_cast<double>(hit) / static_cast<double>(rel.size());
    }
    return total / static_cast<double>(rankings.size());
}

// ---------------------------------------------------------------------------
// Score fusion

enum class FusionMode { concat, sum };

inline std::string_view to_string(FusionMode m)
{
    return m == FusionMode::concat ? "concat" : "sum";
}

/// Per-query fusion of BM-25 and QA-Emb scores over the same documents.
///
/// concat: inner product of the concatenated [BM-25 | QA-Emb] blocks, with
/// the BM-25 block scaled by its per-query maximum and the QA block (a
/// cosine) weighted by `qa_coefficient`. A zero coefficient reproduces the
/// BM-25 ranking. sum: z-scored scores added.
inline std::vector<double> fuse_scores(const std::vector<double>& bm25, const std::vector<double>& qa, FusionMode mode,
                                       double qa_coefficient = 1.0)
{
    require(bm25.size() == qa.size(), ErrorCode::ShapeMismatch, "fusion inputs cover different documents");
    std::vector<double> out(bm25.size());
    if (mode == FusionMode::concat) {
        const double top = bm25.empty() ? 0.0 : *std::max_element(bm25.begin(), bm25.end());
        for (std::size_t i = 0; i < bm25.size(); ++i) {
            out[i] = (top > 0 ? bm25[i] / top : 0.0) + qa_coefficient * qa[i];
        }
        return out;
    }
    auto zscore = [](const std::vector<double>& s) {
        const double n = static_cast<double>(s.size());
        const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
        double var = 0;
        for (double x : s) {
            var += (x - mean) * (x - mean);
        }
        const double sd = std::sqrt(var / n);
        std::vector<double> z(s.size(), 0.0);
        if (sd > 0) {
            for (std::size_t i = 0; i < s.size(); ++i) {
                z[i] = (s[i] - mean) / sd;
            }
        }
        return z;
    };
    const auto zb = zscore(bm25);
    const auto zq = zscore(qa);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = zb[i] + qa_coefficient * zq[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Question rewriting (query-side wording -> document-side wording)

struct RewriteRule {
    std::string pattern;
    std::string replacement;
};

inline std::vector<RewriteRule> load_rewrite_rules(const std::string& path)
{
    std::vector<RewriteRule> rules;
    try {
        for (const auto& r : nlohmann::json::parse(text::read_file(path))) {
            rules.push_back({r.at("pattern").get<std::string>(), r.at("replacement").get<std::string>()});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigInvalid, path + ": " + e.what());
    }
    return rules;
}

/// Applies every rule in order to each question text; ids are kept so
/// column j still answers the same underlying question.
inline QuestionBank rewrite_questions(const QuestionBank& bank, const std::vector<RewriteRule>& rules)
{
    std::vector<std::pair<std::regex, std::string>> compiled;
    for (const auto& r : rules) {
        try {
            compiled.emplace_back(std::regex(r.pattern), r.replacement);
        } catch (const std::regex_error& e) {
            fail(ErrorCode::ConfigInvalid, "bad rewrite pattern '" + r.pattern + "': " + e.what());
        }
    }
    std::vector<Question> out;
    for (const auto& q : bank) {
        auto t = q.text;
        for (const auto& [re, rep] : compiled) {
            t = std::regex_replace(t, re, rep);
        }
        out.push_back({q.id, std::move(t), q.source});
    }
    return {bank.name() + "-docs", std::move(out)};
}

// ---------------------------------------------------------------------------
// TSV loaders

inline std::vector<std::pair<std::string, std::string>> parse_two_column_tsv(std::string_view content,
                                                                             const std::string& what)
{
    std::vector<std::pair<std::string, std::string>> rows;
    const auto lines = text::split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) {
            continue;
        }
        auto tab = lines[i].find('\t');
        require(tab != std::string::npos, ErrorCode::MalformedRecord,
                what + " line " + std::to_string(i + 1) + ": expected two tab-separated fields");
        rows.emplace_back(lines[i].substr(0, tab), lines[i].substr(tab + 1));
    }
    return rows;
}

inline Corpus load_corpus_tsv(const std::string& path)
{
    return Corpus(parse_two_column_tsv(text::read_file(path), path));
}

inline std::vector<std::pair<std::string, std::string>> load_queries_tsv(const std::string& path)
{
    return parse_two_column_tsv(text::read_file(path), path);
}

inline QrelSet load_qrels_tsv(const std::string& path, const Corpus& corpus)
{
    QrelSet qrels;
    for (auto& [q, d] : parse_two_column_tsv(text::read_file(path), path)) {
        require(corpus.contains(d), ErrorCode::UnknownDoc, "qrels reference unknown document " + d);
        qrels[q].insert(d);
    }
    return qrels;
}

struct RetrievalReport {
    std::string method;
    double mrr = 0;
    double recall1 = 0;
    double recall5 = 0;
    std::size_t embedding_size = 0;
};

inline RetrievalReport make_report(std::string method, const std::vector<QueryRanking>& rankings, const QrelSet& qrels,
                                   std::size_t embedding_size)
{
    return {std::move(method), mrr(rankings, qrels), recall_at_k(rankings, qrels, 1), recall_at_k(rankings, qrels, 5),
            embedding_size};
}

inline nlohmann::ordered_json to_json(const RetrievalReport& r)
{
    return {{"method", r.method}, {"mrr", r.mrr}, {"recall@1", r.recall1}, {"recall@5", r.recall5},
            {"embedding_size", r.embedding_size}};
}

// ---------------------------------------------------------------------------
// Whole-split evaluation helpers

struct RetrievalInputs {
    const Corpus* corpus = nullptr;
    std::vector<std::pair<std::string, std::string>> queries;  ///< (id, text)
    QrelSet qrels;
    Matrix query_emb;  ///< rows follow `queries`
    Matrix doc_emb;    ///< rows follow corpus order
};

inline std::map<std::string, Eigen::Index> query_row_index(const RetrievalInputs& in)
{
    std::map<std::string, Eigen::Index> rows;
    for (std::size_t i = 0; i < in.queries.size(); ++i) {
        rows.emplace(in.queries[i].first, static_cast<Eigen::Index>(i));
    }
    return rows;
}

inline std::vector<double> qa_scores(const RetrievalInputs& in, Eigen::Index query_row, const Vector& w)
{
    std::vector<double> s(in.corpus->size());
    const Vector q = in.query_emb.row(query_row).transpose();
    for (std::size_t d = 0; d < s.size(); ++d) {
        s[d] = qa_similarity(q, in.doc_emb.row(static_cast<Eigen::Index>(d)).transpose(), w);
    }
    return s;
}

enum class Scorer { bm25, qa, fused, bag1, bag2, bag3 };

struct RankOptions {
    Scorer scorer = Scorer::qa;
    Vector weights;  ///< QA scalars; empty means all ones
    FusionMode fusion = FusionMode::concat;
    double qa_coefficient = 1.0;
    Bm25Params bm25;
};

/// Rankings for the given query ids under one scoring method.
inline std::vector<QueryRanking> rank_queries(const RetrievalInputs& in, const std::vector<std::string>& query_ids,
                                              const RankOptions& opts)
{
    const auto rows = query_row_index(in);
    const Vector w = opts.weights.size() > 0 ? opts.weights : Vector::Ones(in.query_emb.cols());
    std::vector<SparseVector> doc_bags;
    int bag_n = 0;
    if (opts.scorer == Scorer::bag1 || opts.scorer == Scorer::bag2 || opts.scorer == Scorer::bag3) {
        bag_n = opts.scorer == Scorer::bag1 ? 1 : opts.scorer == Scorer::bag2 ? 2 : 3;
        for (const auto& t : in.corpus->texts()) {
            doc_bags.push_back(bag_of_ngrams(t, bag_n));
        }
    }
    std::vector<QueryRanking> out;
    out.reserve(query_ids.size());
    for (const auto& qid : query_ids) {
        auto it = rows.find(qid);
        require(it != rows.end(), ErrorCode::MissingInput, "unknown query " + qid);
        const auto& qtext = in.queries[static_cast<std::size_t>(it->second)].second;
        std::vector<double> scores;
        switch (opts.scorer) {
        case Scorer::bm25: scores = bm25_scores(qtext, *in.corpus, opts.bm25); break;
        case Scorer::qa: scores = qa_scores(in, it->second, w); break;
        case Scorer::fused:
            scores = fuse_scores(bm25_scores(qtext, *in.corpus, opts.bm25), qa_scores(in, it->second, w), opts.fusion,
                                 opts.qa_coefficient);
            break;
        default: {
            const auto qb = bag_of_ngrams(qtext, bag_n);
            scores.resize(doc_bags.size());
            for (std::size_t d = 0; d < doc_bags.size(); ++d) {
                scores[d] = sparse_cosine(qb, doc_bags[d]);
            }
        }
        }
        out.push_back({qid, rank_by_scores(scores, *in.corpus)});
    }
    return out;
}

/// Picks the fusion coefficient with the best MRR on the given (training)
/// queries; ties keep the smaller coefficient.
inline double select_fusion_coefficient(const RetrievalInputs& in, const std::vector<std::string>& query_ids,
                                        RankOptions opts, const std::vector<double>& grid)
{
    require(!grid.empty(), ErrorCode::InvalidArgument, "empty fusion grid");
    double best = grid.front();
    double best_mrr = -1;
    for (double c : grid) {
        opts.scorer = Scorer::fused;
        opts.qa_coefficient = c;
        const double m = mrr(rank_queries(in, query_ids, opts), in.qrels);
        if (m > best_mrr) {
            best_mrr = m;
            best = c;
        }
    }
    return best;
}

/// Seeded shuffle of the query ids; the first `train_frac` share trains.
inline std::pair<std::vector<std::string>, std::vector<std::string>> split_queries(
    const std::vector<std::string>& ids, double train_frac, std::uint64_t seed)
{
    require(train_frac > 0 && train_frac < 1, ErrorCode::InvalidArgument, "train fraction must lie in (0,1)");
    std::vector<std::string> shuffled = ids;
    std::mt19937_64 rng(seed);
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[rng() % i]);
    }
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(ids.size())));
    std::vector<std::string> train(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::string> test(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train), shuffled.end());
    return {train, test};
}

}  // namespace qaemb
