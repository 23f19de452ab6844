#pragma once

// Seeded generators for desk-scale instances with planted structure. Words
// are pseudo-words: filler words and trigger words use disjoint consonant
// sets, so no trigger ever occurs inside filler text.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "qaemb/answer_engine.hpp"
#include "qaemb/clustering.hpp"
#include "qaemb/completion.hpp"
#include "qaemb/embedding.hpp"
#include "qaemb/question_bank.hpp"
#include "qaemb/retrieval.hpp"
#include "qaemb/temporal_encoding.hpp"

namespace qaemb::synth {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t pick(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

template <class T>
void shuffle(std::vector<T>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[pick(rng, i)]);
    }
}

/// Unique pseudo-words built from consonant-vowel syllables.
class WordFactory {
  public:
    WordFactory(std::string consonants, int min_syllables, int max_syllables)
        : m_consonants(std::move(consonants)), m_min(min_syllables), m_max(max_syllables)
    {
    }

    std::string make(Rng& rng)
    {
        static constexpr std::string_view vowels = "aeiou";
        for (;;) {
            const int n = m_min + static_cast<int>(pick(rng, static_cast<std::size_t>(m_max - m_min + 1)));
            std::string w;
            for (int s = 0; s < n; ++s) {
                w += m_consonants[pick(rng, m_consonants.size())];
                w += vowels[pick(rng, vowels.size())];
            }
            if (accept(w)) {
                m_used.push_back(w);
                return w;
            }
        }
    }

    std::vector<std::string> make(Rng& rng, std::size_t n)
    {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back(make(rng));
        }
        return out;
    }

  private:
    // Rejects words that contain, or are contained in, an earlier word so
    // substring rules stay unambiguous.
    bool accept(const std::string& w) const
    {
        return std::none_of(m_used.begin(), m_used.end(), [&](const std::string& u) {
            return u.find(w) != std::string::npos || w.find(u) != std::string::npos;
        });
    }

    std::string m_consonants;
    int m_min;
    int m_max;
    std::vector<std::string> m_used;
};

inline WordFactory filler_words() { return WordFactory("bdfglmnprst", 2, 3); }
inline WordFactory trigger_words() { return WordFactory("hjkvwxz", 2, 3); }

inline std::string word_rule(const std::vector<std::string>& words)
{
    return "\\b(" + text::join(words, "|") + ")\\b";
}

// ---------------------------------------------------------------------------
// Planted encoding instance

struct EncodingSpec {
    int n_trs = 2000;
    double tr_sec = 2.0;
    double words_per_sec = 2.0;
    int n_questions = 20;
    int n_relevant = 3;
    int triggers_per_question = 3;
    double trigger_rate = 0.03;  ///< per word and question
    int n_filler = 400;
    int n_voxels = 50;
    int true_delays = 4;
    double snr = 1.0;  ///< per-voxel signal variance over noise variance
    double train_frac = 0.8;
    int context_n = 10;
    std::uint64_t seed = 7;
};

struct EncodingInstance {
    EncodingSpec spec;
    StoryStimulus story;
    QuestionBank bank{"synthetic", {{"q0001", "placeholder", ""}}};
    RuleOracle::Rules rules;
    std::vector<std::string> relevant;  ///< planted question ids
    Matrix features;                    ///< oracle features on the TR grid
    Matrix theta;                       ///< (d * true_delays) x V, rows follow add_delays labels
    Matrix responses;                   ///< T x V, z-scored per voxel
    Eigen::Index n_train = 0;

    EncodingData split(const Matrix& tr_features) const
    {
        const auto t = responses.rows();
        return {tr_features.topRows(n_train), tr_features.bottomRows(t - n_train), responses.topRows(n_train),
                responses.bottomRows(t - n_train), bank.ids()};
    }
};

inline EncodingInstance make_encoding(const EncodingSpec& spec = {})
{
    require(spec.n_relevant >= 1 && spec.n_relevant <= spec.n_questions, ErrorCode::ConfigInvalid,
            "need 1 <= n_relevant <= n_questions");
    require(spec.snr > 0, ErrorCode::ConfigInvalid, "snr must be > 0");
    Rng rng(spec.seed);
    EncodingInstance inst;
    inst.spec = spec;

    auto fillers = filler_words().make(rng, static_cast<std::size_t>(spec.n_filler));
    auto triggers = trigger_words();
    std::vector<Question> questions;
    std::vector<std::vector<std::string>> trig(static_cast<std::size_t>(spec.n_questions));
    for (int j = 0; j < spec.n_questions; ++j) {
        auto& words = trig[static_cast<std::size_t>(j)];
        words = triggers.make(rng, static_cast<std::size_t>(spec.triggers_per_question));
        const auto id = format_question_id(static_cast<std::size_t>(j) + 1);
        questions.push_back({id, "Does the input mention " + text::join(words, " or ") + "?", "synthetic"});
        inst.rules[id] = {word_rule(words)};
    }
    inst.bank = QuestionBank("synthetic-story", questions);

    // Story: jittered word onsets over the scan, each word a trigger with
    // probability n_questions * trigger_rate.
    const double duration = spec.n_trs * spec.tr_sec;
    const double gap = 1.0 / spec.words_per_sec;
    double t = 0.25 * gap;
    while (t < duration) {
        std::string w;
        const double u = uniform(rng);
        if (u < spec.trigger_rate * spec.n_questions) {
            const auto& words = trig[pick(rng, trig.size())];
            w = words[pick(rng, words.size())];
        } else {
            w = fillers[pick(rng, fillers.size())];
        }
        inst.story.words.push_back({w, t});
        t += gap * (0.6 + 0.8 * uniform(rng));
    }
    inst.story.tr = {spec.tr_sec, spec.n_trs, 0.0};

    RuleOracle oracle(inst.rules);
    const auto track = embed_story(inst.story, inst.bank, {&oracle}, {spec.context_n, true});
    inst.features = lanczos_resample(track, inst.story.tr);

    std::vector<std::size_t> order(static_cast<std::size_t>(spec.n_questions));
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    std::vector<std::size_t> relevant_idx(order.begin(), order.begin() + spec.n_relevant);
    std::sort(relevant_idx.begin(), relevant_idx.end());
    for (auto j : relevant_idx) {
        inst.relevant.push_back(questions[j].id);
    }

    const auto design = add_delays(inst.features, spec.true_delays, inst.bank.ids());
    const Matrix x = Standardizer::fit(design.values).apply(design.values);
    const auto d = static_cast<Eigen::Index>(spec.n_questions);
    std::normal_distribution<double> normal(0.0, 1.0);
    inst.theta = Matrix::Zero(design.values.cols(), spec.n_voxels);
    for (int k = 0; k < spec.true_delays; ++k) {
        for (auto j : relevant_idx) {
            const Eigen::Index row = k * d + static_cast<Eigen::Index>(j);
            for (Eigen::Index v = 0; v < spec.n_voxels; ++v) {
                inst.theta(row, v) = normal(rng);
            }
        }
    }
    require(design.values.cols() == x.cols(), ErrorCode::InvalidArgument,
            "planted features contain a constant column; raise trigger_rate");
    const Matrix signal = x * inst.theta;
    inst.responses = signal;
    for (Eigen::Index v = 0; v < signal.cols(); ++v) {
        const Vector c = signal.col(v).array() - signal.col(v).mean();
        const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(c.size()) / spec.snr);
        for (Eigen::Index r = 0; r < signal.rows(); ++r) {
            inst.responses(r, v) += sd * normal(rng);
        }
        // Voxel time series are z-scored, as measured responses usually are.
        auto col = inst.responses.col(v);
        col.array() -= col.mean();
        col /= std::sqrt(col.squaredNorm() / static_cast<double>(col.size()));
    }
    inst.n_train = static_cast<Eigen::Index>(std::llround(spec.train_frac * spec.n_trs));
    return inst;
}

// ---------------------------------------------------------------------------
// Planted retrieval corpus

struct RetrievalSpec {
    int n_docs = 250;
    int queries_per_doc = 40;
    int n_questions = 100;
    int n_informative = 5;
    int vocabulary = 300;
    int doc_topic_words = 6;
    int query_topic_words = 2;
    int query_random_words = 1;
    double noise_rate = 0.2;  ///< chance a noise question fires, per text
    std::uint64_t seed = 11;
};

struct RetrievalInstance {
    std::vector<std::pair<std::string, std::string>> docs;
    std::vector<std::pair<std::string, std::string>> queries;
    QrelSet qrels;
    QuestionBank query_bank{"synthetic", {{"q0001", "placeholder", ""}}};
    RuleOracle::Rules rules;
    std::vector<std::string> informative;
};

/// Informative questions fire identically on a query and its document but
/// through different trigger words, so BM-25 cannot see them; noise
/// questions fire independently.
inline RetrievalInstance make_retrieval(const RetrievalSpec& spec = {})
{
    require(spec.n_informative >= 1 && spec.n_informative <= spec.n_questions, ErrorCode::ConfigInvalid,
            "need 1 <= n_informative <= n_questions");
    Rng rng(spec.seed);
    RetrievalInstance inst;
    const auto vocab = filler_words().make(rng, static_cast<std::size_t>(spec.vocabulary));
    auto factory = trigger_words();
    std::vector<std::pair<std::string, std::string>> synonyms;  // informative: (doc word, query word)
    std::vector<std::string> noise_words;
    std::vector<Question> questions;
    for (int j = 0; j < spec.n_questions; ++j) {
        const auto id = format_question_id(static_cast<std::size_t>(j) + 1);
        if (j < spec.n_informative) {
            synonyms.emplace_back(factory.make(rng), factory.make(rng));
            const auto& [a, b] = synonyms.back();
            questions.push_back({id, "Does the query mention " + a + " or " + b + "?", "synthetic"});
            inst.rules[id] = {word_rule({a, b})};
            inst.informative.push_back(id);
        } else {
            noise_words.push_back(factory.make(rng));
            questions.push_back({id, "Does the query mention " + noise_words.back() + "?", "synthetic"});
            inst.rules[id] = {word_rule({noise_words.back()})};
        }
    }
    inst.query_bank = QuestionBank("synthetic-queries", questions);

    auto add_noise = [&](std::vector<std::string>& words) {
        for (const auto& w : noise_words) {
            if (uniform(rng) < spec.noise_rate) {
                words.push_back(w);
            }
        }
    };
    auto doc_id = [](int i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "d%04d", i + 1);
        return std::string(buf);
    };

    for (int i = 0; i < spec.n_docs; ++i) {
        std::vector<std::string> topic;
        for (int k = 0; k < spec.doc_topic_words; ++k) {
            topic.push_back(vocab[pick(rng, vocab.size())]);
        }
        std::vector<bool> bits;
        for (int b = 0; b < spec.n_informative; ++b) {
            bits.push_back(uniform(rng) < 0.5);
        }
        std::vector<std::string> words = topic;
        for (int b = 0; b < spec.n_informative; ++b) {
            if (bits[static_cast<std::size_t>(b)]) {
                words.push_back(synonyms[static_cast<std::size_t>(b)].first);
            }
        }
        add_noise(words);
        shuffle(words, rng);
        const auto did = doc_id(i);
        inst.docs.emplace_back(did, text::join(words, " "));

        for (int qn = 0; qn < spec.queries_per_doc; ++qn) {
            std::vector<std::string> qw;
            auto pool = topic;
            shuffle(pool, rng);
            for (int k = 0; k < spec.query_topic_words && k < static_cast<int>(pool.size()); ++k) {
                qw.push_back(pool[static_cast<std::size_t>(k)]);
            }
            for (int k = 0; k < spec.query_random_words; ++k) {
                qw.push_back(vocab[pick(rng, vocab.size())]);
            }
            for (int b = 0; b < spec.n_informative; ++b) {
                if (bits[static_cast<std::size_t>(b)]) {
                    qw.push_back(synonyms[static_cast<std::size_t>(b)].second);
                }
            }
            add_noise(qw);
            shuffle(qw, rng);
            char buf[24];
            std::snprintf(buf, sizeof buf, "s%04d-%02d", i + 1, qn + 1);
            inst.queries.emplace_back(buf, text::join(qw, " "));
            inst.qrels[buf].insert(did);
        }
    }
    return inst;
}

// ---------------------------------------------------------------------------
// Planted clustering datasets

struct ClusteringSpec {
    int n_datasets = 4;
    int questions_per_dataset = 25;
    int n_classes = 3;
    int examples_per_class = 40;
    double flip_rate = 0.1;   ///< per planted bit
    double noise_rate = 0.5;  ///< other datasets' questions
    std::uint64_t seed = 13;
};

struct ClusteringInstance {
    QuestionBank general{"synthetic", {{"q0001", "placeholder", ""}}};
    RuleOracle::Rules rules;
    std::vector<AdaptationDataset> datasets;
    std::vector<std::vector<std::string>> planted;  ///< question ids per dataset
    std::map<std::string, std::string> task_topics;  ///< task description -> topic word
};

inline ClusteringInstance make_clustering(const ClusteringSpec& spec = {})
{
    Rng rng(spec.seed);
    ClusteringInstance inst;
    auto factory = trigger_words();
    auto names = filler_words();
    std::vector<Question> questions;
    std::vector<std::vector<std::string>> triggers(static_cast<std::size_t>(spec.n_datasets));
    for (int s = 0; s < spec.n_datasets; ++s) {
        const auto topic = names.make(rng);
        const auto task = "sorting " + topic + " reports by category";
        inst.task_topics[task] = topic;
        inst.datasets.push_back({"set-" + topic, {}, task});
        inst.planted.emplace_back();
        for (int j = 0; j < spec.questions_per_dataset; ++j) {
            const auto id = format_question_id(questions.size() + 1);
            const auto w = factory.make(rng);
            triggers[static_cast<std::size_t>(s)].push_back(w);
            questions.push_back({id, "Does the " + topic + " report mention " + w + "?", "synthetic"});
            inst.rules[id] = {word_rule({w})};
            inst.planted.back().push_back(id);
        }
    }
    inst.general = QuestionBank("synthetic-general", questions);

    for (int s = 0; s < spec.n_datasets; ++s) {
        std::vector<std::vector<bool>> prototypes;
        for (int c = 0; c < spec.n_classes; ++c) {
            std::vector<bool> p;
            for (int j = 0; j < spec.questions_per_dataset; ++j) {
                p.push_back(uniform(rng) < 0.5);
            }
            prototypes.push_back(std::move(p));
        }
        auto& examples = inst.datasets[static_cast<std::size_t>(s)].examples;
        for (int c = 0; c < spec.n_classes; ++c) {
            for (int e = 0; e < spec.examples_per_class; ++e) {
                std::vector<std::string> words;
                for (int other = 0; other < spec.n_datasets; ++other) {
                    const auto& trig = triggers[static_cast<std::size_t>(other)];
                    for (std::size_t j = 0; j < trig.size(); ++j) {
                        bool on = false;
                        if (other == s) {
                            on = prototypes[static_cast<std::size_t>(c)][j] != (uniform(rng) < spec.flip_rate);
                        } else {
                            on = uniform(rng) < spec.noise_rate;
                        }
                        if (on) {
                            words.push_back(trig[j]);
                        }
                    }
                }
                shuffle(words, rng);
                examples.push_back({text::join(words, " "), c});
            }
        }
        shuffle(examples, rng);
    }
    return inst;
}

/// Offline pruning model: returns the listed questions that mention the
/// topic word of whichever known task the prompt names.
class TopicPruneClient final : public CompletionClient {
  public:
    explicit TopicPruneClient(std::map<std::string, std::string> task_topics) : m_topics(std::move(task_topics)) {}

    std::string complete(const CompletionRequest& request) override
    {
        const auto& prompt = request.messages.back().content;
        std::string topic;
        for (const auto& [task, word] : m_topics) {
            if (prompt.find(task) != std::string::npos) {
                topic = word;
            }
        }
        std::string out;
        if (topic.empty()) {
            return out;
        }
        for (const auto& line : text::split_lines(prompt)) {
            auto item = qaemb::detail::strip_bullet(line);
            if (item && item->find(" " + topic + " ") != std::string_view::npos) {
                out += "- " + std::string(*item) + "\n";
            }
        }
        return out;
    }

  private:
    std::map<std::string, std::string> m_topics;
};

// ---------------------------------------------------------------------------
// Distillation corpus

struct DistillSpec {
    int n_texts = 5000;
    int n_questions = 10;
    int min_words = 8;
    int max_words = 16;
    double trigger_rate = 0.04;  ///< per word and question
    int n_filler = 400;
    std::uint64_t seed = 17;
};

struct DistillInstance {
    std::vector<std::string> texts;
    QuestionBank bank{"synthetic", {{"q0001", "placeholder", ""}}};
    RuleOracle::Rules rules;
};

/// Substring rules over single trigger words.
inline DistillInstance make_distill(const DistillSpec& spec = {})
{
    Rng rng(spec.seed);
    DistillInstance inst;
    const auto fillers = filler_words().make(rng, static_cast<std::size_t>(spec.n_filler));
    auto factory = trigger_words();
    std::vector<std::string> trig;
    std::vector<Question> questions;
    for (int j = 0; j < spec.n_questions; ++j) {
        const auto id = format_question_id(static_cast<std::size_t>(j) + 1);
        trig.push_back(factory.make(rng));
        questions.push_back({id, "Does the text contain " + trig.back() + "?", "synthetic"});
        inst.rules[id] = {trig.back()};
    }
    inst.bank = QuestionBank("synthetic-distill", questions);
    const double p_trigger = spec.trigger_rate * spec.n_questions;
    for (int i = 0; i < spec.n_texts; ++i) {
        const int n = spec.min_words + static_cast<int>(pick(rng, static_cast<std::size_t>(spec.max_words - spec.min_words + 1)));
        std::vector<std::string> words;
        for (int k = 0; k < n; ++k) {
            words.push_back(uniform(rng) < p_trigger ? trig[pick(rng, trig.size())] : fillers[pick(rng, fillers.size())]);
        }
        inst.texts.push_back(text::join(words, " "));
    }
    return inst;
}

}  // namespace qaemb::synth
