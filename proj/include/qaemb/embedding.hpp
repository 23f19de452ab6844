#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "qaemb/answer_engine.hpp"
#include "qaemb/error.hpp"
#include "qaemb/question_bank.hpp"
#include "qaemb/text.hpp"

namespace qaemb {

struct TimedWord {
    std::string token;
    double onset = 0.0;  ///< seconds

    bool operator==(const TimedWord&) const = default;
};

struct TrSpec {
    double tr_sec = 2.0;
    int n_trs = 1;
    double start_sec = 0.0;

    double time_of(int tr) const { return start_sec + tr_sec * tr; }
    bool operator==(const TrSpec&) const = default;
};

struct StoryStimulus {
    std::vector<TimedWord> words;
    TrSpec tr;

    void validate() const
    {
        require(tr.tr_sec > 0.0, ErrorCode::InvalidArgument, "tr_sec must be > 0");
        require(tr.n_trs >= 1, ErrorCode::InvalidArgument, "n_trs must be >= 1");
        for (std::size_t i = 1; i < words.size(); ++i) {
            require(words[i].onset >= words[i - 1].onset, ErrorCode::InvalidArgument,
                    "word onsets must be non-decreasing (word " + std::to_string(i) + ")");
        }
    }
};

/// Rows align with story words; columns with bank questions.
struct WordEmbeddingTrack {
    std::vector<double> times;
    Matrix values;
    std::vector<std::string> question_ids;
};

struct ContextOptions {
    int n = 10;
    bool include_current_word = true;
};

/// Space-joined trailing window ending at `word_index`: the current word and
/// up to n-1 predecessors (or the n predecessors when the current word is
/// excluded).
inline std::string ngram_context(const StoryStimulus& story, std::size_t word_index, ContextOptions opts = {})
{
    require(word_index < story.words.size(), ErrorCode::IndexOutOfRange,
            "word index " + std::to_string(word_index) + " outside story of " + std::to_string(story.words.size()));
    require(opts.n >= 1, ErrorCode::InvalidArgument, "ngram length must be >= 1");
    const auto n = static_cast<std::size_t>(opts.n);
    const std::size_t end = opts.include_current_word ? word_index + 1 : word_index;
    const std::size_t begin = end >= n ? end - n : 0;
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) {
            out.push_back(' ');
        }
        out += story.words[i].token;
    }
    return out;
}

/// Answers every text with each answerer; with `ensemble` the per-answerer
/// matrices are averaged, otherwise exactly one answerer must be given.
inline AnswerMatrix embed_texts(const std::vector<std::string>& texts, const QuestionBank& bank,
                                const std::vector<Answerer*>& answerers, bool ensemble_answers = false)
{
    require(!answerers.empty(), ErrorCode::ConfigInvalid, "no answerer configured");
    if (!ensemble_answers) {
        require(answerers.size() == 1, ErrorCode::ConfigInvalid, "several answerers given without ensembling");
        return answer_matrix(texts, bank, *answerers.front());
    }
    std::vector<AnswerMatrix> parts;
    parts.reserve(answerers.size());
    for (auto* a : answerers) {
        parts.push_back(answer_matrix(texts, bank, *a));
    }
    return ensemble(parts);
}

inline std::vector<std::string> story_contexts(const StoryStimulus& story, ContextOptions opts = {})
{
    std::vector<std::string> contexts;
    contexts.reserve(story.words.size());
    for (std::size_t i = 0; i < story.words.size(); ++i) {
        contexts.push_back(ngram_context(story, i, opts));
    }
    return contexts;
}

/// One embedding row per word, from its trailing ngram context. Identical
/// contexts are answered once.
inline WordEmbeddingTrack embed_story(const StoryStimulus& story, const QuestionBank& bank,
                                      const std::vector<Answerer*>& answerers, ContextOptions opts = {},
                                      bool ensemble_answers = false)
{
    story.validate();
    auto m = embed_texts(story_contexts(story, opts), bank, answerers, ensemble_answers);
    WordEmbeddingTrack track;
    track.times.reserve(story.words.size());
    for (const auto& w : story.words) {
        track.times.push_back(w.onset);
    }
    track.values = std::move(m.values);
    track.question_ids = bank.ids();
    return track;
}

// ---------------------------------------------------------------------------
// Story files: JSONL {"word", "onset"} plus a TR sidecar {"tr_sec", "n_trs", "start_sec"}.

inline std::vector<TimedWord> parse_story_jsonl(std::string_view content)
{
    std::vector<TimedWord> words;
    const auto lines = text::split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) {
            continue;
        }
        try {
            auto j = nlohmann::json::parse(lines[i]);
            words.push_back({j.at("word").get<std::string>(), j.at("onset").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::MalformedRecord, "story line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return words;
}

inline TrSpec parse_tr_spec(std::string_view content)
{
    try {
        auto j = nlohmann::json::parse(content);
        return {j.at("tr_sec").get<double>(), j.at("n_trs").get<int>(), j.value("start_sec", 0.0)};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedRecord, std::string("TR sidecar: ") + e.what());
    }
}

inline StoryStimulus load_story(const std::string& words_path, const std::string& tr_path)
{
    StoryStimulus s{parse_story_jsonl(text::read_file(words_path)), parse_tr_spec(text::read_file(tr_path))};
    s.validate();
    return s;
}

inline void save_story(const StoryStimulus& story, const std::string& words_path, const std::string& tr_path)
{
    std::string out;
    for (const auto& w : story.words) {
        nlohmann::ordered_json j = {{"word", w.token}, {"onset", w.onset}};
        out += j.dump() + "\n";
    }
    text::write_file(words_path, out);
    nlohmann::ordered_json tr = {{"tr_sec", story.tr.tr_sec}, {"n_trs", story.tr.n_trs},
                                 {"start_sec", story.tr.start_sec}};
    text::write_file(tr_path, tr.dump() + "\n");
}

}  // namespace qaemb
