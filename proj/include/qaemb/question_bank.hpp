#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "qaemb/completion.hpp"
#include "qaemb/error.hpp"
#include "qaemb/hash.hpp"
#include "qaemb/log.hpp"
#include "qaemb/text.hpp"

namespace qaemb {

struct Question {
    std::string id;
    std::string text;
    std::string source;

    bool operator==(const Question&) const = default;
};

/// Ordered, id-unique set of yes/no questions. Position j is embedding
/// dimension j.
class QuestionBank {
  public:
    QuestionBank(std::string name, std::vector<Question> questions)
        : m_name(std::move(name)), m_questions(std::move(questions))
    {
        require(!m_questions.empty(), ErrorCode::EmptyBank, "question bank '" + m_name + "' is empty");
        std::unordered_set<std::string> ids;
        for (const auto& q : m_questions) {
            require(!q.id.empty(), ErrorCode::MalformedRecord, "question with empty id");
            require(!text::trim(q.text).empty(), ErrorCode::MalformedRecord,
                    "question " + q.id + " has empty text");
            require(ids.insert(q.id).second, ErrorCode::MalformedRecord, "duplicate question id " + q.id);
        }
    }

    const std::string& name() const noexcept { return m_name; }
    const std::vector<Question>& questions() const noexcept { return m_questions; }
    std::size_t size() const noexcept { return m_questions.size(); }
    const Question& operator[](std::size_t i) const { return m_questions[i]; }
    auto begin() const noexcept { return m_questions.begin(); }
    auto end() const noexcept { return m_questions.end(); }

    std::optional<std::size_t> index_of(std::string_view id) const
    {
        for (std::size_t i = 0; i < m_questions.size(); ++i) {
            if (m_questions[i].id == id) {
                return i;
            }
        }
        return std::nullopt;
    }

    std::vector<std::string> ids() const
    {
        std::vector<std::string> out;
        out.reserve(m_questions.size());
        for (const auto& q : m_questions) {
            out.push_back(q.id);
        }
        return out;
    }

    /// Keeps the questions whose ids are listed, in bank order.
    QuestionBank subset(const std::vector<std::string>& keep_ids, std::string name = {}) const
    {
        std::unordered_set<std::string> keep(keep_ids.begin(), keep_ids.end());
        std::vector<Question> kept;
        for (const auto& q : m_questions) {
            if (keep.count(q.id) != 0) {
                kept.push_back(q);
            }
        }
        require(!kept.empty(), ErrorCode::EmptySubset, "subset of '" + m_name + "' is empty");
        return {name.empty() ? m_name : std::move(name), std::move(kept)};
    }

    bool operator==(const QuestionBank& other) const { return m_questions == other.m_questions; }

  private:
    std::string m_name;
    std::vector<Question> m_questions;
};

inline std::string format_question_id(std::size_t ordinal)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "q%04zu", ordinal);
    return buf;
}

namespace detail {
/// Returns the text after a bullet marker, or nullopt for non-bullet lines.
inline std::optional<std::string_view> strip_bullet(std::string_view line)
{
    line = text::trim(line);
    if (line.empty()) {
        return std::nullopt;
    }
    static constexpr std::string_view dot = "\xE2\x80\xA2";
    if (line.front() == '-' || line.front() == '*') {
        line.remove_prefix(1);
    } else if (line.substr(0, dot.size()) == dot) {
        line.remove_prefix(dot.size());
    } else if (std::isdigit(static_cast<unsigned char>(line.front())) != 0) {
        std::size_t i = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i])) != 0) {
            ++i;
        }
        if (i >= line.size() || line[i] != '.') {
            return std::nullopt;
        }
        line.remove_prefix(i + 1);
    } else {
        return std::nullopt;
    }
    return text::trim(line);
}
}  // namespace detail

/// Extracts one question per bullet line (`-`, `*`, `•`, `N.`). Ids are
/// assigned `q0001`, `q0002`, ... in encounter order.
inline std::vector<Question> parse_question_list(std::string_view raw, std::string_view source = {})
{
    std::vector<Question> out;
    for (const auto& line : text::split_lines(raw)) {
        auto body = detail::strip_bullet(line);
        if (!body || body->empty()) {
            continue;
        }
        out.push_back({format_question_id(out.size() + 1), std::string(*body), std::string(source)});
    }
    require(!out.empty(), ErrorCode::ZeroQuestionsParsed, "no bulleted questions in completion");
    return out;
}

inline std::string render_bullets(const QuestionBank& bank)
{
    std::string out;
    for (const auto& q : bank) {
        out += "- " + q.text + "\n";
    }
    return out;
}

inline std::string render_numbered(const QuestionBank& bank)
{
    std::string out;
    for (std::size_t i = 0; i < bank.size(); ++i) {
        out += std::to_string(i + 1) + ". " + bank[i].text + "\n";
    }
    return out;
}

/// Drops later questions whose normalized text repeats an earlier one.
inline QuestionBank dedup(const QuestionBank& bank)
{
    std::unordered_set<std::string> seen;
    std::vector<Question> kept;
    for (const auto& q : bank) {
        if (seen.insert(text::normalize(q.text)).second) {
            kept.push_back(q);
        }
    }
    return {bank.name(), std::move(kept)};
}

inline bool is_deduplicated(const QuestionBank& bank)
{
    std::unordered_set<std::string> seen;
    for (const auto& q : bank) {
        if (!seen.insert(text::normalize(q.text)).second) {
            return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string to_jsonl(const QuestionBank& bank)
{
    std::string out;
    for (const auto& q : bank) {
        nlohmann::ordered_json j = {{"id", q.id}, {"text", q.text}, {"source", q.source}};
        out += j.dump() + "\n";
    }
    return out;
}

/// Content hash of the bank (ids, texts, sources, order). Name excluded.
inline std::string bank_hash(const QuestionBank& bank)
{
    return sha256_hex(to_jsonl(bank));
}

inline QuestionBank parse_bank_jsonl(std::string_view content, std::string name)
{
    std::vector<Question> qs;
    std::unordered_set<std::string> ids;
    const auto lines = text::split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto where = "line " + std::to_string(i + 1);
        if (text::trim(lines[i]).empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(lines[i]);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::MalformedRecord, where + ": " + e.what());
        }
        require(j.is_object() && j.contains("id") && j["id"].is_string() && j.contains("text") &&
                    j["text"].is_string(),
                ErrorCode::MalformedRecord, where + ": expected {\"id\", \"text\", \"source\"}");
        Question q{j["id"].get<std::string>(), j["text"].get<std::string>(),
                   j.contains("source") && j["source"].is_string() ? j["source"].get<std::string>() : ""};
        require(!text::trim(q.text).empty(), ErrorCode::MalformedRecord, where + ": empty question text");
        require(ids.insert(q.id).second, ErrorCode::MalformedRecord, where + ": duplicate id " + q.id);
        qs.push_back(std::move(q));
    }
    require(!qs.empty(), ErrorCode::EmptyBank, "question bank '" + name + "' has no records");
    return {std::move(name), std::move(qs)};
}

inline QuestionBank load_bank(const std::string& path)
{
    return parse_bank_jsonl(text::read_file(path), std::filesystem::path(path).stem().string());
}

inline void save_bank(const QuestionBank& bank, const std::string& path)
{
    text::write_file(path, to_jsonl(bank));
}

// ---------------------------------------------------------------------------
// LLM-driven generation and pruning

inline constexpr std::string_view kPruneTemplate =
    "Here is a list of questions:\n{{question_list}}\n"
    "List the subset of these questions that are relevant for {{task_description}}.\n"
    "Return only a bulleted list of questions and nothing else.";

struct LlmCallOptions {
    std::string model;
    double temperature = 0.0;
    int max_tokens = 4096;
};

inline std::string render_prune_prompt(const QuestionBank& bank, std::string_view task_description)
{
    auto prompt = text::substitute(std::string(kPruneTemplate), "question_list", render_numbered(bank));
    return text::substitute(std::move(prompt), "task_description", task_description);
}

/// Asks the model for the task-relevant subset and intersects its reply with
/// the bank by normalized text. Unknown questions in the reply are dropped.
inline QuestionBank prune_with_llm(const QuestionBank& bank, std::string_view task_description,
                                   CompletionClient& client, const LlmCallOptions& options = {})
{
    CompletionRequest req{options.model,
                          {{"user", render_prune_prompt(bank, task_description)}},
                          options.temperature,
                          options.max_tokens};
    const auto reply = client.complete(req);
    const auto returned = parse_question_list(reply);

    std::unordered_set<std::string> wanted;
    std::unordered_set<std::string> known;
    for (const auto& q : bank) {
        known.insert(text::normalize(q.text));
    }
    for (const auto& q : returned) {
        auto key = text::normalize(q.text);
        if (known.count(key) == 0) {
            log::warn("prune: dropping question not in bank: \"" + q.text + "\"");
            continue;
        }
        wanted.insert(std::move(key));
    }
    std::vector<Question> kept;
    for (const auto& q : bank) {
        if (wanted.count(text::normalize(q.text)) != 0) {
            kept.push_back(q);
        }
    }
    require(!kept.empty(), ErrorCode::EmptySubset,
            "pruning for \"" + std::string(task_description) + "\" kept no questions");
    return {bank.name() + "-pruned", std::move(kept)};
}

/// Fills `{{key}}` placeholders of a generation template, sends it, and
/// parses the bulleted reply. `source` tags every returned question.
inline std::vector<Question> generate_questions(CompletionClient& client, std::string prompt_template,
                                                const std::map<std::string, std::string>& vars,
                                                std::string_view source, const LlmCallOptions& options = {})
{
    for (const auto& [k, v] : vars) {
        prompt_template = text::substitute(std::move(prompt_template), k, v);
    }
    CompletionRequest req{options.model, {{"user", prompt_template}}, options.temperature, options.max_tokens};
    return parse_question_list(client.complete(req), source);
}

/// Concatenates generated lists, renumbers ids, and removes exact normalized
/// duplicates across them.
inline QuestionBank merge_generated(std::string name, const std::vector<std::vector<Question>>& lists)
{
    std::vector<Question> all;
    for (const auto& list : lists) {
        for (const auto& q : list) {
            all.push_back({format_question_id(all.size() + 1), q.text, q.source});
        }
    }
    return dedup(QuestionBank(std::move(name), std::move(all)));
}

}  // namespace qaemb
