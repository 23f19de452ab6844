#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qaemb/completion.hpp"
#include "qaemb/error.hpp"
#include "qaemb/hash.hpp"
#include "qaemb/log.hpp"
#include "qaemb/matrix_io.hpp"
#include "qaemb/question_bank.hpp"
#include "qaemb/text.hpp"

namespace qaemb {

// ---------------------------------------------------------------------------
// Prompt templates

inline constexpr std::string_view kStandardTemplate = "standard";
inline constexpr std::string_view kFewshotTemplate = "fewshot";

inline bool is_known_template(std::string_view id)
{
    return id == kStandardTemplate || id == kFewshotTemplate;
}

inline int default_max_tokens(std::string_view template_id)
{
    return template_id == kFewshotTemplate ? 8 : 64;
}

namespace detail {
struct FewshotExemplar {
    std::string_view user;
    std::string_view assistant;
};

// Fixed exemplars; the fourth repeats its instruction line verbatim.
inline constexpr FewshotExemplar kFewshotExemplars[] = {
    {"Input text: and i just kept on laughing because it was so\nQuestion: Does the input mention laughter?\n"
     "Answer with Yes or No.",
     "Yes"},
    {"Input text: what a crazy day things just kept on happening\nQuestion: Is the sentence related to food "
     "preparation?\nAnswer with Yes or No.",
     "No"},
    {"Input text: i felt like a fly on the wall just waiting for\nQuestion: Does the text use a metaphor or "
     "figurative language?\nAnswer with Yes or No.",
     "Yes"},
    {"Input text: he takes too long in there getting the pans from\nQuestion: Is there a reference to "
     "sports?\nAnswer with Yes or No.\nAnswer with Yes or No.",
     "No"},
    {"Input text: was silent and lovely and there was no sound except\nQuestion: Is the sentence expressing "
     "confusion or uncertainty?\nAnswer with Yes or No.",
     "No"},
};
}  // namespace detail

inline std::vector<ChatMessage> render_prompt(std::string_view template_id, const Question& question,
                                              std::string_view input)
{
    if (template_id == kStandardTemplate) {
        return {{"user", "Input text: " + std::string(input) + "\nQuestion: " + question.text +
                             "\nAnswer with yes or no, then give an explanation."}};
    }
    if (template_id == kFewshotTemplate) {
        std::vector<ChatMessage> msgs;
        msgs.push_back({"system", "You are a concise, helpful assistant."});
        for (const auto& ex : detail::kFewshotExemplars) {
            msgs.push_back({"user", std::string(ex.user)});
            msgs.push_back({"assistant", std::string(ex.assistant)});
        }
        msgs.push_back({"user", "Input text: " + std::string(input) + "\nQuestion: " + question.text +
                                    "\nAnswer with Yes or No."});
        return msgs;
    }
    fail(ErrorCode::UnknownTemplate, "unknown prompt template '" + std::string(template_id) + "'");
}

// ---------------------------------------------------------------------------
// Yes/no parsing

namespace detail {
inline std::vector<std::string> alpha_tokens(std::string_view s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalpha(static_cast<unsigned char>(c)) != 0) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}
}  // namespace detail

/// 1 for yes, 0 for no, nullopt when the completion is unparseable.
///
/// The first alphabetic token decides when it is "yes" or "no". Otherwise the
/// first non-blank line is scanned for standalone yes/no tokens; exactly one
/// of the two must occur.
inline std::optional<int> parse_yes_no(std::string_view completion)
{
    auto trimmed = text::trim(completion);
    const auto all = detail::alpha_tokens(trimmed);
    if (all.empty()) {
        return std::nullopt;
    }
    if (all.front() == "yes") {
        return 1;
    }
    if (all.front() == "no") {
        return 0;
    }
    auto nl = trimmed.find('\n');
    const auto first_line = detail::alpha_tokens(trimmed.substr(0, nl));
    bool has_yes = false;
    bool has_no = false;
    for (const auto& t : first_line) {
        has_yes = has_yes || t == "yes";
        has_no = has_no || t == "no";
    }
    if (has_yes == has_no) {
        return std::nullopt;
    }
    return has_yes ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Answerer configuration

enum class AnswererKind { remote, oracle };

struct AnswererSpec {
    AnswererKind kind = AnswererKind::oracle;
    std::string model_id;
    std::string prompt_template_id = std::string(kStandardTemplate);
    double temperature = 0.0;
    int max_concurrency = 1;
    int max_tokens = 0;  ///< 0 selects the per-template default

    void validate() const
    {
        require(temperature >= 0.0, ErrorCode::ConfigInvalid, "temperature must be >= 0");
        require(max_concurrency >= 1, ErrorCode::ConfigInvalid, "max_concurrency must be >= 1");
        require(is_known_template(prompt_template_id), ErrorCode::UnknownTemplate,
                "unknown prompt template '" + prompt_template_id + "'");
        if (kind == AnswererKind::remote) {
            require(!model_id.empty(), ErrorCode::ConfigInvalid, "remote answerer needs a model id");
        }
    }

    int effective_max_tokens() const
    {
        return max_tokens > 0 ? max_tokens : default_max_tokens(prompt_template_id);
    }

    bool operator==(const AnswererSpec&) const = default;
};

inline nlohmann::ordered_json to_json(const AnswererSpec& s)
{
    return {{"kind", s.kind == AnswererKind::remote ? "remote" : "oracle"},
            {"model_id", s.model_id},
            {"prompt_template_id", s.prompt_template_id},
            {"temperature", s.temperature},
            {"max_concurrency", s.max_concurrency},
            {"max_tokens", s.effective_max_tokens()}};
}

// ---------------------------------------------------------------------------
// Persistent answer cache

struct CacheEntry {
    std::string raw;
    std::optional<int> parsed;
    std::string ts;
};

inline std::string iso8601_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// One JSON file per key. Writers go through a temporary file and rename, so
/// concurrent readers never observe a partial entry.
class AnswerCache {
  public:
    explicit AnswerCache(std::filesystem::path dir) : m_dir(std::move(dir))
    {
        std::error_code ec;
        std::filesystem::create_directories(m_dir, ec);
        require(!ec, ErrorCode::IoError, "cannot create cache dir " + m_dir.string());
    }

    static std::string key(std::string_view model_id, std::string_view template_id, std::string_view question,
                           std::string_view input, double temperature)
    {
        // nlohmann::json keeps object keys sorted, which makes dump() canonical.
        nlohmann::json j = {{"model_id", model_id},
                            {"template_id", template_id},
                            {"question", question},
                            {"input", input},
                            {"temperature", temperature}};
        return sha256_hex(j.dump());
    }

    /// Entries are sharded by the first two hex digits of the key.
    std::filesystem::path path_for(const std::string& key) const
    {
        return m_dir / key.substr(0, 2) / (key + ".json");
    }

    std::optional<CacheEntry> get(const std::string& key) const
    {
        const auto p = path_for(key);
        std::error_code ec;
        if (!std::filesystem::exists(p, ec)) {
            return std::nullopt;
        }
        try {
            auto j = nlohmann::json::parse(text::read_file(p.string()));
            CacheEntry e;
            e.raw = j.at("raw").get<std::string>();
            if (!j.at("parsed").is_null()) {
                e.parsed = j.at("parsed").get<int>();
            }
            e.ts = j.value("ts", "");
            return e;
        } catch (const std::exception& ex) {
            log::warn("ignoring corrupt cache entry " + p.string() + ": " + ex.what());
            return std::nullopt;
        }
    }

    void put(const std::string& key, const CacheEntry& entry) const
    {
        nlohmann::ordered_json j = {{"raw", entry.raw}, {"parsed", nullptr}, {"ts", entry.ts}};
        if (entry.parsed) {
            j["parsed"] = *entry.parsed;
        }
        thread_local std::mt19937_64 rng{std::random_device{}()};
        const auto target = path_for(key);
        std::error_code ec;
        std::filesystem::create_directories(target.parent_path(), ec);
        const auto tmp = target.parent_path() / ("." + key + "." + std::to_string(rng()) + ".tmp");
        text::write_file(tmp.string(), j.dump());
        std::filesystem::rename(tmp, target, ec);
        if (ec) {
            std::filesystem::remove(tmp, ec);
            fail(ErrorCode::IoError, "cannot commit cache entry " + key);
        }
    }

    const std::filesystem::path& dir() const noexcept { return m_dir; }

  private:
    std::filesystem::path m_dir;
};

// ---------------------------------------------------------------------------
// Answerers

class Answerer {
  public:
    virtual ~Answerer() = default;
    virtual const AnswererSpec& spec() const = 0;
    /// Checks the answerer can serve every question of the bank.
    virtual void prepare(const QuestionBank& /*bank*/) {}
    /// 1/0, or nullopt when the reply was unparseable. Must be thread-safe.
    virtual std::optional<int> answer(const Question& question, std::string_view input) = 0;
};

/// Deterministic stand-in for an LLM: question id -> case-insensitive
/// regexes; the answer is yes iff any pattern is found in the input.
class RuleOracle final : public Answerer {
  public:
    using Rules = std::map<std::string, std::vector<std::string>>;

    explicit RuleOracle(Rules rules) : m_patterns(std::move(rules))
    {
        m_spec.kind = AnswererKind::oracle;
        m_spec.model_id = "rule-oracle";
        for (const auto& [id, patterns] : m_patterns) {
            auto& compiled = m_compiled[id];
            for (const auto& p : patterns) {
                try {
                    compiled.emplace_back(p, std::regex::ECMAScript | std::regex::icase |
                                                 std::regex::optimize);
                } catch (const std::regex_error& e) {
                    fail(ErrorCode::ConfigInvalid, "bad rule regex for " + id + ": " + e.what());
                }
            }
        }
    }

    static RuleOracle from_json(const nlohmann::json& j)
    {
        require(j.is_object(), ErrorCode::ConfigInvalid, "rule oracle file must be a JSON object");
        Rules rules;
        for (const auto& [id, list] : j.items()) {
            require(list.is_array(), ErrorCode::ConfigInvalid, "rules for " + id + " must be an array");
            auto& out = rules[id];
            for (const auto& p : list) {
                require(p.is_string(), ErrorCode::ConfigInvalid, "rule for " + id + " is not a string");
                out.push_back(p.get<std::string>());
            }
        }
        return RuleOracle(std::move(rules));
    }

    static RuleOracle load(const std::string& path)
    {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text::read_file(path));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::ConfigInvalid, path + ": " + e.what());
        }
        return from_json(j);
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [id, patterns] : m_patterns) {
            j[id] = patterns;
        }
        return j;
    }

    const AnswererSpec& spec() const override { return m_spec; }
    const Rules& rules() const noexcept { return m_patterns; }

    void prepare(const QuestionBank& bank) override
    {
        for (const auto& q : bank) {
            require(m_compiled.count(q.id) != 0, ErrorCode::IncompleteRules, "no oracle rule for question " + q.id);
        }
    }

    std::optional<int> answer(const Question& question, std::string_view input) override
    {
        auto it = m_compiled.find(question.id);
        require(it != m_compiled.end(), ErrorCode::IncompleteRules, "no oracle rule for question " + question.id);
        for (const auto& re : it->second) {
            if (std::regex_search(input.begin(), input.end(), re)) {
                return 1;
            }
        }
        return 0;
    }

  private:
    AnswererSpec m_spec;
    Rules m_patterns;
    std::map<std::string, std::vector<std::regex>> m_compiled;
};

/// Asks a chat-completion model through `CompletionClient`, consulting the
/// cache first when one is attached.
class RemoteAnswerer final : public Answerer {
  public:
    RemoteAnswerer(AnswererSpec spec, std::shared_ptr<CompletionClient> client,
                   std::optional<AnswerCache> cache = std::nullopt)
        : m_spec(std::move(spec)), m_client(std::move(client)), m_cache(std::move(cache))
    {
        m_spec.kind = AnswererKind::remote;
        m_spec.validate();
        require(m_client != nullptr, ErrorCode::ConfigInvalid, "remote answerer needs a client");
    }

    const AnswererSpec& spec() const override { return m_spec; }

    std::optional<int> answer(const Question& question, std::string_view input) override
    {
        std::string key;
        if (m_cache) {
            key = AnswerCache::key(m_spec.model_id, m_spec.prompt_template_id, question.text, input,
                                   m_spec.temperature);
            if (auto hit = m_cache->get(key)) {
                m_cache_hits.fetch_add(1, std::memory_order_relaxed);
                return hit->parsed;
            }
        }
        CompletionRequest req{m_spec.model_id, render_prompt(m_spec.prompt_template_id, question, input),
                              m_spec.temperature, m_spec.effective_max_tokens()};
        m_requests.fetch_add(1, std::memory_order_relaxed);
        auto raw = m_client->complete(req);
        auto parsed = parse_yes_no(raw);
        if (m_cache) {
            m_cache->put(key, {raw, parsed, iso8601_now()});
        }
        return parsed;
    }

    std::size_t request_count() const noexcept { return m_requests.load(); }
    std::size_t cache_hits() const noexcept { return m_cache_hits.load(); }

  private:
    AnswererSpec m_spec;
    std::shared_ptr<CompletionClient> m_client;
    std::optional<AnswerCache> m_cache;
    std::atomic<std::size_t> m_requests{0};
    std::atomic<std::size_t> m_cache_hits{0};
};

// ---------------------------------------------------------------------------
// Answer matrices

struct BankRef {
    std::string name;
    std::string hash;
    std::size_t size = 0;

    bool operator==(const BankRef&) const = default;
};

inline BankRef make_bank_ref(const QuestionBank& bank)
{
    return {bank.name(), bank_hash(bank), bank.size()};
}

struct Provenance {
    AnswererSpec spec;
    std::size_t unparseable = 0;
};

/// texts x d answers in [0,1]; column j answers bank question j.
struct AnswerMatrix {
    std::vector<std::string> texts;
    BankRef bank;
    Matrix values;
    std::vector<Provenance> provenance;

    std::size_t unparseable() const
    {
        std::size_t n = 0;
        for (const auto& p : provenance) {
            n += p.unparseable;
        }
        return n;
    }
};

inline nlohmann::ordered_json provenance_json(const AnswerMatrix& m)
{
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& p : m.provenance) {
        auto j = to_json(p.spec);
        j["unparseable"] = p.unparseable;
        list.push_back(std::move(j));
    }
    return {{"bank_name", m.bank.name}, {"bank_hash", m.bank.hash}, {"dimension", m.bank.size},
            {"rows", m.texts.size()}, {"answerers", std::move(list)}};
}

namespace detail {
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn)
{
    const auto nthreads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&] {
            while (!stop.load()) {
                const auto i = next.fetch_add(1);
                if (i >= n) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                    stop = true;
                }
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}
}  // namespace detail

/// Answers every (text, question) pair. Repeated texts are answered once;
/// unparseable replies become 0 and are counted in the provenance.
inline AnswerMatrix answer_matrix(const std::vector<std::string>& texts, const QuestionBank& bank,
                                  Answerer& answerer)
{
    answerer.spec().validate();
    answerer.prepare(bank);

    std::unordered_map<std::string_view, std::size_t> first_row;
    std::vector<std::size_t> unique_rows;
    std::vector<std::size_t> row_source(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto [it, inserted] = first_row.emplace(texts[i], i);
        if (inserted) {
            unique_rows.push_back(i);
        }
        row_source[i] = it->second;
    }

    const auto d = bank.size();
    AnswerMatrix out;
    out.texts = texts;
    out.bank = make_bank_ref(bank);
    out.values = Matrix::Zero(static_cast<Eigen::Index>(texts.size()), static_cast<Eigen::Index>(d));

    std::atomic<std::size_t> unparseable{0};
    detail::parallel_for(unique_rows.size() * d, answerer.spec().max_concurrency, [&](std::size_t job) {
        const auto row = unique_rows[job / d];
        const auto col = job % d;
        auto a = answerer.answer(bank[col], texts[row]);
        if (!a) {
            unparseable.fetch_add(1);
        }
        out.values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = a.value_or(0);
    });
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (row_source[i] != i) {
            out.values.row(static_cast<Eigen::Index>(i)) = out.values.row(static_cast<Eigen::Index>(row_source[i]));
        }
    }
    out.provenance.push_back({answerer.spec(), unparseable.load()});
    if (unparseable.load() > 0) {
        log::warn(std::to_string(unparseable.load()) + " unparseable answers recorded as 0 (" +
                  answerer.spec().model_id + ")");
    }
    return out;
}

/// Entrywise mean of answer matrices over the same texts and bank.
inline AnswerMatrix ensemble(const std::vector<AnswerMatrix>& matrices)
{
    require(!matrices.empty(), ErrorCode::InvalidArgument, "ensemble of zero matrices");
    const auto& first = matrices.front();
    AnswerMatrix out;
    out.texts = first.texts;
    out.bank = first.bank;
    out.values = Matrix::Zero(first.values.rows(), first.values.cols());
    for (const auto& m : matrices) {
        require(m.bank == first.bank, ErrorCode::BankMismatch, "ensemble members use different banks");
        require(m.values.rows() == first.values.rows() && m.values.cols() == first.values.cols() &&
                    m.texts == first.texts,
                ErrorCode::ShapeMismatch, "ensemble members differ in shape or texts");
        out.values += m.values;
        out.provenance.insert(out.provenance.end(), m.provenance.begin(), m.provenance.end());
    }
    out.values /= static_cast<double>(matrices.size());
    return out;
}

/// Entries >= threshold become 1, others 0.
inline AnswerMatrix binarize(const AnswerMatrix& m, double threshold = 0.5)
{
    require(threshold > 0.0 && threshold < 1.0, ErrorCode::InvalidArgument, "threshold must lie in (0, 1)");
    AnswerMatrix out = m;
    out.values = (m.values.array() >= threshold).cast<double>().matrix();
    return out;
}

struct LabeledText {
    std::string text;
    int label = 0;
};

/// Fraction of examples where the answer equals the label; unparseable
/// replies count as wrong.
inline double qa_accuracy(Answerer& answerer, const std::vector<LabeledText>& dataset, const Question& question)
{
    require(!dataset.empty(), ErrorCode::EmptyDataset, "accuracy over an empty dataset");
    std::atomic<std::size_t> correct{0};
    detail::parallel_for(dataset.size(), answerer.spec().max_concurrency, [&](std::size_t i) {
        auto a = answerer.answer(question, dataset[i].text);
        if (a && *a == dataset[i].label) {
            correct.fetch_add(1);
        }
    });
    return static_cast<double>(correct.load()) / static_cast<double>(dataset.size());
}

}  // namespace qaemb
