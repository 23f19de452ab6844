#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qaemb/answer_engine.hpp"
#include "qaemb/distill.hpp"
#include "qaemb/error.hpp"
#include "qaemb/feature_selection.hpp"
#include "qaemb/hash.hpp"
#include "qaemb/retrieval.hpp"
#include "qaemb/temporal_encoding.hpp"

namespace qaemb {

inline constexpr std::string_view kVersion = "0.1.0";

struct RunConfig {
    std::vector<std::string> answerers;  ///< "oracle:rules.json" or "remote:model[:template]"
    bool ensemble = false;
    double temperature = 0.0;
    int max_concurrency = 4;
    std::string bank;
    std::string cache_dir;
    std::string out;

    int context_n = 10;
    int lanczos_window = 3;
    EncodingConfig encoding;
    EnetOptions enet;
    ScalarLearningConfig retrieval;
    FusionMode fusion = FusionMode::concat;
    std::vector<double> fusion_grid = {0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0};
    double train_frac = 0.25;  ///< retrieval queries used for learning scalars
    StudentConfig student;
    std::uint64_t seed = 0;

    /// Seeds used anywhere downstream, by consumer.
    nlohmann::ordered_json seeds() const
    {
        return {{"seed", seed},
                {"cv", encoding.cv.seed},
                {"retrieval", retrieval.seed},
                {"student", student.seed},
                {"featurizer", student.featurizer.seed}};
    }
};

inline nlohmann::ordered_json to_json(const RunConfig& c)
{
    return {{"answerers", c.answerers},
            {"ensemble", c.ensemble},
            {"temperature", c.temperature},
            {"max_concurrency", c.max_concurrency},
            {"bank", c.bank},
            {"cache_dir", c.cache_dir},
            {"out", c.out},
            {"context_n", c.context_n},
            {"lanczos_window", c.lanczos_window},
            {"lambda_grid", c.encoding.cv.lambda_grid},
            {"delay_grid", c.encoding.cv.delay_grid},
            {"n_boot", c.encoding.cv.n_boot},
            {"chunk_len", c.encoding.cv.chunk_len},
            {"holdout_frac", c.encoding.cv.holdout_frac},
            {"pca_components", c.encoding.pca_components},
            {"enet_alphas", c.enet.alphas},
            {"l1_ratio", c.enet.l1_ratio},
            {"enet_tol", c.enet.tol},
            {"enet_max_iter", c.enet.max_iter},
            {"retrieval_lr", c.retrieval.learning_rate},
            {"retrieval_epochs", c.retrieval.epochs},
            {"negatives_per_positive", c.retrieval.negatives_per_positive},
            {"positive_weight", c.retrieval.positive_weight},
            {"fusion", std::string(to_string(c.fusion))},
            {"fusion_grid", c.fusion_grid},
            {"train_frac", c.train_frac},
            {"student_lr", c.student.learning_rate},
            {"student_max_epochs", c.student.max_epochs},
            {"student_patience", c.student.patience},
            {"hash_bits", c.student.featurizer.dim_bits},
            {"ngram_min", c.student.featurizer.min_n},
            {"ngram_max", c.student.featurizer.max_n},
            {"seed", c.seed}};
}

namespace detail {
template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& dst)
{
    if (j.contains(key) && !j.at(key).is_null()) {
        dst = j.at(key).get<T>();
    }
}
}  // namespace detail

/// Derives every component seed from the master seed.
inline void apply_seed(RunConfig& c, std::uint64_t seed)
{
    c.seed = seed;
    c.encoding.cv.seed = seed;
    c.retrieval.seed = seed;
    c.student.seed = seed;
}

/// Unknown keys are rejected so typos cannot silently fall back to defaults.
inline RunConfig parse_config(const nlohmann::json& j)
{
    require(j.is_object(), ErrorCode::ConfigInvalid, "config must be a JSON object");
    RunConfig c;
    const auto known = to_json(c);
    for (const auto& [key, value] : j.items()) {
        require(known.contains(key), ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
    }
    try {
        detail::read_opt(j, "answerers", c.answerers);
        detail::read_opt(j, "ensemble", c.ensemble);
        detail::read_opt(j, "temperature", c.temperature);
        detail::read_opt(j, "max_concurrency", c.max_concurrency);
        detail::read_opt(j, "bank", c.bank);
        detail::read_opt(j, "cache_dir", c.cache_dir);
        detail::read_opt(j, "out", c.out);
        detail::read_opt(j, "context_n", c.context_n);
        detail::read_opt(j, "lanczos_window", c.lanczos_window);
        detail::read_opt(j, "lambda_grid", c.encoding.cv.lambda_grid);
        detail::read_opt(j, "delay_grid", c.encoding.cv.delay_grid);
        detail::read_opt(j, "n_boot", c.encoding.cv.n_boot);
        detail::read_opt(j, "chunk_len", c.encoding.cv.chunk_len);
        detail::read_opt(j, "holdout_frac", c.encoding.cv.holdout_frac);
        detail::read_opt(j, "pca_components", c.encoding.pca_components);
        detail::read_opt(j, "enet_alphas", c.enet.alphas);
        detail::read_opt(j, "l1_ratio", c.enet.l1_ratio);
        detail::read_opt(j, "enet_tol", c.enet.tol);
        detail::read_opt(j, "enet_max_iter", c.enet.max_iter);
        detail::read_opt(j, "retrieval_lr", c.retrieval.learning_rate);
        detail::read_opt(j, "retrieval_epochs", c.retrieval.epochs);
        detail::read_opt(j, "negatives_per_positive", c.retrieval.negatives_per_positive);
        detail::read_opt(j, "positive_weight", c.retrieval.positive_weight);
        if (j.contains("fusion")) {
            const auto f = j.at("fusion").get<std::string>();
            require(f == "concat" || f == "sum", ErrorCode::ConfigInvalid, "fusion must be concat or sum");
            c.fusion = f == "concat" ? FusionMode::concat : FusionMode::sum;
        }
        detail::read_opt(j, "fusion_grid", c.fusion_grid);
        detail::read_opt(j, "train_frac", c.train_frac);
        detail::read_opt(j, "student_lr", c.student.learning_rate);
        detail::read_opt(j, "student_max_epochs", c.student.max_epochs);
        detail::read_opt(j, "student_patience", c.student.patience);
        detail::read_opt(j, "hash_bits", c.student.featurizer.dim_bits);
        detail::read_opt(j, "ngram_min", c.student.featurizer.min_n);
        detail::read_opt(j, "ngram_max", c.student.featurizer.max_n);
        std::uint64_t seed = 0;
        detail::read_opt(j, "seed", seed);
        apply_seed(c, seed);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigInvalid, std::string("config: ") + e.what());
    }
    c.encoding.lanczos_window = c.lanczos_window;
    return c;
}

inline RunConfig load_config(const std::string& path)
{
    require(std::filesystem::exists(path), ErrorCode::MissingInput, "config file not found: " + path);
    try {
        return parse_config(nlohmann::json::parse(text::read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::ConfigInvalid, path + ": " + e.what());
    }
}

/// Range checks shared by every command; path checks are per command.
inline void validate(const RunConfig& c)
{
    auto check = [](bool ok, const std::string& msg) { require(ok, ErrorCode::ConfigInvalid, msg); };
    check(c.temperature >= 0, "temperature must be >= 0");
    check(c.max_concurrency >= 1, "max_concurrency must be >= 1");
    check(c.context_n >= 1, "context_n must be >= 1");
    check(c.lanczos_window >= 1, "lanczos_window must be >= 1");
    check(!c.encoding.cv.lambda_grid.empty(), "lambda_grid is empty");
    for (double l : c.encoding.cv.lambda_grid) {
        check(l > 0, "lambda_grid entries must be > 0");
    }
    check(!c.encoding.cv.delay_grid.empty(), "delay_grid is empty");
    for (int d : c.encoding.cv.delay_grid) {
        check(d >= 1, "delay_grid entries must be >= 1");
    }
    check(c.encoding.cv.n_boot >= 1, "n_boot must be >= 1");
    check(c.encoding.cv.chunk_len >= 1, "chunk_len must be >= 1");
    check(c.encoding.cv.holdout_frac > 0 && c.encoding.cv.holdout_frac < 1, "holdout_frac must lie in (0,1)");
    check(c.encoding.pca_components >= 0, "pca_components must be >= 0");
    check(!c.enet.alphas.empty(), "enet_alphas is empty");
    check(c.enet.l1_ratio > 0 && c.enet.l1_ratio <= 1, "l1_ratio must lie in (0,1]");
    check(c.retrieval.learning_rate > 0, "retrieval_lr must be > 0");
    check(c.retrieval.epochs >= 0, "retrieval_epochs must be >= 0");
    check(c.retrieval.negatives_per_positive >= 1, "negatives_per_positive must be >= 1");
    check(!c.fusion_grid.empty(), "fusion_grid is empty");
    check(c.train_frac > 0 && c.train_frac < 1, "train_frac must lie in (0,1)");
    check(c.student.learning_rate > 0, "student_lr must be > 0");
    check(c.student.max_epochs >= 0, "student_max_epochs must be >= 0");
    check(c.student.patience >= 1, "student_patience must be >= 1");
}

inline std::string config_hash(const RunConfig& c)
{
    return sha256_hex(to_json(c).dump());
}

/// Sidecar written next to every artifact. Contains no timestamps so reruns
/// stay byte-identical.
inline nlohmann::ordered_json artifact_metadata(const RunConfig& c, std::string_view command,
                                                const std::string& bank_hash_hex = {})
{
    nlohmann::ordered_json meta = {{"tool", "qaemb"},
                                   {"version", std::string(kVersion)},
                                   {"command", std::string(command)},
                                   {"config_hash", config_hash(c)},
                                   {"bank_hash", bank_hash_hex},
                                   {"seeds", c.seeds()},
                                   {"config", to_json(c)}};
    return meta;
}

inline void write_metadata(const std::filesystem::path& artifact, const nlohmann::ordered_json& meta)
{
    text::write_file(artifact.string() + ".meta.json", meta.dump(2) + "\n");
}

}  // namespace qaemb
