#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qaemb/answer_engine.hpp"
#include "qaemb/error.hpp"
#include "qaemb/matrix_io.hpp"
#include "qaemb/question_bank.hpp"

namespace qaemb {

struct ClusteringOptions {
    bool l2_normalize = false;
};

/// Mean Euclidean distance over cross-class pairs minus the mean over
/// same-class pairs (unordered, no self pairs). Needs >= 2 classes with
/// >= 2 members each.
inline double clustering_score(const Matrix& embeddings, const std::vector<int>& labels, ClusteringOptions opts = {})
{
    require(embeddings.rows() == static_cast<Eigen::Index>(labels.size()), ErrorCode::ShapeMismatch,
            "one label per embedding row required");
    std::map<int, int> counts;
    for (int l : labels) {
        ++counts[l];
    }
    require(counts.size() >= 2, ErrorCode::DegenerateClasses, "clustering score needs at least two classes");
    for (const auto& [label, n] : counts) {
        require(n >= 2, ErrorCode::DegenerateClasses, "class " + std::to_string(label) + " has fewer than 2 members");
    }
    Matrix x = embeddings;
    if (opts.l2_normalize) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double n = x.row(i).norm();
            if (n > 0) {
                x.row(i) /= n;
            }
        }
    }
    double intra = 0;
    double inter = 0;
    std::size_t n_intra = 0;
    std::size_t n_inter = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
            const double dist = (x.row(i) - x.row(j)).norm();
            if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
                intra += dist;
                ++n_intra;
            } else {
                inter += dist;
                ++n_inter;
            }
        }
    }
    return inter / static_cast<double>(n_inter) - intra / static_cast<double>(n_intra);
}

inline Matrix select_columns(const Matrix& m, const std::vector<Eigen::Index>& cols)
{
    return m(Eigen::all, cols);
}

struct AdaptationDataset {
    std::string name;
    std::vector<LabeledText> examples;
    std::string task_description;
};

struct AdaptationRow {
    std::string dataset;
    double original = 0;
    std::optional<double> adapted;
    std::size_t original_size = 0;
    std::size_t adapted_size = 0;
    std::string error;  ///< set when the adapted bank could not be scored
};

namespace detail {
inline std::vector<int> labels_of(const std::vector<LabeledText>& ex)
{
    std::vector<int> out;
    out.reserve(ex.size());
    for (const auto& e : ex) {
        out.push_back(e.label);
    }
    return out;
}

inline std::vector<std::string> texts_of(const std::vector<LabeledText>& ex)
{
    std::vector<std::string> out;
    out.reserve(ex.size());
    for (const auto& e : ex) {
        out.push_back(e.text);
    }
    return out;
}
}  // namespace detail

/// Scores each dataset under the general bank and under its pruned bank.
/// `pruned[i]` is nullopt when pruning produced nothing for dataset i; that
/// row carries an error instead of an adapted score.
inline std::vector<AdaptationRow> adaptation_experiment(const QuestionBank& general,
                                                        const std::vector<std::optional<QuestionBank>>& pruned,
                                                        const std::vector<AdaptationDataset>& datasets,
                                                        Answerer& answerer, ClusteringOptions opts = {})
{
    require(pruned.size() == datasets.size(), ErrorCode::ShapeMismatch, "one pruned bank per dataset required");
    std::vector<AdaptationRow> rows;
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const auto& ds = datasets[i];
        AdaptationRow row;
        row.dataset = ds.name;
        row.original_size = general.size();
        const auto labels = detail::labels_of(ds.examples);
        const auto emb = answer_matrix(detail::texts_of(ds.examples), general, answerer);
        row.original = clustering_score(emb.values, labels, opts);
        if (!pruned[i]) {
            row.error = std::string(to_string(ErrorCode::EmptyBank)) + ": no pruned bank for " + ds.name;
            rows.push_back(std::move(row));
            continue;
        }
        std::vector<Eigen::Index> cols;
        for (const auto& q : *pruned[i]) {
            auto j = general.index_of(q.id);
            require(j.has_value() && general[*j].text == q.text, ErrorCode::BankMismatch,
                    "pruned question " + q.id + " is not in the general bank");
            cols.push_back(static_cast<Eigen::Index>(*j));
        }
        row.adapted_size = cols.size();
        try {
            row.adapted = clustering_score(select_columns(emb.values, cols), labels, opts);
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Prunes the general bank per dataset with the given model, then scores.
inline std::vector<AdaptationRow> adaptation_experiment(const QuestionBank& general,
                                                        const std::vector<AdaptationDataset>& datasets,
                                                        Answerer& answerer, CompletionClient& pruner,
                                                        const LlmCallOptions& llm = {}, ClusteringOptions opts = {})
{
    std::vector<std::optional<QuestionBank>> pruned;
    for (const auto& ds : datasets) {
        try {
            pruned.emplace_back(prune_with_llm(general, ds.task_description, pruner, llm));
        } catch (const Error& e) {
            log::warn("pruning for " + ds.name + " failed: " + e.what());
            pruned.emplace_back(std::nullopt);
        }
    }
    return adaptation_experiment(general, pruned, datasets, answerer, opts);
}

/// Two rows (Original, Adapted) with one column per dataset plus the
/// average and the average embedding size.
inline std::string adaptation_csv(const std::vector<AdaptationRow>& rows)
{
    std::ostringstream out;
    out << std::setprecision(6) << std::fixed;
    out << "setting";
    for (const auto& r : rows) {
        out << ',' << r.dataset;
    }
    out << ",AVG,embedding_size_avg\n";
    auto emit = [&](const char* name, auto score, auto size) {
        out << name;
        double sum = 0;
        double size_sum = 0;
        int n = 0;
        for (const auto& r : rows) {
            const std::optional<double> s = score(r);
            out << ',';
            if (s) {
                out << *s;
                sum += *s;
                size_sum += static_cast<double>(size(r));
                ++n;
            } else {
                out << "NA";
            }
        }
        out << ',';
        if (n > 0) {
            out << sum / n << ',' << size_sum / n;
        } else {
            out << "NA,NA";
        }
        out << '\n';
    };
    emit("Original", [](const AdaptationRow& r) { return std::optional<double>(r.original); },
         [](const AdaptationRow& r) { return r.original_size; });
    emit("Adapted", [](const AdaptationRow& r) { return r.adapted; },
         [](const AdaptationRow& r) { return r.adapted_size; });
    return out.str();
}

/// Labeled text TSV: label<TAB>text, integer labels.
inline std::vector<LabeledText> load_labeled_tsv(const std::string& path)
{
    std::vector<LabeledText> out;
    const auto lines = text::split_lines(text::read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) {
            continue;
        }
        auto tab = lines[i].find('\t');
        require(tab != std::string::npos, ErrorCode::MalformedRecord,
                path + " line " + std::to_string(i + 1) + ": expected label<TAB>text");
        try {
            out.push_back({lines[i].substr(tab + 1), std::stoi(lines[i].substr(0, tab))});
        } catch (const std::exception&) {
            fail(ErrorCode::MalformedRecord, path + " line " + std::to_string(i + 1) + ": label is not an integer");
        }
    }
    return out;
}

}  // namespace qaemb
