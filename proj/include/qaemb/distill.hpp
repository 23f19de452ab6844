#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "qaemb/answer_engine.hpp"
#include "qaemb/error.hpp"
#include "qaemb/hash.hpp"
#include "qaemb/log.hpp"
#include "qaemb/matrix_io.hpp"
#include "qaemb/temporal_encoding.hpp"

namespace qaemb {

// ---------------------------------------------------------------------------
// Featurizer

/// Sorted unique feature indices; every listed feature has value 1.
struct SparseFeatures {
    std::vector<std::uint32_t> index;
};

class Featurizer {
  public:
    virtual ~Featurizer() = default;
    virtual std::uint32_t dim() const = 0;
    virtual SparseFeatures featurize(std::string_view input) const = 0;
    virtual nlohmann::ordered_json config() const = 0;
};

struct HashedNgramConfig {
    int dim_bits = 18;
    int min_n = 3;
    int max_n = 5;
    std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

/// Presence of hashed character n-grams of the lowercased, space-padded text.
class HashedCharNgramFeaturizer final : public Featurizer {
  public:
    explicit HashedCharNgramFeaturizer(HashedNgramConfig cfg = {}) : m_cfg(cfg)
    {
        require(cfg.dim_bits >= 1 && cfg.dim_bits <= 30, ErrorCode::ConfigInvalid, "dim_bits must lie in [1, 30]");
        require(cfg.min_n >= 1 && cfg.max_n >= cfg.min_n, ErrorCode::ConfigInvalid, "bad ngram order range");
    }

    std::uint32_t dim() const override { return 1U << m_cfg.dim_bits; }

    SparseFeatures featurize(std::string_view input) const override
    {
        const std::string padded = " " + text::to_lower(input) + " ";
        const std::uint32_t mask = dim() - 1;
        SparseFeatures f;
        for (int n = m_cfg.min_n; n <= m_cfg.max_n; ++n) {
            const auto un = static_cast<std::size_t>(n);
            for (std::size_t i = 0; i + un <= padded.size(); ++i) {
                const auto h = fnv1a64(std::string_view(padded).substr(i, un), m_cfg.seed + un);
                f.index.push_back(static_cast<std::uint32_t>(h) & mask);
            }
        }
        std::sort(f.index.begin(), f.index.end());
        f.index.erase(std::unique(f.index.begin(), f.index.end()), f.index.end());
        return f;
    }

    nlohmann::ordered_json config() const override
    {
        return {{"kind", "hashed-char-ngram"},
                {"dim_bits", m_cfg.dim_bits},
                {"min_n", m_cfg.min_n},
                {"max_n", m_cfg.max_n},
                {"seed", m_cfg.seed}};
    }

    const HashedNgramConfig& settings() const noexcept { return m_cfg; }

  private:
    HashedNgramConfig m_cfg;
};

// ---------------------------------------------------------------------------
// Student

enum class StudentMode { binary, probabilistic };

using HeadMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Shared featurizer feeding d independent logistic heads.
struct StudentModel {
    std::shared_ptr<const HashedCharNgramFeaturizer> featurizer;
    HeadMatrix weights;  ///< F x d
    Eigen::VectorXf bias;  ///< d
    BankRef bank;
    std::vector<std::string> question_ids;

    Eigen::Index n_heads() const { return weights.cols(); }

    Eigen::VectorXd logits(const SparseFeatures& x) const
    {
        Eigen::VectorXf z = bias;
        for (auto f : x.index) {
            z += weights.row(f).transpose();
        }
        return z.cast<double>();
    }

    /// Per-head P(yes), kept strictly inside (0, 1).
    Eigen::VectorXd probabilities(std::string_view input) const
    {
        const auto z = logits(featurizer->featurize(input));
        return z.unaryExpr([](double v) { return std::clamp(1.0 / (1.0 + std::exp(-v)), 1e-15, 1.0 - 1e-15); });
    }
};

struct StudentConfig {
    HashedNgramConfig featurizer;
    double learning_rate = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    int max_epochs = 50;
    int patience = 3;
    double validation_frac = 0.2;
    std::uint64_t seed = 0;
};

struct StudentTraining {
    StudentModel model;
    std::vector<double> train_loss;       ///< full training-set loss; entry 0 is the initialization
    std::vector<double> validation_loss;  ///< same indexing
    int best_epoch = 0;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> validation_rows;
};

namespace detail {
inline double head_loss(const Eigen::VectorXd& z, const Eigen::VectorXd& y)
{
    // Mean binary cross-entropy over heads, from logits.
    double total = 0;
    for (Eigen::Index h = 0; h < z.size(); ++h) {
        const double v = z(h);
        const double softplus = v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        total += softplus - y(h) * v;
    }
    return total / static_cast<double>(z.size());
}

inline double mean_loss(const StudentModel& m, const std::vector<SparseFeatures>& feats, const Matrix& y,
                        const std::vector<std::size_t>& rows)
{
    if (rows.empty()) {
        return 0.0;
    }
    double total = 0;
    for (auto r : rows) {
        total += head_loss(m.logits(feats[r]), y.row(static_cast<Eigen::Index>(r)).transpose());
    }
    return total / static_cast<double>(rows.size());
}
}  // namespace detail

/// Trains every head on the teacher's binary answers with per-example
/// sparse Adam updates. A seeded 80/20 split drives early stopping; the
/// snapshot with the lowest validation loss is returned.
inline StudentTraining train_student(const std::vector<std::string>& texts, const AnswerMatrix& teacher,
                                     const StudentConfig& cfg = {})
{
    require(!texts.empty(), ErrorCode::EmptyTraining, "no training texts");
    require(teacher.values.rows() == static_cast<Eigen::Index>(texts.size()), ErrorCode::ShapeMismatch,
            "one teacher row per text required");
    require(((teacher.values.array() == 0.0) || (teacher.values.array() == 1.0)).all(), ErrorCode::InvalidArgument,
            "teacher answers must be binary; binarize ensembled matrices first");
    require(cfg.validation_frac > 0 && cfg.validation_frac < 1, ErrorCode::ConfigInvalid,
            "validation fraction must lie in (0,1)");

    const auto n = texts.size();
    const auto d = teacher.values.cols();
    StudentTraining out;
    auto feat = std::make_shared<const HashedCharNgramFeaturizer>(cfg.featurizer);
    out.model.featurizer = feat;
    out.model.weights = HeadMatrix::Zero(feat->dim(), d);
    out.model.bias = Eigen::VectorXf::Zero(d);
    out.model.bank = teacher.bank;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[rng() % i]);
    }
    std::size_t n_val = n >= 2 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.validation_frac * n))) : 0;
    n_val = std::min(n_val, n - 1);
    out.validation_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    require(!out.train_rows.empty(), ErrorCode::EmptyTraining, "training split is empty");
    const auto& val_rows = out.validation_rows.empty() ? out.train_rows : out.validation_rows;

    std::vector<SparseFeatures> feats;
    feats.reserve(n);
    for (const auto& t : texts) {
        feats.push_back(feat->featurize(t));
    }

    HeadMatrix m1 = HeadMatrix::Zero(feat->dim(), d);
    HeadMatrix m2 = HeadMatrix::Zero(feat->dim(), d);
    Eigen::VectorXf b1 = Eigen::VectorXf::Zero(d);
    Eigen::VectorXf b2 = Eigen::VectorXf::Zero(d);

    out.train_loss.push_back(detail::mean_loss(out.model, feats, teacher.values, out.train_rows));
    out.validation_loss.push_back(detail::mean_loss(out.model, feats, teacher.values, val_rows));
    double best_val = out.validation_loss.back();
    HeadMatrix best_w = out.model.weights;
    Eigen::VectorXf best_b = out.model.bias;
    int since_best = 0;
    std::int64_t step = 0;
    const auto lr = static_cast<float>(cfg.learning_rate);
    const auto beta1 = static_cast<float>(cfg.beta1);
    const auto beta2 = static_cast<float>(cfg.beta2);
    const auto eps = static_cast<float>(cfg.epsilon);
    const auto decay = static_cast<float>(cfg.weight_decay);
    std::vector<std::size_t> epoch_order = out.train_rows;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = epoch_order.size(); i > 1; --i) {
            std::swap(epoch_order[i - 1], epoch_order[rng() % i]);
        }
        for (auto r : epoch_order) {
            const auto& x = feats[r];
            const Eigen::VectorXd z = out.model.logits(x);
            const Eigen::VectorXf g =
                ((1.0 / (1.0 + (-z.array()).exp())) - teacher.values.row(static_cast<Eigen::Index>(r)).transpose().array())
                    .cast<float>()
                    .matrix();
            ++step;
            const auto bc1 = static_cast<float>(1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
            const auto bc2 = static_cast<float>(1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
            auto adam = [&](auto&& param, auto&& mom1, auto&& mom2) {
                mom1 = beta1 * mom1 + (1.0F - beta1) * g.transpose();
                mom2 = beta2 * mom2 + (1.0F - beta2) * g.transpose().cwiseAbs2();
                if (decay > 0) {
                    param *= (1.0F - lr * decay);
                }
                param.array() -= lr * (mom1.array() / bc1) / ((mom2.array() / bc2).sqrt() + eps);
            };
            for (auto f : x.index) {
                adam(out.model.weights.row(f), m1.row(f), m2.row(f));
            }
            {
                auto bias_row = out.model.bias.transpose();
                auto b1_row = b1.transpose();
                auto b2_row = b2.transpose();
                adam(bias_row, b1_row, b2_row);
            }
        }
        out.train_loss.push_back(detail::mean_loss(out.model, feats, teacher.values, out.train_rows));
        out.validation_loss.push_back(detail::mean_loss(out.model, feats, teacher.values, val_rows));
        if (out.validation_loss.back() < best_val) {
            best_val = out.validation_loss.back();
            best_w = out.model.weights;
            best_b = out.model.bias;
            out.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    out.model.weights = std::move(best_w);
    out.model.bias = std::move(best_b);
    return out;
}

/// One featurizer pass per text, all heads at once.
inline AnswerMatrix student_embed(const StudentModel& model, const std::vector<std::string>& texts, StudentMode mode)
{
    AnswerMatrix out;
    out.texts = texts;
    out.bank = model.bank;
    out.values.resize(static_cast<Eigen::Index>(texts.size()), model.n_heads());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Vector p = model.probabilities(texts[i]);
        if (mode == StudentMode::binary) {
            p = (p.array() >= 0.5).cast<double>();
        }
        out.values.row(static_cast<Eigen::Index>(i)) = p.transpose();
    }
    AnswererSpec spec;
    spec.kind = AnswererKind::oracle;
    spec.model_id = std::string("student-") + (mode == StudentMode::binary ? "binary" : "probabilistic");
    out.provenance.push_back({spec, 0});
    return out;
}

/// Fraction of cells where two binary answer matrices agree.
inline double agreement(const Matrix& a, const Matrix& b)
{
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::ShapeMismatch, "agreement shape mismatch");
    require(a.size() > 0, ErrorCode::EmptyDataset, "agreement over an empty matrix");
    return static_cast<double>((a.array() == b.array()).count()) / static_cast<double>(a.size());
}

inline double agreement(const StudentModel& model, const std::vector<std::string>& texts, const AnswerMatrix& teacher)
{
    return agreement(student_embed(model, texts, StudentMode::binary).values, teacher.values);
}

// ---------------------------------------------------------------------------
// Persistence: metadata JSON + heads in QAEMB-MAT

inline void save_student(const StudentModel& model, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    Matrix heads(model.weights.rows() + 1, model.weights.cols());
    heads.topRows(model.weights.rows()) = model.weights.cast<double>();
    heads.row(model.weights.rows()) = model.bias.cast<double>().transpose();
    save_mat(heads, (dir / "heads.mat").string());
    nlohmann::ordered_json meta = {{"format", "qaemb-student/1"},
                                   {"featurizer", model.featurizer->config()},
                                   {"heads", model.n_heads()},
                                   {"bias_row", "last"},
                                   {"bank_name", model.bank.name},
                                   {"bank_hash", model.bank.hash},
                                   {"question_ids", model.question_ids}};
    text::write_file((dir / "student.json").string(), meta.dump(2) + "\n");
}

inline StudentModel load_student(const std::filesystem::path& dir)
{
    StudentModel model;
    try {
        auto meta = nlohmann::json::parse(text::read_file((dir / "student.json").string()));
        const auto& f = meta.at("featurizer");
        HashedNgramConfig cfg{f.at("dim_bits").get<int>(), f.at("min_n").get<int>(), f.at("max_n").get<int>(),
                              f.at("seed").get<std::uint64_t>()};
        model.featurizer = std::make_shared<const HashedCharNgramFeaturizer>(cfg);
        model.bank = {meta.at("bank_name").get<std::string>(), meta.at("bank_hash").get<std::string>(),
                      meta.at("heads").get<std::size_t>()};
        model.question_ids = meta.value("question_ids", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedRecord, std::string("student.json: ") + e.what());
    }
    const Matrix heads = load_mat((dir / "heads.mat").string());
    require(heads.rows() == static_cast<Eigen::Index>(model.featurizer->dim()) + 1, ErrorCode::MalformedRecord,
            "heads.mat does not match the featurizer dimension");
    model.weights = heads.topRows(heads.rows() - 1).cast<float>();
    model.bias = heads.row(heads.rows() - 1).transpose().cast<float>();
    return model;
}

// ---------------------------------------------------------------------------
// Encoding comparison: teacher vs student-binary vs student-probabilistic

struct DistillComparison {
    double teacher_r = 0;
    double student_binary_r = 0;
    double student_probabilistic_r = 0;
    double test_agreement = 0;
};

/// Word-level feature tracks (same times) for the three feature sets.
struct DistillTracks {
    std::vector<double> times;
    Matrix teacher;
    Matrix student_probabilistic;
};

/// Resamples each word track to the TR grid, fits the encoding pipeline on
/// the first `n_train` TRs, and scores mean test r on the remainder.
/// Student-binary features are the probabilistic ones thresholded at 0.5.
inline DistillComparison distilled_encoding_comparison(const DistillTracks& tracks, const TrSpec& tr,
                                                       const Matrix& responses, Eigen::Index n_train,
                                                       const std::vector<std::string>& question_ids,
                                                       const EncodingConfig& cfg)
{
    require(n_train > 0 && n_train < responses.rows(), ErrorCode::InvalidArgument, "bad train/test split");
    auto run = [&](const Matrix& words) {
        const Matrix x = lanczos_resample(tracks.times, words, tr, cfg.lanczos_window);
        require(x.rows() == responses.rows(), ErrorCode::ShapeMismatch, "TR grid and responses differ in length");
        const Eigen::Index n_test = x.rows() - n_train;
        const auto model = fit_encoding(x.topRows(n_train), question_ids, responses.topRows(n_train), cfg);
        return evaluate(model, x.bottomRows(n_test), responses.bottomRows(n_test)).mean_r;
    };
    DistillComparison out;
    out.teacher_r = run(tracks.teacher);
    out.student_binary_r = run((tracks.student_probabilistic.array() >= 0.5).cast<double>().matrix());
    out.student_probabilistic_r = run(tracks.student_probabilistic);
    return out;
}

inline std::string distill_report_csv(const DistillComparison& c)
{
    std::ostringstream out;
    out << std::setprecision(6) << std::fixed;
    out << "QA-Emb,QA-Emb (distill binary),QA-Emb (distill probabilistic),test_agreement\n";
    out << c.teacher_r << ',' << c.student_binary_r << ',' << c.student_probabilistic_r << ',' << c.test_agreement
        << '\n';
    return out.str();
}

}  // namespace qaemb
