#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <json.hpp>

#include "qaemb/embedding.hpp"
#include "qaemb/error.hpp"
#include "qaemb/log.hpp"
#include "qaemb/matrix_io.hpp"

namespace qaemb {

// ---------------------------------------------------------------------------
// Grids

/// n points evenly spaced in log10 between lo and hi, inclusive.
inline std::vector<double> logspace(double lo, double hi, int n)
{
    require(lo > 0 && hi > 0 && n >= 1, ErrorCode::InvalidArgument, "logspace needs positive bounds and n >= 1");
    std::vector<double> out;
    if (n == 1) {
        out.push_back(lo);
        return out;
    }
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (int i = 0; i < n; ++i) {
        out.push_back(std::pow(10.0, a + (b - a) * i / (n - 1)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lanczos resampling

inline double sinc(double x)
{
    if (x == 0.0) {
        return 1.0;
    }
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

/// sinc(f*dt) * sinc(f*dt/a) inside |f*dt| < a, zero outside.
inline double lanczos_weight(double dt, double cutoff_hz, int window)
{
    const double x = cutoff_hz * dt;
    if (std::abs(x) >= window) {
        return 0.0;
    }
    return sinc(x) * sinc(x / window);
}

/// Moves word-rate features onto the TR grid with a normalized Lanczos
/// kernel (cutoff 1/tr_sec). Rows with no kernel support are zero.
inline Matrix lanczos_resample(const std::vector<double>& times, const Matrix& values, const TrSpec& tr,
                               int window = 3)
{
    require(!times.empty(), ErrorCode::EmptyTrack, "cannot resample an empty track");
    require(static_cast<Eigen::Index>(times.size()) == values.rows(), ErrorCode::ShapeMismatch,
            "track times and rows differ");
    require(window >= 1, ErrorCode::InvalidArgument, "Lanczos window must be >= 1");
    require(tr.tr_sec > 0 && tr.n_trs >= 1, ErrorCode::InvalidArgument, "invalid TR spec");

    const double cutoff = 1.0 / tr.tr_sec;
    const double reach = window / cutoff;
    Matrix out = Matrix::Zero(tr.n_trs, values.cols());
    int empty_rows = 0;
    for (int r = 0; r < tr.n_trs; ++r) {
        const double t = tr.time_of(r);
        auto lo = std::lower_bound(times.begin(), times.end(), t - reach);
        auto hi = std::upper_bound(times.begin(), times.end(), t + reach);
        double total = 0.0;
        double total_abs = 0.0;
        RowVector acc = RowVector::Zero(values.cols());
        for (auto it = lo; it != hi; ++it) {
            const double w = lanczos_weight(t - *it, cutoff, window);
            if (w == 0.0) {
                continue;
            }
            const auto i = static_cast<Eigen::Index>(it - times.begin());
            acc.noalias() += w * values.row(i);
            total += w;
            total_abs += std::abs(w);
        }
        if (total_abs == 0.0 || std::abs(total) <= 1e-9 * total_abs) {
            ++empty_rows;
            continue;
        }
        out.row(r) = acc / total;
    }
    if (empty_rows > 0) {
        log::warn("lanczos: " + std::to_string(empty_rows) + " of " + std::to_string(tr.n_trs) +
                  " TRs had zero kernel weight and were set to 0");
    }
    return out;
}

inline Matrix lanczos_resample(const WordEmbeddingTrack& track, const TrSpec& tr, int window = 3)
{
    return lanczos_resample(track.times, track.values, tr, window);
}

// ---------------------------------------------------------------------------
// FIR delays

struct ColumnLabel {
    std::string question_id;
    int delay = 0;

    bool operator==(const ColumnLabel&) const = default;
};

struct DesignMatrix {
    Matrix values;
    std::vector<ColumnLabel> labels;
};

/// Concatenates blocks k = 1..n_delays where block k is X shifted down k
/// rows with zeros on top. Causal shifts only.
inline DesignMatrix add_delays(const Matrix& x, int n_delays, const std::vector<std::string>& question_ids)
{
    require(n_delays >= 1, ErrorCode::InvalidArgument, "n_delays must be >= 1");
    require(static_cast<Eigen::Index>(question_ids.size()) == x.cols(), ErrorCode::ShapeMismatch,
            "one question id per feature column required");
    const auto t = x.rows();
    const auto d = x.cols();
    DesignMatrix out;
    out.values = Matrix::Zero(t, d * n_delays);
    out.labels.reserve(static_cast<std::size_t>(d * n_delays));
    for (int k = 1; k <= n_delays; ++k) {
        const Eigen::Index shift = std::min<Eigen::Index>(k, t);
        if (t > shift) {
            out.values.block(shift, (k - 1) * d, t - shift, d) = x.topRows(t - shift);
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            out.labels.push_back({question_ids[static_cast<std::size_t>(j)], k});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Standardization

/// Column z-scoring with training statistics. Zero-variance columns are
/// dropped and recorded.
struct Standardizer {
    std::vector<Eigen::Index> kept;
    std::vector<Eigen::Index> dropped;
    RowVector mean;   ///< over kept columns
    RowVector scale;  ///< over kept columns

    static Standardizer fit(const Matrix& x, double min_std = 1e-12)
    {
        require(x.rows() >= 2, ErrorCode::InvalidArgument, "standardization needs >= 2 rows");
        Standardizer s;
        const RowVector mu = x.colwise().mean();
        const RowVector sd = ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(x.rows()))
                                 .sqrt()
                                 .matrix();
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            (sd(j) > min_std ? s.kept : s.dropped).push_back(j);
        }
        s.mean.resize(static_cast<Eigen::Index>(s.kept.size()));
        s.scale.resize(static_cast<Eigen::Index>(s.kept.size()));
        for (std::size_t i = 0; i < s.kept.size(); ++i) {
            s.mean(static_cast<Eigen::Index>(i)) = mu(s.kept[i]);
            s.scale(static_cast<Eigen::Index>(i)) = sd(s.kept[i]);
        }
        return s;
    }

    Matrix apply(const Matrix& x) const
    {
        Matrix out(x.rows(), static_cast<Eigen::Index>(kept.size()));
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const auto c = static_cast<Eigen::Index>(i);
            out.col(c) = (x.col(kept[i]).array() - mean(c)) / scale(c);
        }
        return out;
    }

    template <class T>
    std::vector<T> select(const std::vector<T>& items) const
    {
        std::vector<T> out;
        out.reserve(kept.size());
        for (auto j : kept) {
            out.push_back(items[static_cast<std::size_t>(j)]);
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// PCA

struct PcaMap {
    RowVector mean;         ///< length V
    Matrix components;      ///< k x V, orthonormal rows
    Vector explained_variance_ratio;

    Eigen::Index k() const { return components.rows(); }

    Matrix transform(const Matrix& y) const
    {
        require(y.cols() == mean.size(), ErrorCode::ShapeMismatch, "PCA transform: wrong response width");
        return (y.rowwise() - mean) * components.transpose();
    }

    Matrix inverse(const Matrix& z) const
    {
        require(z.cols() == components.rows(), ErrorCode::ShapeMismatch, "PCA inverse: wrong coefficient width");
        return (z * components).rowwise() + mean;
    }
};

/// Top-k principal axes of the centered responses. k is reduced (with a
/// warning) when it exceeds the numerical rank.
inline PcaMap pca_fit(const Matrix& y, Eigen::Index k)
{
    require(y.allFinite(), ErrorCode::NonFinite, "PCA input has non-finite entries");
    require(k >= 1 && k <= std::min(y.rows(), y.cols()), ErrorCode::InvalidArgument,
            "PCA needs 1 <= k <= min(T, V)");
    PcaMap pca;
    pca.mean = y.colwise().mean();
    const Matrix centered = y.rowwise() - pca.mean;
    Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double tol = s.size() > 0 ? s(0) * static_cast<double>(std::max(y.rows(), y.cols())) *
                                          std::numeric_limits<double>::epsilon()
                                    : 0.0;
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > tol) {
        ++rank;
    }
    if (k > rank) {
        log::warn("RankDeficient: PCA k=" + std::to_string(k) + " exceeds numerical rank " + std::to_string(rank) +
                  "; reducing k");
        k = std::max<Eigen::Index>(rank, 1);
    }
    pca.components = svd.matrixV().leftCols(k).transpose();
    const double total = s.squaredNorm();
    pca.explained_variance_ratio =
        total > 0 ? Vector(s.head(k).array().square() / total) : Vector(Vector::Zero(k));
    return pca;
}

// ---------------------------------------------------------------------------
// Ridge regression

/// Thin SVD of a design matrix, reusable across a grid of penalties:
/// theta(lambda) = V diag(s / (s^2 + lambda)) U^T Y.
class RidgeSolver {
  public:
    RidgeSolver(const Matrix& x, const Matrix& y)
    {
        require(x.rows() == y.rows(), ErrorCode::ShapeMismatch, "ridge: X and Y row counts differ");
        require(x.allFinite() && y.allFinite(), ErrorCode::NonFinite, "ridge input has non-finite entries");
        Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
        m_s = svd.singularValues();
        m_v = svd.matrixV();
        m_uty = svd.matrixU().transpose() * y;
    }

    Matrix solve(double lambda) const
    {
        require(lambda > 0 && std::isfinite(lambda), ErrorCode::InvalidArgument, "ridge lambda must be > 0");
        const Vector shrink = m_s.array() / (m_s.array().square() + lambda);
        return m_v * (shrink.asDiagonal() * m_uty);
    }

  private:
    Vector m_s;
    Matrix m_v;
    Matrix m_uty;
};

/// argmin ||Y - X theta||_F^2 + lambda ||theta||_F^2, column by column.
inline Matrix ridge_fit(const Matrix& x, const Matrix& y, double lambda)
{
    return RidgeSolver(x, y).solve(lambda);
}

inline double ridge_objective(const Matrix& x, const Matrix& y, const Matrix& theta, double lambda)
{
    return (y - x * theta).squaredNorm() + lambda * theta.squaredNorm();
}

// ---------------------------------------------------------------------------
// Correlation

/// Pearson r per column. Columns where either side has zero variance score 0
/// and are reported through `degenerate`.
inline Vector column_correlations(const Matrix& a, const Matrix& b, std::vector<Eigen::Index>* degenerate = nullptr)
{
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::ShapeMismatch, "correlation shape mismatch");
    Vector r(a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const Vector ac = a.col(j).array() - a.col(j).mean();
        const Vector bc = b.col(j).array() - b.col(j).mean();
        const double na = ac.norm();
        const double nb = bc.norm();
        if (na <= 1e-12 * std::sqrt(static_cast<double>(a.rows())) ||
            nb <= 1e-12 * std::sqrt(static_cast<double>(b.rows()))) {
            r(j) = 0.0;
            if (degenerate != nullptr) {
                degenerate->push_back(j);
            }
            continue;
        }
        r(j) = std::clamp(ac.dot(bc) / (na * nb), -1.0, 1.0);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Bootstrap cross-validation

struct CvOptions {
    std::vector<double> lambda_grid = logspace(10.0, 10000.0, 12);
    std::vector<int> delay_grid = {4, 8, 12};
    int n_boot = 5;
    int chunk_len = 20;
    double holdout_frac = 0.2;
    std::uint64_t seed = 0;
};

struct CvRow {
    double lambda = 0;
    int delays = 0;
    double mean_r = 0;
};

struct CvResult {
    double best_lambda = 0;
    int best_delays = 0;
    double best_score = 0;
    std::vector<CvRow> table;
};

/// Held-out row indices for bootstrap `b`: a random set of contiguous
/// chunks covering about `holdout_frac` of the rows.
inline std::vector<Eigen::Index> holdout_rows(Eigen::Index t, int chunk_len, double holdout_frac, std::uint64_t seed,
                                              int b)
{
    require(chunk_len >= 1, ErrorCode::InvalidArgument, "chunk_len must be >= 1");
    require(holdout_frac > 0 && holdout_frac < 1, ErrorCode::InvalidArgument, "holdout fraction must lie in (0,1)");
    const auto n_chunks = (t + chunk_len - 1) / chunk_len;
    auto n_hold = static_cast<Eigen::Index>(std::llround(holdout_frac * static_cast<double>(n_chunks)));
    n_hold = std::clamp<Eigen::Index>(n_hold, 1, std::max<Eigen::Index>(n_chunks - 1, 1));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_chunks));
    for (Eigen::Index i = 0; i < n_chunks; ++i) {
        order[static_cast<std::size_t>(i)] = i;
    }
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(b) + 1);
    for (Eigen::Index i = n_chunks - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::vector<Eigen::Index> chunks(order.begin(), order.begin() + n_hold);
    std::sort(chunks.begin(), chunks.end());
    std::vector<Eigen::Index> rows;
    for (auto c : chunks) {
        for (Eigen::Index r = c * chunk_len; r < std::min<Eigen::Index>(t, (c + 1) * chunk_len); ++r) {
            rows.push_back(r);
        }
    }
    return rows;
}

inline Matrix take_rows(const Matrix& m, const std::vector<Eigen::Index>& rows)
{
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    }
    return out;
}

inline std::vector<Eigen::Index> complement_rows(Eigen::Index t, const std::vector<Eigen::Index>& held)
{
    std::vector<char> is_held(static_cast<std::size_t>(t), 0);
    for (auto r : held) {
        is_held[static_cast<std::size_t>(r)] = 1;
    }
    std::vector<Eigen::Index> rows;
    for (Eigen::Index r = 0; r < t; ++r) {
        if (is_held[static_cast<std::size_t>(r)] == 0) {
            rows.push_back(r);
        }
    }
    return rows;
}

/// Picks (lambda, delays) maximizing the mean held-out column correlation
/// averaged over bootstraps. Ties go to the larger lambda, then fewer delays.
/// When `pca` and `voxels` are given, `y` holds PCA coefficients and each
/// fold is scored in voxel space: predictions are mapped back through the
/// PCA and correlated with the held-out rows of `voxels`.
inline CvResult bootstrap_cv(const Matrix& features, const std::vector<std::string>& question_ids, const Matrix& y,
                             const CvOptions& opts, const PcaMap* pca = nullptr, const Matrix* voxels = nullptr)
{
    require((pca == nullptr) == (voxels == nullptr), ErrorCode::InvalidArgument,
            "voxel-space scoring needs both the PCA map and the voxel responses");
    require(voxels == nullptr || voxels->rows() == y.rows(), ErrorCode::ShapeMismatch,
            "voxel responses and targets differ in length");
    require(!opts.lambda_grid.empty() && !opts.delay_grid.empty(), ErrorCode::InvalidArgument,
            "CV grids must be non-empty");
    require(opts.n_boot >= 1, ErrorCode::InvalidArgument, "n_boot must be >= 1");
    require(features.rows() == y.rows(), ErrorCode::ShapeMismatch, "features and responses differ in length");
    const auto t = features.rows();

    std::vector<std::vector<Eigen::Index>> held(static_cast<std::size_t>(opts.n_boot));
    for (int b = 0; b < opts.n_boot; ++b) {
        held[static_cast<std::size_t>(b)] = holdout_rows(t, opts.chunk_len, opts.holdout_frac, opts.seed, b);
        require(held[static_cast<std::size_t>(b)].size() >= 2 &&
                    static_cast<Eigen::Index>(held[static_cast<std::size_t>(b)].size()) <= t - 2,
                ErrorCode::DegenerateFold, "bootstrap fold " + std::to_string(b) + " has too few rows");
    }

    CvResult result;
    bool have_best = false;
    for (int delays : opts.delay_grid) {
        const auto design = add_delays(features, delays, question_ids);
        std::vector<double> score(opts.lambda_grid.size(), 0.0);
        for (int b = 0; b < opts.n_boot; ++b) {
            const auto& test_rows = held[static_cast<std::size_t>(b)];
            const auto train_rows = complement_rows(t, test_rows);
            const Matrix x_train_raw = take_rows(design.values, train_rows);
            const auto stdz = Standardizer::fit(x_train_raw);
            const Matrix x_train = stdz.apply(x_train_raw);
            const Matrix x_test = stdz.apply(take_rows(design.values, test_rows));
            const Matrix y_train_raw = take_rows(y, train_rows);
            const RowVector y_mean = y_train_raw.colwise().mean();
            const Matrix y_test = take_rows(voxels != nullptr ? *voxels : y, test_rows);
            const RidgeSolver solver(x_train, y_train_raw.rowwise() - y_mean);
            for (std::size_t li = 0; li < opts.lambda_grid.size(); ++li) {
                Matrix pred = (x_test * solver.solve(opts.lambda_grid[li])).rowwise() + y_mean;
                if (pca != nullptr) {
                    pred = pca->inverse(pred);
                }
                score[li] += column_correlations(pred, y_test).mean() / opts.n_boot;
            }
        }
        for (std::size_t li = 0; li < opts.lambda_grid.size(); ++li) {
            const double lambda = opts.lambda_grid[li];
            result.table.push_back({lambda, delays, score[li]});
            const bool better = !have_best || score[li] > result.best_score;
            const bool tie = have_best && score[li] == result.best_score &&
                             (lambda > result.best_lambda ||
                              (lambda == result.best_lambda && delays < result.best_delays));
            if (better || tie) {
                result.best_score = score[li];
                result.best_lambda = lambda;
                result.best_delays = delays;
                have_best = true;
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Encoding model

struct EncodingConfig {
    CvOptions cv;
    int pca_components = 100;  ///< 0 fits directly in voxel space
    int lanczos_window = 3;
};

/// Features at TR resolution, question-level (before delays), split into a
/// training and a test segment.
struct EncodingData {
    Matrix features_train;
    Matrix features_test;
    Matrix responses_train;  ///< voxel space
    Matrix responses_test;   ///< voxel space
    std::vector<std::string> question_ids;

    /// Same data restricted to the given question ids, in bank order.
    EncodingData restrict_to(const std::vector<std::string>& ids) const
    {
        std::vector<Eigen::Index> cols;
        std::vector<std::string> kept;
        for (std::size_t j = 0; j < question_ids.size(); ++j) {
            if (std::find(ids.begin(), ids.end(), question_ids[j]) != ids.end()) {
                cols.push_back(static_cast<Eigen::Index>(j));
                kept.push_back(question_ids[j]);
            }
        }
        require(!cols.empty(), ErrorCode::EmptySubset, "restriction keeps no questions");
        EncodingData out;
        out.features_train = features_train(Eigen::all, cols);
        out.features_test = features_test(Eigen::all, cols);
        out.responses_train = responses_train;
        out.responses_test = responses_test;
        out.question_ids = std::move(kept);
        return out;
    }
};

struct EncodingModel {
    Matrix weights;  ///< p x k
    double lambda = 0;
    int n_delays = 0;
    std::vector<std::string> question_ids;
    std::vector<ColumnLabel> labels;  ///< labels of the kept (standardized) columns
    Standardizer standardizer;
    RowVector response_mean;  ///< in the fitted response space
    std::optional<PcaMap> pca;
    CvResult cv;
    std::string bank_hash;
};

inline DesignMatrix model_design(const EncodingModel& model, const Matrix& features)
{
    require(features.cols() == static_cast<Eigen::Index>(model.question_ids.size()), ErrorCode::ShapeMismatch,
            "feature width does not match the model's questions");
    return add_delays(features, model.n_delays, model.question_ids);
}

/// Voxel-space predictions for an already-delayed design.
inline Matrix predict_design(const EncodingModel& model, const Matrix& delayed)
{
    const Matrix z = (model.standardizer.apply(delayed) * model.weights).rowwise() + model.response_mean;
    return model.pca ? model.pca->inverse(z) : z;
}

inline Matrix predict(const EncodingModel& model, const Matrix& features)
{
    return predict_design(model, model_design(model, features).values);
}

/// Fits PCA on training responses, picks (lambda, delays) by bootstrap CV
/// (ridge in the reduced space, scored in voxel space), then refits ridge on
/// the whole training segment.
inline EncodingModel fit_encoding(const Matrix& features, const std::vector<std::string>& question_ids,
                                  const Matrix& responses, const EncodingConfig& cfg)
{
    require(features.rows() == responses.rows(), ErrorCode::ShapeMismatch, "features and responses differ in length");
    require(features.allFinite() && responses.allFinite(), ErrorCode::NonFinite, "non-finite pipeline input");
    EncodingModel model;
    model.question_ids = question_ids;
    Matrix target = responses;
    if (cfg.pca_components > 0) {
        const auto k = std::min<Eigen::Index>(cfg.pca_components, std::min(responses.rows(), responses.cols()));
        model.pca = pca_fit(responses, k);
        target = model.pca->transform(responses);
    }
    model.cv = model.pca ? bootstrap_cv(features, question_ids, target, cfg.cv, &*model.pca, &responses)
                         : bootstrap_cv(features, question_ids, target, cfg.cv);
    model.lambda = model.cv.best_lambda;
    model.n_delays = model.cv.best_delays;

    const auto design = add_delays(features, model.n_delays, question_ids);
    model.standardizer = Standardizer::fit(design.values);
    model.labels = model.standardizer.select(design.labels);
    model.response_mean = target.colwise().mean();
    model.weights = ridge_fit(model.standardizer.apply(design.values), target.rowwise() - model.response_mean,
                              model.lambda);
    return model;
}

inline EncodingModel fit_encoding(const EncodingData& data, const EncodingConfig& cfg)
{
    return fit_encoding(data.features_train, data.question_ids, data.responses_train, cfg);
}

struct EvalResult {
    Vector voxel_r;
    double mean_r = 0;
    std::vector<Eigen::Index> zero_variance;
};

/// Per-voxel Pearson r between voxel responses and predictions from an
/// already-delayed test design.
inline EvalResult evaluate_design(const EncodingModel& model, const Matrix& delayed_test, const Matrix& y_test)
{
    EvalResult res;
    const Matrix pred = predict_design(model, delayed_test);
    require(pred.cols() == y_test.cols() && pred.rows() == y_test.rows(), ErrorCode::ShapeMismatch,
            "test responses do not match predictions");
    res.voxel_r = column_correlations(pred, y_test, &res.zero_variance);
    res.mean_r = res.voxel_r.size() > 0 ? res.voxel_r.mean() : 0.0;
    if (!res.zero_variance.empty()) {
        log::warn(std::to_string(res.zero_variance.size()) + " zero-variance voxels scored 0");
    }
    return res;
}

inline EvalResult evaluate(const EncodingModel& model, const Matrix& features_test, const Matrix& y_test)
{
    return evaluate_design(model, model_design(model, features_test).values, y_test);
}

// ---------------------------------------------------------------------------
// Model bundle: weights.mat + model.json (+ pca_mean.mat, pca_components.mat)

inline nlohmann::ordered_json cv_table_json(const CvResult& cv)
{
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : cv.table) {
        rows.push_back({{"lambda", r.lambda}, {"delays", r.delays}, {"mean_r", r.mean_r}});
    }
    return rows;
}

inline std::string cv_table_csv(const CvResult& cv)
{
    std::ostringstream out;
    out << std::setprecision(17) << "lambda,delays,mean_cv_r\n";
    for (const auto& r : cv.table) {
        out << r.lambda << ',' << r.delays << ',' << r.mean_r << '\n';
    }
    return out.str();
}

inline void save_model(const EncodingModel& model, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    save_mat(model.weights, (dir / "weights.mat").string());
    nlohmann::ordered_json meta;
    meta["format"] = "qaemb-encoding-model/1";
    meta["lambda"] = model.lambda;
    meta["n_delays"] = model.n_delays;
    meta["question_ids"] = model.question_ids;
    meta["bank_hash"] = model.bank_hash;
    nlohmann::ordered_json stdz;
    stdz["kept"] = model.standardizer.kept;
    stdz["dropped"] = model.standardizer.dropped;
    stdz["mean"] = std::vector<double>(model.standardizer.mean.data(),
                                       model.standardizer.mean.data() + model.standardizer.mean.size());
    stdz["scale"] = std::vector<double>(model.standardizer.scale.data(),
                                        model.standardizer.scale.data() + model.standardizer.scale.size());
    meta["standardization"] = std::move(stdz);
    meta["response_mean"] =
        std::vector<double>(model.response_mean.data(), model.response_mean.data() + model.response_mean.size());
    meta["pca"] = model.pca.has_value();
    if (model.pca) {
        save_mat(model.pca->mean, (dir / "pca_mean.mat").string());
        save_mat(model.pca->components, (dir / "pca_components.mat").string());
    }
    meta["cv"] = {{"best_lambda", model.cv.best_lambda},
                  {"best_delays", model.cv.best_delays},
                  {"best_score", model.cv.best_score},
                  {"table", cv_table_json(model.cv)}};
    text::write_file((dir / "model.json").string(), meta.dump(2) + "\n");
}

inline EncodingModel load_model(const std::filesystem::path& dir)
{
    EncodingModel model;
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(text::read_file((dir / "model.json").string()));
        model.lambda = meta.at("lambda").get<double>();
        model.n_delays = meta.at("n_delays").get<int>();
        model.question_ids = meta.at("question_ids").get<std::vector<std::string>>();
        model.bank_hash = meta.value("bank_hash", "");
        const auto& s = meta.at("standardization");
        model.standardizer.kept = s.at("kept").get<std::vector<Eigen::Index>>();
        model.standardizer.dropped = s.at("dropped").get<std::vector<Eigen::Index>>();
        auto mean = s.at("mean").get<std::vector<double>>();
        auto scale = s.at("scale").get<std::vector<double>>();
        model.standardizer.mean = Eigen::Map<RowVector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        model.standardizer.scale = Eigen::Map<RowVector>(scale.data(), static_cast<Eigen::Index>(scale.size()));
        auto rm = meta.at("response_mean").get<std::vector<double>>();
        model.response_mean = Eigen::Map<RowVector>(rm.data(), static_cast<Eigen::Index>(rm.size()));
        model.cv.best_lambda = meta.at("cv").at("best_lambda").get<double>();
        model.cv.best_delays = meta.at("cv").at("best_delays").get<int>();
        model.cv.best_score = meta.at("cv").at("best_score").get<double>();
        for (const auto& r : meta.at("cv").at("table")) {
            model.cv.table.push_back({r.at("lambda").get<double>(), r.at("delays").get<int>(), r.at("mean_r").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::MalformedRecord, "model.json: " + std::string(e.what()));
    }
    model.weights = load_mat((dir / "weights.mat").string());
    if (meta.value("pca", false)) {
        PcaMap pca;
        pca.mean = load_mat((dir / "pca_mean.mat").string()).row(0);
        pca.components = load_mat((dir / "pca_components.mat").string());
        model.pca = std::move(pca);
    }
    std::vector<ColumnLabel> all;
    for (int k = 1; k <= model.n_delays; ++k) {
        for (const auto& id : model.question_ids) {
            all.push_back({id, k});
        }
    }
    model.labels = model.standardizer.select(all);
    return model;
}

}  // namespace qaemb
