#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qaemb/error.hpp"
#include "qaemb/log.hpp"
#include "qaemb/matrix_io.hpp"
#include "qaemb/temporal_encoding.hpp"

namespace qaemb {

struct EnetOptions {
    std::vector<double> alphas = logspace(1e-3, 1.0, 20);
    double l1_ratio = 0.5;
    double tol = 1e-5;
    int max_iter = 1000;
};

struct EnetPoint {
    double alpha = 0;
    std::vector<Eigen::Index> support_idx;
    std::vector<std::string> support;
    Matrix coef;  ///< d x k
    double objective = 0;
    double kkt_residual = 0;
    int sweeps = 0;
    bool converged = false;
    std::vector<double> objective_trace;  ///< after each sweep
};

struct EnetPath {
    double l1_ratio = 0;
    std::vector<std::string> question_ids;
    std::vector<EnetPoint> points;  ///< in fitting order (decreasing alpha)
};

/// Gram-form view of the multi-task elastic-net problem
///   (1/2T)||Y - XB||_F^2 + alpha*l1*sum_j ||B_j||_2 + (alpha*(1-l1)/2) ||B||_F^2
/// where B_j is row j of B (question j across all outputs).
class MultiTaskEnet {
  public:
    MultiTaskEnet(const Matrix& x, const Matrix& y)
    {
        require(x.rows() == y.rows() && x.rows() > 0, ErrorCode::ShapeMismatch, "enet: X and Y row counts differ");
        require(x.allFinite() && y.allFinite(), ErrorCode::NonFinite, "enet input has non-finite entries");
        const double t = static_cast<double>(x.rows());
        m_gram = x.transpose() * x / t;
        m_xty = x.transpose() * y / t;
        m_half_yy = y.squaredNorm() / (2.0 * t);
    }

    Eigen::Index n_features() const { return m_gram.rows(); }
    Eigen::Index n_outputs() const { return m_xty.cols(); }

    /// Smallest alpha with an all-zero solution.
    double alpha_max(double l1_ratio) const { return m_xty.rowwise().norm().maxCoeff() / l1_ratio; }

    double objective(const Matrix& b, double alpha, double l1_ratio) const
    {
        const double loss = m_half_yy - (b.transpose() * m_xty).trace() + 0.5 * (b.transpose() * m_gram * b).trace();
        return loss + alpha * l1_ratio * b.rowwise().norm().sum() + 0.5 * alpha * (1.0 - l1_ratio) * b.squaredNorm();
    }

    /// Largest violation of the subgradient optimality conditions.
    double kkt_residual(const Matrix& b, double alpha, double l1_ratio) const
    {
        const Matrix grad = m_xty - m_gram * b - alpha * (1.0 - l1_ratio) * b;
        double worst = 0.0;
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            const double nb = b.row(j).norm();
            double r = 0.0;
            if (nb > 0) {
                r = (grad.row(j) - alpha * l1_ratio * b.row(j) / nb).norm();
            } else {
                r = std::max(0.0, grad.row(j).norm() - alpha * l1_ratio);
            }
            worst = std::max(worst, r);
        }
        return worst;
    }

    /// Block coordinate descent from `b` (warm start), updating it in place.
    EnetPoint solve(Matrix& b, double alpha, double l1_ratio, double tol, int max_iter) const
    {
        EnetPoint pt;
        pt.alpha = alpha;
        const double l1 = alpha * l1_ratio;
        const double l2 = alpha * (1.0 - l1_ratio);
        Matrix gb = m_gram * b;
        for (int sweep = 1; sweep <= max_iter; ++sweep) {
            double max_change = 0.0;
            for (Eigen::Index j = 0; j < b.rows(); ++j) {
                const double gjj = m_gram(j, j);
                if (gjj <= 0) {
                    continue;
                }
                const RowVector z = m_xty.row(j) - gb.row(j) + gjj * b.row(j);
                const double zn = z.norm();
                RowVector next = RowVector::Zero(b.cols());
                if (zn > l1) {
                    next = (1.0 - l1 / zn) * z / (gjj + l2);
                }
                const RowVector delta = next - b.row(j);
                const double change = delta.cwiseAbs().maxCoeff();
                if (change > 0) {
                    gb.noalias() += m_gram.col(j) * delta;
                    b.row(j) = next;
                    max_change = std::max(max_change, change);
                }
            }
            pt.objective_trace.push_back(objective(b, alpha, l1_ratio));
            pt.sweeps = sweep;
            if (max_change < tol) {
                pt.converged = true;
                break;
            }
        }
        if (!pt.converged) {
            log::warn("NotConverged: enet at alpha=" + std::to_string(alpha) + " hit " + std::to_string(max_iter) +
                      " sweeps; returning last iterate");
        }
        pt.coef = b;
        pt.objective = pt.objective_trace.empty() ? objective(b, alpha, l1_ratio) : pt.objective_trace.back();
        pt.kkt_residual = kkt_residual(b, alpha, l1_ratio);
        for (Eigen::Index j = 0; j < b.rows(); ++j) {
            if (b.row(j).squaredNorm() > 0) {
                pt.support_idx.push_back(j);
            }
        }
        return pt;
    }

  private:
    Matrix m_gram;
    Matrix m_xty;
    double m_half_yy = 0;
};

/// Multi-task elastic-net path with warm starts, fitted from the largest
/// alpha down. X must be column-standardized and Y column-centered.
inline EnetPath enet_path(const Matrix& x, const Matrix& y, const std::vector<std::string>& question_ids,
                          const EnetOptions& opts = {})
{
    require(opts.l1_ratio > 0 && opts.l1_ratio <= 1, ErrorCode::InvalidArgument, "l1_ratio must lie in (0, 1]");
    require(!opts.alphas.empty(), ErrorCode::InvalidArgument, "empty alpha grid");
    require(static_cast<Eigen::Index>(question_ids.size()) == x.cols(), ErrorCode::ShapeMismatch,
            "one question id per column required");
    const MultiTaskEnet problem(x, y);
    auto alphas = opts.alphas;
    std::sort(alphas.begin(), alphas.end(), std::greater<>());

    EnetPath path;
    path.l1_ratio = opts.l1_ratio;
    path.question_ids = question_ids;
    Matrix b = Matrix::Zero(x.cols(), y.cols());
    for (double alpha : alphas) {
        require(alpha > 0, ErrorCode::InvalidArgument, "alphas must be > 0");
        auto pt = problem.solve(b, alpha, opts.l1_ratio, opts.tol, opts.max_iter);
        for (auto j : pt.support_idx) {
            pt.support.push_back(question_ids[static_cast<std::size_t>(j)]);
        }
        path.points.push_back(std::move(pt));
    }
    return path;
}

/// Runs the path on training features (z-scored) against the training
/// responses in the model's response space (PCA coefficients when enabled).
inline EnetPath select_questions(const EncodingData& data, const EncodingConfig& cfg, const EnetOptions& opts = {})
{
    const auto stdz = Standardizer::fit(data.features_train);
    require(stdz.dropped.empty(), ErrorCode::InvalidArgument,
            "constant question columns cannot enter selection; drop them first");
    Matrix target = data.responses_train;
    if (cfg.pca_components > 0) {
        const auto k = std::min<Eigen::Index>(cfg.pca_components,
                                              std::min(data.responses_train.rows(), data.responses_train.cols()));
        target = pca_fit(data.responses_train, k).transform(data.responses_train);
    }
    const Matrix centered = target.rowwise() - target.colwise().mean();
    return enet_path(stdz.apply(data.features_train), centered, data.question_ids, opts);
}

/// Full temporal pipeline restricted to the support's questions.
inline EncodingModel refit_ridge(const std::vector<std::string>& support, const EncodingData& data,
                                 const EncodingConfig& cfg)
{
    require(!support.empty(), ErrorCode::EmptySubset, "refit on an empty support");
    return fit_encoding(data.restrict_to(support), cfg);
}

struct CurvePoint {
    std::size_t n_questions = 0;
    double alpha = 0;
    double mean_r = 0;
    std::vector<std::string> support;
};

struct PruningCurve {
    std::vector<CurvePoint> points;  ///< strictly increasing n_questions
};

/// One refit+evaluate per distinct non-empty support size on the path; for
/// repeated sizes the support with the lowest training objective is used.
inline PruningCurve pruning_curve(const EnetPath& path, const EncodingData& data, const EncodingConfig& cfg)
{
    std::map<std::size_t, const EnetPoint*> best;
    for (const auto& pt : path.points) {
        if (pt.support.empty()) {
            continue;
        }
        auto& slot = best[pt.support.size()];
        if (slot == nullptr || pt.objective < slot->objective) {
            slot = &pt;
        }
    }
    PruningCurve curve;
    for (const auto& [size, pt] : best) {
        const auto model = refit_ridge(pt->support, data, cfg);
        const auto restricted = data.restrict_to(pt->support);
        const auto res = evaluate(model, restricted.features_test, restricted.responses_test);
        curve.points.push_back({size, pt->alpha, res.mean_r, pt->support});
    }
    return curve;
}

struct QuestionImportance {
    std::string question_id;
    double importance = 0;
};

/// Mean |weight| per question over delays and outputs, scaled so the top
/// question scores 1. Sorted by decreasing importance (ties keep bank order).
inline std::vector<QuestionImportance> question_importance(const EncodingModel& model)
{
    require(model.weights.rows() == static_cast<Eigen::Index>(model.labels.size()), ErrorCode::ShapeMismatch,
            "model labels do not match weight rows");
    std::map<std::string, double> total;
    for (std::size_t r = 0; r < model.labels.size(); ++r) {
        total[model.labels[r].question_id] += model.weights.row(static_cast<Eigen::Index>(r)).cwiseAbs().sum();
    }
    const double denom = static_cast<double>(std::max(model.n_delays, 1)) * static_cast<double>(model.weights.cols());
    std::vector<QuestionImportance> out;
    double top = 0.0;
    for (const auto& id : model.question_ids) {
        const double v = total[id] / denom;
        out.push_back({id, v});
        top = std::max(top, v);
    }
    for (auto& q : out) {
        q.importance = top > 0 ? q.importance / top : 0.0;
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.importance > b.importance; });
    return out;
}

// ---------------------------------------------------------------------------
// CSV reports

inline std::string path_csv(const EnetPath& path)
{
    std::ostringstream out;
    out << std::setprecision(17) << "alpha,size,objective,kkt_residual,sweeps,support\n";
    for (const auto& pt : path.points) {
        out << pt.alpha << ',' << pt.support.size() << ',' << pt.objective << ',' << pt.kkt_residual << ','
            << pt.sweeps << ',' << text::join(pt.support, ";") << '\n';
    }
    return out.str();
}

inline std::string curve_csv(const PruningCurve& curve)
{
    std::ostringstream out;
    out << std::setprecision(17) << "alpha,size,mean_r,support\n";
    for (const auto& p : curve.points) {
        out << p.alpha << ',' << p.n_questions << ',' << p.mean_r << ',' << text::join(p.support, ";") << '\n';
    }
    return out.str();
}

}  // namespace qaemb
