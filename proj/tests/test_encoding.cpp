#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>

#include "qaemb/embedding.hpp"
#include "qaemb/log.hpp"
#include "qaemb/temporal_encoding.hpp"

using namespace qaemb;

namespace {

Matrix gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (auto& v : m.reshaped()) {
        v = n(rng);
    }
    return m;
}

std::vector<std::string> ids(int d)
{
    std::vector<std::string> out;
    for (int j = 0; j < d; ++j) {
        out.push_back("q" + std::to_string(j));
    }
    return out;
}

/// Dense Gaussian elimination with partial pivoting; independent of Eigen's
/// decompositions.
Vector gauss_solve(Matrix a, Vector b)
{
    const auto n = a.rows();
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::Index p = k;
        for (Eigen::Index i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > std::abs(a(p, k))) {
                p = i;
            }
        }
        a.row(k).swap(a.row(p));
        std::swap(b(k), b(p));
        for (Eigen::Index i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            for (Eigen::Index j = k; j < n; ++j) {
                a(i, j) -= f * a(k, j);
            }
            b(i) -= f * b(k);
        }
    }
    Vector x(n);
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        double s = b(i);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            s -= a(i, j) * x(j);
        }
        x(i) = s / a(i, i);
    }
    return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// Ridge

TEST(Ridge, MatchesNormalEquations)
{
    Matrix x(5, 3);
    x << 1, 2, 0, 0, 1, 1, 3, 0, 2, 1, 1, 1, 2, 2, 0;
    Matrix y(5, 2);
    y << 1, 0, 2, 1, 0, 3, 1, 1, 4, 2;
    const double lambda = 0.7;
    const Matrix theta = ridge_fit(x, y, lambda);
    const Matrix a = x.transpose() * x + lambda * Matrix::Identity(3, 3);
    for (Eigen::Index v = 0; v < 2; ++v) {
        const Vector want = gauss_solve(a, x.transpose() * y.col(v));
        EXPECT_LT((theta.col(v) - want).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Ridge, OrthonormalDesignShrinksOlsByOnePlusLambda)
{
    Eigen::HouseholderQR<Matrix> qr(gaussian(40, 6, 1));
    const Matrix q = qr.householderQ() * Matrix::Identity(40, 6);
    const Matrix y = gaussian(40, 3, 2);
    const double lambda = 2.5;
    const Matrix ols = q.transpose() * y;
    EXPECT_LT((ridge_fit(q, y, lambda) - ols / (1.0 + lambda)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ridge, HugePenaltyDrivesWeightsToZero)
{
    const Matrix x = gaussian(30, 4, 3);
    const Matrix y = gaussian(30, 2, 4);
    EXPECT_LT(ridge_fit(x, y, 1e9).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Ridge, SolutionIsALocalMinimumOfTheObjective)
{
    const Matrix x = gaussian(25, 5, 5);
    const Matrix y = gaussian(25, 2, 6);
    const double lambda = 3.0;
    const Matrix theta = ridge_fit(x, y, lambda);
    const double base = ridge_objective(x, y, theta, lambda);
    for (int t = 0; t < 50; ++t) {
        const Matrix step = 1e-3 * gaussian(5, 2, 100 + static_cast<std::uint64_t>(t));
        EXPECT_GE(ridge_objective(x, y, theta + step, lambda), base);
    }
}

TEST(Ridge, SolverReusesFactorizationAcrossPenalties)
{
    const Matrix x = gaussian(20, 4, 7);
    const Matrix y = gaussian(20, 3, 8);
    RidgeSolver solver(x, y);
    for (double lambda : {0.1, 1.0, 10.0}) {
        EXPECT_LT((solver.solve(lambda) - ridge_fit(x, y, lambda)).cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_THROW(solver.solve(0.0), Error);
}

// ---------------------------------------------------------------------------
// PCA

TEST(Pca, ComponentsAreOrthonormalAndRoundTripIsExactAtFullRank)
{
    const Matrix y = gaussian(30, 8, 9);
    const auto pca = pca_fit(y, 8);
    EXPECT_LT((pca.components * pca.components.transpose() - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((pca.inverse(pca.transform(y)) - y).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, ReconstructionMatchesTruncatedSvd)
{
    const Matrix y = gaussian(200, 50, 10);
    const auto pca = pca_fit(y, 10);
    const Matrix centered = y.rowwise() - y.colwise().mean();
    Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Matrix best = svd.matrixU().leftCols(10) * svd.singularValues().head(10).asDiagonal() *
                        svd.matrixV().leftCols(10).transpose();
    const Matrix ours = pca.inverse(pca.transform(y)).rowwise() - y.colwise().mean();
    EXPECT_LT((ours - best).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pca, RankDeficientInputReducesK)
{
    const Matrix low = gaussian(40, 2, 11) * gaussian(2, 10, 12);
    log::ScopedCapture capture;
    const auto pca = pca_fit(low, 5);
    EXPECT_EQ(pca.components.rows(), 2);
    EXPECT_TRUE(capture.contains("RankDeficient"));
}

// ---------------------------------------------------------------------------
// Delays and standardization

TEST(Delays, BlockKIsXShiftedDownKRows)
{
    const Matrix x = gaussian(10, 3, 13);
    const auto d = add_delays(x, 4, ids(3));
    ASSERT_EQ(d.values.cols(), 12);
    for (int k = 1; k <= 4; ++k) {
        const auto block = d.values.middleCols((k - 1) * 3, 3);
        EXPECT_EQ(block.topRows(k), Matrix::Zero(k, 3));
        EXPECT_EQ(Matrix(block.bottomRows(10 - k)), Matrix(x.topRows(10 - k)));
        EXPECT_EQ(d.labels[static_cast<std::size_t>((k - 1) * 3)], (ColumnLabel{"q0", k}));
    }
}

TEST(Delays, MoreDelaysThanRowsLeavesZeroBlocks)
{
    const auto d = add_delays(Matrix::Ones(2, 1), 3, ids(1));
    EXPECT_EQ(d.values.col(2), Vector::Zero(2));
    EXPECT_EQ(d.values(1, 0), 1.0);
}

TEST(Standardizer, ZeroVarianceColumnsAreDropped)
{
    Matrix x = gaussian(20, 3, 14);
    x.col(1).setConstant(4.0);
    const auto s = Standardizer::fit(x);
    EXPECT_EQ(s.dropped, (std::vector<Eigen::Index>{1}));
    const Matrix z = s.apply(x);
    ASSERT_EQ(z.cols(), 2);
    EXPECT_LT(z.colwise().mean().cwiseAbs().maxCoeff(), 1e-12);
}

// ---------------------------------------------------------------------------
// Lanczos resampling

TEST(Lanczos, ConstantInputStaysConstant)
{
    std::vector<double> times;
    for (int i = 0; i < 300; ++i) {
        times.push_back(0.37 * i);
    }
    const Matrix values = Matrix::Constant(300, 2, 3.25);
    const auto out = lanczos_resample(times, values, TrSpec{2.0, 50, 0.0});
    EXPECT_LT((out.array() - 3.25).abs().maxCoeff(), 1e-9);
}

TEST(Lanczos, SlowSineIsPreserved)
{
    std::vector<double> times;
    Matrix values(1200, 1);
    for (int i = 0; i < 1200; ++i) {
        times.push_back(0.25 * i);
        values(i, 0) = std::sin(2 * std::numbers::pi * 0.02 * times.back());
    }
    const TrSpec tr{2.0, 140, 10.0};
    const auto out = lanczos_resample(times, values, tr);
    double sq = 0;
    for (int r = 0; r < tr.n_trs; ++r) {
        const double want = std::sin(2 * std::numbers::pi * 0.02 * tr.time_of(r));
        sq += (out(r, 0) - want) * (out(r, 0) - want);
    }
    EXPECT_LT(std::sqrt(sq / tr.n_trs), 0.05);
}

TEST(Lanczos, TrsWithoutNearbyWordsAreZeroWithWarning)
{
    log::ScopedCapture capture;
    const auto out = lanczos_resample({0.0, 0.5}, Matrix::Ones(2, 1), TrSpec{2.0, 20, 0.0});
    EXPECT_EQ(out(19, 0), 0.0);
    EXPECT_TRUE(capture.contains("zero kernel weight"));
}

// ---------------------------------------------------------------------------
// Cross-validation and evaluation

TEST(Cv, NoiselessTargetPicksSmallestPenalty)
{
    const Matrix x = gaussian(400, 5, 15);
    const auto design = add_delays(x, 4, ids(5));
    const Matrix y = design.values * gaussian(20, 10, 16);
    CvOptions opts;
    opts.lambda_grid = {1e-2, 1e4, 1e6};
    opts.delay_grid = {4};
    const auto cv = bootstrap_cv(x, ids(5), y, opts);
    EXPECT_EQ(cv.best_lambda, 1e-2);
    EXPECT_EQ(cv.best_delays, 4);
    EXPECT_GT(cv.best_score, 0.99);
    EXPECT_EQ(cv.table.size(), 3u);
}

TEST(Cv, PureNoiseScoresNearZero)
{
    const Matrix x = gaussian(400, 5, 17);
    const Matrix y = gaussian(400, 30, 18);
    CvOptions opts;
    opts.delay_grid = {4};
    const auto cv = bootstrap_cv(x, ids(5), y, opts);
    EXPECT_LT(std::abs(cv.best_score), 0.1);
}

TEST(Cv, SameSeedSameTable)
{
    const Matrix x = gaussian(200, 3, 19);
    const Matrix y = add_delays(x, 4, ids(3)).values * gaussian(12, 4, 20) + gaussian(200, 4, 21);
    CvOptions opts;
    opts.seed = 5;
    const auto a = bootstrap_cv(x, ids(3), y, opts);
    const auto b = bootstrap_cv(x, ids(3), y, opts);
    EXPECT_EQ(cv_table_csv(a), cv_table_csv(b));
}

TEST(Evaluate, PerfectAndNegatedPredictions)
{
    const Matrix x = gaussian(300, 4, 22);
    EncodingConfig cfg;
    cfg.pca_components = 0;
    cfg.cv.lambda_grid = {1e-3};
    cfg.cv.delay_grid = {4};
    const Matrix y = add_delays(x, 4, ids(4)).values * gaussian(16, 6, 23);
    const auto model = fit_encoding(x, ids(4), y, cfg);
    EXPECT_GT(evaluate(model, x, y).voxel_r.minCoeff(), 1.0 - 1e-6);
    EXPECT_LT(evaluate(model, x, -y).voxel_r.maxCoeff(), -1.0 + 1e-6);
}

TEST(Evaluate, VoxelOrderPermutationPermutesScores)
{
    const Matrix x = gaussian(300, 4, 24);
    const Matrix y = add_delays(x, 4, ids(4)).values * gaussian(16, 5, 25) + 3.0 * gaussian(300, 5, 26);
    EncodingConfig cfg;
    cfg.pca_components = 0;
    cfg.cv.delay_grid = {4};
    const auto model = fit_encoding(x, ids(4), y, cfg);
    const auto base = evaluate(model, x, y);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(5);
    perm.indices() << 3, 0, 4, 1, 2;
    EncodingModel permuted = model;
    permuted.weights = model.weights * perm;
    permuted.response_mean = model.response_mean * perm;
    const auto moved = evaluate(permuted, x, y * perm);
    EXPECT_LT((moved.voxel_r - perm.transpose() * base.voxel_r).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Evaluate, ZeroVarianceVoxelScoresZero)
{
    const Matrix x = gaussian(100, 2, 27);
    Matrix y = add_delays(x, 4, ids(2)).values * gaussian(8, 3, 28);
    EncodingConfig cfg;
    cfg.pca_components = 0;
    cfg.cv.delay_grid = {4};
    const auto model = fit_encoding(x, ids(2), y, cfg);
    y.col(1).setConstant(2.0);
    log::ScopedCapture capture;
    const auto r = evaluate(model, x, y);
    EXPECT_EQ(r.voxel_r(1), 0.0);
    EXPECT_EQ(r.zero_variance, (std::vector<Eigen::Index>{1}));
}

TEST(Model, SaveLoadPredictsIdentically)
{
    const Matrix x = gaussian(200, 3, 29);
    const Matrix y = add_delays(x, 4, ids(3)).values * gaussian(12, 15, 30) + gaussian(200, 15, 31);
    EncodingConfig cfg;
    cfg.pca_components = 5;
    cfg.cv.delay_grid = {4};
    const auto model = fit_encoding(x, ids(3), y, cfg);
    const auto dir = std::filesystem::temp_directory_path() / ("qaemb-model-" + std::to_string(::getpid()));
    save_model(model, dir);
    const auto back = load_model(dir);
    EXPECT_EQ(back.n_delays, model.n_delays);
    EXPECT_EQ(back.lambda, model.lambda);
    // Weights travel as f32.
    EXPECT_LT((predict(back, x) - predict(model, x)).cwiseAbs().maxCoeff(), 1e-3);
    std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Story embedding

TEST(Context, TrailingWindowIncludesCurrentWord)
{
    StoryStimulus s;
    for (int i = 0; i < 15; ++i) {
        s.words.push_back({"w" + std::to_string(i), 0.5 * i});
    }
    EXPECT_EQ(ngram_context(s, 0), "w0");
    EXPECT_EQ(ngram_context(s, 2, {3, true}), "w0 w1 w2");
    EXPECT_EQ(ngram_context(s, 12, {3, true}), "w10 w11 w12");
    EXPECT_EQ(ngram_context(s, 12, {3, false}), "w9 w10 w11");
    EXPECT_EQ(ngram_context(s, 0, {3, false}), "");
    EXPECT_EQ(story_contexts(s).size(), 15u);
    EXPECT_THROW(ngram_context(s, 15), Error);
}

TEST(Context, EmbedStoryRowsFollowWords)
{
    StoryStimulus s;
    s.tr = TrSpec{2.0, 3, 0.0};
    const std::vector<std::string> words = {"the", "dog", "ran", "home", "at", "noon"};
    for (std::size_t i = 0; i < words.size(); ++i) {
        s.words.push_back({words[i], 0.8 * static_cast<double>(i)});
    }
    const QuestionBank bank("b", {{"q1", "Is a dog mentioned?", ""}, {"q2", "Is noon mentioned?", ""}});
    RuleOracle oracle({{"q1", {"\\bdog\\b"}}, {"q2", {"noon"}}});
    const auto track = embed_story(s, bank, {&oracle}, {2, true});
    ASSERT_EQ(track.values.rows(), 6);
    Matrix want(6, 2);
    want << 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 1;
    EXPECT_EQ(track.values, want);
    EXPECT_EQ(track.times[5], 4.0);
}
