#include <random>

#include <gtest/gtest.h>

#include "qaemb/feature_selection.hpp"

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

Matrix zscore(const Matrix& x)
{
    const auto s = Standardizer::fit(x);
    return s.apply(x);
}

std::vector<std::string> ids(int d)
{
    std::vector<std::string> out;
    for (int j = 0; j < d; ++j) {
        out.push_back("q" + std::to_string(j));
    }
    return out;
}

/// X with columns {2, 5, 11} driving every output.
std::pair<Matrix, Matrix> planted(std::uint64_t seed)
{
    const Matrix x = zscore(gaussian(300, 20, seed));
    Matrix b = Matrix::Zero(20, 6);
    b.row(2) = gaussian(1, 6, seed + 1).array() + 2.0;
    b.row(5) = gaussian(1, 6, seed + 2).array() - 2.0;
    b.row(11) = gaussian(1, 6, seed + 3).array() + 1.5;
    Matrix y = x * b + 0.1 * gaussian(300, 6, seed + 4);
    y = y.rowwise() - y.colwise().mean();
    return {x, y};
}

}  // namespace

TEST(Enet, EveryPathPointSatisfiesKkt)
{
    auto [x, y] = planted(1);
    EnetOptions opts;
    opts.tol = 1e-9;
    opts.max_iter = 20000;
    const auto path = enet_path(x, y, ids(20), opts);
    ASSERT_EQ(path.points.size(), opts.alphas.size());
    for (const auto& pt : path.points) {
        EXPECT_TRUE(pt.converged);
        EXPECT_LT(pt.kkt_residual, 1e-6) << "alpha " << pt.alpha;
    }
}

TEST(Enet, AlphasAreFittedInDecreasingOrder)
{
    auto [x, y] = planted(2);
    EnetOptions opts;
    opts.alphas = {0.01, 1.0, 0.1};
    const auto path = enet_path(x, y, ids(20), opts);
    EXPECT_EQ(path.points[0].alpha, 1.0);
    EXPECT_EQ(path.points[2].alpha, 0.01);
}

TEST(Enet, ObjectiveNeverIncreasesAcrossSweeps)
{
    auto [x, y] = planted(3);
    const MultiTaskEnet problem(x, y);
    Matrix b = Matrix::Zero(20, 6);
    const auto pt = problem.solve(b, 0.05, 0.5, 1e-10, 5000);
    for (std::size_t i = 1; i < pt.objective_trace.size(); ++i) {
        EXPECT_LE(pt.objective_trace[i], pt.objective_trace[i - 1] + 1e-12);
    }
}

TEST(Enet, AlphaMaxGivesEmptySupportAndJustBelowDoesNot)
{
    auto [x, y] = planted(4);
    const MultiTaskEnet problem(x, y);
    const double amax = problem.alpha_max(0.5);
    Matrix b = Matrix::Zero(20, 6);
    EXPECT_TRUE(problem.solve(b, amax * 1.0001, 0.5, 1e-10, 1000).support_idx.empty());
    b.setZero();
    EXPECT_FALSE(problem.solve(b, amax * 0.95, 0.5, 1e-10, 1000).support_idx.empty());
}

TEST(Enet, RecoversPlantedSupport)
{
    auto [x, y] = planted(5);
    EnetOptions opts;
    opts.alphas = {0.5};
    opts.tol = 1e-9;
    const auto path = enet_path(x, y, ids(20), opts);
    EXPECT_EQ(path.points[0].support, (std::vector<std::string>{"q2", "q5", "q11"}));
}

TEST(Enet, VanishingPenaltyApproachesLeastSquares)
{
    const Matrix x = zscore(gaussian(30, 8, 6));
    Matrix y = x * gaussian(8, 2, 7) + 0.5 * gaussian(30, 2, 8);
    y = y.rowwise() - y.colwise().mean();
    EnetOptions opts;
    opts.alphas = {1e-10};
    opts.l1_ratio = 1.0;
    opts.tol = 1e-13;
    opts.max_iter = 200000;
    const auto path = enet_path(x, y, ids(8), opts);
    const Matrix ols = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    EXPECT_LT((path.points[0].coef - ols).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Enet, SweepLimitWarnsAndReturnsLastIterate)
{
    auto [x, y] = planted(9);
    EnetOptions opts;
    opts.alphas = {1e-4};
    opts.tol = 1e-15;
    opts.max_iter = 2;
    log::ScopedCapture capture;
    const auto path = enet_path(x, y, ids(20), opts);
    EXPECT_FALSE(path.points[0].converged);
    EXPECT_EQ(path.points[0].sweeps, 2);
    EXPECT_TRUE(capture.contains("NotConverged"));
}

TEST(Enet, InvalidOptionsAreRejected)
{
    auto [x, y] = planted(10);
    EnetOptions opts;
    opts.l1_ratio = 0.0;
    EXPECT_THROW(enet_path(x, y, ids(20), opts), Error);
    opts = EnetOptions{};
    opts.alphas = {};
    EXPECT_THROW(enet_path(x, y, ids(20), opts), Error);
    EXPECT_THROW(enet_path(x, y, ids(19)), Error);
}

TEST(Enet, PathCsvListsEveryPoint)
{
    auto [x, y] = planted(11);
    EnetOptions opts;
    opts.alphas = {1.0, 0.1};
    const auto csv = path_csv(enet_path(x, y, ids(20), opts));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
