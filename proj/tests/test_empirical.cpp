#include <gtest/gtest.h>

#include <random>

#include "mfgp/empirical.hpp"

using namespace mfgp;

namespace {

SampleEnsemble make(const Eigen::MatrixXd& s) {
    SampleEnsemble e;
    std::vector<double> xs(static_cast<std::size_t>(s.cols()));
    for (std::size_t j = 0; j < xs.size(); ++j) {
        xs[j] = static_cast<double>(j);
    }
    e.grid = Grid({0.0}, xs);
    e.samples = s;
    return e;
}

}  // namespace

TEST(EmpiricalMean, IdenticalRows) {
    Eigen::MatrixXd s(3, 4);
    s << 1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4;
    EXPECT_TRUE(empirical_mean(make(s)).isApprox(Eigen::Vector4d(1, 2, 3, 4)));
}

TEST(EmpiricalMean, TwoRows) {
    Eigen::MatrixXd s(2, 3);
    s << 0, 0, 0, 2, 2, 2;
    EXPECT_TRUE(empirical_mean(make(s)).isApprox(Eigen::Vector3d::Ones()));
    EXPECT_THROW(empirical_mean(make(Eigen::MatrixXd(0, 3))), std::invalid_argument);
}

TEST(EmpiricalCovariance, HandInstance) {
    Eigen::MatrixXd s(2, 2);
    s << 0, 0, 2, 4;
    Eigen::Matrix2d want;
    want << 2, 4, 4, 8;
    EXPECT_LT((empirical_covariance(make(s)) - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EmpiricalCovariance, ConstantIsZeroAndNeedsTwoRows) {
    const Eigen::MatrixXd s = Eigen::MatrixXd::Constant(4, 3, 1.7);
    EXPECT_EQ(empirical_covariance(make(s)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(empirical_covariance(make(Eigen::MatrixXd::Ones(1, 3))), std::invalid_argument);
}

TEST(EmpiricalCovariance, MatchesNaiveDoubleLoop) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.3, 2.0);
    for (int rows = 2; rows <= 5; ++rows) {
        for (int cols = 1; cols <= 5; ++cols) {
            Eigen::MatrixXd s(rows, cols);
            for (int i = 0; i < rows; ++i) {
                for (int j = 0; j < cols; ++j) {
                    s(i, j) = nd(rng);
                }
            }
            std::vector<double> mu(cols, 0.0);
            for (int j = 0; j < cols; ++j) {
                for (int i = 0; i < rows; ++i) {
                    mu[j] += s(i, j);
                }
                mu[j] /= rows;
            }
            const SampleEnsemble e = make(s);
            const Eigen::VectorXd m = empirical_mean(e);
            const Eigen::MatrixXd c = empirical_covariance(e);
            for (int a = 0; a < cols; ++a) {
                EXPECT_NEAR(m(a), mu[a], 1e-13);
                for (int b = 0; b < cols; ++b) {
                    double acc = 0.0;
                    for (int i = 0; i < rows; ++i) {
                        acc += (s(i, a) - mu[a]) * (s(i, b) - mu[b]);
                    }
                    EXPECT_NEAR(c(a, b), acc / (rows - 1), 1e-13);
                }
            }
        }
    }
}

TEST(EmpiricalCovariance, AffineTransform) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::MatrixXd s(30, 6);
    for (int i = 0; i < s.size(); ++i) {
        s.data()[i] = u(rng);
    }
    const double a = -2.5, b = 4.0;
    const Eigen::MatrixXd t = (a * s).array() + b;
    const Eigen::MatrixXd c1 = empirical_covariance(make(s));
    const Eigen::MatrixXd c2 = empirical_covariance(make(t));
    EXPECT_LT((c2 - a * a * c1).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EmpiricalMoments, BurgersEnsembleSharesInitialCondition) {
    const Grid g = uniform_grid(Domain{}, 10, 20);
    ParamSampler ps;
    ps.seed = 3;
    EnsembleSettings es;
    es.fft.n_modes = 128;
    const SampleEnsemble ens = generate_ensemble(ps, 40, g, burgers(1.0, 0.02), es);
    const EmpiricalMoments m = empirical_moments(ens);
    EXPECT_EQ(m.n_mc, 40u);
    for (std::size_t j = 0; j < g.n_x(); ++j) {
        const double u0 = (j == 0 || j + 1 == g.n_x()) ? 0.0 : initial_profile(g.x_nodes()[j]);
        EXPECT_NEAR(m.mean(static_cast<Eigen::Index>(j)), u0, 1e-15);
        const auto k = static_cast<Eigen::Index>(g.index(0, j));
        EXPECT_NEAR(m.cov(k, k), 0.0, 1e-30);
    }
    EXPECT_LT((m.cov - m.cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(m.cov);
    EXPECT_GE(es2.eigenvalues().minCoeff(), -1e-10 * m.cov.trace());
}
