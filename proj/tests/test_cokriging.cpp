#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mfgp/cokriging.hpp"

using namespace mfgp;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double dense_loglik(double rho, double mu_d, double sd, double lt, double lx, const Eigen::VectorXd& mu,
                    const Eigen::VectorXd& y, const Eigen::MatrixXd& kl, const std::vector<Point2>& pts) {
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd c = rho * rho * kl;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double dt = (pts[i].t - pts[j].t) / lt, dx = (pts[i].x - pts[j].x) / lx;
            c(i, j) += sd * sd * std::exp(-0.5 * (dt * dt + dx * dx));
        }
    }
    const Eigen::VectorXd r = y - rho * mu - Eigen::VectorXd::Constant(n, mu_d);
    const Eigen::MatrixXd inv = c.inverse();
    return -0.5 * r.dot(inv * r) - 0.5 * std::log(c.determinant()) - 0.5 * static_cast<double>(n) * kLog2Pi;
}

EmpiricalMoments synthetic_moments(const Grid& g, const KernelModel& k, std::uint64_t seed) {
    EmpiricalMoments m;
    m.grid = g;
    m.n_mc = 100;
    m.cov = k.gram_values(g.points());
    m.mean.resize(static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Point2 p = g.point(i);
        m.mean(static_cast<Eigen::Index>(i)) = std::sin(2.0 * p.x) * std::exp(-p.t);
    }
    (void)seed;
    return m;
}

}  // namespace

TEST(CokrigingLoglik, SinglePointHandValue) {
    const std::vector<Point2> pts{{0.3, 0.2}};
    Eigen::VectorXd mu(1), y(1);
    mu << 0.4;
    y << 1.1;
    Eigen::MatrixXd kl(1, 1);
    kl << 0.5;
    const double rho = 1.5, mu_d = 0.2, sd = 0.3;
    const double c = rho * rho * 0.5 + sd * sd;
    const double r = 1.1 - rho * 0.4 - mu_d;
    const double want = -0.5 * r * r / c - 0.5 * std::log(c) - 0.5 * kLog2Pi;
    EXPECT_NEAR(cokriging_loglik(rho, mu_d, sd, 0.2, 0.2, mu, y, kl, pts), want, 1e-12);
}

TEST(CokrigingLoglik, TwoPointHandValue) {
    const std::vector<Point2> pts{{0.0, 0.0}, {0.0, 0.5}};
    Eigen::VectorXd mu(2), y(2);
    mu << 1.0, -1.0;
    y << 0.5, 0.25;
    Eigen::Matrix2d kl;
    kl << 2.0, 0.5, 0.5, 1.0;
    const double rho = 0.8, mu_d = -0.1, sd = 0.5, lx = 0.5;
    const double off = sd * sd * std::exp(-0.5);
    const double a = rho * rho * 2.0 + sd * sd, b = rho * rho * 0.5 + off, d = rho * rho * 1.0 + sd * sd;
    const double det = a * d - b * b;
    const double r0 = 0.5 - 0.8 + 0.1, r1 = 0.25 + 0.8 + 0.1;
    const double quad = (d * r0 * r0 - 2 * b * r0 * r1 + a * r1 * r1) / det;
    const double want = -0.5 * quad - 0.5 * std::log(det) - kLog2Pi;
    EXPECT_NEAR(cokriging_loglik(rho, mu_d, sd, 0.3, lx, mu, y, kl, pts), want, 1e-12);
}

TEST(CokrigingLoglik, CholeskyMatchesDenseInverse) {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ut(0, 1), ux(-1, 1);
    for (int n : {3, 8, 15, 20}) {
        std::vector<Point2> pts(static_cast<std::size_t>(n));
        for (auto& p : pts) {
            p = {ut(rng), ux(rng)};
        }
        const Eigen::MatrixXd kl = KernelModel::matern(KernelFamily::Matern52, 0.6, 0.5, 0.4).gram_values(pts);
        Eigen::VectorXd mu(n), y(n);
        for (int i = 0; i < n; ++i) {
            mu(i) = nd(rng);
            y(i) = nd(rng);
        }
        const double got = cokriging_loglik(1.2, 0.1, 0.4, 0.3, 0.25, mu, y, kl, pts);
        const double want = dense_loglik(1.2, 0.1, 0.4, 0.3, 0.25, mu, y, kl, pts);
        EXPECT_NEAR(got, want, 1e-9 * std::max(1.0, std::abs(want))) << n;
    }
}

TEST(CokrigingLoglik, RejectsBadInput) {
    const std::vector<Point2> pts{{0.3, 0.2}};
    const Eigen::VectorXd v = Eigen::VectorXd::Ones(1);
    const Eigen::MatrixXd k = Eigen::MatrixXd::Ones(1, 1);
    EXPECT_THROW(cokriging_loglik(1, 0, 0.0, 0.3, 0.3, v, v, k, pts), std::invalid_argument);
    EXPECT_THROW(cokriging_loglik(1, 0, 0.1, 0.3, 0.3, Eigen::VectorXd::Ones(2), v, k, pts), std::invalid_argument);
}

TEST(Restriction, ExactWhenNested) {
    const Grid lf = uniform_grid(Domain{}, 10, 19);
    const Grid hf = uniform_grid(Domain{}, 10, 10);
    const EmpiricalMoments m = synthetic_moments(lf, KernelModel::gaussian(1.0, 0.3, 0.3), 0);
    const HfRestriction r = restrict_to_hf(m, hf);
    EXPECT_TRUE(r.exact);
    for (std::size_t i = 0; i < hf.size(); ++i) {
        const Point2 p = hf.point(i);
        EXPECT_NEAR(r.mean(static_cast<Eigen::Index>(i)), std::sin(2.0 * p.x) * std::exp(-p.t), 1e-14);
    }
}

TEST(Restriction, InterpolatesAndWarnsOtherwise) {
    const Grid lf = uniform_grid(Domain{}, 10, 20);
    const Grid hf = uniform_grid(Domain{}, 10, 10);
    const KernelModel k = KernelModel::gaussian(1.0, 0.3, 0.3);
    const EmpiricalMoments m = synthetic_moments(lf, k, 0);
    const HfRestriction r = restrict_to_hf(m, hf);
    EXPECT_FALSE(r.exact);
    EXPECT_FALSE(r.warning.empty());
    // hand-built hat-function weights along x; the time nodes coincide
    const auto& xs = lf.x_nodes();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(hf.size()), static_cast<Eigen::Index>(lf.size()));
    for (std::size_t i = 0; i < hf.n_t(); ++i) {
        for (std::size_t j = 0; j < hf.n_x(); ++j) {
            const double x = hf.x_nodes()[j];
            std::size_t lo = 0;
            while (lo + 2 < xs.size() && xs[lo + 1] <= x) {
                ++lo;
            }
            const double f = (x - xs[lo]) / (xs[lo + 1] - xs[lo]);
            const auto row = static_cast<Eigen::Index>(hf.index(i, j));
            w(row, static_cast<Eigen::Index>(lf.index(i, lo))) += 1.0 - f;
            w(row, static_cast<Eigen::Index>(lf.index(i, lo + 1))) += f;
        }
    }
    EXPECT_LT((r.mean - w * m.mean).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((r.cov - w * m.cov * w.transpose()).cwiseAbs().maxCoeff(), 1e-13);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.cov);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * r.cov.trace());
}

TEST(FitCokriging, BeatsGeneratingParametersAndRespectsFloors) {
    const Grid lf = uniform_grid(Domain{}, 10, 19);
    const Grid hf = uniform_grid(Domain{}, 10, 10);
    const KernelModel kl = KernelModel::gaussian(0.2, 0.4, 0.3);
    const EmpiricalMoments m = synthetic_moments(lf, kl, 0);
    const HfRestriction r = restrict_to_hf(m, hf);
    const std::vector<Point2> pts = hf.points();
    const CokrigingParams truth{0.9, 0.05, 0.1, 0.3, 0.4};
    const Eigen::MatrixXd c = truth.rho * truth.rho * r.cov +
                              KernelModel::gaussian(truth.sigma_d * truth.sigma_d, truth.ell_t, truth.ell_x).gram_values(pts) +
                              1e-8 * Eigen::MatrixXd::Identity(100, 100);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    Eigen::VectorXd e(100);
    for (int i = 0; i < 100; ++i) {
        e(i) = nd(rng);
    }
    const Eigen::VectorXd y = truth.rho * r.mean + Eigen::VectorXd::Constant(100, truth.mu_d) +
                              Eigen::MatrixXd(c.llt().matrixL()) * e;
    const Field yf{hf, std::vector<double>(y.data(), y.data() + y.size())};
    CokrigingConfig cfg;
    cfg.opt.seed = 2;
    cfg.opt.n_starts = 6;
    const CokrigingModel model = fit_cokriging(m, yf, cfg);
    EXPECT_GE(model.loglik, model.loglik_at_start);
    EXPECT_GE(model.loglik, cokriging_loglik_detail(truth, r.mean, y, r.cov, pts).value - 1e-6);
    EXPECT_TRUE(model.restriction_exact);
    EXPECT_TRUE(model.identifiable);
    EXPECT_GE(model.params.ell_t, 0.5 / 9.0 - 1e-12);
    EXPECT_GE(model.params.ell_x, 0.5 * 2.0 / 9.0 - 1e-12);
}

TEST(ComposeKernel, SumIsPsdAndMatchesParts) {
    CokrigingModel m;
    m.params = {1.3, 0.0, 0.2, 0.3, 0.2};
    m.k_opt = KernelModel::gibbs(0.7, 0.2, 0.1, 0.3, 0.05);
    const KernelModel kh = compose_hf_kernel(m);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ut(0, 1), ux(-1, 1);
    std::vector<Point2> pts(30);
    for (auto& p : pts) {
        p = {ut(rng), ux(rng)};
    }
    const Eigen::MatrixXd g = kh.gram_values(pts);
    const Eigen::MatrixXd parts = 1.69 * m.k_opt->gram_values(pts) + m.discrepancy_kernel().gram_values(pts);
    EXPECT_LT((g - parts).cwiseAbs().maxCoeff(), 1e-13);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * g.trace());
    CokrigingModel none;
    EXPECT_THROW(compose_hf_kernel(none), std::invalid_argument);
}
