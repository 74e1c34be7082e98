#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mfgp/meanfield.hpp"

using namespace mfgp;

namespace {

std::vector<Point2> anchors() { return uniform_grid(Domain{}, 6, 7).points(); }

Eigen::VectorXd smooth_values(const std::vector<Point2>& pts) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = -std::sin(std::numbers::pi * pts[i].x) * std::exp(-0.5 * pts[i].t);
    }
    return v;
}

}  // namespace

TEST(MeanLoglik, SinglePointHandValue) {
    const KernelModel k = KernelModel::gaussian(0.8, 0.3, 0.3);
    Eigen::VectorXd m(1);
    m << 0.6;
    const double c = 0.8 + 0.01;
    const double want = -0.5 * 0.36 / c - 0.5 * std::log(c) - 0.5 * std::log(2 * std::numbers::pi);
    EXPECT_NEAR(mean_gpr_loglik(k, 0.01, {{0.2, 0.1}}, m), want, 1e-12);
    EXPECT_THROW(mean_gpr_loglik(k, -1.0, {{0.2, 0.1}}, m), std::invalid_argument);
}

TEST(MeanLoglik, TwoPointHandValue) {
    const KernelModel k = KernelModel::gaussian(1.0, 1.0, 1.0);
    const std::vector<Point2> pts{{0.0, 0.0}, {0.0, 1.0}};
    Eigen::VectorXd m(2);
    m << 1.0, 2.0;
    const double a = 1.0 + 0.1, b = std::exp(-0.5);
    const double det = a * a - b * b;
    const double quad = (a * 1.0 - 2 * b * 2.0 + a * 4.0) / det;
    const double want = -0.5 * quad - 0.5 * std::log(det) - std::log(2 * std::numbers::pi);
    EXPECT_NEAR(mean_gpr_loglik(k, 0.1, pts, m), want, 1e-12);
}

TEST(MeanModel, InterpolatesAnchorsWithoutRegularization) {
    const auto pts = anchors();
    const Eigen::VectorXd v = smooth_values(pts);
    const MeanModel m = make_mean(KernelModel::gaussian(1.0, 0.4, 0.35), 1e-12, pts, v);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_NEAR(eval_mean(m, pts[i]), v(static_cast<Eigen::Index>(i)), 1e-6);
    }
}

TEST(MeanModel, DerivativesMatchDifferences) {
    const auto pts = anchors();
    const MeanModel m = make_mean(KernelModel::gaussian(1.0, 0.4, 0.35), 1e-6, pts, smooth_values(pts));
    const double h = 1e-4;
    for (Point2 p : {Point2{0.3, 0.1}, Point2{0.7, -0.6}}) {
        const Jet2 j = eval_mean_jet(m, p);
        EXPECT_NEAR(j.u, eval_mean(m, p), 1e-13);
        EXPECT_NEAR(j.ut, eval_mean_deriv(m, p, FunctionalKind::Dt), 1e-12);
        EXPECT_NEAR(j.ut, (eval_mean(m, {p.t + h, p.x}) - eval_mean(m, {p.t - h, p.x})) / (2 * h), 1e-5);
        EXPECT_NEAR(j.ux, (eval_mean(m, {p.t, p.x + h}) - eval_mean(m, {p.t, p.x - h})) / (2 * h), 1e-5);
        EXPECT_NEAR(j.uxx,
                    (eval_mean(m, {p.t, p.x + h}) - 2 * j.u + eval_mean(m, {p.t, p.x - h})) / (h * h),
                    1e-4 * std::max(1.0, std::abs(j.uxx)));
    }
}

TEST(MeanModel, DerivativeIsLinearInWeights) {
    const auto pts = anchors();
    MeanModel m1 = make_mean(KernelModel::gaussian(1.0, 0.4, 0.35), 1e-6, pts, smooth_values(pts));
    MeanModel m2 = m1;
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    for (Eigen::Index i = 0; i < m2.weights.size(); ++i) {
        m2.weights(i) = nd(rng);
    }
    MeanModel mix = m1;
    const double a = 0.7, b = -1.3;
    mix.weights = a * m1.weights + b * m2.weights;
    const Point2 p{0.45, 0.33};
    for (FunctionalKind k : {FunctionalKind::Eval, FunctionalKind::Dt, FunctionalKind::Dx, FunctionalKind::Dxx}) {
        const double want = a * eval_mean_deriv(m1, p, k) + b * eval_mean_deriv(m2, p, k);
        EXPECT_NEAR(eval_mean_deriv(mix, p, k), want, 1e-10 * std::max(1.0, std::abs(want)));
    }
}

TEST(MeanFit, MaximumLikelihoodBeatsStartAndTracksData) {
    const auto pts = anchors();
    const Eigen::VectorXd v = smooth_values(pts);
    MeanFitConfig cfg;
    cfg.opt.seed = 3;
    cfg.opt.n_starts = 3;
    const MeanModel m = fit_mean(v, pts, cfg);
    const double at_start = mean_gpr_loglik(KernelModel::gaussian(std::min(v.squaredNorm() / v.size(), 5.0), 0.3, 0.3),
                                            1e-6, pts, v);
    EXPECT_GE(m.loglik, at_start);
    EXPECT_GE(m.lambda, 1e-10);
    EXPECT_LE(m.lambda, 1e-1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        EXPECT_NEAR(eval_mean(m, pts[i]), v(static_cast<Eigen::Index>(i)), 1e-2);
    }
    const Point2 mid{0.5, 0.25};
    EXPECT_NEAR(eval_mean(m, mid), -std::sin(std::numbers::pi * 0.25) * std::exp(-0.25), 2e-2);
}

TEST(MeanFit, LengthscaleLowerBoundsHold) {
    const auto pts = anchors();
    Eigen::VectorXd v(static_cast<Eigen::Index>(pts.size()));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = z(rng);  // white noise pulls the lengthscales down
    }
    MeanFitConfig cfg;
    cfg.opt.seed = 2;
    cfg.opt.n_starts = 3;
    cfg.min_theta_t = 0.2;
    cfg.min_theta_x = 0.35;
    const MeanModel m = fit_mean(v, pts, cfg);
    EXPECT_GE(m.kernel.params()[1], 0.2);
    EXPECT_GE(m.kernel.params()[2], 0.35);
    cfg.min_theta_x = 4.0;
    EXPECT_THROW(fit_mean(v, pts, cfg), std::invalid_argument);
}

TEST(ResidualKernel, LoglikHandValueAndFit) {
    const KernelModel k = KernelModel::gaussian(2.0, 0.3, 0.3);
    Eigen::VectorXd r(1);
    r << 0.5;
    const double c = 2.0 * (1 + 1e-8);
    EXPECT_NEAR(residual_loglik(k, r, {{0.1, 0.1}}),
                -0.5 * 0.25 / c - 0.5 * std::log(c) - 0.5 * std::log(2 * std::numbers::pi), 1e-12);

    const auto pts = anchors();
    const Eigen::VectorXd v = 0.01 * smooth_values(pts);
    OptimConfig opt;
    opt.seed = 4;
    opt.n_starts = 3;
    const ResidualKernelFit fit = residual_kernel_mle(v, pts, default_space(KernelFamily::Gaussian, 1e-4), opt);
    EXPECT_NEAR(fit.loglik, residual_loglik(fit.kernel, v, pts), 1e-9 * std::abs(fit.loglik));
    EXPECT_GT(fit.kernel.params()[2], 0.05);
    EXPECT_THROW(residual_kernel_mle(v.head(1), {pts[0]}, default_space(KernelFamily::Gaussian), opt),
                 std::invalid_argument);
}
