#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "mfgp/errors.hpp"
#include "mfgp/fitting.hpp"
#include "mfgp/optim.hpp"

using namespace mfgp;

namespace {

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double shift = 0.1) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < a.size(); ++i) {
        a.data()[i] = nd(rng);
    }
    return a * a.transpose() + shift * Eigen::MatrixXd::Identity(n, n);
}

double power_iteration_norm(const Eigen::MatrixXd& d) {
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(d.cols(), 1.0, 2.0);
    double lambda = 0.0;
    for (int it = 0; it < 20000; ++it) {
        const Eigen::VectorXd w = d.transpose() * (d * v);
        const double next = w.norm();
        v = w / next;
        if (std::abs(next - lambda) <= 1e-15 * next) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::sqrt(lambda);
}

Eigen::Matrix2d rotation(double th, bool reflect) {
    Eigen::Matrix2d u;
    u << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    if (reflect) {
        u.col(1) *= -1.0;
    }
    return u;
}

// minimum over the orthogonal group O(2) by dense scan plus golden-section refinement
double procrustes_search(const Eigen::Matrix2d& k1, const Eigen::Matrix2d& k2) {
    const Eigen::Matrix2d r1 = psd_sqrt(k1), r2 = psd_sqrt(k2);
    double best = std::numeric_limits<double>::infinity();
    for (bool reflect : {false, true}) {
        auto f = [&](double th) { return (r1 - r2 * rotation(th, reflect)).norm(); };
        const int n = 3600;
        const double step = 2 * std::numbers::pi / n;
        int arg = 0;
        for (int i = 0; i < n; ++i) {
            if (f(i * step) < f(arg * step)) {
                arg = i;
            }
        }
        double a = (arg - 1) * step, b = (arg + 1) * step;
        const double g = (std::sqrt(5.0) - 1) / 2;
        for (int it = 0; it < 200; ++it) {
            const double c = b - g * (b - a), d = a + g * (b - a);
            (f(c) < f(d) ? b : a) = (f(c) < f(d) ? d : c);
        }
        best = std::min(best, f(0.5 * (a + b)));
    }
    return best;
}

std::vector<Point2> grid_points(std::size_t nt, std::size_t nx) { return uniform_grid(Domain{}, nt, nx).points(); }

}  // namespace

TEST(MatrixDistance, FrobeniusHandValues) {
    const Eigen::Matrix2d i2 = Eigen::Matrix2d::Identity();
    EXPECT_NEAR(matrix_distance(i2, Eigen::Matrix2d::Zero(), DistanceMetric::Frobenius), std::sqrt(2.0), 1e-15);
    Eigen::Matrix2d a, b;
    a << 1, 2, 2, 5;
    b << 0, 1, 1, 1;
    EXPECT_NEAR(matrix_distance(a, b, DistanceMetric::Frobenius), std::sqrt(1 + 1 + 1 + 16.0), 1e-15);
    EXPECT_EQ(matrix_distance(a, a, DistanceMetric::Frobenius), 0.0);
}

TEST(MatrixDistance, SpectralMatchesPowerIteration) {
    std::mt19937_64 rng(1);
    for (int n : {2, 3, 6, 10}) {
        const Eigen::MatrixXd k1 = random_spd(rng, n), k2 = random_spd(rng, n);
        const double want = power_iteration_norm(k1 - k2);
        EXPECT_NEAR(matrix_distance(k1, k2, DistanceMetric::Spectral), want, 1e-8 * std::max(1.0, want));
    }
    Eigen::Matrix2d d;
    d << 3, 0, 0, -4;
    EXPECT_NEAR(matrix_distance(d, Eigen::Matrix2d::Zero(), DistanceMetric::Spectral), 4.0, 1e-14);
}

TEST(MatrixDistance, ProcrustesMatchesOrthogonalSearch) {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::Matrix2d k1 = random_spd(rng, 2), k2 = random_spd(rng, 2);
        EXPECT_NEAR(matrix_distance(k1, k2, DistanceMetric::Procrustes), procrustes_search(k1, k2), 1e-8);
    }
    Eigen::Matrix2d singular;
    singular << 1, 1, 1, 1;
    EXPECT_NEAR(matrix_distance(singular, Eigen::Matrix2d::Identity(), DistanceMetric::Procrustes),
                procrustes_search(singular, Eigen::Matrix2d::Identity()), 1e-8);
}

TEST(MatrixDistance, ProcrustesOfIdenticalIsZeroAndSymmetric) {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd k1 = random_spd(rng, 5), k2 = random_spd(rng, 5);
    EXPECT_NEAR(matrix_distance(k1, k1, DistanceMetric::Procrustes), 0.0, 1e-6);
    EXPECT_NEAR(matrix_distance(k1, k2, DistanceMetric::Procrustes), matrix_distance(k2, k1, DistanceMetric::Procrustes),
                1e-10);
    EXPECT_THROW(matrix_distance(k1, Eigen::MatrixXd::Zero(3, 3), DistanceMetric::Frobenius), std::invalid_argument);
}

TEST(PsdSqrt, SquaresBackAndRejectsIndefinite) {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd k = random_spd(rng, 6);
    const Eigen::MatrixXd r = psd_sqrt(k);
    EXPECT_LT((r * r - k).cwiseAbs().maxCoeff(), 1e-10 * k.cwiseAbs().maxCoeff());
    Eigen::Matrix2d bad;
    bad << 1, 0, 0, -1;
    EXPECT_THROW(psd_sqrt(bad), std::invalid_argument);
}

TEST(KernelSpaceCoding, GibbsEndpointRoundTrip) {
    const KernelSpace s = default_space(KernelFamily::Gibbs);
    const KernelModel k = KernelModel::gibbs(1.1, 0.2, 0.3, 0.4, -0.1);
    const auto e = s.encode(k);
    EXPECT_NEAR(e[1], 0.2, 1e-15);
    EXPECT_NEAR(e[2], 0.5, 1e-15);
    EXPECT_NEAR(e[3], 0.5, 1e-15);
    EXPECT_NEAR(e[4], 0.3, 1e-15);
    const auto back = s.decode(e).params();
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_NEAR(back[i], k.params()[i], 1e-15);
    }
    EXPECT_EQ(s.names().size(), 5u);
}

TEST(KernelSpaceCoding, ResolutionLimitedRaisesFloors) {
    const Grid g = uniform_grid(Domain{}, 10, 20);
    const KernelSpace s = resolution_limited(default_space(KernelFamily::Gibbs), g, 0.5);
    EXPECT_NEAR(s.bounds[1].lo, 0.5 / 9.0, 1e-15);
    EXPECT_NEAR(s.bounds[2].lo, 0.5 / 9.0, 1e-15);
    EXPECT_NEAR(s.bounds[3].lo, 0.5 * 2.0 / 19.0, 1e-15);
    EXPECT_NEAR(s.bounds[0].lo, 1e-6, 0.0);
    const KernelSpace n = resolution_limited(default_space(KernelFamily::NSAmplitude), g, 0.5);
    EXPECT_NEAR(n.bounds[4].lo, 0.5 / 9.0, 1e-15);
    EXPECT_NEAR(n.bounds[5].lo, 1.0 / 19.0, 1e-15);
    EXPECT_EQ(n.bounds[1].lo, -5.0);
}

TEST(FitKernel, RecoversGeneratingGaussian) {
    const auto pts = grid_points(6, 7);
    const KernelModel truth = KernelModel::gaussian(0.7, 0.35, 0.25);
    OptimConfig cfg;
    cfg.seed = 5;
    cfg.n_starts = 4;
    for (DistanceMetric m : {DistanceMetric::Frobenius, DistanceMetric::Spectral, DistanceMetric::Procrustes}) {
        const FitResult r = fit_kernel(default_space(KernelFamily::Gaussian), pts, truth.gram_values(pts), m, cfg);
        EXPECT_LT(r.distance_value, 1e-4) << to_string(m);
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_NEAR(r.kernel.params()[i], truth.params()[i], 2e-3 * truth.params()[i]) << to_string(m);
        }
        EXPECT_LE(r.distance_value, r.initial_distance);
    }
}

TEST(FitKernel, RecoversGeneratingGibbs) {
    const auto pts = grid_points(7, 9);
    const KernelModel truth = KernelModel::gibbs(1.0, 0.25, 0.2, 0.3, 0.1);
    OptimConfig cfg;
    cfg.seed = 6;
    const FitResult r = fit_kernel(default_space(KernelFamily::Gibbs), pts, truth.gram_values(pts),
                                   DistanceMetric::Frobenius, cfg);
    EXPECT_LT(r.distance_value, 1e-3);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NEAR(r.kernel.params()[i], truth.params()[i], 1e-2);
    }
}

TEST(FitKernel, NestedFamilyIsNoWorse) {
    const auto pts = grid_points(6, 8);
    const KernelModel truth = KernelModel::ns_amplitude({-0.2, 0.4, -0.3, 0.5}, 0.3, 0.3);
    const Eigen::MatrixXd target = truth.gram_values(pts);
    OptimConfig cfg;
    cfg.seed = 7;
    const FitResult poor = fit_kernel(default_space(KernelFamily::Gaussian), pts, target, DistanceMetric::Frobenius, cfg);
    const FitResult rich =
        fit_kernel(default_space(KernelFamily::NSAmplitude), pts, target, DistanceMetric::Frobenius, cfg);
    EXPECT_LE(rich.distance_value, poor.distance_value + 1e-6);
}

TEST(FitKernel, PermutationCovariant) {
    auto pts = grid_points(5, 6);
    const KernelModel k = KernelModel::matern(KernelFamily::Matern52, 0.9, 0.4, 0.3);
    const KernelModel other = KernelModel::gaussian(1.1, 0.5, 0.2);
    const Eigen::MatrixXd target = k.gram_values(pts);
    std::vector<Eigen::Index> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(8));
    std::vector<Point2> pp(pts.size());
    Eigen::MatrixXd pt(target.rows(), target.cols());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pp[i] = pts[static_cast<std::size_t>(perm[i])];
        for (std::size_t j = 0; j < pts.size(); ++j) {
            pt(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = target(perm[i], perm[j]);
        }
    }
    for (DistanceMetric m : {DistanceMetric::Frobenius, DistanceMetric::Spectral, DistanceMetric::Procrustes}) {
        EXPECT_NEAR(matrix_distance(other.gram_values(pts), target, m), matrix_distance(other.gram_values(pp), pt, m),
                    1e-10);
    }
    OptimConfig cfg;
    cfg.seed = 9;
    cfg.n_starts = 3;
    const FitResult a = fit_kernel(default_space(KernelFamily::Gaussian), pts, target, DistanceMetric::Frobenius, cfg);
    const FitResult b = fit_kernel(default_space(KernelFamily::Gaussian), pp, pt, DistanceMetric::Frobenius, cfg);
    EXPECT_NEAR(a.distance_value, b.distance_value, 1e-6 * std::max(1.0, a.distance_value));
}

TEST(FitKernel, RejectsMismatchedTarget) {
    const auto pts = grid_points(3, 3);
    OptimConfig cfg;
    EXPECT_THROW(fit_kernel(default_space(KernelFamily::Gaussian), pts, Eigen::MatrixXd::Identity(4, 4),
                            DistanceMetric::Frobenius, cfg),
                 std::invalid_argument);
    Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(9, 9);
    asym(0, 1) = 1.0;
    EXPECT_THROW(fit_kernel(default_space(KernelFamily::Gaussian), pts, asym, DistanceMetric::Frobenius, cfg),
                 std::invalid_argument);
}

TEST(MinimizeBox, RosenbrockInsideBox) {
    auto f = [](const std::vector<double>& x) {
        return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
    };
    OptimConfig cfg;
    cfg.seed = 3;
    cfg.size_tol = 1e-10;
    const OptimResult r = minimize_box(f, {-1.0, 1.5}, {{-2, 2, false}, {-1, 3, false}}, cfg);
    EXPECT_NEAR(r.x[0], 1.0, 1e-4);
    EXPECT_NEAR(r.x[1], 1.0, 1e-4);
    EXPECT_LE(r.value, r.initial_value);
}

TEST(MinimizeBox, OptimumOnBoundaryAndLogScale) {
    auto f = [](const std::vector<double>& x) { return std::pow(std::log(x[0]) - std::log(20.0), 2); };
    OptimConfig cfg;
    const OptimResult r = minimize_box(f, {1.0}, {{0.01, 10.0, true}}, cfg);
    EXPECT_LE(r.x[0], 10.0);
    EXPECT_NEAR(r.x[0], 10.0, 1e-3);
}

TEST(MinimizeBox, AllStartsFailingThrows) {
    auto f = [](const std::vector<double>&) { return std::numeric_limits<double>::quiet_NaN(); };
    OptimConfig cfg;
    cfg.n_starts = 2;
    EXPECT_THROW(minimize_box(f, {0.5}, {{0.0, 1.0, false}}, cfg), FitError);
}

TEST(LatinHypercube, OnePointPerStratum) {
    const std::vector<ParamBound> b{{0.0, 1.0, false}, {1e-3, 1.0, true}};
    const auto pts = latin_hypercube(b, 10, 4);
    ASSERT_EQ(pts.size(), 10u);
    std::vector<int> s0(10, 0), s1(10, 0);
    for (const auto& p : pts) {
        ++s0[std::min(9, static_cast<int>(p[0] * 10))];
        ++s1[std::min(9, static_cast<int>((std::log(p[1]) - std::log(1e-3)) / (-std::log(1e-3)) * 10))];
    }
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(s0[i], 1);
        EXPECT_EQ(s1[i], 1);
    }
}
