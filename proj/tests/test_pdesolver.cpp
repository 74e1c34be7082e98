#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "mfgp/errors.hpp"
#include "mfgp/pdesolver.hpp"
#include "mfgp/reference.hpp"

using namespace mfgp;

namespace {

const KernelModel kSmooth = KernelModel::gaussian(1.0, 0.3, 0.15);

ConstraintSet small_constraints(const BurgersCoefficients& c, std::uint64_t seed, std::size_t mi = 200,
                                std::size_t mb = 60) {
    return make_constraints(sample_collocation(Domain{}, mi, mb, seed), c);
}

double naive_value(const GPSolution& sol, const Point2& p) {
    double acc = sol.mean ? sol.mean->jet(p).u : 0.0;
    for (std::size_t i = 0; i < sol.functionals.size(); ++i) {
        const Functional& f = sol.functionals[i];
        acc += sol.coefficients(static_cast<Eigen::Index>(i)) * sol.kernel.eval_deriv(f.point, p, order_of(f.kind), {});
    }
    return acc;
}


// Gram plus the diagonal nugget, applied to the weights, reproduces the latent values, and the
// evaluated solution equals the latent values minus the nugget share.
void expect_kkt(const GPSolution& sol) {
    Eigen::MatrixXd k = gram(sol.kernel, sol.functionals);
    Eigen::VectorXd nug(k.rows());
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
        nug(i) = sol.block_nugget[static_cast<std::size_t>(sol.functionals[static_cast<std::size_t>(i)].kind)];
        k(i, i) += nug(i);
    }
    const double scale = std::max(1.0, sol.latent.cwiseAbs().maxCoeff());
    EXPECT_LT((k * sol.coefficients - sol.latent).cwiseAbs().maxCoeff(), 1e-8 * scale);
    for (std::size_t i = 0; i < sol.functionals.size(); i += 17) {
        const Functional& f = sol.functionals[i];
        const Jet2 j = evaluate_jet(sol, f.point);
        const double got = f.kind == FunctionalKind::Eval ? j.u
                           : f.kind == FunctionalKind::Dt ? j.ut
                           : f.kind == FunctionalKind::Dx ? j.ux
                                                          : j.uxx;
        const double mu = !sol.mean ? 0.0
                          : f.kind == FunctionalKind::Eval ? sol.mean->jet(f.point).u
                          : f.kind == FunctionalKind::Dt   ? sol.mean->jet(f.point).ut
                          : f.kind == FunctionalKind::Dx   ? sol.mean->jet(f.point).ux
                                                           : sol.mean->jet(f.point).uxx;
        const auto ii = static_cast<Eigen::Index>(i);
        EXPECT_NEAR(got - mu, sol.latent(ii) - nug(ii) * sol.coefficients(ii), 1e-8 * scale);
    }
}

}  // namespace

TEST(Constraints, BoundaryTargetsFromProfile) {
    const CollocationSet cs = sample_collocation(Domain{}, 10, 40, 3);
    const ConstraintSet c = make_constraints(cs, burgers(1.0, 0.02));
    ASSERT_EQ(c.boundary_values.size(), 40u);
    for (std::size_t i = 0; i < c.boundary.size(); ++i) {
        const Point2 p = c.boundary[i];
        const double want = std::abs(p.x) == 1.0 ? 0.0 : -std::sin(std::numbers::pi * p.x);
        EXPECT_NEAR(c.boundary_values[i], want, 1e-15);
    }
    ConstraintSet empty;
    empty.use_pde = false;
    EXPECT_THROW(empty.validate(), std::invalid_argument);
}

TEST(LinearSolve, ZeroTargetsGiveZeroSolution) {
    const BurgersCoefficients c = linearized_burgers(1.0, 0.02);
    ConstraintSet cons = small_constraints(c, 1, 50, 20);
    std::fill(cons.boundary_values.begin(), cons.boundary_values.end(), 0.0);
    const GPSolution sol = solve_linear(kSmooth, c, cons);
    EXPECT_EQ(sol.coefficients.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(evaluate_at(sol, {0.4, 0.3}), 0.0);
}

TEST(LinearSolve, ConstraintsHoldAndKktResidualSmall) {
    const BurgersCoefficients c = linearized_burgers(1.0, 0.02);
    const ConstraintSet cons = small_constraints(c, 2);
    const GPSolution sol = solve_linear(kSmooth, c, cons);
    EXPECT_TRUE(sol.linear);
    EXPECT_EQ(sol.trace.iterations, 1u);
    double ymax = 1.0;
    for (double v : cons.boundary_values) {
        ymax = std::max(ymax, std::abs(v));
    }
    EXPECT_LE(sol.constraint_residual, 1e-8 * ymax);
    EXPECT_LE(sol.pde_residual, 1e-8 * ymax);
    expect_kkt(sol);
    // interior latent rows satisfy the linear operator
    for (std::size_t i = 0; i < cons.interior.size(); ++i) {
        const auto b = static_cast<Eigen::Index>(4 * i);
        const double x = cons.interior[i].x;
        EXPECT_NEAR(sol.latent(b + 1) + initial_profile(x) * sol.latent(b + 2) - 0.02 * sol.latent(b + 3), 0.0,
                    1e-8 * ymax);
    }
    EXPECT_THROW(solve_linear(kSmooth, burgers(1.0, 0.02), cons), std::invalid_argument);
}

TEST(LinearSolve, PureInterpolationIsGpPosteriorMean) {
    ConstraintSet cons;
    cons.use_pde = false;
    cons.use_boundary = false;
    const Grid g = uniform_grid(Domain{}, 5, 6);
    cons.data = g.points();
    for (const Point2& p : cons.data) {
        cons.data_values.push_back(std::cos(p.x + 2 * p.t));
    }
    const GPSolution sol = solve_linear(kSmooth, linearized_burgers(1.0, 0.02), cons);
    const Eigen::MatrixXd k = kSmooth.gram_values(cons.data);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(cons.data_values.data(),
                                                                static_cast<Eigen::Index>(cons.data_values.size()));
    const Eigen::VectorXd w = k.ldlt().solve(y);
    for (Point2 p : {Point2{0.33, 0.1}, Point2{0.9, -0.7}, Point2{0.05, 0.95}}) {
        const Eigen::VectorXd kp = kSmooth.cross_values({p}, cons.data).row(0).transpose();
        EXPECT_NEAR(evaluate_at(sol, p), kp.dot(w), 1e-5);
    }
}

TEST(Evaluation, MatchesNaiveSummation) {
    const BurgersCoefficients c = linearized_burgers(0.9, 0.025);
    const GPSolution sol = solve_linear(kSmooth, c, small_constraints(c, 3, 60, 30));
    const Grid g = uniform_grid(Domain{}, 4, 5);
    const Field f = evaluate(sol, g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double want = naive_value(sol, g.point(i));
        EXPECT_NEAR(f.values[i], want, 1e-10 * std::max(1.0, std::abs(want)));
        EXPECT_NEAR(evaluate_at(sol, g.point(i)), want, 1e-10 * std::max(1.0, std::abs(want)));
    }
    const Point2 p{0.5, 0.2};
    const double h = 1e-4;
    const Jet2 j = evaluate_jet(sol, p);
    EXPECT_NEAR(j.ux, (evaluate_at(sol, {p.t, p.x + h}) - evaluate_at(sol, {p.t, p.x - h})) / (2 * h), 1e-5);
    EXPECT_NEAR(j.ut, (evaluate_at(sol, {p.t + h, p.x}) - evaluate_at(sol, {p.t - h, p.x})) / (2 * h), 1e-5);
}

TEST(NonlinearSolve, ZeroAdvectionConvergesInOneIteration) {
    const BurgersCoefficients c = burgers(0.0, 0.02);
    const GPSolution sol = solve_nonlinear_gn(kSmooth, c, small_constraints(c, 4));
    EXPECT_TRUE(sol.trace.converged);
    EXPECT_EQ(sol.trace.iterations, 1u);
}

TEST(NonlinearSolve, ConvergedRunsSatisfyThePde) {
    const BurgersCoefficients c = burgers(1.0, 0.02);
    const ConstraintSet cons = small_constraints(c, 5, 300, 80);
    const GPSolution sol = solve_nonlinear_gn(KernelModel::gaussian(1.0, 0.3, 0.08), c, cons);
    ASSERT_TRUE(sol.trace.converged);
    EXPECT_FALSE(sol.linear);
    EXPECT_GT(sol.trace.iterations, 1u);
    EXPECT_LE(sol.pde_residual, 1e-6);
    for (std::size_t i = 0; i < cons.interior.size(); ++i) {
        const auto b = static_cast<Eigen::Index>(4 * i);
        const double u = sol.latent(b), ut = sol.latent(b + 1), ux = sol.latent(b + 2), uxx = sol.latent(b + 3);
        EXPECT_NEAR(ut + u * ux - 0.02 * uxx, 0.0, 1e-6);
    }
    expect_kkt(sol);
}

TEST(NonlinearSolve, DampedVariantAlsoConverges) {
    const BurgersCoefficients c = burgers(1.0, 0.02);
    GnConfig gn;
    gn.damping = true;
    gn.max_iters = 60;
    const GPSolution sol = solve_nonlinear_gn(kSmooth, c, small_constraints(c, 5, 300, 80), gn);
    EXPECT_TRUE(sol.trace.converged);
    EXPECT_LE(sol.pde_residual, 1e-6);
}

TEST(NonlinearSolve, MaternBelowC4IsRejected) {
    const BurgersCoefficients c = burgers(1.0, 0.02);
    const KernelModel m = KernelModel::matern(KernelFamily::Matern32, 1.0, 0.3, 0.2);
    EXPECT_THROW(solve_nonlinear_gn(m, c, small_constraints(c, 6, 20, 10)), CapabilityError);
}

TEST(ShiftedSolve, ExactMeanLeavesNothingToSolve) {
    const BurgersCoefficients c = burgers(1.0, 0.02);
    const auto mean = std::make_shared<ExactMeanShift>(ColeHopfSeries(1.0, 0.02));
    const Grid hf = uniform_grid(Domain{}, 10, 10);
    const Field obs = reference_field(c, hf);
    const ConstraintSet cons = make_constraints(sample_collocation(Domain{}, 300, 80, 7), c, &obs);
    for (const KernelModel& k : {kSmooth, KernelModel::gibbs(1.0, 0.2, 0.1, 0.15, 0.05)}) {
        const GPSolution sol = solve_with_shift(k, c, cons, mean);
        EXPECT_LT(sol.coefficients.cwiseAbs().maxCoeff(), 1e-5);
        const Grid eval = uniform_grid(Domain{}, 21, 41);
        const Field u = evaluate(sol, eval);
        const Field ref = reference_field(c, eval);
        for (std::size_t i = 0; i < eval.size(); ++i) {
            EXPECT_NEAR(u.values[i], ref.values[i], 1e-4);
        }
    }
    EXPECT_THROW(solve_with_shift(kSmooth, c, cons, nullptr), std::invalid_argument);
}
