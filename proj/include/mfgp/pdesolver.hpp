#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/kernels.hpp"
#include "mfgp/lowfi.hpp"
#include "mfgp/meanfield.hpp"
#include "mfgp/problem.hpp"

namespace mfgp {

struct ConstraintSet {
    std::vector<Point2> interior;
    std::vector<Point2> boundary;
    std::vector<double> boundary_values;
    std::vector<Point2> data;
    std::vector<double> data_values;
    bool use_pde = true;
    bool use_boundary = true;
    bool use_data = true;
    /// Right-hand side of the PDE at interior points; zero when empty.
    std::function<double(const Point2&)> forcing;

    void validate() const;
    [[nodiscard]] std::size_t active_rows() const;
};

/// Interior and boundary points from `colloc`, boundary targets from the initial profile (t = 0) and
/// the homogeneous Dirichlet condition (x = +-1); optional observations become data constraints.
ConstraintSet make_constraints(const CollocationSet& colloc, const BurgersCoefficients& coeffs,
                               const Field* observations = nullptr);

struct NuggetConfig {
    double eta = 1e-8;
    double escalation = 100.0;
    int max_escalations = 4;
};

/// Stops when the relative latent step drops below step_tol or when the interior residual, relative
/// to the magnitude of the operator terms, drops below residual_tol.
struct GnConfig {
    std::size_t max_iters = 30;
    double step_tol = 1e-9;
    double residual_tol = 1e-8;
    bool damping = false;
    // first iterate from the problem with u u_x replaced by u0(x) u_x; unused under a mean shift
    bool warm_start = true;
};

struct GnTrace {
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<double> step_norms;
    std::vector<double> residuals;
};

/// Weighted combination of (Eval, Dt, Dx, Dxx) at one point.
struct OperatorFunctional {
    Point2 point;
    std::array<double, 4> weights{};
};

struct GPSolution {
    KernelModel kernel;
    std::vector<Functional> functionals;  // interior (Eval, Dt, Dx, Dxx) per point, then boundary, then data
    Eigen::VectorXd coefficients;         // representer weights on `functionals`
    Eigen::VectorXd latent;               // values of the functionals applied to the solution minus the mean
    std::shared_ptr<const MeanShift> mean;
    double eta = 0.0;
    std::array<double, 4> block_nugget{};
    GnTrace trace;
    double constraint_residual = 0.0;  // max |A z - b| of the final solve
    double pde_residual = 0.0;         // max interior residual of the full (nonlinear) operator
    bool linear = true;

    /// Representers grouped by point, for evaluation.
    [[nodiscard]] std::vector<OperatorFunctional> representers() const;
};

/// Minimum-norm solution of the linearized operator u_t + alpha u0 u_x - nu u_xx = f.
GPSolution solve_linear(const KernelModel& kernel, const BurgersCoefficients& coeffs, const ConstraintSet& cons,
                        const NuggetConfig& nugget = {}, std::shared_ptr<const MeanShift> mean = nullptr);

/// Gauss-Newton on the latent functional values for u_t + alpha u u_x - nu u_xx = f.
/// Linearized coefficients are solved in one step.
GPSolution solve_nonlinear_gn(const KernelModel& kernel, const BurgersCoefficients& coeffs, const ConstraintSet& cons,
                              const GnConfig& gn = {}, const NuggetConfig& nugget = {},
                              std::shared_ptr<const MeanShift> mean = nullptr);

/// u = h + mean, with h from the shifted problem.
GPSolution solve_with_shift(const KernelModel& kernel, const BurgersCoefficients& coeffs, const ConstraintSet& cons,
                            std::shared_ptr<const MeanShift> mean, const GnConfig& gn = {},
                            const NuggetConfig& nugget = {});

double evaluate_at(const GPSolution& sol, const Point2& p);
Jet2 evaluate_jet(const GPSolution& sol, const Point2& p);
Field evaluate(const GPSolution& sol, const Grid& pts);

}  // namespace mfgp
