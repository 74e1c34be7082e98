#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/fitting.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/optim.hpp"
#include "mfgp/reference.hpp"

namespace mfgp {

/// Smooth function with the derivatives the Burgers operator needs; used to shift the solver.
class MeanShift {
  public:
    virtual ~MeanShift() = default;
    [[nodiscard]] virtual Jet2 jet(const Point2& p) const = 0;
    [[nodiscard]] virtual std::string describe() const = 0;
};

/// GPR predictor k(x, anchors) (K + lambda I)^{-1} values.
struct MeanModel {
    KernelModel kernel;
    double lambda = 1e-10;
    std::vector<Point2> anchors;
    Eigen::VectorXd weights;
    double loglik = 0.0;
    std::string anchor_set = "hf";
};

/// Eq. value -1/2 m^T K^{-1} m - 1/2 log|K| - n/2 log 2 pi with K = k(anchors, anchors) + lambda I.
double mean_gpr_loglik(const KernelModel& kernel, double lambda, const std::vector<Point2>& anchors,
                       const Eigen::VectorXd& values);

MeanModel make_mean(const KernelModel& kernel, double lambda, const std::vector<Point2>& anchors,
                    const Eigen::VectorXd& values);

struct MeanFitConfig {
    OptimConfig opt;
    ParamBound lambda{1e-10, 1e-1, true};
    // lower lengthscale bounds per axis
    double min_theta_t = 1e-3;
    double min_theta_x = 1e-3;
    std::string anchor_set = "hf";
};

/// Maximum likelihood over (sigma2, theta_t, theta_x, lambda) for an anisotropic Gaussian kernel.
MeanModel fit_mean(const Eigen::VectorXd& values, const std::vector<Point2>& anchors, const MeanFitConfig& cfg = {});

double eval_mean(const MeanModel& m, const Point2& p);
double eval_mean_deriv(const MeanModel& m, const Point2& p, FunctionalKind order);
Jet2 eval_mean_jet(const MeanModel& m, const Point2& p);

class GprMeanShift final : public MeanShift {
  public:
    explicit GprMeanShift(MeanModel m) : model_(std::move(m)) {}
    [[nodiscard]] Jet2 jet(const Point2& p) const override { return eval_mean_jet(model_, p); }
    [[nodiscard]] std::string describe() const override { return "gpr_mean(" + model_.anchor_set + ")"; }
    [[nodiscard]] const MeanModel& model() const { return model_; }

  private:
    MeanModel model_;
};

class ExactMeanShift final : public MeanShift {
  public:
    explicit ExactMeanShift(ColeHopfSeries s) : series_(std::move(s)) {}
    [[nodiscard]] Jet2 jet(const Point2& p) const override { return series_.eval(p.t, p.x); }
    [[nodiscard]] std::string describe() const override { return "cole_hopf_series"; }

  private:
    ColeHopfSeries series_;
};

/// Arbitrary closed-form mean (tests, manufactured solutions).
class FunctionMeanShift final : public MeanShift {
  public:
    FunctionMeanShift(std::function<Jet2(const Point2&)> f, std::string name)
        : f_(std::move(f)), name_(std::move(name)) {}
    [[nodiscard]] Jet2 jet(const Point2& p) const override { return f_(p); }
    [[nodiscard]] std::string describe() const override { return name_; }

  private:
    std::function<Jet2(const Point2&)> f_;
    std::string name_;
};

struct ResidualKernelFit {
    KernelModel kernel;
    double loglik = 0.0;
    double nugget = 0.0;
    std::vector<std::string> at_lower_bound;  // parameter names pinned near their lower bound
};

/// Maximum likelihood kernel for zero-mean residuals r ~ N(0, K + n I), n = 1e-8 trace(K)/N.
ResidualKernelFit residual_kernel_mle(const Eigen::VectorXd& residuals, const std::vector<Point2>& anchors,
                                      const KernelSpace& space, const OptimConfig& opt);

double residual_loglik(const KernelModel& k, const Eigen::VectorXd& residuals, const std::vector<Point2>& anchors);

}  // namespace mfgp
