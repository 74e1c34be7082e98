#include "mfgp/meanfield.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mfgp/errors.hpp"

namespace mfgp {

namespace {

struct Factored {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double logdet = 0.0;
};

Factored factor(const Eigen::MatrixXd& k, const char* who) {
    Factored f;
    f.llt.compute(k);
    if (f.llt.info() != Eigen::Success || !(f.llt.matrixLLT().diagonal().minCoeff() > 0.0)) {
        std::ostringstream msg;
        msg << who << ": Gram matrix not positive definite (n=" << k.rows() << ")";
        throw NumericalError(msg.str());
    }
    f.logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
    return f;
}

double gaussian_loglik(const Factored& f, const Eigen::VectorXd& y) {
    const Eigen::VectorXd w = f.llt.matrixL().solve(y);
    return -0.5 * w.squaredNorm() - 0.5 * f.logdet - 0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

double mean_gpr_loglik(const KernelModel& kernel, double lambda, const std::vector<Point2>& anchors,
                       const Eigen::VectorXd& values) {
    if (lambda < 0.0) {
        throw std::invalid_argument("mean_gpr_loglik: lambda must be nonnegative");
    }
    if (values.size() != static_cast<Eigen::Index>(anchors.size())) {
        throw std::invalid_argument("mean_gpr_loglik: size mismatch");
    }
    Eigen::MatrixXd k = kernel.gram_values(anchors);
    k.diagonal().array() += lambda;
    return gaussian_loglik(factor(k, "mean_gpr_loglik"), values);
}

MeanModel make_mean(const KernelModel& kernel, double lambda, const std::vector<Point2>& anchors,
                    const Eigen::VectorXd& values) {
    if (anchors.empty() || values.size() != static_cast<Eigen::Index>(anchors.size())) {
        throw std::invalid_argument("make_mean: need matching nonempty anchors and values");
    }
    Eigen::MatrixXd k = kernel.gram_values(anchors);
    k.diagonal().array() += lambda;
    const Factored f = factor(k, "make_mean");
    MeanModel m;
    m.kernel = kernel;
    m.lambda = lambda;
    m.anchors = anchors;
    m.weights = f.llt.solve(values);
    m.loglik = gaussian_loglik(f, values);
    return m;
}

MeanModel fit_mean(const Eigen::VectorXd& values, const std::vector<Point2>& anchors, const MeanFitConfig& cfg) {
    if (anchors.empty() || values.size() != static_cast<Eigen::Index>(anchors.size())) {
        throw std::invalid_argument("fit_mean: need matching nonempty anchors and values");
    }
    const double var = std::max(values.squaredNorm() / static_cast<double>(values.size()), 1e-4);
    const ParamBound var_b{1e-6, 10.0, true};
    const ParamBound len_t{std::max(cfg.min_theta_t, 1e-3), 3.0, true};
    const ParamBound len_x{std::max(cfg.min_theta_x, 1e-3), 3.0, true};
    if (!(len_t.lo < len_t.hi) || !(len_x.lo < len_x.hi)) {
        throw std::invalid_argument("fit_mean: lengthscale lower bound above 3");
    }
    const std::vector<ParamBound> bounds{var_b, len_t, len_x, cfg.lambda};
    const std::vector<double> x0{std::min(var, 5.0), std::max(0.3, len_t.lo), std::max(0.3, len_x.lo),
                                 std::max(cfg.lambda.lo, 1e-6)};
    auto objective = [&](const std::vector<double>& x) {
        return -mean_gpr_loglik(KernelModel::gaussian(x[0], x[1], x[2]), x[3], anchors, values);
    };
    const OptimResult r = minimize_box(objective, x0, bounds, cfg.opt);
    MeanModel m = make_mean(KernelModel::gaussian(r.x[0], r.x[1], r.x[2]), r.x[3], anchors, values);
    m.anchor_set = cfg.anchor_set;
    return m;
}

double eval_mean(const MeanModel& m, const Point2& p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.anchors.size(); ++i) {
        acc += m.weights(static_cast<Eigen::Index>(i)) * m.kernel.eval(p, m.anchors[i]);
    }
    return acc;
}

double eval_mean_deriv(const MeanModel& m, const Point2& p, FunctionalKind order) {
    const DerivOrder d = order_of(order);
    DerivTable tab;
    double acc = 0.0;
    for (std::size_t i = 0; i < m.anchors.size(); ++i) {
        m.kernel.table(p, m.anchors[i], tab, {d.t, d.x, 0, 0});
        acc += m.weights(static_cast<Eigen::Index>(i)) * tab.at(d.t, d.x, 0, 0);
    }
    return acc;
}

Jet2 eval_mean_jet(const MeanModel& m, const Point2& p) {
    DerivTable tab;
    Jet2 j;
    for (std::size_t i = 0; i < m.anchors.size(); ++i) {
        m.kernel.table(p, m.anchors[i], tab, {1, 2, 0, 0});
        const double w = m.weights(static_cast<Eigen::Index>(i));
        j.u += w * tab.at(0, 0, 0, 0);
        j.ut += w * tab.at(1, 0, 0, 0);
        j.ux += w * tab.at(0, 1, 0, 0);
        j.uxx += w * tab.at(0, 2, 0, 0);
    }
    return j;
}

double residual_loglik(const KernelModel& k, const Eigen::VectorXd& residuals, const std::vector<Point2>& anchors) {
    Eigen::MatrixXd g = k.gram_values(anchors);
    g.diagonal().array() += 1e-8 * g.trace() / static_cast<double>(g.rows());
    return gaussian_loglik(factor(g, "residual_loglik"), residuals);
}

ResidualKernelFit residual_kernel_mle(const Eigen::VectorXd& residuals, const std::vector<Point2>& anchors,
                                      const KernelSpace& space, const OptimConfig& opt) {
    if (residuals.size() < 2 || residuals.size() != static_cast<Eigen::Index>(anchors.size())) {
        throw std::invalid_argument("residual_kernel_mle: need at least two residuals matching the anchors");
    }
    auto objective = [&](const std::vector<double>& s) { return -residual_loglik(space.decode(s), residuals, anchors); };
    const OptimResult r = minimize_box(objective, space.start, space.bounds, opt);
    ResidualKernelFit out;
    out.kernel = space.decode(r.x);
    out.loglik = -r.value;
    const Eigen::MatrixXd g = out.kernel.gram_values(anchors);
    out.nugget = 1e-8 * g.trace() / static_cast<double>(g.rows());
    const auto names = space.names();
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        const ParamBound& b = space.bounds[i];
        if (b.log_scale && r.x[i] <= b.lo * 10.0) {
            out.at_lower_bound.push_back(names[i]);
        }
    }
    // white residuals: correlation between distinct anchors has vanished, lengthscales are unidentified
    const Eigen::MatrixXd offdiag = g - Eigen::MatrixXd(g.diagonal().asDiagonal());
    if (g.trace() > 0.0 && offdiag.cwiseAbs().maxCoeff() < 1e-6 * g.diagonal().maxCoeff() && out.at_lower_bound.empty()) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i].rfind("theta", 0) == 0 || names[i].rfind("l_", 0) == 0) {
                out.at_lower_bound.push_back(names[i]);
            }
        }
    }
    return out;
}

}  // namespace mfgp
