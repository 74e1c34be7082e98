#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/empirical.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/optim.hpp"

namespace mfgp {

/// Low-fidelity moments seen at the high-fidelity nodes.
struct HfRestriction {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    bool exact = true;  // false when X_H is not a node subset of X_L and bilinear weights were used
    std::string warning;
};

HfRestriction restrict_to_hf(const EmpiricalMoments& moments, const Grid& hf_grid);

struct CokrigingParams {
    double rho = 1.0;
    double mu_d = 0.0;
    double sigma_d = 0.1;
    double ell_t = 0.3;
    double ell_x = 0.3;
};

struct LoglikValue {
    double value = 0.0;
    double nugget = 0.0;  // absolute diagonal shift that made C_H factorizable
};

/// Gaussian log-likelihood of y_H under N(rho mu_L + mu_d, rho^2 K_L + K_d).
LoglikValue cokriging_loglik_detail(const CokrigingParams& p, const Eigen::VectorXd& mu_l_on_h,
                                    const Eigen::VectorXd& y_h, const Eigen::MatrixXd& k_l_on_h,
                                    const std::vector<Point2>& hf_points);

double cokriging_loglik(double rho, double mu_d, double sigma_d, double ell_t, double ell_x,
                        const Eigen::VectorXd& mu_l_on_h, const Eigen::VectorXd& y_h, const Eigen::MatrixXd& k_l_on_h,
                        const std::vector<Point2>& hf_points);

struct CokrigingConfig {
    OptimConfig opt;
    ParamBound rho{-5.0, 5.0, false};
    ParamBound sigma_d{1e-6, 10.0, true};
    ParamBound ell{1e-3, 3.0, true};
    // per-axis lower bound on the discrepancy lengthscales, in units of the HF node spacing
    double ell_floor_spacing = 0.5;
    CokrigingParams start;
};

struct CokrigingModel {
    CokrigingParams params;
    double loglik = 0.0;
    double loglik_at_start = 0.0;
    double nugget = 0.0;
    bool identifiable = true;
    bool restriction_exact = true;
    std::vector<std::string> warnings;
    std::optional<KernelModel> k_opt;

    [[nodiscard]] KernelModel discrepancy_kernel() const;
};

CokrigingModel fit_cokriging(const EmpiricalMoments& moments, const Field& y_h, const CokrigingConfig& cfg = {});

/// rho^2 k_opt + k_d.
KernelModel compose_hf_kernel(const CokrigingModel& model);

}  // namespace mfgp
