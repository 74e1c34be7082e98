#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/kernels.hpp"
#include "mfgp/optim.hpp"

namespace mfgp {

enum class DistanceMetric { Frobenius, Spectral, Procrustes };

std::string to_string(DistanceMetric m);
DistanceMetric metric_from_string(const std::string& s);

/// Symmetric square root U D^{1/2} U^T; eigenvalues above -1e-10 trace are clipped to zero,
/// anything more negative throws std::invalid_argument.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& k);

double matrix_distance(const Eigen::MatrixXd& k1, const Eigen::MatrixXd& k2, DistanceMetric metric);

/// Search space for one kernel family: bounds and default start in search coordinates.
///
/// Search coordinates equal the kernel parameters except for the Gibbs lengthscales, which are
/// searched through their endpoint values l_t(0), l_t(1), l_x(-1), l_x(1) so that positivity over
/// the domain holds for every point of the box.
struct KernelSpace {
    KernelFamily family = KernelFamily::Gaussian;
    std::vector<ParamBound> bounds;
    std::vector<double> start;

    [[nodiscard]] KernelModel decode(const std::vector<double>& s) const;
    [[nodiscard]] std::vector<double> encode(const KernelModel& k) const;
    [[nodiscard]] std::vector<std::string> names() const;
};

/// Default box: sigma2 in [1e-6, 10], lengthscales in [1e-3, 3] (log scale), amplitude
/// coefficients beta1..beta3 in [-5, 5], beta0 in [-7, 2]. The start uses `variance` for sigma2.
KernelSpace default_space(KernelFamily family, double variance = 1.0);

/// Raises lengthscale lower bounds to `spacing_factor` times the grid spacing on each axis.
KernelSpace resolution_limited(KernelSpace space, const Grid& grid, double spacing_factor = 0.5);

struct FitResult {
    KernelModel kernel;
    DistanceMetric metric = DistanceMetric::Frobenius;
    double distance_value = 0.0;
    double initial_distance = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    bool converged = false;
};

FitResult fit_kernel(const KernelSpace& space, const std::vector<Point2>& points, const Eigen::MatrixXd& k_target,
                     DistanceMetric metric, const OptimConfig& cfg);

}  // namespace mfgp
