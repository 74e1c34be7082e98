#include "mfgp/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SVD>

namespace mfgp {

std::string to_string(DistanceMetric m) {
    switch (m) {
        case DistanceMetric::Frobenius: return "frobenius";
        case DistanceMetric::Spectral: return "spectral";
        case DistanceMetric::Procrustes: return "procrustes";
    }
    return "unknown";
}

DistanceMetric metric_from_string(const std::string& s) {
    for (auto m : {DistanceMetric::Frobenius, DistanceMetric::Spectral, DistanceMetric::Procrustes}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw std::invalid_argument("unknown distance metric '" + s + "'");
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& k) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (k + k.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    const double tol = 1e-10 * std::max(std::abs(k.trace()), 1e-300);
    if (ev.size() > 0 && ev.minCoeff() < -tol) {
        throw std::invalid_argument("psd_sqrt: matrix is indefinite (min eigenvalue " +
                                    std::to_string(ev.minCoeff()) + ")");
    }
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

double procrustes_from_roots(const Eigen::MatrixXd& r1, double tr1, const Eigen::MatrixXd& r2, double tr2) {
    const Eigen::VectorXd sv = Eigen::BDCSVD<Eigen::MatrixXd>(r1 * r2.transpose()).singularValues();
    return std::sqrt(std::max(0.0, tr1 + tr2 - 2.0 * sv.sum()));
}

}  // namespace

double matrix_distance(const Eigen::MatrixXd& k1, const Eigen::MatrixXd& k2, DistanceMetric metric) {
    if (k1.rows() != k2.rows() || k1.cols() != k2.cols()) {
        throw std::invalid_argument("matrix_distance: dimension mismatch");
    }
    switch (metric) {
        case DistanceMetric::Frobenius:
            return (k1 - k2).norm();
        case DistanceMetric::Spectral: {
            if (k1.size() == 0) {
                return 0.0;
            }
            const Eigen::MatrixXd d = k1 - k2;
            if ((d - d.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * std::max(d.cwiseAbs().maxCoeff(), 1e-300)) {
                return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(d, Eigen::EigenvaluesOnly)
                    .eigenvalues()
                    .cwiseAbs()
                    .maxCoeff();
            }
            return Eigen::BDCSVD<Eigen::MatrixXd>(d).singularValues()(0);
        }
        case DistanceMetric::Procrustes:
            if (k1.rows() != k1.cols()) {
                throw std::invalid_argument("matrix_distance: Procrustes needs square matrices");
            }
            return procrustes_from_roots(psd_sqrt(k1), k1.trace(), psd_sqrt(k2), k2.trace());
    }
    return 0.0;
}

KernelModel KernelSpace::decode(const std::vector<double>& s) const {
    switch (family) {
        case KernelFamily::Gibbs:
            return KernelModel::gibbs(s[0], s[1], s[2] - s[1], 0.5 * (s[3] + s[4]), 0.5 * (s[4] - s[3]));
        case KernelFamily::NSAmplitudeGibbs:
            return KernelModel::ns_amplitude_gibbs({s[0], s[1], s[2], s[3]}, s[4], s[5] - s[4], 0.5 * (s[6] + s[7]),
                                                   0.5 * (s[7] - s[6]));
        default:
            return {family, s};
    }
}

std::vector<double> KernelSpace::encode(const KernelModel& k) const {
    if (k.family() != family) {
        throw std::invalid_argument("KernelSpace::encode: family mismatch");
    }
    const auto& p = k.params();
    switch (family) {
        case KernelFamily::Gibbs:
            return {p[0], p[1], p[1] + p[2], p[3] - p[4], p[3] + p[4]};
        case KernelFamily::NSAmplitudeGibbs:
            return {p[0], p[1], p[2], p[3], p[4], p[4] + p[5], p[6] - p[7], p[6] + p[7]};
        default:
            return p;
    }
}

std::vector<std::string> KernelSpace::names() const {
    switch (family) {
        case KernelFamily::Gibbs:
            return {"sigma2", "l_t(0)", "l_t(1)", "l_x(-1)", "l_x(1)"};
        case KernelFamily::NSAmplitudeGibbs:
            return {"beta0", "beta1", "beta2", "beta3", "l_t(0)", "l_t(1)", "l_x(-1)", "l_x(1)"};
        default:
            return decode(default_space(family).start).param_names();
    }
}

KernelSpace default_space(KernelFamily family, double variance) {
    const ParamBound var{1e-6, 10.0, true};
    const ParamBound len{1e-3, 3.0, true};
    const ParamBound b0{-7.0, 2.0, false};
    const ParamBound beta{-5.0, 5.0, false};
    const double v0 = std::clamp(variance, 1e-5, 5.0);
    const double l0 = 0.3;
    KernelSpace s;
    s.family = family;
    switch (family) {
        case KernelFamily::Gaussian:
        case KernelFamily::Matern32:
        case KernelFamily::Matern52:
        case KernelFamily::Matern72:
            s.bounds = {var, len, len};
            s.start = {v0, l0, l0};
            break;
        case KernelFamily::NSAmplitude:
            s.bounds = {b0, beta, beta, beta, len, len};
            s.start = {0.5 * std::log(v0), 0.0, 0.0, 0.0, l0, l0};
            break;
        case KernelFamily::Gibbs:
            s.bounds = {var, len, len, len, len};
            s.start = {v0, l0, l0, l0, l0};
            break;
        case KernelFamily::NSAmplitudeGibbs:
            s.bounds = {b0, beta, beta, beta, len, len, len, len};
            s.start = {0.5 * std::log(v0), 0.0, 0.0, 0.0, l0, l0, l0, l0};
            break;
        default:
            throw std::invalid_argument("default_space: composite kernels have no search space");
    }
    return s;
}

namespace {

double min_spacing(const std::vector<double>& nodes) {
    double h = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        h = std::min(h, nodes[i] - nodes[i - 1]);
    }
    return h;
}

}  // namespace

KernelSpace resolution_limited(KernelSpace space, const Grid& grid, double spacing_factor) {
    std::vector<std::size_t> t_idx, x_idx;
    switch (space.family) {
        case KernelFamily::Gaussian:
        case KernelFamily::Matern32:
        case KernelFamily::Matern52:
        case KernelFamily::Matern72:
            t_idx = {1};
            x_idx = {2};
            break;
        case KernelFamily::NSAmplitude:
            t_idx = {4};
            x_idx = {5};
            break;
        case KernelFamily::Gibbs:
            t_idx = {1, 2};
            x_idx = {3, 4};
            break;
        case KernelFamily::NSAmplitudeGibbs:
            t_idx = {4, 5};
            x_idx = {6, 7};
            break;
        default:
            throw std::invalid_argument("resolution_limited: composite kernels have no search space");
    }
    auto raise = [&](const std::vector<std::size_t>& idx, const std::vector<double>& nodes) {
        if (nodes.size() < 2 || spacing_factor <= 0.0) {
            return;
        }
        const double floor = spacing_factor * min_spacing(nodes);
        for (std::size_t i : idx) {
            ParamBound& b = space.bounds.at(i);
            b.lo = std::min(std::max(b.lo, floor), b.hi);
            space.start.at(i) = std::clamp(space.start.at(i), b.lo, b.hi);
        }
    };
    raise(t_idx, grid.t_nodes());
    raise(x_idx, grid.x_nodes());
    return space;
}

FitResult fit_kernel(const KernelSpace& space, const std::vector<Point2>& points, const Eigen::MatrixXd& k_target,
                     DistanceMetric metric, const OptimConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(points.size());
    if (k_target.rows() != n || k_target.cols() != n) {
        throw std::invalid_argument("fit_kernel: target matrix does not match the point set");
    }
    if ((k_target - k_target.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, k_target.cwiseAbs().maxCoeff())) {
        throw std::invalid_argument("fit_kernel: target matrix is not symmetric");
    }
    Eigen::MatrixXd target_root;
    double target_trace = 0.0;
    if (metric == DistanceMetric::Procrustes) {
        target_root = psd_sqrt(k_target);
        target_trace = k_target.trace();
    }
    auto objective = [&](const std::vector<double>& s) {
        const Eigen::MatrixXd g = space.decode(s).gram_values(points);
        if (metric == DistanceMetric::Procrustes) {
            return procrustes_from_roots(psd_sqrt(g), g.trace(), target_root, target_trace);
        }
        return matrix_distance(g, k_target, metric);
    };
    const OptimResult r = minimize_box(objective, space.start, space.bounds, cfg);
    FitResult out;
    out.kernel = space.decode(r.x);
    out.metric = metric;
    out.distance_value = r.value;
    out.initial_distance = r.initial_value;
    out.iterations = r.iterations;
    out.evaluations = r.evaluations;
    out.converged = r.converged;
    return out;
}

}  // namespace mfgp
