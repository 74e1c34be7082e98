#include "mfgp/empirical.hpp"

#include <stdexcept>

namespace mfgp {

Eigen::VectorXd empirical_mean(const SampleEnsemble& ens) {
    if (ens.samples.rows() < 1) {
        throw std::invalid_argument("empirical_mean: empty ensemble");
    }
    return ens.samples.colwise().mean().transpose();
}

Eigen::MatrixXd empirical_covariance(const SampleEnsemble& ens) {
    if (ens.samples.rows() < 2) {
        throw std::invalid_argument("empirical_covariance: need at least two samples");
    }
    const Eigen::RowVectorXd mu = ens.samples.colwise().mean();
    const Eigen::MatrixXd centered = ens.samples.rowwise() - mu;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(centered.cols(), centered.cols());
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    return cov / static_cast<double>(ens.samples.rows() - 1);
}

EmpiricalMoments empirical_moments(const SampleEnsemble& ens) {
    return {ens.grid, empirical_mean(ens), empirical_covariance(ens), ens.n_mc()};
}

}  // namespace mfgp
