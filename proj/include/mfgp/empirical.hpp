#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "mfgp/lowfi.hpp"

namespace mfgp {

struct EmpiricalMoments {
    Grid grid;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    std::size_t n_mc = 0;
};

/// Column means of the sample matrix.
Eigen::VectorXd empirical_mean(const SampleEnsemble& ens);

/// Unbiased sample covariance, divisor n_mc - 1.
Eigen::MatrixXd empirical_covariance(const SampleEnsemble& ens);

EmpiricalMoments empirical_moments(const SampleEnsemble& ens);

}  // namespace mfgp
