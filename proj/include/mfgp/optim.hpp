#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mfgp {

/// Box for one parameter; log_scale searches log(x) uniformly between log(lo) and log(hi).
struct ParamBound {
    double lo = 0.0;
    double hi = 1.0;
    bool log_scale = false;
};

struct OptimConfig {
    std::size_t n_starts = 8;  // Latin-hypercube starts in addition to the supplied initial point
    std::size_t max_iters = 1500;
    double size_tol = 1e-7;
    double initial_step = 0.4;
    std::uint64_t seed = 0;
};

struct OptimResult {
    std::vector<double> x;
    double value = 0.0;
    double initial_value = 0.0;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    std::size_t failed_starts = 0;
    bool converged = false;
};

/// Multi-start simplex minimization over a box. Parameters are mapped to an unconstrained space
/// through a logistic transform (of log x for log-scale entries). Non-finite or throwing objective
/// values count as +huge. Throws FitError if no start yields a finite objective.
OptimResult minimize_box(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x0,
                         const std::vector<ParamBound>& bounds, const OptimConfig& cfg);

/// Latin-hypercube sample of n points in the box (log-uniform on log-scale entries).
std::vector<std::vector<double>> latin_hypercube(const std::vector<ParamBound>& bounds, std::size_t n,
                                                 std::uint64_t seed);

}  // namespace mfgp
