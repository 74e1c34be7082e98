#include "mfgp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "mfgp/errors.hpp"

namespace mfgp {

namespace {

constexpr double kHuge = 1e300;

double to_unit(const ParamBound& b, double x) {
    if (b.log_scale) {
        return (std::log(x) - std::log(b.lo)) / (std::log(b.hi) - std::log(b.lo));
    }
    return (x - b.lo) / (b.hi - b.lo);
}

double from_unit(const ParamBound& b, double u) {
    if (b.log_scale) {
        return std::clamp(std::exp(std::log(b.lo) + u * (std::log(b.hi) - std::log(b.lo))), b.lo, b.hi);
    }
    return std::clamp(b.lo + u * (b.hi - b.lo), b.lo, b.hi);
}

double logistic(double y) { return 1.0 / (1.0 + std::exp(-y)); }

double logit(double u) {
    u = std::clamp(u, 1e-9, 1.0 - 1e-9);
    return std::log(u / (1.0 - u));
}

struct Problem {
    const std::function<double(const std::vector<double>&)>* f;
    const std::vector<ParamBound>* bounds;
    std::size_t evaluations = 0;

    std::vector<double> decode(const gsl_vector* y) const {
        std::vector<double> x(bounds->size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const ParamBound& b = (*bounds)[i];
            x[i] = b.lo == b.hi ? b.lo : from_unit(b, logistic(gsl_vector_get(y, i)));
        }
        return x;
    }
};

double safe_call(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x) {
    try {
        const double v = f(x);
        return std::isfinite(v) ? v : kHuge;
    } catch (const std::exception&) {
        return kHuge;
    }
}

double gsl_objective(const gsl_vector* y, void* params) {
    auto* p = static_cast<Problem*>(params);
    ++p->evaluations;
    return safe_call(*p->f, p->decode(y));
}

}  // namespace

std::vector<std::vector<double>> latin_hypercube(const std::vector<ParamBound>& bounds, std::size_t n,
                                                 std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<double>> pts(n, std::vector<double>(bounds.size()));
    std::vector<std::size_t> perm(n);
    for (std::size_t d = 0; d < bounds.size(); ++d) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (static_cast<double>(perm[i]) + unit(rng)) / static_cast<double>(n);
            pts[i][d] = from_unit(bounds[d], u);
        }
    }
    return pts;
}

OptimResult minimize_box(const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x0,
                         const std::vector<ParamBound>& bounds, const OptimConfig& cfg) {
    const std::size_t dim = bounds.size();
    if (x0.size() != dim || dim == 0) {
        throw std::invalid_argument("minimize_box: initial point and bounds differ in dimension");
    }
    for (std::size_t i = 0; i < dim; ++i) {
        const ParamBound& b = bounds[i];
        if (!(b.lo <= b.hi) || (b.log_scale && !(b.lo > 0.0))) {
            throw std::invalid_argument("minimize_box: invalid bound for parameter " + std::to_string(i));
        }
    }
    gsl_set_error_handler_off();

    std::vector<std::vector<double>> starts;
    std::vector<double> clipped(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        clipped[i] = std::clamp(x0[i], bounds[i].lo, bounds[i].hi);
    }
    starts.push_back(clipped);
    for (auto& s : latin_hypercube(bounds, cfg.n_starts, cfg.seed)) {
        starts.push_back(std::move(s));
    }

    OptimResult best;
    best.value = std::numeric_limits<double>::infinity();
    best.initial_value = safe_call(f, clipped);
    Problem prob{&f, &bounds};

    std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)> solver(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim), gsl_multimin_fminimizer_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> y(gsl_vector_alloc(dim), gsl_vector_free);
    std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)> step(gsl_vector_alloc(dim), gsl_vector_free);
    gsl_vector_set_all(step.get(), cfg.initial_step);

    gsl_multimin_function fn{&gsl_objective, dim, &prob};
    std::size_t total_iters = 0;
    bool best_converged = false;
    for (const auto& s : starts) {
        for (std::size_t i = 0; i < dim; ++i) {
            const ParamBound& b = bounds[i];
            gsl_vector_set(y.get(), i, b.lo == b.hi ? 0.0 : logit(to_unit(b, s[i])));
        }
        if (safe_call(f, s) >= kHuge) {
            ++best.failed_starts;
            continue;
        }
        gsl_multimin_fminimizer_set(solver.get(), &fn, y.get(), step.get());
        bool conv = false;
        std::size_t it = 0;
        for (; it < cfg.max_iters; ++it) {
            if (gsl_multimin_fminimizer_iterate(solver.get()) != GSL_SUCCESS) {
                break;
            }
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver.get()), cfg.size_tol) == GSL_SUCCESS) {
                conv = true;
                break;
            }
        }
        total_iters += it;
        const double val = gsl_multimin_fminimizer_minimum(solver.get());
        if (val >= kHuge) {
            ++best.failed_starts;
            continue;
        }
        if (val < best.value) {
            best.value = val;
            best.x = prob.decode(gsl_multimin_fminimizer_x(solver.get()));
            best_converged = conv;
        }
    }
    if (best.x.empty()) {
        std::ostringstream msg;
        msg << "all " << starts.size() << " optimizer starts produced non-finite objective values";
        throw FitError(msg.str());
    }
    if (best.initial_value < best.value) {
        best.value = best.initial_value;
        best.x = clipped;
    }
    best.iterations = total_iters;
    best.evaluations = prob.evaluations;
    best.converged = best_converged;
    return best;
}

}  // namespace mfgp
