#include "mfgp/reference.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

#include <gsl/gsl_integration.h>

#include "mfgp/errors.hpp"

namespace mfgp {

QuadratureRule gauss_hermite(std::size_t n) {
    if (n < 1) {
        throw std::invalid_argument("gauss_hermite: need at least one node");
    }
    std::unique_ptr<gsl_integration_fixed_workspace, decltype(&gsl_integration_fixed_free)> ws(
        gsl_integration_fixed_alloc(gsl_integration_fixed_hermite, n, 0.0, 1.0, 0.0, 0.0),
        gsl_integration_fixed_free);
    if (!ws) {
        throw NumericalError("gauss_hermite: GSL allocation failed");
    }
    QuadratureRule rule;
    const double* x = gsl_integration_fixed_nodes(ws.get());
    const double* w = gsl_integration_fixed_weights(ws.get());
    rule.nodes.assign(x, x + n);
    rule.weights.assign(w, w + n);
    return rule;
}

double cole_hopf(double t, double x, double nu, const QuadratureRule& rule, double alpha) {
    if (t < 0.0 || !(nu > 0.0)) {
        throw std::invalid_argument("cole_hopf: need t >= 0 and nu > 0");
    }
    const double pi = std::numbers::pi;
    const double shift = std::sqrt(4.0 * nu * t);
    const double kappa = alpha / (2.0 * pi * nu);
    const std::size_t n = rule.nodes.size();
    std::vector<double> expo(n), s(n);
    double emax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        const double y = pi * (x - shift * rule.nodes[k]);
        expo[k] = -kappa * std::cos(y) + std::log(rule.weights[k]);
        s[k] = std::sin(y);
        emax = std::max(emax, expo[k]);
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(expo[k] - emax);
        num += s[k] * e;
        den += e;
    }
    return -num / den;
}

ColeHopfSeries::ColeHopfSeries(double alpha, double nu, std::size_t n_terms) : alpha_(alpha), nu_(nu) {
    if (!(nu > 0.0) || alpha == 0.0 || n_terms < 2) {
        throw std::invalid_argument("ColeHopfSeries: need nu > 0, alpha != 0, n_terms >= 2");
    }
    const long double kappa = static_cast<long double>(alpha) / (2.0L * std::numbers::pi_v<long double> * nu);
    const long double ak = std::fabs(kappa);
    // Miller backward recurrence for exp(-k) I_m(k), normalized by I0 + 2 sum I_m = exp(k)
    const std::size_t top = n_terms + 40 + static_cast<std::size_t>(2.0L * ak);
    std::vector<long double> in(top + 2, 0.0L);
    in[top] = 1e-300L;
    for (std::size_t m = top; m >= 1; --m) {
        in[m - 1] = 2.0L * static_cast<long double>(m) / ak * in[m] + in[m + 1];
        if (in[m - 1] > 1e300L) {
            for (std::size_t j = m - 1; j <= top; ++j) {
                in[j] *= 1e-300L;
            }
        }
    }
    long double norm = in[0];
    for (std::size_t m = 1; m <= top; ++m) {
        norm += 2.0L * in[m];
    }
    coef_.resize(n_terms);
    coef_[0] = in[0] / norm;
    for (std::size_t m = 1; m < n_terms; ++m) {
        // exp(-kappa cos y) = I0 + 2 sum (-1)^m I_m cos(m y); I_m(-k) = (-1)^m I_m(k)
        const long double sgn = (m % 2 == 1 && kappa > 0.0L) ? -1.0L : 1.0L;
        coef_[m] = 2.0L * sgn * in[m] / norm;
    }
}

Jet2 ColeHopfSeries::eval(double t, double x) const {
    // extended precision: near the minimum of the potential the series cancels by about exp(-2 kappa)
    const long double pi = std::numbers::pi_v<long double>;
    long double p0 = 0.0L, p1 = 0.0L, p2 = 0.0L, p3 = 0.0L;
    for (std::size_t m = 0; m < coef_.size(); ++m) {
        const long double k = pi * static_cast<long double>(m);
        const long double a = coef_[m] * std::exp(-static_cast<long double>(nu_) * k * k * t);
        const long double c = std::cos(k * x);
        const long double s = std::sin(k * x);
        p0 += a * c;
        p1 -= a * k * s;
        p2 -= a * k * k * c;
        p3 += a * k * k * k * s;
    }
    const long double cc = 2.0L * nu_ / alpha_;
    const long double q = p1 / p0;
    const long double qx = p2 / p0 - q * q;
    const long double qxx = p3 / p0 - q * p2 / p0 - 2.0L * q * qx;
    Jet2 j;
    j.u = static_cast<double>(-cc * q);
    j.ux = static_cast<double>(-cc * qx);
    j.uxx = static_cast<double>(-cc * qxx);
    j.ut = static_cast<double>(-cc * nu_ * (p3 / p0 - q * p2 / p0));
    return j;
}

std::string reference_method(const BurgersCoefficients& coeffs) {
    if (coeffs.linearized) {
        return "finite_difference_refined";
    }
    if (coeffs.alpha_constant && coeffs.nu_constant) {
        return "cole_hopf_gauss_hermite";
    }
    return "pseudospectral_refined";
}

Field reference_field(const BurgersCoefficients& coeffs, const Grid& grid, const ReferenceSettings& settings) {
    coeffs.validate(Domain{});
    if (coeffs.linearized) {
        return solve_linearized_fd(coeffs, grid, settings.fd);
    }
    if (coeffs.alpha_constant && coeffs.nu_constant) {
        const QuadratureRule rule = gauss_hermite(settings.quadrature_nodes);
        Field f{grid, std::vector<double>(grid.size())};
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const Point2 p = grid.point(k);
            f.values[k] = cole_hopf(p.t, p.x, *coeffs.nu_constant, rule, *coeffs.alpha_constant);
        }
        for (std::size_t it = 0; it < grid.n_t(); ++it) {
            for (std::size_t ix = 0; ix < grid.n_x(); ++ix) {
                const double x = grid.x_nodes()[ix];
                if (x == -1.0 || x == 1.0) {
                    f.values[grid.index(it, ix)] = 0.0;
                }
            }
        }
        return f;
    }
    if (!coeffs.nu_constant) {
        throw CapabilityError("reference_field: spatially varying viscosity has no reference solver");
    }
    return solve_burgers_fft(coeffs.alpha, *coeffs.nu_constant, grid, settings.fft);
}

}  // namespace mfgp
