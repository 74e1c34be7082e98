#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mfgp/lowfi.hpp"
#include "mfgp/problem.hpp"

namespace mfgp {

/// Nodes and weights for integrals of f(z) e^{-z^2} over the real line.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

QuadratureRule gauss_hermite(std::size_t n = 80);

/// Viscous Burgers solution u_t + alpha u u_x = nu u_xx, u(0,x) = -sin(pi x), as a ratio of
/// Gauss-Hermite sums, evaluated with log-sum-exp.
double cole_hopf(double t, double x, double nu, const QuadratureRule& rule, double alpha = 1.0);

/// Same solution through the cosine series of the heat-equation potential; yields exact derivatives.
class ColeHopfSeries {
  public:
    ColeHopfSeries(double alpha, double nu, std::size_t n_terms = 96);

    [[nodiscard]] Jet2 eval(double t, double x) const;
    [[nodiscard]] double value(double t, double x) const { return eval(t, x).u; }

    [[nodiscard]] double alpha() const { return alpha_; }
    [[nodiscard]] double nu() const { return nu_; }

  private:
    double alpha_;
    double nu_;
    std::vector<long double> coef_;  // scaled by exp(-kappa)
};

struct ReferenceSettings {
    std::size_t quadrature_nodes = 200;
    FdSettings fd{1601, 1601};
    FftSettings fft{1024, 2.5e-4, true};
};

/// Short description of how reference_field treats `coeffs` (for reports).
std::string reference_method(const BurgersCoefficients& coeffs);

/// Ground-truth field: Cole-Hopf for constant-alpha nonlinear problems, refined finite differences for the
/// linearized problem, refined pseudospectral solve for spatially varying alpha.
Field reference_field(const BurgersCoefficients& coeffs, const Grid& grid, const ReferenceSettings& settings = {});

}  // namespace mfgp
