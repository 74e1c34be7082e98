#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/problem.hpp"

namespace mfgp {

/// Derivative counts on one kernel argument: t-order <= 1, x-order <= 2.
struct DerivOrder {
    int t = 0;
    int x = 0;

    [[nodiscard]] int total() const { return t + x; }
};

/// Highest derivative orders needed per argument when filling a DerivTable.
struct OrderMask {
    int ta = 1;
    int xa = 2;
    int tb = 1;
    int xb = 2;
};

/// All mixed partials d^{ta}_t d^{xa}_x (first argument) d^{tb}_t' d^{xb}_x' (second argument).
struct DerivTable {
    std::array<double, 36> v{};

    double& at(int ta, int xa, int tb, int xb) { return v[((ta * 3 + xa) * 2 + tb) * 3 + xb]; }
    [[nodiscard]] double at(int ta, int xa, int tb, int xb) const { return v[((ta * 3 + xa) * 2 + tb) * 3 + xb]; }
};

enum class KernelFamily {
    Gaussian,
    Matern32,
    Matern52,
    Matern72,
    NSAmplitude,
    Gibbs,
    NSAmplitudeGibbs,
    Sum,
    Scaled,
};

std::string to_string(KernelFamily f);
KernelFamily family_from_string(const std::string& s);

/// Positive-definite kernel on space-time.
///
/// Parameter layouts:
///   Gaussian, Matern*   : sigma2, theta_t, theta_x
///   NSAmplitude         : beta0, beta1, beta2, beta3, theta_t, theta_x
///                         sigma(t,x) = exp(beta0 + beta1 x + beta2 x^2 + beta3 t)
///   Gibbs               : sigma2, a_t, b_t, a_x, b_x   with l_t = a_t + b_t t, l_x = a_x + b_x x
///   NSAmplitudeGibbs    : beta0..beta3, a_t, b_t, a_x, b_x
///   Scaled              : c (times the single child)
///   Sum                 : no parameters, two children
class KernelModel {
  public:
    KernelModel() = default;
    KernelModel(KernelFamily family, std::vector<double> params, std::vector<KernelModel> children = {});

    static KernelModel gaussian(double sigma2, double theta_t, double theta_x);
    static KernelModel matern(KernelFamily family, double sigma2, double theta_t, double theta_x);
    static KernelModel ns_amplitude(const std::array<double, 4>& beta, double theta_t, double theta_x);
    static KernelModel gibbs(double sigma2, double a_t, double b_t, double a_x, double b_x);
    static KernelModel ns_amplitude_gibbs(const std::array<double, 4>& beta, double a_t, double b_t, double a_x,
                                          double b_x);
    static KernelModel sum(const KernelModel& a, const KernelModel& b);
    static KernelModel scaled(double c, const KernelModel& k);

    [[nodiscard]] KernelFamily family() const { return family_; }
    [[nodiscard]] const std::vector<double>& params() const { return params_; }
    [[nodiscard]] const std::vector<KernelModel>& children() const { return *children_; }
    [[nodiscard]] std::vector<std::string> param_names() const;
    [[nodiscard]] KernelModel with_params(std::vector<double> params) const;

    /// Largest total derivative order (both arguments combined) for which mixed partials exist.
    [[nodiscard]] int smoothness() const;

    /// Throws std::invalid_argument when a scale or lengthscale is not positive on the domain.
    void validate() const;

    [[nodiscard]] double eval(const Point2& a, const Point2& b) const;
    [[nodiscard]] double eval_deriv(const Point2& a, const Point2& b, DerivOrder da, DerivOrder db) const;

    /// Fill every entry allowed by `mask`; entries above the smoothness class are NaN.
    void table(const Point2& a, const Point2& b, DerivTable& out, const OrderMask& mask = {}) const;

    /// Gram of plain evaluations.
    [[nodiscard]] Eigen::MatrixXd gram_values(const std::vector<Point2>& pts) const;
    [[nodiscard]] Eigen::MatrixXd cross_values(const std::vector<Point2>& a, const std::vector<Point2>& b) const;

  private:
    void table_impl(const Point2& a, const Point2& b, DerivTable& out, const OrderMask& mask) const;

    KernelFamily family_ = KernelFamily::Gaussian;
    std::vector<double> params_{1.0, 1.0, 1.0};
    std::shared_ptr<const std::vector<KernelModel>> children_ = std::make_shared<const std::vector<KernelModel>>();
};

enum class FunctionalKind { Eval, Dt, Dx, Dxx };

struct Functional {
    FunctionalKind kind = FunctionalKind::Eval;
    Point2 point;
};

DerivOrder order_of(FunctionalKind kind);

/// Entry (i,j) applies rows[i] to the first kernel argument and cols[j] to the second.
Eigen::MatrixXd gram(const KernelModel& k, const std::vector<Functional>& rows, const std::vector<Functional>& cols);
Eigen::MatrixXd gram(const KernelModel& k, const std::vector<Functional>& fs);

enum class StationaryBase { Gaussian, Matern32, Matern52, Matern72 };

/// R(Q) for the unit-lengthscale stationary correlation, R(0) = 1.
double stationary_correlation(StationaryBase base, double r);

/// |Sa|^{1/4} |Sb|^{1/4} |(Sa+Sb)/2|^{-1/2} R(Q), Q^2 = (a-b)^T ((Sa+Sb)/2)^{-1} (a-b).
double ns_correlation(StationaryBase base, const Eigen::Matrix2d& sigma_a, const Eigen::Matrix2d& sigma_b,
                      const Point2& a, const Point2& b);

}  // namespace mfgp
