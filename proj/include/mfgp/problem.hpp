#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mfgp {

/// Space-time coordinate. t in [0,1], x in [-1,1].
struct Point2 {
    double t = 0.0;
    double x = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Value and the derivatives entering the Burgers operator at one point.
struct Jet2 {
    double u = 0.0;
    double ut = 0.0;
    double ux = 0.0;
    double uxx = 0.0;
};

struct Domain {
    double t_lo = 0.0;
    double t_hi = 1.0;
    double x_lo = -1.0;
    double x_hi = 1.0;

    [[nodiscard]] bool on_boundary(const Point2& p, double tol = 0.0) const;
    [[nodiscard]] bool in_interior(const Point2& p) const;
};

/// Tensor-product grid, flat index = i_t * n_x + i_x.
class Grid {
  public:
    Grid() = default;
    Grid(std::vector<double> t_nodes, std::vector<double> x_nodes);

    [[nodiscard]] std::size_t n_t() const { return t_nodes_.size(); }
    [[nodiscard]] std::size_t n_x() const { return x_nodes_.size(); }
    [[nodiscard]] std::size_t size() const { return t_nodes_.size() * x_nodes_.size(); }
    [[nodiscard]] std::size_t index(std::size_t i_t, std::size_t i_x) const { return i_t * n_x() + i_x; }
    [[nodiscard]] Point2 point(std::size_t flat) const;
    [[nodiscard]] std::vector<Point2> points() const;

    [[nodiscard]] const std::vector<double>& t_nodes() const { return t_nodes_; }
    [[nodiscard]] const std::vector<double>& x_nodes() const { return x_nodes_; }

    /// True if every node of `other` is a node of this grid (per axis, absolute tolerance).
    [[nodiscard]] bool contains(const Grid& other, double tol = 1e-12) const;

    friend bool operator==(const Grid&, const Grid&) = default;

  private:
    std::vector<double> t_nodes_;
    std::vector<double> x_nodes_;
};

Grid uniform_grid(const Domain& domain, std::size_t n_t, std::size_t n_x);

/// Index of `value` among `nodes` within `tol`, if present.
std::optional<std::size_t> find_node(const std::vector<double>& nodes, double value, double tol = 1e-12);

/// Interpolation weights for one target coordinate: (node index, weight) pairs.
struct AxisWeights {
    std::size_t first = 0;
    std::vector<double> w;
};

/// Linear (2-point) weights, or exact lookup when `value` is a node.
AxisWeights linear_weights(const std::vector<double>& nodes, double value);
/// 4-point Lagrange weights (clamped at the ends), or exact lookup when `value` is a node.
AxisWeights cubic_weights(const std::vector<double>& nodes, double value);

enum class InterpKind { Linear, Cubic };

/// Tensor-product interpolation of grid values onto another grid.
std::vector<double> interpolate(const Grid& from, const std::vector<double>& values, const Grid& to,
                                InterpKind kind);

/// Sparse row-stochastic map W with (W v)[i] = interpolant of v at to.point(i).
struct InterpolationMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::vector<std::pair<std::size_t, double>>> entries;
};
InterpolationMatrix interpolation_matrix(const Grid& from, const Grid& to, InterpKind kind);

/// Coefficients of u_t + alpha(x) * b(u) u_x - nu(x) u_xx = f, with b(u) = u (nonlinear)
/// or b = u0(x) (linearized about the initial profile).
struct BurgersCoefficients {
    std::function<double(double)> alpha;
    std::function<double(double)> nu;
    std::function<double(double)> u0;
    bool linearized = false;
    /// Set when alpha is spatially constant; selects closed-form references.
    std::optional<double> alpha_constant;
    std::optional<double> nu_constant;
    std::string label;

    void validate(const Domain& domain) const;
};

double initial_profile(double x);  // -sin(pi x)

BurgersCoefficients burgers(double alpha, double nu);
BurgersCoefficients linearized_burgers(double alpha, double nu);
/// alpha(x) = 1 + amplitude * sin(pi x), constant nu.
BurgersCoefficients burgers_varying_alpha(double amplitude, double nu);

struct CollocationSet {
    std::vector<Point2> interior;
    std::vector<Point2> boundary;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t size() const { return interior.size() + boundary.size(); }
};

/// Interior points i.i.d. uniform on (0,1] x (-1,1); boundary points on the three
/// boundary segments with probability proportional to length (2:1:1).
CollocationSet sample_collocation(const Domain& domain, std::size_t m_interior, std::size_t m_boundary,
                                  std::uint64_t seed);

/// CSV with header `t,x,tag`; tags interior, boundary, hf.
void write_points_csv(std::ostream& os, const CollocationSet& set, const std::vector<Point2>& hf_points = {});

}  // namespace mfgp

namespace mfgp {

/// Deterministic child seed for stream `stream` of `base` (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace mfgp
