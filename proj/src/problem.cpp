#include "mfgp/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace mfgp {

bool Domain::on_boundary(const Point2& p, double tol) const {
    const bool in_t = p.t >= t_lo - tol && p.t <= t_hi + tol;
    const bool in_x = p.x >= x_lo - tol && p.x <= x_hi + tol;
    if (!in_t || !in_x) {
        return false;
    }
    return std::abs(p.t - t_lo) <= tol || std::abs(p.x - x_lo) <= tol || std::abs(p.x - x_hi) <= tol;
}

bool Domain::in_interior(const Point2& p) const {
    return p.t > t_lo && p.t <= t_hi && p.x > x_lo && p.x < x_hi;
}

Grid::Grid(std::vector<double> t_nodes, std::vector<double> x_nodes)
    : t_nodes_(std::move(t_nodes)), x_nodes_(std::move(x_nodes)) {
    auto check = [](const std::vector<double>& v, const char* axis) {
        if (v.empty()) {
            throw std::invalid_argument(std::string("grid axis ") + axis + " is empty");
        }
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (!(v[i] > v[i - 1])) {
                throw std::invalid_argument(std::string("grid axis ") + axis + " is not strictly increasing");
            }
        }
    };
    check(t_nodes_, "t");
    check(x_nodes_, "x");
}

Point2 Grid::point(std::size_t flat) const {
    return {t_nodes_[flat / n_x()], x_nodes_[flat % n_x()]};
}

std::vector<Point2> Grid::points() const {
    std::vector<Point2> out;
    out.reserve(size());
    for (double t : t_nodes_) {
        for (double x : x_nodes_) {
            out.push_back({t, x});
        }
    }
    return out;
}

std::optional<std::size_t> find_node(const std::vector<double>& nodes, double value, double tol) {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), value - tol);
    if (it != nodes.end() && std::abs(*it - value) <= tol) {
        return static_cast<std::size_t>(it - nodes.begin());
    }
    return std::nullopt;
}

bool Grid::contains(const Grid& other, double tol) const {
    auto axis_ok = [tol](const std::vector<double>& mine, const std::vector<double>& theirs) {
        return std::all_of(theirs.begin(), theirs.end(),
                           [&](double v) { return find_node(mine, v, tol).has_value(); });
    };
    return axis_ok(t_nodes_, other.t_nodes_) && axis_ok(x_nodes_, other.x_nodes_);
}

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    v.front() = lo;
    v.back() = hi;
    return v;
}

std::size_t bracket(const std::vector<double>& nodes, double value) {
    // index i with nodes[i] <= value < nodes[i+1], clamped to [0, n-2]
    auto it = std::upper_bound(nodes.begin(), nodes.end(), value);
    std::size_t i = it == nodes.begin() ? 0 : static_cast<std::size_t>(it - nodes.begin()) - 1;
    return std::min(i, nodes.size() - 2);
}

}  // namespace

Grid uniform_grid(const Domain& domain, std::size_t n_t, std::size_t n_x) {
    if (n_t < 2 || n_x < 2) {
        throw std::invalid_argument("uniform_grid: node counts must be >= 2");
    }
    return Grid(linspace(domain.t_lo, domain.t_hi, n_t), linspace(domain.x_lo, domain.x_hi, n_x));
}

AxisWeights linear_weights(const std::vector<double>& nodes, double value) {
    if (auto i = find_node(nodes, value)) {
        return {*i, {1.0}};
    }
    if (nodes.size() == 1) {
        return {0, {1.0}};
    }
    const std::size_t i = bracket(nodes, value);
    const double s = (value - nodes[i]) / (nodes[i + 1] - nodes[i]);
    return {i, {1.0 - s, s}};
}

AxisWeights cubic_weights(const std::vector<double>& nodes, double value) {
    if (auto i = find_node(nodes, value)) {
        return {*i, {1.0}};
    }
    if (nodes.size() < 4) {
        return linear_weights(nodes, value);
    }
    const std::size_t i = bracket(nodes, value);
    const std::size_t first = std::min(i > 0 ? i - 1 : 0, nodes.size() - 4);
    AxisWeights out{first, std::vector<double>(4)};
    for (std::size_t j = 0; j < 4; ++j) {
        double w = 1.0;
        for (std::size_t k = 0; k < 4; ++k) {
            if (k != j) {
                w *= (value - nodes[first + k]) / (nodes[first + j] - nodes[first + k]);
            }
        }
        out.w[j] = w;
    }
    return out;
}

InterpolationMatrix interpolation_matrix(const Grid& from, const Grid& to, InterpKind kind) {
    auto weights = [kind](const std::vector<double>& nodes, double v) {
        return kind == InterpKind::Cubic ? cubic_weights(nodes, v) : linear_weights(nodes, v);
    };
    std::vector<AxisWeights> wt, wx;
    for (double t : to.t_nodes()) {
        wt.push_back(weights(from.t_nodes(), t));
    }
    for (double x : to.x_nodes()) {
        wx.push_back(weights(from.x_nodes(), x));
    }
    InterpolationMatrix m;
    m.rows = to.size();
    m.cols = from.size();
    m.entries.resize(m.rows);
    for (std::size_t it = 0; it < to.n_t(); ++it) {
        for (std::size_t ix = 0; ix < to.n_x(); ++ix) {
            auto& row = m.entries[to.index(it, ix)];
            for (std::size_t a = 0; a < wt[it].w.size(); ++a) {
                for (std::size_t b = 0; b < wx[ix].w.size(); ++b) {
                    row.emplace_back(from.index(wt[it].first + a, wx[ix].first + b), wt[it].w[a] * wx[ix].w[b]);
                }
            }
        }
    }
    return m;
}

std::vector<double> interpolate(const Grid& from, const std::vector<double>& values, const Grid& to,
                                InterpKind kind) {
    if (values.size() != from.size()) {
        throw std::invalid_argument("interpolate: value count does not match source grid");
    }
    const auto m = interpolation_matrix(from, to, kind);
    std::vector<double> out(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (const auto& [j, w] : m.entries[i]) {
            out[i] += w * values[j];
        }
    }
    return out;
}

double initial_profile(double x) { return -std::sin(std::numbers::pi * x); }

void BurgersCoefficients::validate(const Domain& domain) const {
    if (!alpha || !nu || !u0) {
        throw std::invalid_argument("BurgersCoefficients: missing coefficient function");
    }
    for (int i = 0; i <= 64; ++i) {
        const double x = domain.x_lo + (domain.x_hi - domain.x_lo) * i / 64.0;
        if (!(nu(x) > 0.0)) {
            throw std::invalid_argument("BurgersCoefficients: nu(x) must be positive on the domain");
        }
    }
}

BurgersCoefficients burgers(double alpha, double nu) {
    BurgersCoefficients c;
    c.alpha = [alpha](double) { return alpha; };
    c.nu = [nu](double) { return nu; };
    c.u0 = initial_profile;
    c.alpha_constant = alpha;
    c.nu_constant = nu;
    c.label = "burgers";
    return c;
}

BurgersCoefficients linearized_burgers(double alpha, double nu) {
    BurgersCoefficients c = burgers(alpha, nu);
    c.linearized = true;
    c.label = "linearized";
    return c;
}

BurgersCoefficients burgers_varying_alpha(double amplitude, double nu) {
    BurgersCoefficients c;
    c.alpha = [amplitude](double x) { return 1.0 + amplitude * std::sin(std::numbers::pi * x); };
    c.nu = [nu](double) { return nu; };
    c.u0 = initial_profile;
    c.nu_constant = nu;
    c.label = "burgers_varying_alpha";
    return c;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

CollocationSet sample_collocation(const Domain& domain, std::size_t m_interior, std::size_t m_boundary,
                                  std::uint64_t seed) {
    CollocationSet set;
    set.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double t_len = domain.t_hi - domain.t_lo;
    const double x_len = domain.x_hi - domain.x_lo;

    set.interior.reserve(m_interior);
    while (set.interior.size() < m_interior) {
        // 1 - U[0,1) lies in (0,1]
        const double t = domain.t_lo + t_len * (1.0 - unit(rng));
        const double x = domain.x_lo + x_len * unit(rng);
        if (x > domain.x_lo && x < domain.x_hi) {
            set.interior.push_back({t, x});
        }
    }

    // segment lengths: {t=t_lo} has x_len, each lateral side has t_len
    const double total = x_len + 2.0 * t_len;
    set.boundary.reserve(m_boundary);
    for (std::size_t i = 0; i < m_boundary; ++i) {
        const double s = total * unit(rng);
        const double r = unit(rng);
        if (s < x_len) {
            set.boundary.push_back({domain.t_lo, domain.x_lo + x_len * r});
        } else if (s < x_len + t_len) {
            set.boundary.push_back({domain.t_lo + t_len * r, domain.x_lo});
        } else {
            set.boundary.push_back({domain.t_lo + t_len * r, domain.x_hi});
        }
    }
    return set;
}

void write_points_csv(std::ostream& os, const CollocationSet& set, const std::vector<Point2>& hf_points) {
    os.precision(17);
    os << "t,x,tag\n";
    for (const auto& p : set.interior) {
        os << p.t << ',' << p.x << ",interior\n";
    }
    for (const auto& p : set.boundary) {
        os << p.t << ',' << p.x << ",boundary\n";
    }
    for (const auto& p : hf_points) {
        os << p.t << ',' << p.x << ",hf\n";
    }
}

}  // namespace mfgp
