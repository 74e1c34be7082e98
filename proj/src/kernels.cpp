#include "mfgp/kernels.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "jet.hpp"
#include "mfgp/errors.hpp"

namespace mfgp {

namespace {

constexpr int kSmooth = 1000;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Factor = std::array<std::array<double, 3>, 3>;  // F[i][j] = d^i/dz^i d^j/dz'^j

std::size_t expected_params(KernelFamily f) {
    switch (f) {
        case KernelFamily::Gaussian:
        case KernelFamily::Matern32:
        case KernelFamily::Matern52:
        case KernelFamily::Matern72:
            return 3;
        case KernelFamily::NSAmplitude:
            return 6;
        case KernelFamily::Gibbs:
            return 5;
        case KernelFamily::NSAmplitudeGibbs:
            return 8;
        case KernelFamily::Scaled:
            return 1;
        case KernelFamily::Sum:
            return 0;
    }
    return 0;
}

// ---- Matern radial tables ----

// G_n(rho) = ((1/rho) d/drho)^n [P(rho) e^{-rho}] = e^{-rho} sum_k c_k rho^k
struct Laurent {
    std::map<int, double> c;

    [[nodiscard]] double eval(double rho) const {
        double acc = 0.0;
        for (const auto& [k, v] : c) {
            acc += v * std::pow(rho, k);
        }
        return acc * std::exp(-rho);
    }
    [[nodiscard]] double at_zero() const {
        for (const auto& [k, v] : c) {
            if (k < 0 && v != 0.0) {
                return kNaN;
            }
        }
        auto it = c.find(0);
        return it == c.end() ? 0.0 : it->second;
    }
    [[nodiscard]] Laurent step() const {
        Laurent r;
        for (const auto& [k, v] : c) {
            if (k != 0) {
                r.c[k - 2] += k * v;
            }
            r.c[k - 1] -= v;
        }
        // drop coefficients that cancel up to rounding; otherwise at_zero() sees a spurious pole
        double scale = 0.0;
        for (const auto& [k, v] : r.c) {
            scale = std::max(scale, std::abs(v));
        }
        for (auto it = r.c.begin(); it != r.c.end();) {
            it = std::abs(it->second) <= 1e-12 * scale ? r.c.erase(it) : std::next(it);
        }
        return r;
    }
};

struct MaternSpec {
    double a;
    std::array<Laurent, 7> g;
};

MaternSpec make_matern(double a, std::map<int, double> poly) {
    MaternSpec s{a, {}};
    s.g[0].c = std::move(poly);
    for (int n = 1; n <= 6; ++n) {
        s.g[n] = s.g[n - 1].step();
    }
    return s;
}

const MaternSpec& matern_spec(KernelFamily f) {
    static const MaternSpec m32 = make_matern(std::sqrt(3.0), {{0, 1.0}, {1, 1.0}});
    static const MaternSpec m52 = make_matern(std::sqrt(5.0), {{0, 1.0}, {1, 1.0}, {2, 1.0 / 3.0}});
    static const MaternSpec m72 =
        make_matern(std::sqrt(7.0), {{0, 1.0}, {1, 1.0}, {2, 2.0 / 5.0}, {3, 1.0 / 15.0}});
    switch (f) {
        case KernelFamily::Matern32:
            return m32;
        case KernelFamily::Matern52:
            return m52;
        default:
            return m72;
    }
}

// c_{p,i}: d^p/dh^p F(h^2/2) = sum_i c_{p,i} h^{2i-p} F^{(i)}(h^2/2)
double faa_coeff(int p, int i) {
    static constexpr double fact[] = {1, 1, 2, 6, 24, 120, 720};
    return fact[p] / (fact[2 * i - p] * fact[p - i] * std::pow(2.0, p - i));
}

void matern_table(KernelFamily fam, double sigma2, double th_t, double th_x, int smooth, const Point2& a,
                  const Point2& b, DerivTable& out, const OrderMask& m) {
    const MaternSpec& spec = matern_spec(fam);
    const double h1 = (a.t - b.t) / th_t;
    const double h2 = (a.x - b.x) / th_x;
    const double r = std::sqrt(h1 * h1 + h2 * h2);
    const double rho = spec.a * r;
    const int nmax = std::min(6, m.ta + m.tb + m.xa + m.xb);
    std::array<double, 7> psi{};
    double a2n = 1.0;
    for (int n = 0; n <= nmax; ++n) {
        psi[n] = a2n * (r == 0.0 ? spec.g[n].at_zero() : spec.g[n].eval(rho));
        a2n *= spec.a * spec.a;
    }
    std::array<double, 7> h1p{}, h2p{};
    h1p[0] = h2p[0] = 1.0;
    for (int k = 1; k < 7; ++k) {
        h1p[k] = h1p[k - 1] * h1;
        h2p[k] = h2p[k - 1] * h2;
    }
    for (int ta = 0; ta <= m.ta; ++ta) {
        for (int xa = 0; xa <= m.xa; ++xa) {
            for (int tb = 0; tb <= m.tb; ++tb) {
                for (int xb = 0; xb <= m.xb; ++xb) {
                    const int p = ta + tb;
                    const int q = xa + xb;
                    if (p + q > smooth) {
                        out.at(ta, xa, tb, xb) = kNaN;
                        continue;
                    }
                    double d = 0.0;
                    for (int i = (p + 1) / 2; i <= p; ++i) {
                        for (int j = (q + 1) / 2; j <= q; ++j) {
                            if (r == 0.0 && (2 * i != p || 2 * j != q)) {
                                continue;
                            }
                            d += faa_coeff(p, i) * faa_coeff(q, j) * h1p[2 * i - p] * h2p[2 * j - q] * psi[i + j];
                        }
                    }
                    const double sign = ((tb + xb) % 2 == 0) ? 1.0 : -1.0;
                    out.at(ta, xa, tb, xb) = sigma2 * sign * d / (std::pow(th_t, p) * std::pow(th_x, q));
                }
            }
        }
    }
}

double matern_value(KernelFamily fam, double sigma2, double th_t, double th_x, const Point2& a, const Point2& b) {
    const double h1 = (a.t - b.t) / th_t;
    const double h2 = (a.x - b.x) / th_x;
    const double rho = matern_spec(fam).a * std::sqrt(h1 * h1 + h2 * h2);
    double poly = 1.0 + rho;
    if (fam == KernelFamily::Matern52) {
        poly += rho * rho / 3.0;
    } else if (fam == KernelFamily::Matern72) {
        poly += 2.0 * rho * rho / 5.0 + rho * rho * rho / 15.0;
    }
    return sigma2 * poly * std::exp(-rho);
}

// ---- one-dimensional separable factors ----

Factor gaussian_factor(double za, double zb, double theta, int da, int db) {
    const double s = (za - zb) / theta;
    const double g = std::exp(-0.5 * s * s);
    const std::array<double, 5> he{1.0, s, s * s - 1.0, s * s * s - 3.0 * s, s * s * s * s - 6.0 * s * s + 3.0};
    const double inv = 1.0 / theta;
    const std::array<double, 5> scale{g, g * inv, g * inv * inv, g * inv * inv * inv, g * inv * inv * inv * inv};
    Factor f{};
    for (int i = 0; i <= da; ++i) {
        for (int j = 0; j <= db; ++j) {
            const int n = i + j;
            const double sign = ((i % 2) == 0) ? 1.0 : -1.0;  // (-1)^j (-1)^n = (-1)^i
            f[i][j] = sign * he[n] * scale[n];
        }
    }
    return f;
}

template <int DA, int DB>
Factor gibbs_factor_impl(double za, double zb, double a, double b) {
    using J = detail::Jet<DA, DB>;
    const J la = J::var_a(za) * b + J::constant(a);
    const J lb = J::var_b(zb) * b + J::constant(a);
    const J inv_s = detail::reciprocal(la * la + lb * lb);
    const J pref = detail::sqrt((la * lb) * inv_s * 2.0);
    const J d = J::var_a(za) - J::var_b(zb);
    const J g = pref * detail::exp((d * d) * inv_s * -1.0);
    Factor f{};
    for (int i = 0; i <= DA; ++i) {
        for (int j = 0; j <= DB; ++j) {
            f[i][j] = g.derivative(i, j);
        }
    }
    return f;
}

Factor gibbs_factor(double za, double zb, double a, double b, int da, int db) {
    switch (da * 3 + db) {
        case 0: return gibbs_factor_impl<0, 0>(za, zb, a, b);
        case 1: return gibbs_factor_impl<0, 1>(za, zb, a, b);
        case 2: return gibbs_factor_impl<0, 2>(za, zb, a, b);
        case 3: return gibbs_factor_impl<1, 0>(za, zb, a, b);
        case 4: return gibbs_factor_impl<1, 1>(za, zb, a, b);
        case 5: return gibbs_factor_impl<1, 2>(za, zb, a, b);
        case 6: return gibbs_factor_impl<2, 0>(za, zb, a, b);
        case 7: return gibbs_factor_impl<2, 1>(za, zb, a, b);
        default: return gibbs_factor_impl<2, 2>(za, zb, a, b);
    }
}

double gibbs_value(double za, double zb, double a, double b) {
    const double la = a + b * za;
    const double lb = a + b * zb;
    const double s = la * la + lb * lb;
    const double d = za - zb;
    return std::sqrt(2.0 * la * lb / s) * std::exp(-d * d / s);
}

// exp(c1 z + c2 z^2) and its first two derivatives
std::array<double, 3> amplitude_derivs(double z, double c1, double c2) {
    const double f = std::exp(c1 * z + c2 * z * z);
    const double p1 = c1 + 2.0 * c2 * z;
    return {f, p1 * f, (2.0 * c2 + p1 * p1) * f};
}

// (f(z) f(z') g(z,z')) derivatives by Leibniz
Factor amplify(const Factor& g, const std::array<double, 3>& fa, const std::array<double, 3>& fb, int da, int db) {
    static constexpr double binom[3][3] = {{1, 0, 0}, {1, 1, 0}, {1, 2, 1}};
    Factor out{};
    for (int i = 0; i <= da; ++i) {
        for (int j = 0; j <= db; ++j) {
            double acc = 0.0;
            for (int r = 0; r <= i; ++r) {
                for (int s = 0; s <= j; ++s) {
                    acc += binom[i][r] * binom[j][s] * fa[r] * fb[s] * g[i - r][j - s];
                }
            }
            out[i][j] = acc;
        }
    }
    return out;
}

void separable(double c, const Factor& ft, const Factor& fx, DerivTable& out, const OrderMask& m) {
    for (int ta = 0; ta <= m.ta; ++ta) {
        for (int xa = 0; xa <= m.xa; ++xa) {
            for (int tb = 0; tb <= m.tb; ++tb) {
                for (int xb = 0; xb <= m.xb; ++xb) {
                    out.at(ta, xa, tb, xb) = c * ft[ta][tb] * fx[xa][xb];
                }
            }
        }
    }
}

void check_order(DerivOrder d) {
    if (d.t < 0 || d.t > 1 || d.x < 0 || d.x > 2) {
        std::ostringstream msg;
        msg << "derivative order (" << d.t << "," << d.x << ") outside supported range t<=1, x<=2";
        throw std::invalid_argument(msg.str());
    }
}

}  // namespace

std::string to_string(KernelFamily f) {
    switch (f) {
        case KernelFamily::Gaussian: return "gaussian";
        case KernelFamily::Matern32: return "matern32";
        case KernelFamily::Matern52: return "matern52";
        case KernelFamily::Matern72: return "matern72";
        case KernelFamily::NSAmplitude: return "ns_amplitude";
        case KernelFamily::Gibbs: return "gibbs";
        case KernelFamily::NSAmplitudeGibbs: return "ns_amplitude_gibbs";
        case KernelFamily::Sum: return "sum";
        case KernelFamily::Scaled: return "scaled";
    }
    return "unknown";
}

KernelFamily family_from_string(const std::string& s) {
    for (auto f : {KernelFamily::Gaussian, KernelFamily::Matern32, KernelFamily::Matern52, KernelFamily::Matern72,
                   KernelFamily::NSAmplitude, KernelFamily::Gibbs, KernelFamily::NSAmplitudeGibbs, KernelFamily::Sum,
                   KernelFamily::Scaled}) {
        if (to_string(f) == s) {
            return f;
        }
    }
    throw std::invalid_argument("unknown kernel family '" + s + "'");
}

KernelModel::KernelModel(KernelFamily family, std::vector<double> params, std::vector<KernelModel> children)
    : family_(family),
      params_(std::move(params)),
      children_(std::make_shared<const std::vector<KernelModel>>(std::move(children))) {
    if (params_.size() != expected_params(family_)) {
        throw std::invalid_argument("KernelModel: wrong parameter count for " + to_string(family_));
    }
    const std::size_t want_children = family_ == KernelFamily::Sum ? 2 : family_ == KernelFamily::Scaled ? 1 : 0;
    if (children_->size() != want_children) {
        throw std::invalid_argument("KernelModel: wrong number of child kernels for " + to_string(family_));
    }
    validate();
}

KernelModel KernelModel::gaussian(double sigma2, double theta_t, double theta_x) {
    return {KernelFamily::Gaussian, {sigma2, theta_t, theta_x}};
}

KernelModel KernelModel::matern(KernelFamily family, double sigma2, double theta_t, double theta_x) {
    if (family != KernelFamily::Matern32 && family != KernelFamily::Matern52 && family != KernelFamily::Matern72) {
        throw std::invalid_argument("KernelModel::matern: not a Matern family");
    }
    return {family, {sigma2, theta_t, theta_x}};
}

KernelModel KernelModel::ns_amplitude(const std::array<double, 4>& beta, double theta_t, double theta_x) {
    return {KernelFamily::NSAmplitude, {beta[0], beta[1], beta[2], beta[3], theta_t, theta_x}};
}

KernelModel KernelModel::gibbs(double sigma2, double a_t, double b_t, double a_x, double b_x) {
    return {KernelFamily::Gibbs, {sigma2, a_t, b_t, a_x, b_x}};
}

KernelModel KernelModel::ns_amplitude_gibbs(const std::array<double, 4>& beta, double a_t, double b_t, double a_x,
                                            double b_x) {
    return {KernelFamily::NSAmplitudeGibbs, {beta[0], beta[1], beta[2], beta[3], a_t, b_t, a_x, b_x}};
}

KernelModel KernelModel::sum(const KernelModel& a, const KernelModel& b) { return {KernelFamily::Sum, {}, {a, b}}; }

KernelModel KernelModel::scaled(double c, const KernelModel& k) { return {KernelFamily::Scaled, {c}, {k}}; }

std::vector<std::string> KernelModel::param_names() const {
    switch (family_) {
        case KernelFamily::Gaussian:
        case KernelFamily::Matern32:
        case KernelFamily::Matern52:
        case KernelFamily::Matern72:
            return {"sigma2", "theta_t", "theta_x"};
        case KernelFamily::NSAmplitude:
            return {"beta0", "beta1", "beta2", "beta3", "theta_t", "theta_x"};
        case KernelFamily::Gibbs:
            return {"sigma2", "a_t", "b_t", "a_x", "b_x"};
        case KernelFamily::NSAmplitudeGibbs:
            return {"beta0", "beta1", "beta2", "beta3", "a_t", "b_t", "a_x", "b_x"};
        case KernelFamily::Scaled:
            return {"c"};
        case KernelFamily::Sum:
            return {};
    }
    return {};
}

KernelModel KernelModel::with_params(std::vector<double> params) const {
    return {family_, std::move(params), *children_};
}

int KernelModel::smoothness() const {
    switch (family_) {
        case KernelFamily::Matern32: return 2;
        case KernelFamily::Matern52: return 4;
        case KernelFamily::Matern72: return 6;
        case KernelFamily::Sum: return std::min(children()[0].smoothness(), children()[1].smoothness());
        case KernelFamily::Scaled: return children()[0].smoothness();
        default: return kSmooth;
    }
}

void KernelModel::validate() const {
    auto fail = [this](const std::string& what) {
        throw std::invalid_argument("KernelModel(" + to_string(family_) + "): " + what);
    };
    for (double p : params_) {
        if (!std::isfinite(p)) {
            fail("non-finite parameter");
        }
    }
    auto positive_affine = [&](double a, double b, double lo, double hi, const char* name) {
        if (!(a + b * lo > 0.0) || !(a + b * hi > 0.0)) {
            fail(std::string(name) + " lengthscale not positive over the domain");
        }
    };
    switch (family_) {
        case KernelFamily::Gaussian:
        case KernelFamily::Matern32:
        case KernelFamily::Matern52:
        case KernelFamily::Matern72:
            if (!(params_[0] > 0.0) || !(params_[1] > 0.0) || !(params_[2] > 0.0)) {
                fail("sigma2 and lengthscales must be positive");
            }
            break;
        case KernelFamily::NSAmplitude:
            if (!(params_[4] > 0.0) || !(params_[5] > 0.0)) {
                fail("lengthscales must be positive");
            }
            break;
        case KernelFamily::Gibbs:
            if (!(params_[0] > 0.0)) {
                fail("sigma2 must be positive");
            }
            positive_affine(params_[1], params_[2], 0.0, 1.0, "time");
            positive_affine(params_[3], params_[4], -1.0, 1.0, "space");
            break;
        case KernelFamily::NSAmplitudeGibbs:
            positive_affine(params_[4], params_[5], 0.0, 1.0, "time");
            positive_affine(params_[6], params_[7], -1.0, 1.0, "space");
            break;
        case KernelFamily::Scaled:
            if (!(params_[0] >= 0.0)) {
                fail("scale must be nonnegative");
            }
            break;
        case KernelFamily::Sum:
            break;
    }
}

double KernelModel::eval(const Point2& a, const Point2& b) const {
    const auto& p = params_;
    switch (family_) {
        case KernelFamily::Gaussian: {
            const double dt = (a.t - b.t) / p[1];
            const double dx = (a.x - b.x) / p[2];
            return p[0] * std::exp(-0.5 * (dt * dt + dx * dx));
        }
        case KernelFamily::Matern32:
        case KernelFamily::Matern52:
        case KernelFamily::Matern72:
            return matern_value(family_, p[0], p[1], p[2], a, b);
        case KernelFamily::NSAmplitude: {
            const double dt = (a.t - b.t) / p[4];
            const double dx = (a.x - b.x) / p[5];
            const double la = p[0] + p[1] * a.x + p[2] * a.x * a.x + p[3] * a.t;
            const double lb = p[0] + p[1] * b.x + p[2] * b.x * b.x + p[3] * b.t;
            return std::exp(la + lb - 0.5 * (dt * dt + dx * dx));
        }
        case KernelFamily::Gibbs:
            return p[0] * gibbs_value(a.t, b.t, p[1], p[2]) * gibbs_value(a.x, b.x, p[3], p[4]);
        case KernelFamily::NSAmplitudeGibbs: {
            const double la = p[0] + p[1] * a.x + p[2] * a.x * a.x + p[3] * a.t;
            const double lb = p[0] + p[1] * b.x + p[2] * b.x * b.x + p[3] * b.t;
            return std::exp(la + lb) * gibbs_value(a.t, b.t, p[4], p[5]) * gibbs_value(a.x, b.x, p[6], p[7]);
        }
        case KernelFamily::Sum:
            return children()[0].eval(a, b) + children()[1].eval(a, b);
        case KernelFamily::Scaled:
            return p[0] * children()[0].eval(a, b);
    }
    return kNaN;
}

double KernelModel::eval_deriv(const Point2& a, const Point2& b, DerivOrder da, DerivOrder db) const {
    check_order(da);
    check_order(db);
    if (da.total() + db.total() > smoothness()) {
        std::ostringstream msg;
        msg << "kernel family " << to_string(family_) << " has no derivative of total order "
            << da.total() + db.total() << " (da=(" << da.t << "," << da.x << "), db=(" << db.t << "," << db.x
            << "), smoothness class C^" << smoothness() << ")";
        throw CapabilityError(msg.str());
    }
    DerivTable tab;
    table(a, b, tab, {da.t, da.x, db.t, db.x});
    return tab.at(da.t, da.x, db.t, db.x);
}

void KernelModel::table(const Point2& a, const Point2& b, DerivTable& out, const OrderMask& mask) const {
    out.v.fill(0.0);
    table_impl(a, b, out, mask);
}

void KernelModel::table_impl(const Point2& a, const Point2& b, DerivTable& out, const OrderMask& m) const {
    const auto& p = params_;
    switch (family_) {
        case KernelFamily::Gaussian:
            separable(p[0], gaussian_factor(a.t, b.t, p[1], m.ta, m.tb), gaussian_factor(a.x, b.x, p[2], m.xa, m.xb),
                      out, m);
            return;
        case KernelFamily::Matern32:
        case KernelFamily::Matern52:
        case KernelFamily::Matern72:
            matern_table(family_, p[0], p[1], p[2], smoothness(), a, b, out, m);
            return;
        case KernelFamily::NSAmplitude:
        case KernelFamily::NSAmplitudeGibbs: {
            const bool gibbs = family_ == KernelFamily::NSAmplitudeGibbs;
            const Factor gt = gibbs ? gibbs_factor(a.t, b.t, p[4], p[5], m.ta, m.tb)
                                    : gaussian_factor(a.t, b.t, p[4], m.ta, m.tb);
            const Factor gx = gibbs ? gibbs_factor(a.x, b.x, p[6], p[7], m.xa, m.xb)
                                    : gaussian_factor(a.x, b.x, p[5], m.xa, m.xb);
            const Factor ft = amplify(gt, amplitude_derivs(a.t, p[3], 0.0), amplitude_derivs(b.t, p[3], 0.0), m.ta,
                                      m.tb);
            const Factor fx = amplify(gx, amplitude_derivs(a.x, p[1], p[2]), amplitude_derivs(b.x, p[1], p[2]), m.xa,
                                      m.xb);
            separable(std::exp(2.0 * p[0]), ft, fx, out, m);
            return;
        }
        case KernelFamily::Gibbs:
            separable(p[0], gibbs_factor(a.t, b.t, p[1], p[2], m.ta, m.tb),
                      gibbs_factor(a.x, b.x, p[3], p[4], m.xa, m.xb), out, m);
            return;
        case KernelFamily::Sum: {
            DerivTable second;
            children()[0].table(a, b, out, m);
            children()[1].table(a, b, second, m);
            for (std::size_t i = 0; i < out.v.size(); ++i) {
                out.v[i] += second.v[i];
            }
            return;
        }
        case KernelFamily::Scaled:
            children()[0].table(a, b, out, m);
            for (double& v : out.v) {
                v *= p[0];
            }
            return;
    }
}

Eigen::MatrixXd KernelModel::gram_values(const std::vector<Point2>& pts) const {
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i <= j; ++i) {
            g(i, j) = g(j, i) = eval(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)]);
        }
    }
    return g;
}

Eigen::MatrixXd KernelModel::cross_values(const std::vector<Point2>& a, const std::vector<Point2>& b) const {
    Eigen::MatrixXd g(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t j = 0; j < b.size(); ++j) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = eval(a[i], b[j]);
        }
    }
    return g;
}

DerivOrder order_of(FunctionalKind kind) {
    switch (kind) {
        case FunctionalKind::Eval: return {0, 0};
        case FunctionalKind::Dt: return {1, 0};
        case FunctionalKind::Dx: return {0, 1};
        case FunctionalKind::Dxx: return {0, 2};
    }
    return {};
}

namespace {

struct PointKey {
    std::size_t operator()(const Point2& p) const {
        const std::size_t h1 = std::hash<double>{}(p.t);
        const std::size_t h2 = std::hash<double>{}(p.x);
        return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
    }
};

struct Grouped {
    std::vector<Point2> points;
    std::vector<std::vector<std::size_t>> members;
    DerivOrder max_order;
};

Grouped group(const std::vector<Functional>& fs) {
    Grouped g;
    std::unordered_map<Point2, std::size_t, PointKey> where;
    for (std::size_t i = 0; i < fs.size(); ++i) {
        auto [it, fresh] = where.try_emplace(fs[i].point, g.points.size());
        if (fresh) {
            g.points.push_back(fs[i].point);
            g.members.emplace_back();
        }
        g.members[it->second].push_back(i);
        const DerivOrder o = order_of(fs[i].kind);
        g.max_order.t = std::max(g.max_order.t, o.t);
        g.max_order.x = std::max(g.max_order.x, o.x);
    }
    return g;
}

void check_capability(const KernelModel& k, const std::vector<Functional>& rows, const std::vector<Functional>& cols) {
    int rmax = 0;
    int cmax = 0;
    for (const auto& f : rows) {
        rmax = std::max(rmax, order_of(f.kind).total());
    }
    for (const auto& f : cols) {
        cmax = std::max(cmax, order_of(f.kind).total());
    }
    if (rmax + cmax > k.smoothness()) {
        std::ostringstream msg;
        msg << "kernel family " << to_string(k.family()) << " (C^" << k.smoothness()
            << ") cannot represent functionals of combined order " << rmax + cmax;
        throw CapabilityError(msg.str());
    }
}

double pick(const DerivTable& tab, FunctionalKind ra, FunctionalKind cb) {
    const DerivOrder a = order_of(ra);
    const DerivOrder b = order_of(cb);
    return tab.at(a.t, a.x, b.t, b.x);
}

}  // namespace

Eigen::MatrixXd gram(const KernelModel& k, const std::vector<Functional>& rows, const std::vector<Functional>& cols) {
    check_capability(k, rows, cols);
    const Grouped gr = group(rows);
    const Grouped gc = group(cols);
    const OrderMask mask{gr.max_order.t, gr.max_order.x, gc.max_order.t, gc.max_order.x};
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    DerivTable tab;
    for (std::size_t v = 0; v < gc.points.size(); ++v) {
        for (std::size_t u = 0; u < gr.points.size(); ++u) {
            k.table(gr.points[u], gc.points[v], tab, mask);
            for (std::size_t i : gr.members[u]) {
                for (std::size_t j : gc.members[v]) {
                    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        pick(tab, rows[i].kind, cols[j].kind);
                }
            }
        }
    }
    return out;
}

Eigen::MatrixXd gram(const KernelModel& k, const std::vector<Functional>& fs) {
    check_capability(k, fs, fs);
    const Grouped g = group(fs);
    const OrderMask mask{g.max_order.t, g.max_order.x, g.max_order.t, g.max_order.x};
    const auto n = static_cast<Eigen::Index>(fs.size());
    Eigen::MatrixXd out(n, n);
    DerivTable tab;
    for (std::size_t v = 0; v < g.points.size(); ++v) {
        for (std::size_t u = 0; u <= v; ++u) {
            k.table(g.points[u], g.points[v], tab, mask);
            for (std::size_t i : g.members[u]) {
                for (std::size_t j : g.members[v]) {
                    const double val = pick(tab, fs[i].kind, fs[j].kind);
                    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = val;
                    out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = val;
                }
            }
        }
    }
    return out;
}

double stationary_correlation(StationaryBase base, double r) {
    switch (base) {
        case StationaryBase::Gaussian:
            return std::exp(-0.5 * r * r);
        case StationaryBase::Matern32:
            return matern_value(KernelFamily::Matern32, 1.0, 1.0, 1.0, {0.0, 0.0}, {0.0, r});
        case StationaryBase::Matern52:
            return matern_value(KernelFamily::Matern52, 1.0, 1.0, 1.0, {0.0, 0.0}, {0.0, r});
        case StationaryBase::Matern72:
            return matern_value(KernelFamily::Matern72, 1.0, 1.0, 1.0, {0.0, 0.0}, {0.0, r});
    }
    return kNaN;
}

double ns_correlation(StationaryBase base, const Eigen::Matrix2d& sigma_a, const Eigen::Matrix2d& sigma_b,
                      const Point2& a, const Point2& b) {
    auto check = [](const Eigen::Matrix2d& s) {
        const double scale = s.cwiseAbs().maxCoeff();
        if (std::abs(s(0, 1) - s(1, 0)) > 1e-14 * scale || !(s(0, 0) > 0.0) || !(s.determinant() > 0.0)) {
            throw std::invalid_argument("ns_correlation: local covariance matrices must be symmetric positive definite");
        }
    };
    check(sigma_a);
    check(sigma_b);
    const Eigen::Matrix2d avg = 0.5 * (sigma_a + sigma_b);
    const Eigen::Vector2d d(a.t - b.t, a.x - b.x);
    const double q = std::sqrt(d.dot(avg.ldlt().solve(d)));
    const double pref =
        std::pow(sigma_a.determinant(), 0.25) * std::pow(sigma_b.determinant(), 0.25) / std::sqrt(avg.determinant());
    return pref * stationary_correlation(base, q);
}

}  // namespace mfgp
