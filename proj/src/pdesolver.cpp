#include "mfgp/pdesolver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "mfgp/errors.hpp"

namespace mfgp {

void ConstraintSet::validate() const {
    if (boundary.size() != boundary_values.size() || data.size() != data_values.size()) {
        throw std::invalid_argument("ConstraintSet: points and target values differ in length");
    }
    if (active_rows() == 0) {
        throw std::invalid_argument("ConstraintSet: no active constraints");
    }
    for (double v : boundary_values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("ConstraintSet: non-finite boundary target");
        }
    }
    for (double v : data_values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("ConstraintSet: non-finite data target");
        }
    }
}

std::size_t ConstraintSet::active_rows() const {
    return (use_pde ? interior.size() : 0) + (use_boundary ? boundary.size() : 0) + (use_data ? data.size() : 0);
}

ConstraintSet make_constraints(const CollocationSet& colloc, const BurgersCoefficients& coeffs,
                               const Field* observations) {
    const Domain dom;
    ConstraintSet c;
    c.interior = colloc.interior;
    c.boundary = colloc.boundary;
    c.boundary_values.reserve(c.boundary.size());
    for (const Point2& p : c.boundary) {
        const bool side = p.x == dom.x_lo || p.x == dom.x_hi;
        c.boundary_values.push_back(side ? 0.0 : coeffs.u0(p.x));
    }
    if (observations != nullptr) {
        c.data = observations->grid.points();
        c.data_values = observations->values;
    }
    return c;
}

std::vector<OperatorFunctional> GPSolution::representers() const {
    std::vector<OperatorFunctional> out;
    std::unordered_map<double, std::vector<std::size_t>> by_t;
    for (std::size_t i = 0; i < functionals.size(); ++i) {
        const Functional& f = functionals[i];
        std::size_t slot = out.size();
        auto& bucket = by_t[f.point.t];
        for (std::size_t j : bucket) {
            if (out[j].point == f.point) {
                slot = j;
                break;
            }
        }
        if (slot == out.size()) {
            out.push_back({f.point, {}});
            bucket.push_back(slot);
        }
        out[slot].weights[static_cast<std::size_t>(f.kind)] += coefficients(static_cast<Eigen::Index>(i));
    }
    return out;
}

namespace {

struct Row {
    std::size_t first = 0;
    int len = 1;
    std::array<double, 4> w{1.0, 0.0, 0.0, 0.0};
};

class Assembler {
  public:
    Assembler(const KernelModel& kernel, const BurgersCoefficients& coeffs, const ConstraintSet& cons,
              const NuggetConfig& ncfg, std::shared_ptr<const MeanShift> mean)
        : kernel_(kernel), coeffs_(coeffs), cons_(cons), ncfg_(ncfg), mean_(std::move(mean)) {
        cons_.validate();
        if (cons_.use_pde && !cons_.interior.empty() && kernel_.smoothness() < 4) {
            std::ostringstream msg;
            msg << "kernel family " << to_string(kernel_.family()) << " is C^" << kernel_.smoothness()
                << "; the second-order operator needs C^4";
            throw CapabilityError(msg.str());
        }
        if (cons_.use_pde) {
            for (const Point2& p : cons_.interior) {
                for (auto k : {FunctionalKind::Eval, FunctionalKind::Dt, FunctionalKind::Dx, FunctionalKind::Dxx}) {
                    prims_.push_back({k, p});
                }
                mu_int_.push_back(mean_ ? mean_->jet(p) : Jet2{});
                coef_.push_back({coeffs_.alpha(p.x), coeffs_.nu(p.x), coeffs_.u0(p.x),
                                 cons_.forcing ? cons_.forcing(p) : 0.0});
            }
        }
        n_int_ = mu_int_.size();
        auto add_eval = [&](const std::vector<Point2>& pts, const std::vector<double>& vals) {
            for (std::size_t i = 0; i < pts.size(); ++i) {
                prims_.push_back({FunctionalKind::Eval, pts[i]});
                const double mu = mean_ ? mean_->jet(pts[i]).u : 0.0;
                eval_target_.push_back(vals[i] - mu);
            }
        };
        if (cons_.use_boundary) {
            add_eval(cons_.boundary, cons_.boundary_values);
        }
        if (cons_.use_data) {
            add_eval(cons_.data, cons_.data_values);
        }
        theta_ = gram(kernel_, prims_);
        for (std::size_t k = 0; k < 4; ++k) {
            double s = 0.0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < prims_.size(); ++i) {
                if (static_cast<std::size_t>(prims_[i].kind) == k) {
                    s += theta_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
                    ++n;
                }
            }
            block_mean_[k] = n > 0 ? s / static_cast<double>(n) : 0.0;
        }
        eta_ = ncfg_.eta;
        apply_nugget(eta_);
    }

    std::size_t n_interior() const { return n_int_; }
    std::size_t n_prims() const { return prims_.size(); }
    std::size_t n_rows() const { return n_int_ + eval_target_.size(); }

    /// Solve min |h| s.t. A h = b for the given interior rows; returns z = Theta A^T lambda and c = A^T lambda.
    void solve(const std::vector<Row>& rows, const Eigen::VectorXd& b, Eigen::VectorXd& z, Eigen::VectorXd& c,
               Eigen::VectorXd& lambda) {
        const auto nr = static_cast<Eigen::Index>(rows.size());
        const auto np = static_cast<Eigen::Index>(prims_.size());
        for (int attempt = 0;; ++attempt) {
            Eigen::MatrixXd bt(np, nr);
            for (Eigen::Index r = 0; r < nr; ++r) {
                const Row& row = rows[static_cast<std::size_t>(r)];
                bt.col(r) = row.w[0] * theta_.col(static_cast<Eigen::Index>(row.first));
                for (int k = 1; k < row.len; ++k) {
                    bt.col(r) += row.w[k] * theta_.col(static_cast<Eigen::Index>(row.first) + k);
                }
            }
            Eigen::MatrixXd kk(nr, nr);
            for (Eigen::Index s = 0; s < nr; ++s) {
                const Row& row = rows[static_cast<std::size_t>(s)];
                kk.row(s) = row.w[0] * bt.row(static_cast<Eigen::Index>(row.first));
                for (int k = 1; k < row.len; ++k) {
                    kk.row(s) += row.w[k] * bt.row(static_cast<Eigen::Index>(row.first) + k);
                }
            }
            kk = 0.5 * (kk + kk.transpose()).eval();
            Eigen::LLT<Eigen::MatrixXd> llt(kk);
            if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
                lambda = llt.solve(b);
                z = bt * lambda;
                c = Eigen::VectorXd::Zero(np);
                for (Eigen::Index r = 0; r < nr; ++r) {
                    const Row& row = rows[static_cast<std::size_t>(r)];
                    for (int k = 0; k < row.len; ++k) {
                        c(static_cast<Eigen::Index>(row.first) + k) += row.w[k] * lambda(r);
                    }
                }
                return;
            }
            if (attempt >= ncfg_.max_escalations) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kk, Eigen::EigenvaluesOnly);
                std::ostringstream msg;
                msg << "collocation system singular after nugget escalation to eta=" << eta_
                    << " (eigenvalues in [" << es.eigenvalues().minCoeff() << ", " << es.eigenvalues().maxCoeff()
                    << "])";
                throw NumericalError(msg.str());
            }
            const double next = eta_ * ncfg_.escalation;
            apply_nugget(next - eta_);
            eta_ = next;
        }
    }

    const std::vector<Functional>& prims() const { return prims_; }
    const std::vector<Jet2>& mu_int() const { return mu_int_; }
    const std::vector<std::array<double, 4>>& coef() const { return coef_; }  // alpha, nu, u0, f
    const std::vector<double>& eval_target() const { return eval_target_; }
    double eta() const { return eta_; }
    std::array<double, 4> block_nugget() const {
        std::array<double, 4> out{};
        for (std::size_t k = 0; k < 4; ++k) {
            out[k] = eta_ * block_mean_[k];
        }
        return out;
    }

  private:
    void apply_nugget(double eta) {
        for (std::size_t i = 0; i < prims_.size(); ++i) {
            const auto k = static_cast<std::size_t>(prims_[i].kind);
            theta_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += eta * block_mean_[k];
        }
    }

    const KernelModel& kernel_;
    const BurgersCoefficients& coeffs_;
    const ConstraintSet& cons_;
    NuggetConfig ncfg_;
    std::shared_ptr<const MeanShift> mean_;
    std::vector<Functional> prims_;
    std::vector<Jet2> mu_int_;
    std::vector<std::array<double, 4>> coef_;
    std::vector<double> eval_target_;
    std::size_t n_int_ = 0;
    Eigen::MatrixXd theta_;
    std::array<double, 4> block_mean_{};
    double eta_ = 0.0;
};

// Residual of the operator and the size of its largest term.
std::pair<double, double> interior_residual(const Assembler& as, const Eigen::VectorXd& z, bool linearized,
                                            std::size_t i) {
    const Jet2& m = as.mu_int()[i];
    const auto& c = as.coef()[i];
    const auto b = static_cast<Eigen::Index>(4 * i);
    const double u = z(b) + m.u;
    const double ut = z(b + 1) + m.ut;
    const double ux = z(b + 2) + m.ux;
    const double uxx = z(b + 3) + m.uxx;
    const double transport = linearized ? c[2] : u;
    const double adv = c[0] * transport * ux;
    const double dif = c[1] * uxx;
    return {ut + adv - dif - c[3], std::max({std::abs(ut), std::abs(adv), std::abs(dif), std::abs(c[3])})};
}

double residual_l1(const Assembler& as, const Eigen::VectorXd& z, bool linearized) {
    double out = 0.0;
    for (std::size_t i = 0; i < as.n_interior(); ++i) {
        out += std::abs(interior_residual(as, z, linearized, i).first);
    }
    return out;
}

std::pair<double, double> residual_norm(const Assembler& as, const Eigen::VectorXd& z, bool linearized) {
    double res = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < as.n_interior(); ++i) {
        const auto [r, s] = interior_residual(as, z, linearized, i);
        res = std::max(res, std::abs(r));
        scale = std::max(scale, s);
    }
    return {res, scale};
}

GPSolution run(const KernelModel& kernel, const BurgersCoefficients& coeffs, const ConstraintSet& cons,
               const GnConfig& gn, const NuggetConfig& nugget, std::shared_ptr<const MeanShift> mean) {
    Assembler as(kernel, coeffs, cons, nugget, mean);
    const std::size_t ni = as.n_interior();
    const std::size_t np = as.n_prims();
    const bool linearized = coeffs.linearized;

    std::vector<Row> rows(as.n_rows());
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < as.eval_target().size(); ++j) {
        rows[ni + j] = Row{4 * ni + j, 1, {1.0, 0.0, 0.0, 0.0}};
        b(static_cast<Eigen::Index>(ni + j)) = as.eval_target()[j];
    }

    Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    for (std::size_t j = 0; j < as.eval_target().size(); ++j) {
        z(static_cast<Eigen::Index>(4 * ni + j)) = as.eval_target()[j];
    }

    GPSolution sol;
    sol.kernel = kernel;
    sol.functionals = as.prims();
    sol.mean = mean;
    sol.linear = linearized || ni == 0;

    Eigen::VectorXd z_new, c, c_new, lambda;
    const std::size_t max_iters = sol.linear ? 1 : std::max<std::size_t>(gn.max_iters, 1);
    double mu = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        for (std::size_t i = 0; i < ni; ++i) {
            const Jet2& m = as.mu_int()[i];
            const auto& cf = as.coef()[i];
            const double alpha = cf[0], nu = cf[1], f = cf[3];
            Row& row = rows[i];
            row.first = 4 * i;
            row.len = 4;
            double rhs = 0.0;
            if (linearized || (it == 0 && gn.warm_start && !mean)) {
                const double a = alpha * cf[2];
                row.w = {0.0, 1.0, a, -nu};
                rhs = f - (m.ut + a * m.ux - nu * m.uxx);
            } else {
                const auto base = static_cast<Eigen::Index>(4 * i);
                const double u = z(base) + m.u;
                const double ux = z(base + 2) + m.ux;
                row.w = {alpha * ux, 1.0, alpha * u, -nu};
                rhs = f - m.ut + nu * m.uxx + alpha * u * ux - alpha * (ux * m.u + u * m.ux);
            }
            b(static_cast<Eigen::Index>(i)) = rhs;
        }
        as.solve(rows, b, z_new, c_new, lambda);

        double step = (z_new - z).norm() / std::max(z_new.norm(), 1e-300);
        auto [res, scale] = residual_norm(as, z_new, linearized);
        if (gn.damping && !sol.linear && it > 0) {
            // backtracking on the l1 merit 0.5 z'Theta^-1 z + mu |F(z)|_1
            mu = std::max(mu, 1.1 * lambda.head(static_cast<Eigen::Index>(ni)).cwiseAbs().maxCoeff());
            const Eigen::VectorXd d = z_new - z;
            const double f0 = 0.5 * c.dot(z);
            const double phi0 = f0 + mu * residual_l1(as, z, linearized);
            const double slope = c.dot(d) - mu * residual_l1(as, z, linearized);
            double s = 1.0;
            for (int k = 0; k < 30; ++k) {
                const Eigen::VectorXd zt = z + s * d;
                const Eigen::VectorXd ct = c + s * (c_new - c);
                const double phi = 0.5 * ct.dot(zt) + mu * residual_l1(as, zt, linearized);
                if (phi <= phi0 + 1e-4 * s * std::min(slope, 0.0)) {
                    break;
                }
                s *= 0.5;
            }
            if (s < 1.0) {
                z_new = z + s * d;
                c_new = c + s * (c_new - c);
                std::tie(res, scale) = residual_norm(as, z_new, linearized);
            }
        }
        z = z_new;
        c = c_new;
        sol.trace.iterations = it + 1;
        sol.trace.step_norms.push_back(step);
        sol.trace.residuals.push_back(res);
        if (sol.linear || res <= gn.residual_tol * std::max(1.0, scale) || step <= gn.step_tol) {
            sol.trace.converged = true;
            break;
        }
    }

    sol.coefficients = c;
    sol.latent = z;
    sol.eta = as.eta();
    sol.block_nugget = as.block_nugget();
    double cres = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double v = 0.0;
        for (int k = 0; k < rows[r].len; ++k) {
            v += rows[r].w[k] * z(static_cast<Eigen::Index>(rows[r].first) + k);
        }
        cres = std::max(cres, std::abs(v - b(static_cast<Eigen::Index>(r))));
    }
    sol.constraint_residual = cres;
    sol.pde_residual = sol.trace.residuals.empty() ? 0.0 : sol.trace.residuals.back();
    return sol;
}

}  // namespace

GPSolution solve_linear(const KernelModel& kernel, const BurgersCoefficients& coeffs, const ConstraintSet& cons,
                        const NuggetConfig& nugget, std::shared_ptr<const MeanShift> mean) {
    if (!coeffs.linearized) {
        throw std::invalid_argument("solve_linear: coefficients describe the nonlinear operator");
    }
    return run(kernel, coeffs, cons, GnConfig{}, nugget, std::move(mean));
}

GPSolution solve_nonlinear_gn(const KernelModel& kernel, const BurgersCoefficients& coeffs, const ConstraintSet& cons,
                              const GnConfig& gn, const NuggetConfig& nugget, std::shared_ptr<const MeanShift> mean) {
    return run(kernel, coeffs, cons, gn, nugget, std::move(mean));
}

GPSolution solve_with_shift(const KernelModel& kernel, const BurgersCoefficients& coeffs, const ConstraintSet& cons,
                            std::shared_ptr<const MeanShift> mean, const GnConfig& gn, const NuggetConfig& nugget) {
    if (!mean) {
        throw std::invalid_argument("solve_with_shift: mean is required");
    }
    return run(kernel, coeffs, cons, gn, nugget, std::move(mean));
}

namespace {

template <bool WithDerivs>
Jet2 contract(const KernelModel& k, const std::vector<OperatorFunctional>& reps, const OrderMask& mask,
              const Point2& p) {
    DerivTable tab;
    Jet2 j;
    for (const auto& r : reps) {
        k.table(r.point, p, tab, mask);
        for (int kind = 0; kind < 4; ++kind) {
            const double w = r.weights[static_cast<std::size_t>(kind)];
            if (w == 0.0) {
                continue;
            }
            const DerivOrder d = order_of(static_cast<FunctionalKind>(kind));
            j.u += w * tab.at(d.t, d.x, 0, 0);
            if constexpr (WithDerivs) {
                j.ut += w * tab.at(d.t, d.x, 1, 0);
                j.ux += w * tab.at(d.t, d.x, 0, 1);
                j.uxx += w * tab.at(d.t, d.x, 0, 2);
            }
        }
    }
    return j;
}

OrderMask functional_mask(const std::vector<OperatorFunctional>& reps) {
    OrderMask m{0, 0, 0, 0};
    for (const auto& r : reps) {
        if (r.weights[1] != 0.0) {
            m.ta = 1;
        }
        if (r.weights[2] != 0.0) {
            m.xa = std::max(m.xa, 1);
        }
        if (r.weights[3] != 0.0) {
            m.xa = 2;
        }
    }
    return m;
}

}  // namespace

double evaluate_at(const GPSolution& sol, const Point2& p) {
    const auto reps = sol.representers();
    const double mu = sol.mean ? sol.mean->jet(p).u : 0.0;
    return mu + contract<false>(sol.kernel, reps, functional_mask(reps), p).u;
}

Jet2 evaluate_jet(const GPSolution& sol, const Point2& p) {
    const auto reps = sol.representers();
    OrderMask m = functional_mask(reps);
    m.tb = 1;
    m.xb = 2;
    Jet2 j = contract<true>(sol.kernel, reps, m, p);
    if (sol.mean) {
        const Jet2 mu = sol.mean->jet(p);
        j.u += mu.u;
        j.ut += mu.ut;
        j.ux += mu.ux;
        j.uxx += mu.uxx;
    }
    return j;
}

Field evaluate(const GPSolution& sol, const Grid& pts) {
    const auto reps = sol.representers();
    const OrderMask m = functional_mask(reps);
    Field f{pts, std::vector<double>(pts.size())};
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const Point2 p = pts.point(k);
        f.values[k] = (sol.mean ? sol.mean->jet(p).u : 0.0) + contract<false>(sol.kernel, reps, m, p).u;
    }
    return f;
}

}  // namespace mfgp
