#include "mfgp/cokriging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mfgp/errors.hpp"

namespace mfgp {

HfRestriction restrict_to_hf(const EmpiricalMoments& moments, const Grid& hf_grid) {
    const Grid& lf = moments.grid;
    HfRestriction r;
    if (lf.contains(hf_grid)) {
        std::vector<Eigen::Index> idx(hf_grid.size());
        for (std::size_t k = 0; k < hf_grid.size(); ++k) {
            const Point2 p = hf_grid.point(k);
            idx[k] = static_cast<Eigen::Index>(
                lf.index(*find_node(lf.t_nodes(), p.t), *find_node(lf.x_nodes(), p.x)));
        }
        r.mean = moments.mean(idx);
        r.cov = moments.cov(idx, idx);
        return r;
    }
    const InterpolationMatrix w = interpolation_matrix(lf, hf_grid, InterpKind::Linear);
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(w.rows), static_cast<Eigen::Index>(w.cols));
    for (std::size_t i = 0; i < w.rows; ++i) {
        for (const auto& [j, v] : w.entries[i]) {
            dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += v;
        }
    }
    r.mean = dense * moments.mean;
    r.cov = dense * moments.cov * dense.transpose();
    r.exact = false;
    r.warning = "high-fidelity grid is not a node subset of the low-fidelity grid; moments bilinearly interpolated";
    return r;
}

KernelModel CokrigingModel::discrepancy_kernel() const {
    return KernelModel::gaussian(params.sigma_d * params.sigma_d, params.ell_t, params.ell_x);
}

namespace {

constexpr double kLadder[] = {0.0, 1e-10, 1e-8, 1e-6};

Eigen::MatrixXd covariance(const CokrigingParams& p, const Eigen::MatrixXd& k_l, const std::vector<Point2>& pts) {
    const KernelModel kd = KernelModel::gaussian(p.sigma_d * p.sigma_d, p.ell_t, p.ell_x);
    return p.rho * p.rho * k_l + kd.gram_values(pts);
}

// Cholesky of c + s I along the nugget ladder; returns the shift used.
double factor_with_ladder(const Eigen::MatrixXd& c, Eigen::LLT<Eigen::MatrixXd>& llt) {
    const auto n = c.rows();
    const double scale = c.trace() / static_cast<double>(std::max<Eigen::Index>(n, 1));
    for (double eta : kLadder) {
        const double s = eta * scale;
        llt.compute(c + s * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
            return s;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c, Eigen::EigenvaluesOnly);
    std::ostringstream msg;
    msg << "cokriging covariance not positive definite after nugget 1e-6*trace/N (eigenvalues in ["
        << es.eigenvalues().minCoeff() << ", " << es.eigenvalues().maxCoeff() << "])";
    throw NumericalError(msg.str());
}

}  // namespace

LoglikValue cokriging_loglik_detail(const CokrigingParams& p, const Eigen::VectorXd& mu_l_on_h,
                                    const Eigen::VectorXd& y_h, const Eigen::MatrixXd& k_l_on_h,
                                    const std::vector<Point2>& hf_points) {
    const auto n = static_cast<Eigen::Index>(hf_points.size());
    if (mu_l_on_h.size() != n || y_h.size() != n || k_l_on_h.rows() != n || k_l_on_h.cols() != n) {
        throw std::invalid_argument("cokriging_loglik: inconsistent dimensions");
    }
    if (!(p.sigma_d > 0.0) || !(p.ell_t > 0.0) || !(p.ell_x > 0.0)) {
        throw std::invalid_argument("cokriging_loglik: sigma_d and lengthscales must be positive");
    }
    Eigen::LLT<Eigen::MatrixXd> llt;
    const double nug = factor_with_ladder(covariance(p, k_l_on_h, hf_points), llt);
    const Eigen::VectorXd r = y_h - p.rho * mu_l_on_h - Eigen::VectorXd::Constant(n, p.mu_d);
    const Eigen::VectorXd w = llt.matrixL().solve(r);
    const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double v = -0.5 * w.squaredNorm() - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    return {v, nug};
}

double cokriging_loglik(double rho, double mu_d, double sigma_d, double ell_t, double ell_x,
                        const Eigen::VectorXd& mu_l_on_h, const Eigen::VectorXd& y_h, const Eigen::MatrixXd& k_l_on_h,
                        const std::vector<Point2>& hf_points) {
    return cokriging_loglik_detail({rho, mu_d, sigma_d, ell_t, ell_x}, mu_l_on_h, y_h, k_l_on_h, hf_points).value;
}

CokrigingModel fit_cokriging(const EmpiricalMoments& moments, const Field& y_h, const CokrigingConfig& cfg) {
    const HfRestriction hf = restrict_to_hf(moments, y_h.grid);
    const std::vector<Point2> pts = y_h.grid.points();
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y_h.values.data(), static_cast<Eigen::Index>(y_h.values.size()));

    const double ymax = y.size() > 0 ? y.cwiseAbs().maxCoeff() : 0.0;
    const ParamBound mu_bound{-(10.0 * ymax + 1.0), 10.0 * ymax + 1.0, false};
    auto axis_bound = [&](const std::vector<double>& nodes) {
        ParamBound b = cfg.ell;
        if (nodes.size() > 1 && cfg.ell_floor_spacing > 0.0) {
            double h = std::numeric_limits<double>::infinity();
            for (std::size_t i = 1; i < nodes.size(); ++i) {
                h = std::min(h, nodes[i] - nodes[i - 1]);
            }
            b.lo = std::min(std::max(b.lo, cfg.ell_floor_spacing * h), b.hi);
        }
        return b;
    };
    const ParamBound ell_t = axis_bound(y_h.grid.t_nodes());
    const ParamBound ell_x = axis_bound(y_h.grid.x_nodes());
    const std::vector<ParamBound> bounds{cfg.rho, mu_bound, cfg.sigma_d, ell_t, ell_x};
    const CokrigingParams& s = cfg.start;
    const std::vector<double> x0{s.rho, s.mu_d, s.sigma_d, std::clamp(s.ell_t, ell_t.lo, ell_t.hi),
                                 std::clamp(s.ell_x, ell_x.lo, ell_x.hi)};

    auto unpack = [](const std::vector<double>& x) { return CokrigingParams{x[0], x[1], x[2], x[3], x[4]}; };
    auto objective = [&](const std::vector<double>& x) {
        return -cokriging_loglik_detail(unpack(x), hf.mean, y, hf.cov, pts).value;
    };
    const OptimResult r = minimize_box(objective, x0, bounds, cfg.opt);

    CokrigingModel m;
    m.params = unpack(r.x);
    const LoglikValue best = cokriging_loglik_detail(m.params, hf.mean, y, hf.cov, pts);
    m.loglik = best.value;
    m.nugget = best.nugget;
    m.loglik_at_start = -r.initial_value;
    m.restriction_exact = hf.exact;
    if (!hf.exact) {
        m.warnings.push_back(hf.warning);
    }

    // rho is informed through the low-fidelity covariance; flag a profile that is flat in rho
    const double y_scale = std::max(1.0, y.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(y.size(), 1)));
    bool flat = hf.cov.trace() <= 1e-12 * y_scale;
    if (!flat) {
        double max_drop = 0.0;
        for (double d : {-0.5, 0.5}) {
            CokrigingParams q = m.params;
            q.rho = std::clamp(q.rho + d, cfg.rho.lo, cfg.rho.hi);
            Eigen::LLT<Eigen::MatrixXd> llt;
            try {
                factor_with_ladder(covariance(q, hf.cov, pts), llt);
            } catch (const NumericalError&) {
                continue;
            }
            const Eigen::VectorXd ones = Eigen::VectorXd::Ones(y.size());
            const Eigen::VectorXd res = y - q.rho * hf.mean;
            q.mu_d = ones.dot(llt.solve(res)) / ones.dot(llt.solve(ones));
            max_drop = std::max(max_drop, m.loglik - cokriging_loglik_detail(q, hf.mean, y, hf.cov, pts).value);
        }
        flat = max_drop < 1e-6 * (1.0 + std::abs(m.loglik));
    }
    if (flat) {
        m.identifiable = false;
        m.warnings.emplace_back("likelihood is flat in rho; cokriging scale not identifiable");
    }
    return m;
}

KernelModel compose_hf_kernel(const CokrigingModel& model) {
    if (!model.k_opt) {
        throw std::invalid_argument("compose_hf_kernel: model has no fitted low-fidelity kernel");
    }
    const double r2 = model.params.rho * model.params.rho;
    return KernelModel::sum(KernelModel::scaled(r2, *model.k_opt), model.discrepancy_kernel());
}

}  // namespace mfgp
