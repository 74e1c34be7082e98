#include "mfgp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "mfgp/empirical.hpp"
#include "mfgp/errors.hpp"
#include "mfgp/reference.hpp"

namespace mfgp {

using nlohmann::json;

std::string to_string(ProblemKind p) {
    switch (p) {
        case ProblemKind::Linearized:
            return "linearized";
        case ProblemKind::Burgers:
            return "burgers";
        case ProblemKind::BurgersVaryingAlpha:
            return "burgers_varying_alpha";
    }
    return "?";
}

std::string to_string(Methodology m) {
    switch (m) {
        case Methodology::MfKerOnly:
            return "mf_ker_only";
        case Methodology::MfMeanKer:
            return "mf_mean_ker";
        case Methodology::MfMeanOnly:
            return "mf_mean_only";
        case Methodology::SingleFidelity:
            return "single_fidelity";
    }
    return "?";
}

ProblemKind problem_from_string(const std::string& s) {
    for (auto p : {ProblemKind::Linearized, ProblemKind::Burgers, ProblemKind::BurgersVaryingAlpha}) {
        if (to_string(p) == s) {
            return p;
        }
    }
    throw ConfigError("unknown problem '" + s + "'");
}

Methodology methodology_from_string(const std::string& s) {
    for (auto m : {Methodology::MfKerOnly, Methodology::MfMeanKer, Methodology::MfMeanOnly,
                   Methodology::SingleFidelity}) {
        if (to_string(m) == s) {
            return m;
        }
    }
    throw ConfigError("unknown methodology '" + s + "'");
}

namespace {

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

bool is_single_family(KernelFamily f) {
    return f != KernelFamily::Sum && f != KernelFamily::Scaled;
}

}  // namespace

// ---------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::defaults(ProblemKind problem) {
    ExperimentConfig c;
    c.problem = problem;
    if (problem == ProblemKind::BurgersVaryingAlpha) {
        c.lf_nu_range = {0.01, 0.03};
        c.kernel = KernelFamily::Gibbs;
    }
    return c;
}

void ExperimentConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ConfigError(what);
        }
    };
    need(is_single_family(kernel), "kernel must be a single family, not a composite");
    need(is_single_family(residual_kernel), "residual_kernel must be a single family, not a composite");
    need(nu > 0.0, "nu must be positive");
    need(alpha > 0.0, "alpha must be positive");
    need(std::abs(alpha_amplitude) < 1.0, "alpha_amplitude must keep alpha(x) positive");
    need(lf_alpha_range.first < lf_alpha_range.second, "lf_alpha_range must satisfy lo < hi");
    need(lf_nu_range.first > 0.0 && lf_nu_range.first < lf_nu_range.second, "lf_nu_range must satisfy 0 < lo < hi");
    need(n_mc >= 2, "n_mc must be at least 2");
    for (const auto* g : {&hf_grid, &lf_grid, &eval_grid}) {
        need((*g)[0] >= 2 && (*g)[1] >= 2, "grids need at least 2 nodes per axis");
    }
    need(m_interior + m_boundary > 0, "collocation set is empty");
    need(n_replicates >= 1, "n_replicates must be at least 1");
    need(threads >= 1, "threads must be at least 1");
    need(sf_sigma2 > 0.0 && sf_theta[0] > 0.0 && sf_theta[1] > 0.0, "single-fidelity kernel parameters must be positive");
    need(lengthscale_floor >= 0.0, "lengthscale_floor must be non-negative");
    need(mean_anchors == "hf" || mean_anchors == "lf", "mean_anchors must be 'hf' or 'lf'");
    need(use_pde || use_data, "at least one of use_pde, use_data is required");
    need(methodology != Methodology::SingleFidelity || use_pde, "single_fidelity needs the PDE constraints");
    // the smoothness class must cover the second space derivative on both arguments
    const KernelFamily solver_family = methodology == Methodology::MfMeanOnly ? residual_kernel : kernel;
    if (methodology != Methodology::SingleFidelity && use_pde) {
        need(solver_family != KernelFamily::Matern32,
             "kernel '" + to_string(solver_family) + "' is not smooth enough for the PDE constraints");
    }
}

BurgersCoefficients ExperimentConfig::coefficients() const {
    switch (problem) {
        case ProblemKind::Linearized:
            return linearized_burgers(alpha, nu);
        case ProblemKind::Burgers:
            return burgers(alpha, nu);
        case ProblemKind::BurgersVaryingAlpha:
            return burgers_varying_alpha(alpha_amplitude, nu);
    }
    throw ConfigError("unknown problem");
}

json ExperimentConfig::to_json() const {
    json j;
    j["problem"] = to_string(problem);
    j["methodology"] = to_string(methodology);
    j["kernel"] = to_string(kernel);
    j["residual_kernel"] = to_string(residual_kernel);
    j["metric"] = to_string(metric);
    j["alpha"] = alpha;
    j["nu"] = nu;
    j["alpha_amplitude"] = alpha_amplitude;
    j["lf_alpha_range"] = {lf_alpha_range.first, lf_alpha_range.second};
    j["lf_nu_range"] = {lf_nu_range.first, lf_nu_range.second};
    j["n_mc"] = n_mc;
    j["hf_grid"] = hf_grid;
    j["lf_grid"] = lf_grid;
    j["eval_grid"] = eval_grid;
    j["m_interior"] = m_interior;
    j["m_boundary"] = m_boundary;
    j["use_pde"] = use_pde;
    j["use_data"] = use_data;
    j["n_replicates"] = n_replicates;
    j["seed"] = seed;
    j["threads"] = threads;
    j["sf_sigma2"] = sf_sigma2;
    j["sf_theta"] = sf_theta;
    j["lengthscale_floor"] = lengthscale_floor;
    j["mean_anchors"] = mean_anchors;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    ProblemKind problem = ProblemKind::Burgers;
    try {
        if (j.contains("problem")) {
            problem = problem_from_string(j.at("problem").get<std::string>());
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("problem: ") + e.what());
    }
    ExperimentConfig c = defaults(problem);
    static const std::set<std::string> known{
        "problem",   "methodology",  "kernel",       "residual_kernel", "metric",     "alpha",     "nu",
        "alpha_amplitude", "lf_alpha_range", "lf_nu_range", "n_mc", "hf_grid",   "lf_grid",   "eval_grid",
        "m_interior", "m_boundary",  "use_pde",      "use_data",        "n_replicates", "seed",    "threads",
        "sf_sigma2", "sf_theta",     "lengthscale_floor", "mean_anchors"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) {
            throw ConfigError("unknown config key '" + key + "'");
        }
        (void)value;
    }
    auto range = [](const json& v) {
        const auto a = v.get<std::vector<double>>();
        if (a.size() != 2) {
            throw ConfigError("expected a two-element array");
        }
        return std::pair<double, double>{a[0], a[1]};
    };
    auto grid = [](const json& v) {
        const auto a = v.get<std::vector<std::size_t>>();
        if (a.size() != 2) {
            throw ConfigError("expected [n_t, n_x]");
        }
        return std::array<std::size_t, 2>{a[0], a[1]};
    };
    std::string key;
    try {
        for (const auto& [k, v] : j.items()) {
            key = k;
            if (k == "problem") {
                continue;
            } else if (k == "methodology") {
                c.methodology = methodology_from_string(v.get<std::string>());
            } else if (k == "kernel") {
                c.kernel = family_from_string(v.get<std::string>());
            } else if (k == "residual_kernel") {
                c.residual_kernel = family_from_string(v.get<std::string>());
            } else if (k == "metric") {
                c.metric = metric_from_string(v.get<std::string>());
            } else if (k == "alpha") {
                c.alpha = v.get<double>();
            } else if (k == "nu") {
                c.nu = v.get<double>();
            } else if (k == "alpha_amplitude") {
                c.alpha_amplitude = v.get<double>();
            } else if (k == "lf_alpha_range") {
                c.lf_alpha_range = range(v);
            } else if (k == "lf_nu_range") {
                c.lf_nu_range = range(v);
            } else if (k == "n_mc") {
                c.n_mc = v.get<std::size_t>();
            } else if (k == "hf_grid") {
                c.hf_grid = grid(v);
            } else if (k == "lf_grid") {
                c.lf_grid = grid(v);
            } else if (k == "eval_grid") {
                c.eval_grid = grid(v);
            } else if (k == "m_interior") {
                c.m_interior = v.get<std::size_t>();
            } else if (k == "m_boundary") {
                c.m_boundary = v.get<std::size_t>();
            } else if (k == "use_pde") {
                c.use_pde = v.get<bool>();
            } else if (k == "use_data") {
                c.use_data = v.get<bool>();
            } else if (k == "n_replicates") {
                c.n_replicates = v.get<std::size_t>();
            } else if (k == "seed") {
                c.seed = v.get<std::uint64_t>();
            } else if (k == "threads") {
                c.threads = v.get<std::size_t>();
            } else if (k == "sf_sigma2") {
                c.sf_sigma2 = v.get<double>();
            } else if (k == "sf_theta") {
                const auto r = range(v);
                c.sf_theta = {r.first, r.second};
            } else if (k == "lengthscale_floor") {
                c.lengthscale_floor = v.get<double>();
            } else if (k == "mean_anchors") {
                c.mean_anchors = v.get<std::string>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(key + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

// ---------------------------------------------------------------- metrics

ErrorMetrics error_metrics(const Field& u, const Field& ref) {
    if (!(u.grid == ref.grid) || u.values.size() != ref.values.size()) {
        throw std::invalid_argument("error_metrics: fields live on different grids");
    }
    double num = 0.0, den = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        const double d = u.values[i] - ref.values[i];
        num += d * d;
        den += ref.values[i] * ref.values[i];
        mx = std::max(mx, std::abs(d));
    }
    ErrorMetrics m;
    m.l2 = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    m.max = mx;
    m.abs_rms = u.values.empty() ? 0.0 : std::sqrt(num / static_cast<double>(u.values.size()));
    return m;
}

namespace {

Summary summarize(const std::vector<double>& v) {
    Summary s;
    if (v.empty()) {
        s.mean = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double sum = 0.0;
    for (double x : v) {
        sum += x;
    }
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) {
            ss += (x - s.mean) * (x - s.mean);
        }
        s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

json summary_json(const Summary& s) {
    json j;
    j["mean"] = std::isfinite(s.mean) ? json(s.mean) : json(nullptr);
    j["std"] = s.std ? json(*s.std) : json(nullptr);
    return j;
}

}  // namespace

Aggregate aggregate(const std::vector<ReplicateRow>& rows) {
    std::vector<double> l2, mx, rms;
    Aggregate a;
    for (const auto& r : rows) {
        if (!r.ok) {
            ++a.n_failed;
            continue;
        }
        ++a.n_ok;
        l2.push_back(r.err.l2);
        mx.push_back(r.err.max);
        rms.push_back(r.err.abs_rms);
    }
    a.l2 = summarize(l2);
    a.max = summarize(mx);
    a.abs_rms = summarize(rms);
    return a;
}

// ---------------------------------------------------------------- cache

namespace {

json kernel_json(const KernelModel& k) {
    json j;
    j["family"] = to_string(k.family());
    if (!k.children().empty()) {
        if (k.family() == KernelFamily::Scaled) {
            j["scale"] = k.params().at(0);
        }
        json ch = json::array();
        for (const auto& c : k.children()) {
            ch.push_back(kernel_json(c));
        }
        j["children"] = ch;
        return j;
    }
    json p = json::object();
    const auto names = k.param_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        p[names[i]] = k.params()[i];
    }
    j["params"] = p;
    return j;
}

std::string cache_key(const ExperimentConfig& c) {
    std::ostringstream os;
    os << std::setprecision(17) << to_string(c.problem) << '|' << c.alpha << '|' << c.nu << '|' << c.alpha_amplitude
       << '|' << c.lf_alpha_range.first << ',' << c.lf_alpha_range.second << '|' << c.lf_nu_range.first << ','
       << c.lf_nu_range.second << '|' << c.n_mc << '|' << c.hf_grid[0] << 'x' << c.hf_grid[1] << '|' << c.lf_grid[0]
       << 'x' << c.lf_grid[1] << '|' << c.eval_grid[0] << 'x' << c.eval_grid[1] << '|' << c.seed;
    return os.str();
}

}  // namespace

struct StudyCache::Entry {
    std::mutex mu;
    BurgersCoefficients coeffs;
    Grid hf, lf, eval;
    std::optional<Field> y_h;
    std::optional<Field> ref_eval;
    std::optional<EmpiricalMoments> moments;
    std::optional<CokrigingModel> cokriging;
    std::map<std::string, FitResult> kernel_fits;
    std::map<std::string, std::shared_ptr<const GprMeanShift>> means;
    std::map<std::string, ResidualKernelFit> residual_fits;
    std::map<std::string, double> timings;
};

StudyCache::StudyCache() = default;
StudyCache::~StudyCache() = default;

StudyCache::Entry& StudyCache::entry(const ExperimentConfig& cfg) {
    auto& slot = entries_[cache_key(cfg)];
    if (!slot) {
        slot = std::make_unique<Entry>();
        slot->coeffs = cfg.coefficients();
        const Domain dom;
        slot->hf = uniform_grid(dom, cfg.hf_grid[0], cfg.hf_grid[1]);
        slot->lf = uniform_grid(dom, cfg.lf_grid[0], cfg.lf_grid[1]);
        slot->eval = uniform_grid(dom, cfg.eval_grid[0], cfg.eval_grid[1]);
    }
    return *slot;
}

namespace {

void timed(StudyCache::Entry& e, const std::string& name, const std::function<void()>& f) {
    const double t0 = now_seconds();
    f();
    e.timings[name] += now_seconds() - t0;
}

const Field& hf_data(StudyCache::Entry& e) {
    if (!e.y_h) {
        staged("reference", [&] { timed(e, "reference_hf", [&] { e.y_h = reference_field(e.coeffs, e.hf); }); });
    }
    return *e.y_h;
}

const Field& eval_reference(StudyCache::Entry& e) {
    if (!e.ref_eval) {
        staged("reference", [&] { timed(e, "reference_eval", [&] { e.ref_eval = reference_field(e.coeffs, e.eval); }); });
    }
    return *e.ref_eval;
}

const EmpiricalMoments& moments(StudyCache::Entry& e, const ExperimentConfig& cfg) {
    if (!e.moments) {
        SampleEnsemble ens = staged("ensemble", [&] {
            SampleEnsemble out;
            timed(e, "ensemble", [&] {
                ParamSampler ps;
                ps.alpha_range = cfg.lf_alpha_range;
                ps.nu_range = cfg.lf_nu_range;
                ps.seed = derive_seed(cfg.seed, 1);
                EnsembleSettings es;
                BurgersCoefficients lf_model;
                if (cfg.problem == ProblemKind::Linearized) {
                    es.solver = LowFiSolver::LinearizedFd;
                    lf_model = linearized_burgers(cfg.alpha, cfg.nu);
                } else {
                    es.solver = LowFiSolver::BurgersFft;
                    lf_model = burgers(cfg.alpha, cfg.nu);
                }
                out = generate_ensemble(ps, cfg.n_mc, e.lf, lf_model, es);
            });
            return out;
        });
        staged("moments", [&] { timed(e, "moments", [&] { e.moments = empirical_moments(ens); }); });
    }
    return *e.moments;
}

const CokrigingModel& cokriging(StudyCache::Entry& e, const ExperimentConfig& cfg) {
    if (!e.cokriging) {
        const EmpiricalMoments& m = moments(e, cfg);
        const Field& y = hf_data(e);
        staged("cokriging", [&] {
            timed(e, "cokriging", [&] {
                CokrigingConfig cc;
                cc.opt.seed = derive_seed(cfg.seed, 2);
                cc.ell_floor_spacing = cfg.lengthscale_floor;
                e.cokriging = fit_cokriging(m, y, cc);
            });
        });
    }
    return *e.cokriging;
}

const FitResult& kernel_fit(StudyCache::Entry& e, const ExperimentConfig& cfg) {
    std::ostringstream key;
    key << to_string(cfg.kernel) << '|' << to_string(cfg.metric) << '|' << cfg.lengthscale_floor;
    auto it = e.kernel_fits.find(key.str());
    if (it == e.kernel_fits.end()) {
        const EmpiricalMoments& m = moments(e, cfg);
        FitResult r = staged("kernel_fit", [&] {
            FitResult out;
            timed(e, "kernel_fit", [&] {
                const KernelSpace space =
                    resolution_limited(default_space(cfg.kernel, m.cov.diagonal().mean()), e.lf, cfg.lengthscale_floor);
                OptimConfig oc;
                oc.seed = derive_seed(cfg.seed, 3);
                out = fit_kernel(space, e.lf.points(), m.cov, cfg.metric, oc);
            });
            return out;
        });
        it = e.kernel_fits.emplace(key.str(), std::move(r)).first;
    }
    return it->second;
}

// mu_H = rho mu_L + mu_d on the anchor grid
Eigen::VectorXd hf_mean_values(StudyCache::Entry& e, const ExperimentConfig& cfg, const Grid& anchors) {
    const EmpiricalMoments& m = moments(e, cfg);
    const CokrigingModel& ck = cokriging(e, cfg);
    Eigen::VectorXd mu_l;
    if (anchors == e.lf) {
        mu_l = m.mean;
    } else {
        mu_l = restrict_to_hf(m, anchors).mean;
    }
    return ck.params.rho * mu_l + Eigen::VectorXd::Constant(mu_l.size(), ck.params.mu_d);
}

std::shared_ptr<const GprMeanShift> mean_shift(StudyCache::Entry& e, const ExperimentConfig& cfg) {
    auto it = e.means.find(cfg.mean_anchors);
    if (it == e.means.end()) {
        const Grid& anchors = cfg.mean_anchors == "lf" ? e.lf : e.hf;
        const Eigen::VectorXd values = hf_mean_values(e, cfg, anchors);
        auto shift = staged("mean_fit", [&] {
            std::shared_ptr<const GprMeanShift> out;
            timed(e, "mean_fit", [&] {
                MeanFitConfig mc;
                mc.opt.seed = derive_seed(cfg.seed, 4);
                mc.anchor_set = cfg.mean_anchors;
                mc.min_theta_t = cfg.lengthscale_floor * (anchors.t_nodes()[1] - anchors.t_nodes()[0]);
                mc.min_theta_x = cfg.lengthscale_floor * (anchors.x_nodes()[1] - anchors.x_nodes()[0]);
                out = std::make_shared<const GprMeanShift>(fit_mean(values, anchors.points(), mc));
            });
            return out;
        });
        it = e.means.emplace(cfg.mean_anchors, std::move(shift)).first;
    }
    return it->second;
}

const ResidualKernelFit& residual_fit(StudyCache::Entry& e, const ExperimentConfig& cfg) {
    std::ostringstream key;
    key << to_string(cfg.residual_kernel) << '|' << cfg.lengthscale_floor;
    auto it = e.residual_fits.find(key.str());
    if (it == e.residual_fits.end()) {
        const Field& y = hf_data(e);
        const Eigen::VectorXd mu_h = hf_mean_values(e, cfg, e.hf);
        const Eigen::VectorXd r =
            Eigen::Map<const Eigen::VectorXd>(y.values.data(), static_cast<Eigen::Index>(y.values.size())) - mu_h;
        ResidualKernelFit fit = staged("residual_fit", [&] {
            ResidualKernelFit out;
            timed(e, "residual_fit", [&] {
                const double var = std::max(r.squaredNorm() / static_cast<double>(r.size()), 1e-6);
                const KernelSpace space =
                    resolution_limited(default_space(cfg.residual_kernel, var), e.hf, cfg.lengthscale_floor);
                OptimConfig oc;
                oc.seed = derive_seed(cfg.seed, 5);
                out = residual_kernel_mle(r, e.hf.points(), space, oc);
            });
            return out;
        });
        it = e.residual_fits.emplace(key.str(), std::move(fit)).first;
    }
    return it->second;
}

struct Prepared {
    KernelModel kernel;
    std::shared_ptr<const MeanShift> mean;
    json fitted = json::object();
    std::vector<std::string> warnings;
};

Prepared prepare(StudyCache::Entry& e, const ExperimentConfig& cfg) {
    Prepared p;
    if (cfg.methodology == Methodology::SingleFidelity) {
        p.kernel = KernelModel::gaussian(cfg.sf_sigma2, cfg.sf_theta[0], cfg.sf_theta[1]);
        p.fitted["kernel"] = kernel_json(p.kernel);
        return p;
    }
    const CokrigingModel& ck = cokriging(e, cfg);
    {
        json c;
        c["rho"] = ck.params.rho;
        c["mu_d"] = ck.params.mu_d;
        c["sigma_d"] = ck.params.sigma_d;
        c["ell_t"] = ck.params.ell_t;
        c["ell_x"] = ck.params.ell_x;
        c["loglik"] = ck.loglik;
        c["loglik_at_start"] = ck.loglik_at_start;
        c["nugget"] = ck.nugget;
        c["identifiable"] = ck.identifiable;
        c["restriction_exact"] = ck.restriction_exact;
        p.fitted["cokriging"] = c;
        for (const auto& w : ck.warnings) {
            p.warnings.push_back("cokriging: " + w);
        }
    }
    if (cfg.methodology == Methodology::MfKerOnly || cfg.methodology == Methodology::MfMeanKer) {
        const FitResult& fr = kernel_fit(e, cfg);
        CokrigingModel full = ck;
        full.k_opt = fr.kernel;
        p.kernel = compose_hf_kernel(full);
        json f;
        f["metric"] = to_string(fr.metric);
        f["kernel"] = kernel_json(fr.kernel);
        f["distance"] = fr.distance_value;
        f["initial_distance"] = fr.initial_distance;
        f["converged"] = fr.converged;
        p.fitted["k_opt"] = f;
        p.fitted["k_hf"] = kernel_json(p.kernel);
    }
    if (cfg.methodology == Methodology::MfMeanKer || cfg.methodology == Methodology::MfMeanOnly) {
        auto shift = mean_shift(e, cfg);
        const MeanModel& mm = shift->model();
        json m;
        m["kernel"] = kernel_json(mm.kernel);
        m["lambda"] = mm.lambda;
        m["loglik"] = mm.loglik;
        m["anchors"] = mm.anchor_set;
        p.fitted["mean"] = m;
        p.mean = shift;
    }
    if (cfg.methodology == Methodology::MfMeanOnly) {
        const ResidualKernelFit& rf = residual_fit(e, cfg);
        p.kernel = rf.kernel;
        json r;
        r["kernel"] = kernel_json(rf.kernel);
        r["loglik"] = rf.loglik;
        r["nugget"] = rf.nugget;
        r["at_lower_bound"] = rf.at_lower_bound;
        p.fitted["residual_kernel"] = r;
        if (!rf.at_lower_bound.empty()) {
            std::string names;
            for (const auto& n : rf.at_lower_bound) {
                names += (names.empty() ? "" : ", ") + n;
            }
            p.warnings.push_back("residual kernel: parameters at their lower bound (" + names + ")");
        }
    }
    return p;
}

struct SolveOutcome {
    ReplicateRow row;
    std::optional<Field> field;
};

SolveOutcome solve_once(const StudyCache::Entry& e, const ExperimentConfig& cfg, const Prepared& p, std::size_t index,
                        bool keep_field) {
    SolveOutcome out;
    out.row.index = index;
    out.row.seed = collocation_seed(cfg, index);
    try {
        const CollocationSet col = staged("collocation", [&] {
            return sample_collocation(Domain{}, cfg.m_interior, cfg.m_boundary, out.row.seed);
        });
        const bool with_data = cfg.use_data && cfg.methodology != Methodology::SingleFidelity;
        ConstraintSet cons = make_constraints(col, e.coeffs, with_data ? &*e.y_h : nullptr);
        cons.use_pde = cfg.use_pde;
        cons.use_boundary = cfg.use_pde;
        cons.use_data = with_data;
        const GPSolution sol = staged("solve", [&] {
            return p.mean ? solve_with_shift(p.kernel, e.coeffs, cons, p.mean)
                          : solve_nonlinear_gn(p.kernel, e.coeffs, cons);
        });
        Field u = staged("evaluate", [&] { return evaluate(sol, e.eval); });
        for (double v : u.values) {
            if (!std::isfinite(v)) {
                throw StageError("evaluate", "non-finite solution value");
            }
        }
        out.row.err = error_metrics(u, *e.ref_eval);
        out.row.iterations = sol.trace.iterations;
        out.row.converged = sol.trace.converged;
        out.row.eta = sol.eta;
        out.row.pde_residual = sol.pde_residual;
        out.row.constraint_residual = sol.constraint_residual;
        out.row.ok = true;
        if (keep_field) {
            out.field = std::move(u);
        }
    } catch (const std::exception& ex) {
        out.row.ok = false;
        out.row.error = ex.what();
    }
    return out;
}

json solver_json() {
    const GnConfig gn;
    const NuggetConfig nc;
    json j;
    j["gauss_newton"] = {{"max_iters", gn.max_iters},
                         {"step_tol", gn.step_tol},
                         {"residual_tol", gn.residual_tol},
                         {"damping", gn.damping},
                         {"warm_start", gn.warm_start}};
    j["nugget"] = {{"eta", nc.eta}, {"escalation", nc.escalation}, {"max_escalations", nc.max_escalations}};
    return j;
}

RunReport run_replicates(const ExperimentConfig& cfg, const std::vector<std::size_t>& indices, StudyCache* cache) {
    staged("config", [&] { cfg.validate(); });
    StudyCache local;
    StudyCache& c = cache ? *cache : local;
    StudyCache::Entry& e = c.entry(cfg);
    std::lock_guard<std::mutex> lock(e.mu);

    const double t0 = now_seconds();
    const std::map<std::string, double> before = e.timings;
    hf_data(e);
    eval_reference(e);
    const Prepared p = prepare(e, cfg);

    RunReport rep;
    rep.config = cfg;
    rep.reference_method = reference_method(e.coeffs);
    rep.fitted = p.fitted;
    rep.fitted["solver"] = solver_json();
    rep.warnings = p.warnings;

    const double t_solve = now_seconds();
    std::vector<SolveOutcome> outs(indices.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < indices.size(); k = next++) {
            outs[k] = solve_once(e, cfg, p, indices[k], false);
        }
    };
    const std::size_t n_threads = std::min(cfg.threads, std::max<std::size_t>(indices.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    for (auto& o : outs) {
        rep.rows.push_back(o.row);
    }
    rep.agg = aggregate(rep.rows);
    for (const auto& r : rep.rows) {
        if (r.ok) {
            // re-solve the first successful replicate to keep its field; cheaper than holding every field
            SolveOutcome again = solve_once(e, cfg, p, r.index, true);
            rep.field = std::move(again.field);
            break;
        }
    }
    rep.reference = *e.ref_eval;
    rep.timings["solves"] = now_seconds() - t_solve;
    for (const auto& [k, v] : e.timings) {
        const auto it = before.find(k);
        const double prior = it == before.end() ? 0.0 : it->second;
        if (v - prior > 0.0) {
            rep.timings[k] = v - prior;
        }
    }
    rep.timings["total"] = now_seconds() - t0;
    return rep;
}

}  // namespace

std::uint64_t collocation_seed(const ExperimentConfig& cfg, std::size_t index) {
    return derive_seed(cfg.seed, 1000 + index);
}

RunReport run_methodology(const ExperimentConfig& cfg, std::size_t index, StudyCache* cache) {
    return run_replicates(cfg, {index}, cache);
}

RunReport replicate_study(const ExperimentConfig& cfg, std::size_t n_runs, StudyCache* cache) {
    if (n_runs < 1) {
        throw StageError("config", "n_runs must be at least 1");
    }
    std::vector<std::size_t> idx(n_runs);
    for (std::size_t i = 0; i < n_runs; ++i) {
        idx[i] = i;
    }
    return run_replicates(cfg, idx, cache);
}

json RunReport::to_json(bool with_timings) const {
    json j;
    j["config"] = config.to_json();
    j["reference_method"] = reference_method;
    j["fitted"] = fitted;
    j["warnings"] = warnings;
    json rows_j = json::array();
    for (const auto& r : rows) {
        json x;
        x["index"] = r.index;
        x["seed"] = r.seed;
        x["ok"] = r.ok;
        if (r.ok) {
            x["l2"] = r.err.l2;
            x["max"] = r.err.max;
            x["abs_rms"] = r.err.abs_rms;
            x["iterations"] = r.iterations;
            x["converged"] = r.converged;
            x["eta"] = r.eta;
            x["pde_residual"] = r.pde_residual;
            x["constraint_residual"] = r.constraint_residual;
        } else {
            x["error"] = r.error;
        }
        rows_j.push_back(x);
    }
    j["replicates"] = rows_j;
    json a;
    a["n_ok"] = agg.n_ok;
    a["n_failed"] = agg.n_failed;
    a["l2"] = summary_json(agg.l2);
    a["max"] = summary_json(agg.max);
    a["abs_rms"] = summary_json(agg.abs_rms);
    j["aggregate"] = a;
    if (with_timings) {
        j["timings"] = timings;
    }
    return j;
}

// ---------------------------------------------------------------- sweep

SweepResult sensitivity_sweep(const ExperimentConfig& base, std::array<double, 2> lo, std::array<double, 2> hi,
                              std::size_t n_samples, std::uint64_t seed, std::size_t n_bins) {
    if (n_samples < 1) {
        throw StageError("config", "sweep needs at least one sample");
    }
    if (n_bins < 1 || lo[0] > hi[0] || lo[1] > hi[1] || lo[0] <= 0.0 || lo[1] <= 0.0) {
        throw StageError("config", "sweep box must satisfy 0 < lo <= hi");
    }
    ExperimentConfig cfg = base;
    cfg.methodology = Methodology::SingleFidelity;
    staged("config", [&] { cfg.validate(); });
    StudyCache cache;
    StudyCache::Entry& e = cache.entry(cfg);
    eval_reference(e);
    hf_data(e);

    std::mt19937_64 rng(derive_seed(seed, 0));
    std::uniform_real_distribution<double> ut(lo[0], hi[0]), ux(lo[1], hi[1]);
    SweepResult res;
    for (std::size_t s = 0; s < n_samples; ++s) {
        SweepRow row;
        row.theta_t = lo[0] == hi[0] ? lo[0] : ut(rng);
        row.theta_x = lo[1] == hi[1] ? lo[1] : ux(rng);
        cfg.sf_theta = {row.theta_t, row.theta_x};
        Prepared p;
        p.kernel = KernelModel::gaussian(cfg.sf_sigma2, row.theta_t, row.theta_x);
        const SolveOutcome o = solve_once(e, cfg, p, 0, false);
        row.ok = o.row.ok;
        row.error = o.row.error;
        row.err = o.row.err;
        res.rows.push_back(row);
    }
    double lmin = std::numeric_limits<double>::infinity(), lmax = -lmin;
    for (const auto& r : res.rows) {
        if (r.ok && r.err.l2 > 0.0) {
            lmin = std::min(lmin, std::log10(r.err.l2));
            lmax = std::max(lmax, std::log10(r.err.l2));
        }
    }
    if (!std::isfinite(lmin)) {
        lmin = -3.0;
        lmax = 0.0;
    }
    if (lmax - lmin < 1e-12) {
        lmin -= 0.5;
        lmax += 0.5;
    }
    res.counts.assign(n_bins, 0);
    for (std::size_t b = 0; b <= n_bins; ++b) {
        res.bin_edges.push_back(lmin + (lmax - lmin) * static_cast<double>(b) / static_cast<double>(n_bins));
    }
    for (const auto& r : res.rows) {
        if (!r.ok || !(r.err.l2 > 0.0)) {
            ++res.failures;
            continue;
        }
        const double v = std::log10(r.err.l2);
        auto b = static_cast<std::size_t>((v - lmin) / (lmax - lmin) * static_cast<double>(n_bins));
        res.counts[std::min(b, n_bins - 1)]++;
    }
    return res;
}

// ---------------------------------------------------------------- table 2

std::vector<Table2Cell> table2(const ExperimentConfig& base, std::size_t n_runs) {
    StudyCache cache;
    std::vector<Table2Cell> cells;
    for (KernelFamily fam : {KernelFamily::Gibbs, KernelFamily::NSAmplitude, KernelFamily::Gaussian}) {
        for (Methodology m : {Methodology::MfKerOnly, Methodology::MfMeanKer, Methodology::MfMeanOnly}) {
            ExperimentConfig cfg = base;
            cfg.problem = ProblemKind::Burgers;
            cfg.methodology = m;
            cfg.kernel = fam;
            cfg.residual_kernel = fam;
            cells.push_back({fam, m, replicate_study(cfg, n_runs, &cache)});
        }
    }
    return cells;
}

// ---------------------------------------------------------------- output

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) {
        throw StageError("report", "cannot write '" + path + "'");
    }
    os << std::setprecision(17);
    return os;
}

}  // namespace

void write_field_csv(const std::string& path, const Field& u, const Field* ref) {
    std::ofstream os = open_out(path);
    os << (ref ? "t,x,u,reference,error\n" : "t,x,u\n");
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        const Point2 p = u.grid.point(i);
        os << p.t << ',' << p.x << ',' << u.values[i];
        if (ref) {
            os << ',' << ref->values[i] << ',' << u.values[i] - ref->values[i];
        }
        os << '\n';
    }
}

void write_errors_csv(const std::string& path, const std::vector<ReplicateRow>& rows) {
    std::ofstream os = open_out(path);
    os << "replicate,seed,status,l2,max,abs_rms,iterations,converged\n";
    for (const auto& r : rows) {
        os << r.index << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',';
        if (r.ok) {
            os << r.err.l2 << ',' << r.err.max << ',' << r.err.abs_rms << ',' << r.iterations << ','
               << (r.converged ? 1 : 0);
        } else {
            os << ",,,,";
        }
        os << '\n';
    }
}

void write_sweep_csv(const std::string& rows_path, const std::string& hist_path, const SweepResult& r) {
    {
        std::ofstream os = open_out(rows_path);
        os << "theta_t,theta_x,status,l2,max\n";
        for (const auto& row : r.rows) {
            os << row.theta_t << ',' << row.theta_x << ',' << (row.ok ? "ok" : "failed") << ',';
            if (row.ok) {
                os << row.err.l2 << ',' << row.err.max;
            } else {
                os << ',';
            }
            os << '\n';
        }
    }
    std::ofstream os = open_out(hist_path);
    os << "log10_l2_lo,log10_l2_hi,count\n";
    for (std::size_t b = 0; b < r.counts.size(); ++b) {
        os << r.bin_edges[b] << ',' << r.bin_edges[b + 1] << ',' << r.counts[b] << '\n';
    }
    os << "failed,failed," << r.failures << '\n';
}

void write_json(const std::string& path, const json& j) {
    std::ofstream os = open_out(path);
    os << j.dump(2) << '\n';
}

}  // namespace mfgp
