#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mfgp/cokriging.hpp"
#include "mfgp/fitting.hpp"
#include "mfgp/kernels.hpp"
#include "mfgp/lowfi.hpp"
#include "mfgp/meanfield.hpp"
#include "mfgp/pdesolver.hpp"
#include "mfgp/problem.hpp"

namespace mfgp {

enum class ProblemKind { Linearized, Burgers, BurgersVaryingAlpha };
enum class Methodology { MfKerOnly, MfMeanKer, MfMeanOnly, SingleFidelity };

std::string to_string(ProblemKind p);
std::string to_string(Methodology m);
ProblemKind problem_from_string(const std::string& s);
Methodology methodology_from_string(const std::string& s);

/// Failure inside one pipeline stage; what() is "<stage>: <message>".
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

struct ExperimentConfig {
    ProblemKind problem = ProblemKind::Burgers;
    Methodology methodology = Methodology::MfKerOnly;
    KernelFamily kernel = KernelFamily::Gaussian;           // class S
    KernelFamily residual_kernel = KernelFamily::Gaussian;  // class S'
    DistanceMetric metric = DistanceMetric::Frobenius;

    double alpha = 1.0;
    double nu = 0.02;
    double alpha_amplitude = 0.2;  // burgers_varying_alpha only
    std::pair<double, double> lf_alpha_range{0.8, 1.1};
    std::pair<double, double> lf_nu_range{0.015, 0.03};

    std::size_t n_mc = 1000;
    std::array<std::size_t, 2> hf_grid{10, 10};
    std::array<std::size_t, 2> lf_grid{10, 20};
    std::array<std::size_t, 2> eval_grid{100, 100};
    std::size_t m_interior = 1000;
    std::size_t m_boundary = 201;

    bool use_pde = true;
    bool use_data = true;

    std::size_t n_replicates = 10;
    std::uint64_t seed = 1;
    std::size_t threads = 1;

    // single_fidelity kernel
    double sf_sigma2 = 1.0;
    std::array<double, 2> sf_theta{0.47, 0.07};

    double lengthscale_floor = 0.5;  // in units of the grid spacing the kernel is fitted on
    std::string mean_anchors = "hf";

    /// Defaults for one problem (the varying-alpha study widens the low-fidelity nu prior).
    static ExperimentConfig defaults(ProblemKind problem);

    void validate() const;
    [[nodiscard]] BurgersCoefficients coefficients() const;
    [[nodiscard]] nlohmann::json to_json() const;
    /// Unknown keys and ill-typed values throw ConfigError.
    static ExperimentConfig from_json(const nlohmann::json& j);
};

ExperimentConfig load_config(const std::string& path);

struct ErrorMetrics {
    double l2 = 0.0;       // relative
    double max = 0.0;
    double abs_rms = 0.0;
};

ErrorMetrics error_metrics(const Field& u, const Field& ref);

struct ReplicateRow {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    ErrorMetrics err;
    std::size_t iterations = 0;
    bool converged = false;
    double eta = 0.0;
    double pde_residual = 0.0;
    double constraint_residual = 0.0;
};

struct Summary {
    double mean = 0.0;
    std::optional<double> std;  // absent for a single value
};

struct Aggregate {
    std::size_t n_ok = 0;
    std::size_t n_failed = 0;
    Summary l2;
    Summary max;
    Summary abs_rms;
};

Aggregate aggregate(const std::vector<ReplicateRow>& rows);

struct RunReport {
    ExperimentConfig config;
    std::string reference_method;
    nlohmann::json fitted = nlohmann::json::object();
    std::vector<std::string> warnings;
    std::vector<ReplicateRow> rows;
    Aggregate agg;
    std::map<std::string, double> timings;
    std::optional<Field> field;      // solution of the first successful replicate
    std::optional<Field> reference;  // on the evaluation grid

    [[nodiscard]] nlohmann::json to_json(bool with_timings = true) const;
};

/// Ensemble, moments and fits shared by every replicate (and by studies that agree on them).
class StudyCache {
  public:
    StudyCache();
    ~StudyCache();
    StudyCache(const StudyCache&) = delete;
    StudyCache& operator=(const StudyCache&) = delete;

    struct Entry;
    Entry& entry(const ExperimentConfig& cfg);

  private:
    std::map<std::string, std::unique_ptr<Entry>> entries_;
};

/// One replicate with collocation seed derived from (cfg.seed, index).
RunReport run_methodology(const ExperimentConfig& cfg, std::size_t index = 0, StudyCache* cache = nullptr);

/// n_runs replicates differing only in the collocation points; failures are counted and excluded.
RunReport replicate_study(const ExperimentConfig& cfg, std::size_t n_runs, StudyCache* cache = nullptr);

std::uint64_t collocation_seed(const ExperimentConfig& cfg, std::size_t index);

struct SweepRow {
    double theta_t = 0.0;
    double theta_x = 0.0;
    bool ok = false;
    std::string error;
    ErrorMetrics err;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<double> bin_edges;  // log10 relative L2
    std::vector<std::size_t> counts;
    std::size_t failures = 0;
};

/// Single-fidelity solves with (theta_t, theta_x) uniform on the box; histogram of log10 L2.
SweepResult sensitivity_sweep(const ExperimentConfig& base, std::array<double, 2> lo, std::array<double, 2> hi,
                              std::size_t n_samples, std::uint64_t seed, std::size_t n_bins = 20);

struct Table2Cell {
    KernelFamily family;
    Methodology methodology;
    RunReport report;
};

/// Kernel classes {Gibbs, NSAmplitude, Gaussian} x {ker-only, mean-ker, mean-only}, one shared cache.
std::vector<Table2Cell> table2(const ExperimentConfig& base, std::size_t n_runs);

void write_field_csv(const std::string& path, const Field& u, const Field* ref);
void write_errors_csv(const std::string& path, const std::vector<ReplicateRow>& rows);
void write_sweep_csv(const std::string& rows_path, const std::string& hist_path, const SweepResult& r);
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace mfgp
