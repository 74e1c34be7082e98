// mfgp: multifidelity GP solver for Burgers' equation.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mfgp/errors.hpp"
#include "mfgp/harness.hpp"

namespace fs = std::filesystem;
using namespace mfgp;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::string out = ".";
    std::size_t threads = 0;
    bool no_timings = false;
};

ExperimentConfig load_or_default(const Common& c) {
    ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
    if (c.threads > 0) {
        cfg.threads = c.threads;
    }
    return cfg;
}

std::string out_path(const Common& c, const std::string& name) {
    fs::create_directories(c.out);
    return (fs::path(c.out) / name).string();
}

void emit(const Common& c, const RunReport& rep) {
    write_json(out_path(c, "report.json"), rep.to_json(!c.no_timings));
    write_errors_csv(out_path(c, "errors.csv"), rep.rows);
    if (rep.field) {
        write_field_csv(out_path(c, "field.csv"), *rep.field, rep.reference ? &*rep.reference : nullptr);
    }
}

void print_summary(const std::string& label, const RunReport& rep) {
    std::printf("%s: %zu ok, %zu failed", label.c_str(), rep.agg.n_ok, rep.agg.n_failed);
    if (rep.agg.n_ok > 0) {
        std::printf("  L2 %.4e", rep.agg.l2.mean);
        if (rep.agg.l2.std) {
            std::printf(" +- %.2e", *rep.agg.l2.std);
        }
        std::printf("  max %.4e", rep.agg.max.mean);
    }
    std::printf("\n");
    for (const auto& w : rep.warnings) {
        std::printf("  warning: %s\n", w.c_str());
    }
    for (const auto& r : rep.rows) {
        if (!r.ok) {
            std::printf("  replicate %zu failed: %s\n", r.index, r.error.c_str());
        }
    }
}

void add_common(CLI::App* app, Common& c, bool config_required) {
    auto* opt = app->add_option("--config", c.config, "experiment config (JSON)");
    if (config_required) {
        opt->required()->check(CLI::ExistingFile);
    } else {
        opt->check(CLI::ExistingFile);
    }
    app->add_option("--out", c.out, "output directory");
    app->add_option("--threads", c.threads, "worker threads for replicates");
    app->add_flag("--no-timings", c.no_timings, "omit timing fields from report.json");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multifidelity physics-informed GP solver for Burgers' equation"};
    app.require_subcommand(1);

    Common run_c, rep_c, sweep_c, abl_c, t2_c;
    std::size_t run_index = 0;
    auto* run = app.add_subcommand("run", "single replicate of one methodology");
    add_common(run, run_c, true);
    run->add_option("--replicate", run_index, "replicate index (selects the collocation seed)");

    std::size_t rep_n = 80;
    auto* rep = app.add_subcommand("replicate", "repeat a methodology over fresh collocation points");
    add_common(rep, rep_c, true);
    rep->add_option("--n", rep_n, "number of replicates")->check(CLI::PositiveNumber);

    std::size_t sweep_n = 100, sweep_bins = 20;
    std::uint64_t sweep_seed = 0;
    std::vector<double> sweep_lo{0.01, 0.01}, sweep_hi{1.0, 1.0};
    auto* sweep = app.add_subcommand("sweep", "single-fidelity errors over random Gaussian lengthscales");
    add_common(sweep, sweep_c, false);
    sweep->add_option("--n", sweep_n, "number of samples")->check(CLI::PositiveNumber);
    sweep->add_option("--seed", sweep_seed, "sampling seed");
    sweep->add_option("--lo", sweep_lo, "lower corner (theta_t theta_x)")->expected(2);
    sweep->add_option("--hi", sweep_hi, "upper corner (theta_t theta_x)")->expected(2);
    sweep->add_option("--bins", sweep_bins, "histogram bins")->check(CLI::PositiveNumber);

    std::string drop;
    std::size_t abl_n = 10;
    auto* abl = app.add_subcommand("ablate", "drop one constraint block and compare on matched seeds");
    add_common(abl, abl_c, false);
    abl->add_option("--drop", drop, "constraint block to remove")->required()->check(CLI::IsMember({"data", "pde"}));
    abl->add_option("--n", abl_n, "number of replicates")->check(CLI::PositiveNumber);

    std::size_t t2_n = 10;
    auto* t2 = app.add_subcommand("table2", "kernel class x methodology grid for nonlinear Burgers");
    add_common(t2, t2_c, false);
    t2->add_option("--n", t2_n, "replicates per cell")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const ExperimentConfig cfg = load_or_default(run_c);
            const RunReport r = run_methodology(cfg, run_index);
            emit(run_c, r);
            print_summary(to_string(cfg.methodology), r);
            return r.agg.n_ok == 1 ? 0 : 3;
        }
        if (*rep) {
            const ExperimentConfig cfg = load_or_default(rep_c);
            const RunReport r = replicate_study(cfg, rep_n);
            emit(rep_c, r);
            print_summary(to_string(cfg.methodology), r);
            return r.agg.n_ok > 0 ? 0 : 3;
        }
        if (*sweep) {
            ExperimentConfig cfg = load_or_default(sweep_c);
            const SweepResult s = sensitivity_sweep(cfg, {sweep_lo[0], sweep_lo[1]}, {sweep_hi[0], sweep_hi[1]},
                                                    sweep_n, sweep_seed, sweep_bins);
            write_sweep_csv(out_path(sweep_c, "errors.csv"), out_path(sweep_c, "histogram.csv"), s);
            json j;
            cfg.methodology = Methodology::SingleFidelity;
            j["config"] = cfg.to_json();
            j["box"] = {{"lo", sweep_lo}, {"hi", sweep_hi}};
            j["n_samples"] = sweep_n;
            j["seed"] = sweep_seed;
            json rows = json::array();
            for (const auto& r : s.rows) {
                json x{{"theta_t", r.theta_t}, {"theta_x", r.theta_x}, {"ok", r.ok}};
                if (r.ok) {
                    x["l2"] = r.err.l2;
                    x["max"] = r.err.max;
                } else {
                    x["error"] = r.error;
                }
                rows.push_back(x);
            }
            j["samples"] = rows;
            j["histogram"] = {{"log10_l2_edges", s.bin_edges}, {"counts", s.counts}, {"failures", s.failures}};
            write_json(out_path(sweep_c, "report.json"), j);
            std::printf("sweep: %zu samples, %zu failed\n", s.rows.size(), s.failures);
            return 0;
        }
        if (*abl) {
            ExperimentConfig cfg = load_or_default(abl_c);
            StudyCache cache;
            const RunReport full = replicate_study(cfg, abl_n, &cache);
            ExperimentConfig dropped = cfg;
            (drop == "data" ? dropped.use_data : dropped.use_pde) = false;
            const RunReport ab = replicate_study(dropped, abl_n, &cache);
            json j;
            j["drop"] = drop;
            j["full"] = full.to_json(!abl_c.no_timings);
            j["ablated"] = ab.to_json(!abl_c.no_timings);
            std::size_t worse = 0, matched = 0;
            for (std::size_t i = 0; i < full.rows.size(); ++i) {
                if (full.rows[i].ok && ab.rows[i].ok) {
                    ++matched;
                    worse += ab.rows[i].err.l2 > full.rows[i].err.l2 ? 1 : 0;
                }
            }
            j["matched_pairs"] = matched;
            j["ablated_worse"] = worse;
            write_json(out_path(abl_c, "report.json"), j);
            write_errors_csv(out_path(abl_c, "errors.csv"), ab.rows);
            write_errors_csv(out_path(abl_c, "errors_full.csv"), full.rows);
            if (ab.field) {
                write_field_csv(out_path(abl_c, "field.csv"), *ab.field, ab.reference ? &*ab.reference : nullptr);
            }
            print_summary("full", full);
            print_summary("drop " + drop, ab);
            std::printf("ablated worse on %zu of %zu matched seeds\n", worse, matched);
            return 0;
        }
        if (*t2) {
            const ExperimentConfig cfg = load_or_default(t2_c);
            const auto cells = table2(cfg, t2_n);
            json j = json::array();
            for (const auto& c : cells) {
                json x;
                x["kernel"] = to_string(c.family);
                x["methodology"] = to_string(c.methodology);
                x["report"] = c.report.to_json(!t2_c.no_timings);
                j.push_back(x);
                print_summary(to_string(c.family) + " / " + to_string(c.methodology), c.report);
            }
            write_json(out_path(t2_c, "report.json"), j);
            return 0;
        }
    } catch (const StageError& e) {
        std::cerr << "mfgp: error [" << e.stage() << "] " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "mfgp: error [config] " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "mfgp: error [internal] " << e.what() << '\n';
        return 2;
    }
    return 1;
}
