#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mfgp/problem.hpp"

namespace mfgp {

struct Field {
    Grid grid;
    std::vector<double> values;

    [[nodiscard]] double at(std::size_t i_t, std::size_t i_x) const { return values[grid.index(i_t, i_x)]; }
};

/// Uniform priors for the uncertain scalar coefficients of the low-fidelity model.
struct ParamSampler {
    std::pair<double, double> alpha_range{0.8, 1.1};
    std::pair<double, double> nu_range{0.015, 0.03};
    std::uint64_t seed = 0;

    void validate() const;
};

struct DrawnParams {
    double alpha = 0.0;
    double nu = 0.0;
};

/// Parameters of sample `index`; stream derived from (seed, index) only.
DrawnParams draw_parameters(const ParamSampler& sampler, std::size_t index);

struct FdSettings {
    std::size_t n_t_fine = 401;
    std::size_t n_x_fine = 401;
};

struct FftSettings {
    std::size_t n_modes = 256;
    double dt = 1e-3;
    bool dealias = true;
};

/// Crank-Nicolson (central advection + diffusion) solve of
/// u_t + alpha u0(x) u_x - nu u_xx = 0, u(0,x) = u0(x), u(t,+-1) = 0.
Field solve_linearized_fd(const BurgersCoefficients& coeffs, double alpha, double nu, const Grid& out_grid,
                          const FdSettings& settings = {});

/// Same scheme with spatially varying coefficients taken from `coeffs`.
Field solve_linearized_fd(const BurgersCoefficients& coeffs, const Grid& out_grid, const FdSettings& settings);

/// Fourier pseudospectral solve of u_t + alpha(x) u u_x - nu u_xx = 0 with u(0,x) = -sin(pi x) on the
/// odd periodic extension of [-1,1] (period 4), integrating-factor RK4 in time.
Field solve_burgers_fft(double alpha, double nu, const Grid& out_grid, const FftSettings& settings = {});
Field solve_burgers_fft(const std::function<double(double)>& alpha, double nu, const Grid& out_grid,
                        const FftSettings& settings = {});

enum class LowFiSolver { LinearizedFd, BurgersFft };

struct SampleEnsemble {
    Grid grid;
    Eigen::MatrixXd samples;  // n_mc x N_L, row i = realization i
    std::vector<DrawnParams> params;

    [[nodiscard]] std::size_t n_mc() const { return static_cast<std::size_t>(samples.rows()); }
};

struct EnsembleSettings {
    LowFiSolver solver = LowFiSolver::BurgersFft;
    FdSettings fd;
    FftSettings fft;
};

SampleEnsemble generate_ensemble(const ParamSampler& sampler, std::size_t n_mc, const Grid& grid,
                                 const BurgersCoefficients& coeffs, const EnsembleSettings& settings);

std::string to_string(LowFiSolver s);

}  // namespace mfgp
