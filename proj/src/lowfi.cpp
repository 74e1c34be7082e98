#include "mfgp/lowfi.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fftw3.h>

#include "mfgp/errors.hpp"

namespace mfgp {

void ParamSampler::validate() const {
    if (alpha_range.first > alpha_range.second || nu_range.first > nu_range.second) {
        throw std::invalid_argument("ParamSampler: range lower bound exceeds upper bound");
    }
    if (!(nu_range.first > 0.0)) {
        throw std::invalid_argument("ParamSampler: viscosity range must be positive");
    }
}

DrawnParams draw_parameters(const ParamSampler& sampler, std::size_t index) {
    std::mt19937_64 rng(derive_seed(sampler.seed, index));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double ua = unit(rng);
    const double un = unit(rng);
    const auto [alo, ahi] = sampler.alpha_range;
    const auto [nlo, nhi] = sampler.nu_range;
    return {alo + (ahi - alo) * ua, nlo + (nhi - nlo) * un};
}

std::string to_string(LowFiSolver s) {
    return s == LowFiSolver::LinearizedFd ? "linearized_fd" : "burgers_fft";
}

namespace {

// Pin the analytically known rows: t = 0 carries u0, x = +-1 carries 0.
void impose_known_values(Field& f, const std::function<double(double)>& u0) {
    const Domain dom;
    const auto& tn = f.grid.t_nodes();
    const auto& xn = f.grid.x_nodes();
    for (std::size_t it = 0; it < tn.size(); ++it) {
        for (std::size_t ix = 0; ix < xn.size(); ++ix) {
            const std::size_t k = f.grid.index(it, ix);
            if (xn[ix] == dom.x_lo || xn[ix] == dom.x_hi) {
                f.values[k] = 0.0;
            } else if (tn[it] == dom.t_lo) {
                f.values[k] = u0(xn[ix]);
            }
        }
    }
}

void check_out_grid(const Grid& g) {
    const Domain dom;
    if (g.t_nodes().front() < dom.t_lo || g.t_nodes().back() > dom.t_hi || g.x_nodes().front() < dom.x_lo ||
        g.x_nodes().back() > dom.x_hi) {
        throw std::invalid_argument("output grid leaves the space-time domain");
    }
}

Field crank_nicolson(const std::function<double(double)>& advection, const std::function<double(double)>& nu,
                     const std::function<double(double)>& u0, const Grid& out_grid, const FdSettings& s) {
    check_out_grid(out_grid);
    if (s.n_t_fine < out_grid.n_t() || s.n_x_fine < out_grid.n_x() || s.n_x_fine < 3 || s.n_t_fine < 2) {
        throw ConfigError("linearized FD: fine resolution must be at least the output resolution");
    }
    const Domain dom;
    const Grid fine = uniform_grid(dom, s.n_t_fine, s.n_x_fine);
    const auto& xs = fine.x_nodes();
    const std::size_t nx = xs.size();
    const double dx = xs[1] - xs[0];
    const double dt = fine.t_nodes()[1] - fine.t_nodes()[0];

    std::vector<double> c(nx), v(nx);
    double c_max = 0.0;
    double nu_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nx; ++i) {
        c[i] = advection(xs[i]);
        v[i] = nu(xs[i]);
        c_max = std::max(c_max, std::abs(c[i]));
        nu_min = std::min(nu_min, v[i]);
    }
    if (!(nu_min > 0.0)) {
        throw std::invalid_argument("linearized FD: viscosity must be positive");
    }
    const double peclet = c_max * dx / nu_min;
    if (peclet > 2.0) {
        std::ostringstream msg;
        msg << "linearized FD: cell Peclet number " << peclet << " > 2; use n_x_fine >= "
            << static_cast<std::size_t>(std::ceil(c_max * 2.0 / (2.0 * nu_min))) + 1;
        throw ConfigError(msg.str());
    }
    const double courant = c_max * dt / dx;
    if (courant > 1.0) {
        std::ostringstream msg;
        msg << "linearized FD: Courant number " << courant << " > 1; use n_t_fine >= "
            << static_cast<std::size_t>(std::ceil(c_max / dx)) + 1;
        throw ConfigError(msg.str());
    }

    // L u_i = lo_i u_{i-1} + di_i u_i + up_i u_{i+1}
    std::vector<double> lo(nx), di(nx), up(nx);
    for (std::size_t i = 1; i + 1 < nx; ++i) {
        lo[i] = c[i] / (2.0 * dx) + v[i] / (dx * dx);
        di[i] = -2.0 * v[i] / (dx * dx);
        up[i] = -c[i] / (2.0 * dx) + v[i] / (dx * dx);
    }

    std::vector<double> values(fine.size());
    std::vector<double> u(nx), rhs(nx), cp(nx), dp(nx);
    for (std::size_t i = 0; i < nx; ++i) {
        u[i] = u0(xs[i]);
    }
    u.front() = 0.0;
    u.back() = 0.0;
    std::copy(u.begin(), u.end(), values.begin());

    const double h = 0.5 * dt;
    for (std::size_t n = 1; n < fine.n_t(); ++n) {
        for (std::size_t i = 1; i + 1 < nx; ++i) {
            rhs[i] = u[i] + h * (lo[i] * u[i - 1] + di[i] * u[i] + up[i] * u[i + 1]);
        }
        // Thomas sweep on interior nodes 1..nx-2, Dirichlet zeros at the ends
        const std::size_t first = 1;
        const std::size_t last = nx - 2;
        for (std::size_t i = first; i <= last; ++i) {
            const double a = -h * lo[i];
            const double b = 1.0 - h * di[i];
            const double cc = -h * up[i];
            if (i == first) {
                cp[i] = cc / b;
                dp[i] = rhs[i] / b;
            } else {
                const double m = b - a * cp[i - 1];
                cp[i] = cc / m;
                dp[i] = (rhs[i] - a * dp[i - 1]) / m;
            }
        }
        u[last] = dp[last];
        for (std::size_t i = last; i-- > first;) {
            u[i] = dp[i] - cp[i] * u[i + 1];
        }
        std::copy(u.begin(), u.end(), values.begin() + static_cast<std::ptrdiff_t>(n * nx));
    }

    Field out{out_grid, interpolate(fine, values, out_grid, InterpKind::Cubic)};
    impose_known_values(out, u0);
    return out;
}

struct FftwPlans {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
    double* real = nullptr;
    fftw_complex* spec = nullptr;
    std::size_t m = 0;

    explicit FftwPlans(std::size_t size) : m(size) {
        real = fftw_alloc_real(m);
        spec = fftw_alloc_complex(m / 2 + 1);
        forward = fftw_plan_dft_r2c_1d(static_cast<int>(m), real, spec, FFTW_ESTIMATE);
        backward = fftw_plan_dft_c2r_1d(static_cast<int>(m), spec, real, FFTW_ESTIMATE);
    }
    ~FftwPlans() {
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
        fftw_free(real);
        fftw_free(spec);
    }
    FftwPlans(const FftwPlans&) = delete;
    FftwPlans& operator=(const FftwPlans&) = delete;
};

using Spectrum = std::vector<std::complex<double>>;

class PseudoSpectralBurgers {
  public:
    PseudoSpectralBurgers(const std::function<double(double)>& alpha, double nu, const FftSettings& s)
        : nu_(nu), m_(2 * s.n_modes), plans_(m_), k_(m_ / 2 + 1), alpha_ext_(m_), x_(m_) {
        for (std::size_t j = 0; j < m_; ++j) {
            // extended period [-1, 3): odd reflection about x = 1
            x_[j] = -1.0 + 4.0 * static_cast<double>(j) / static_cast<double>(m_);
            alpha_ext_[j] = x_[j] <= 1.0 ? alpha(x_[j]) : alpha(2.0 - x_[j]);
        }
        const std::size_t cutoff = s.dealias ? m_ / 3 : m_ / 2;
        for (std::size_t q = 0; q < k_.size(); ++q) {
            k_[q] = std::numbers::pi * static_cast<double>(q) / 2.0;
        }
        keep_.assign(k_.size(), 1.0);
        for (std::size_t q = cutoff + 1; q < k_.size(); ++q) {
            keep_[q] = 0.0;
        }
        keep_.back() = 0.0;  // Nyquist
    }

    [[nodiscard]] double k_max_retained() const {
        double km = 0.0;
        for (std::size_t q = 0; q < k_.size(); ++q) {
            if (keep_[q] != 0.0) {
                km = k_[q];
            }
        }
        return km;
    }

    Spectrum initial(const std::function<double(double)>& u0) {
        for (std::size_t j = 0; j < m_; ++j) {
            plans_.real[j] = x_[j] <= 1.0 ? u0(x_[j]) : -u0(2.0 - x_[j]);
        }
        fftw_execute(plans_.forward);
        Spectrum v(k_.size());
        for (std::size_t q = 0; q < k_.size(); ++q) {
            v[q] = {plans_.spec[q][0], plans_.spec[q][1]};
        }
        return v;
    }

    void advance(Spectrum& v, double h) {
        const std::size_t n = k_.size();
        Spectrum e(n), e2(n), a(n), b(n), c(n), d(n), tmp(n);
        for (std::size_t q = 0; q < n; ++q) {
            e[q] = std::exp(-nu_ * k_[q] * k_[q] * h);
            e2[q] = std::exp(-nu_ * k_[q] * k_[q] * h * 0.5);
        }
        nonlinear(v, a);
        for (std::size_t q = 0; q < n; ++q) {
            a[q] *= h;
            tmp[q] = e2[q] * (v[q] + 0.5 * a[q]);
        }
        nonlinear(tmp, b);
        for (std::size_t q = 0; q < n; ++q) {
            b[q] *= h;
            tmp[q] = e2[q] * v[q] + 0.5 * b[q];
        }
        nonlinear(tmp, c);
        for (std::size_t q = 0; q < n; ++q) {
            c[q] *= h;
            tmp[q] = e[q] * v[q] + e2[q] * c[q];
        }
        nonlinear(tmp, d);
        for (std::size_t q = 0; q < n; ++q) {
            d[q] *= h;
            v[q] = e[q] * v[q] + (e[q] * a[q] + 2.0 * e2[q] * (b[q] + c[q]) + d[q]) / 6.0;
        }
    }

    /// Trigonometric interpolant of the spectrum at physical coordinate x.
    [[nodiscard]] double evaluate(const Spectrum& v, double x) const {
        const double s = x + 1.0;
        double acc = v[0].real();
        for (std::size_t q = 1; q + 1 < k_.size(); ++q) {
            const double ph = k_[q] * s;
            acc += 2.0 * (v[q].real() * std::cos(ph) - v[q].imag() * std::sin(ph));
        }
        return acc / static_cast<double>(m_);
    }

  private:
    // N(v) = -alpha(x) u u_x, returned in spectral space with the retained-mode mask applied
    void nonlinear(const Spectrum& v, Spectrum& out) {
        const std::size_t n = k_.size();
        std::vector<double> u(m_), ux(m_);
        for (std::size_t q = 0; q < n; ++q) {
            plans_.spec[q][0] = v[q].real() * keep_[q];
            plans_.spec[q][1] = v[q].imag() * keep_[q];
        }
        fftw_execute(plans_.backward);
        for (std::size_t j = 0; j < m_; ++j) {
            u[j] = plans_.real[j] / static_cast<double>(m_);
        }
        for (std::size_t q = 0; q < n; ++q) {
            const std::complex<double> dv = std::complex<double>(0.0, k_[q]) * v[q] * keep_[q];
            plans_.spec[q][0] = dv.real();
            plans_.spec[q][1] = dv.imag();
        }
        fftw_execute(plans_.backward);
        for (std::size_t j = 0; j < m_; ++j) {
            ux[j] = plans_.real[j] / static_cast<double>(m_);
        }
        for (std::size_t j = 0; j < m_; ++j) {
            plans_.real[j] = -alpha_ext_[j] * u[j] * ux[j];
        }
        fftw_execute(plans_.forward);
        for (std::size_t q = 0; q < n; ++q) {
            out[q] = std::complex<double>(plans_.spec[q][0], plans_.spec[q][1]) * keep_[q];
        }
    }

    double nu_;
    std::size_t m_;
    FftwPlans plans_;
    std::vector<double> k_;
    std::vector<double> keep_;
    std::vector<double> alpha_ext_;
    std::vector<double> x_;
};

}  // namespace

Field solve_linearized_fd(const BurgersCoefficients& coeffs, double alpha, double nu, const Grid& out_grid,
                          const FdSettings& settings) {
    if (!(nu > 0.0)) {
        throw std::invalid_argument("solve_linearized_fd: nu must be positive");
    }
    auto u0 = coeffs.u0 ? coeffs.u0 : std::function<double(double)>(initial_profile);
    return crank_nicolson([alpha, u0](double x) { return alpha * u0(x); }, [nu](double) { return nu; }, u0,
                          out_grid, settings);
}

Field solve_linearized_fd(const BurgersCoefficients& coeffs, const Grid& out_grid, const FdSettings& settings) {
    coeffs.validate(Domain{});
    auto alpha = coeffs.alpha;
    auto u0 = coeffs.u0;
    return crank_nicolson([alpha, u0](double x) { return alpha(x) * u0(x); }, coeffs.nu, u0, out_grid, settings);
}

Field solve_burgers_fft(double alpha, double nu, const Grid& out_grid, const FftSettings& settings) {
    return solve_burgers_fft([alpha](double) { return alpha; }, nu, out_grid, settings);
}

Field solve_burgers_fft(const std::function<double(double)>& alpha, double nu, const Grid& out_grid,
                        const FftSettings& settings) {
    check_out_grid(out_grid);
    if (!(nu > 0.0)) {
        throw std::invalid_argument("solve_burgers_fft: nu must be positive");
    }
    const std::size_t n = settings.n_modes;
    if (n < 64 || (n & (n - 1)) != 0) {
        throw std::invalid_argument("solve_burgers_fft: n_modes must be a power of two >= 64");
    }
    if (!(settings.dt > 0.0)) {
        throw std::invalid_argument("solve_burgers_fft: dt must be positive");
    }
    PseudoSpectralBurgers solver(alpha, nu, settings);

    double alpha_max = 0.0;
    for (int i = 0; i <= 256; ++i) {
        alpha_max = std::max(alpha_max, std::abs(alpha(-1.0 + 2.0 * i / 256.0)));
    }
    // |u| <= max|u0| = 1; RK4 imaginary-axis stability limit is 2*sqrt(2)
    const double advective = settings.dt * alpha_max * solver.k_max_retained();
    if (advective > 2.5) {
        std::ostringstream msg;
        msg << "solve_burgers_fft: dt = " << settings.dt << " violates the RK4 advective bound (dt*alpha*k_max = "
            << advective << " > 2.5)";
        throw ConfigError(msg.str());
    }

    Spectrum v = solver.initial(initial_profile);
    Field out{out_grid, std::vector<double>(out_grid.size())};
    double t = 0.0;
    for (std::size_t it = 0; it < out_grid.n_t(); ++it) {
        const double target = out_grid.t_nodes()[it];
        const double span = target - t;
        if (span > 0.0) {
            const auto steps = static_cast<std::size_t>(std::ceil(span / settings.dt - 1e-9));
            const double h = span / static_cast<double>(steps);
            for (std::size_t s = 0; s < steps; ++s) {
                solver.advance(v, h);
            }
            t = target;
            if (!std::isfinite(v[1].real())) {
                std::ostringstream msg;
                msg << "solve_burgers_fft: solution blew up with dt = " << settings.dt;
                throw NumericalError(msg.str());
            }
        }
        for (std::size_t ix = 0; ix < out_grid.n_x(); ++ix) {
            out.values[out_grid.index(it, ix)] = solver.evaluate(v, out_grid.x_nodes()[ix]);
        }
    }
    impose_known_values(out, initial_profile);
    for (double val : out.values) {
        if (!std::isfinite(val)) {
            std::ostringstream msg;
            msg << "solve_burgers_fft: non-finite output with dt = " << settings.dt;
            throw NumericalError(msg.str());
        }
    }
    return out;
}

SampleEnsemble generate_ensemble(const ParamSampler& sampler, std::size_t n_mc, const Grid& grid,
                                 const BurgersCoefficients& coeffs, const EnsembleSettings& settings) {
    sampler.validate();
    if (n_mc < 2) {
        throw std::invalid_argument("generate_ensemble: n_mc must be >= 2");
    }
    SampleEnsemble ens;
    ens.grid = grid;
    ens.samples.resize(static_cast<Eigen::Index>(n_mc), static_cast<Eigen::Index>(grid.size()));
    ens.params.reserve(n_mc);
    for (std::size_t i = 0; i < n_mc; ++i) {
        const DrawnParams p = draw_parameters(sampler, i);
        ens.params.push_back(p);
        Field f;
        try {
            if (settings.solver == LowFiSolver::LinearizedFd) {
                f = solve_linearized_fd(coeffs, p.alpha, p.nu, grid, settings.fd);
            } else {
                f = solve_burgers_fft(p.alpha, p.nu, grid, settings.fft);
            }
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "ensemble sample " << i << " (alpha=" << p.alpha << ", nu=" << p.nu << "): " << e.what();
            throw NumericalError(msg.str());
        }
        for (std::size_t k = 0; k < grid.size(); ++k) {
            ens.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = f.values[k];
        }
    }
    return ens;
}

}  // namespace mfgp
