#pragma once

#include <array>
#include <cmath>

namespace mfgp::detail {

// Truncated bivariate Taylor polynomial sum c[i][j] e^i f^j, i <= DA, j <= DB.
template <int DA, int DB>
struct Jet {
    static constexpr int kOrder = DA + DB;
    std::array<std::array<double, DB + 1>, DA + 1> c{};

    static Jet constant(double v) {
        Jet r;
        r.c[0][0] = v;
        return r;
    }
    static Jet var_a(double v) {
        Jet r = constant(v);
        if constexpr (DA > 0) {
            r.c[1][0] = 1.0;
        }
        return r;
    }
    static Jet var_b(double v) {
        Jet r = constant(v);
        if constexpr (DB > 0) {
            r.c[0][1] = 1.0;
        }
        return r;
    }

    [[nodiscard]] double value() const { return c[0][0]; }

    Jet& operator+=(const Jet& o) {
        for (int i = 0; i <= DA; ++i) {
            for (int j = 0; j <= DB; ++j) {
                c[i][j] += o.c[i][j];
            }
        }
        return *this;
    }
    Jet& operator*=(double s) {
        for (auto& row : c) {
            for (double& v : row) {
                v *= s;
            }
        }
        return *this;
    }
    friend Jet operator+(Jet a, const Jet& b) { return a += b; }
    friend Jet operator-(Jet a, const Jet& b) {
        Jet nb = b;
        nb *= -1.0;
        return a += nb;
    }
    friend Jet operator*(Jet a, double s) { return a *= s; }
    friend Jet operator*(double s, Jet a) { return a *= s; }
    friend Jet operator*(const Jet& a, const Jet& b) {
        Jet r;
        for (int i = 0; i <= DA; ++i) {
            for (int j = 0; j <= DB; ++j) {
                double acc = 0.0;
                for (int p = 0; p <= i; ++p) {
                    for (int q = 0; q <= j; ++q) {
                        acc += a.c[p][q] * b.c[i - p][j - q];
                    }
                }
                r.c[i][j] = acc;
            }
        }
        return r;
    }

    /// f(g) given d[n] = f^(n)(g.value()) for n = 0..kOrder.
    [[nodiscard]] Jet compose(const std::array<double, kOrder + 1>& d) const {
        Jet delta = *this;
        delta.c[0][0] = 0.0;
        Jet r = constant(d[0]);
        Jet power = constant(1.0);
        double fact = 1.0;
        for (int n = 1; n <= kOrder; ++n) {
            power = power * delta;
            fact *= n;
            r += power * (d[n] / fact);
        }
        return r;
    }

    [[nodiscard]] double derivative(int i, int j) const {
        static constexpr std::array<double, 5> fact{1.0, 1.0, 2.0, 6.0, 24.0};
        return fact[i] * fact[j] * c[i][j];
    }
};

template <int DA, int DB>
Jet<DA, DB> exp(const Jet<DA, DB>& g) {
    std::array<double, DA + DB + 1> d;
    d.fill(std::exp(g.value()));
    return g.compose(d);
}

template <int DA, int DB>
Jet<DA, DB> reciprocal(const Jet<DA, DB>& g) {
    std::array<double, DA + DB + 1> d;
    const double y = g.value();
    double v = 1.0 / y;
    for (int n = 0; n <= DA + DB; ++n) {
        d[n] = v;
        v *= -static_cast<double>(n + 1) / y;
    }
    return g.compose(d);
}

template <int DA, int DB>
Jet<DA, DB> sqrt(const Jet<DA, DB>& g) {
    std::array<double, DA + DB + 1> d;
    const double y = g.value();
    double v = std::sqrt(y);
    for (int n = 0; n <= DA + DB; ++n) {
        d[n] = v;
        v *= (0.5 - n) / y;
    }
    return g.compose(d);
}

}  // namespace mfgp::detail
