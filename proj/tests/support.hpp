#ifndef CINERECON_TESTS_SUPPORT_HPP
#define CINERECON_TESTS_SUPPORT_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "cinerecon/core.hpp"
#include "cinerecon/random.hpp"

namespace testing_support {

using cinerecon::Complex;

inline std::vector<Complex> random_complex(cinerecon::Rng& rng, std::size_t n)
{
    std::vector<Complex> v(n);
    for (auto& z : v) z = Complex(rng.normal(), rng.normal());
    return v;
}

inline cinerecon::Image2D random_image(cinerecon::Rng& rng, std::size_t nx, std::size_t ny)
{
    cinerecon::Image2D img(nx, ny);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

inline cinerecon::FieldFrame random_field(cinerecon::Rng& rng, std::size_t nx, std::size_t ny, double scale)
{
    cinerecon::FieldFrame f(nx, ny);
    for (auto& v : f.u) v = rng.uniform(-scale, scale);
    return f;
}

/// Centered unitary DFT of a length-n sequence by the defining sum:
/// X[k] = n^{-1/2} sum_j x[j] exp(-+2 pi i (j - c)(k - c) / n), c = floor(n/2).
inline std::vector<Complex> naive_dft(const std::vector<Complex>& x, bool inverse)
{
    const std::size_t n = x.size();
    const double c = static_cast<double>(n / 2);
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        Complex acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * std::numbers::pi * (static_cast<double>(j) - c) *
                               (static_cast<double>(k) - c) / static_cast<double>(n);
            acc += x[j] * Complex(std::cos(ang), std::sin(ang));
        }
        out[k] = acc / std::sqrt(static_cast<double>(n));
    }
    return out;
}

/// Separable naive 2D version on a row-major nx x ny frame.
inline std::vector<Complex> naive_dft2(const std::vector<Complex>& x, std::size_t nx, std::size_t ny, bool inverse)
{
    std::vector<Complex> tmp(x.size()), out(x.size());
    for (std::size_t i = 0; i < nx; ++i) {
        std::vector<Complex> row(x.begin() + i * ny, x.begin() + (i + 1) * ny);
        auto r = naive_dft(row, inverse);
        std::copy(r.begin(), r.end(), tmp.begin() + i * ny);
    }
    for (std::size_t j = 0; j < ny; ++j) {
        std::vector<Complex> col(nx);
        for (std::size_t i = 0; i < nx; ++i) col[i] = tmp[i * ny + j];
        auto c = naive_dft(col, inverse);
        for (std::size_t i = 0; i < nx; ++i) out[i * ny + j] = c[i];
    }
    return out;
}

inline double rel_diff(const std::vector<Complex>& a, const std::vector<Complex>& b)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a[i] - b[i]);
        den += std::norm(b[i]);
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace testing_support

#endif // CINERECON_TESTS_SUPPORT_HPP
