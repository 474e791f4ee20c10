#ifndef CINERECON_REGISTRATION_HPP
#define CINERECON_REGISTRATION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <tuple>
#include <vector>

#include "cinerecon/core.hpp"

namespace cinerecon {

struct DemonConfig {
    double alpha = 2.5;
    double sigma = 1.5;
    std::size_t max_iters = 200;
    double update_tol = 1e-3;
    // Also stop once the best residual has not improved by this relative
    // amount over `patience` iterations.
    std::size_t patience = 20;
    double stall_tol = 1e-3;

    friend bool operator==(const DemonConfig&, const DemonConfig&) = default;
};

inline ValidationResult validate(const DemonConfig& c)
{
    if (!(c.alpha > 0.0)) return "demon alpha must be > 0";
    if (!(c.sigma > 0.0)) return "demon sigma must be > 0";
    if (c.max_iters < 1) return "demon max_iters must be > 0";
    if (!(c.update_tol > 0.0)) return "demon update_tol must be > 0";
    return std::nullopt;
}

struct Gradient {
    Image2D d_row;
    Image2D d_col;
};

/// Central differences with replicated boundary.
inline Gradient gradient(const Image2D& img)
{
    const std::size_t nx = img.nx, ny = img.ny;
    Gradient g{Image2D(nx, ny), Image2D(nx, ny)};
    for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t ip = std::min(i + 1, nx - 1), im = i > 0 ? i - 1 : 0;
        for (std::size_t j = 0; j < ny; ++j) {
            const std::size_t jp = std::min(j + 1, ny - 1), jm = j > 0 ? j - 1 : 0;
            g.d_row(i, j) = 0.5 * (img(ip, j) - img(im, j));
            g.d_col(i, j) = 0.5 * (img(i, jp) - img(i, jm));
        }
    }
    return g;
}

namespace detail {

inline void check_same(const Image2D& a, const Image2D& b, const char* what)
{
    if (a.nx != b.nx || a.ny != b.ny) throw ValidationError(std::string(what) + ": dimension mismatch");
}

inline FieldFrame demon_velocity(const Image2D& fixed, const Gradient& gf, const Image2D& moving, const Gradient& gm,
                                 double alpha)
{
    constexpr double eps = 1e-12;
    const double a2 = alpha * alpha;
    FieldFrame v(fixed.nx, fixed.ny);
    for (std::size_t k = 0; k < fixed.size(); ++k) {
        const double diff = moving.data[k] - fixed.data[k];
        const double reg = a2 * diff * diff;
        double vr = 0.0, vc = 0.0;
        const double fr = gf.d_row.data[k], fc = gf.d_col.data[k];
        const double den1 = fr * fr + fc * fc + reg;
        if (den1 >= eps) {
            vr += diff * fr / den1;
            vc += diff * fc / den1;
        }
        const double mr = gm.d_row.data[k], mc = gm.d_col.data[k];
        const double den2 = mr * mr + mc * mc + reg;
        if (den2 >= eps) {
            vr += diff * mr / den2;
            vc += diff * mc / den2;
        }
        v.u[2 * k] = vr;
        v.u[2 * k + 1] = vc;
    }
    return v;
}

} // namespace detail

/// Symmetric demon force between the fixed image and the currently warped moving
/// image, alpha entering squared. Terms whose denominator falls below 1e-12 are 0.
/// The sign follows the force expression (moving - fixed); register_demon
/// subtracts it from the field.
inline FieldFrame demon_step(const Image2D& fixed, const Image2D& moving_warped, double alpha)
{
    detail::check_same(fixed, moving_warped, "demon_step");
    if (!(alpha > 0.0)) throw ValidationError("demon_step: alpha must be > 0");
    return detail::demon_velocity(fixed, gradient(fixed), moving_warped, gradient(moving_warped), alpha);
}

/// Normalized Gaussian taps over [-ceil(3 sigma), ceil(3 sigma)].
inline std::vector<double> gaussian_kernel(double sigma)
{
    if (!(sigma > 0.0)) throw ValidationError("gaussian kernel: sigma must be > 0");
    const auto r = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (std::ptrdiff_t t = -r; t <= r; ++t) {
        const double w = std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
        k[static_cast<std::size_t>(t + r)] = w;
        sum += w;
    }
    for (auto& w : k) w /= sum;
    return k;
}

/// Separable Gaussian filtering of both field components, replicated boundary.
inline FieldFrame gaussian_smooth_field(const FieldFrame& f, double sigma)
{
    const auto kernel = gaussian_kernel(sigma);
    const auto r = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const auto nx = static_cast<std::ptrdiff_t>(f.nx), ny = static_cast<std::ptrdiff_t>(f.ny);
    FieldFrame tmp(f.nx, f.ny), out(f.nx, f.ny);
    for (std::ptrdiff_t i = 0; i < nx; ++i)
        for (std::ptrdiff_t j = 0; j < ny; ++j) {
            double ar = 0.0, ac = 0.0;
            for (std::ptrdiff_t t = -r; t <= r; ++t) {
                const std::ptrdiff_t jj = std::clamp(j + t, std::ptrdiff_t{0}, ny - 1);
                const double w = kernel[static_cast<std::size_t>(t + r)];
                const std::size_t q = 2 * static_cast<std::size_t>(i * ny + jj);
                ar += w * f.u[q];
                ac += w * f.u[q + 1];
            }
            const std::size_t q = 2 * static_cast<std::size_t>(i * ny + j);
            tmp.u[q] = ar;
            tmp.u[q + 1] = ac;
        }
    for (std::ptrdiff_t i = 0; i < nx; ++i)
        for (std::ptrdiff_t j = 0; j < ny; ++j) {
            double ar = 0.0, ac = 0.0;
            for (std::ptrdiff_t t = -r; t <= r; ++t) {
                const std::ptrdiff_t ii = std::clamp(i + t, std::ptrdiff_t{0}, nx - 1);
                const double w = kernel[static_cast<std::size_t>(t + r)];
                const std::size_t q = 2 * static_cast<std::size_t>(ii * ny + j);
                ar += w * tmp.u[q];
                ac += w * tmp.u[q + 1];
            }
            const std::size_t q = 2 * static_cast<std::size_t>(i * ny + j);
            out.u[q] = ar;
            out.u[q + 1] = ac;
        }
    return out;
}

/// Bilinear gather pattern of one field: output pixel p reads the four
/// neighbours of p + u(p), clamped to the image. warp and warp_adjoint share it,
/// which is what makes them exact transposes of each other.
class WarpStencil {
public:
    WarpStencil() = default;
    explicit WarpStencil(const FieldFrame& f) : nx_(f.nx), ny_(f.ny), taps_(f.nx * f.ny)
    {
        const double max_r = static_cast<double>(nx_ - 1), max_c = static_cast<double>(ny_ - 1);
        for (std::size_t i = 0; i < nx_; ++i)
            for (std::size_t j = 0; j < ny_; ++j) {
                const std::size_t k = i * ny_ + j;
                const double qr = std::clamp(static_cast<double>(i) + f.u[2 * k], 0.0, max_r);
                const double qc = std::clamp(static_cast<double>(j) + f.u[2 * k + 1], 0.0, max_c);
                auto [r0, r1, fr] = axis(qr, nx_);
                auto [c0, c1, fc] = axis(qc, ny_);
                Tap& t = taps_[k];
                t.idx = {r0 * ny_ + c0, r0 * ny_ + c1, r1 * ny_ + c0, r1 * ny_ + c1};
                t.w = {(1.0 - fr) * (1.0 - fc), (1.0 - fr) * fc, fr * (1.0 - fc), fr * fc};
            }
    }

    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }

    template <class T>
    void gather(std::span<const T> in, std::span<T> out) const
    {
        for (std::size_t k = 0; k < taps_.size(); ++k) {
            const Tap& t = taps_[k];
            out[k] = t.w[0] * in[t.idx[0]] + t.w[1] * in[t.idx[1]] + t.w[2] * in[t.idx[2]] + t.w[3] * in[t.idx[3]];
        }
    }

    template <class T>
    void scatter(std::span<const T> in, std::span<T> out) const
    {
        std::fill(out.begin(), out.end(), T{});
        for (std::size_t k = 0; k < taps_.size(); ++k) {
            const Tap& t = taps_[k];
            for (int q = 0; q < 4; ++q) out[t.idx[q]] += t.w[q] * in[k];
        }
    }

private:
    struct Tap {
        std::array<std::size_t, 4> idx{};
        std::array<double, 4> w{};
    };

    static std::tuple<std::size_t, std::size_t, double> axis(double q, std::size_t n)
    {
        if (n == 1) return {0, 0, 0.0};
        auto lo = static_cast<std::size_t>(std::floor(q));
        lo = std::min(lo, n - 2);
        return {lo, lo + 1, q - static_cast<double>(lo)};
    }

    std::size_t nx_ = 0, ny_ = 0;
    std::vector<Tap> taps_;
};

namespace detail {

inline void check_field(std::size_t nx, std::size_t ny, const FieldFrame& f, const char* what)
{
    if (f.nx != nx || f.ny != ny || f.u.size() != 2 * nx * ny)
        throw ValidationError(std::string(what) + ": field dimension mismatch");
}

} // namespace detail

/// out(p) = bilinear sample of image at p + u(p), clamped to the nearest edge.
inline Frame warp(const Frame& image, const FieldFrame& field)
{
    detail::check_field(image.nx, image.ny, field, "warp");
    Frame out(image.nx, image.ny);
    WarpStencil(field).gather<Complex>(image.data, out.data);
    return out;
}

inline Image2D warp(const Image2D& image, const FieldFrame& field)
{
    detail::check_field(image.nx, image.ny, field, "warp");
    Image2D out(image.nx, image.ny);
    WarpStencil(field).gather<double>(image.data, out.data);
    return out;
}

/// Exact transpose of warp(., field): scatter-add with the gather weights.
inline Frame warp_adjoint(const Frame& image, const FieldFrame& field)
{
    detail::check_field(image.nx, image.ny, field, "warp_adjoint");
    Frame out(image.nx, image.ny);
    WarpStencil(field).scatter<Complex>(image.data, out.data);
    return out;
}

inline Image2D warp_adjoint(const Image2D& image, const FieldFrame& field)
{
    detail::check_field(image.nx, image.ny, field, "warp_adjoint");
    Image2D out(image.nx, image.ny);
    WarpStencil(field).scatter<double>(image.data, out.data);
    return out;
}

struct RegistrationResult {
    FieldFrame field;
    std::size_t iterations = 0;
    bool converged = false; // false: iteration cap hit, best field returned
    double rmse_before = 0.0;
    double rmse_after = 0.0;
};

namespace detail {

inline double rmse(const Image2D& a, const Image2D& b)
{
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a.data[k] - b.data[k];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

} // namespace detail

/// Additive demons. Each iteration warps `moving` by the current field, takes a
/// demon step against `fixed`, updates the field and smooths it. The returned
/// field satisfies warp(moving, field) ~ fixed and is the lowest-residual field
/// seen.
inline RegistrationResult register_demon(const Image2D& fixed, const Image2D& moving, const DemonConfig& cfg,
                                         const FieldFrame* initial = nullptr)
{
    detail::check_same(fixed, moving, "register_demon");
    throw_if_invalid(validate(cfg));
    FieldFrame u = initial ? *initial : FieldFrame(fixed.nx, fixed.ny);
    detail::check_field(fixed.nx, fixed.ny, u, "register_demon");

    const Gradient gf = gradient(fixed);
    RegistrationResult res;
    res.rmse_before = detail::rmse(moving, fixed);
    double best = std::numeric_limits<double>::infinity();
    double anchor = best;
    std::size_t anchor_it = 0;
    FieldFrame best_u = u;
    const double n = static_cast<double>(fixed.size());

    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        const Image2D warped = warp(moving, u);
        const double e = detail::rmse(warped, fixed);
        if (e < best) {
            best = e;
            best_u = u;
        }
        if (best < anchor * (1.0 - cfg.stall_tol)) {
            anchor = best;
            anchor_it = it;
        } else if (cfg.patience > 0 && it - anchor_it >= cfg.patience) {
            res.converged = true;
            break;
        }
        const FieldFrame v = detail::demon_velocity(fixed, gf, warped, gradient(warped), cfg.alpha);
        FieldFrame next = u;
        for (std::size_t k = 0; k < next.u.size(); ++k) next.u[k] -= v.u[k];
        next = gaussian_smooth_field(next, cfg.sigma);

        double update = 0.0;
        for (std::size_t k = 0; k < fixed.size(); ++k)
            update += std::hypot(next.u[2 * k] - u.u[2 * k], next.u[2 * k + 1] - u.u[2 * k + 1]);
        u = std::move(next);
        res.iterations = it + 1;
        if (update / n < cfg.update_tol) {
            res.converged = true;
            break;
        }
    }
    const double e = detail::rmse(warp(moving, u), fixed);
    if (e < best) {
        best = e;
        best_u = u;
    }
    res.field = std::move(best_u);
    res.rmse_after = best;
    return res;
}

} // namespace cinerecon

#endif // CINERECON_REGISTRATION_HPP
