#ifndef CINERECON_OPERATORS_HPP
#define CINERECON_OPERATORS_HPP

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <span>
#include <tuple>

#include "cinerecon/core.hpp"

namespace cinerecon {

/// x-y-f coefficients: the temporal-frequency axis replaces the phase axis.
/// Frequency index n_phases/2 (floor) holds f = 0.
struct SparseCoeffs {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t n_freqs = 0;
    std::vector<Complex> data;

    friend bool operator==(const SparseCoeffs&, const SparseCoeffs&) = default;
};

namespace detail {

struct FftwDeleter {
    void operator()(fftw_complex* p) const { fftw_free(p); }
};

// FFTW_ESTIMATE plan with its own aligned scratch buffer.
class FftPlan {
public:
    FftPlan(int rank, const int* n, int howmany, int stride, int dist, int sign, std::size_t total)
        : total_(total),
          buf_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * total)))
    {
        if (!buf_) throw std::bad_alloc();
        plan_ = fftw_plan_many_dft(rank, n, howmany, buf_.get(), nullptr, stride, dist, buf_.get(), nullptr,
                                   stride, dist, sign, FFTW_ESTIMATE);
        if (!plan_) throw std::runtime_error("fftw planning failed");
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;
    ~FftPlan() { fftw_destroy_plan(plan_); }

    Complex* buffer() { return reinterpret_cast<Complex*>(buf_.get()); }
    std::size_t size() const { return total_; }
    void execute() { fftw_execute(plan_); }

private:
    std::size_t total_;
    std::unique_ptr<fftw_complex, FftwDeleter> buf_;
    fftw_plan plan_ = nullptr;
};

// Not thread-safe: FFTW planning and the shared scratch buffers assume one caller at a time.
inline FftPlan& plan_2d(std::size_t nx, std::size_t ny, int sign)
{
    static std::map<std::tuple<std::size_t, std::size_t, int>, std::unique_ptr<FftPlan>> cache;
    auto key = std::make_tuple(nx, ny, sign);
    auto it = cache.find(key);
    if (it == cache.end()) {
        const int n[2] = {static_cast<int>(nx), static_cast<int>(ny)};
        it = cache.emplace(key, std::make_unique<FftPlan>(2, n, 1, 1, 0, sign, nx * ny)).first;
    }
    return *it->second;
}

inline FftPlan& plan_temporal(std::size_t n_phases, std::size_t n_pixels, int sign)
{
    static std::map<std::tuple<std::size_t, std::size_t, int>, std::unique_ptr<FftPlan>> cache;
    auto key = std::make_tuple(n_phases, n_pixels, sign);
    auto it = cache.find(key);
    if (it == cache.end()) {
        const int n[1] = {static_cast<int>(n_phases)};
        it = cache
                 .emplace(key, std::make_unique<FftPlan>(1, n, static_cast<int>(n_pixels),
                                                         static_cast<int>(n_pixels), 1, sign,
                                                         n_phases * n_pixels))
                 .first;
    }
    return *it->second;
}

// Centered unitary 2D DFT: fftshift(fft(ifftshift(in))) / sqrt(n), center at floor(n/2).
inline void centered_fft2(std::span<const Complex> in, std::span<Complex> out, std::size_t nx, std::size_t ny,
                          int sign)
{
    auto& plan = plan_2d(nx, ny, sign);
    Complex* buf = plan.buffer();
    const std::size_t hx = nx / 2, hy = ny / 2;
    for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t si = (i + hx) % nx;
        for (std::size_t j = 0; j < ny; ++j) buf[i * ny + j] = in[si * ny + (j + hy) % ny];
    }
    plan.execute();
    const double scale = 1.0 / std::sqrt(static_cast<double>(nx * ny));
    for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t di = (i + hx) % nx;
        for (std::size_t j = 0; j < ny; ++j) out[di * ny + (j + hy) % ny] = buf[i * ny + j] * scale;
    }
}

inline void centered_temporal(std::span<const Complex> in, std::span<Complex> out, std::size_t n_phases,
                              std::size_t n_pixels, int sign)
{
    auto& plan = plan_temporal(n_phases, n_pixels, sign);
    Complex* buf = plan.buffer();
    const std::size_t h = n_phases / 2;
    for (std::size_t k = 0; k < n_phases; ++k) {
        const Complex* src = in.data() + ((k + h) % n_phases) * n_pixels;
        std::copy(src, src + n_pixels, buf + k * n_pixels);
    }
    plan.execute();
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_phases));
    for (std::size_t k = 0; k < n_phases; ++k) {
        Complex* dst = out.data() + ((k + h) % n_phases) * n_pixels;
        const Complex* src = buf + k * n_pixels;
        for (std::size_t q = 0; q < n_pixels; ++q) dst[q] = src[q] * scale;
    }
}

} // namespace detail

// ---- Fourier encoding ------------------------------------------------------

inline void fft2c(std::span<const Complex> in, std::span<Complex> out, std::size_t nx, std::size_t ny)
{
    detail::centered_fft2(in, out, nx, ny, FFTW_FORWARD);
}

inline void ifft2c(std::span<const Complex> in, std::span<Complex> out, std::size_t nx, std::size_t ny)
{
    detail::centered_fft2(in, out, nx, ny, FFTW_BACKWARD);
}

inline Frame fft2c(const Frame& x)
{
    Frame out(x.nx, x.ny);
    fft2c(x.data, out.data, x.nx, x.ny);
    return out;
}

inline Frame ifft2c(const Frame& k)
{
    Frame out(k.nx, k.ny);
    ifft2c(k.data, out.data, k.nx, k.ny);
    return out;
}

/// Frame-wise forward transform of every phase of a cine.
inline void fft2c_frames(std::span<const Complex> in, std::span<Complex> out, std::size_t nx, std::size_t ny,
                         std::size_t n_frames)
{
    const std::size_t n = nx * ny;
    for (std::size_t p = 0; p < n_frames; ++p) fft2c(in.subspan(p * n, n), out.subspan(p * n, n), nx, ny);
}

inline void ifft2c_frames(std::span<const Complex> in, std::span<Complex> out, std::size_t nx, std::size_t ny,
                          std::size_t n_frames)
{
    const std::size_t n = nx * ny;
    for (std::size_t p = 0; p < n_frames; ++p) ifft2c(in.subspan(p * n, n), out.subspan(p * n, n), nx, ny);
}

// ---- Undersampling ---------------------------------------------------------

/// Zeroes every ky line of one state's frames that `mask` does not sample.
inline void apply_mask_inplace(std::span<Complex> frames, std::size_t nx, std::size_t ny, const SamplingMask& mask,
                               std::size_t state)
{
    if (mask.ny != ny || state >= mask.n_states || frames.size() != nx * ny * mask.n_phases)
        throw ValidationError("apply_mask: shape mismatch");
    for (std::size_t p = 0; p < mask.n_phases; ++p) {
        auto row = mask.row(state, p);
        Complex* f = frames.data() + p * nx * ny;
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < ny; ++j)
                if (!row[j]) f[i * ny + j] = Complex(0.0, 0.0);
    }
}

inline KSpaceData apply_mask(const KSpaceData& k, const SamplingMask& mask)
{
    if (mask.ny != k.ny || mask.n_phases != k.n_phases || mask.n_states != k.n_states)
        throw ValidationError("apply_mask: shape mismatch");
    KSpaceData out = k;
    for (std::size_t s = 0; s < k.n_states; ++s) apply_mask_inplace(out.state(s), k.nx, k.ny, mask, s);
    return out;
}

// ---- Temporal sparsifying transform ---------------------------------------

inline void temporal_forward(std::span<const Complex> in, std::span<Complex> out, std::size_t n_phases,
                             std::size_t n_pixels)
{
    detail::centered_temporal(in, out, n_phases, n_pixels, FFTW_FORWARD);
}

inline void temporal_inverse(std::span<const Complex> in, std::span<Complex> out, std::size_t n_phases,
                             std::size_t n_pixels)
{
    detail::centered_temporal(in, out, n_phases, n_pixels, FFTW_BACKWARD);
}

inline SparseCoeffs temporal_forward(const CineImage& x)
{
    SparseCoeffs z{x.nx, x.ny, x.n_phases, std::vector<Complex>(x.data.size())};
    temporal_forward(x.data, z.data, x.n_phases, x.nx * x.ny);
    return z;
}

inline CineImage temporal_inverse(const SparseCoeffs& z)
{
    CineImage x(z.nx, z.ny, z.n_freqs);
    temporal_inverse(z.data, x.data, z.n_freqs, z.nx * z.ny);
    return x;
}

// ---- Proximal map of the l1 norm ------------------------------------------

inline Complex soft_threshold(Complex z, double t)
{
    if (!(t >= 0.0)) throw ValidationError("soft_threshold: threshold must be >= 0");
    if (t == 0.0) return z;
    const double mag = std::abs(z);
    if (mag > t) return z * ((mag - t) / mag);
    return Complex(0.0, 0.0);
}

inline void soft_threshold_inplace(std::span<Complex> z, double t)
{
    if (!(t >= 0.0)) throw ValidationError("soft_threshold: threshold must be >= 0");
    if (t == 0.0) return;
    for (auto& v : z) {
        const double mag = std::abs(v);
        v = mag > t ? v * ((mag - t) / mag) : Complex(0.0, 0.0);
    }
}

// ---- Small vector helpers --------------------------------------------------

/// <a, b> = sum conj(a) * b
inline Complex inner(std::span<const Complex> a, std::span<const Complex> b)
{
    Complex acc(0.0, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
    return acc;
}

inline double norm_sq(std::span<const Complex> a)
{
    double acc = 0.0;
    for (const auto& z : a) acc += std::norm(z);
    return acc;
}

inline double diff_norm_sq(std::span<const Complex> a, std::span<const Complex> b)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::norm(a[i] - b[i]);
    return acc;
}

} // namespace cinerecon

#endif // CINERECON_OPERATORS_HPP
