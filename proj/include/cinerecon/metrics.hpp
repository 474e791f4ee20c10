#ifndef CINERECON_METRICS_HPP
#define CINERECON_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "cinerecon/core.hpp"
#include "cinerecon/phantom.hpp"

namespace cinerecon {

constexpr double kPsnrCapDb = 200.0;
constexpr std::size_t kSsimWindow = 8;

namespace detail {

inline Roi resolve_roi(const Image2D& a, const Image2D& b, const std::optional<Roi>& roi)
{
    if (a.nx != b.nx || a.ny != b.ny || a.size() != b.size()) throw ValidationError("metrics: shape mismatch");
    const Roi r = roi.value_or(Roi{0, a.nx, 0, a.ny});
    throw_if_invalid(validate(r, a.nx, a.ny));
    return r;
}

} // namespace detail

/// Mean of (a - b)^2 over the roi (whole image when absent).
inline double mse(const Image2D& a, const Image2D& b, const std::optional<Roi>& roi = std::nullopt)
{
    const Roi r = detail::resolve_roi(a, b, roi);
    double acc = 0.0;
    for (std::size_t i = r.row_begin; i < r.row_end; ++i)
        for (std::size_t j = r.col_begin; j < r.col_end; ++j) {
            const double d = a(i, j) - b(i, j);
            acc += d * d;
        }
    return acc / static_cast<double>((r.row_end - r.row_begin) * (r.col_end - r.col_begin));
}

inline double psnr_from_mse(double m, double peak = 1.0, double cap_db = kPsnrCapDb)
{
    if (!(m > 0.0)) return cap_db;
    return std::min(cap_db, 10.0 * std::log10(peak * peak / m));
}

inline double psnr(const Image2D& a, const Image2D& b, double peak = 1.0,
                   const std::optional<Roi>& roi = std::nullopt, double cap_db = kPsnrCapDb)
{
    return psnr_from_mse(mse(a, b, roi), peak, cap_db);
}

/// Mean local SSIM over every 8x8 window (stride 1) lying inside the roi.
/// Window statistics use population (1/n) moments.
inline double ssim(const Image2D& a, const Image2D& b, const std::optional<Roi>& roi = std::nullopt,
                   double peak = 1.0)
{
    const Roi r = detail::resolve_roi(a, b, roi);
    const std::size_t h = r.row_end - r.row_begin, w = r.col_end - r.col_begin;
    if (h < kSsimWindow || w < kSsimWindow) throw ValidationError("ssim: image smaller than window");
    const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
    const double n = static_cast<double>(kSsimWindow * kSsimWindow);

    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t i0 = r.row_begin; i0 + kSsimWindow <= r.row_end; ++i0)
        for (std::size_t j0 = r.col_begin; j0 + kSsimWindow <= r.col_end; ++j0) {
            double sa = 0.0, sb = 0.0;
            for (std::size_t i = i0; i < i0 + kSsimWindow; ++i)
                for (std::size_t j = j0; j < j0 + kSsimWindow; ++j) {
                    sa += a(i, j);
                    sb += b(i, j);
                }
            const double ma = sa / n, mb = sb / n;
            double vaa = 0.0, vbb = 0.0, vab = 0.0;
            for (std::size_t i = i0; i < i0 + kSsimWindow; ++i)
                for (std::size_t j = j0; j < j0 + kSsimWindow; ++j) {
                    const double da = a(i, j) - ma, db = b(i, j) - mb;
                    vaa += da * da;
                    vbb += db * db;
                    vab += da * db;
                }
            vaa /= n;
            vbb /= n;
            vab /= n;
            total += ((2.0 * ma * mb + c1) * (2.0 * vab + c2)) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
            ++windows;
        }
    return total / static_cast<double>(windows);
}

/// Magnitude frames of a cine, divided by `scale`.
inline std::vector<Image2D> magnitude_frames(const CineImage& x, double scale = 1.0)
{
    if (!(scale > 0.0)) throw ValidationError("magnitude_frames: scale must be > 0");
    std::vector<Image2D> out;
    out.reserve(x.n_phases);
    for (std::size_t p = 0; p < x.n_phases; ++p) {
        Image2D f(x.nx, x.ny);
        auto src = x.frame(p);
        for (std::size_t q = 0; q < f.size(); ++q) f.data[q] = std::abs(src[q]) / scale;
        out.push_back(std::move(f));
    }
    return out;
}

inline double max_magnitude(const CineImage& x)
{
    double m = 0.0;
    for (const auto& z : x.data) m = std::max(m, std::abs(z));
    return m;
}

struct FrameMetrics {
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

/// Per-frame metrics of `estimate` against `truth`, both normalized by the
/// truth's peak magnitude.
inline std::vector<FrameMetrics> evaluate_cine(const CineImage& estimate, const CineImage& truth,
                                               const std::optional<Roi>& roi = std::nullopt)
{
    if (estimate.nx != truth.nx || estimate.ny != truth.ny || estimate.n_phases != truth.n_phases)
        throw ValidationError("metrics: shape mismatch");
    const double peak = max_magnitude(truth);
    const double scale = peak > 0.0 ? peak : 1.0;
    const auto a = magnitude_frames(estimate, scale), b = magnitude_frames(truth, scale);
    std::vector<FrameMetrics> out(truth.n_phases);
    for (std::size_t p = 0; p < truth.n_phases; ++p) {
        out[p].mse = mse(a[p], b[p], roi);
        out[p].psnr = psnr_from_mse(out[p].mse);
        out[p].ssim = ssim(a[p], b[p], roi);
    }
    return out;
}

/// Frame-averaged metrics; PSNR is taken from the averaged MSE.
inline FrameMetrics mean_metrics(const std::vector<FrameMetrics>& frames)
{
    FrameMetrics m;
    if (frames.empty()) return m;
    for (const auto& f : frames) {
        m.mse += f.mse;
        m.ssim += f.ssim;
    }
    m.mse /= static_cast<double>(frames.size());
    m.ssim /= static_cast<double>(frames.size());
    m.psnr = psnr_from_mse(m.mse);
    return m;
}

} // namespace cinerecon

#endif // CINERECON_METRICS_HPP
