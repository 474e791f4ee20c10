#ifndef CINERECON_RECON_HPP
#define CINERECON_RECON_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "cinerecon/core.hpp"
#include "cinerecon/operators.hpp"
#include "cinerecon/random.hpp"
#include "cinerecon/registration.hpp"

namespace cinerecon {

struct ConvergenceRecord {
    std::size_t iteration = 0;
    double data_residual = 0.0;
    double motion_residual = 0.0;
};

struct ReconResult {
    CineImage image;                       // motion-corrected reference-frame cine
    KSpaceData kspace;                     // final per-state k-space estimate
    std::vector<DisplacementField> fields; // reference -> state motion, per state
    std::size_t iterations_run = 0;
    double final_residual_data = 0.0;
    double final_residual_motion = 0.0;
    bool converged = false;
    std::vector<ConvergenceRecord> history;
};

struct SsfStats {
    std::size_t iterations = 0;
    bool converged = false;
};

inline DemonConfig demon_config(const ReconConfig& cfg)
{
    return DemonConfig{cfg.demon_alpha, cfg.gaussian_sigma, cfg.demon_max_iters, cfg.demon_update_tol};
}

namespace detail {

inline void check_state_shapes(const KSpaceData& y, const SamplingMask& mask, std::size_t state, const char* what)
{
    if (mask.ny != y.ny || mask.n_phases != y.n_phases || state >= y.n_states || state >= mask.n_states)
        throw ValidationError(std::string(what) + ": shape mismatch");
}

// x <- W^H S(W v, t) over one cine (n_phases frames of n_pixels).
inline void sparsify(std::span<const Complex> v, std::span<Complex> x, std::span<Complex> scratch,
                     std::size_t n_phases, std::size_t n_pixels, double threshold)
{
    temporal_forward(v, scratch, n_phases, n_pixels);
    soft_threshold_inplace(scratch, threshold);
    temporal_inverse(scratch, x, n_phases, n_pixels);
}

inline double relative_change(std::span<const Complex> a, std::span<const Complex> b)
{
    const double den = norm_sq(b);
    return den > 0.0 ? std::sqrt(diff_norm_sq(a, b) / den) : std::sqrt(norm_sq(a));
}

} // namespace detail

/// Separable-surrogate iteration for one respiratory state:
///   x <- W^H S(W(x + (1/c) F^H A(y - A F x)), beta/c)
/// from the zero-filled start, until the relative image change drops below
/// cfg.inner_tol or cfg.max_inner_iters is reached.
inline CineImage cs_recon_ssf(const KSpaceData& y, const SamplingMask& mask, std::size_t state,
                              const ReconConfig& cfg, SsfStats* stats = nullptr)
{
    detail::check_state_shapes(y, mask, state, "cs_recon_ssf");
    throw_if_invalid(validate(cfg));
    const std::size_t nx = y.nx, ny = y.ny, np = y.n_phases, npix = nx * ny;

    std::vector<Complex> acquired(y.state(state).begin(), y.state(state).end());
    apply_mask_inplace(acquired, nx, ny, mask, state);

    CineImage x(nx, ny, np);
    ifft2c_frames(acquired, x.data, nx, ny, np);

    std::vector<Complex> k(x.data.size()), v(x.data.size()), next(x.data.size()), scratch(x.data.size());
    const double threshold = cfg.beta / cfg.c;
    SsfStats st;
    for (std::size_t it = 0; it < cfg.max_inner_iters; ++it) {
        fft2c_frames(x.data, k, nx, ny, np);
        for (std::size_t q = 0; q < k.size(); ++q) k[q] = acquired[q] - k[q];
        apply_mask_inplace(k, nx, ny, mask, state);
        ifft2c_frames(k, v, nx, ny, np);
        for (std::size_t q = 0; q < v.size(); ++q) v[q] = x.data[q] + v[q] / cfg.c;
        detail::sparsify(v, next, scratch, np, npix, threshold);
        const double change = detail::relative_change(next, x.data);
        x.data.swap(next);
        st.iterations = it + 1;
        if (change < cfg.inner_tol) {
            st.converged = true;
            break;
        }
    }
    if (stats) *stats = st;
    return x;
}

/// Acquired samples replace the estimate on every sampled line.
inline KSpaceData data_consistency(const KSpaceData& k_est, const KSpaceData& y, const SamplingMask& mask)
{
    if (k_est.nx != y.nx || k_est.ny != y.ny || k_est.n_phases != y.n_phases || k_est.n_states != y.n_states ||
        mask.ny != y.ny || mask.n_phases != y.n_phases || mask.n_states != y.n_states)
        throw ValidationError("data_consistency: shape mismatch");
    KSpaceData out = k_est;
    for (std::size_t s = 0; s < y.n_states; ++s)
        for (std::size_t p = 0; p < y.n_phases; ++p) {
            auto row = mask.row(s, p);
            auto dst = out.frame(s, p);
            auto src = y.frame(s, p);
            for (std::size_t i = 0; i < y.nx; ++i)
                for (std::size_t j = 0; j < y.ny; ++j)
                    if (row[j]) dst[i * y.ny + j] = src[i * y.ny + j];
        }
    return out;
}

/// Single-state view of free-breathing data that ignores respiratory motion:
/// lines acquired in several states are averaged, the mask is their union.
struct PooledData {
    KSpaceData y;
    SamplingMask mask;
};

inline PooledData pool_states(const KSpaceData& y, const SamplingMask& masks)
{
    if (masks.ny != y.ny || masks.n_phases != y.n_phases || masks.n_states != y.n_states)
        throw ValidationError("pool_states: shape mismatch");
    PooledData out{KSpaceData(y.nx, y.ny, y.n_phases, 1), SamplingMask(y.ny, y.n_phases, 1)};
    for (std::size_t p = 0; p < y.n_phases; ++p)
        for (std::size_t j = 0; j < y.ny; ++j) {
            std::size_t hits = 0;
            for (std::size_t s = 0; s < y.n_states; ++s) hits += masks.sampled(s, p, j) ? 1 : 0;
            if (hits == 0) continue;
            out.mask.set(0, p, j, true);
            auto dst = out.y.frame(0, p);
            for (std::size_t i = 0; i < y.nx; ++i) {
                Complex acc(0.0, 0.0);
                for (std::size_t s = 0; s < y.n_states; ++s)
                    if (masks.sampled(s, p, j)) acc += y.frame(s, p)[i * y.ny + j];
                dst[i * y.ny + j] = acc / static_cast<double>(hits);
            }
        }
    return out;
}

/// CS reconstruction of the pooled data: the "without motion correction" baseline.
inline CineImage cs_recon_without_motion_correction(const KSpaceData& y, const SamplingMask& masks,
                                                    const ReconConfig& cfg)
{
    const PooledData pooled = pool_states(y, masks);
    return cs_recon_ssf(pooled.y, pooled.mask, 0, cfg);
}

namespace detail {

// Per-state motion operator U_m, one warp stencil per cardiac phase.
class MotionOperator {
public:
    MotionOperator(std::size_t nx, std::size_t ny, std::size_t n_phases)
        : nx_(nx), ny_(ny), field_(nx, ny, n_phases), stencils_(n_phases, WarpStencil(FieldFrame(nx, ny)))
    {}

    const DisplacementField& field() const { return field_; }

    void set_frame(std::size_t p, const FieldFrame& f)
    {
        set_field_frame(field_, p, f);
        stencils_[p] = WarpStencil(f);
    }

    void forward(std::span<const Complex> in, std::span<Complex> out) const
    {
        const std::size_t n = nx_ * ny_;
        for (std::size_t p = 0; p < stencils_.size(); ++p)
            stencils_[p].gather<Complex>(in.subspan(p * n, n), out.subspan(p * n, n));
    }

    void adjoint(std::span<const Complex> in, std::span<Complex> out) const
    {
        const std::size_t n = nx_ * ny_;
        for (std::size_t p = 0; p < stencils_.size(); ++p)
            stencils_[p].scatter<Complex>(in.subspan(p * n, n), out.subspan(p * n, n));
    }

private:
    std::size_t nx_, ny_;
    DisplacementField field_;
    std::vector<WarpStencil> stencils_;
};

inline bool complex_less(const Complex& a, const Complex& b)
{
    return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
}

// Mean over states; per-element terms are summed in sorted order.
inline void state_mean(const std::vector<std::vector<Complex>>& terms, std::span<Complex> out)
{
    const std::size_t d = terms.size();
    std::vector<Complex> buf(d);
    for (std::size_t q = 0; q < out.size(); ++q) {
        for (std::size_t m = 0; m < d; ++m) buf[m] = terms[m][q];
        std::sort(buf.begin(), buf.end(), complex_less);
        Complex acc(0.0, 0.0);
        for (const auto& z : buf) acc += z;
        out[q] = acc / static_cast<double>(d);
    }
}

inline Image2D magnitude_frame(std::span<const Complex> cine, std::size_t p, std::size_t nx, std::size_t ny)
{
    Image2D out(nx, ny);
    const std::size_t n = nx * ny;
    for (std::size_t q = 0; q < n; ++q) out.data[q] = std::abs(cine[p * n + q]);
    return out;
}

// Power-iteration estimate of || mean_m U_m^H F^H A_m F U_m ||, floored at 1 so
// that identity motion keeps the stage-1 step exactly.
inline double normal_operator_bound(const std::vector<MotionOperator>& U, const SamplingMask& masks, std::size_t nx,
                                    std::size_t ny, std::size_t np, std::uint64_t seed, std::size_t iters = 8)
{
    const std::size_t total = nx * ny * np, d = U.size();
    std::vector<Complex> x(total), warped(total), k(total), img(total);
    std::vector<std::vector<Complex>> terms(d, std::vector<Complex>(total));
    Rng rng(derive_seed(seed, "recon.power"));
    for (auto& z : x) z = Complex(rng.normal(), rng.normal());
    double lambda = 0.0;
    for (std::size_t it = 0; it < iters; ++it) {
        const double norm = std::sqrt(norm_sq(x));
        if (!(norm > 0.0)) break;
        for (auto& z : x) z /= norm;
        for (std::size_t m = 0; m < d; ++m) {
            U[m].forward(x, warped);
            fft2c_frames(warped, k, nx, ny, np);
            apply_mask_inplace(k, nx, ny, masks, m);
            ifft2c_frames(k, img, nx, ny, np);
            U[m].adjoint(img, terms[m]);
        }
        state_mean(terms, x);
        lambda = std::sqrt(norm_sq(x));
    }
    return std::max(1.0, lambda);
}

} // namespace detail

/// Motion-corrected reconstruction across respiratory states.
///
/// Starting from the per-state stage-1 images X_m and x0 = X_ref, every outer
/// iteration
///   1. registers |X_ref| onto each |X_m| per phase (demons) giving U_m,
///   2. forms e = mean_m U_m^H F^H A_m (y_m - A_m F U_m x0),
///   3. thresholds z = S(W(x0 + e/c), beta/c) and sets x0 = W^H z,
///   4. resynthesizes each state's k-space F U_m x0,
///   5. restores the acquired samples (data consistency),
///   6. sets X_m = F^H of that k-space.
/// It stops when both the data and motion residuals fall below their
/// tolerances, when x0 stagnates, or after cfg.max_outer_iters iterations.
inline ReconResult mc_recon(const KSpaceData& y, const SamplingMask& masks, const RespiratoryBinning& binning,
                            const ReconConfig& cfg, const std::vector<CineImage>* stage1 = nullptr,
                            const std::optional<DemonConfig>& demon_override = std::nullopt)
{
    throw_if_invalid(validate(cfg));
    throw_if_invalid(validate(y));
    if (masks.ny != y.ny || masks.n_phases != y.n_phases || masks.n_states != y.n_states)
        throw ValidationError("mc_recon: mask shape mismatch");
    const std::size_t d = y.n_states, nx = y.nx, ny = y.ny, np = y.n_phases;
    const std::size_t npix = nx * ny, total = npix * np;
    const std::size_t ref = binning.reference_state;
    if (ref >= d) throw ValidationError("mc_recon: reference state out of range");
    if (!binning.state_counts.empty() && binning.state_counts.size() != d)
        throw ValidationError("mc_recon: missing state");

    std::vector<CineImage> X;
    if (stage1) {
        if (stage1->size() != d) throw ValidationError("mc_recon: missing state");
        X = *stage1;
        for (const auto& img : X)
            if (img.nx != nx || img.ny != ny || img.n_phases != np)
                throw ValidationError("mc_recon: registration dimension mismatch");
    } else {
        for (std::size_t m = 0; m < d; ++m) X.push_back(cs_recon_ssf(y, masks, m, cfg));
    }

    KSpaceData acquired = apply_mask(y, masks);
    const double y_energy = norm_sq(acquired.data);
    const DemonConfig demons = demon_override.value_or(demon_config(cfg));
    throw_if_invalid(validate(demons));
    const double threshold = cfg.beta / cfg.c;

    std::vector<detail::MotionOperator> U;
    for (std::size_t m = 0; m < d; ++m) U.emplace_back(nx, ny, np);
    std::vector<std::vector<FieldFrame>> last_fields(d, std::vector<FieldFrame>(np, FieldFrame(nx, ny)));

    CineImage x0 = X[ref];
    KSpaceData yhat = acquired;
    std::vector<std::vector<Complex>> grads(d, std::vector<Complex>(total));
    std::vector<Complex> warped(total), kbuf(total), img(total), e(total), v(total), next(total), scratch(total);

    ReconResult res;
    for (std::size_t it = 0; it < cfg.max_outer_iters; ++it) {
        // Step 1: motion estimation against the reference state.
        if (it == 0 || !cfg.freeze_motion) {
            for (std::size_t m = 0; m < d; ++m) {
                if (m == ref) continue;
                for (std::size_t p = 0; p < np; ++p) {
                    const Image2D fixed = detail::magnitude_frame(X[m].data, p, nx, ny);
                    const Image2D moving = detail::magnitude_frame(X[ref].data, p, nx, ny);
                    const RegistrationResult r = register_demon(fixed, moving, demons, &last_fields[m][p]);
                    last_fields[m][p] = r.field;
                    U[m].set_frame(p, r.field);
                }
            }
        }

        const double lipschitz = detail::normal_operator_bound(U, masks, nx, ny, np, cfg.seed + it);

        // Step 2: gradient of the motion-compensated data term.
        for (std::size_t m = 0; m < d; ++m) {
            U[m].forward(x0.data, warped);
            fft2c_frames(warped, kbuf, nx, ny, np);
            auto ym = acquired.state(m);
            for (std::size_t q = 0; q < total; ++q) kbuf[q] = ym[q] - kbuf[q];
            apply_mask_inplace(kbuf, nx, ny, masks, m);
            ifft2c_frames(kbuf, img, nx, ny, np);
            U[m].adjoint(img, grads[m]);
        }
        detail::state_mean(grads, e);

        // Steps 3-4: surrogate update and soft thresholding in x-y-f.
        for (std::size_t q = 0; q < total; ++q) v[q] = x0.data[q] + e[q] / (cfg.c * lipschitz);
        detail::sparsify(v, next, scratch, np, npix, threshold);
        const double change = detail::relative_change(next, x0.data);
        x0.data.swap(next);

        // Steps 4-6: resynthesis, data consistency, per-state images.
        double data_res = 0.0;
        for (std::size_t m = 0; m < d; ++m) {
            U[m].forward(x0.data, warped);
            auto km = yhat.state(m);
            fft2c_frames(warped, km, nx, ny, np);
            auto ym = acquired.state(m);
            for (std::size_t p = 0; p < np; ++p) {
                auto row = masks.row(m, p);
                for (std::size_t i = 0; i < nx; ++i)
                    for (std::size_t j = 0; j < ny; ++j) {
                        if (!row[j]) continue;
                        const std::size_t q = p * npix + i * ny + j;
                        data_res += std::norm(ym[q] - km[q]);
                        km[q] = ym[q];
                    }
            }
            ifft2c_frames(km, X[m].data, nx, ny, np);
        }

        double motion_res = 0.0;
        for (std::size_t m = 0; m < d; ++m) {
            if (m == ref) continue;
            U[m].adjoint(X[m].data, img);
            motion_res += diff_norm_sq(X[ref].data, img);
        }
        const double ref_energy = norm_sq(X[ref].data);

        res.history.push_back({it + 1, data_res, motion_res});
        res.iterations_run = it + 1;
        res.final_residual_data = data_res;
        res.final_residual_motion = motion_res;
        if (data_res < cfg.tol1 * y_energy && motion_res < cfg.tol2 * ref_energy) {
            res.converged = true;
            break;
        }
        if (change < cfg.inner_tol) {
            res.converged = true;
            break;
        }
    }

    res.image = std::move(x0);
    res.kspace = std::move(yhat);
    for (const auto& u : U) res.fields.push_back(u.field());
    return res;
}

} // namespace cinerecon

#endif // CINERECON_RECON_HPP
