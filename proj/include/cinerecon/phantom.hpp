#ifndef CINERECON_PHANTOM_HPP
#define CINERECON_PHANTOM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "cinerecon/binning.hpp"
#include "cinerecon/core.hpp"
#include "cinerecon/operators.hpp"
#include "cinerecon/random.hpp"
#include "cinerecon/registration.hpp"
#include "cinerecon/sampling.hpp"

namespace cinerecon {

/// Inclusive-exclusive pixel box.
struct Roi {
    std::size_t row_begin = 0, row_end = 0;
    std::size_t col_begin = 0, col_end = 0;

    std::size_t rows() const { return row_end - row_begin; }
    std::size_t cols() const { return col_end - col_begin; }
    friend bool operator==(const Roi&, const Roi&) = default;
};

inline ValidationResult validate(const Roi& r, std::size_t nx, std::size_t ny)
{
    if (r.row_begin >= r.row_end || r.col_begin >= r.col_end) return "roi must be non-empty";
    if (r.row_end > nx || r.col_end > ny) return "roi exceeds image bounds";
    return std::nullopt;
}

struct PhantomConfig {
    std::size_t nx = 128;
    std::size_t ny = 128;
    std::size_t n_phases = 16;
    std::size_t n_cycles = 25;
    std::size_t n_states = 4;
    double resp_amplitude = 5.0;   // peak head-foot translation, pixels
    double resp_rotation = 3.0;    // peak rotation, degrees
    double deform_amplitude = 0.05; // radial bulge, fraction of heart radius
    double resp_period = 4.7;      // cardiac cycles per breath
    std::optional<double> noise_snr_db;
    std::uint64_t seed = 0;

    friend bool operator==(const PhantomConfig&, const PhantomConfig&) = default;
};

inline ValidationResult validate(const PhantomConfig& c)
{
    if (c.nx < 8 || c.ny < 8 || c.n_phases < 1) return "phantom dimensions must be >= 8 (phases >= 1)";
    if (c.n_cycles < 1) return "n_cycles must be >= 1";
    if (c.n_states < 1 || c.n_states > c.n_cycles) return "n_states must lie in [1, n_cycles]";
    if (!(c.resp_amplitude >= 0.0) || !(c.resp_rotation >= 0.0) || !(c.deform_amplitude >= 0.0))
        return "motion amplitudes must be >= 0";
    if (!(c.resp_period > 0.0)) return "resp_period must be > 0";
    if (c.noise_snr_db && !std::isfinite(*c.noise_snr_db)) return "noise_snr_db must be finite";
    return std::nullopt;
}

/// Ground truth of one simulated free-breathing scan.
struct Phantom {
    std::vector<CineImage> states;         // state 0 is the end-expiration reference
    std::vector<DisplacementField> fields; // warp(states[0], fields[m]) ~ states[m]
    std::vector<double> trace;             // per-cycle respiratory position in [0, 1]
    std::vector<std::size_t> assignment;   // per-cycle state
    std::vector<double> state_levels;      // respiratory position of each state
    Roi roi;                               // heart region
};

namespace detail {

struct Ellipse {
    double cr, cc; // centre
    double ar, ac; // semi-axes
    double value;
};

// Smooth indicator of an ellipse; the edge ramps over roughly `width` pixels.
inline double soft_inside(const Ellipse& e, double r, double c, double width)
{
    const double dr = (r - e.cr) / e.ar, dc = (c - e.cc) / e.ac;
    const double rho = std::sqrt(dr * dr + dc * dc);
    const double scale = std::sqrt(e.ar * e.ac);
    return 0.5 * (1.0 + std::tanh((1.0 - rho) * scale / width));
}

struct Anatomy {
    double nx, ny;
    double heart_r, heart_c, heart_radius;

    explicit Anatomy(std::size_t rows, std::size_t cols)
        : nx(static_cast<double>(rows)), ny(static_cast<double>(cols))
    {
        heart_r = 0.5 * nx + 0.04 * nx;
        heart_c = 0.5 * ny + 0.06 * ny;
        heart_radius = 0.13 * std::min(nx, ny);
    }

    double edge_width() const { return std::max(0.8, 0.01 * std::min(nx, ny)); }

    // Intensity of the motion-free anatomy at continuous position (r, c) and
    // cardiac phase fraction t in [0, 1). Layers are alpha-composited; the
    // result lies in [0, 1].
    double intensity(double r, double c, double t) const
    {
        const double w = edge_width();
        const double beat = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t)); // 0 diastole, 1 systole
        const double cr = 0.5 * nx, cc = 0.5 * ny;
        const Ellipse layers[] = {
            {cr, cc, 0.40 * nx, 0.45 * ny, 0.25},                                 // torso
            {cr - 0.04 * nx, cc - 0.22 * ny, 0.24 * nx, 0.13 * ny, 0.04},         // right lung
            {cr - 0.04 * nx, cc + 0.22 * ny, 0.24 * nx, 0.13 * ny, 0.04},         // left lung
            {cr + 0.27 * nx, cc - 0.12 * ny, 0.11 * nx, 0.20 * ny, 0.45},         // liver dome
            {heart_r - 0.01 * nx, heart_c - 0.12 * ny, 0.10 * nx * (1.0 - 0.15 * beat),
             0.07 * ny * (1.0 - 0.15 * beat), 0.85},                              // right ventricle
            {heart_r, heart_c, heart_radius * (1.0 - 0.04 * beat), heart_radius * 0.95 * (1.0 - 0.04 * beat),
             0.55},                                                               // myocardium
            {heart_r, heart_c, heart_radius * (0.66 - 0.16 * beat), heart_radius * 0.95 * (0.66 - 0.16 * beat),
             1.0},                                                                // blood pool
            {cr - 0.30 * nx, cc + 0.02 * ny, 0.03 * nx, 0.03 * ny, 0.7},          // vessel
        };
        double v = 0.0;
        for (const auto& e : layers) {
            const double a = soft_inside(e, r, c, w);
            v = v * (1.0 - a) + e.value * a;
        }
        return v;
    }

    // Pull-back respiratory displacement at position level `s`: the state image
    // at pixel p shows the reference anatomy at p + u(p).
    void motion(double r, double c, double s, const PhantomConfig& cfg, double& ur, double& uc) const
    {
        const double dr = r - heart_r, dc = c - heart_c;
        const double d2 = dr * dr + dc * dc;
        const double reach = 0.32 * std::min(nx, ny);
        const double weight = std::exp(-0.5 * d2 / (reach * reach));
        const double theta = s * cfg.resp_rotation * std::numbers::pi / 180.0;
        const double ct = std::cos(theta), st = std::sin(theta);
        const double rot_r = (ct * dr - st * dc) - dr;
        const double rot_c = (st * dr + ct * dc) - dc;
        const double bulge = s * cfg.deform_amplitude * std::exp(-0.5 * d2 / (heart_radius * heart_radius));
        ur = weight * (s * cfg.resp_amplitude + rot_r) + bulge * dr;
        uc = weight * rot_c + bulge * dc;
    }
};

inline CineImage render_state(const Anatomy& anat, const PhantomConfig& cfg, double level, DisplacementField* field,
                              std::size_t n_phases)
{
    CineImage img(cfg.nx, cfg.ny, n_phases);
    if (field) *field = DisplacementField(cfg.nx, cfg.ny, cfg.n_phases);
    for (std::size_t i = 0; i < cfg.nx; ++i)
        for (std::size_t j = 0; j < cfg.ny; ++j) {
            const double r = static_cast<double>(i), c = static_cast<double>(j);
            double ur = 0.0, uc = 0.0;
            anat.motion(r, c, level, cfg, ur, uc);
            if (field)
                for (std::size_t p = 0; p < cfg.n_phases; ++p) {
                    auto f = field->frame(p);
                    f[2 * (i * cfg.ny + j)] = ur;
                    f[2 * (i * cfg.ny + j) + 1] = uc;
                }
            for (std::size_t p = 0; p < n_phases; ++p) {
                const double t = static_cast<double>(p) / static_cast<double>(cfg.n_phases);
                img.at(p, i, j) = Complex(anat.intensity(r + ur, c + uc, t), 0.0);
            }
        }
    return img;
}

} // namespace detail

/// Per-cycle respiratory position: a raised cosine in [0, 1] with a seeded
/// per-cycle depth variation. Cycle 0 sits at end-expiration (position 0).
inline std::vector<double> respiratory_trace(const PhantomConfig& cfg)
{
    Rng rng(derive_seed(cfg.seed, "phantom.trace"));
    std::vector<double> trace(cfg.n_cycles);
    for (std::size_t k = 0; k < cfg.n_cycles; ++k) {
        const double depth = rng.uniform(0.85, 1.0);
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(k) / cfg.resp_period;
        trace[k] = depth * 0.5 * (1.0 - std::cos(phase));
    }
    return trace;
}

/// Analytic free-breathing cine phantom: nested soft-edged ellipses with a
/// beating left ventricle, moved per respiratory state by a head-foot
/// translation, a small rotation about the heart and a radial bulge. Cycles are
/// assigned to states by quantiles of the respiratory trace; each state is
/// rendered at its mean position relative to the end-expiration state.
inline Phantom generate_cine_phantom(const PhantomConfig& cfg)
{
    throw_if_invalid(validate(cfg));
    const detail::Anatomy anat(cfg.nx, cfg.ny);
    Phantom ph;
    ph.trace = respiratory_trace(cfg);
    ph.assignment = bin_states(ph.trace, cfg.n_states).assignment;

    std::vector<double> level(cfg.n_states, 0.0);
    std::vector<std::size_t> count(cfg.n_states, 0);
    for (std::size_t k = 0; k < cfg.n_cycles; ++k) {
        level[ph.assignment[k]] += ph.trace[k];
        ++count[ph.assignment[k]];
    }
    for (std::size_t s = 0; s < cfg.n_states; ++s) level[s] /= static_cast<double>(count[s]);
    ph.state_levels.resize(cfg.n_states);
    for (std::size_t s = 0; s < cfg.n_states; ++s) ph.state_levels[s] = s == 0 ? 0.0 : level[s] - level[0];

    for (std::size_t s = 0; s < cfg.n_states; ++s) {
        DisplacementField f;
        ph.states.push_back(detail::render_state(anat, cfg, ph.state_levels[s], &f, cfg.n_phases));
        ph.fields.push_back(std::move(f));
    }

    const double margin = anat.heart_radius * 1.25 + cfg.resp_amplitude;
    auto box = [](double centre, double half, std::size_t n) {
        const double lo = std::max(0.0, std::floor(centre - half));
        const double hi = std::min(static_cast<double>(n), std::ceil(centre + half));
        return std::pair{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    };
    auto [r0, r1] = box(anat.heart_r, margin, cfg.nx);
    auto [c0, c1] = box(anat.heart_c, margin, cfg.ny);
    ph.roi = Roi{r0, r1, c0, c1};
    return ph;
}

/// Navigator image of every cycle: the first cardiac phase rendered at the
/// cycle's own respiratory position (relative to the reference state), sampled
/// on the always-acquired centre ky block and zero-filled. Returns magnitudes.
inline std::vector<Image2D> cycle_navigators(const PhantomConfig& cfg, const Phantom& ph, double center_fraction)
{
    throw_if_invalid(validate(cfg));
    const detail::Anatomy anat(cfg.nx, cfg.ny);
    SamplingConfig sc;
    sc.ny = cfg.ny;
    sc.center_fraction = center_fraction;
    const std::size_t c0 = sc.center_begin(), nc = sc.center_lines();

    double ref_level = 0.0;
    std::size_t ref_count = 0;
    for (std::size_t k = 0; k < cfg.n_cycles; ++k)
        if (ph.assignment[k] == 0) {
            ref_level += ph.trace[k];
            ++ref_count;
        }
    ref_level /= static_cast<double>(std::max<std::size_t>(ref_count, 1));

    std::vector<Image2D> out;
    out.reserve(cfg.n_cycles);
    for (std::size_t k = 0; k < cfg.n_cycles; ++k) {
        const CineImage frame = detail::render_state(anat, cfg, ph.trace[k] - ref_level, nullptr, 1);
        Frame kspace = fft2c(frame.frame_copy(0));
        for (std::size_t i = 0; i < cfg.nx; ++i)
            for (std::size_t j = 0; j < cfg.ny; ++j)
                if (j < c0 || j >= c0 + nc) kspace(i, j) = Complex(0.0, 0.0);
        const Frame img = ifft2c(kspace);
        Image2D mag(cfg.nx, cfg.ny);
        for (std::size_t q = 0; q < img.size(); ++q) mag.data[q] = std::abs(img.data[q]);
        out.push_back(std::move(mag));
    }
    return out;
}

/// y_m = A_m F x_m per state and phase, with optional complex Gaussian noise
/// at the configured SNR added before masking.
inline KSpaceData simulate_acquisition(const std::vector<CineImage>& truth, const SamplingMask& masks,
                                       const PhantomConfig& cfg)
{
    if (truth.empty() || truth.size() != masks.n_states) throw ValidationError("simulate_acquisition: state count mismatch");
    const std::size_t nx = truth[0].nx, ny = truth[0].ny, np = truth[0].n_phases;
    if (masks.ny != ny || masks.n_phases != np) throw ValidationError("simulate_acquisition: shape mismatch");
    KSpaceData y(nx, ny, np, truth.size());
    for (std::size_t s = 0; s < truth.size(); ++s) {
        if (truth[s].nx != nx || truth[s].ny != ny || truth[s].n_phases != np)
            throw ValidationError("simulate_acquisition: shape mismatch");
        fft2c_frames(truth[s].data, y.state(s), nx, ny, np);
    }
    if (cfg.noise_snr_db) {
        const double power = norm_sq(y.data) / static_cast<double>(y.data.size());
        const double sigma = std::sqrt(power / std::pow(10.0, *cfg.noise_snr_db / 10.0) / 2.0);
        Rng rng(derive_seed(cfg.seed, "phantom.noise"));
        for (auto& z : y.data) z += Complex(sigma * rng.normal(), sigma * rng.normal());
    }
    for (std::size_t s = 0; s < truth.size(); ++s) apply_mask_inplace(y.state(s), nx, ny, masks, s);
    return y;
}

} // namespace cinerecon

#endif // CINERECON_PHANTOM_HPP
