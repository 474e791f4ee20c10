#ifndef CINERECON_SAMPLING_HPP
#define CINERECON_SAMPLING_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "cinerecon/core.hpp"
#include "cinerecon/random.hpp"

namespace cinerecon {

struct SamplingConfig {
    std::size_t ny = 128;
    std::size_t n_phases = 16;
    std::size_t n_states = 4;
    double R = 4.0;
    double center_fraction = 1.0 / 16.0;
    double density_power = 3.0;
    std::uint64_t seed = 0;

    std::size_t line_budget() const { return static_cast<std::size_t>(std::llround(static_cast<double>(ny) / R)); }
    std::size_t center_lines() const
    {
        return static_cast<std::size_t>(std::ceil(center_fraction * static_cast<double>(ny) - 1e-9));
    }
    /// First line of the always-sampled block, centred on ky = ny/2.
    std::size_t center_begin() const { return ny / 2 - center_lines() / 2; }

    friend bool operator==(const SamplingConfig&, const SamplingConfig&) = default;
};

inline ValidationResult validate(const SamplingConfig& c)
{
    if (c.ny < 1 || c.n_phases < 1 || c.n_states < 1) return "SamplingConfig dimensions must be >= 1";
    if (!(c.R >= 1.0) || !std::isfinite(c.R)) return "R must be >= 1";
    if (!(c.center_fraction > 0.0 && c.center_fraction < 1.0)) return "center_fraction must lie in (0, 1)";
    if (!(c.density_power >= 0.0) || !std::isfinite(c.density_power)) return "density_power must be >= 0";
    if (c.line_budget() < c.center_lines()) return "infeasible config: center block exceeds line budget";
    return std::nullopt;
}

/// Sampling weight of line ky: (1 - |ky_normalized|)^power, ky_normalized in [-1, 1).
inline double vd_density(std::size_t ky, std::size_t ny, double power)
{
    const double half = static_cast<double>(ny) / 2.0;
    const double k = (static_cast<double>(ky) - static_cast<double>(ny / 2)) / half;
    return std::pow(std::max(0.0, 1.0 - std::abs(k)), power);
}

/// Variable-density random ky-t mask. Every (state, phase) row gets exactly
/// round(ny / R) lines: the centre block plus weighted draws without
/// replacement. Rows are drawn in (state, phase) order from one generator.
inline SamplingMask make_vd_mask(const SamplingConfig& cfg)
{
    throw_if_invalid(validate(cfg));
    SamplingMask mask(cfg.ny, cfg.n_phases, cfg.n_states);
    const std::size_t budget = cfg.line_budget();
    const std::size_t c0 = cfg.center_begin(), nc = cfg.center_lines();

    std::vector<double> base(cfg.ny);
    for (std::size_t ky = 0; ky < cfg.ny; ++ky) base[ky] = vd_density(ky, cfg.ny, cfg.density_power);

    Rng rng(cfg.seed);
    std::vector<double> w(cfg.ny);
    for (std::size_t s = 0; s < cfg.n_states; ++s) {
        for (std::size_t p = 0; p < cfg.n_phases; ++p) {
            std::vector<bool> taken(cfg.ny, false);
            for (std::size_t ky = c0; ky < c0 + nc; ++ky) taken[ky] = true;
            for (std::size_t n = nc; n < budget; ++n) {
                double total = 0.0;
                std::size_t free_lines = 0;
                for (std::size_t ky = 0; ky < cfg.ny; ++ky) {
                    w[ky] = taken[ky] ? 0.0 : base[ky];
                    total += w[ky];
                    free_lines += taken[ky] ? 0 : 1;
                }
                std::size_t pick = cfg.ny;
                if (total > 0.0) {
                    double u = rng.uniform() * total;
                    for (std::size_t ky = 0; ky < cfg.ny; ++ky) {
                        if (w[ky] <= 0.0) continue;
                        pick = ky;
                        if (u < w[ky]) break;
                        u -= w[ky];
                    }
                } else {
                    // Only zero-density lines are left: fall back to a uniform draw.
                    std::size_t k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(free_lines));
                    for (std::size_t ky = 0; ky < cfg.ny; ++ky) {
                        if (taken[ky]) continue;
                        if (k-- == 0) {
                            pick = ky;
                            break;
                        }
                    }
                }
                taken[pick] = true;
            }
            for (std::size_t ky = 0; ky < cfg.ny; ++ky) mask.set(s, p, ky, taken[ky]);
        }
    }
    return mask;
}

} // namespace cinerecon

#endif // CINERECON_SAMPLING_HPP
