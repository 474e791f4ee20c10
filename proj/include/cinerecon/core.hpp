#ifndef CINERECON_CORE_HPP
#define CINERECON_CORE_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cinerecon {

using Complex = std::complex<double>;

/// Raised when a domain type or configuration violates one of its invariants.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Outcome of validate(): empty on success, otherwise names the broken invariant.
using ValidationResult = std::optional<std::string>;

inline void throw_if_invalid(const ValidationResult& r)
{
    if (r) throw ValidationError(*r);
}

namespace detail {

inline bool all_finite(std::span<const Complex> v)
{
    for (const auto& z : v)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

inline bool all_finite(std::span<const double> v)
{
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace detail

// Memory layout everywhere: ((state * n_phases + phase) * nx + row) * ny + col.
// Columns are the phase-encode (ky) direction, rows the fully sampled readout.

/// Real-valued 2D image, row-major.
struct Image2D {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<double> data;

    Image2D() = default;
    Image2D(std::size_t rows, std::size_t cols, double fill = 0.0)
        : nx(rows), ny(cols), data(rows * cols, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * ny + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * ny + j]; }
    std::size_t size() const { return data.size(); }
};

/// Complex 2D frame, row-major.
struct Frame {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<Complex> data;

    Frame() = default;
    Frame(std::size_t rows, std::size_t cols) : nx(rows), ny(cols), data(rows * cols) {}

    Complex& operator()(std::size_t i, std::size_t j) { return data[i * ny + j]; }
    const Complex& operator()(std::size_t i, std::size_t j) const { return data[i * ny + j]; }
    std::size_t size() const { return data.size(); }
};

/// Complex cine stack: nx x ny pixels over n_phases cardiac phases.
struct CineImage {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t n_phases = 0;
    std::vector<Complex> data;

    CineImage() = default;
    CineImage(std::size_t rows, std::size_t cols, std::size_t phases)
        : nx(rows), ny(cols), n_phases(phases), data(rows * cols * phases) {}

    std::size_t frame_size() const { return nx * ny; }
    std::span<Complex> frame(std::size_t p) { return {data.data() + p * frame_size(), frame_size()}; }
    std::span<const Complex> frame(std::size_t p) const
    {
        return {data.data() + p * frame_size(), frame_size()};
    }
    Complex& at(std::size_t p, std::size_t i, std::size_t j) { return data[(p * nx + i) * ny + j]; }
    const Complex& at(std::size_t p, std::size_t i, std::size_t j) const
    {
        return data[(p * nx + i) * ny + j];
    }

    Frame frame_copy(std::size_t p) const
    {
        Frame f(nx, ny);
        auto src = frame(p);
        std::copy(src.begin(), src.end(), f.data.begin());
        return f;
    }
    void set_frame(std::size_t p, const Frame& f)
    {
        std::copy(f.data.begin(), f.data.end(), frame(p).begin());
    }

    friend bool operator==(const CineImage&, const CineImage&) = default;
};

/// Complex k-space samples for every (state, phase, kx, ky). DC sits at (nx/2, ny/2).
struct KSpaceData {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t n_phases = 0;
    std::size_t n_states = 0;
    std::vector<Complex> data;

    KSpaceData() = default;
    KSpaceData(std::size_t rows, std::size_t cols, std::size_t phases, std::size_t states)
        : nx(rows), ny(cols), n_phases(phases), n_states(states), data(rows * cols * phases * states) {}

    std::size_t frame_size() const { return nx * ny; }
    std::size_t state_size() const { return nx * ny * n_phases; }
    std::span<Complex> frame(std::size_t s, std::size_t p)
    {
        return {data.data() + (s * n_phases + p) * frame_size(), frame_size()};
    }
    std::span<const Complex> frame(std::size_t s, std::size_t p) const
    {
        return {data.data() + (s * n_phases + p) * frame_size(), frame_size()};
    }
    std::span<Complex> state(std::size_t s) { return {data.data() + s * state_size(), state_size()}; }
    std::span<const Complex> state(std::size_t s) const
    {
        return {data.data() + s * state_size(), state_size()};
    }

    friend bool operator==(const KSpaceData&, const KSpaceData&) = default;
};

/// ky-t sampling pattern per respiratory state; kx is always fully sampled.
struct SamplingMask {
    std::size_t ny = 0;
    std::size_t n_phases = 0;
    std::size_t n_states = 0;
    std::vector<std::uint8_t> lines;

    SamplingMask() = default;
    SamplingMask(std::size_t cols, std::size_t phases, std::size_t states, bool fill = false)
        : ny(cols), n_phases(phases), n_states(states), lines(cols * phases * states, fill ? 1 : 0) {}

    bool sampled(std::size_t s, std::size_t p, std::size_t ky) const
    {
        return lines[(s * n_phases + p) * ny + ky] != 0;
    }
    void set(std::size_t s, std::size_t p, std::size_t ky, bool on)
    {
        lines[(s * n_phases + p) * ny + ky] = on ? 1 : 0;
    }
    std::span<const std::uint8_t> row(std::size_t s, std::size_t p) const
    {
        return {lines.data() + (s * n_phases + p) * ny, ny};
    }
    std::size_t count(std::size_t s, std::size_t p) const
    {
        std::size_t n = 0;
        for (auto v : row(s, p)) n += v;
        return n;
    }

    friend bool operator==(const SamplingMask&, const SamplingMask&) = default;
};

/// Per-pixel (row, col) displacement in pixels for every cardiac phase of one state.
struct DisplacementField {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t n_phases = 0;
    std::vector<double> u; // interleaved (row, col) per pixel

    DisplacementField() = default;
    DisplacementField(std::size_t rows, std::size_t cols, std::size_t phases)
        : nx(rows), ny(cols), n_phases(phases), u(2 * rows * cols * phases, 0.0) {}

    std::size_t frame_size() const { return 2 * nx * ny; }
    std::span<double> frame(std::size_t p) { return {u.data() + p * frame_size(), frame_size()}; }
    std::span<const double> frame(std::size_t p) const
    {
        return {u.data() + p * frame_size(), frame_size()};
    }

    friend bool operator==(const DisplacementField&, const DisplacementField&) = default;
};

/// Single-phase view of a displacement field, used by the registration kernels.
struct FieldFrame {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<double> u; // interleaved (row, col)

    FieldFrame() = default;
    FieldFrame(std::size_t rows, std::size_t cols) : nx(rows), ny(cols), u(2 * rows * cols, 0.0) {}

    double& row(std::size_t i, std::size_t j) { return u[2 * (i * ny + j)]; }
    double& col(std::size_t i, std::size_t j) { return u[2 * (i * ny + j) + 1]; }
    double row(std::size_t i, std::size_t j) const { return u[2 * (i * ny + j)]; }
    double col(std::size_t i, std::size_t j) const { return u[2 * (i * ny + j) + 1]; }
};

inline FieldFrame field_frame(const DisplacementField& f, std::size_t p)
{
    FieldFrame out(f.nx, f.ny);
    auto src = f.frame(p);
    std::copy(src.begin(), src.end(), out.u.begin());
    return out;
}

inline void set_field_frame(DisplacementField& f, std::size_t p, const FieldFrame& fr)
{
    std::copy(fr.u.begin(), fr.u.end(), f.frame(p).begin());
}

/// Cycle-to-state assignment produced by respiratory binning.
struct RespiratoryBinning {
    std::vector<std::size_t> assignment;
    std::vector<std::size_t> state_counts;
    std::size_t reference_state = 0;
    std::vector<double> signal;

    friend bool operator==(const RespiratoryBinning&, const RespiratoryBinning&) = default;
};

/// Scalar knobs of both reconstruction stages.
struct ReconConfig {
    double beta = 0.0150;
    double c = 0.5;
    // Stopping tolerances, relative: tol1 * ||y||^2 and tol2 * ||x_ref||^2.
    double tol1 = 1e-6;
    double tol2 = 1e-4;
    std::size_t max_outer_iters = 10;
    std::size_t max_inner_iters = 200;
    double inner_tol = 1e-6;
    double demon_alpha = 2.5;
    double gaussian_sigma = 1.5;
    std::size_t demon_max_iters = 200;
    double demon_update_tol = 1e-3;
    std::size_t n_states = 4;
    std::size_t mi_bins = 32;
    bool freeze_motion = false;
    std::uint64_t seed = 0;

    friend bool operator==(const ReconConfig&, const ReconConfig&) = default;
};

// validate() never mutates; every overload reports the first violated invariant.

inline ValidationResult validate(const CineImage& x)
{
    if (x.nx < 1 || x.ny < 1 || x.n_phases < 1) return "CineImage dimensions must be >= 1";
    if (x.data.size() != x.nx * x.ny * x.n_phases) return "CineImage dimension mismatch";
    if (!detail::all_finite(x.data)) return "CineImage contains a non-finite value";
    return std::nullopt;
}

inline ValidationResult validate(const KSpaceData& k)
{
    if (k.nx < 1 || k.ny < 1 || k.n_phases < 1 || k.n_states < 1) return "KSpaceData dimensions must be >= 1";
    if (k.data.size() != k.nx * k.ny * k.n_phases * k.n_states) return "KSpaceData dimension mismatch";
    if (!detail::all_finite(k.data)) return "KSpaceData contains a non-finite value";
    return std::nullopt;
}

inline ValidationResult validate(const SamplingMask& m)
{
    if (m.ny < 1 || m.n_phases < 1 || m.n_states < 1) return "SamplingMask dimensions must be >= 1";
    if (m.lines.size() != m.ny * m.n_phases * m.n_states) return "SamplingMask dimension mismatch";
    for (auto v : m.lines)
        if (v > 1) return "SamplingMask must be boolean-valued";
    for (std::size_t s = 0; s < m.n_states; ++s)
        for (std::size_t p = 0; p < m.n_phases; ++p)
            if (m.count(s, p) == 0) return "empty mask row";
    return std::nullopt;
}

inline ValidationResult validate(const DisplacementField& f)
{
    if (f.nx < 1 || f.ny < 1 || f.n_phases < 1) return "DisplacementField dimensions must be >= 1";
    if (f.u.size() != 2 * f.nx * f.ny * f.n_phases) return "DisplacementField dimension mismatch";
    if (!detail::all_finite(f.u)) return "DisplacementField contains a non-finite value";
    return std::nullopt;
}

inline ValidationResult validate(const RespiratoryBinning& b)
{
    const std::size_t d = b.state_counts.size();
    if (d == 0) return "RespiratoryBinning has no states";
    std::vector<std::size_t> counts(d, 0);
    for (auto s : b.assignment) {
        if (s >= d) return "RespiratoryBinning assignment out of range";
        ++counts[s];
    }
    if (counts != b.state_counts) return "RespiratoryBinning state_counts disagree with assignment";
    std::size_t best = 0;
    for (std::size_t s = 1; s < d; ++s)
        if (counts[s] > counts[best]) best = s;
    if (b.reference_state != best) return "RespiratoryBinning reference_state is not the most populated state";
    if (!b.signal.empty() && b.signal.size() != b.assignment.size())
        return "RespiratoryBinning signal length mismatch";
    if (!detail::all_finite(b.signal)) return "RespiratoryBinning signal contains a non-finite value";
    return std::nullopt;
}

inline ValidationResult validate(const ReconConfig& c)
{
    if (!(c.beta >= 0.0) || !std::isfinite(c.beta)) return "beta must be >= 0";
    if (!(c.c > 0.0) || !std::isfinite(c.c)) return "c must be > 0";
    if (!(c.tol1 > 0.0)) return "tol1 must be > 0";
    if (!(c.tol2 > 0.0)) return "tol2 must be > 0";
    if (c.max_outer_iters < 1) return "max_outer_iters must be > 0";
    if (c.max_inner_iters < 1) return "max_inner_iters must be > 0";
    if (!(c.inner_tol > 0.0)) return "inner_tol must be > 0";
    if (!(c.demon_alpha > 0.0)) return "demon_alpha must be > 0";
    if (!(c.gaussian_sigma > 0.0)) return "gaussian_sigma must be > 0";
    if (c.demon_max_iters < 1) return "demon_max_iters must be > 0";
    if (!(c.demon_update_tol > 0.0)) return "demon_update_tol must be > 0";
    if (c.n_states < 1) return "n_states must be >= 1";
    if (c.mi_bins < 2) return "mi_bins must be >= 2";
    return std::nullopt;
}

} // namespace cinerecon

#endif // CINERECON_CORE_HPP
