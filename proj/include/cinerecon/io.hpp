#ifndef CINERECON_IO_HPP
#define CINERECON_IO_HPP

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cinerecon/core.hpp"
#include "cinerecon/phantom.hpp"
#include "cinerecon/registration.hpp"
#include "cinerecon/sampling.hpp"

namespace cinerecon {

/// Raised when a file cannot be opened, written or parsed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr std::array<char, 4> kCkrsMagic{'C', 'K', 'R', 'S'};
constexpr std::uint32_t kCkrsVersion = 1;

/// Fixed 24-byte header of every array file.
struct CkrsHeader {
    std::uint32_t version = kCkrsVersion;
    std::uint32_t nx = 0, ny = 0, n_phases = 0, n_states = 0;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

inline std::uint32_t get_u32(const std::uint8_t* p)
{
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

inline void put_f32(std::vector<std::uint8_t>& out, double v)
{
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

inline double get_f32(const std::uint8_t* p)
{
    const std::uint32_t bits = get_u32(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

inline std::uint32_t to_u32(std::size_t v, const char* what)
{
    if (v > 0xffffffffu) throw ValidationError(std::string(what) + " exceeds 32-bit range");
    return static_cast<std::uint32_t>(v);
}

inline std::vector<std::uint8_t> encode_header(const CkrsHeader& h)
{
    std::vector<std::uint8_t> out(kCkrsMagic.begin(), kCkrsMagic.end());
    put_u32(out, h.version);
    put_u32(out, h.nx);
    put_u32(out, h.ny);
    put_u32(out, h.n_phases);
    put_u32(out, h.n_states);
    return out;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes)
{
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Parses the header and checks that the payload has `bytes_per_unit * units(h)` bytes.
template <class Units>
inline CkrsHeader parse(const std::vector<std::uint8_t>& bytes, std::size_t bytes_per_unit, Units units,
                        const std::filesystem::path& path)
{
    if (bytes.size() < 24 || std::memcmp(bytes.data(), kCkrsMagic.data(), 4) != 0)
        throw IoError("not a CKRS file: " + path.string());
    CkrsHeader h;
    h.version = get_u32(bytes.data() + 4);
    h.nx = get_u32(bytes.data() + 8);
    h.ny = get_u32(bytes.data() + 12);
    h.n_phases = get_u32(bytes.data() + 16);
    h.n_states = get_u32(bytes.data() + 20);
    if (h.version != kCkrsVersion) throw IoError("unsupported CKRS version in " + path.string());
    if (bytes.size() != 24 + bytes_per_unit * units(h)) throw IoError("truncated or oversized CKRS payload: " + path.string());
    return h;
}

inline std::vector<std::uint8_t> encode_complex(const CkrsHeader& h, std::span<const Complex> data)
{
    auto out = encode_header(h);
    out.reserve(out.size() + 8 * data.size());
    for (const auto& z : data) {
        put_f32(out, z.real());
        put_f32(out, z.imag());
    }
    return out;
}

inline void decode_complex(const std::vector<std::uint8_t>& bytes, std::span<Complex> out)
{
    const std::uint8_t* p = bytes.data() + 24;
    for (auto& z : out) {
        z = Complex(get_f32(p), get_f32(p + 4));
        p += 8;
    }
}

inline std::size_t complex_units(const CkrsHeader& h)
{
    return std::size_t{h.nx} * h.ny * h.n_phases * h.n_states;
}

} // namespace detail

/// "<dir>/<stem>.meta.json" next to an array file.
inline std::filesystem::path sidecar_path(const std::filesystem::path& path)
{
    return path.parent_path() / (path.stem().string() + ".meta.json");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    const std::string text = j.dump(2) + "\n";
    detail::write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline nlohmann::json read_json(const std::filesystem::path& path)
{
    const auto bytes = detail::read_bytes(path);
    try {
        return nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_sidecar(const std::filesystem::path& path, const std::string& type, const nlohmann::json& config,
                          std::uint64_t seed)
{
    write_json(sidecar_path(path), {{"type", type}, {"config", config}, {"seed", seed}});
}

// Complex payloads -----------------------------------------------------------

inline void write_kspace(const std::filesystem::path& path, const KSpaceData& k)
{
    throw_if_invalid(validate(k));
    const CkrsHeader h{kCkrsVersion, detail::to_u32(k.nx, "nx"), detail::to_u32(k.ny, "ny"),
                       detail::to_u32(k.n_phases, "n_phases"), detail::to_u32(k.n_states, "n_states")};
    detail::write_bytes(path, detail::encode_complex(h, k.data));
}

inline KSpaceData read_kspace(const std::filesystem::path& path)
{
    const auto bytes = detail::read_bytes(path);
    const CkrsHeader h = detail::parse(bytes, 8, detail::complex_units, path);
    KSpaceData k(h.nx, h.ny, h.n_phases, h.n_states);
    detail::decode_complex(bytes, k.data);
    return k;
}

inline void write_cine(const std::filesystem::path& path, const CineImage& x)
{
    throw_if_invalid(validate(x));
    const CkrsHeader h{kCkrsVersion, detail::to_u32(x.nx, "nx"), detail::to_u32(x.ny, "ny"),
                       detail::to_u32(x.n_phases, "n_phases"), 1};
    detail::write_bytes(path, detail::encode_complex(h, x.data));
}

inline CineImage read_cine(const std::filesystem::path& path)
{
    const auto bytes = detail::read_bytes(path);
    const CkrsHeader h = detail::parse(bytes, 8, detail::complex_units, path);
    if (h.n_states != 1) throw IoError("expected a single cine in " + path.string());
    CineImage x(h.nx, h.ny, h.n_phases);
    detail::decode_complex(bytes, x.data);
    return x;
}

/// One cine per state, stored like k-space with n_states = stack size.
inline void write_cine_stack(const std::filesystem::path& path, const std::vector<CineImage>& xs)
{
    if (xs.empty()) throw ValidationError("cine stack must be non-empty");
    KSpaceData k(xs[0].nx, xs[0].ny, xs[0].n_phases, xs.size());
    for (std::size_t s = 0; s < xs.size(); ++s) {
        if (xs[s].nx != k.nx || xs[s].ny != k.ny || xs[s].n_phases != k.n_phases)
            throw ValidationError("cine stack dimension mismatch");
        std::copy(xs[s].data.begin(), xs[s].data.end(), k.state(s).begin());
    }
    write_kspace(path, k);
}

inline std::vector<CineImage> read_cine_stack(const std::filesystem::path& path)
{
    const KSpaceData k = read_kspace(path);
    std::vector<CineImage> xs;
    for (std::size_t s = 0; s < k.n_states; ++s) {
        CineImage x(k.nx, k.ny, k.n_phases);
        std::copy(k.state(s).begin(), k.state(s).end(), x.data.begin());
        xs.push_back(std::move(x));
    }
    return xs;
}

// Masks: one byte per (state, phase, ky) line; the header records nx = 1.

inline void write_mask(const std::filesystem::path& path, const SamplingMask& m)
{
    throw_if_invalid(validate(m));
    const CkrsHeader h{kCkrsVersion, 1, detail::to_u32(m.ny, "ny"), detail::to_u32(m.n_phases, "n_phases"),
                       detail::to_u32(m.n_states, "n_states")};
    auto out = detail::encode_header(h);
    out.insert(out.end(), m.lines.begin(), m.lines.end());
    detail::write_bytes(path, out);
}

inline SamplingMask read_mask(const std::filesystem::path& path)
{
    const auto bytes = detail::read_bytes(path);
    const CkrsHeader h = detail::parse(
        bytes, 1, [](const CkrsHeader& hh) { return std::size_t{hh.ny} * hh.n_phases * hh.n_states; }, path);
    SamplingMask m(h.ny, h.n_phases, h.n_states);
    for (std::size_t q = 0; q < m.lines.size(); ++q) {
        const std::uint8_t v = bytes[24 + q];
        if (v > 1) throw IoError("mask byte is neither 0 nor 1 in " + path.string());
        m.lines[q] = v;
    }
    return m;
}

// Displacement fields: float32 (row, col) pairs per pixel, one field per state.

inline void write_fields(const std::filesystem::path& path, const std::vector<DisplacementField>& fs)
{
    if (fs.empty()) throw ValidationError("field stack must be non-empty");
    const auto& f0 = fs[0];
    const CkrsHeader h{kCkrsVersion, detail::to_u32(f0.nx, "nx"), detail::to_u32(f0.ny, "ny"),
                       detail::to_u32(f0.n_phases, "n_phases"), detail::to_u32(fs.size(), "n_states")};
    auto out = detail::encode_header(h);
    for (const auto& f : fs) {
        throw_if_invalid(validate(f));
        if (f.nx != f0.nx || f.ny != f0.ny || f.n_phases != f0.n_phases)
            throw ValidationError("field stack dimension mismatch");
        for (double v : f.u) detail::put_f32(out, v);
    }
    detail::write_bytes(path, out);
}

inline std::vector<DisplacementField> read_fields(const std::filesystem::path& path)
{
    const auto bytes = detail::read_bytes(path);
    const CkrsHeader h = detail::parse(bytes, 8, detail::complex_units, path);
    std::vector<DisplacementField> fs;
    const std::uint8_t* p = bytes.data() + 24;
    for (std::size_t s = 0; s < h.n_states; ++s) {
        DisplacementField f(h.nx, h.ny, h.n_phases);
        for (double& v : f.u) {
            v = detail::get_f32(p);
            p += 4;
        }
        fs.push_back(std::move(f));
    }
    return fs;
}

// JSON mappings of configuration and result types ------------------------------

inline void to_json(nlohmann::json& j, const Roi& r)
{
    j = {{"row_begin", r.row_begin}, {"row_end", r.row_end}, {"col_begin", r.col_begin}, {"col_end", r.col_end}};
}

inline void from_json(const nlohmann::json& j, Roi& r)
{
    j.at("row_begin").get_to(r.row_begin);
    j.at("row_end").get_to(r.row_end);
    j.at("col_begin").get_to(r.col_begin);
    j.at("col_end").get_to(r.col_end);
}

inline void to_json(nlohmann::json& j, const RespiratoryBinning& b)
{
    j = {{"assignment", b.assignment},
         {"state_counts", b.state_counts},
         {"reference_state", b.reference_state},
         {"signal", b.signal}};
}

inline void from_json(const nlohmann::json& j, RespiratoryBinning& b)
{
    j.at("assignment").get_to(b.assignment);
    j.at("state_counts").get_to(b.state_counts);
    j.at("reference_state").get_to(b.reference_state);
    j.at("signal").get_to(b.signal);
}

inline void to_json(nlohmann::json& j, const PhantomConfig& c)
{
    j = {{"nx", c.nx},
         {"ny", c.ny},
         {"n_phases", c.n_phases},
         {"n_cycles", c.n_cycles},
         {"n_states", c.n_states},
         {"resp_amplitude", c.resp_amplitude},
         {"resp_rotation", c.resp_rotation},
         {"deform_amplitude", c.deform_amplitude},
         {"resp_period", c.resp_period},
         {"noise_snr_db", c.noise_snr_db ? nlohmann::json(*c.noise_snr_db) : nlohmann::json(nullptr)},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, PhantomConfig& c)
{
    c.nx = j.value("nx", c.nx);
    c.ny = j.value("ny", c.ny);
    c.n_phases = j.value("n_phases", c.n_phases);
    c.n_cycles = j.value("n_cycles", c.n_cycles);
    c.n_states = j.value("n_states", c.n_states);
    c.resp_amplitude = j.value("resp_amplitude", c.resp_amplitude);
    c.resp_rotation = j.value("resp_rotation", c.resp_rotation);
    c.deform_amplitude = j.value("deform_amplitude", c.deform_amplitude);
    c.resp_period = j.value("resp_period", c.resp_period);
    if (j.contains("noise_snr_db"))
        c.noise_snr_db = j["noise_snr_db"].is_null() ? std::nullopt : std::optional<double>(j["noise_snr_db"].get<double>());
    c.seed = j.value("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const SamplingConfig& c)
{
    j = {{"ny", c.ny},
         {"n_phases", c.n_phases},
         {"n_states", c.n_states},
         {"R", c.R},
         {"center_fraction", c.center_fraction},
         {"density_power", c.density_power},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SamplingConfig& c)
{
    c.ny = j.value("ny", c.ny);
    c.n_phases = j.value("n_phases", c.n_phases);
    c.n_states = j.value("n_states", c.n_states);
    c.R = j.value("R", c.R);
    c.center_fraction = j.value("center_fraction", c.center_fraction);
    c.density_power = j.value("density_power", c.density_power);
    c.seed = j.value("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const ReconConfig& c)
{
    j = {{"beta", c.beta},
         {"c", c.c},
         {"tol1", c.tol1},
         {"tol2", c.tol2},
         {"max_outer_iters", c.max_outer_iters},
         {"max_inner_iters", c.max_inner_iters},
         {"inner_tol", c.inner_tol},
         {"demon_alpha", c.demon_alpha},
         {"gaussian_sigma", c.gaussian_sigma},
         {"demon_max_iters", c.demon_max_iters},
         {"demon_update_tol", c.demon_update_tol},
         {"n_states", c.n_states},
         {"mi_bins", c.mi_bins},
         {"freeze_motion", c.freeze_motion},
         {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ReconConfig& c)
{
    c.beta = j.value("beta", c.beta);
    c.c = j.value("c", c.c);
    c.tol1 = j.value("tol1", c.tol1);
    c.tol2 = j.value("tol2", c.tol2);
    c.max_outer_iters = j.value("max_outer_iters", c.max_outer_iters);
    c.max_inner_iters = j.value("max_inner_iters", c.max_inner_iters);
    c.inner_tol = j.value("inner_tol", c.inner_tol);
    c.demon_alpha = j.value("demon_alpha", c.demon_alpha);
    c.gaussian_sigma = j.value("gaussian_sigma", c.gaussian_sigma);
    c.demon_max_iters = j.value("demon_max_iters", c.demon_max_iters);
    c.demon_update_tol = j.value("demon_update_tol", c.demon_update_tol);
    c.n_states = j.value("n_states", c.n_states);
    c.mi_bins = j.value("mi_bins", c.mi_bins);
    c.freeze_motion = j.value("freeze_motion", c.freeze_motion);
    c.seed = j.value("seed", c.seed);
}

inline void to_json(nlohmann::json& j, const DemonConfig& c)
{
    j = {{"alpha", c.alpha},
         {"sigma", c.sigma},
         {"max_iters", c.max_iters},
         {"update_tol", c.update_tol},
         {"patience", c.patience},
         {"stall_tol", c.stall_tol}};
}

inline void from_json(const nlohmann::json& j, DemonConfig& c)
{
    c.alpha = j.value("alpha", c.alpha);
    c.sigma = j.value("sigma", c.sigma);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.update_tol = j.value("update_tol", c.update_tol);
    c.patience = j.value("patience", c.patience);
    c.stall_tol = j.value("stall_tol", c.stall_tol);
}

} // namespace cinerecon

#endif // CINERECON_IO_HPP
