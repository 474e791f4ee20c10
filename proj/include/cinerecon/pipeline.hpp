#ifndef CINERECON_PIPELINE_HPP
#define CINERECON_PIPELINE_HPP

// Requires linking libpng and OpenSSL (libcrypto).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <png.h>

#include "cinerecon/binning.hpp"
#include "cinerecon/io.hpp"
#include "cinerecon/metrics.hpp"
#include "cinerecon/phantom.hpp"
#include "cinerecon/random.hpp"
#include "cinerecon/recon.hpp"
#include "cinerecon/sampling.hpp"

namespace cinerecon {

namespace fs = std::filesystem;

struct PipelineConfig {
    PhantomConfig phantom;
    SamplingConfig sampling;
    ReconConfig recon;
    DemonConfig demons;
    std::vector<double> R_list{2.0, 4.0, 8.0, 12.0};
    std::vector<double> beta_sweep{0.0, 0.005, 0.015, 0.05, 0.15};
    double sweep_R = 4.0;
    fs::path out_dir = "out";
    bool emit_png = false;
    std::uint64_t seed = 0;
};

/// Copies the shared dimensions and the master seed into the embedded configs.
/// The "demons" section is authoritative for the registration knobs.
inline PipelineConfig normalized(PipelineConfig cfg)
{
    cfg.sampling.ny = cfg.phantom.ny;
    cfg.sampling.n_phases = cfg.phantom.n_phases;
    cfg.sampling.n_states = cfg.phantom.n_states;
    cfg.recon.n_states = cfg.phantom.n_states;
    cfg.recon.demon_alpha = cfg.demons.alpha;
    cfg.recon.gaussian_sigma = cfg.demons.sigma;
    cfg.recon.demon_max_iters = cfg.demons.max_iters;
    cfg.recon.demon_update_tol = cfg.demons.update_tol;
    cfg.phantom.seed = derive_seed(cfg.seed, "phantom");
    cfg.recon.seed = derive_seed(cfg.seed, "recon");
    return cfg;
}

inline ValidationResult validate(const PipelineConfig& raw)
{
    const PipelineConfig cfg = normalized(raw);
    if (cfg.R_list.empty()) return "R list must be non-empty";
    for (double r : cfg.R_list) {
        SamplingConfig sc = cfg.sampling;
        sc.R = r;
        if (auto e = validate(sc)) return *e;
    }
    for (double b : cfg.beta_sweep)
        if (!(b >= 0.0) || !std::isfinite(b)) return "beta sweep values must be >= 0";
    if (!cfg.beta_sweep.empty()) {
        SamplingConfig sc = cfg.sampling;
        sc.R = cfg.sweep_R;
        if (auto e = validate(sc)) return "sweep_R: " + *e;
    }
    if (auto e = validate(cfg.phantom)) return *e;
    if (auto e = validate(cfg.recon)) return *e;
    if (auto e = validate(cfg.demons)) return *e;
    if (cfg.out_dir.empty()) return "output directory must be set";
    return std::nullopt;
}

inline void to_json(nlohmann::json& j, const PipelineConfig& c)
{
    j = {{"phantom", c.phantom}, {"sampling", c.sampling},     {"recon", c.recon},
         {"demons", c.demons},   {"R", c.R_list},              {"beta_sweep", c.beta_sweep},
         {"sweep_R", c.sweep_R}, {"emit_png", c.emit_png},     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, PipelineConfig& c)
{
    if (j.contains("phantom")) j["phantom"].get_to(c.phantom);
    if (j.contains("sampling")) j["sampling"].get_to(c.sampling);
    if (j.contains("recon")) j["recon"].get_to(c.recon);
    if (j.contains("demons")) j["demons"].get_to(c.demons);
    if (j.contains("R")) j["R"].get_to(c.R_list);
    if (j.contains("beta_sweep")) j["beta_sweep"].get_to(c.beta_sweep);
    c.sweep_R = j.value("sweep_R", c.sweep_R);
    if (j.contains("out")) c.out_dir = j["out"].get<std::string>();
    c.emit_png = j.value("emit_png", c.emit_png);
    c.seed = j.value("seed", c.seed);
}

/// One reconstruction run: acceleration R at sparsity weight beta.
struct Job {
    double R = 0.0;
    double beta = 0.0;
    fs::path dir;
};

inline std::string number_tag(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline fs::path r_dir(const PipelineConfig& cfg, double R) { return cfg.out_dir / ("R" + number_tag(R)); }

/// Every acceleration rate that needs masks and k-space.
inline std::vector<double> acquisition_rates(const PipelineConfig& cfg)
{
    std::vector<double> rates = cfg.R_list;
    if (!cfg.beta_sweep.empty()) rates.push_back(cfg.sweep_R);
    std::sort(rates.begin(), rates.end());
    rates.erase(std::unique(rates.begin(), rates.end()), rates.end());
    return rates;
}

/// Main runs at the configured beta for every R, then the beta sweep at sweep_R.
/// A sweep value equal to the configured beta reuses the main run.
inline std::vector<Job> jobs(const PipelineConfig& cfg)
{
    std::vector<double> rates = cfg.R_list;
    std::sort(rates.begin(), rates.end());
    rates.erase(std::unique(rates.begin(), rates.end()), rates.end());
    std::vector<Job> out;
    for (double r : rates) out.push_back({r, cfg.recon.beta, r_dir(cfg, r)});
    const bool sweep_in_main = std::find(rates.begin(), rates.end(), cfg.sweep_R) != rates.end();
    for (double b : cfg.beta_sweep) {
        if (b != cfg.recon.beta)
            out.push_back({cfg.sweep_R, b, r_dir(cfg, cfg.sweep_R) / ("beta-" + number_tag(b))});
        else if (!sweep_in_main)
            out.push_back({cfg.sweep_R, b, r_dir(cfg, cfg.sweep_R)});
    }
    return out;
}

inline std::uint64_t sampling_seed(const PipelineConfig& cfg, double R)
{
    return derive_seed(cfg.seed, "sampling", static_cast<std::uint64_t>(std::llround(R * 1000.0)));
}

namespace detail {

inline fs::path phantom_dir(const PipelineConfig& cfg) { return cfg.out_dir / "phantom"; }

inline void write_config_snapshot(const PipelineConfig& cfg) { write_json(cfg.out_dir / "config.json", cfg); }

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_text(const fs::path& path, const std::string& text)
{
    write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline std::string sha256_hex(const std::vector<std::uint8_t>& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

/// 8-bit grayscale PNG of one magnitude frame, scaled by its own maximum.
inline void write_png(const fs::path& path, const Image2D& img)
{
    const double peak = *std::max_element(img.data.begin(), img.data.end());
    std::vector<png_byte> rows(img.size());
    for (std::size_t q = 0; q < img.size(); ++q)
        rows[q] = static_cast<png_byte>(peak > 0.0 ? std::lround(255.0 * img.data[q] / peak) : 0);
    std::vector<png_bytep> ptrs(img.nx);
    for (std::size_t i = 0; i < img.nx; ++i) ptrs[i] = rows.data() + i * img.ny;

    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("png encoding failed: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.ny), static_cast<png_uint_32>(img.nx), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("write failed: " + path.string());
}

inline SamplingConfig sampling_for(const PipelineConfig& cfg, double R)
{
    SamplingConfig sc = cfg.sampling;
    sc.R = R;
    sc.seed = sampling_seed(cfg, R);
    return sc;
}

} // namespace detail

// Stages. Each reads its inputs from the output directory.

/// Ground-truth states, true motion fields, per-cycle navigators and the trace.
inline void stage_phantom(const PipelineConfig& raw)
{
    const PipelineConfig cfg = normalized(raw);
    throw_if_invalid(validate(cfg));
    detail::write_config_snapshot(cfg);
    const fs::path dir = detail::phantom_dir(cfg);
    const Phantom ph = generate_cine_phantom(cfg.phantom);
    const nlohmann::json pc = cfg.phantom;

    write_cine_stack(dir / "truth.ckrs", ph.states);
    write_sidecar(dir / "truth.ckrs", "CineImage[state]", pc, cfg.phantom.seed);
    write_fields(dir / "fields.ckrs", ph.fields);
    write_sidecar(dir / "fields.ckrs", "DisplacementField[state]", pc, cfg.phantom.seed);

    const auto nav = cycle_navigators(cfg.phantom, ph, cfg.sampling.center_fraction);
    CineImage stack(cfg.phantom.nx, cfg.phantom.ny, nav.size());
    for (std::size_t k = 0; k < nav.size(); ++k)
        for (std::size_t q = 0; q < nav[k].size(); ++q) stack.frame(k)[q] = Complex(nav[k].data[q], 0.0);
    write_cine(dir / "navigators.ckrs", stack);
    write_sidecar(dir / "navigators.ckrs", "CineImage[cycle]", pc, cfg.phantom.seed);

    write_json(dir / "phantom.json", {{"trace", ph.trace},
                                      {"assignment", ph.assignment},
                                      {"state_levels", ph.state_levels},
                                      {"roi", ph.roi}});
}

/// Sampling masks and simulated acquisitions for every acceleration rate.
inline void stage_mask(const PipelineConfig& raw)
{
    const PipelineConfig cfg = normalized(raw);
    throw_if_invalid(validate(cfg));
    detail::write_config_snapshot(cfg);
    const auto truth = read_cine_stack(detail::phantom_dir(cfg) / "truth.ckrs");
    for (double R : acquisition_rates(cfg)) {
        const SamplingConfig sc = detail::sampling_for(cfg, R);
        const SamplingMask mask = make_vd_mask(sc);
        const KSpaceData y = simulate_acquisition(truth, mask, cfg.phantom);
        const fs::path dir = r_dir(cfg, R);
        write_mask(dir / "mask.ckrs", mask);
        write_sidecar(dir / "mask.ckrs", "SamplingMask", sc, sc.seed);
        write_kspace(dir / "kspace.ckrs", y);
        write_sidecar(dir / "kspace.ckrs", "KSpaceData", cfg.phantom, cfg.phantom.seed);
    }
}

/// Mutual-information binning of the navigator images.
inline RespiratoryBinning stage_bin(const PipelineConfig& raw)
{
    const PipelineConfig cfg = normalized(raw);
    throw_if_invalid(validate(cfg));
    detail::write_config_snapshot(cfg);
    const CineImage nav = read_cine(detail::phantom_dir(cfg) / "navigators.ckrs");
    const auto cycles = magnitude_frames(nav);
    const auto signal = respiratory_signal(cycles, 0, cfg.recon.mi_bins);
    const RespiratoryBinning b = bin_by_similarity(signal, cfg.recon.n_states);

    const auto truth = read_json(detail::phantom_dir(cfg) / "phantom.json").at("assignment").get<std::vector<std::size_t>>();
    std::size_t agree = 0;
    for (std::size_t k = 0; k < b.assignment.size() && k < truth.size(); ++k) agree += b.assignment[k] == truth[k];
    nlohmann::json j = b;
    j["truth_agreement"] = static_cast<double>(agree) / static_cast<double>(b.assignment.size());
    write_json(cfg.out_dir / "binning.json", j);
    return b;
}

inline RespiratoryBinning read_binning(const PipelineConfig& cfg)
{
    return read_json(cfg.out_dir / "binning.json").get<RespiratoryBinning>();
}

/// Stage-1 per-state CS images and the pooled no-motion-correction baseline.
inline void stage_recon_cs(const PipelineConfig& raw)
{
    const PipelineConfig cfg = normalized(raw);
    throw_if_invalid(validate(cfg));
    detail::write_config_snapshot(cfg);
    for (const Job& job : jobs(cfg)) {
        const fs::path src = r_dir(cfg, job.R);
        const SamplingMask mask = read_mask(src / "mask.ckrs");
        const KSpaceData y = read_kspace(src / "kspace.ckrs");
        ReconConfig rc = cfg.recon;
        rc.beta = job.beta;
        std::vector<CineImage> stage1;
        nlohmann::json info = nlohmann::json::array();
        for (std::size_t m = 0; m < y.n_states; ++m) {
            SsfStats st;
            stage1.push_back(cs_recon_ssf(y, mask, m, rc, &st));
            info.push_back({{"state", m}, {"iterations", st.iterations}, {"converged", st.converged}});
        }
        const CineImage nomc = cs_recon_without_motion_correction(y, mask, rc);
        const nlohmann::json rj = rc;
        write_cine_stack(job.dir / "stage1.ckrs", stage1);
        write_sidecar(job.dir / "stage1.ckrs", "CineImage[state]", rj, rc.seed);
        write_cine(job.dir / "cs_nomc.ckrs", nomc);
        write_sidecar(job.dir / "cs_nomc.ckrs", "CineImage", rj, rc.seed);
        write_json(job.dir / "stage1.json", {{"R", job.R}, {"beta", job.beta}, {"states", info}});
    }
}

/// Stage-2 motion-corrected reconstruction from the stored stage-1 images.
inline void stage_recon_mc(const PipelineConfig& raw)
{
    const PipelineConfig cfg = normalized(raw);
    throw_if_invalid(validate(cfg));
    detail::write_config_snapshot(cfg);
    const RespiratoryBinning binning = read_binning(cfg);
    for (const Job& job : jobs(cfg)) {
        const fs::path src = r_dir(cfg, job.R);
        const SamplingMask mask = read_mask(src / "mask.ckrs");
        const KSpaceData y = read_kspace(src / "kspace.ckrs");
        const auto stage1 = read_cine_stack(job.dir / "stage1.ckrs");
        ReconConfig rc = cfg.recon;
        rc.beta = job.beta;
        const ReconResult res = mc_recon(y, mask, binning, rc, &stage1, cfg.demons);

        const nlohmann::json rj = rc;
        write_cine(job.dir / "stage2.ckrs", res.image);
        write_sidecar(job.dir / "stage2.ckrs", "CineImage", rj, rc.seed);
        write_kspace(job.dir / "stage2_kspace.ckrs", res.kspace);
        write_sidecar(job.dir / "stage2_kspace.ckrs", "KSpaceData", rj, rc.seed);
        write_fields(job.dir / "fields_est.ckrs", res.fields);
        write_sidecar(job.dir / "fields_est.ckrs", "DisplacementField[state]", rj, rc.seed);

        std::string csv = "iteration,data_residual,motion_residual\n";
        for (const auto& h : res.history)
            csv += std::to_string(h.iteration) + "," + detail::format_double(h.data_residual) + "," +
                   detail::format_double(h.motion_residual) + "\n";
        detail::write_text(job.dir / "convergence.csv", csv);
        write_json(job.dir / "recon.json", {{"R", job.R},
                                            {"beta", job.beta},
                                            {"c", rc.c},
                                            {"reference_state", binning.reference_state},
                                            {"iterations_run", res.iterations_run},
                                            {"converged", res.converged},
                                            {"final_residual_data", res.final_residual_data},
                                            {"final_residual_motion", res.final_residual_motion}});
    }
}

struct MetricRow {
    std::string method;
    double R = 0.0;
    double beta = 0.0;
    std::string frame; // cardiac phase index, or "mean"
    double mse = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::string roi; // "full" or "heart"
};

/// Metrics of both methods against the reference-state ground truth, the
/// metrics CSV, optional PNG frames and the checksum manifest.
inline std::vector<MetricRow> stage_eval(const PipelineConfig& raw)
{
    const PipelineConfig cfg = normalized(raw);
    throw_if_invalid(validate(cfg));
    detail::write_config_snapshot(cfg);
    const auto truth_states = read_cine_stack(detail::phantom_dir(cfg) / "truth.ckrs");
    const RespiratoryBinning binning = read_binning(cfg);
    if (binning.reference_state >= truth_states.size()) throw ValidationError("reference state out of range");
    const CineImage& truth = truth_states[binning.reference_state];
    const Roi heart = read_json(detail::phantom_dir(cfg) / "phantom.json").at("roi").get<Roi>();

    std::vector<MetricRow> rows;
    nlohmann::json runs = nlohmann::json::array();
    for (const Job& job : jobs(cfg)) {
        const std::pair<const char*, CineImage> methods[] = {{"cs_nomc", read_cine(job.dir / "cs_nomc.ckrs")},
                                                             {"proposed", read_cine(job.dir / "stage2.ckrs")}};
        for (const auto& [name, img] : methods) {
            for (const auto& [roi_name, roi] :
                 {std::pair<std::string, std::optional<Roi>>{"full", std::nullopt}, {"heart", heart}}) {
                const auto frames = evaluate_cine(img, truth, roi);
                for (std::size_t p = 0; p < frames.size(); ++p)
                    rows.push_back({name, job.R, job.beta, std::to_string(p), frames[p].mse, frames[p].psnr,
                                    frames[p].ssim, roi_name});
                const FrameMetrics m = mean_metrics(frames);
                rows.push_back({name, job.R, job.beta, "mean", m.mse, m.psnr, m.ssim, roi_name});
            }
            if (cfg.emit_png) {
                const fs::path rel = fs::relative(job.dir, cfg.out_dir);
                const auto frames = magnitude_frames(img);
                for (std::size_t p = 0; p < frames.size(); ++p)
                    detail::write_png(cfg.out_dir / "png" / rel / (std::string(name) + "_p" + std::to_string(p) + ".png"),
                                      frames[p]);
            }
        }
        runs.push_back(read_json(job.dir / "recon.json"));
    }
    if (cfg.emit_png) {
        const auto frames = magnitude_frames(truth);
        for (std::size_t p = 0; p < frames.size(); ++p)
            detail::write_png(cfg.out_dir / "png" / ("truth_p" + std::to_string(p) + ".png"), frames[p]);
    }

    std::string csv = "method,R,beta,frame,mse,psnr,ssim,roi\n";
    for (const auto& r : rows)
        csv += r.method + "," + number_tag(r.R) + "," + number_tag(r.beta) + "," + r.frame + "," +
               detail::format_double(r.mse) + "," + detail::format_double(r.psnr) + "," +
               detail::format_double(r.ssim) + "," + r.roi + "\n";
    detail::write_text(cfg.out_dir / "metrics.csv", csv);

    std::set<std::string> paths;
    for (const auto& e : fs::recursive_directory_iterator(cfg.out_dir))
        if (e.is_regular_file()) paths.insert(fs::relative(e.path(), cfg.out_dir).generic_string());
    paths.erase("manifest.json");
    nlohmann::json files = nlohmann::json::array();
    for (const auto& p : paths) {
        const auto bytes = detail::read_bytes(cfg.out_dir / p);
        files.push_back({{"path", p}, {"bytes", bytes.size()}, {"sha256", detail::sha256_hex(bytes)}});
    }
    write_json(cfg.out_dir / "manifest.json", {{"files", files}, {"runs", runs}});
    return rows;
}

/// phantom -> mask -> bin -> recon-cs -> recon-mc -> eval.
inline std::vector<MetricRow> run_pipeline(const PipelineConfig& cfg)
{
    throw_if_invalid(validate(cfg));
    stage_phantom(cfg);
    stage_mask(cfg);
    stage_bin(cfg);
    stage_recon_cs(cfg);
    stage_recon_mc(cfg);
    return stage_eval(cfg);
}

} // namespace cinerecon

#endif // CINERECON_PIPELINE_HPP
