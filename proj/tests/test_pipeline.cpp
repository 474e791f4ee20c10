#include <cstdlib>
#include <map>
#include <string>

#include <gtest/gtest.h>

#include "cinerecon/pipeline.hpp"

using namespace cinerecon;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path p = fs::path(::testing::TempDir()) / ("cinerecon_" + name);
    fs::remove_all(p);
    return p;
}

PipelineConfig minimal_config(const fs::path& out)
{
    PipelineConfig c;
    c.phantom.nx = c.phantom.ny = 64;
    c.phantom.n_phases = 8;
    c.phantom.n_states = 2;
    c.phantom.n_cycles = 12;
    c.sampling.center_fraction = 1.0 / 8.0;
    c.recon.max_outer_iters = 2;
    c.recon.max_inner_iters = 30;
    c.demons.max_iters = 30;
    c.R_list = {4.0};
    c.beta_sweep = {0.0, 0.015};
    c.out_dir = out;
    c.seed = 3;
    return c;
}

std::map<std::string, std::vector<std::uint8_t>> tree(const fs::path& root)
{
    std::map<std::string, std::vector<std::uint8_t>> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = detail::read_bytes(e.path());
    return out;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(CINERECON_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Jobs, MainRunsThenSweep)
{
    PipelineConfig c;
    c.out_dir = "o";
    c.R_list = {8.0, 4.0, 4.0};
    c.beta_sweep = {0.0, 0.015, 0.05};
    c.sweep_R = 4.0;
    const auto j = jobs(c);
    ASSERT_EQ(j.size(), 4u);
    EXPECT_EQ(j[0].dir, fs::path("o/R4"));
    EXPECT_EQ(j[1].dir, fs::path("o/R8"));
    EXPECT_EQ(j[2].dir, fs::path("o/R4/beta-0"));
    EXPECT_EQ(j[3].dir, fs::path("o/R4/beta-0.05"));
    EXPECT_EQ(acquisition_rates(c), (std::vector<double>{4.0, 8.0}));
    c.sweep_R = 2.0;
    EXPECT_EQ(jobs(c).size(), 5u);
    EXPECT_EQ(jobs(c)[3].dir, fs::path("o/R2"));
}

TEST(PipelineConfig, RejectsSubUnitAcceleration)
{
    PipelineConfig c = minimal_config(scratch_dir("reject"));
    c.R_list = {0.5};
    const auto e = validate(c);
    ASSERT_TRUE(e.has_value());
    EXPECT_NE(e->find("R"), std::string::npos);
    EXPECT_THROW(run_pipeline(c), ValidationError);
    EXPECT_FALSE(fs::exists(c.out_dir));
}

TEST(PipelineConfig, JsonRoundTrip)
{
    PipelineConfig c = minimal_config("x");
    c.phantom.noise_snr_db = 30.0;
    nlohmann::json j = c;
    j["out"] = "x";
    const PipelineConfig back = j.get<PipelineConfig>();
    EXPECT_EQ(back.phantom, c.phantom);
    EXPECT_EQ(back.sampling, c.sampling);
    EXPECT_EQ(back.recon, c.recon);
    EXPECT_EQ(back.R_list, c.R_list);
    EXPECT_EQ(back.beta_sweep, c.beta_sweep);
    EXPECT_EQ(back.out_dir, c.out_dir);
    EXPECT_EQ(back.seed, c.seed);
}

TEST(Pipeline, WritesManifestAndMetrics)
{
    const PipelineConfig c = minimal_config(scratch_dir("minimal"));
    const auto rows = run_pipeline(c);
    const auto manifest = read_json(c.out_dir / "manifest.json");
    EXPECT_GE(manifest.at("files").size(), 8u);
    for (const auto& f : manifest["files"]) {
        const auto bytes = detail::read_bytes(c.out_dir / f["path"].get<std::string>());
        EXPECT_EQ(f["bytes"].get<std::size_t>(), bytes.size());
        EXPECT_EQ(f["sha256"].get<std::string>(), detail::sha256_hex(bytes));
    }
    EXPECT_EQ(manifest.at("runs").size(), jobs(c).size());
    // 2 methods x 2 rois x (8 frames + mean) per job
    EXPECT_EQ(rows.size(), jobs(c).size() * 2 * 2 * 9);
    for (const auto& r : rows) {
        EXPECT_GE(r.mse, 0.0);
        EXPECT_LE(r.ssim, 1.0 + 1e-12);
    }
    EXPECT_TRUE(fs::exists(c.out_dir / "metrics.csv"));
}

TEST(Pipeline, RerunIsByteIdentical)
{
    const PipelineConfig a = minimal_config(scratch_dir("rerun_a"));
    PipelineConfig b = a;
    b.out_dir = scratch_dir("rerun_b");
    run_pipeline(a);
    run_pipeline(b);
    const auto ta = tree(a.out_dir), tb = tree(b.out_dir);
    ASSERT_EQ(ta.size(), tb.size());
    for (const auto& [path, bytes] : ta) {
        ASSERT_TRUE(tb.count(path)) << path;
        EXPECT_EQ(bytes, tb.at(path)) << path;
    }
}

TEST(Pipeline, StagesComposeToTheFullRun)
{
    const PipelineConfig whole = minimal_config(scratch_dir("whole"));
    PipelineConfig staged = whole;
    staged.out_dir = scratch_dir("staged");
    run_pipeline(whole);
    stage_phantom(staged);
    stage_mask(staged);
    stage_bin(staged);
    stage_recon_cs(staged);
    stage_recon_mc(staged);
    stage_eval(staged);
    EXPECT_EQ(tree(whole.out_dir), tree(staged.out_dir));
}

TEST(Pipeline, StageWithoutInputsReportsIoError)
{
    const PipelineConfig c = minimal_config(scratch_dir("missing"));
    EXPECT_THROW(stage_recon_cs(c), IoError);
}

TEST(Cli, SubcommandsMatchLibraryAndReportErrors)
{
    const fs::path cfg_path = scratch_dir("cli_cfg.json");
    const PipelineConfig lib = minimal_config(scratch_dir("cli_lib"));
    PipelineConfig file_cfg = lib;
    file_cfg.emit_png = true;
    write_json(cfg_path, file_cfg);

    const fs::path out = scratch_dir("cli_out");
    for (const char* cmd : {"phantom", "mask", "bin", "recon-cs", "recon-mc", "eval"})
        ASSERT_EQ(run_cli(std::string(cmd) + " --config " + cfg_path.string() + " --out " + out.string()), 0) << cmd;
    PipelineConfig with_png = lib;
    with_png.emit_png = true;
    run_pipeline(with_png);
    EXPECT_EQ(tree(lib.out_dir), tree(out));
    EXPECT_TRUE(fs::exists(out / "png" / "truth_p0.png"));

    EXPECT_EQ(run_cli("pipeline --config " + cfg_path.string() + " --out " + scratch_dir("cli_bad").string() +
                      " --R 0.5"),
              1);
    EXPECT_EQ(run_cli("recon-cs --config " + cfg_path.string() + " --out " + scratch_dir("cli_empty").string()), 2);
    EXPECT_EQ(run_cli("no-such-command"), 1);
}
