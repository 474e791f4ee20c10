#include <filesystem>

#include <gtest/gtest.h>

#include "cinerecon/io.hpp"
#include "support.hpp"

using namespace cinerecon;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("cinerecon_core_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Values exactly representable in float32.
std::vector<Complex> float_valued(Rng& rng, std::size_t n)
{
    std::vector<Complex> v(n);
    for (auto& z : v) z = Complex(static_cast<float>(rng.normal()), static_cast<float>(rng.normal()));
    return v;
}

} // namespace

TEST(Validate, CineImageAccepted)
{
    CineImage x(4, 4, 2);
    for (auto& z : x.data) z = Complex(1.0, -1.0);
    EXPECT_EQ(x.data.size(), 32u);
    EXPECT_FALSE(validate(x).has_value());
}

TEST(Validate, NamesTheBrokenInvariant)
{
    ReconConfig rc;
    rc.c = 0.0;
    ASSERT_TRUE(validate(rc).has_value());
    EXPECT_EQ(*validate(rc), "c must be > 0");

    SamplingMask m(8, 2, 1, true);
    for (std::size_t j = 0; j < 8; ++j) m.set(0, 1, j, false);
    ASSERT_TRUE(validate(m).has_value());
    EXPECT_NE(validate(m)->find("empty mask row"), std::string::npos);

    CineImage bad(2, 2, 1);
    bad.data[3] = Complex(std::nan(""), 0.0);
    EXPECT_TRUE(validate(bad).has_value());
    CineImage wrong(2, 2, 1);
    wrong.data.pop_back();
    EXPECT_TRUE(validate(wrong).has_value());
}

TEST(Validate, DoesNotMutate)
{
    ReconConfig rc;
    rc.beta = -1.0;
    const ReconConfig copy = rc;
    (void)validate(rc);
    EXPECT_EQ(rc, copy);
}

TEST(Validate, DefaultsMatchPublishedParameters)
{
    const ReconConfig rc;
    EXPECT_EQ(rc.beta, 0.0150);
    EXPECT_EQ(rc.c, 0.5);
    EXPECT_FALSE(validate(rc).has_value());
}

TEST(Serialization, KSpaceRoundTripIsBitExact)
{
    Rng rng(1);
    const fs::path dir = scratch_dir("kspace");
    KSpaceData k(6, 5, 3, 2);
    k.data = float_valued(rng, k.data.size());
    write_kspace(dir / "k.ckrs", k);
    EXPECT_EQ(read_kspace(dir / "k.ckrs"), k);
}

TEST(Serialization, CineAndStackRoundTrip)
{
    Rng rng(2);
    const fs::path dir = scratch_dir("cine");
    CineImage x(4, 7, 3);
    x.data = float_valued(rng, x.data.size());
    write_cine(dir / "x.ckrs", x);
    EXPECT_EQ(read_cine(dir / "x.ckrs"), x);

    std::vector<CineImage> xs{x, x};
    xs[1].data[5] = Complex(0.25, -3.0);
    write_cine_stack(dir / "xs.ckrs", xs);
    EXPECT_EQ(read_cine_stack(dir / "xs.ckrs"), xs);
    EXPECT_THROW(read_cine(dir / "xs.ckrs"), IoError);
}

TEST(Serialization, FileToMemoryToFileIsByteIdenticalForArbitraryDoubles)
{
    Rng rng(3);
    const fs::path dir = scratch_dir("bytes");
    KSpaceData k(5, 5, 2, 1);
    k.data = testing_support::random_complex(rng, k.data.size());
    write_kspace(dir / "a.ckrs", k);
    write_kspace(dir / "b.ckrs", read_kspace(dir / "a.ckrs"));
    EXPECT_EQ(detail::read_bytes(dir / "a.ckrs"), detail::read_bytes(dir / "b.ckrs"));
}

TEST(Serialization, MaskAndFieldRoundTrip)
{
    Rng rng(4);
    const fs::path dir = scratch_dir("mask");
    SamplingMask m(9, 2, 3);
    for (auto& v : m.lines) v = rng.uniform() < 0.5 ? 1 : 0;
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t p = 0; p < 2; ++p) m.set(s, p, 4, true);
    write_mask(dir / "m.ckrs", m);
    EXPECT_EQ(read_mask(dir / "m.ckrs"), m);

    std::vector<DisplacementField> fs_(2, DisplacementField(3, 4, 2));
    for (auto& f : fs_)
        for (auto& v : f.u) v = static_cast<float>(rng.uniform(-3.0, 3.0));
    write_fields(dir / "f.ckrs", fs_);
    EXPECT_EQ(read_fields(dir / "f.ckrs"), fs_);
}

TEST(Serialization, HeaderLayout)
{
    const fs::path dir = scratch_dir("header");
    KSpaceData k(2, 3, 4, 5);
    write_kspace(dir / "k.ckrs", k);
    const auto bytes = detail::read_bytes(dir / "k.ckrs");
    ASSERT_EQ(bytes.size(), 24u + 8u * 2 * 3 * 4 * 5);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CKRS");
    const std::uint8_t expect[] = {1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 4, 0, 0, 0, 5, 0, 0, 0};
    EXPECT_TRUE(std::equal(std::begin(expect), std::end(expect), bytes.begin() + 4));
}

TEST(Serialization, RejectsCorruptFiles)
{
    const fs::path dir = scratch_dir("corrupt");
    KSpaceData k(2, 2, 1, 1);
    write_kspace(dir / "k.ckrs", k);
    auto bytes = detail::read_bytes(dir / "k.ckrs");
    bytes.pop_back();
    detail::write_bytes(dir / "short.ckrs", bytes);
    EXPECT_THROW(read_kspace(dir / "short.ckrs"), IoError);
    EXPECT_THROW(read_kspace(dir / "missing.ckrs"), IoError);
}

TEST(Serialization, SidecarNextToArray)
{
    const fs::path dir = scratch_dir("sidecar");
    write_sidecar(dir / "truth.ckrs", "CineImage", {{"nx", 4}}, 9);
    const auto j = read_json(dir / "truth.meta.json");
    EXPECT_EQ(j["type"], "CineImage");
    EXPECT_EQ(j["seed"], 9);
    EXPECT_EQ(j["config"]["nx"], 4);
}

TEST(Serialization, ConfigJsonRoundTrip)
{
    ReconConfig rc;
    rc.beta = 0.05;
    rc.freeze_motion = true;
    EXPECT_EQ(nlohmann::json(rc).get<ReconConfig>(), rc);
    PhantomConfig pc;
    pc.noise_snr_db = 30.0;
    EXPECT_EQ(nlohmann::json(pc).get<PhantomConfig>(), pc);
    SamplingConfig sc;
    sc.R = 8;
    EXPECT_EQ(nlohmann::json(sc).get<SamplingConfig>(), sc);
}
