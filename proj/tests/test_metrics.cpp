#include <gtest/gtest.h>

#include "cinerecon/metrics.hpp"
#include "support.hpp"

using namespace cinerecon;

namespace {

// Direct per-window evaluation of the SSIM formula from explicit pixel lists.
double ssim_oracle(const Image2D& a, const Image2D& b)
{
    const double c1 = 1e-4, c2 = 9e-4;
    double sum = 0.0;
    int count = 0;
    for (std::size_t i0 = 0; i0 + 8 <= a.nx; ++i0)
        for (std::size_t j0 = 0; j0 + 8 <= a.ny; ++j0) {
            std::vector<double> xa, xb;
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j) {
                    xa.push_back(a(i0 + i, j0 + j));
                    xb.push_back(b(i0 + i, j0 + j));
                }
            double ma = 0, mb = 0;
            for (int k = 0; k < 64; ++k) {
                ma += xa[k];
                mb += xb[k];
            }
            ma /= 64;
            mb /= 64;
            double va = 0, vb = 0, cov = 0;
            for (int k = 0; k < 64; ++k) {
                va += (xa[k] - ma) * (xa[k] - ma);
                vb += (xb[k] - mb) * (xb[k] - mb);
                cov += (xa[k] - ma) * (xb[k] - mb);
            }
            va /= 64;
            vb /= 64;
            cov /= 64;
            const double l = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            const double cs = (2 * cov + c2) / (va + vb + c2);
            sum += l * cs;
            ++count;
        }
    return sum / count;
}

} // namespace

TEST(Mse, ClosedForms)
{
    Rng rng(31);
    const Image2D a = testing_support::random_image(rng, 16, 12);
    EXPECT_EQ(mse(a, a), 0.0);
    Image2D b = a;
    for (auto& v : b.data) v += 0.1;
    EXPECT_NEAR(mse(a, b), 0.01, 1e-15);
    EXPECT_EQ(mse(a, b, Roi{0, 16, 0, 12}), mse(a, b));
    EXPECT_EQ(mse(a, b), mse(b, a));
    EXPECT_THROW(mse(a, Image2D(16, 13)), ValidationError);
    EXPECT_THROW(mse(a, b, Roi{3, 3, 0, 4}), ValidationError);
    EXPECT_THROW(mse(a, b, Roi{0, 17, 0, 4}), ValidationError);
}

TEST(Mse, RoiRestrictsThePixels)
{
    Image2D a(10, 10), b(10, 10);
    b(1, 1) = 1.0;
    EXPECT_EQ(mse(a, b, Roi{5, 10, 5, 10}), 0.0);
    EXPECT_NEAR(mse(a, b, Roi{0, 2, 0, 2}), 0.25, 1e-15);
}

TEST(Psnr, CapAndClosedForm)
{
    Rng rng(32);
    const Image2D a = testing_support::random_image(rng, 8, 8);
    EXPECT_EQ(psnr(a, a), 200.0);
    EXPECT_NEAR(psnr_from_mse(0.01), 20.0, 1e-12);
    double previous = psnr(a, a);
    for (double amp : {0.01, 0.05, 0.2}) {
        Image2D b = a;
        Rng noise(33);
        for (auto& v : b.data) v += amp * noise.uniform(-1.0, 1.0);
        const double p = psnr(a, b);
        EXPECT_LT(p, previous);
        previous = p;
    }
}

TEST(Ssim, IdentitySymmetryAndBounds)
{
    Rng rng(34);
    const Image2D a = testing_support::random_image(rng, 20, 20);
    const Image2D b = testing_support::random_image(rng, 20, 20);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
    EXPECT_LE(std::abs(ssim(a, b)), 1.0);
    EXPECT_THROW(ssim(Image2D(7, 20), Image2D(7, 20)), ValidationError);
}

TEST(Ssim, HalfPlaneAgainstItsComplementMatchesOracle)
{
    Image2D a(24, 24), b(24, 24);
    for (std::size_t i = 0; i < 24; ++i)
        for (std::size_t j = 0; j < 24; ++j) {
            a(i, j) = j < 12 ? 1.0 : 0.0;
            b(i, j) = 1.0 - a(i, j);
        }
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-10);
    Rng rng(35);
    const Image2D c = testing_support::random_image(rng, 17, 23), d = testing_support::random_image(rng, 17, 23);
    EXPECT_NEAR(ssim(c, d), ssim_oracle(c, d), 1e-10);
}

TEST(Ssim, RoiUsesOnlyWindowsInside)
{
    Rng rng(36);
    Image2D a = testing_support::random_image(rng, 30, 30);
    Image2D b = a;
    b(0, 0) += 0.5;
    EXPECT_NEAR(ssim(a, b, Roi{10, 30, 10, 30}), 1.0, 1e-12);
    EXPECT_LT(ssim(a, b), 1.0);
}

TEST(EvaluateCine, NormalizesByTruthPeak)
{
    CineImage truth(8, 8, 2), est(8, 8, 2);
    for (std::size_t q = 0; q < truth.data.size(); ++q) {
        truth.data[q] = Complex(4.0 * double(q % 5), 0.0);
        est.data[q] = truth.data[q] + Complex(0.0, 0.0);
    }
    est.data[3] += 1.6;
    const auto m = evaluate_cine(est, truth);
    EXPECT_NEAR(m[0].mse, (0.1 * 0.1) / 64.0, 1e-15);
    EXPECT_EQ(m[1].mse, 0.0);
    EXPECT_EQ(m[1].psnr, 200.0);
    EXPECT_NEAR(mean_metrics(m).mse, 0.5 * m[0].mse, 1e-18);
}
