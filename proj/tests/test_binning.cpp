#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "cinerecon/binning.hpp"
#include "support.hpp"

using namespace cinerecon;

namespace {

// Brute-force mutual information: counts pairs of bin labels in a map.
double mi_oracle(const Image2D& a, const Image2D& b, std::size_t bins)
{
    auto label = [bins](const Image2D& img, std::size_t k) {
        const double lo = *std::min_element(img.data.begin(), img.data.end());
        const double hi = *std::max_element(img.data.begin(), img.data.end());
        if (hi == lo) return std::size_t{0};
        const double t = (img.data[k] - lo) / (hi - lo) * static_cast<double>(bins);
        return std::min(static_cast<std::size_t>(t), bins - 1);
    };
    std::map<std::pair<std::size_t, std::size_t>, double> joint;
    std::map<std::size_t, double> pa, pb;
    const double n = static_cast<double>(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        const auto la = label(a, k), lb = label(b, k);
        joint[{la, lb}] += 1.0 / n;
        pa[la] += 1.0 / n;
        pb[lb] += 1.0 / n;
    }
    double mi = 0.0;
    for (const auto& [key, p] : joint) mi += p * std::log(p / (pa[key.first] * pb[key.second]));
    return mi;
}

Image2D blob(std::size_t n, double cr, double cc, double width)
{
    Image2D img(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double dr = double(i) - cr, dc = double(j) - cc;
            img(i, j) = std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
        }
    return img;
}

} // namespace

TEST(MutualInformation, HalfPlaneBinaryImageGivesLn2)
{
    Image2D a(8, 8);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 8; ++j) a(i, j) = 1.0;
    EXPECT_NEAR(mutual_information(a, a, 2), std::log(2.0), 1e-12);
}

TEST(MutualInformation, MatchesBruteForceAndIsSymmetric)
{
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const Image2D a = testing_support::random_image(rng, 24, 20);
        Image2D b = testing_support::random_image(rng, 24, 20);
        for (std::size_t k = 0; k < b.size(); ++k) b.data[k] = 0.6 * b.data[k] + 0.4 * a.data[k] * a.data[k];
        EXPECT_NEAR(mutual_information(a, b, 16), mi_oracle(a, b, 16), 1e-12);
        EXPECT_EQ(mutual_information(a, b, 16), mutual_information(b, a, 16));
        EXPECT_GE(mutual_information(a, b, 16), 0.0);
    }
}

TEST(MutualInformation, SelfInformationIsEntropy)
{
    Rng rng(22);
    const Image2D a = testing_support::random_image(rng, 32, 32);
    EXPECT_NEAR(mutual_information(a, a, 32), histogram_entropy(a, 32), 1e-12);
}

TEST(MutualInformation, IndependentNoiseCarriesAlmostNothing)
{
    Rng rng(23);
    const Image2D a = testing_support::random_image(rng, 256, 256);
    const Image2D b = testing_support::random_image(rng, 256, 256);
    EXPECT_LT(mutual_information(a, b, 16), 0.01);
}

TEST(MutualInformation, ConstantImageAndErrors)
{
    const Image2D flat(8, 8, 0.3);
    Rng rng(24);
    EXPECT_EQ(mutual_information(flat, testing_support::random_image(rng, 8, 8), 32), 0.0);
    EXPECT_THROW(mutual_information(flat, Image2D(8, 9), 32), ValidationError);
    EXPECT_THROW(mutual_information(flat, flat, 1), ValidationError);
}

TEST(JointHistogram, IsANormalizedDistribution)
{
    Rng rng(25);
    const auto h = joint_histogram(testing_support::random_image(rng, 16, 16), testing_support::random_image(rng, 16, 16), 8);
    double total = 0.0;
    for (double p : h.pdf) {
        EXPECT_GE(p, 0.0);
        total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(RespiratorySignal, DecreasesWithBlobShift)
{
    std::vector<Image2D> cycles;
    for (double d : {0.0, 1.0, 2.0, 4.0, 8.0}) cycles.push_back(blob(64, 32.0 + d, 30.0, 6.0));
    const auto s = respiratory_signal(cycles, 0, 32);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i], s[i - 1]) << i;
}

TEST(RespiratorySignal, DegenerateInputs)
{
    const Image2D b = blob(16, 8, 8, 3);
    const auto constant = respiratory_signal(std::vector<Image2D>(4, b), 2, 32);
    for (double v : constant) EXPECT_EQ(v, constant[0]);
    EXPECT_EQ(respiratory_signal(std::vector<Image2D>{b}, 0, 32).size(), 1u);
    EXPECT_THROW(respiratory_signal(std::vector<Image2D>{}, 0, 32), ValidationError);
    EXPECT_THROW(respiratory_signal(std::vector<Image2D>{b}, 1, 32), ValidationError);
}

TEST(BinStates, QuantileSplits)
{
    const std::vector<double> c(7, 1.5);
    const auto one = bin_states(c, 1);
    EXPECT_EQ(one.state_counts, std::vector<std::size_t>{7});
    EXPECT_EQ(one.reference_state, 0u);

    const auto b = bin_states(std::vector<double>{0, 0, 0, 1, 1}, 2);
    EXPECT_EQ(b.state_counts, (std::vector<std::size_t>{3, 2}));
    EXPECT_EQ(b.assignment, (std::vector<std::size_t>{0, 0, 0, 1, 1}));
    EXPECT_EQ(b.reference_state, 0u);
    EXPECT_FALSE(validate(b).has_value());

    EXPECT_THROW(bin_states(std::vector<double>{1.0, 2.0}, 3), ValidationError);
    EXPECT_THROW(bin_states(std::vector<double>{1.0}, 0), ValidationError);
}

TEST(BinStates, RankBasedAndExhaustive)
{
    Rng rng(26);
    std::vector<double> s(37), t(37);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = rng.normal();
        t[i] = std::exp(3.0 * s[i]) - 2.0;
    }
    const auto a = bin_states(s, 4), b = bin_states(t, 4);
    EXPECT_EQ(a.assignment, b.assignment);
    std::size_t total = 0;
    for (auto n : a.state_counts) total += n;
    EXPECT_EQ(total, s.size());
    const auto [lo, hi] = std::minmax_element(a.state_counts.begin(), a.state_counts.end());
    EXPECT_LE(*hi - *lo, 1u);
    EXPECT_EQ(a.reference_state, static_cast<std::size_t>(hi - a.state_counts.begin()));
}

TEST(BinBySimilarity, MostSimilarCyclesFormStateZero)
{
    const auto b = bin_by_similarity(std::vector<double>{2.0, 0.1, 1.5, 0.2, 1.9, 0.3}, 2);
    EXPECT_EQ(b.assignment, (std::vector<std::size_t>{0, 1, 0, 1, 0, 1}));
    EXPECT_EQ(b.signal[0], 2.0);
}
