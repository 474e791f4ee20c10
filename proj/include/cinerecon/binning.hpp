#ifndef CINERECON_BINNING_HPP
#define CINERECON_BINNING_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "cinerecon/core.hpp"

namespace cinerecon {

/// Normalized B x B joint histogram of two equally sized images.
struct JointHistogram {
    std::size_t bins = 0;
    std::vector<double> pdf; // row: first image bin, col: second image bin

    double operator()(std::size_t a, std::size_t b) const { return pdf[a * bins + b]; }
};

namespace detail {

// Equal-width bins spanning [min, max]; a constant image lands entirely in bin 0.
inline std::vector<std::size_t> bin_indices(std::span<const double> v, std::size_t bins)
{
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, range = *hi_it - *lo_it;
    std::vector<std::size_t> idx(v.size(), 0);
    if (!(range > 0.0)) return idx;
    const double scale = static_cast<double>(bins) / range;
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto b = static_cast<std::size_t>((v[i] - lo) * scale);
        idx[i] = std::min(b, bins - 1);
    }
    return idx;
}

} // namespace detail

inline JointHistogram joint_histogram(const Image2D& a, const Image2D& b, std::size_t bins)
{
    if (a.nx != b.nx || a.ny != b.ny || a.size() != b.size()) throw ValidationError("mutual_information: dimension mismatch");
    if (bins < 2) throw ValidationError("mutual_information: bins must be >= 2");
    if (a.size() == 0) throw ValidationError("mutual_information: empty image");
    const auto ia = detail::bin_indices(a.data, bins);
    const auto ib = detail::bin_indices(b.data, bins);
    JointHistogram h{bins, std::vector<double>(bins * bins, 0.0)};
    for (std::size_t i = 0; i < ia.size(); ++i) h.pdf[ia[i] * bins + ib[i]] += 1.0;
    const double inv = 1.0 / static_cast<double>(a.size());
    for (auto& p : h.pdf) p *= inv;
    return h;
}

/// Shannon entropy (nats) of an image's B-bin intensity histogram.
inline double histogram_entropy(const Image2D& a, std::size_t bins)
{
    const auto idx = detail::bin_indices(a.data, bins);
    std::vector<double> p(bins, 0.0);
    for (auto i : idx) p[i] += 1.0;
    double h = 0.0;
    for (double c : p) {
        if (c <= 0.0) continue;
        const double q = c / static_cast<double>(idx.size());
        h -= q * std::log(q);
    }
    return h;
}

/// Sum over p(x,y) ln(p(x,y) / (p(x) p(y))), with empty cells contributing nothing.
/// Constant images have a single occupied bin and yield 0.
inline double mutual_information(const Image2D& a, const Image2D& b, std::size_t bins)
{
    const JointHistogram h = joint_histogram(a, b, bins);
    std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
    for (std::size_t i = 0; i < bins; ++i)
        for (std::size_t j = 0; j < bins; ++j) {
            pa[i] += h(i, j);
            pb[j] += h(i, j);
        }
    std::vector<double> terms;
    terms.reserve(bins * bins);
    for (std::size_t i = 0; i < bins; ++i)
        for (std::size_t j = 0; j < bins; ++j) {
            const double p = h(i, j);
            if (p > 0.0) terms.push_back(p * std::log(p / (pa[i] * pb[j])));
        }
    // Summing in sorted order makes MI(a, b) and MI(b, a) bit-identical.
    std::sort(terms.begin(), terms.end());
    double mi = 0.0;
    for (double t : terms) mi += t;
    return std::max(mi, 0.0);
}

/// MI of every cycle image against cycle `reference_index`.
inline std::vector<double> respiratory_signal(std::span<const Image2D> cycles, std::size_t reference_index,
                                              std::size_t bins)
{
    if (cycles.empty()) throw ValidationError("respiratory_signal: empty input");
    if (reference_index >= cycles.size()) throw ValidationError("respiratory_signal: reference index out of range");
    std::vector<double> signal(cycles.size());
    for (std::size_t i = 0; i < cycles.size(); ++i)
        signal[i] = mutual_information(cycles[reference_index], cycles[i], bins);
    return signal;
}

/// Quantile binning: cycles sorted ascending by signal (ties by cycle index) and
/// cut into D contiguous groups whose sizes differ by at most one, the larger
/// groups first. The reference state is the most populated one.
inline RespiratoryBinning bin_states(std::span<const double> signal, std::size_t n_states)
{
    if (n_states < 1) throw ValidationError("bin_states: D must be >= 1");
    if (n_states > signal.size()) throw ValidationError("bin_states: D exceeds the number of cycles");
    const std::size_t n = signal.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return signal[a] < signal[b]; });

    RespiratoryBinning out;
    out.assignment.assign(n, 0);
    out.state_counts.assign(n_states, 0);
    out.signal.assign(signal.begin(), signal.end());
    const std::size_t base = n / n_states, extra = n % n_states;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < n_states; ++s) {
        const std::size_t size = base + (s < extra ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k) out.assignment[order[pos++]] = s;
        out.state_counts[s] = size;
    }
    out.reference_state = static_cast<std::size_t>(
        std::max_element(out.state_counts.begin(), out.state_counts.end()) - out.state_counts.begin());
    return out;
}

/// Bins cycles so that state 0 holds the cycles most similar to the reference
/// cycle. The stored signal is the similarity itself.
inline RespiratoryBinning bin_by_similarity(std::span<const double> similarity, std::size_t n_states)
{
    std::vector<double> dissimilarity(similarity.size());
    for (std::size_t i = 0; i < similarity.size(); ++i) dissimilarity[i] = -similarity[i];
    RespiratoryBinning b = bin_states(dissimilarity, n_states);
    b.signal.assign(similarity.begin(), similarity.end());
    return b;
}

} // namespace cinerecon

#endif // CINERECON_BINNING_HPP
