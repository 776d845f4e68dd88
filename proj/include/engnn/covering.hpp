#ifndef ENGNN_COVERING_HPP
#define ENGNN_COVERING_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "engnn/assignment.hpp"
#include "engnn/noise.hpp"
#include "engnn/random.hpp"

namespace engnn {

/// Plain Frobenius distance ||Z1 - Z2||_F.
inline double frobenius_distance(const NoiseTensor& a, const NoiseTensor& b) {
    if (a.values().shape() != b.values().shape())
        throw ShapeError("noise shapes differ: " + shape_string(a.values().shape()) + " vs " +
                         shape_string(b.values().shape()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Channel-permutation pseudo-metric: min over column permutations s of
/// ||Z1 - Z2 s||_F, solved exactly as an assignment over channel pairs.
inline double channel_perm_distance(const NoiseTensor& a, const NoiseTensor& b) {
    if (a.values().shape() != b.values().shape())
        throw ShapeError("noise shapes differ: " + shape_string(a.values().shape()) + " vs " +
                         shape_string(b.values().shape()));
    const std::size_t n = a.nodes(), c = a.channels();
    Tensor cost(Shape{c, c});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double s = 0.0;
            for (std::size_t v = 0; v < n; ++v) {
                const double d = a(v, i) - b(v, j);
                s += d * d;
            }
            cost.at(i, j) = s;
        }
    return std::sqrt(std::max(0.0, solve_assignment(cost).cost));
}

/// Greedy r-net size: points are scanned in order and each point not within
/// r of an existing center becomes a center. Upper-bounds the covering number.
template <typename Point, typename Metric>
std::size_t greedy_cover(const std::vector<Point>& points, Metric&& metric, double r) {
    if (points.empty()) throw std::invalid_argument("greedy_cover needs at least one point");
    if (!(r >= 0.0)) throw std::invalid_argument("cover radius must be non-negative");
    std::vector<std::size_t> centers;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool covered = false;
        for (std::size_t c : centers)
            if (metric(points[i], points[c]) <= r) {
                covered = true;
                break;
            }
        if (!covered) centers.push_back(i);
    }
    return centers.size();
}

/// Smallest set of centers drawn from the points themselves that covers all
/// of them; exhaustive, limited to 20 points.
template <typename Point, typename Metric>
std::size_t exact_cover(const std::vector<Point>& points, Metric&& metric, double r) {
    const std::size_t k = points.size();
    if (k == 0) throw std::invalid_argument("exact_cover needs at least one point");
    if (k > 20) throw std::length_error("exact_cover is exhaustive; at most 20 points");
    std::vector<std::uint32_t> reach(k, 0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (metric(points[i], points[j]) <= r) reach[i] |= 1u << j;
    const std::uint32_t all = k == 32 ? ~0u : ((1u << k) - 1u);
    std::size_t best = k;
    for (std::uint32_t mask = 1; mask <= all; ++mask) {
        const auto size = static_cast<std::size_t>(std::popcount(mask));
        if (size >= best) continue;
        std::uint32_t covered = 0;
        for (std::size_t i = 0; i < k; ++i)
            if (mask & (1u << i)) covered |= reach[i];
        if (covered == all) best = size;
    }
    return best;
}

struct CoveringRow {
    double radius = 0.0;
    std::size_t n_raw = 0;
    std::size_t n_perm = 0;
    double ratio = 0.0;
};

/// Greedy cover sizes of uniform [0,1]^{n x C} samples under the raw
/// Frobenius metric and the channel-permutation pseudo-metric.
inline std::vector<CoveringRow> covering_ratio_experiment(std::size_t n, std::size_t channels, std::size_t samples,
                                                          const std::vector<double>& radii, std::uint64_t seed) {
    if (channels < 1 || channels > 4) throw std::invalid_argument("covering experiment supports 1 <= C <= 4");
    if (samples < 100) throw std::invalid_argument("covering experiment needs at least 100 samples");
    std::vector<NoiseTensor> points;
    points.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i)
        points.push_back(sample_noise(n, channels, derive_seed(seed, i), NoiseDistribution::Uniform01));
    std::vector<CoveringRow> rows;
    for (double r : radii) {
        CoveringRow row;
        row.radius = r;
        row.n_raw = greedy_cover(points, frobenius_distance, r);
        row.n_perm = greedy_cover(points, channel_perm_distance, r);
        row.ratio = static_cast<double>(row.n_perm) / static_cast<double>(row.n_raw);
        rows.push_back(row);
    }
    return rows;
}

inline void write_covering_csv(std::ostream& os, const std::vector<CoveringRow>& rows) {
    os << "radius,n_raw,n_perm,ratio\n";
    for (const auto& r : rows) os << r.radius << ',' << r.n_raw << ',' << r.n_perm << ',' << r.ratio << '\n';
}

}  // namespace engnn

#endif  // ENGNN_COVERING_HPP
