#ifndef ENGNN_NOISE_HPP
#define ENGNN_NOISE_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "engnn/random.hpp"
#include "engnn/tensor.hpp"

namespace engnn {

enum class NoiseDistribution { Uniform01, StandardNormal };

inline std::string_view noise_distribution_name(NoiseDistribution d) {
    return d == NoiseDistribution::Uniform01 ? "uniform01" : "standard_normal";
}

inline std::optional<NoiseDistribution> parse_noise_distribution(std::string_view s) {
    if (s == "uniform01") return NoiseDistribution::Uniform01;
    if (s == "standard_normal") return NoiseDistribution::StandardNormal;
    return std::nullopt;
}

class NoiseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-node, per-channel random values, stored n x C.
class NoiseTensor {
public:
    NoiseTensor() = default;

    explicit NoiseTensor(Tensor values) : values_(std::move(values)) {
        if (values_.rank() != 2) throw ShapeError("noise must be n x C, got " + shape_string(values_.shape()));
        if (!values_.all_finite()) throw NonFiniteError("non-finite noise value");
    }

    std::size_t nodes() const { return values_.dim(0); }
    std::size_t channels() const { return values_.dim(1); }
    const Tensor& values() const noexcept { return values_; }
    double operator()(std::size_t node, std::size_t channel) const { return values_.at(node, channel); }

    /// Every channel's value multiset differs from every other channel's.
    bool channels_distinct() const {
        std::vector<std::vector<double>> cols(channels(), std::vector<double>(nodes()));
        for (std::size_t c = 0; c < channels(); ++c) {
            for (std::size_t i = 0; i < nodes(); ++i) cols[c][i] = values_.at(i, c);
            std::sort(cols[c].begin(), cols[c].end());
        }
        std::sort(cols.begin(), cols.end());
        return std::adjacent_find(cols.begin(), cols.end()) == cols.end();
    }

    /// Every node's row differs from every other node's row.
    bool rows_distinct() const {
        std::vector<std::vector<double>> rows(nodes(), std::vector<double>(channels()));
        for (std::size_t i = 0; i < nodes(); ++i)
            for (std::size_t c = 0; c < channels(); ++c) rows[i][c] = values_.at(i, c);
        std::sort(rows.begin(), rows.end());
        return std::adjacent_find(rows.begin(), rows.end()) == rows.end();
    }

    /// Node relabeling: row v moves to row perm[v].
    NoiseTensor permute_nodes(std::span<const std::size_t> perm) const {
        Tensor out(values_.shape());
        for (std::size_t v = 0; v < nodes(); ++v)
            for (std::size_t c = 0; c < channels(); ++c) out.at(perm[v], c) = values_.at(v, c);
        return NoiseTensor(std::move(out));
    }

    /// Channel reordering: column c moves to column perm[c].
    NoiseTensor permute_channels(std::span<const std::size_t> perm) const {
        Tensor out(values_.shape());
        for (std::size_t v = 0; v < nodes(); ++v)
            for (std::size_t c = 0; c < channels(); ++c) out.at(v, perm[c]) = values_.at(v, c);
        return NoiseTensor(std::move(out));
    }

    friend bool operator==(const NoiseTensor&, const NoiseTensor&) = default;

private:
    Tensor values_{Shape{0, 0}};
};

/// i.i.d. noise, redrawn until channel multisets and node rows are pairwise distinct.
inline NoiseTensor sample_noise(std::size_t n, std::size_t channels, std::uint64_t seed,
                                NoiseDistribution dist = NoiseDistribution::Uniform01, std::size_t max_redraws = 16) {
    if (n < 1 || channels < 1) throw std::invalid_argument("noise needs n >= 1 and C >= 1");
    Rng rng(seed);
    for (std::size_t attempt = 0; attempt <= max_redraws; ++attempt) {
        Tensor t(Shape{n, channels});
        for (double& v : t.data()) v = dist == NoiseDistribution::Uniform01 ? rng.uniform() : rng.normal();
        NoiseTensor z(std::move(t));
        if (z.channels_distinct() && z.rows_distinct()) return z;
    }
    throw NoiseError("noise distinctness not reached after " + std::to_string(max_redraws) + " redraws");
}

}  // namespace engnn

#endif  // ENGNN_NOISE_HPP
