#ifndef ENGNN_DATASETS_HPP
#define ENGNN_DATASETS_HPP

#include <cstdint>
#include <stdexcept>

#include "engnn/graph.hpp"
#include "engnn/jsonl.hpp"
#include "engnn/patterns.hpp"
#include "engnn/random.hpp"
#include "engnn/spectrum.hpp"
#include "engnn/wl.hpp"

namespace engnn {

/// Node-regression records: G(n, p) graphs with per-node pattern counts as
/// targets. Record i is drawn from derive_seed(seed, i).
inline Dataset gen_count_dataset(PatternKind pattern, std::size_t n, std::size_t count, std::uint64_t seed,
                                 double p = 0.3) {
    if (n < 1 || count < 1) throw std::invalid_argument("count dataset needs n >= 1 and count >= 1");
    Dataset out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Graph g = gen_erdos_renyi(n, p, derive_seed(seed, i));
        const auto counts = count_pattern(g, pattern);
        g.set_node_targets(std::vector<double>(counts.begin(), counts.end()));
        out.push_back(std::move(g));
    }
    return out;
}

class PairCertificateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The two circulant skip-link graphs CSL(n, skip_a) and CSL(n, skip_b),
/// labelled 0 and 1, after checking they are 1-WL-equivalent yet have
/// different adjacency spectra.
inline Dataset gen_csl_pair(std::size_t n = 11, std::size_t skip_a = 2, std::size_t skip_b = 3) {
    Graph a = gen_csl(n, skip_a), b = gen_csl(n, skip_b);
    if (!wl_equivalent(a, b, n)) throw PairCertificateError("CSL pair is separated by 1-WL");
    if (!spectrally_distinct(a, b)) throw PairCertificateError("CSL pair is not certified non-isomorphic");
    a.set_graph_target(0.0);
    b.set_graph_target(1.0);
    return {std::move(a), std::move(b)};
}

}  // namespace engnn

#endif  // ENGNN_DATASETS_HPP
