#ifndef ENGNN_SPECTRUM_HPP
#define ENGNN_SPECTRUM_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "engnn/graph.hpp"

namespace engnn {

/// Ascending eigenvalues of the adjacency matrix.
inline std::vector<double> adjacency_spectrum(const Graph& g) {
    const auto n = static_cast<Eigen::Index>(g.node_count());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t u = 0; u < g.node_count(); ++u)
        for (std::size_t v : g.neighbors(u)) a(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = 1.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
    std::vector<double> ev(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    std::sort(ev.begin(), ev.end());
    return ev;
}

/// Distinct spectra certify non-isomorphism (the converse does not hold).
inline bool spectrally_distinct(const Graph& a, const Graph& b, double tol = 1e-8) {
    if (a.node_count() != b.node_count()) return true;
    const auto ea = adjacency_spectrum(a);
    const auto eb = adjacency_spectrum(b);
    for (std::size_t i = 0; i < ea.size(); ++i)
        if (std::abs(ea[i] - eb[i]) > tol) return true;
    return false;
}

}  // namespace engnn

#endif  // ENGNN_SPECTRUM_HPP
