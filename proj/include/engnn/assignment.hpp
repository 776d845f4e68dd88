#ifndef ENGNN_ASSIGNMENT_HPP
#define ENGNN_ASSIGNMENT_HPP

#include <limits>
#include <vector>

#include "engnn/tensor.hpp"

namespace engnn {

struct Assignment {
    std::vector<std::size_t> column_of_row;
    double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(k^3)).
inline Assignment solve_assignment(const Tensor& cost) {
    if (cost.rank() != 2 || cost.dim(0) != cost.dim(1))
        throw ShapeError("assignment needs a square cost matrix, got " + shape_string(cost.shape()));
    const std::size_t k = cost.dim(0);
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; index 0 is the virtual start column.
    std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
    std::vector<std::size_t> match(k + 1, 0), way(k + 1, 0);
    for (std::size_t row = 1; row <= k; ++row) {
        match[0] = row;
        std::size_t col0 = 0;
        std::vector<double> minv(k + 1, inf);
        std::vector<bool> used(k + 1, false);
        do {
            used[col0] = true;
            const std::size_t r0 = match[col0];
            double delta = inf;
            std::size_t col1 = 0;
            for (std::size_t j = 1; j <= k; ++j) {
                if (used[j]) continue;
                const double cur = cost.at(r0 - 1, j - 1) - u[r0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = col0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    col1 = j;
                }
            }
            for (std::size_t j = 0; j <= k; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
        } while (match[col0] != 0);
        do {
            const std::size_t col1 = way[col0];
            match[col0] = match[col1];
            col0 = col1;
        } while (col0 != 0);
    }
    Assignment a;
    a.column_of_row.assign(k, 0);
    for (std::size_t j = 1; j <= k; ++j) a.column_of_row[match[j] - 1] = j - 1;
    for (std::size_t i = 0; i < k; ++i) a.cost += cost.at(i, a.column_of_row[i]);
    return a;
}

}  // namespace engnn

#endif  // ENGNN_ASSIGNMENT_HPP
