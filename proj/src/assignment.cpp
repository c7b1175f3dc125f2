#include "mmwmap/assignment.hpp"

#include <cmath>
#include <limits>

#include "mmwmap/errors.hpp"

namespace mmwmap {

namespace {

// Rows <= cols. Classic O(n^2 m) shortest augmenting path formulation.
std::vector<int> hungarian(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    const int m = static_cast<int>(a.cols());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    if (!cost.allFinite()) throw Error("assignment cost matrix must be finite");
    const auto rows = cost.rows();
    const auto cols = cost.cols();
    if (rows == 0) return {};
    if (cols == 0) return std::vector<int>(rows, -1);
    if (rows <= cols) return hungarian(cost);
    const std::vector<int> col_to_row = hungarian(cost.transpose());
    std::vector<int> out(rows, -1);
    for (Eigen::Index j = 0; j < cols; ++j)
        if (col_to_row[j] >= 0) out[col_to_row[j]] = static_cast<int>(j);
    return out;
}

}  // namespace mmwmap
