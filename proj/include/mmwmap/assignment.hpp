#pragma once

#include <vector>

#include <Eigen/Core>

namespace mmwmap {

/// Minimum-cost rectangular assignment (Hungarian method with potentials).
/// Returns, for every row, the assigned column or -1; exactly
/// min(rows, cols) pairs are made.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace mmwmap
