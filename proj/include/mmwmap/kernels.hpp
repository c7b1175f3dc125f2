#pragma once

// Hot loops with two implementations each: a plain serial reference and an
// OpenMP version. Both must produce bit-identical results; the pipeline uses
// the parallel ones.

#include <complex>
#include <vector>

#include <Eigen/Core>

namespace mmwmap::kernels {

using cd = std::complex<double>;

/// Z = (1/M) sum_m conj(X_m) .* Y_m over flat N x I x M tensors.
Eigen::MatrixXcd coherent_integration_serial(const cd* x, const cd* y, int n, int i, int m);
Eigen::MatrixXcd coherent_integration_parallel(const cd* x, const cd* y, int n, int i, int m);

/// Y = X .* H (broadcast over symbols) + noise, noise already drawn.
void apply_channel_serial(const cd* x, const Eigen::MatrixXcd& h, const cd* noise, cd* y, int m);
void apply_channel_parallel(const cd* x, const Eigen::MatrixXcd& h, const cd* noise, cd* y, int m);

/// Complex soft threshold: b <- b * max(0, 1 - t/|b|). Returns the count
/// of nonzero entries left.
long soft_threshold_serial(Eigen::MatrixXcd& b, double t);
long soft_threshold_parallel(Eigen::MatrixXcd& b, double t);

}  // namespace mmwmap::kernels
