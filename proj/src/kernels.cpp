#include "mmwmap/kernels.hpp"

#include <cmath>

namespace mmwmap::kernels {

Eigen::MatrixXcd coherent_integration_serial(const cd* x, const cd* y, int n, int i, int m) {
    Eigen::MatrixXcd z = Eigen::MatrixXcd::Zero(n, i);
    const long block = static_cast<long>(n) * i;
    for (int s = 0; s < m; ++s)
        for (long k = 0; k < block; ++k) z.data()[k] += std::conj(x[s * block + k]) * y[s * block + k];
    for (long k = 0; k < block; ++k) z.data()[k] /= static_cast<double>(m);
    return z;
}

Eigen::MatrixXcd coherent_integration_parallel(const cd* x, const cd* y, int n, int i, int m) {
    Eigen::MatrixXcd z(n, i);
    const long block = static_cast<long>(n) * i;
    // Each output cell accumulates its symbols in the same order as the
    // serial loop, so the sums are bit-identical.
#pragma omp parallel for schedule(static)
    for (long k = 0; k < block; ++k) {
        cd acc = 0.0;
        for (int s = 0; s < m; ++s) acc += std::conj(x[s * block + k]) * y[s * block + k];
        z.data()[k] = acc / static_cast<double>(m);
    }
    return z;
}

void apply_channel_serial(const cd* x, const Eigen::MatrixXcd& h, const cd* noise, cd* y, int m) {
    const long block = h.size();
    for (int s = 0; s < m; ++s)
        for (long k = 0; k < block; ++k)
            y[s * block + k] = x[s * block + k] * h.data()[k] + noise[s * block + k];
}

void apply_channel_parallel(const cd* x, const Eigen::MatrixXcd& h, const cd* noise, cd* y,
                            int m) {
    const long block = h.size();
    const long total = block * m;
#pragma omp parallel for schedule(static)
    for (long idx = 0; idx < total; ++idx)
        y[idx] = x[idx] * h.data()[idx % block] + noise[idx];
}

namespace {

inline cd shrink(cd v, double t) {
    const double mag = std::abs(v);
    if (mag <= t) return 0.0;
    return v * ((mag - t) / mag);
}

}  // namespace

long soft_threshold_serial(Eigen::MatrixXcd& b, double t) {
    long nnz = 0;
    for (long k = 0; k < b.size(); ++k) {
        b.data()[k] = shrink(b.data()[k], t);
        nnz += b.data()[k] != cd(0.0);
    }
    return nnz;
}

long soft_threshold_parallel(Eigen::MatrixXcd& b, double t) {
    long nnz = 0;
    cd* data = b.data();
    const long size = b.size();
#pragma omp parallel for schedule(static) reduction(+ : nnz)
    for (long k = 0; k < size; ++k) {
        data[k] = shrink(data[k], t);
        nnz += data[k] != cd(0.0);
    }
    return nnz;
}

}  // namespace mmwmap::kernels
