// Serial reference vs OpenMP kernels at corridor-rt sizes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mmwmap/kernels.hpp"

using namespace mmwmap::kernels;

namespace {

constexpr int kN = 3168, kI = 48, kM = 28;

std::vector<cd> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<cd> v(n);
    for (auto& x : v) x = {nd(rng), nd(rng)};
    return v;
}

template <auto Fn>
void coherent(benchmark::State& st) {
    const auto x = random_vec(std::size_t(kN) * kI * kM, 1), y = random_vec(x.size(), 2);
    for (auto _ : st) benchmark::DoNotOptimize(Fn(x.data(), y.data(), kN, kI, kM));
    st.SetBytesProcessed(st.iterations() * 2 * x.size() * sizeof(cd));
}

template <auto Fn>
void channel(benchmark::State& st) {
    const auto x = random_vec(std::size_t(kN) * kI * kM, 3), noise = random_vec(x.size(), 4);
    const auto hv = random_vec(std::size_t(kN) * kI, 5);
    const Eigen::MatrixXcd h = Eigen::Map<const Eigen::MatrixXcd>(hv.data(), kN, kI);
    std::vector<cd> y(x.size());
    for (auto _ : st) {
        Fn(x.data(), h, noise.data(), y.data(), kM);
        benchmark::ClobberMemory();
    }
}

template <auto Fn>
void threshold(benchmark::State& st) {
    const auto v = random_vec(391 * 221, 6);
    const Eigen::MatrixXcd b0 = Eigen::Map<const Eigen::MatrixXcd>(v.data(), 391, 221);
    Eigen::MatrixXcd b;
    for (auto _ : st) {
        st.PauseTiming();
        b = b0;
        st.ResumeTiming();
        benchmark::DoNotOptimize(Fn(b, 1.0));
    }
}

}  // namespace

BENCHMARK(coherent<coherent_integration_serial>)->Name("coherent_integration/serial");
BENCHMARK(coherent<coherent_integration_parallel>)->Name("coherent_integration/parallel");
BENCHMARK(channel<apply_channel_serial>)->Name("apply_channel/serial");
BENCHMARK(channel<apply_channel_parallel>)->Name("apply_channel/parallel");
BENCHMARK(threshold<soft_threshold_serial>)->Name("soft_threshold/serial");
BENCHMARK(threshold<soft_threshold_parallel>)->Name("soft_threshold/parallel");

BENCHMARK_MAIN();
