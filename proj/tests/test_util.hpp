#pragma once

#include <memory>
#include <random>

#include "mmwmap/charting.hpp"
#include "mmwmap/observation.hpp"

namespace testutil {

using mmwmap::cd;

// Waveform and chart grid where the range cells sit on the resolution
// spacing and the beams on the angle cells, so C^H C and G G^H are well
// conditioned.
struct SmallSetup {
    mmwmap::WaveformConfig waveform;
    std::vector<double> beams;
    std::shared_ptr<const mmwmap::ChartGrid> grid;
};

inline SmallSetup small_setup(int n_sub, int n_sym, int n_beam, int c_r, int c_phi) {
    SmallSetup s;
    s.waveform.n_subcarriers = n_sub;
    s.waveform.n_symbols = n_sym;
    s.waveform.subcarrier_spacing = 1e6;
    const double res = mmwmap::kSpeedOfLight / (2.0 * n_sub * s.waveform.subcarrier_spacing);
    const double span = mmwmap::deg2rad(20.0) * (n_beam - 1) / 2.0;
    s.beams = mmwmap::beam_grid(-span, span, n_beam);
    mmwmap::ChartGridSpec spec;
    spec.range_min = 1.0;
    spec.range_max = 1.0 + res * (c_r - 1);
    spec.n_range = c_r;
    spec.angle_min = -span;
    spec.angle_max = span;
    spec.n_angle = c_phi;
    s.grid = std::make_shared<const mmwmap::ChartGrid>(
        mmwmap::make_chart_grid(s.waveform, mmwmap::ArrayConfig{}, s.beams, spec));
    return s;
}

// Observations Y_m = X_m .* (C B G) + noise with random QPSK X_m.
inline mmwmap::ObservationGrid observe(const SmallSetup& s, const Eigen::MatrixXcd& b,
                                       std::uint64_t seed, double noise_std = 0.0) {
    mmwmap::ObservationGrid g;
    g.waveform = s.waveform;
    g.beam_angles = s.beams;
    g.pose = mmwmap::make_pose(0, {0, 0}, 0.0, 0.0);
    const Eigen::MatrixXcd h = s.grid->C * b * s.grid->G;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> sym(0, 3);
    std::normal_distribution<double> normal(0.0, noise_std > 0 ? noise_std : 1.0);
    g.transmitted.resize(g.size());
    g.received.resize(g.size());
    for (int m = 0; m < g.n_symbols(); ++m)
        for (int i = 0; i < g.n_beams(); ++i)
            for (int n = 0; n < g.n_subcarriers(); ++n) {
                const std::size_t k = g.index(n, i, m);
                const cd x = std::polar(1.0, mmwmap::kPi / 4 + mmwmap::kPi / 2 * sym(rng));
                g.transmitted[k] = x;
                g.received[k] = x * h(n, i);
                if (noise_std > 0) g.received[k] += cd(normal(rng), normal(rng));
            }
    return g;
}

}  // namespace testutil
