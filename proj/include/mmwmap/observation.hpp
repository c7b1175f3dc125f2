#pragma once

// Frequency-domain OFDM radar observations and their binary exchange format.
//
// Tensors are stored flat with index n + N*(i + I*m), so every symbol m is a
// column-major N x I block.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mmwmap/geometry.hpp"
#include "mmwmap/pattern.hpp"
#include "mmwmap/scene.hpp"

namespace mmwmap {

using cd = std::complex<double>;

enum class Constellation { Qpsk, Qam16 };

struct WaveformConfig {
    int n_subcarriers = 3168;
    int n_symbols = 28;
    double subcarrier_spacing = 120e3;
    double carrier_frequency = 28e9;
    Constellation constellation = Constellation::Qpsk;

    double bandwidth() const { return n_subcarriers * subcarrier_spacing; }
    double wavelength(int n) const {
        return kSpeedOfLight / (carrier_frequency + n * subcarrier_spacing);
    }
    double reference_wavelength() const { return kSpeedOfLight / carrier_frequency; }
    bool unit_modulus() const { return constellation == Constellation::Qpsk; }
    void validate() const;
};

struct ObservationGrid {
    std::vector<cd> received;
    std::vector<cd> transmitted;
    std::vector<double> beam_angles;  ///< UE-frame steering angles, strictly increasing
    Pose pose;
    WaveformConfig waveform;

    int n_subcarriers() const { return waveform.n_subcarriers; }
    int n_beams() const { return static_cast<int>(beam_angles.size()); }
    int n_symbols() const { return waveform.n_symbols; }
    std::size_t index(int n, int i, int m) const {
        return static_cast<std::size_t>(n) +
               static_cast<std::size_t>(n_subcarriers()) *
                   (static_cast<std::size_t>(i) + static_cast<std::size_t>(n_beams()) * m);
    }
    std::size_t size() const {
        return static_cast<std::size_t>(n_subcarriers()) * n_beams() * n_symbols();
    }

    Eigen::Map<const Eigen::MatrixXcd> received_symbol(int m) const;
    Eigen::Map<const Eigen::MatrixXcd> transmitted_symbol(int m) const;

    /// Throws ConfigError on inconsistent dimensions, non-increasing beam
    /// angles or non-finite samples.
    void validate() const;
};

/// Evenly spaced steering angles covering [first, last]; for a full
/// circle (last - first >= 2 pi) the duplicate end point is dropped.
std::vector<double> beam_grid(double first, double last, int count);

/// One pose of synthetic observations. The random symbols and noise are
/// drawn from streams keyed by (seed, pose index, beam), so the result does
/// not depend on evaluation order.
std::pair<ObservationGrid, GroundTruth> synthesize(const Scene& scene, const Pose& pose,
                                                   const WaveformConfig& waveform,
                                                   const ArrayConfig& arrays,
                                                   const std::vector<double>& beam_angles,
                                                   std::uint64_t seed);

/// Noise-free channel H[n, i] = sum_k gamma_{k,n} g_k(i) for given paths.
Eigen::MatrixXcd channel_matrix(const std::vector<PropagationPath>& paths, const Pose& pose,
                                const WaveformConfig& waveform, const ArrayConfig& arrays,
                                const std::vector<double>& beam_angles);

void write_observations(std::ostream& out, const std::vector<ObservationGrid>& grids);
void write_observations(const std::filesystem::path& path,
                        const std::vector<ObservationGrid>& grids);

/// Reads a sequence of records. Malformed input throws ParseError with the
/// byte offset of the problem.
std::vector<ObservationGrid> read_observations(std::istream& in);
std::vector<ObservationGrid> ingest_observations(const std::filesystem::path& path);

}  // namespace mmwmap
