#pragma once

#include <complex>

namespace mmwmap {

enum class PatternModel {
    UlaConjugate,  ///< ULAs steered with matched (conjugate) weights
    Parametric,    ///< Gaussian main lobe with a given combined 3 dB width
};

struct ArrayConfig {
    int n_tx_elements = 16;
    int n_rx_elements = 16;
    double element_spacing = 0.0053534;  ///< meters; half a wavelength at 28 GHz
    double wavelength = 0.0107069;       ///< meters; the pattern is frequency flat
    PatternModel pattern_model = PatternModel::Parametric;
    double beamwidth_3db = 0.29670597283903605;  ///< radians, combined TX*RX power pattern (17 deg)
    /// Std of the random steering error of each transmitted beam (radians).
    /// Only the simulator applies it; processing assumes nominal angles.
    double pointing_error_std = 0.0;
};

/// TX array gain a_TX^H(target) w_TX with the beam steered to `steer`.
/// Angles are UE-frame azimuths in radians.
std::complex<double> tx_gain(const ArrayConfig& arrays, double steer, double target);
/// RX array gain w_RX^H a_RX(target).
std::complex<double> rx_gain(const ArrayConfig& arrays, double steer, double target);

/// Combined TX-RX pattern for a path leaving at `tx_target` and arriving
/// from `rx_target`.
std::complex<double> combined_pattern(const ArrayConfig& arrays, double steer, double tx_target,
                                      double rx_target);

inline std::complex<double> combined_pattern(const ArrayConfig& arrays, double steer,
                                             double target) {
    return combined_pattern(arrays, steer, target, target);
}

}  // namespace mmwmap
