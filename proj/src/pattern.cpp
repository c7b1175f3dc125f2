#include "mmwmap/pattern.hpp"

#include <cmath>

#include "mmwmap/geometry.hpp"

namespace mmwmap {

namespace {

// Sum_{k<n} exp(j k psi), the array factor of an n-element ULA with
// electrical phase difference psi between the target and the steer angle.
std::complex<double> array_factor(int n, double psi) {
    std::complex<double> acc{0.0, 0.0};
    for (int k = 0; k < n; ++k) acc += std::polar(1.0, k * psi);
    return acc;
}

double electrical_angle(const ArrayConfig& a, double angle) {
    return 2.0 * kPi * a.element_spacing / a.wavelength * std::sin(angle);
}

// One-way Gaussian factor; the product of the TX and RX factors has half
// power at +-beamwidth/2.
double gaussian_factor(const ArrayConfig& a, double offset) {
    const double x = wrap_angle(offset) / (0.5 * a.beamwidth_3db);
    return std::exp(-0.25 * std::log(2.0) * x * x);
}

}  // namespace

std::complex<double> tx_gain(const ArrayConfig& arrays, double steer, double target) {
    if (arrays.pattern_model == PatternModel::Parametric) return gaussian_factor(arrays, target - steer);
    // a^H(target) a(steer)
    return array_factor(arrays.n_tx_elements,
                        electrical_angle(arrays, steer) - electrical_angle(arrays, target));
}

std::complex<double> rx_gain(const ArrayConfig& arrays, double steer, double target) {
    if (arrays.pattern_model == PatternModel::Parametric) return gaussian_factor(arrays, target - steer);
    // a^H(steer) a(target)
    return array_factor(arrays.n_rx_elements,
                        electrical_angle(arrays, target) - electrical_angle(arrays, steer));
}

std::complex<double> combined_pattern(const ArrayConfig& arrays, double steer, double tx_target,
                                      double rx_target) {
    return rx_gain(arrays, steer, rx_target) * tx_gain(arrays, steer, tx_target);
}

}  // namespace mmwmap
