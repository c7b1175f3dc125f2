#pragma once

// Measurement selection: EM classification of detections into a free-space
// single-bounce population (H0, slope -20 dB/decade) and a higher-order
// population (H1, slope -10 alpha' dB/decade).

#include <vector>

#include "mmwmap/charting.hpp"

namespace mmwmap {

struct PathlossModelState {
    double beta_h0 = -60.0;  ///< dB at 1 m
    double beta_h1 = -60.0;
    double alpha_h1 = 4.0;
    double sigma_h0 = 2.0;  ///< dB, fixed
    double sigma_h1 = 10.0;
    double prior_h0 = 0.5;  ///< fixed
    void validate() const;
};

struct RssSample {
    double rss_db = 0.0;
    double range = 1.0;
};

struct EmResult {
    PathlossModelState state;
    std::vector<double> posterior_h0;
    std::vector<double> log_likelihood;  ///< after every E-step
    int iterations = 0;
    bool converged = false;
    /// The H1 regression was skipped at least once (too little H1 weight or
    /// a rank-deficient design) and alpha' kept its previous value.
    bool alpha_frozen = false;
};

/// Fewer than two samples return `init` with every posterior equal to the
/// prior.
EmResult em_fit(const std::vector<RssSample>& samples, const PathlossModelState& init,
                int max_iter = 200, double tol = 1e-10);

struct LabeledDetection {
    Detection detection;
    double posterior_h0 = 0.0;
    bool selected = false;
};

/// Keep iff posterior >= p_th or range <= d_th; order preserved.
std::vector<LabeledDetection> select(const std::vector<Detection>& detections,
                                     const std::vector<double>& posteriors, double p_th,
                                     double d_th);

struct SelectionConfig {
    double p_th = 0.01;
    double d_th = 2.3;
    int max_iter = 200;
    double tol = 1e-10;
};

/// Growing-window EM over all detections seen so far, warm-started from the
/// previous pose's estimate.
class MeasurementSelector {
public:
    MeasurementSelector(const PathlossModelState& init, const SelectionConfig& config);

    std::vector<LabeledDetection> process(const std::vector<Detection>& detections);
    const PathlossModelState& state() const { return state_; }
    bool alpha_frozen() const { return alpha_frozen_; }

private:
    PathlossModelState state_;
    SelectionConfig config_;
    std::vector<RssSample> history_;
    bool alpha_frozen_ = false;
};

}  // namespace mmwmap
