#pragma once

// Backward IMM smoothing of finished tracks and covariance-thresholded map
// extraction.

#include <array>
#include <vector>

#include "mmwmap/tracking.hpp"

namespace mmwmap {

struct SmoothedStep {
    int step = 0;
    std::array<Gaussian, kNumModels> models;
    Eigen::Vector2d mu = Eigen::Vector2d::Zero();
    Vec2 position = Vec2::Zero();
    Eigen::Matrix2d position_cov = Eigen::Matrix2d::Zero();
    bool measured = false;
};

struct SmoothedTrack {
    int track_id = 0;
    std::vector<SmoothedStep> steps;
    /// A predicted covariance needed diagonal jitter to be inverted.
    bool regularized = false;
};

/// Per-model RTS recursions coupled through backward model interaction; the
/// backward model transition probabilities are approximated with the
/// forward ones, reweighted by how well each model's one-step prediction
/// fits the smoothed positions one step later. The last step equals the
/// filtered estimate.
SmoothedTrack imm_smooth(const Track& track, const TrackerConfig& config);

struct MapPoint {
    Vec2 position = Vec2::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    int track_id = 0;
    int step = 0;
};

using EnvironmentMap = std::vector<MapPoint>;

/// Keeps smoothed positions whose covariance has largest eigenvalue <=
/// `max_eigenvalue`. With `measured_only`, coast steps are skipped.
EnvironmentMap extract_map(const std::vector<SmoothedTrack>& tracks, double max_eigenvalue,
                           bool measured_only = false);

}  // namespace mmwmap
