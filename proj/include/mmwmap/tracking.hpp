#pragma once

// IMM-EKF scatterer tracker. Model 0 is CWNV (random-walk position, state
// [x, y]), model 1 is CWNA (nearly constant velocity, state [x, y, vx, vy]).
// Measurements are (global azimuth seen from the UE, half bistatic path).

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmwmap/charting.hpp"
#include "mmwmap/geometry.hpp"

namespace mmwmap {

enum class ModelKind { Cwnv = 0, Cwna = 1 };
inline constexpr int kNumModels = 2;

struct MotionModel {
    ModelKind kind = ModelKind::Cwnv;
    double q_c = 0.0;

    int dim() const { return kind == ModelKind::Cwnv ? 2 : 4; }
    Eigen::MatrixXd transition(double dt) const;
    Eigen::MatrixXd process_noise(double dt) const;
};

struct TrackerConfig {
    Eigen::Matrix2d transition{{0.95, 0.05}, {0.05, 0.95}};  ///< p_ij, row-stochastic
    Eigen::Vector2d mu0{0.85, 0.15};                         ///< [CWNV, CWNA]
    Eigen::Matrix2d R = Eigen::Vector2d(deg2rad(10.0) * deg2rad(10.0), 0.04).asDiagonal();
    double gate_confidence = 0.99;
    int max_misses = 3;
    double init_position_var = 1e4;
    double init_velocity_var = 0.5;
    double qc_cwnv = 1e-6;
    double qc_cwna = 0.05;
    double dt = 1.0;
    /// Initialize the CWNA velocity at the second step from the UE motion
    /// projected onto an assumed specular wall.
    bool init_velocity_from_ue = true;

    void validate() const;
    MotionModel model(int j) const;
    double gate_threshold() const;  ///< chi-square quantile, 2 dof
};

struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// (azimuth of the scatterer seen from the UE, half the TX-scatterer-RX
/// path length).
Eigen::Vector2d measurement_h(const Vec2& scatterer, const Pose& pose);
/// Exact Jacobian of measurement_h with respect to the scatterer position.
Eigen::Matrix2d measurement_jacobian(const Vec2& scatterer, const Pose& pose);

/// Global position of a detection on its delay ellipse.
Vec2 coarse_position(const Detection& detection, const Pose& pose);
/// EKF measurement vector of a detection: (global azimuth, c0 * delay / 2).
Eigen::Vector2d detection_measurement(const Detection& detection, const Pose& pose);

/// EKF building blocks, shared with the test oracles.
Gaussian ekf_predict(const Gaussian& g, const MotionModel& model, double dt);
/// Joseph-form update; returns the log-likelihood of the innovation.
double ekf_update(Gaussian& g, const Eigen::Vector2d& z, const Eigen::Matrix2d& R,
                  const Pose& pose);

/// Convert a model-conditioned Gaussian to dimension `dim`. Going from 2 to
/// 4 takes the velocity mean and covariance from `velocity_source`.
Gaussian convert_state(const Gaussian& g, int dim, const Gaussian& velocity_source);

enum class TrackEvent { Spawn, Update, Coast, Drop };
std::string to_string(TrackEvent e);

struct TrackStep {
    int step = 0;
    std::array<Gaussian, kNumModels> filtered;
    Eigen::Vector2d mu = Eigen::Vector2d::Zero();            ///< posterior model probabilities
    Eigen::Vector2d mu_predicted = Eigen::Vector2d::Zero();  ///< c_j; equals mu0 at spawn
    Vec2 position = Vec2::Zero();                            ///< IMM-combined
    Eigen::Matrix2d position_cov = Eigen::Matrix2d::Zero();
    TrackEvent event = TrackEvent::Spawn;
    int matched_detection = -1;
    bool measured = false;
};

struct Track {
    int id = 0;
    std::array<Gaussian, kNumModels> models;
    Eigen::Vector2d mu = Eigen::Vector2d::Zero();
    int age = 0;  ///< steps since spawn
    int misses = 0;
    bool velocity_initialized = false;
    Vec2 spawn_ue = Vec2::Zero();
    Vec2 spawn_measurement = Vec2::Zero();
    std::vector<TrackStep> history;

    Vec2 position() const;
    Eigen::Matrix2d position_cov() const;
};

/// Combined position mean/covariance of a mixture of model states.
void combine_position(const std::array<Gaussian, kNumModels>& models, const Eigen::Vector2d& mu,
                      Vec2& mean, Eigen::Matrix2d& cov);

struct TrackLogRow {
    int step = 0;
    int track_id = 0;
    Vec2 position = Vec2::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    double mu_cwnv = 0.0, mu_cwna = 0.0;
    int matched_detection = -1;
    TrackEvent event = TrackEvent::Spawn;
};

struct StepReport {
    std::vector<std::pair<int, int>> matches;  ///< (track id, detection index)
    std::vector<int> spawned, coasted, dropped;
    std::vector<TrackLogRow> log;
};

class Tracker {
public:
    explicit Tracker(const TrackerConfig& config);

    /// One sensing step with already selected detections.
    StepReport step(int step_index, const Pose& pose, const std::vector<Detection>& detections);

    /// Ends all live tracks and returns every track ever created, ordered
    /// by id, with trailing coast steps removed.
    std::vector<Track> finish();

    const std::vector<Track>& live() const { return live_; }
    const TrackerConfig& config() const { return config_; }

private:
    void retire(Track& t);
    Track spawn(int step_index, const Pose& pose, const Detection& d, int det_index);

    TrackerConfig config_;
    std::vector<Track> live_;
    std::vector<Track> done_;
    int next_id_ = 0;
    bool have_prev_pose_ = false;
    Vec2 prev_ue_ = Vec2::Zero();
};

}  // namespace mmwmap
