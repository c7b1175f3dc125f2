#pragma once

// Batch pipeline: simulate -> chart -> track -> evaluate. Every stage reads
// its inputs from the files written by the previous one, so running stages
// separately gives the same artifacts as a fused run.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mmwmap/charting.hpp"
#include "mmwmap/gospa.hpp"
#include "mmwmap/observation.hpp"
#include "mmwmap/pattern.hpp"
#include "mmwmap/scene.hpp"
#include "mmwmap/selection.hpp"
#include "mmwmap/tracking.hpp"

namespace mmwmap {

inline constexpr const char* kVersion = "1.0.0";

struct TrajectoryConfig {
    Vec2 start{5.0, 0.0};
    double heading = 0.0;  ///< radians; also the device orientation
    double step = 0.5;
    int count = 21;
    /// Explicit poses (x, y, orientation) override the generator when set.
    std::vector<Eigen::Vector3d> poses;
};

struct BeamConfig {
    double first = -kPi;
    double last = kPi;
    int count = 48;
};

struct ScenarioConfig {
    std::string name = "custom";
    Scene scene;
    std::string scene_file;  ///< when set, overrides `scene` on load
    TrajectoryConfig trajectory;
    double antenna_separation = 0.6;
    WaveformConfig waveform;
    ArrayConfig arrays;
    BeamConfig beams;
    ChartGridSpec chart;
    IstaConfig ista;
    DetectionConfig detection;
    PathlossModelState pathloss_init;
    bool pathloss_init_from_scene = true;  ///< derive beta from the simulator calibration
    SelectionConfig selection;
    TrackerConfig tracker;
    double map_cov_threshold = 0.25;
    GospaConfig gospa;
    /// Order-1 paths count as ground truth for scoring when their
    /// post-integration SNR |a|^2 N M / noise_power reaches this value.
    double truth_min_snr_db = 15.0;
    /// Smoothed map keeps coast steps (interpolated through missed
    /// detections) as well as measured ones.
    bool map_include_coast = true;
    /// Scoring region: truth and estimates farther than this from the UE are
    /// dropped before GOSPA. Infinite means the whole plane.
    double eval_radius = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 1;

    void validate() const;
    std::vector<Pose> poses() const;
};

ScenarioConfig preset_corridor_desk();
ScenarioConfig preset_corridor_rt();
/// Throws ConfigError for an unknown name.
ScenarioConfig preset(const std::string& name);

std::string config_to_json(const ScenarioConfig& config);
/// Keys not present keep the values of `base`. Relative scene paths are
/// resolved against `base_dir`.
ScenarioConfig config_from_json(const std::string& text, const ScenarioConfig& base,
                                const std::filesystem::path& base_dir = {});
ScenarioConfig load_config(const std::filesystem::path& path, const ScenarioConfig& base);

/// Free-space H0 intercept implied by the wall model of the simulator.
double calibrated_beta_h0(const ScenarioConfig& config);

enum class Stage { Simulate = 0, Chart = 1, Track = 2, Evaluate = 3 };
std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

struct StageRecord {
    std::string name;
    double seconds = 0.0;
    std::vector<std::string> outputs;
};

struct RunManifest {
    std::string config_json;
    std::string version = kVersion;
    std::uint64_t seed = 0;
    std::string status = "running";
    std::string failed_stage;
    std::vector<StageRecord> stages;
};

struct RunOptions {
    std::filesystem::path out;
    Stage first = Stage::Simulate;
    Stage last = Stage::Evaluate;
    /// External observations for the chart stage (defaults to
    /// out/observations.bin).
    std::optional<std::filesystem::path> observations;
};

/// Runs stages first..last into `options.out`. A stage failure throws
/// StageError after finalizing the manifest; artifacts written so far are
/// kept.
RunManifest run_pipeline(const ScenarioConfig& config, const RunOptions& options);

struct GospaSummary {
    double raw = 0.0, filter = 0.0, smoothed = 0.0;
    int steps = 0;
};
GospaSummary read_gospa_summary(const std::filesystem::path& out);

/// Exclusive per-directory lock; throws Error if another run holds it.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::filesystem::path& dir);
    ~DirectoryLock();
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::filesystem::path path_;
};

}  // namespace mmwmap
