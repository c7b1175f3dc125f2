#pragma once

// Synthetic indoor scene: specular wall segments (image method), point
// diffuse scatterers and optional double-bounce ghost paths.

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include "mmwmap/geometry.hpp"

namespace mmwmap {

struct Wall {
    Vec2 a = Vec2::Zero();
    Vec2 b = Vec2::Zero();
    double reflection = 0.5;  ///< amplitude reflection coefficient (signed)
};

struct DiffusePoint {
    Vec2 position = Vec2::Zero();
    double rcs = 1.0;  ///< m^2
};

struct Scene {
    std::vector<Wall> walls;
    std::vector<DiffusePoint> diffuse_points;
    bool enable_double_bounce = false;
    /// Pathloss exponent of ghost paths w.r.t. the apparent range (> 2).
    double double_bounce_excess_exponent = 4.0;
    /// Extra amplitude factor applied to every ghost path.
    double double_bounce_gain = 0.5;
    double noise_power = 0.0;  ///< variance of the per-subcarrier complex noise

    /// Throws ConfigError on non-positive RCS or zero-length walls.
    void validate() const;
};

enum class PathKind { Specular, Diffuse, WallWall, WallPoint };

struct PropagationPath {
    PathGeometry geometry;  ///< global angles; for ghosts ue_angle is the apparent azimuth
    /// gamma_n = coefficient * lambda_n * exp(-j 2 pi tau f_n); the radar
    /// range equation and the image-path free-space loss are both linear in
    /// the wavelength.
    std::complex<double> coefficient;
    std::complex<double> amplitude;  ///< coefficient * reference wavelength
    int order = 1;
    PathKind kind = PathKind::Diffuse;
    Vec2 interaction = Vec2::Zero();  ///< order 1: interaction point; order 2: apparent position
};

/// All propagation paths for one pose. `wavelength` is the reference
/// wavelength used for the reported amplitude.
std::vector<PropagationPath> enumerate_paths(const Scene& scene, const Pose& pose,
                                             double wavelength);

struct GroundTruthPoint {
    int pose_index = 0;
    Vec2 position = Vec2::Zero();
    int order = 1;
    double rss_db = 0.0;
    double delay = 0.0;
    double angle = 0.0;  ///< global apparent azimuth
    bool evaluable = true;
};

using GroundTruth = std::vector<GroundTruthPoint>;

GroundTruth ground_truth_of(const std::vector<PropagationPath>& paths, int pose_index);

Scene load_scene(const std::filesystem::path& path);
Scene parse_scene(const std::string& json_text);
std::string scene_to_json(const Scene& scene);

}  // namespace mmwmap
