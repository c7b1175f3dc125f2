#pragma once

// Bistatic sensing geometry in the azimuth plane.
//
// Units: meters, seconds, radians. Angles in the "UE frame" are measured
// from the TX->RX separation axis, which is rigidly attached to the device
// orientation; global angles are UE-frame angles plus the orientation.

#include <Eigen/Core>
#include <numbers>

namespace mmwmap {

using Vec2 = Eigen::Vector2d;

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double angle);

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

struct Pose {
    int index = 0;
    Vec2 ue_position = Vec2::Zero();
    double orientation = 0.0;
    Vec2 tx_position = Vec2::Zero();
    Vec2 rx_position = Vec2::Zero();

    double antenna_separation() const { return (rx_position - tx_position).norm(); }
    /// Unit vector of the UE-frame zero direction in global coordinates.
    Vec2 boresight() const;
};

/// Builds a pose whose TX and RX sit symmetrically around `ue` on the line
/// through the UE along the orientation, TX behind and RX ahead.
Pose make_pose(int index, const Vec2& ue, double orientation, double antenna_separation);

struct PathGeometry {
    double delay = 0.0;     ///< total TX->scatterer->RX propagation delay
    double ue_angle = 0.0;  ///< global azimuth of the scatterer seen from the UE
    double tx_angle = 0.0;  ///< global departure azimuth at the TX array
    double rx_angle = 0.0;  ///< global arrival azimuth at the RX array
    double ue_range = 0.0;
    double tx_range = 0.0;
    double rx_range = 0.0;
};

/// Distance from the UE to the point on the delay ellipse seen at
/// `ue_angle`, where the angle is measured from the TX-RX axis. Throws
/// GeometryError when delay * c0 <= d_ant.
double bistatic_range(double delay, double ue_angle, double d_ant);

/// Departure and arrival azimuths (global) of a reflection observed at the
/// given delay and global UE azimuth.
struct TxRxAngles {
    double tx_angle;
    double rx_angle;
};
TxRxAngles tx_rx_angles(const Pose& pose, double delay, double ue_angle);

/// Global position of the chart cell at (cell_delay, cell_angle), where the
/// cell angle is in the UE frame.
Vec2 cell_to_cartesian(const Pose& pose, double cell_delay, double cell_angle);

/// Forward geometry for a point scatterer.
PathGeometry path_delay(const Pose& pose, const Vec2& scatterer);

}  // namespace mmwmap
