#include "mmwmap/geometry.hpp"

#include <cmath>
#include <sstream>

#include "mmwmap/errors.hpp"

namespace mmwmap {

namespace {

constexpr double kCoincidenceTolerance = 1e-12;

double axis_angle(const Pose& pose) {
    const Vec2 axis = pose.rx_position - pose.tx_position;
    if (axis.norm() == 0.0) return pose.orientation;
    return std::atan2(axis.y(), axis.x());
}

Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

}  // namespace

double wrap_angle(double angle) {
    double a = std::remainder(angle, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    return a;
}

Vec2 Pose::boresight() const { return unit(orientation); }

Pose make_pose(int index, const Vec2& ue, double orientation, double antenna_separation) {
    if (!(antenna_separation >= 0.0)) throw GeometryError("antenna separation must be non-negative");
    Pose p;
    p.index = index;
    p.ue_position = ue;
    p.orientation = orientation;
    const Vec2 half = 0.5 * antenna_separation * unit(orientation);
    p.tx_position = ue - half;
    p.rx_position = ue + half;
    return p;
}

double bistatic_range(double delay, double ue_angle, double d_ant) {
    if (!(d_ant >= 0.0)) throw GeometryError("antenna separation must be non-negative");
    const double path = kSpeedOfLight * delay;
    if (!(path > d_ant)) {
        std::ostringstream os;
        os << "infeasible delay: path length " << path << " m does not exceed the TX-RX separation "
           << d_ant << " m (outside the delay ellipse)";
        throw GeometryError(os.str());
    }
    if (d_ant == 0.0) return 0.5 * path;
    const double e = d_ant / path * std::cos(ue_angle);
    return std::sqrt(path * path - d_ant * d_ant) / (2.0 * std::sqrt(1.0 - e * e));
}

TxRxAngles tx_rx_angles(const Pose& pose, double delay, double ue_angle) {
    const double rho =
        bistatic_range(delay, ue_angle - axis_angle(pose), pose.antenna_separation());
    const Vec2 target = pose.ue_position + rho * unit(ue_angle);
    const Vec2 from_tx = target - pose.tx_position;
    const Vec2 from_rx = target - pose.rx_position;
    if (from_tx.norm() < kCoincidenceTolerance || from_rx.norm() < kCoincidenceTolerance)
        throw GeometryError("degenerate angle: scatterer coincides with an antenna position");
    return {std::atan2(from_tx.y(), from_tx.x()), std::atan2(from_rx.y(), from_rx.x())};
}

Vec2 cell_to_cartesian(const Pose& pose, double cell_delay, double cell_angle) {
    const double global = cell_angle + pose.orientation;
    const double rho =
        bistatic_range(cell_delay, global - axis_angle(pose), pose.antenna_separation());
    return pose.ue_position + rho * unit(global);
}

PathGeometry path_delay(const Pose& pose, const Vec2& scatterer) {
    const Vec2 from_tx = scatterer - pose.tx_position;
    const Vec2 from_rx = scatterer - pose.rx_position;
    const Vec2 from_ue = scatterer - pose.ue_position;
    if (from_tx.norm() < kCoincidenceTolerance || from_rx.norm() < kCoincidenceTolerance ||
        from_ue.norm() < kCoincidenceTolerance)
        throw GeometryError("degenerate geometry: scatterer coincides with the UE or an antenna");
    PathGeometry g;
    g.tx_range = from_tx.norm();
    g.rx_range = from_rx.norm();
    g.ue_range = from_ue.norm();
    g.delay = (g.tx_range + g.rx_range) / kSpeedOfLight;
    g.ue_angle = std::atan2(from_ue.y(), from_ue.x());
    g.tx_angle = std::atan2(from_tx.y(), from_tx.x());
    g.rx_angle = std::atan2(from_rx.y(), from_rx.x());
    return g;
}

}  // namespace mmwmap
