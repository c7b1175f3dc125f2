#include "mmwmap/scene.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "mmwmap/errors.hpp"

namespace mmwmap {

namespace {

using json = nlohmann::json;

constexpr double kFourPi = 4.0 * kPi;

Vec2 mirror(const Vec2& p, const Wall& w) {
    const Vec2 d = (w.b - w.a).normalized();
    const Vec2 rel = p - w.a;
    const Vec2 along = rel.dot(d) * d;
    return w.a + 2.0 * along - rel;
}

double side(const Vec2& p, const Wall& w) {
    const Vec2 d = w.b - w.a;
    const Vec2 r = p - w.a;
    return d.x() * r.y() - d.y() * r.x();
}

bool same_side(const Vec2& p, const Vec2& q, const Wall& w) {
    const double sp = side(p, w);
    const double sq = side(q, w);
    return (sp > 0.0 && sq > 0.0) || (sp < 0.0 && sq < 0.0);
}

// Intersection of segment [p, q] with the wall segment, if any.
std::optional<Vec2> intersect(const Vec2& p, const Vec2& q, const Wall& w) {
    const Vec2 r = q - p;
    const Vec2 s = w.b - w.a;
    const double denom = r.x() * s.y() - r.y() * s.x();
    if (std::abs(denom) < 1e-15) return std::nullopt;
    const Vec2 ap = w.a - p;
    const double t = (ap.x() * s.y() - ap.y() * s.x()) / denom;
    const double u = (ap.x() * r.y() - ap.y() * r.x()) / denom;
    if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
    return p + t * r;
}

double azimuth(const Vec2& v) { return std::atan2(v.y(), v.x()); }

double axis_angle(const Pose& pose) {
    const Vec2 axis = pose.rx_position - pose.tx_position;
    if (axis.norm() == 0.0) return pose.orientation;
    return azimuth(axis);
}

double ghost_scale(const Scene& scene, double path_length) {
    // Free-space loss over the full path with an additional (alpha' - 2)
    // exponent on the apparent range.
    const double apparent = 0.5 * path_length;
    return scene.double_bounce_gain / (kFourPi * path_length) *
           std::pow(apparent, -(scene.double_bounce_excess_exponent - 2.0) / 2.0);
}

std::optional<PropagationPath> make_ghost(const Scene& scene, const Pose& pose, double length,
                                          double first_leg, double departure, double arrival,
                                          double reflection, PathKind kind) {
    const double delay = length / kSpeedOfLight;
    if (!(length > pose.antenna_separation())) return std::nullopt;
    const double apparent = std::atan2(std::sin(departure) + std::sin(arrival),
                                       std::cos(departure) + std::cos(arrival));
    const double rho = bistatic_range(delay, apparent - axis_angle(pose), pose.antenna_separation());
    PropagationPath p;
    p.geometry.delay = delay;
    p.geometry.ue_angle = apparent;
    p.geometry.tx_angle = departure;
    p.geometry.rx_angle = arrival;
    p.geometry.ue_range = rho;
    p.geometry.tx_range = first_leg;
    p.geometry.rx_range = length - first_leg;
    p.coefficient = reflection * ghost_scale(scene, length);
    p.order = 2;
    p.kind = kind;
    p.interaction = pose.ue_position + rho * Vec2(std::cos(apparent), std::sin(apparent));
    return p;
}

}  // namespace

void Scene::validate() const {
    for (std::size_t i = 0; i < walls.size(); ++i)
        if (!((walls[i].b - walls[i].a).norm() > 0.0))
            throw ConfigError("wall " + std::to_string(i) + " has zero length");
    for (std::size_t i = 0; i < diffuse_points.size(); ++i)
        if (!(diffuse_points[i].rcs > 0.0))
            throw ConfigError("diffuse point " + std::to_string(i) + " has non-positive RCS");
    if (!(noise_power >= 0.0)) throw ConfigError("noise power must be non-negative");
    if (enable_double_bounce && !(double_bounce_excess_exponent >= 2.0))
        throw ConfigError("double-bounce excess exponent must be >= 2");
}

std::vector<PropagationPath> enumerate_paths(const Scene& scene, const Pose& pose,
                                             double wavelength) {
    std::vector<PropagationPath> out;
    const Vec2& tx = pose.tx_position;
    const Vec2& rx = pose.rx_position;

    // Specular first-order reflections by the image method.
    for (const Wall& w : scene.walls) {
        if (!same_side(tx, rx, w)) continue;
        const Vec2 image = mirror(tx, w);
        const auto hit = intersect(image, rx, w);
        if (!hit) continue;
        PropagationPath p;
        p.geometry.tx_range = (*hit - tx).norm();
        p.geometry.rx_range = (*hit - rx).norm();
        p.geometry.ue_range = (*hit - pose.ue_position).norm();
        if (p.geometry.tx_range <= 0.0 || p.geometry.rx_range <= 0.0 || p.geometry.ue_range <= 0.0)
            continue;
        const double length = p.geometry.tx_range + p.geometry.rx_range;
        p.geometry.delay = length / kSpeedOfLight;
        p.geometry.ue_angle = azimuth(*hit - pose.ue_position);
        p.geometry.tx_angle = azimuth(*hit - tx);
        p.geometry.rx_angle = azimuth(*hit - rx);
        p.coefficient = w.reflection / (kFourPi * length);
        p.order = 1;
        p.kind = PathKind::Specular;
        p.interaction = *hit;
        out.push_back(p);
    }

    // Diffuse point scatterers: radar range equation.
    for (const DiffusePoint& d : scene.diffuse_points) {
        PropagationPath p;
        p.geometry = path_delay(pose, d.position);
        p.coefficient = std::sqrt(d.rcs / (kFourPi * kFourPi * kFourPi)) /
                        (p.geometry.tx_range * p.geometry.rx_range);
        p.order = 1;
        p.kind = PathKind::Diffuse;
        p.interaction = d.position;
        out.push_back(p);
    }

    if (scene.enable_double_bounce) {
        // wall -> wall
        for (std::size_t ia = 0; ia < scene.walls.size(); ++ia) {
            for (std::size_t ib = 0; ib < scene.walls.size(); ++ib) {
                if (ia == ib) continue;
                const Wall& A = scene.walls[ia];
                const Wall& B = scene.walls[ib];
                const Vec2 t1 = mirror(tx, A);
                const Vec2 t12 = mirror(t1, B);
                const auto w2 = intersect(t12, rx, B);
                if (!w2) continue;
                const auto w1 = intersect(t1, *w2, A);
                if (!w1) continue;
                if (!same_side(tx, *w2, A) || !same_side(*w1, rx, B)) continue;
                const double first = (*w1 - tx).norm();
                const double length = first + (*w2 - *w1).norm() + (rx - *w2).norm();
                if (auto g = make_ghost(scene, pose, length, first, azimuth(*w1 - tx),
                                        azimuth(*w2 - rx), A.reflection * B.reflection,
                                        PathKind::WallWall))
                    out.push_back(*g);
            }
        }
        // wall <-> point, both traversal orders
        for (const Wall& w : scene.walls) {
            for (const DiffusePoint& d : scene.diffuse_points) {
                const Vec2& pt = d.position;
                if (same_side(tx, pt, w)) {
                    if (auto hit = intersect(mirror(tx, w), pt, w)) {
                        const double first = (*hit - tx).norm();
                        const double length = first + (pt - *hit).norm() + (rx - pt).norm();
                        if (auto g = make_ghost(scene, pose, length, first, azimuth(*hit - tx),
                                                azimuth(pt - rx), w.reflection,
                                                PathKind::WallPoint))
                            out.push_back(*g);
                    }
                }
                if (same_side(rx, pt, w)) {
                    if (auto hit = intersect(pt, mirror(rx, w), w)) {
                        const double first = (pt - tx).norm();
                        const double length = first + (*hit - pt).norm() + (rx - *hit).norm();
                        if (auto g = make_ghost(scene, pose, length, first, azimuth(pt - tx),
                                                azimuth(*hit - rx), w.reflection,
                                                PathKind::WallPoint))
                            out.push_back(*g);
                    }
                }
            }
        }
    }

    for (auto& p : out) p.amplitude = p.coefficient * wavelength;
    return out;
}

GroundTruth ground_truth_of(const std::vector<PropagationPath>& paths, int pose_index) {
    GroundTruth gt;
    gt.reserve(paths.size());
    for (const auto& p : paths) {
        GroundTruthPoint g;
        g.pose_index = pose_index;
        g.position = p.interaction;
        g.order = p.order;
        g.rss_db = 20.0 * std::log10(std::abs(p.amplitude));
        g.delay = p.geometry.delay;
        g.angle = p.geometry.ue_angle;
        gt.push_back(g);
    }
    return gt;
}

// ---------------------------------------------------------------- JSON

namespace {

Vec2 vec_from(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(std::string(what) + " must be [x, y]");
    return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

Scene parse_scene(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("scene JSON: ") + e.what(), e.byte);
    }
    try {
        if (j.value("schema", 0) != 1) throw ConfigError("scene file must declare \"schema\": 1");
        Scene s;
        for (const auto& w : j.value("walls", json::array())) {
            Wall wall;
            wall.a = vec_from(w.at("a"), "wall endpoint a");
            wall.b = vec_from(w.at("b"), "wall endpoint b");
            wall.reflection = w.value("reflection", 0.5);
            s.walls.push_back(wall);
        }
        for (const auto& d : j.value("diffuse_points", json::array())) {
            DiffusePoint p;
            p.position = vec_from(d.at("position"), "diffuse point position");
            p.rcs = d.at("rcs").get<double>();
            s.diffuse_points.push_back(p);
        }
        if (j.contains("double_bounce")) {
            const auto& db = j["double_bounce"];
            s.enable_double_bounce = db.value("enabled", false);
            s.double_bounce_excess_exponent = db.value("excess_exponent", 4.0);
            s.double_bounce_gain = db.value("gain", 0.5);
        }
        s.noise_power = j.value("noise_power", 0.0);
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene JSON: ") + e.what());
    }
}

Scene load_scene(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scene file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scene(ss.str());
}

std::string scene_to_json(const Scene& scene) {
    json j;
    j["schema"] = 1;
    j["walls"] = json::array();
    for (const auto& w : scene.walls)
        j["walls"].push_back({{"a", {w.a.x(), w.a.y()}},
                              {"b", {w.b.x(), w.b.y()}},
                              {"reflection", w.reflection}});
    j["diffuse_points"] = json::array();
    for (const auto& d : scene.diffuse_points)
        j["diffuse_points"].push_back(
            {{"position", {d.position.x(), d.position.y()}}, {"rcs", d.rcs}});
    j["double_bounce"] = {{"enabled", scene.enable_double_bounce},
                          {"excess_exponent", scene.double_bounce_excess_exponent},
                          {"gain", scene.double_bounce_gain}};
    j["noise_power"] = scene.noise_power;
    return j.dump(2);
}

}  // namespace mmwmap
