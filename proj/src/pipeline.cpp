#include "mmwmap/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Core>

#include "json.hpp"
#include "mmwmap/csv.hpp"
#include "mmwmap/errors.hpp"
#include "mmwmap/smoothing.hpp"

namespace mmwmap {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ------------------------------------------------------------ config

void ScenarioConfig::validate() const {
    scene.validate();
    waveform.validate();
    tracker.validate();
    gospa.validate();
    pathloss_init.validate();
    if (!(antenna_separation >= 0.0)) throw ConfigError("antenna separation must be non-negative");
    if (trajectory.poses.empty() && trajectory.count < 1)
        throw ConfigError("trajectory needs at least one pose");
    if (beams.count < 1) throw ConfigError("at least one beam is required");
    if (!(beams.last >= beams.first)) throw ConfigError("beam range is reversed");
    if (chart.n_range < 1 || chart.n_angle < 1) throw ConfigError("chart grid needs cells");
    if (!(chart.range_min > 0.0) || !(chart.range_max >= chart.range_min))
        throw ConfigError("chart range window is invalid");
    if (!(2.0 * chart.range_min > antenna_separation))
        throw ConfigError("chart range window starts inside the TX-RX separation");
    if (!(map_cov_threshold >= 0.0)) throw ConfigError("map covariance threshold must be >= 0");
    if (!(selection.p_th >= 0.0 && selection.p_th <= 1.0)) throw ConfigError("p_th must lie in [0, 1]");
    if (detection.max_targets < 0) throw ConfigError("max_targets must be non-negative");
    if (!(eval_radius > 0.0)) throw ConfigError("evaluation radius must be positive");
    if (!(arrays.pointing_error_std >= 0.0)) throw ConfigError("pointing error must be non-negative");
}

std::vector<Pose> ScenarioConfig::poses() const {
    std::vector<Pose> out;
    if (!trajectory.poses.empty()) {
        for (std::size_t k = 0; k < trajectory.poses.size(); ++k) {
            const auto& p = trajectory.poses[k];
            out.push_back(make_pose(static_cast<int>(k), {p.x(), p.y()}, p.z(), antenna_separation));
        }
        return out;
    }
    const Vec2 dir(std::cos(trajectory.heading), std::sin(trajectory.heading));
    for (int k = 0; k < trajectory.count; ++k)
        out.push_back(make_pose(k, trajectory.start + k * trajectory.step * dir, trajectory.heading,
                                antenna_separation));
    return out;
}

double calibrated_beta_h0(const ScenarioConfig& config) {
    double gamma = 0.5;
    if (!config.scene.walls.empty()) {
        gamma = 0.0;
        for (const auto& w : config.scene.walls) gamma += std::abs(w.reflection);
        gamma /= static_cast<double>(config.scene.walls.size());
    }
    // Specular path length is twice the perpendicular distance d, so
    // |gamma| = Gamma lambda / (8 pi d).
    return 20.0 * std::log10(gamma * config.waveform.reference_wavelength() / (8.0 * kPi));
}

ScenarioConfig preset_corridor_desk() {
    ScenarioConfig c;
    c.name = "corridor-desk";
    c.scene.walls = {{{0.0, 1.0}, {20.0, 1.0}, 0.5}, {{0.0, -1.0}, {20.0, -1.0}, 0.5}};
    const double rcs = 12.6;
    c.scene.diffuse_points = {{{3.0, 0.75}, rcs},   {{6.5, -0.8}, rcs},  {{8.0, 0.8}, rcs},
                              {{10.5, -0.75}, rcs}, {{12.0, 0.7}, rcs},  {{14.5, -0.8}, rcs},
                              {{16.5, 0.8}, rcs},   {{18.5, -0.7}, rcs}};
    c.scene.enable_double_bounce = true;
    c.scene.double_bounce_excess_exponent = 4.0;
    c.scene.double_bounce_gain = 0.5;
    c.scene.noise_power = 1.6e-8;
    c.trajectory.start = {5.0, 0.0};
    c.trajectory.heading = 0.0;
    c.trajectory.step = 0.5;
    c.trajectory.count = 21;
    c.antenna_separation = 0.6;
    c.waveform.n_subcarriers = 512;
    c.waveform.n_symbols = 4;
    c.waveform.subcarrier_spacing = 781.25e3;
    c.waveform.carrier_frequency = 28e9;
    c.beams = {-kPi, kPi, 48};
    c.chart.range_min = 0.4;
    c.chart.range_max = 16.0;
    c.chart.n_range = 84;
    c.chart.angle_min = -kPi;
    c.chart.angle_max = kPi;
    c.chart.n_angle = 144;
    c.arrays.pointing_error_std = deg2rad(3.0);
    c.ista.lambda = 0.08;
    c.tracker.dt = 1.0;
    c.truth_min_snr_db = 20.0;
    c.eval_radius = 5.0;
    return c;
}

ScenarioConfig preset_corridor_rt() {
    ScenarioConfig c = preset_corridor_desk();
    c.name = "corridor-rt";
    c.trajectory.start = {2.0, 0.0};
    c.trajectory.step = 1.0;
    c.trajectory.count = 31;
    c.scene.walls = {{{0.0, 1.0}, {40.0, 1.0}, 0.5}, {{0.0, -1.0}, {40.0, -1.0}, 0.5}};
    c.waveform.n_subcarriers = 3168;
    c.waveform.n_symbols = 28;
    c.waveform.subcarrier_spacing = 120e3;
    c.chart.range_max = 30.0;
    c.chart.n_range = 391;
    c.chart.n_angle = 221;
    return c;
}

ScenarioConfig preset(const std::string& name) {
    if (name == "corridor-desk") return preset_corridor_desk();
    if (name == "corridor-rt") return preset_corridor_rt();
    throw ConfigError("unknown preset '" + name + "' (expected corridor-desk or corridor-rt)");
}

namespace {

json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

json scene_json(const Scene& s) { return json::parse(scene_to_json(s)); }

const char* pattern_name(PatternModel m) {
    return m == PatternModel::Parametric ? "parametric" : "ula";
}

const char* constellation_name(Constellation c) { return c == Constellation::Qpsk ? "qpsk" : "qam16"; }

}  // namespace

std::string config_to_json(const ScenarioConfig& c) {
    json j;
    j["schema"] = 1;
    j["name"] = c.name;
    j["seed"] = c.seed;
    if (!c.scene_file.empty()) j["scene_file"] = c.scene_file;
    j["scene"] = scene_json(c.scene);
    json traj;
    if (c.trajectory.poses.empty()) {
        traj["start"] = vec_json(c.trajectory.start);
        traj["heading_deg"] = rad2deg(c.trajectory.heading);
        traj["step"] = c.trajectory.step;
        traj["count"] = c.trajectory.count;
    } else {
        traj["poses"] = json::array();
        for (const auto& p : c.trajectory.poses)
            traj["poses"].push_back({p.x(), p.y(), rad2deg(p.z())});
    }
    j["trajectory"] = traj;
    j["antenna_separation"] = c.antenna_separation;
    j["waveform"] = {{"n_subcarriers", c.waveform.n_subcarriers},
                     {"n_symbols", c.waveform.n_symbols},
                     {"subcarrier_spacing", c.waveform.subcarrier_spacing},
                     {"carrier_frequency", c.waveform.carrier_frequency},
                     {"constellation", constellation_name(c.waveform.constellation)}};
    j["arrays"] = {{"n_tx_elements", c.arrays.n_tx_elements},
                   {"n_rx_elements", c.arrays.n_rx_elements},
                   {"element_spacing", c.arrays.element_spacing},
                   {"wavelength", c.arrays.wavelength},
                   {"pattern", pattern_name(c.arrays.pattern_model)},
                   {"beamwidth_deg", rad2deg(c.arrays.beamwidth_3db)},
                   {"pointing_error_deg", rad2deg(c.arrays.pointing_error_std)}};
    j["beams"] = {{"first_deg", rad2deg(c.beams.first)},
                  {"last_deg", rad2deg(c.beams.last)},
                  {"count", c.beams.count}};
    j["chart"] = {{"range_min", c.chart.range_min},     {"range_max", c.chart.range_max},
                  {"n_range", c.chart.n_range},         {"angle_min_deg", rad2deg(c.chart.angle_min)},
                  {"angle_max_deg", rad2deg(c.chart.angle_max)}, {"n_angle", c.chart.n_angle}};
    j["ista"] = {{"lambda", c.ista.lambda},       {"lambda_relative", c.ista.lambda_relative},
                 {"beta_step", c.ista.beta_step}, {"max_iter", c.ista.max_iter},
                 {"tol", c.ista.tol},             {"hamming", c.ista.hamming}};
    j["detection"] = {{"min_sep_range", c.detection.min_sep_range},
                      {"min_sep_angle_deg", rad2deg(c.detection.min_sep_angle)},
                      {"max_targets", c.detection.max_targets},
                      {"dyn_range_db", c.detection.dyn_range_db}};
    j["selection"] = {{"p_th", c.selection.p_th},
                      {"d_th", c.selection.d_th},
                      {"max_iter", c.selection.max_iter},
                      {"tol", c.selection.tol},
                      {"init_from_scene", c.pathloss_init_from_scene},
                      {"beta_h0", c.pathloss_init.beta_h0},
                      {"beta_h1", c.pathloss_init.beta_h1},
                      {"alpha_h1", c.pathloss_init.alpha_h1},
                      {"sigma_h0", c.pathloss_init.sigma_h0},
                      {"sigma_h1", c.pathloss_init.sigma_h1},
                      {"prior_h0", c.pathloss_init.prior_h0}};
    const auto& t = c.tracker;
    j["tracker"] = {
        {"transition", {{t.transition(0, 0), t.transition(0, 1)}, {t.transition(1, 0), t.transition(1, 1)}}},
        {"mu0", {t.mu0[0], t.mu0[1]}},
        {"angle_std_deg", rad2deg(std::sqrt(t.R(0, 0)))},
        {"range_std", std::sqrt(t.R(1, 1))},
        {"gate_confidence", t.gate_confidence},
        {"max_misses", t.max_misses},
        {"init_position_var", t.init_position_var},
        {"init_velocity_var", t.init_velocity_var},
        {"qc_cwnv", t.qc_cwnv},
        {"qc_cwna", t.qc_cwna},
        {"dt", t.dt},
        {"init_velocity_from_ue", t.init_velocity_from_ue}};
    j["map"] = {{"cov_threshold", c.map_cov_threshold}, {"include_coast", c.map_include_coast}};
    j["gospa"] = {{"cutoff", c.gospa.cutoff}, {"order", c.gospa.order}};
    j["truth_min_snr_db"] = c.truth_min_snr_db;
    if (std::isfinite(c.eval_radius)) j["eval_radius"] = c.eval_radius;
    return j.dump(2);
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

void take_deg(const json& j, const char* key, double& dst_rad) {
    if (j.contains(key)) dst_rad = deg2rad(j.at(key).get<double>());
}

}  // namespace

ScenarioConfig config_from_json(const std::string& text, const ScenarioConfig& base,
                                const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config JSON: ") + e.what(), e.byte);
    }
    ScenarioConfig c = base;
    try {
        if (j.value("schema", 0) != 1) throw ConfigError("config file must declare \"schema\": 1");
        take(j, "name", c.name);
        take(j, "seed", c.seed);
        if (j.contains("scene")) c.scene = parse_scene(j["scene"].dump());
        if (j.contains("scene_file")) {
            fs::path p = j["scene_file"].get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            if (!fs::exists(p)) throw ConfigError("scene file does not exist: " + p.string());
            c.scene_file = p.string();
            c.scene = load_scene(p);
        }
        if (j.contains("trajectory")) {
            const auto& t = j["trajectory"];
            if (t.contains("poses")) {
                c.trajectory.poses.clear();
                for (const auto& p : t["poses"]) {
                    if (!p.is_array() || p.size() != 3)
                        throw ConfigError("trajectory poses must be [x, y, heading_deg]");
                    c.trajectory.poses.emplace_back(p[0].get<double>(), p[1].get<double>(),
                                                    deg2rad(p[2].get<double>()));
                }
            } else {
                c.trajectory.poses.clear();
            }
            if (t.contains("start")) c.trajectory.start = {t["start"][0].get<double>(), t["start"][1].get<double>()};
            take_deg(t, "heading_deg", c.trajectory.heading);
            take(t, "step", c.trajectory.step);
            take(t, "count", c.trajectory.count);
        }
        take(j, "antenna_separation", c.antenna_separation);
        if (j.contains("waveform")) {
            const auto& w = j["waveform"];
            take(w, "n_subcarriers", c.waveform.n_subcarriers);
            take(w, "n_symbols", c.waveform.n_symbols);
            take(w, "subcarrier_spacing", c.waveform.subcarrier_spacing);
            take(w, "carrier_frequency", c.waveform.carrier_frequency);
            if (w.contains("constellation")) {
                const auto s = w["constellation"].get<std::string>();
                if (s == "qpsk")
                    c.waveform.constellation = Constellation::Qpsk;
                else if (s == "qam16")
                    c.waveform.constellation = Constellation::Qam16;
                else
                    throw ConfigError("unknown constellation '" + s + "'");
            }
        }
        if (j.contains("arrays")) {
            const auto& a = j["arrays"];
            take(a, "n_tx_elements", c.arrays.n_tx_elements);
            take(a, "n_rx_elements", c.arrays.n_rx_elements);
            take(a, "element_spacing", c.arrays.element_spacing);
            take(a, "wavelength", c.arrays.wavelength);
            if (a.contains("pattern")) {
                const auto s = a["pattern"].get<std::string>();
                if (s == "parametric")
                    c.arrays.pattern_model = PatternModel::Parametric;
                else if (s == "ula")
                    c.arrays.pattern_model = PatternModel::UlaConjugate;
                else
                    throw ConfigError("unknown pattern model '" + s + "'");
            }
            take_deg(a, "beamwidth_deg", c.arrays.beamwidth_3db);
            take_deg(a, "pointing_error_deg", c.arrays.pointing_error_std);
        }
        if (j.contains("beams")) {
            const auto& b = j["beams"];
            take_deg(b, "first_deg", c.beams.first);
            take_deg(b, "last_deg", c.beams.last);
            take(b, "count", c.beams.count);
        }
        if (j.contains("chart")) {
            const auto& g = j["chart"];
            take(g, "range_min", c.chart.range_min);
            take(g, "range_max", c.chart.range_max);
            take(g, "n_range", c.chart.n_range);
            take_deg(g, "angle_min_deg", c.chart.angle_min);
            take_deg(g, "angle_max_deg", c.chart.angle_max);
            take(g, "n_angle", c.chart.n_angle);
        }
        if (j.contains("ista")) {
            const auto& s = j["ista"];
            take(s, "lambda", c.ista.lambda);
            take(s, "lambda_relative", c.ista.lambda_relative);
            take(s, "beta_step", c.ista.beta_step);
            take(s, "max_iter", c.ista.max_iter);
            take(s, "tol", c.ista.tol);
            take(s, "hamming", c.ista.hamming);
        }
        if (j.contains("detection")) {
            const auto& d = j["detection"];
            take(d, "min_sep_range", c.detection.min_sep_range);
            take_deg(d, "min_sep_angle_deg", c.detection.min_sep_angle);
            take(d, "max_targets", c.detection.max_targets);
            take(d, "dyn_range_db", c.detection.dyn_range_db);
        }
        if (j.contains("selection")) {
            const auto& s = j["selection"];
            take(s, "p_th", c.selection.p_th);
            take(s, "d_th", c.selection.d_th);
            take(s, "max_iter", c.selection.max_iter);
            take(s, "tol", c.selection.tol);
            take(s, "init_from_scene", c.pathloss_init_from_scene);
            take(s, "beta_h0", c.pathloss_init.beta_h0);
            take(s, "beta_h1", c.pathloss_init.beta_h1);
            take(s, "alpha_h1", c.pathloss_init.alpha_h1);
            take(s, "sigma_h0", c.pathloss_init.sigma_h0);
            take(s, "sigma_h1", c.pathloss_init.sigma_h1);
            take(s, "prior_h0", c.pathloss_init.prior_h0);
        }
        if (j.contains("tracker")) {
            const auto& t = j["tracker"];
            auto& tc = c.tracker;
            if (t.contains("transition")) {
                const auto& m = t["transition"];
                for (int r = 0; r < 2; ++r)
                    for (int k = 0; k < 2; ++k) tc.transition(r, k) = m.at(r).at(k).get<double>();
            }
            if (t.contains("mu0")) tc.mu0 = {t["mu0"][0].get<double>(), t["mu0"][1].get<double>()};
            if (t.contains("angle_std_deg")) {
                const double s = deg2rad(t["angle_std_deg"].get<double>());
                tc.R(0, 0) = s * s;
            }
            if (t.contains("range_std")) {
                const double s = t["range_std"].get<double>();
                tc.R(1, 1) = s * s;
            }
            take(t, "gate_confidence", tc.gate_confidence);
            take(t, "max_misses", tc.max_misses);
            take(t, "init_position_var", tc.init_position_var);
            take(t, "init_velocity_var", tc.init_velocity_var);
            take(t, "qc_cwnv", tc.qc_cwnv);
            take(t, "qc_cwna", tc.qc_cwna);
            take(t, "dt", tc.dt);
            take(t, "init_velocity_from_ue", tc.init_velocity_from_ue);
        }
        if (j.contains("map")) take(j["map"], "cov_threshold", c.map_cov_threshold);
        if (j.contains("gospa")) {
            take(j["gospa"], "cutoff", c.gospa.cutoff);
            take(j["gospa"], "order", c.gospa.order);
        }
        take(j, "truth_min_snr_db", c.truth_min_snr_db);
        take(j, "eval_radius", c.eval_radius);
        if (j.contains("map")) take(j["map"], "include_coast", c.map_include_coast);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config JSON: ") + e.what());
    }
    c.validate();
    return c;
}

ScenarioConfig load_config(const fs::path& path, const ScenarioConfig& base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str(), base, path.parent_path());
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Simulate: return "simulate";
        case Stage::Chart: return "chart";
        case Stage::Track: return "track";
        case Stage::Evaluate: return "evaluate";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    for (Stage st : {Stage::Simulate, Stage::Chart, Stage::Track, Stage::Evaluate})
        if (to_string(st) == s) return st;
    throw ConfigError("unknown stage '" + s + "'");
}

// ------------------------------------------------------------ lock

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
        path_.clear();
        throw Error("output directory " + dir.string() + " is locked by another run (" +
                    (dir / ".lock").string() + ")");
    }
    std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
    if (!path_.empty()) {
        std::error_code ec;
        fs::remove(path_, ec);
    }
}

// ------------------------------------------------------------ stages

namespace {

std::string num(double v) { return format_double(v); }
std::string num(int v) { return std::to_string(v); }
std::string num(long v) { return std::to_string(v); }

void write_trajectory(const fs::path& path, const std::vector<Pose>& poses) {
    CsvWriter w(path, {"pose_index", "ue_x", "ue_y", "orientation_rad", "tx_x", "tx_y", "rx_x", "rx_y"});
    for (const auto& p : poses)
        w.row({num(p.index), num(p.ue_position.x()), num(p.ue_position.y()), num(p.orientation),
               num(p.tx_position.x()), num(p.tx_position.y()), num(p.rx_position.x()),
               num(p.rx_position.y())});
    w.close();
}

std::vector<Pose> read_trajectory(const fs::path& path) {
    const CsvTable t = read_csv(path);
    const auto ci = t.column("pose_index"), cx = t.column("ue_x"), cy = t.column("ue_y"),
               co = t.column("orientation_rad"), ctx = t.column("tx_x"), cty = t.column("tx_y"),
               crx = t.column("rx_x"), cry = t.column("rx_y");
    std::vector<Pose> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Pose p;
        p.index = static_cast<int>(t.integer(r, ci));
        p.ue_position = {t.number(r, cx), t.number(r, cy)};
        p.orientation = t.number(r, co);
        p.tx_position = {t.number(r, ctx), t.number(r, cty)};
        p.rx_position = {t.number(r, crx), t.number(r, cry)};
        out.push_back(p);
    }
    return out;
}

bool in_chart_window(const ScenarioConfig& c, const Pose& pose, const PathGeometry& g) {
    const double half_path = 0.5 * kSpeedOfLight * g.delay;
    if (half_path < c.chart.range_min || half_path > c.chart.range_max) return false;
    if (c.chart.angle_max - c.chart.angle_min >= 2.0 * kPi - 1e-9) return true;
    const double a = wrap_angle(g.ue_angle - pose.orientation);
    return a >= c.chart.angle_min && a <= c.chart.angle_max;
}

std::vector<std::string> stage_simulate(const ScenarioConfig& c, const fs::path& out) {
    const auto poses = c.poses();
    const auto beams = beam_grid(c.beams.first, c.beams.last, c.beams.count);
    {
        std::ofstream s(out / "scene.json", std::ios::trunc);
        s << scene_to_json(c.scene) << '\n';
        if (!s) throw Error("failed to write scene.json");
    }
    write_trajectory(out / "trajectory.csv", poses);

    std::vector<ObservationGrid> grids;
    CsvWriter gt(out / "ground_truth.csv",
                 {"pose_index", "x", "y", "order", "rss_db", "delay_s", "angle_deg", "evaluable"});
    for (const auto& pose : poses) {
        auto [grid, truth] = synthesize(c.scene, pose, c.waveform, c.arrays, beams, c.seed);
        const auto paths = enumerate_paths(c.scene, pose, c.waveform.reference_wavelength());
        const double gain_db = 10.0 * std::log10(double(c.waveform.n_subcarriers) * c.waveform.n_symbols);
        for (std::size_t k = 0; k < truth.size(); ++k) {
            auto& t = truth[k];
            const double snr_db = c.scene.noise_power > 0.0
                                      ? t.rss_db + gain_db - 10.0 * std::log10(c.scene.noise_power)
                                      : std::numeric_limits<double>::infinity();
            t.evaluable = t.order == 1 && snr_db >= c.truth_min_snr_db &&
                          in_chart_window(c, pose, paths[k].geometry);
            gt.row({num(t.pose_index), num(t.position.x()), num(t.position.y()), num(t.order),
                    num(t.rss_db), num(t.delay), num(rad2deg(t.angle)), t.evaluable ? "1" : "0"});
        }
        grids.push_back(std::move(grid));
    }
    gt.close();
    write_observations(out / "observations.bin", grids);
    return {"scene.json", "trajectory.csv", "ground_truth.csv", "observations.bin"};
}

bool same_layout(const ObservationGrid& a, const ObservationGrid& b) {
    return a.waveform.n_subcarriers == b.waveform.n_subcarriers &&
           a.waveform.subcarrier_spacing == b.waveform.subcarrier_spacing &&
           a.beam_angles == b.beam_angles;
}

std::vector<std::string> stage_chart(const ScenarioConfig& c, const fs::path& out,
                                     const fs::path& observations) {
    const auto grids = ingest_observations(observations);
    fs::create_directories(out / "charts");
    std::vector<std::string> outputs;
    CsvWriter det(out / "detections.csv", {"pose_index", "angle_deg", "range_m", "rss_db", "re", "im",
                                           "delay_s", "p", "q"});
    CsvWriter summary(out / "charts" / "ista_summary.csv",
                      {"pose_index", "initial", "iterations", "converged", "nonzeros", "lambda_abs"});
    std::shared_ptr<const ChartGrid> chart_grid;
    const ObservationGrid* layout = nullptr;
    for (const auto& obs : grids) {
        obs.validate();
        if (!chart_grid || !same_layout(*layout, obs)) {
            chart_grid = std::make_shared<const ChartGrid>(
                make_chart_grid(obs.waveform, c.arrays, obs.beam_angles, c.chart));
            layout = &obs;
            json axes;
            axes["ranges_m"] = json::array();
            axes["delays_s"] = json::array();
            axes["angles_deg"] = json::array();
            for (int p = 0; p < chart_grid->n_range(); ++p) {
                axes["ranges_m"].push_back(chart_grid->range_of(p));
                axes["delays_s"].push_back(chart_grid->delays[p]);
            }
            for (double a : chart_grid->angles) axes["angles_deg"].push_back(rad2deg(a));
            axes["rows"] = "range";
            axes["columns"] = "angle";
            axes["units"] = "dB (20 log10 |b|)";
            std::ofstream a(out / "charts" / "axes.json", std::ios::trunc);
            a << axes.dump(2) << '\n';
        }
        const IstaResult res = ista_chart(obs, chart_grid, c.ista);
        const auto detections = detect_targets(res.chart, c.detection, obs.pose, &res.initial);
        for (const auto& d : detections)
            det.row({num(d.pose_index), num(rad2deg(d.angle)), num(d.range), num(d.rss),
                     num(d.amplitude.real()), num(d.amplitude.imag()), num(d.delay), num(d.p),
                     num(d.q)});
        summary.row({num(obs.pose.index),
                     res.initial.method == ChartMethod::LeastSquares ? "ls" : "matched_filter",
                     num(res.iterations), res.converged ? "1" : "0", num(res.chart.nonzeros()),
                     num(res.lambda_abs)});

        char name[64];
        std::snprintf(name, sizeof name, "chart_%04d.csv", obs.pose.index);
        std::ofstream m(out / "charts" / name, std::ios::trunc);
        for (Eigen::Index p = 0; p < res.chart.values.rows(); ++p) {
            for (Eigen::Index q = 0; q < res.chart.values.cols(); ++q) {
                if (q) m << ',';
                const double mag = std::abs(res.chart.values(p, q));
                m << format_double(mag > 0.0 ? 20.0 * std::log10(mag) : -300.0, 8);
            }
            m << '\n';
        }
        if (!m) throw Error(std::string("failed to write chart ") + name);
        outputs.push_back(std::string("charts/") + name);
    }
    det.close();
    summary.close();
    outputs.insert(outputs.begin(), {"detections.csv", "charts/axes.json", "charts/ista_summary.csv"});
    return outputs;
}

std::vector<Detection> read_detections(const fs::path& path) {
    const CsvTable t = read_csv(path);
    const auto ci = t.column("pose_index"), ca = t.column("angle_deg"), cr = t.column("range_m"),
               cs = t.column("rss_db"), cre = t.column("re"), cim = t.column("im"),
               cd_ = t.column("delay_s"), cp = t.column("p"), cq = t.column("q");
    std::vector<Detection> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Detection d;
        d.pose_index = static_cast<int>(t.integer(r, ci));
        d.angle = deg2rad(t.number(r, ca));
        d.range = t.number(r, cr);
        d.rss = t.number(r, cs);
        d.amplitude = {t.number(r, cre), t.number(r, cim)};
        d.delay = t.number(r, cd_);
        d.p = static_cast<int>(t.integer(r, cp));
        d.q = static_cast<int>(t.integer(r, cq));
        if (!(d.range > 0.0)) throw ParseError("detection range must be positive", t.row_offsets[r]);
        out.push_back(d);
    }
    return out;
}

const std::vector<std::string> kMapHeader = {"x", "y", "cov_xx", "cov_xy", "cov_yy", "track_id", "step"};

void map_row(CsvWriter& w, const Vec2& p, const Eigen::Matrix2d& c, int track, int step) {
    w.row({num(p.x()), num(p.y()), num(c(0, 0)), num(c(0, 1)), num(c(1, 1)), num(track), num(step)});
}

std::vector<std::string> stage_track(const ScenarioConfig& c, const fs::path& out) {
    const auto poses = read_trajectory(out / "trajectory.csv");
    const auto detections = read_detections(out / "detections.csv");
    std::map<int, std::vector<Detection>> by_pose;
    for (const auto& d : detections) by_pose[d.pose_index].push_back(d);

    PathlossModelState init = c.pathloss_init;
    if (c.pathloss_init_from_scene) {
        init.beta_h0 = calibrated_beta_h0(c);
        init.beta_h1 = init.beta_h0;
    }
    MeasurementSelector selector(init, c.selection);
    Tracker tracker(c.tracker);

    CsvWriter sel(out / "selection.csv",
                  {"pose_index", "detection_index", "rss_db", "range_m", "posterior_h0", "selected"});
    CsvWriter log(out / "tracks.csv", {"step", "track_id", "x", "y", "cov_xx", "cov_xy", "cov_yy",
                                       "mu_cwnv", "mu_cwna", "matched_detection", "event"});
    CsvWriter raw(out / "map_raw.csv", kMapHeader);
    CsvWriter filt(out / "map_filtered.csv", kMapHeader);

    for (const auto& pose : poses) {
        const auto& dets = by_pose[pose.index];
        for (const auto& d : dets) map_row(raw, coarse_position(d, pose), Eigen::Matrix2d::Zero(), -1, pose.index);
        const auto labeled = selector.process(dets);
        std::vector<Detection> selected;
        std::vector<int> selected_index;
        for (std::size_t k = 0; k < labeled.size(); ++k) {
            const auto& l = labeled[k];
            sel.row({num(pose.index), num(static_cast<int>(k)), num(l.detection.rss),
                     num(l.detection.range), num(l.posterior_h0), l.selected ? "1" : "0"});
            if (l.selected) {
                selected.push_back(l.detection);
                selected_index.push_back(static_cast<int>(k));
            }
        }
        const StepReport rep = tracker.step(pose.index, pose, selected);
        for (const auto& r : rep.log) {
            const int det = r.matched_detection >= 0 ? selected_index[r.matched_detection] : -1;
            log.row({num(r.step), num(r.track_id), num(r.position.x()), num(r.position.y()),
                     num(r.cov(0, 0)), num(r.cov(0, 1)), num(r.cov(1, 1)), num(r.mu_cwnv),
                     num(r.mu_cwna), num(det), to_string(r.event)});
            if (r.event == TrackEvent::Spawn || r.event == TrackEvent::Update)
                map_row(filt, r.position, r.cov, r.track_id, r.step);
        }
    }
    sel.close();
    log.close();
    raw.close();
    filt.close();

    const auto tracks = tracker.finish();
    std::vector<SmoothedTrack> smoothed;
    smoothed.reserve(tracks.size());
    for (const auto& t : tracks) smoothed.push_back(imm_smooth(t, c.tracker));
    const auto map = extract_map(smoothed, c.map_cov_threshold, !c.map_include_coast);
    CsvWriter sm(out / "map_smoothed.csv", kMapHeader);
    for (const auto& p : map) map_row(sm, p.position, p.cov, p.track_id, p.step);
    sm.close();
    return {"selection.csv", "tracks.csv", "map_raw.csv", "map_filtered.csv", "map_smoothed.csv"};
}

std::map<int, std::vector<Vec2>> read_map(const fs::path& path) {
    const CsvTable t = read_csv(path);
    const auto cx = t.column("x"), cy = t.column("y"), cs = t.column("step");
    std::map<int, std::vector<Vec2>> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        out[static_cast<int>(t.integer(r, cs))].emplace_back(t.number(r, cx), t.number(r, cy));
    return out;
}

std::vector<std::string> stage_evaluate(const ScenarioConfig& c, const fs::path& out) {
    const auto poses = read_trajectory(out / "trajectory.csv");
    const CsvTable gt = read_csv(out / "ground_truth.csv");
    std::map<int, std::vector<Vec2>> truth;
    {
        const auto ci = gt.column("pose_index"), cx = gt.column("x"), cy = gt.column("y"),
                   ce = gt.column("evaluable");
        for (std::size_t r = 0; r < gt.rows.size(); ++r)
            if (gt.integer(r, ce) == 1)
                truth[static_cast<int>(gt.integer(r, ci))].emplace_back(gt.number(r, cx), gt.number(r, cy));
    }
    const std::vector<std::pair<std::string, std::string>> methods = {
        {"raw", "map_raw.csv"}, {"filter", "map_filtered.csv"}, {"smoothed", "map_smoothed.csv"}};
    std::vector<std::map<int, std::vector<Vec2>>> maps;
    for (const auto& m : methods) maps.push_back(read_map(out / m.second));

    CsvWriter w(out / "gospa.csv", {"step", "method", "total", "localization", "missed", "false"});
    std::vector<double> sums(methods.size(), 0.0);
    auto in_region = [&](const Pose& pose, std::vector<Vec2> pts) {
        std::erase_if(pts, [&](const Vec2& p) { return !((p - pose.ue_position).norm() <= c.eval_radius); });
        return pts;
    };
    for (const auto& pose : poses) {
        const auto t = in_region(pose, truth[pose.index]);
        for (std::size_t k = 0; k < methods.size(); ++k) {
            const auto r = gospa(in_region(pose, maps[k][pose.index]), t, c.gospa);
            sums[k] += r.total;
            w.row({num(pose.index), methods[k].first, num(r.total), num(r.localization),
                   num(r.missed), num(r.false_targets)});
        }
    }
    w.close();
    const double n = poses.empty() ? 1.0 : static_cast<double>(poses.size());
    json s;
    s["steps"] = poses.size();
    s["average_total"] = {{"raw", sums[0] / n}, {"filter", sums[1] / n}, {"smoothed", sums[2] / n}};
    s["cutoff"] = c.gospa.cutoff;
    s["order"] = c.gospa.order;
    std::ofstream f(out / "gospa_summary.json", std::ios::trunc);
    f << s.dump(2) << '\n';
    if (!f) throw Error("failed to write gospa_summary.json");
    return {"gospa.csv", "gospa_summary.json"};
}

void write_manifest(const fs::path& out, const RunManifest& m) {
    json j;
    j["version"] = m.version;
    j["seed"] = m.seed;
    j["status"] = m.status;
    if (!m.failed_stage.empty()) j["failed_stage"] = m.failed_stage;
    j["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                         "." + std::to_string(EIGEN_MINOR_VERSION);
    j["config"] = json::parse(m.config_json);
    j["stages"] = json::array();
    for (const auto& s : m.stages)
        j["stages"].push_back({{"name", s.name}, {"seconds", s.seconds}, {"outputs", s.outputs}});
    std::ofstream f(out / "manifest.json", std::ios::trunc);
    f << j.dump(2) << '\n';
    if (!f) throw Error("failed to write manifest.json");
}

}  // namespace

RunManifest run_pipeline(const ScenarioConfig& config, const RunOptions& options) {
    config.validate();
    if (options.out.empty()) throw ConfigError("an output directory is required");
    if (static_cast<int>(options.first) > static_cast<int>(options.last))
        throw ConfigError("first stage comes after the last stage");
    fs::create_directories(options.out);
    DirectoryLock lock(options.out);

    RunManifest manifest;
    manifest.config_json = config_to_json(config);
    manifest.seed = config.seed;
    write_manifest(options.out, manifest);
    {
        std::ofstream f(options.out / "config.json", std::ios::trunc);
        f << manifest.config_json << '\n';
    }

    for (int s = static_cast<int>(options.first); s <= static_cast<int>(options.last); ++s) {
        const Stage stage = static_cast<Stage>(s);
        StageRecord rec;
        rec.name = to_string(stage);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (stage) {
                case Stage::Simulate: rec.outputs = stage_simulate(config, options.out); break;
                case Stage::Chart:
                    rec.outputs = stage_chart(config, options.out,
                                              options.observations.value_or(options.out / "observations.bin"));
                    break;
                case Stage::Track: rec.outputs = stage_track(config, options.out); break;
                case Stage::Evaluate: rec.outputs = stage_evaluate(config, options.out); break;
            }
        } catch (const std::exception& e) {
            manifest.status = "failed";
            manifest.failed_stage = rec.name;
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            manifest.stages.push_back(rec);
            write_manifest(options.out, manifest);
            throw StageError(rec.name, e.what());
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest.stages.push_back(rec);
    }
    manifest.status = "complete";
    write_manifest(options.out, manifest);
    return manifest;
}

GospaSummary read_gospa_summary(const fs::path& out) {
    std::ifstream f(out / "gospa_summary.json");
    if (!f) throw Error("missing gospa_summary.json in " + out.string());
    std::stringstream ss;
    ss << f.rdbuf();
    const auto j = json::parse(ss.str());
    GospaSummary s;
    s.steps = j.at("steps").get<int>();
    s.raw = j.at("average_total").at("raw").get<double>();
    s.filter = j.at("average_total").at("filter").get<double>();
    s.smoothed = j.at("average_total").at("smoothed").get<double>();
    return s;
}

}  // namespace mmwmap
