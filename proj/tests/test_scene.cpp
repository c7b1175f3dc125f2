#include <gtest/gtest.h>

#include <memory>

#include "mmwmap/charting.hpp"
#include "mmwmap/errors.hpp"
#include "mmwmap/observation.hpp"
#include "mmwmap/pattern.hpp"
#include "mmwmap/scene.hpp"
#include "oracles.hpp"

using namespace mmwmap;

namespace {

WaveformConfig small_waveform() {
    WaveformConfig w;
    w.n_subcarriers = 256;
    w.n_symbols = 2;
    w.subcarrier_spacing = 1.5625e6;
    return w;
}

}  // namespace

TEST(EnumeratePaths, EmptyScene) {
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    EXPECT_TRUE(enumerate_paths(Scene{}, pose, 0.0107).empty());
}

TEST(EnumeratePaths, DiffusePointAmplitude) {
    Scene s;
    s.diffuse_points = {{{10.0, 0.0}, 1.0}};
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.0);
    const double lambda = kSpeedOfLight / 28e9;
    const auto paths = enumerate_paths(s, pose, lambda);
    ASSERT_EQ(paths.size(), 1u);
    const double expected = std::sqrt(lambda * lambda / (std::pow(4 * kPi, 3) * 1e4));
    EXPECT_NEAR(std::abs(paths[0].amplitude), expected, 1e-15);
    EXPECT_NEAR(std::abs(paths[0].amplitude), 2.404e-6, 0.001e-6);
    EXPECT_EQ(paths[0].order, 1);
}

TEST(EnumeratePaths, WallSpecularPointIsPerpendicularFoot) {
    Scene s;
    s.walls = {{{-1000.0, 2.0}, {1000.0, 2.0}, 0.5}};
    const Pose pose = make_pose(0, {3, 0}, 0.0, 0.0);
    const auto paths = enumerate_paths(s, pose, 0.01);
    ASSERT_EQ(paths.size(), 1u);
    EXPECT_NEAR(paths[0].interaction.x(), 3.0, 1e-9);
    EXPECT_NEAR(paths[0].interaction.y(), 2.0, 1e-12);
    EXPECT_NEAR(paths[0].geometry.delay, 4.0 / kSpeedOfLight, 1e-20);
}

TEST(EnumeratePaths, OrderOnePointsLieOnGeometry) {
    Scene s;
    s.walls = {{{0, 1}, {20, 1}, 0.5}, {{0, -1}, {20, -1}, 0.5}};
    s.diffuse_points = {{{4, 0.5}, 2.0}, {{9, -0.3}, 1.0}};
    s.enable_double_bounce = true;
    const Pose pose = make_pose(0, {6, 0}, 0.0, 0.6);
    const auto paths = enumerate_paths(s, pose, 0.0107);
    int order2 = 0;
    for (const auto& p : paths) {
        EXPECT_NEAR(p.geometry.delay * kSpeedOfLight, p.geometry.tx_range + p.geometry.rx_range, 1e-9);
        if (p.order == 2) {
            ++order2;
            continue;
        }
        bool on_wall = std::abs(std::abs(p.interaction.y()) - 1.0) < 1e-9;
        bool is_point = false;
        for (const auto& d : s.diffuse_points) is_point |= (d.position - p.interaction).norm() < 1e-12;
        EXPECT_TRUE(on_wall || is_point);
    }
    EXPECT_GT(order2, 0);
}

TEST(EnumeratePaths, GhostsWeakerThanParents) {
    Scene s;
    s.walls = {{{0, 1}, {20, 1}, 0.5}};
    s.diffuse_points = {{{8, 0.2}, 1.0}};
    s.enable_double_bounce = true;
    const Pose pose = make_pose(0, {5, 0}, 0.0, 0.6);
    double strongest_order1_point = 0.0, strongest_ghost = 0.0;
    for (const auto& p : enumerate_paths(s, pose, 0.0107)) {
        if (p.kind == PathKind::Diffuse) strongest_order1_point = std::abs(p.amplitude);
        if (p.order == 2) strongest_ghost = std::max(strongest_ghost, std::abs(p.amplitude));
    }
    EXPECT_GT(strongest_ghost, 0.0);
    EXPECT_LT(strongest_ghost, strongest_order1_point);
}

TEST(EnumeratePaths, SpecularSlopeIsFreeSpace) {
    // Walls at increasing offsets: RSS regresses to -20 dB/decade.
    std::vector<double> x, y;
    for (double d = 1.5; d <= 30.0; d *= 1.2) {
        Scene s;
        s.walls = {{{-1000.0, d}, {1000.0, d}, 0.5}};
        const auto paths = enumerate_paths(s, make_pose(0, {0, 0}, 0.0, 0.0), 0.0107);
        ASSERT_EQ(paths.size(), 1u);
        x.push_back(std::log10(d));
        y.push_back(20.0 * std::log10(std::abs(paths[0].amplitude)));
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    EXPECT_NEAR(sxy / sxx, -20.0, 0.5);
}

TEST(SceneValidate, RejectsBadInput) {
    Scene s;
    s.diffuse_points = {{{1, 1}, 0.0}};
    EXPECT_THROW(s.validate(), ConfigError);
    Scene w;
    w.walls = {{{1, 1}, {1, 1}, 0.5}};
    EXPECT_THROW(w.validate(), ConfigError);
}

TEST(SceneJson, RoundTrip) {
    Scene s;
    s.walls = {{{0, 1}, {20, 1}, 0.5}};
    s.diffuse_points = {{{3.25, -0.5}, 12.6}};
    s.enable_double_bounce = true;
    s.noise_power = 1.5e-8;
    const Scene t = parse_scene(scene_to_json(s));
    ASSERT_EQ(t.walls.size(), 1u);
    ASSERT_EQ(t.diffuse_points.size(), 1u);
    EXPECT_EQ(t.diffuse_points[0].position, s.diffuse_points[0].position);
    EXPECT_EQ(t.diffuse_points[0].rcs, 12.6);
    EXPECT_EQ(t.noise_power, 1.5e-8);
    EXPECT_TRUE(t.enable_double_bounce);
}

TEST(SceneJson, SchemaRequired) {
    EXPECT_THROW(parse_scene(R"({"walls": []})"), ConfigError);
    EXPECT_THROW(parse_scene(R"({"schema": 2})"), ConfigError);
    EXPECT_THROW(parse_scene("{not json"), ParseError);
}

TEST(Pattern, UlaCoherentSum) {
    ArrayConfig a;
    a.pattern_model = PatternModel::UlaConjugate;
    for (double s : {-0.7, 0.0, 0.4}) EXPECT_NEAR(std::abs(combined_pattern(a, s, s)), 256.0, 1e-9);
}

TEST(Pattern, UlaFirstNull) {
    ArrayConfig a;
    a.pattern_model = PatternModel::UlaConjugate;
    a.element_spacing = a.wavelength / 2.0;
    const double null = std::asin(1.0 / 8.0);
    EXPECT_LT(std::abs(tx_gain(a, 0.0, null)), 1e-12);
    EXPECT_LT(std::abs(rx_gain(a, 0.0, null)), 1e-12);
    EXPECT_GT(std::abs(tx_gain(a, 0.0, 0.5 * null)), 1.0);
}

TEST(Pattern, ParametricHalfPower) {
    ArrayConfig a;
    a.pattern_model = PatternModel::Parametric;
    a.beamwidth_3db = deg2rad(17.0);
    const double r = std::norm(combined_pattern(a, 0.0, deg2rad(8.5))) / std::norm(combined_pattern(a, 0.0, 0.0));
    EXPECT_NEAR(r, 0.5, 1e-6);
}

TEST(Pattern, BoresightIsMaximum) {
    for (auto model : {PatternModel::UlaConjugate, PatternModel::Parametric}) {
        ArrayConfig a;
        a.pattern_model = model;
        const double peak = std::abs(combined_pattern(a, 0.3, 0.3));
        for (double t = -kPi; t <= kPi; t += 0.001) ASSERT_LE(std::abs(combined_pattern(a, 0.3, t)), peak + 1e-9);
    }
}

TEST(Synthesize, EmptySceneNoiseFreeIsZero) {
    const auto w = small_waveform();
    const auto [g, truth] = synthesize(Scene{}, make_pose(0, {0, 0}, 0, 0.6), w, ArrayConfig{},
                                       beam_grid(-0.5, 0.5, 5), 1);
    EXPECT_TRUE(truth.empty());
    for (const cd& v : g.received) ASSERT_EQ(v, cd(0.0));
}

TEST(Synthesize, AlignedBeamMagnitude) {
    const auto w = small_waveform();
    Scene s;
    s.diffuse_points = {{{6.0, 0.0}, 1.0}};
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.0);
    ArrayConfig a;
    const auto beams = beam_grid(-0.5, 0.5, 5);  // beam 2 points at 0
    const auto [g, truth] = synthesize(s, pose, w, a, beams, 7);
    const auto paths = enumerate_paths(s, pose, w.reference_wavelength());
    for (int m = 0; m < w.n_symbols; ++m)
        for (int n = 0; n < w.n_subcarriers; n += 17) {
            const std::size_t k = g.index(n, 2, m);
            const double expected = std::abs(paths[0].coefficient) * w.wavelength(n) *
                                    std::abs(combined_pattern(a, 0.0, 0.0));
            EXPECT_NEAR(std::abs(g.received[k] / g.transmitted[k]), expected, expected * 1e-12);
        }
}

TEST(Synthesize, DeterministicAndSeedSensitive) {
    const auto w = small_waveform();
    Scene s;
    s.diffuse_points = {{{6.0, 1.0}, 1.0}};
    s.noise_power = 1e-10;
    const Pose pose = make_pose(3, {0, 0}, 0.0, 0.6);
    const auto beams = beam_grid(-1.0, 1.0, 7);
    const auto a = synthesize(s, pose, w, ArrayConfig{}, beams, 42).first;
    const auto b = synthesize(s, pose, w, ArrayConfig{}, beams, 42).first;
    const auto c = synthesize(s, pose, w, ArrayConfig{}, beams, 43).first;
    EXPECT_EQ(a.received, b.received);
    EXPECT_EQ(a.transmitted, b.transmitted);
    EXPECT_NE(a.received, c.received);
}

TEST(Synthesize, PointingErrorIsSeededAndSimulationOnly) {
    const auto w = small_waveform();
    Scene s;
    s.diffuse_points = {{{6.0, 1.0}, 1.0}};
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    ArrayConfig ideal, skewed;
    skewed.pointing_error_std = deg2rad(3.0);
    const auto beams = beam_grid(-1.0, 1.0, 7);
    const auto a = synthesize(s, pose, w, ideal, beams, 5).first;
    const auto b = synthesize(s, pose, w, skewed, beams, 5).first;
    const auto c = synthesize(s, pose, w, skewed, beams, 5).first;
    EXPECT_EQ(b.beam_angles, beams);
    EXPECT_NE(a.received, b.received);
    EXPECT_EQ(b.received, c.received);
}

namespace {

// RSS at the exact cell of a single noise-free on-grid diffuse point.
double on_grid_rss(double range, double rcs) {
    WaveformConfig w = small_waveform();
    Scene s;
    s.diffuse_points = {{{range, 0.0}, rcs}};
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.0);
    const auto beams = beam_grid(-0.5, 0.5, 5);
    ChartGridSpec spec;
    spec.range_min = 1.0;
    spec.range_max = 7.0;
    spec.n_range = 13;
    spec.angle_min = -0.5;
    spec.angle_max = 0.5;
    spec.n_angle = 5;
    auto grid = std::make_shared<const ChartGrid>(make_chart_grid(w, ArrayConfig{}, beams, spec));
    const auto obs = synthesize(s, pose, w, ArrayConfig{}, beams, 1).first;
    const auto chart = matched_filter_chart(obs, grid);
    int p = 0;
    while (std::abs(grid->range_of(p) - range) > 1e-9) ++p;
    return rss_of_detection(chart, p, 2);
}

}  // namespace

TEST(Rss, DoubleDistanceLosesTwelveDb) {
    EXPECT_NEAR(on_grid_rss(3.0, 1.0) - on_grid_rss(6.0, 1.0), 40.0 * std::log10(2.0), 1e-9);
    EXPECT_NEAR(on_grid_rss(3.0, 1.0) - on_grid_rss(6.0, 1.0), 12.04, 0.01);
}

TEST(Rss, DoubleRcsGainsThreeDb) {
    EXPECT_NEAR(on_grid_rss(4.0, 2.0) - on_grid_rss(4.0, 1.0), 10.0 * std::log10(2.0), 1e-9);
}

TEST(Rss, ZeroCellIsMinusInfinity) {
    RangeAngleChart c;
    c.values = Eigen::MatrixXcd::Zero(2, 2);
    EXPECT_EQ(rss_of_detection(c, 1, 1), -std::numeric_limits<double>::infinity());
}
