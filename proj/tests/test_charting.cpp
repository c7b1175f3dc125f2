#include <gtest/gtest.h>

#include "mmwmap/charting.hpp"
#include "mmwmap/errors.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mmwmap;
using testutil::observe;
using testutil::small_setup;

namespace {

Eigen::MatrixXcd random_chart(int r, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    Eigen::MatrixXcd b(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) b(i, j) = {n(rng), n(rng)};
    return b;
}

double rel_err(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST(LsChart, RecoversNoiselessChart) {
    const auto s = small_setup(64, 8, 9, 16, 9);
    ASSERT_TRUE(s.grid->ls_feasible());
    const Eigen::MatrixXcd b = random_chart(16, 9, 1);
    const auto chart = ls_chart(observe(s, b, 2), s.grid);
    EXPECT_LT(rel_err(chart.values, b), 1e-8);
    EXPECT_EQ(chart.method, ChartMethod::LeastSquares);
}

TEST(LsChart, ZeroInputZeroChart) {
    const auto s = small_setup(64, 4, 9, 16, 9);
    const auto chart = ls_chart(observe(s, Eigen::MatrixXcd::Zero(16, 9), 3), s.grid);
    EXPECT_EQ(chart.values.norm(), 0.0);
}

TEST(LsChart, MatchesStackedPseudoInverse) {
    const auto s = small_setup(64, 8, 9, 16, 9);
    const auto obs = observe(s, random_chart(16, 9, 4), 5, 0.3);
    const Eigen::MatrixXcd ref = oracle::stacked_ls(obs.transmitted, obs.received, 64, 9, 8,
                                                    s.grid->C, s.grid->G);
    EXPECT_LT(rel_err(ls_chart(obs, s.grid).values, ref), 1e-8);
}

TEST(LsChart, Linearity) {
    const auto s = small_setup(64, 4, 9, 16, 9);
    const auto o1 = observe(s, random_chart(16, 9, 6), 9, 0.1);
    auto o2 = observe(s, random_chart(16, 9, 7), 9, 0.1);  // same symbols (same seed)
    auto sum = o1;
    for (std::size_t k = 0; k < sum.received.size(); ++k) sum.received[k] += o2.received[k];
    const Eigen::MatrixXcd a = ls_chart(o1, s.grid).values + ls_chart(o2, s.grid).values;
    EXPECT_LT(rel_err(ls_chart(sum, s.grid).values, a), 1e-10);
}

TEST(LsChart, IllConditionedGridThrows) {
    WaveformConfig w;
    w.n_subcarriers = 16;
    w.n_symbols = 1;
    ChartGridSpec spec;
    spec.range_min = 1.0;
    spec.range_max = 1.001;  // cells far closer than the resolution
    spec.n_range = 8;
    spec.angle_min = -0.2;
    spec.angle_max = 0.2;
    spec.n_angle = 3;
    const auto beams = beam_grid(-0.2, 0.2, 3);
    auto grid = std::make_shared<const ChartGrid>(make_chart_grid(w, ArrayConfig{}, beams, spec));
    EXPECT_FALSE(grid->ls_feasible());
    try {
        ls_chart_from(Eigen::MatrixXcd::Zero(16, 3), grid);
        FAIL();
    } catch (const GridError& e) {
        EXPECT_GT(e.condition_number(), kMaxGridCondition);
    }
}

TEST(MatchedFilter, SingleOnGridTargetAtArgmax) {
    const auto s = small_setup(64, 2, 9, 16, 9);
    Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(16, 9);
    b(11, 3) = {0.0, 2.0};
    const auto chart = matched_filter_chart(observe(s, b, 8), s.grid);
    Eigen::Index r, c;
    chart.values.cwiseAbs().maxCoeff(&r, &c);
    EXPECT_EQ(r, 11);
    EXPECT_EQ(c, 3);
    EXPECT_NEAR(std::abs(chart.values(11, 3) - b(11, 3)), 0.0, 1e-9);
}

TEST(MatchedFilter, EnergyScaling) {
    Scene sc;
    sc.diffuse_points = {{{5.0, 1.0}, 1.0}, {{8.0, -2.0}, 3.0}};
    WaveformConfig w;
    w.n_subcarriers = 128;
    w.n_symbols = 2;
    w.subcarrier_spacing = 3e6;
    const auto beams = beam_grid(-1.0, 1.0, 9);
    ChartGridSpec spec;
    spec.range_max = 12.0;
    spec.n_range = 40;
    spec.angle_min = -1.0;
    spec.angle_max = 1.0;
    spec.n_angle = 21;
    auto grid = std::make_shared<const ChartGrid>(make_chart_grid(w, ArrayConfig{}, beams, spec));
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.6);
    const auto a = matched_filter_chart(synthesize(sc, pose, w, ArrayConfig{}, beams, 1).first, grid);
    for (auto& d : sc.diffuse_points) d.rcs *= 9.0;
    const auto b = matched_filter_chart(synthesize(sc, pose, w, ArrayConfig{}, beams, 1).first, grid);
    EXPECT_LT(rel_err(b.values, 3.0 * a.values), 1e-12);
}

TEST(MatchedFilter, HammingSidelobesBelowForty) {
    // Single point target, one beam, fine range grid.
    WaveformConfig w;
    w.n_subcarriers = 256;
    w.n_symbols = 1;
    w.subcarrier_spacing = 1e6;
    testutil::SmallSetup s;
    s.waveform = w;
    s.beams = {0.0};
    ChartGridSpec spec;
    spec.range_min = 10.0;
    spec.range_max = 40.0;
    spec.n_range = 1201;
    spec.angle_min = 0.0;
    spec.angle_max = 0.0;
    spec.n_angle = 1;
    s.grid = std::make_shared<const ChartGrid>(make_chart_grid(w, ArrayConfig{}, s.beams, spec));
    Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(1201, 1);
    b(600, 0) = 1.0;
    const auto obs = observe(s, b, 1);
    for (bool hamming : {false, true}) {
        const Eigen::VectorXd prof = matched_filter_chart(obs, s.grid, hamming).values.col(0).cwiseAbs();
        Eigen::Index peak;
        const double top = prof.maxCoeff(&peak);
        Eigen::Index lo = peak, hi = peak;
        while (lo > 0 && prof[lo - 1] < prof[lo]) --lo;
        while (hi + 1 < prof.size() && prof[hi + 1] < prof[hi]) ++hi;
        double side = 0.0;
        for (Eigen::Index k = 0; k < prof.size(); ++k)
            if (k < lo || k > hi) side = std::max(side, prof[k]);
        const double db = 20.0 * std::log10(side / top);
        if (hamming)
            EXPECT_LT(db, -40.0);
        else
            EXPECT_GT(db, -20.0);  // rectangular window: about -13 dB
    }
}

TEST(Ista, ZeroLambdaKeepsLsFixedPoint) {
    const auto s = small_setup(64, 8, 9, 16, 9);
    const auto obs = observe(s, random_chart(16, 9, 10), 11);
    const auto ls = ls_chart(obs, s.grid);
    IstaConfig cfg;
    cfg.lambda = 0.0;
    cfg.max_iter = 1;
    const auto res = ista_chart_from(coherent_integration(obs), 8, s.grid, cfg, ls);
    EXPECT_EQ(res.iterations, 1);
    EXPECT_LT((res.chart.values - ls.values).norm(), 1e-10 * ls.values.norm());
}

TEST(Ista, LargeLambdaAnnihilatesNoise) {
    const auto s = small_setup(64, 4, 9, 16, 9);
    const auto obs = observe(s, Eigen::MatrixXcd::Zero(16, 9), 12, 1.0);
    IstaConfig cfg;
    cfg.lambda = 1.0;  // the relative weight where the zero chart is optimal
    const auto res = ista_chart(obs, s.grid, cfg);
    EXPECT_EQ(res.chart.nonzeros(), 0);
    IstaConfig abs_cfg;
    abs_cfg.lambda_relative = false;
    const auto ls = ls_chart(obs, s.grid);
    const double eta = abs_cfg.beta_step / (s.grid->lambda_max_a * s.grid->lambda_max_g);
    abs_cfg.lambda = 10.0 * ls.values.cwiseAbs().maxCoeff() / eta;
    abs_cfg.max_iter = 1;
    EXPECT_EQ(ista_chart(obs, s.grid, abs_cfg).chart.nonzeros(), 0);
}

TEST(Ista, ThreeScatterersExactSupportAndMonotoneObjective) {
    const auto s = small_setup(64, 8, 9, 16, 9);
    Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(16, 9);
    b(2, 1) = {1.0, 0.5};
    b(8, 4) = {-0.7, 0.9};
    b(13, 7) = {0.3, -1.1};
    IstaConfig cfg;
    const auto res = ista_chart(observe(s, b, 13), s.grid, cfg);
    EXPECT_TRUE(res.converged);
    EXPECT_LE(res.iterations, 200);
    EXPECT_EQ(res.chart.nonzeros(), 3);
    EXPECT_NE(res.chart.values(2, 1), cd(0.0));
    EXPECT_NE(res.chart.values(8, 4), cd(0.0));
    EXPECT_NE(res.chart.values(13, 7), cd(0.0));
    for (std::size_t k = 1; k < res.objective.size(); ++k)
        EXPECT_LE(res.objective[k], res.objective[k - 1] * (1 + 1e-12));
}

TEST(Ista, ObjectiveMatchesDirectEvaluation) {
    const auto s = small_setup(32, 2, 5, 8, 5);
    const auto obs = observe(s, random_chart(8, 5, 14), 15, 0.2);
    IstaConfig cfg;
    cfg.max_iter = 3;
    const auto res = ista_chart(obs, s.grid, cfg);
    const Eigen::MatrixXcd z = coherent_integration(obs);
    const Eigen::MatrixXcd& bb = res.chart.values;
    const double direct = (s.grid->C * bb * s.grid->G - z).squaredNorm() + res.lambda_abs * bb.cwiseAbs().sum();
    EXPECT_NEAR(res.objective.back(), direct, 1e-9 * direct);
}

TEST(Ista, RejectsBadParameters) {
    const auto s = small_setup(32, 1, 5, 8, 5);
    const auto obs = observe(s, random_chart(8, 5, 1), 1);
    IstaConfig cfg;
    cfg.beta_step = 1.0;
    EXPECT_THROW(ista_chart(obs, s.grid, cfg), ConfigError);
    cfg.beta_step = 0.5;
    cfg.lambda = -1.0;
    EXPECT_THROW(ista_chart(obs, s.grid, cfg), ConfigError);
}

TEST(Ista, NonConvergenceIsReported) {
    const auto s = small_setup(64, 2, 9, 16, 9);
    IstaConfig cfg;
    cfg.max_iter = 2;
    cfg.tol = 0.0;
    const auto res = ista_chart(observe(s, random_chart(16, 9, 3), 3, 0.5), s.grid, cfg);
    EXPECT_FALSE(res.converged);
    EXPECT_EQ(res.iterations, 2);
}

TEST(Ista, MeasuredOpsMatchEstimate) {
    const auto s = small_setup(64, 8, 9, 16, 9);
    IstaConfig cfg;
    cfg.tol = 0.0;
    cfg.max_iter = 7;
    const auto res = ista_chart(observe(s, random_chart(16, 9, 4), 4), s.grid, cfg);
    const auto est = op_count_estimate(64, 8, 9, 16, 9, 7);
    EXPECT_EQ(res.ops.init, est.init);
    EXPECT_EQ(res.ops.per_iteration, est.per_iteration);
    EXPECT_EQ(res.ops.total(), est.total());
}

TEST(OpCount, Examples) {
    const auto a = op_count_estimate(512, 28, 64, 64, 64, 50);
    std::uint64_t init = 0;
    init += 28ull * 512 * 64;
    init += 64ull * 512 * 64;
    init += 64ull * 64 * 64;
    EXPECT_EQ(a.init, init);
    EXPECT_EQ(a.per_iteration, 64ull * 64 * 64 * 2);
    EXPECT_EQ(a.total(), init + 50 * 64ull * 64 * 64 * 2);
    const auto b = op_count_estimate(512, 28, 64, 128, 128, 50);
    EXPECT_EQ(b.per_iteration, 8 * a.per_iteration);
    EXPECT_EQ(op_count_estimate(512, 28, 64, 64, 64, 0).per_iteration * 0, 0u);
    EXPECT_EQ(op_count_estimate(512, 28, 64, 64, 64, 0).total(), a.init);
    EXPECT_THROW(op_count_estimate(0, 1, 1, 1, 1, 1), ConfigError);
}

TEST(PowerIteration, MatchesEigenSolver) {
    const Eigen::MatrixXcd m = random_chart(12, 12, 21);
    const Eigen::MatrixXcd h = m * m.adjoint();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
    EXPECT_NEAR(power_iteration_lambda_max(h), es.eigenvalues().maxCoeff(), 1e-5 * es.eigenvalues().maxCoeff());
}

namespace {

RangeAngleChart chart_with(std::shared_ptr<const ChartGrid> g, std::vector<std::tuple<int, int, double>> peaks) {
    RangeAngleChart c;
    c.grid = g;
    c.values = Eigen::MatrixXcd::Zero(g->n_range(), g->n_angle());
    for (auto [p, q, v] : peaks) c.values(p, q) = v;
    return c;
}

std::shared_ptr<const ChartGrid> detection_grid() {
    WaveformConfig w;
    w.n_subcarriers = 8;
    w.n_symbols = 1;
    ChartGridSpec spec;
    spec.range_min = 1.0;
    spec.range_max = 20.0;
    spec.n_range = 39;  // 0.5 m cells
    spec.angle_min = deg2rad(-50);
    spec.angle_max = deg2rad(50);
    spec.n_angle = 21;  // 5 degree cells
    return std::make_shared<const ChartGrid>(make_chart_grid(w, ArrayConfig{}, beam_grid(-0.5, 0.5, 3), spec));
}

}  // namespace

TEST(DetectTargets, SinglePeak) {
    auto g = detection_grid();
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.0);
    const auto d = detect_targets(chart_with(g, {{10, 7, 1.0}}), DetectionConfig{}, pose);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].p, 10);
    EXPECT_EQ(d[0].q, 7);
    EXPECT_NEAR(d[0].range, g->range_of(10), 1e-12);
    EXPECT_NEAR(d[0].rss, 0.0, 1e-12);
}

TEST(DetectTargets, CloseEqualPeaksTieBrokenByLowerIndex) {
    auto g = detection_grid();
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.0);
    // 1 m and 10 degrees apart, both below the 2.3 m / 20 degree separation.
    const auto d = detect_targets(chart_with(g, {{14, 9, 1.0}, {12, 11, 1.0}}), DetectionConfig{}, pose);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].p, 14);
    EXPECT_EQ(d[0].q, 9);
}

TEST(DetectTargets, SeparatedPeaksAndLimits) {
    auto g = detection_grid();
    const Pose pose = make_pose(0, {0, 0}, 0.0, 0.0);
    const auto chart = chart_with(g, {{4, 2, 1.0}, {20, 2, 0.5}, {4, 15, 0.25}, {30, 18, 1e-4}});
    DetectionConfig cfg;
    // The weakest peak sits 80 dB down, below the default floor.
    EXPECT_EQ(detect_targets(chart, cfg, pose).size(), 3u);
    cfg.dyn_range_db = 100.0;
    EXPECT_EQ(detect_targets(chart, cfg, pose).size(), 4u);
    cfg.max_targets = 2;
    const auto two = detect_targets(chart, cfg, pose);
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two[0].p, 4);
    EXPECT_EQ(two[1].p, 20);
    cfg.max_targets = 10;
    cfg.dyn_range_db = 20.0;
    EXPECT_EQ(detect_targets(chart, cfg, pose).size(), 3u);
}

TEST(DetectTargets, Defaults) {
    DetectionConfig cfg;
    EXPECT_EQ(cfg.min_sep_range, 2.3);
    EXPECT_NEAR(cfg.min_sep_angle, deg2rad(20.0), 1e-15);
    EXPECT_EQ(cfg.max_targets, 10);
    EXPECT_EQ(cfg.dyn_range_db, 60.0);
}

TEST(DetectTargets, EmptyChart) {
    auto g = detection_grid();
    EXPECT_TRUE(detect_targets(chart_with(g, {}), DetectionConfig{}, make_pose(0, {0, 0}, 0, 0)).empty());
}
