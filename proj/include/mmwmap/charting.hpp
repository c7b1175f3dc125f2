#pragma once

// Range-angle charting: model Z = C B G with Z the coherent integration of
// the received symbols, C the delay steering matrix and G the beam pattern
// correlation. B is estimated by least squares (or its matched-filter
// approximation on oversampled grids) and refined by ISTA.

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "mmwmap/geometry.hpp"
#include "mmwmap/observation.hpp"
#include "mmwmap/pattern.hpp"

namespace mmwmap {

struct ChartGridSpec {
    double range_min = 0.4;  ///< half path length of the first cell, meters
    double range_max = 30.0;
    int n_range = 391;
    double angle_min = -deg2rad(50.0);  ///< UE frame
    double angle_max = deg2rad(50.0);
    int n_angle = 221;
};

struct ChartGrid {
    std::vector<double> delays;
    std::vector<double> angles;  ///< UE frame
    Eigen::MatrixXcd C;          ///< N x C_R, C(n, p) = exp(-j 2 pi n df tau_p)
    Eigen::MatrixXcd G;          ///< C_phi x I, G(q, i) = g(angle_q; beam_i)
    Eigen::MatrixXcd A;          ///< C^H C
    Eigen::MatrixXcd Gg;         ///< G G^H
    Eigen::VectorXd diag_a, diag_g;
    double lambda_max_a = 0.0, lambda_max_g = 0.0;
    double condition_a = 0.0, condition_g = 0.0;
    bool full_circle = false;
    /// (C^H C)^-1 C^H and G^H (G G^H)^-1; empty when the grid is too
    /// ill-conditioned for least squares.
    Eigen::MatrixXcd pinv_c, pinv_g;

    int n_range() const { return static_cast<int>(delays.size()); }
    int n_angle() const { return static_cast<int>(angles.size()); }
    bool ls_feasible() const { return pinv_c.size() > 0 && pinv_g.size() > 0; }
    double range_of(int p) const { return 0.5 * kSpeedOfLight * delays[p]; }
};

/// Condition number above which least squares is refused.
inline constexpr double kMaxGridCondition = 1e10;

ChartGrid make_chart_grid(const WaveformConfig& waveform, const ArrayConfig& arrays,
                          const std::vector<double>& beam_angles, const ChartGridSpec& spec);

/// Largest eigenvalue of a Hermitian PSD matrix by power iteration.
double power_iteration_lambda_max(const Eigen::MatrixXcd& m, double rel_tol = 1e-6,
                                  int max_iter = 100000);

enum class ChartMethod { LeastSquares, MatchedFilter, Ista };

struct RangeAngleChart {
    Eigen::MatrixXcd values;  ///< C_R x C_phi
    std::shared_ptr<const ChartGrid> grid;
    ChartMethod method = ChartMethod::LeastSquares;
    long nonzeros() const;
};

/// (1/M) sum_m conj(X_m) .* Y_m, optionally Hamming-windowed along the
/// subcarriers.
Eigen::MatrixXcd coherent_integration(const ObservationGrid& obs, bool hamming = false);

/// Least-squares chart. Throws GridError when C^H C or G G^H is too
/// ill-conditioned.
RangeAngleChart ls_chart(const ObservationGrid& obs, std::shared_ptr<const ChartGrid> grid,
                         bool hamming = false);
RangeAngleChart ls_chart_from(const Eigen::MatrixXcd& z, std::shared_ptr<const ChartGrid> grid);

/// Matched-filter chart diag(C^H C)^-1 C^H Z G^H diag(G G^H)^-1; exact for
/// a single on-grid target and usable on oversampled grids.
RangeAngleChart matched_filter_chart(const ObservationGrid& obs,
                                     std::shared_ptr<const ChartGrid> grid, bool hamming = false);
RangeAngleChart matched_filter_chart_from(const Eigen::MatrixXcd& z,
                                          std::shared_ptr<const ChartGrid> grid);

struct OpCounts {
    std::uint64_t init = 0;           ///< coherent integration + C^H Z G^H
    std::uint64_t per_iteration = 0;  ///< A B Gg products of one iteration
    std::uint64_t iterations = 0;
    std::uint64_t total() const { return init + per_iteration * iterations; }
};

/// Closed-form complex multiply-accumulate counts:
/// init = M N I + C_R N I + C_R C_phi I, per iteration = C_R^2 C_phi + C_R C_phi^2.
OpCounts op_count_estimate(long n, long m, long i, long c_r, long c_phi, long n_iter);

struct IstaConfig {
    /// Regularization weight. When `lambda_relative` is set it is a fraction
    /// of 2 max|C^H Z G^H|, the smallest weight whose solution is all zero.
    double lambda = 0.08;
    bool lambda_relative = true;
    double beta_step = 0.9;
    int max_iter = 200;
    double tol = 1e-4;
    bool hamming = false;
    bool track_objective = true;
};

struct IstaResult {
    RangeAngleChart chart;
    RangeAngleChart initial;  ///< LS chart, or matched filter if LS is infeasible
    int iterations = 0;
    bool converged = false;
    double lambda_abs = 0.0;
    double step = 0.0;  ///< eta
    /// ||C B G - Z||_F^2 + lambda ||B||_1 for the initial point and after
    /// every iteration.
    std::vector<double> objective;
    OpCounts ops;                        ///< measured
    std::uint64_t overhead_ops = 0;      ///< initial estimate, normalization and objective
    std::vector<double> iteration_seconds;
};

IstaResult ista_chart(const ObservationGrid& obs, std::shared_ptr<const ChartGrid> grid,
                      const IstaConfig& config);
/// Same, starting from a precomputed coherent integration (M symbols).
IstaResult ista_chart_from(const Eigen::MatrixXcd& z, int n_symbols,
                           std::shared_ptr<const ChartGrid> grid, const IstaConfig& config);
/// ISTA from an explicit initial point (used for single-step checks).
IstaResult ista_chart_from(const Eigen::MatrixXcd& z, int n_symbols,
                           std::shared_ptr<const ChartGrid> grid, const IstaConfig& config,
                           const RangeAngleChart& initial);

struct Detection {
    int pose_index = 0;
    double angle = 0.0;  ///< UE frame
    double range = 0.0;  ///< distance from the UE on the delay ellipse
    double delay = 0.0;
    double rss = 0.0;  ///< dB
    std::complex<double> amplitude;
    int p = 0, q = 0;
};

struct DetectionConfig {
    double min_sep_range = 2.3;
    double min_sep_angle = deg2rad(20.0);
    int max_targets = 10;
    double dyn_range_db = 60.0;
};

/// 20 log10 |value|, -infinity for a zero cell.
double rss_of_detection(const RangeAngleChart& chart, int p, int q);

/// Greedy strongest-first peak picking over 8-neighbourhood local maxima.
/// Ties are broken by the lower linear cell index p + q * C_R. RSS and
/// amplitude are read from `rss_chart` (defaults to `chart`).
std::vector<Detection> detect_targets(const RangeAngleChart& chart, const DetectionConfig& config,
                                      const Pose& pose, const RangeAngleChart* rss_chart = nullptr);

}  // namespace mmwmap
