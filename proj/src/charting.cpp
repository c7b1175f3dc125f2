#include "mmwmap/charting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "mmwmap/errors.hpp"
#include "mmwmap/kernels.hpp"

namespace mmwmap {

namespace {

double condition_number(const Eigen::MatrixXcd& hermitian) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian, Eigen::EigenvaluesOnly);
    const double hi = es.eigenvalues().maxCoeff();
    const double lo = es.eigenvalues().minCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

std::vector<double> uniform_axis(double lo, double hi, int count, bool periodic) {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / (periodic ? count : count - 1);
    for (int k = 0; k < count; ++k) out[k] = lo + k * step;
    return out;
}

double inner_re(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    // Re <a, b> = Re sum conj(a) b
    return (a.array().conjugate() * b.array()).real().sum();
}

}  // namespace

double power_iteration_lambda_max(const Eigen::MatrixXcd& m, double rel_tol, int max_iter) {
    const auto n = m.rows();
    if (n == 0) return 0.0;
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    Eigen::VectorXcd v(n);
    for (Eigen::Index k = 0; k < n; ++k) v[k] = {normal(rng), normal(rng)};
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXcd w = m * v;
        const double next = w.norm();
        if (next == 0.0) return 0.0;
        v = w / next;
        if (std::abs(next - lambda) <= rel_tol * next) return next;
        lambda = next;
    }
    return lambda;
}

ChartGrid make_chart_grid(const WaveformConfig& waveform, const ArrayConfig& arrays,
                          const std::vector<double>& beam_angles, const ChartGridSpec& spec) {
    waveform.validate();
    if (spec.n_range < 1 || spec.n_angle < 1) throw ConfigError("chart grid needs at least one cell");
    if (!(spec.range_min > 0.0) || !(spec.range_max >= spec.range_min))
        throw ConfigError("chart range axis must be positive and increasing");
    if (!(spec.angle_max >= spec.angle_min)) throw ConfigError("chart angle axis is reversed");
    if (beam_angles.empty()) throw ConfigError("chart grid needs at least one beam");

    ChartGrid g;
    g.full_circle = spec.angle_max - spec.angle_min >= 2.0 * kPi - 1e-9;
    for (double r : uniform_axis(spec.range_min, spec.range_max, spec.n_range, false))
        g.delays.push_back(2.0 * r / kSpeedOfLight);
    g.angles = uniform_axis(spec.angle_min, spec.angle_max, spec.n_angle, g.full_circle);

    const int n_sub = waveform.n_subcarriers;
    const int n_beam = static_cast<int>(beam_angles.size());
    g.C.resize(n_sub, spec.n_range);
    for (int p = 0; p < spec.n_range; ++p)
        for (int n = 0; n < n_sub; ++n)
            g.C(n, p) = std::polar(1.0, -2.0 * kPi * n * waveform.subcarrier_spacing * g.delays[p]);
    g.G.resize(spec.n_angle, n_beam);
    for (int q = 0; q < spec.n_angle; ++q)
        for (int i = 0; i < n_beam; ++i) g.G(q, i) = combined_pattern(arrays, beam_angles[i], g.angles[q]);

    g.A.noalias() = g.C.adjoint() * g.C;
    g.Gg.noalias() = g.G * g.G.adjoint();
    g.diag_a = g.A.diagonal().real();
    g.diag_g = g.Gg.diagonal().real();
    g.lambda_max_a = power_iteration_lambda_max(g.A);
    g.lambda_max_g = power_iteration_lambda_max(g.Gg);
    g.condition_a = condition_number(g.A);
    g.condition_g = condition_number(g.Gg);
    if (g.condition_a <= kMaxGridCondition && g.condition_g <= kMaxGridCondition) {
        g.pinv_c = g.A.llt().solve(g.C.adjoint());
        g.pinv_g = g.Gg.llt().solve(g.G).adjoint();
    }
    return g;
}

long RangeAngleChart::nonzeros() const {
    return static_cast<long>((values.array() != std::complex<double>(0.0)).count());
}

Eigen::MatrixXcd coherent_integration(const ObservationGrid& obs, bool hamming) {
    Eigen::MatrixXcd z = kernels::coherent_integration_parallel(
        obs.transmitted.data(), obs.received.data(), obs.n_subcarriers(), obs.n_beams(),
        obs.n_symbols());
    if (hamming && obs.n_subcarriers() > 1) {
        const int n = obs.n_subcarriers();
        for (int k = 0; k < n; ++k) z.row(k) *= 0.54 - 0.46 * std::cos(2.0 * kPi * k / (n - 1));
    }
    return z;
}

RangeAngleChart ls_chart_from(const Eigen::MatrixXcd& z, std::shared_ptr<const ChartGrid> grid) {
    if (!grid->ls_feasible()) {
        std::ostringstream os;
        os << "ill-conditioned chart grid: cond(C^H C) = " << grid->condition_a
           << ", cond(G G^H) = " << grid->condition_g << " (limit " << kMaxGridCondition << ")";
        throw GridError(os.str(), std::max(grid->condition_a, grid->condition_g));
    }
    if (z.rows() != grid->C.rows() || z.cols() != grid->G.cols())
        throw ConfigError("coherent integration does not match the chart grid dimensions");
    RangeAngleChart chart;
    Eigen::MatrixXcd range_compressed = grid->pinv_c * z;
    chart.values.noalias() = range_compressed * grid->pinv_g;
    chart.grid = std::move(grid);
    chart.method = ChartMethod::LeastSquares;
    return chart;
}

RangeAngleChart ls_chart(const ObservationGrid& obs, std::shared_ptr<const ChartGrid> grid,
                         bool hamming) {
    return ls_chart_from(coherent_integration(obs, hamming), std::move(grid));
}

namespace {

Eigen::MatrixXcd project(const Eigen::MatrixXcd& z, const ChartGrid& g) {
    Eigen::MatrixXcd cz = g.C.adjoint() * z;
    Eigen::MatrixXcd w(cz.rows(), g.G.rows());
    w.noalias() = cz * g.G.adjoint();
    return w;
}

Eigen::MatrixXcd mf_scale(const Eigen::MatrixXcd& w, const ChartGrid& g) {
    Eigen::MatrixXcd out = w;
    for (Eigen::Index q = 0; q < out.cols(); ++q)
        for (Eigen::Index p = 0; p < out.rows(); ++p) {
            const double s = g.diag_a[p] * g.diag_g[q];
            out(p, q) = s > 0.0 ? out(p, q) / s : std::complex<double>(0.0);
        }
    return out;
}

}  // namespace

RangeAngleChart matched_filter_chart_from(const Eigen::MatrixXcd& z,
                                          std::shared_ptr<const ChartGrid> grid) {
    if (z.rows() != grid->C.rows() || z.cols() != grid->G.cols())
        throw ConfigError("coherent integration does not match the chart grid dimensions");
    RangeAngleChart chart;
    chart.values = mf_scale(project(z, *grid), *grid);
    chart.grid = std::move(grid);
    chart.method = ChartMethod::MatchedFilter;
    return chart;
}

RangeAngleChart matched_filter_chart(const ObservationGrid& obs,
                                     std::shared_ptr<const ChartGrid> grid, bool hamming) {
    return matched_filter_chart_from(coherent_integration(obs, hamming), std::move(grid));
}

OpCounts op_count_estimate(long n, long m, long i, long c_r, long c_phi, long n_iter) {
    if (n <= 0 || m <= 0 || i <= 0 || c_r <= 0 || c_phi <= 0 || n_iter < 0)
        throw ConfigError("op_count_estimate needs positive dimensions");
    OpCounts c;
    c.init = static_cast<std::uint64_t>(m * n * i + c_r * n * i + c_r * c_phi * i);
    c.per_iteration = static_cast<std::uint64_t>(c_r * c_r * c_phi + c_r * c_phi * c_phi);
    c.iterations = static_cast<std::uint64_t>(n_iter);
    return c;
}

namespace {

IstaResult run_ista(const Eigen::MatrixXcd& z, int n_symbols, std::shared_ptr<const ChartGrid> grid,
                    const IstaConfig& config, const RangeAngleChart* given_initial) {
    if (!(config.lambda >= 0.0)) throw ConfigError("ISTA lambda must be non-negative");
    if (!(config.beta_step > 0.0 && config.beta_step < 1.0))
        throw ConfigError("ISTA step factor must lie in (0, 1)");
    if (config.max_iter < 0) throw ConfigError("ISTA max_iter must be non-negative");
    const ChartGrid& g = *grid;
    if (z.rows() != g.C.rows() || z.cols() != g.G.cols())
        throw ConfigError("coherent integration does not match the chart grid dimensions");
    const auto n_sub = static_cast<std::uint64_t>(g.C.rows());
    const auto n_beam = static_cast<std::uint64_t>(g.G.cols());
    const auto c_r = static_cast<std::uint64_t>(g.n_range());
    const auto c_phi = static_cast<std::uint64_t>(g.n_angle());

    IstaResult res;
    res.ops.init = static_cast<std::uint64_t>(n_symbols) * n_sub * n_beam;  // coherent integration
    const Eigen::MatrixXcd w = project(z, g);
    res.ops.init += c_r * n_sub * n_beam + c_r * n_beam * c_phi;

    if (given_initial) {
        res.initial = *given_initial;
    } else if (g.ls_feasible()) {
        res.initial = ls_chart_from(z, grid);
        res.overhead_ops += c_r * n_sub * n_beam + c_r * n_beam * c_phi;
    } else {
        res.initial = matched_filter_chart_from(z, grid);
    }
    res.initial.grid = grid;

    res.lambda_abs = config.lambda_relative ? config.lambda * 2.0 * w.cwiseAbs().maxCoeff()
                                            : config.lambda;
    res.step = config.beta_step / (g.lambda_max_a * g.lambda_max_g);
    const double threshold = res.lambda_abs * res.step;
    const double z_energy = z.squaredNorm();

    auto objective = [&](const Eigen::MatrixXcd& b, const Eigen::MatrixXcd& abg) {
        return inner_re(b, abg) - 2.0 * inner_re(b, w) + z_energy +
               res.lambda_abs * b.cwiseAbs().sum();
    };

    Eigen::MatrixXcd b = res.initial.values;
    Eigen::MatrixXcd ab(c_r, c_phi), abg(c_r, c_phi), next(c_r, c_phi);
    res.ops.per_iteration = c_r * c_r * c_phi + c_r * c_phi * c_phi;
    std::uint64_t iteration_macs = 0;
    for (int it = 0; it < config.max_iter; ++it) {
        const auto t0 = std::chrono::steady_clock::now();
        ab.noalias() = g.A * b;
        abg.noalias() = ab * g.Gg;
        iteration_macs += static_cast<std::uint64_t>(g.A.rows() * g.A.cols() * b.cols()) +
                          static_cast<std::uint64_t>(ab.rows() * ab.cols() * g.Gg.cols());
        if (config.track_objective) res.objective.push_back(objective(b, abg));
        next = b - (2.0 * res.step) * (abg - w);
        kernels::soft_threshold_parallel(next, threshold);
        const double base = b.norm();
        const double diff = (next - b).norm();
        b.swap(next);
        ++res.iterations;
        res.iteration_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        const double change = base > 0.0 ? diff / base : (diff > 0.0 ? 1.0 : 0.0);
        if (change < config.tol) {
            res.converged = true;
            break;
        }
    }
    res.ops.iterations = static_cast<std::uint64_t>(res.iterations);
    if (res.iterations > 0 && iteration_macs != res.ops.per_iteration * res.ops.iterations)
        throw Error("ISTA operation count bookkeeping mismatch");
    if (config.track_objective) {
        ab.noalias() = g.A * b;
        abg.noalias() = ab * g.Gg;
        res.overhead_ops += res.ops.per_iteration;
        res.objective.push_back(objective(b, abg));
    }
    res.chart.values = std::move(b);
    res.chart.grid = std::move(grid);
    res.chart.method = ChartMethod::Ista;
    return res;
}

}  // namespace

IstaResult ista_chart_from(const Eigen::MatrixXcd& z, int n_symbols,
                           std::shared_ptr<const ChartGrid> grid, const IstaConfig& config) {
    return run_ista(z, n_symbols, std::move(grid), config, nullptr);
}

IstaResult ista_chart_from(const Eigen::MatrixXcd& z, int n_symbols,
                           std::shared_ptr<const ChartGrid> grid, const IstaConfig& config,
                           const RangeAngleChart& initial) {
    return run_ista(z, n_symbols, std::move(grid), config, &initial);
}

IstaResult ista_chart(const ObservationGrid& obs, std::shared_ptr<const ChartGrid> grid,
                      const IstaConfig& config) {
    return run_ista(coherent_integration(obs, config.hamming), obs.n_symbols(), std::move(grid),
                    config, nullptr);
}

double rss_of_detection(const RangeAngleChart& chart, int p, int q) {
    const double mag = std::abs(chart.values(p, q));
    if (mag == 0.0) return -std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(mag);
}

std::vector<Detection> detect_targets(const RangeAngleChart& chart, const DetectionConfig& config,
                                      const Pose& pose, const RangeAngleChart* rss_chart) {
    const ChartGrid& g = *chart.grid;
    const RangeAngleChart& rss_src = rss_chart ? *rss_chart : chart;
    const Eigen::MatrixXd mag = chart.values.cwiseAbs();
    const int c_r = static_cast<int>(mag.rows());
    const int c_phi = static_cast<int>(mag.cols());
    std::vector<Detection> out;
    if (mag.size() == 0 || config.max_targets <= 0) return out;
    const double peak = mag.maxCoeff();
    if (!(peak > 0.0)) return out;
    const double floor = peak * std::pow(10.0, -config.dyn_range_db / 20.0);

    struct Cell {
        double mag;
        int p, q;
    };
    std::vector<Cell> cand;
    for (int q = 0; q < c_phi; ++q) {
        for (int p = 0; p < c_r; ++p) {
            const double v = mag(p, q);
            if (!(v > 0.0) || v < floor) continue;
            bool is_max = true;
            for (int dq = -1; dq <= 1 && is_max; ++dq) {
                int qq = q + dq;
                if (qq < 0 || qq >= c_phi) {
                    if (!g.full_circle) continue;
                    qq = (qq + c_phi) % c_phi;
                }
                for (int dp = -1; dp <= 1; ++dp) {
                    if (dp == 0 && dq == 0) continue;
                    const int pp = p + dp;
                    if (pp < 0 || pp >= c_r) continue;
                    if (mag(pp, qq) > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) cand.push_back({v, p, q});
        }
    }
    std::sort(cand.begin(), cand.end(), [c_r](const Cell& a, const Cell& b) {
        if (a.mag != b.mag) return a.mag > b.mag;
        return a.p + a.q * c_r < b.p + b.q * c_r;
    });

    const double d_ant = pose.antenna_separation();
    for (const Cell& c : cand) {
        if (static_cast<int>(out.size()) >= config.max_targets) break;
        if (!(kSpeedOfLight * g.delays[c.p] > d_ant)) continue;
        bool excluded = false;
        for (const Detection& d : out) {
            if (std::abs(g.range_of(c.p) - g.range_of(d.p)) < config.min_sep_range &&
                std::abs(wrap_angle(g.angles[c.q] - g.angles[d.q])) < config.min_sep_angle) {
                excluded = true;
                break;
            }
        }
        if (excluded) continue;
        Detection d;
        d.pose_index = pose.index;
        d.angle = g.angles[c.q];
        d.delay = g.delays[c.p];
        d.range = (cell_to_cartesian(pose, d.delay, d.angle) - pose.ue_position).norm();
        d.amplitude = rss_src.values(c.p, c.q);
        d.rss = rss_of_detection(rss_src, c.p, c.q);
        d.p = c.p;
        d.q = c.q;
        out.push_back(d);
    }
    return out;
}

}  // namespace mmwmap
