#include "mmwmap/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "mmwmap/assignment.hpp"
#include "mmwmap/errors.hpp"

namespace mmwmap {

Eigen::MatrixXd MotionModel::transition(double dt) const {
    if (kind == ModelKind::Cwnv) return Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd f = Eigen::MatrixXd::Identity(4, 4);
    f(0, 2) = dt;
    f(1, 3) = dt;
    return f;
}

Eigen::MatrixXd MotionModel::process_noise(double dt) const {
    if (kind == ModelKind::Cwnv) return q_c * dt * Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(4, 4);
    const double a = dt * dt * dt / 3.0, b = dt * dt / 2.0;
    for (int k = 0; k < 2; ++k) {
        q(k, k) = a;
        q(k, k + 2) = b;
        q(k + 2, k) = b;
        q(k + 2, k + 2) = dt;
    }
    return q_c * q;
}

void TrackerConfig::validate() const {
    for (int i = 0; i < 2; ++i) {
        if ((transition.row(i).array() < 0.0).any() ||
            std::abs(transition.row(i).sum() - 1.0) > 1e-12)
            throw ConfigError("model transition matrix must be row-stochastic");
    }
    if ((mu0.array() < 0.0).any() || std::abs(mu0.sum() - 1.0) > 1e-12)
        throw ConfigError("initial model probabilities must sum to one");
    Eigen::LLT<Eigen::Matrix2d> llt(R);
    if (llt.info() != Eigen::Success || !R.isApprox(R.transpose()))
        throw ConfigError("measurement covariance must be symmetric positive definite");
    if (!(gate_confidence > 0.0 && gate_confidence < 1.0))
        throw ConfigError("gate confidence must lie in (0, 1)");
    if (max_misses < 0) throw ConfigError("max_misses must be non-negative");
    if (!(init_position_var > 0.0) || !(init_velocity_var > 0.0))
        throw ConfigError("initial variances must be positive");
    if (!(qc_cwnv >= 0.0) || !(qc_cwna >= 0.0)) throw ConfigError("process noise must be non-negative");
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
}

MotionModel TrackerConfig::model(int j) const {
    return j == 0 ? MotionModel{ModelKind::Cwnv, qc_cwnv} : MotionModel{ModelKind::Cwna, qc_cwna};
}

double TrackerConfig::gate_threshold() const { return -2.0 * std::log(1.0 - gate_confidence); }

std::string to_string(TrackEvent e) {
    switch (e) {
        case TrackEvent::Spawn: return "spawn";
        case TrackEvent::Update: return "update";
        case TrackEvent::Coast: return "coast";
        case TrackEvent::Drop: return "drop";
    }
    return "?";
}

// ------------------------------------------------------------ measurement

namespace {

constexpr double kDegenerate = 1e-12;

void check_distinct(const Vec2& p, const Pose& pose) {
    if ((p - pose.ue_position).norm() < kDegenerate || (p - pose.tx_position).norm() < kDegenerate ||
        (p - pose.rx_position).norm() < kDegenerate)
        throw GeometryError("degenerate geometry: scatterer coincides with the UE or an antenna");
}

}  // namespace

Eigen::Vector2d measurement_h(const Vec2& scatterer, const Pose& pose) {
    check_distinct(scatterer, pose);
    const Vec2 d = scatterer - pose.ue_position;
    return {std::atan2(d.y(), d.x()),
            0.5 * ((scatterer - pose.tx_position).norm() + (scatterer - pose.rx_position).norm())};
}

Eigen::Matrix2d measurement_jacobian(const Vec2& scatterer, const Pose& pose) {
    check_distinct(scatterer, pose);
    const Vec2 d = scatterer - pose.ue_position;
    const double r2 = d.squaredNorm();
    const Vec2 ut = (scatterer - pose.tx_position).normalized();
    const Vec2 ur = (scatterer - pose.rx_position).normalized();
    Eigen::Matrix2d j;
    j << -d.y() / r2, d.x() / r2, 0.5 * (ut.x() + ur.x()), 0.5 * (ut.y() + ur.y());
    return j;
}

Vec2 coarse_position(const Detection& detection, const Pose& pose) {
    if (!(detection.range > 0.0)) throw GeometryError("detection range must be positive");
    const double phi = detection.angle + pose.orientation;
    return pose.ue_position + detection.range * Vec2(std::cos(phi), std::sin(phi));
}

Eigen::Vector2d detection_measurement(const Detection& detection, const Pose& pose) {
    return {wrap_angle(detection.angle + pose.orientation), 0.5 * kSpeedOfLight * detection.delay};
}

// ------------------------------------------------------------ EKF

namespace {

void symmetrize(Eigen::MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

}  // namespace

Gaussian ekf_predict(const Gaussian& g, const MotionModel& model, double dt) {
    const Eigen::MatrixXd f = model.transition(dt);
    Gaussian out;
    out.mean = f * g.mean;
    out.cov = f * g.cov * f.transpose() + model.process_noise(dt);
    symmetrize(out.cov);
    return out;
}

double ekf_update(Gaussian& g, const Eigen::Vector2d& z, const Eigen::Matrix2d& R,
                  const Pose& pose) {
    const int dim = static_cast<int>(g.mean.size());
    const Vec2 pos = g.mean.head<2>();
    Eigen::Vector2d nu = z - measurement_h(pos, pose);
    nu(0) = wrap_angle(nu(0));
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, dim);
    h.leftCols<2>() = measurement_jacobian(pos, pose);
    const Eigen::Matrix2d s = h * g.cov * h.transpose() + R;
    const Eigen::Matrix2d s_inv = s.inverse();
    const Eigen::MatrixXd k = g.cov * h.transpose() * s_inv;
    g.mean += k * nu;
    const Eigen::MatrixXd ikh = Eigen::MatrixXd::Identity(dim, dim) - k * h;
    g.cov = ikh * g.cov * ikh.transpose() + k * R * k.transpose();
    symmetrize(g.cov);
    return -0.5 * nu.dot(s_inv * nu) - 0.5 * std::log((2.0 * kPi) * (2.0 * kPi) * s.determinant());
}

Gaussian convert_state(const Gaussian& g, int dim, const Gaussian& velocity_source) {
    const int from = static_cast<int>(g.mean.size());
    if (from == dim) return g;
    Gaussian out;
    if (dim == 2) {
        out.mean = g.mean.head(2);
        out.cov = g.cov.topLeftCorner(2, 2);
        return out;
    }
    out.mean.resize(4);
    out.mean.head(2) = g.mean;
    out.mean.tail(2) = velocity_source.mean.tail(2);
    out.cov = Eigen::MatrixXd::Zero(4, 4);
    out.cov.topLeftCorner(2, 2) = g.cov;
    out.cov.bottomRightCorner(2, 2) = velocity_source.cov.bottomRightCorner(2, 2);
    return out;
}

void combine_position(const std::array<Gaussian, kNumModels>& models, const Eigen::Vector2d& mu,
                      Vec2& mean, Eigen::Matrix2d& cov) {
    mean.setZero();
    for (int j = 0; j < kNumModels; ++j) mean += mu[j] * models[j].mean.head<2>();
    cov.setZero();
    for (int j = 0; j < kNumModels; ++j) {
        const Vec2 d = models[j].mean.head<2>() - mean;
        cov += mu[j] * (models[j].cov.topLeftCorner<2, 2>() + d * d.transpose());
    }
    cov = 0.5 * (cov + cov.transpose()).eval();
}

Vec2 Track::position() const {
    Vec2 m;
    Eigen::Matrix2d c;
    combine_position(models, mu, m, c);
    return m;
}

Eigen::Matrix2d Track::position_cov() const {
    Vec2 m;
    Eigen::Matrix2d c;
    combine_position(models, mu, m, c);
    return c;
}

// ------------------------------------------------------------ tracker

namespace {

struct Predicted {
    std::array<Gaussian, kNumModels> models;
    Eigen::Vector2d c;
    Vec2 position;
    Eigen::Matrix2d position_cov;
};

Predicted mix_and_predict(const Track& t, const TrackerConfig& cfg) {
    Predicted out;
    out.c = cfg.transition.transpose() * t.mu;
    for (int j = 0; j < kNumModels; ++j) {
        const int dim = cfg.model(j).dim();
        Gaussian mixed;
        if (out.c[j] <= 0.0) {
            mixed = t.models[j];
        } else {
            mixed.mean = Eigen::VectorXd::Zero(dim);
            mixed.cov = Eigen::MatrixXd::Zero(dim, dim);
            std::array<Gaussian, kNumModels> conv;
            std::array<double, kNumModels> w{};
            for (int i = 0; i < kNumModels; ++i) {
                w[i] = cfg.transition(i, j) * t.mu[i] / out.c[j];
                conv[i] = convert_state(t.models[i], dim, t.models[j]);
                mixed.mean += w[i] * conv[i].mean;
            }
            for (int i = 0; i < kNumModels; ++i) {
                const Eigen::VectorXd d = conv[i].mean - mixed.mean;
                mixed.cov += w[i] * (conv[i].cov + d * d.transpose());
            }
        }
        out.models[j] = ekf_predict(mixed, cfg.model(j), cfg.dt);
    }
    combine_position(out.models, out.c, out.position, out.position_cov);
    return out;
}

bool finite(const Gaussian& g) { return g.mean.allFinite() && g.cov.allFinite(); }

TrackLogRow log_row(int step, const Track& t, TrackEvent e, int det) {
    TrackLogRow r;
    r.step = step;
    r.track_id = t.id;
    combine_position(t.models, t.mu, r.position, r.cov);
    r.mu_cwnv = t.mu[0];
    r.mu_cwna = t.mu[1];
    r.matched_detection = det;
    r.event = e;
    return r;
}

TrackStep snapshot(int step, const Track& t, const Eigen::Vector2d& c, TrackEvent e, int det,
                   bool measured) {
    TrackStep s;
    s.step = step;
    s.filtered = t.models;
    s.mu = t.mu;
    s.mu_predicted = c;
    combine_position(t.models, t.mu, s.position, s.position_cov);
    s.event = e;
    s.matched_detection = det;
    s.measured = measured;
    return s;
}

}  // namespace

Tracker::Tracker(const TrackerConfig& config) : config_(config) { config_.validate(); }

Track Tracker::spawn(int step_index, const Pose& pose, const Detection& d, int det_index) {
    Track t;
    t.id = next_id_++;
    const Vec2 p = coarse_position(d, pose);
    t.models[0].mean = p;
    t.models[0].cov = config_.init_position_var * Eigen::MatrixXd::Identity(2, 2);
    t.models[1].mean = Eigen::VectorXd::Zero(4);
    t.models[1].mean.head(2) = p;
    t.models[1].cov = Eigen::MatrixXd::Zero(4, 4);
    t.models[1].cov.diagonal() << config_.init_position_var, config_.init_position_var,
        config_.init_velocity_var, config_.init_velocity_var;
    const Eigen::Vector2d z = detection_measurement(d, pose);
    for (auto& m : t.models) ekf_update(m, z, config_.R, pose);
    for (const auto& m : t.models)
        if (!finite(m)) throw TrackingError("non-finite state after spawn", t.id);
    t.mu = config_.mu0;
    t.spawn_ue = pose.ue_position;
    t.spawn_measurement = p;
    t.history.push_back(snapshot(step_index, t, config_.mu0, TrackEvent::Spawn, det_index, true));
    return t;
}

void Tracker::retire(Track& t) {
    while (!t.history.empty() && t.history.back().event == TrackEvent::Coast) t.history.pop_back();
    done_.push_back(std::move(t));
}

StepReport Tracker::step(int step_index, const Pose& pose, const std::vector<Detection>& detections) {
    StepReport report;
    const bool have_velocity = have_prev_pose_;
    const Vec2 v_ue = have_velocity ? Vec2((pose.ue_position - prev_ue_) / config_.dt) : Vec2::Zero();
    prev_ue_ = pose.ue_position;
    have_prev_pose_ = true;

    // CWNA velocity from the UE motion, projected onto the wall implied by
    // the first measurement.
    if (config_.init_velocity_from_ue && have_velocity) {
        for (Track& t : live_) {
            if (t.age != 1 || t.velocity_initialized) continue;
            const Vec2 u = t.spawn_measurement - t.spawn_ue;
            if (u.norm() > 0.0) {
                const Vec2 n = u.normalized();
                t.models[1].mean.tail(2) = v_ue - v_ue.dot(n) * n;
            }
            t.velocity_initialized = true;
        }
    }

    std::vector<Predicted> pred;
    pred.reserve(live_.size());
    for (const Track& t : live_) pred.push_back(mix_and_predict(t, config_));

    std::vector<Vec2> coarse;
    coarse.reserve(detections.size());
    for (const auto& d : detections) coarse.push_back(coarse_position(d, pose));

    const auto n_t = static_cast<Eigen::Index>(live_.size());
    const auto n_d = static_cast<Eigen::Index>(detections.size());
    Eigen::MatrixXd d2(n_t, n_d);
    for (Eigen::Index a = 0; a < n_t; ++a) {
        Eigen::LDLT<Eigen::Matrix2d> ldlt(pred[a].position_cov);
        for (Eigen::Index b = 0; b < n_d; ++b) {
            const Vec2 r = coarse[b] - pred[a].position;
            d2(a, b) = r.dot(ldlt.solve(r));
            if (!std::isfinite(d2(a, b)) || d2(a, b) < 0.0) d2(a, b) = std::numeric_limits<double>::max() / 4;
        }
    }
    const std::vector<int> assign = solve_assignment(d2.cwiseMax(0.0).cwiseSqrt());
    const double gate = config_.gate_threshold();

    std::vector<char> det_used(detections.size(), 0);
    std::vector<Track> keep;
    for (Eigen::Index a = 0; a < n_t; ++a) {
        Track& t = live_[a];
        Predicted& pr = pred[a];
        const int b = a < static_cast<Eigen::Index>(assign.size()) ? assign[a] : -1;
        if (b >= 0 && d2(a, b) > gate) {
            report.dropped.push_back(t.id);
            Track tmp = t;
            tmp.models = pr.models;
            tmp.mu = pr.c;
            report.log.push_back(log_row(step_index, tmp, TrackEvent::Drop, -1));
            retire(t);
            continue;
        }
        t.models = pr.models;
        ++t.age;
        if (b >= 0) {
            det_used[b] = 1;
            const Eigen::Vector2d z = detection_measurement(detections[b], pose);
            Eigen::Vector2d logw;
            for (int j = 0; j < kNumModels; ++j) {
                const double ll = ekf_update(t.models[j], z, config_.R, pose);
                if (!finite(t.models[j])) throw TrackingError("non-finite state after update", t.id);
                logw[j] = pr.c[j] > 0.0 ? std::log(pr.c[j]) + ll : -std::numeric_limits<double>::infinity();
            }
            const double m = logw.maxCoeff();
            if (std::isfinite(m)) {
                // std::exp keeps exp(-inf) == 0; the vectorized Eigen exp
                // clamps it to a denormal.
                Eigen::Vector2d w;
                for (int j = 0; j < kNumModels; ++j) w[j] = std::exp(logw[j] - m);
                t.mu = w / w.sum();
            } else {
                t.mu = pr.c;
            }
            t.misses = 0;
            report.matches.emplace_back(t.id, b);
            t.history.push_back(snapshot(step_index, t, pr.c, TrackEvent::Update, b, true));
            report.log.push_back(log_row(step_index, t, TrackEvent::Update, b));
            keep.push_back(std::move(t));
        } else {
            t.mu = pr.c;
            ++t.misses;
            t.history.push_back(snapshot(step_index, t, pr.c, TrackEvent::Coast, -1, false));
            if (t.misses > config_.max_misses) {
                report.dropped.push_back(t.id);
                report.log.push_back(log_row(step_index, t, TrackEvent::Drop, -1));
                retire(t);
            } else {
                report.coasted.push_back(t.id);
                report.log.push_back(log_row(step_index, t, TrackEvent::Coast, -1));
                keep.push_back(std::move(t));
            }
        }
    }
    for (std::size_t b = 0; b < detections.size(); ++b) {
        if (det_used[b]) continue;
        Track t = spawn(step_index, pose, detections[b], static_cast<int>(b));
        report.spawned.push_back(t.id);
        report.log.push_back(log_row(step_index, t, TrackEvent::Spawn, static_cast<int>(b)));
        keep.push_back(std::move(t));
    }
    live_ = std::move(keep);
    return report;
}

std::vector<Track> Tracker::finish() {
    for (Track& t : live_) retire(t);
    live_.clear();
    std::vector<Track> out = std::move(done_);
    done_.clear();
    std::sort(out.begin(), out.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
    return out;
}

}  // namespace mmwmap
