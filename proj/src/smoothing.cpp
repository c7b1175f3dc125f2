#include "mmwmap/smoothing.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "mmwmap/errors.hpp"

namespace mmwmap {

namespace {

constexpr double kJitter = 1e-9;

}  // namespace

SmoothedTrack imm_smooth(const Track& track, const TrackerConfig& config) {
    if (track.history.empty()) throw ConfigError("cannot smooth a track without steps");
    const auto& h = track.history;
    const std::size_t n = h.size();
    SmoothedTrack out;
    out.track_id = track.id;
    out.steps.resize(n);

    auto finish_step = [&](std::size_t k) {
        auto& s = out.steps[k];
        s.step = h[k].step;
        s.measured = h[k].measured;
        combine_position(s.models, s.mu, s.position, s.position_cov);
    };

    out.steps[n - 1].models = h[n - 1].filtered;
    out.steps[n - 1].mu = h[n - 1].mu;
    finish_step(n - 1);

    const Eigen::Matrix2d& p = config.transition;
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    for (std::size_t kk = n - 1; kk-- > 0;) {
        const auto& cur = h[kk];
        const auto& next_s = out.steps[kk + 1];
        auto& s = out.steps[kk];

        std::array<Gaussian, kNumModels> pred;
        std::array<Eigen::MatrixXd, kNumModels> fmat;
        for (int j = 0; j < kNumModels; ++j) {
            const MotionModel model = config.model(j);
            fmat[j] = model.transition(config.dt);
            pred[j].mean = fmat[j] * cur.filtered[j].mean;
            pred[j].cov = fmat[j] * cur.filtered[j].cov * fmat[j].transpose() + model.process_noise(config.dt);
        }

        // post(j, i) = P(model j at k | model i at k+1, all data): forward
        // transition, filtered probability, and how well model j's one-step
        // prediction explains the smoothed position of model i at k+1.
        Eigen::Matrix2d post = Eigen::Matrix2d::Zero();
        for (int i = 0; i < kNumModels; ++i) {
            Eigen::Vector2d logq;
            for (int j = 0; j < kNumModels; ++j) {
                const double prior = p(j, i) * cur.mu[j];
                if (!(prior > 0.0)) {
                    logq[j] = kNegInf;
                    continue;
                }
                const Vec2 r = next_s.models[i].mean.head<2>() - pred[j].mean.head<2>();
                const Eigen::Matrix2d c =
                    pred[j].cov.topLeftCorner<2, 2>() + next_s.models[i].cov.topLeftCorner<2, 2>();
                Eigen::LLT<Eigen::Matrix2d> lc(c);
                const double loglik = lc.info() == Eigen::Success
                                          ? -0.5 * r.dot(lc.solve(r)) - std::log(lc.matrixL().determinant())
                                          : 0.0;
                logq[j] = std::log(prior) + loglik;
            }
            const double m = logq.maxCoeff();
            if (!std::isfinite(m)) continue;
            Eigen::Vector2d q;
            for (int j = 0; j < kNumModels; ++j) q[j] = std::exp(logq[j] - m);
            post.col(i) = q / q.sum();
        }

        Eigen::Vector2d mu;
        for (int j = 0; j < kNumModels; ++j) mu[j] = post.row(j).dot(next_s.mu);

        for (int j = 0; j < kNumModels; ++j) {
            const Gaussian& filt = cur.filtered[j];
            std::array<double, kNumModels> w{};
            double wsum = 0.0;
            for (int i = 0; i < kNumModels; ++i) {
                w[i] = post(j, i) * next_s.mu[i];
                wsum += w[i];
            }
            Gaussian target;
            if (wsum <= 0.0) {
                target = pred[j];
            } else {
                const int dim = static_cast<int>(filt.mean.size());
                target.mean = Eigen::VectorXd::Zero(dim);
                target.cov = Eigen::MatrixXd::Zero(dim, dim);
                std::array<Gaussian, kNumModels> conv;
                for (int i = 0; i < kNumModels; ++i) {
                    conv[i] = convert_state(next_s.models[i], dim, pred[j]);
                    target.mean += (w[i] / wsum) * conv[i].mean;
                }
                for (int i = 0; i < kNumModels; ++i) {
                    const Eigen::VectorXd d = conv[i].mean - target.mean;
                    target.cov += (w[i] / wsum) * (conv[i].cov + d * d.transpose());
                }
            }

            Eigen::LLT<Eigen::MatrixXd> llt(pred[j].cov);
            if (llt.info() != Eigen::Success) {
                out.regularized = true;
                llt.compute(pred[j].cov +
                            kJitter * Eigen::MatrixXd::Identity(pred[j].cov.rows(), pred[j].cov.cols()));
            }
            // G = P F^T Pp^-1, computed as (Pp^-1 F P)^T.
            const Eigen::MatrixXd gain = llt.solve(fmat[j] * filt.cov).transpose();
            Gaussian sm;
            sm.mean = filt.mean + gain * (target.mean - pred[j].mean);
            sm.cov = filt.cov + gain * (target.cov - pred[j].cov) * gain.transpose();
            sm.cov = 0.5 * (sm.cov + sm.cov.transpose()).eval();
            s.models[j] = std::move(sm);
        }

        const double total = mu.sum();
        s.mu = total > 0.0 ? Eigen::Vector2d(mu / total) : cur.mu;
        finish_step(kk);
    }
    return out;
}

EnvironmentMap extract_map(const std::vector<SmoothedTrack>& tracks, double max_eigenvalue,
                           bool measured_only) {
    EnvironmentMap map;
    for (const auto& t : tracks) {
        for (const auto& s : t.steps) {
            if (measured_only && !s.measured) continue;
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(s.position_cov, Eigen::EigenvaluesOnly);
            if (!(es.eigenvalues().maxCoeff() <= max_eigenvalue)) continue;
            map.push_back({s.position, s.position_cov, t.track_id, s.step});
        }
    }
    return map;
}

}  // namespace mmwmap
