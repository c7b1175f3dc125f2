#include "mmwmap/selection.hpp"

#include <cmath>
#include <limits>

#include "mmwmap/errors.hpp"

namespace mmwmap {

namespace {

constexpr double kMinH1Weight = 2.0;

double log_normal_pdf(double x, double mean, double sigma) {
    const double z = (x - mean) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * kPi);
}

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

void PathlossModelState::validate() const {
    if (!(sigma_h0 > 0.0) || !(sigma_h1 > 0.0)) throw ConfigError("pathloss sigmas must be positive");
    if (!(prior_h0 >= 0.0 && prior_h0 <= 1.0)) throw ConfigError("prior must lie in [0, 1]");
}

EmResult em_fit(const std::vector<RssSample>& samples, const PathlossModelState& init,
                int max_iter, double tol) {
    init.validate();
    EmResult res;
    res.state = init;
    const std::size_t n = samples.size();
    res.posterior_h0.assign(n, init.prior_h0);
    for (const auto& s : samples)
        if (!(s.range > 0.0)) throw ConfigError("EM samples need positive ranges");
    if (n < 2) return res;

    std::vector<double> x(n);  // -10 log10 d
    for (std::size_t k = 0; k < n; ++k) x[k] = -10.0 * std::log10(samples[k].range);

    PathlossModelState& st = res.state;
    const double log_p0 = std::log(st.prior_h0);
    const double log_p1 = std::log(1.0 - st.prior_h0);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        // E-step
        double ll = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double y = samples[k].rss_db;
            const double l0 = log_p0 + log_normal_pdf(y, st.beta_h0 + 2.0 * x[k], st.sigma_h0);
            const double l1 = log_p1 + log_normal_pdf(y, st.beta_h1 + st.alpha_h1 * x[k], st.sigma_h1);
            const double lse = log_sum_exp(l0, l1);
            ll += lse;
            res.posterior_h0[k] = std::exp(l0 - lse);
        }
        res.log_likelihood.push_back(ll);
        ++res.iterations;
        if (std::abs(ll - prev_ll) <= tol * (1.0 + std::abs(ll))) {
            res.converged = true;
            break;
        }
        prev_ll = ll;

        // M-step: H0 intercept with the slope fixed.
        double w0 = 0.0, acc0 = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            w0 += res.posterior_h0[k];
            acc0 += res.posterior_h0[k] * (samples[k].rss_db - 2.0 * x[k]);
        }
        if (w0 > 0.0) st.beta_h0 = acc0 / w0;

        // H1 intercept and slope by weighted regression on -10 log10 d.
        double w1 = 0.0, sx = 0.0, sy = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double w = 1.0 - res.posterior_h0[k];
            w1 += w;
            sx += w * x[k];
            sy += w * samples[k].rss_db;
        }
        if (w1 < kMinH1Weight) {
            res.alpha_frozen = true;
            continue;
        }
        const double mx = sx / w1, my = sy / w1;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double w = 1.0 - res.posterior_h0[k];
            sxx += w * (x[k] - mx) * (x[k] - mx);
            sxy += w * (x[k] - mx) * (samples[k].rss_db - my);
        }
        if (sxx <= 1e-12 * w1 * (1.0 + mx * mx)) {
            res.alpha_frozen = true;
            st.beta_h1 = my - st.alpha_h1 * mx;
        } else {
            st.alpha_h1 = sxy / sxx;
            st.beta_h1 = my - st.alpha_h1 * mx;
        }
    }
    return res;
}

std::vector<LabeledDetection> select(const std::vector<Detection>& detections,
                                     const std::vector<double>& posteriors, double p_th,
                                     double d_th) {
    if (posteriors.size() != detections.size())
        throw ConfigError("selection needs one posterior per detection");
    std::vector<LabeledDetection> out;
    out.reserve(detections.size());
    for (std::size_t k = 0; k < detections.size(); ++k) {
        LabeledDetection l;
        l.detection = detections[k];
        l.posterior_h0 = posteriors[k];
        l.selected = posteriors[k] >= p_th || detections[k].range <= d_th;
        out.push_back(l);
    }
    return out;
}

MeasurementSelector::MeasurementSelector(const PathlossModelState& init,
                                         const SelectionConfig& config)
    : state_(init), config_(config) {
    state_.validate();
}

std::vector<LabeledDetection> MeasurementSelector::process(const std::vector<Detection>& detections) {
    // Detections without a finite RSS cannot be scored; they only pass the
    // distance clause of the rule.
    std::vector<double> posteriors(detections.size(), 0.0);
    std::vector<std::size_t> scored;
    for (std::size_t k = 0; k < detections.size(); ++k) {
        if (!std::isfinite(detections[k].rss)) continue;
        history_.push_back({detections[k].rss, detections[k].range});
        scored.push_back(k);
    }
    if (!scored.empty()) {
        const EmResult fit = em_fit(history_, state_, config_.max_iter, config_.tol);
        if (history_.size() >= 2) state_ = fit.state;
        alpha_frozen_ = alpha_frozen_ || fit.alpha_frozen;
        const std::size_t base = history_.size() - scored.size();
        for (std::size_t j = 0; j < scored.size(); ++j)
            posteriors[scored[j]] = fit.posterior_h0[base + j];
    }
    return select(detections, posteriors, config_.p_th, config_.d_th);
}

}  // namespace mmwmap
