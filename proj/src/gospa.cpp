#include "mmwmap/gospa.hpp"

#include <algorithm>
#include <cmath>

#include "mmwmap/assignment.hpp"
#include "mmwmap/errors.hpp"

namespace mmwmap {

void GospaConfig::validate() const {
    if (!(cutoff > 0.0)) throw ConfigError("GOSPA cutoff must be positive");
    if (!(order >= 1.0)) throw ConfigError("GOSPA order must be >= 1");
    if (alpha != 2.0) throw ConfigError("GOSPA alpha is fixed at 2");
}

GospaResult gospa(const std::vector<Vec2>& estimates, const std::vector<Vec2>& truth,
                  const GospaConfig& config) {
    config.validate();
    const double cp = std::pow(config.cutoff, config.order);
    const auto n_e = static_cast<Eigen::Index>(estimates.size());
    const auto n_t = static_cast<Eigen::Index>(truth.size());
    Eigen::MatrixXd cost(n_t, n_e);
    for (Eigen::Index a = 0; a < n_t; ++a)
        for (Eigen::Index b = 0; b < n_e; ++b)
            cost(a, b) = std::pow(std::min((truth[a] - estimates[b]).norm(), config.cutoff), config.order);

    GospaResult r;
    int assigned_truth = 0;
    const std::vector<int> assign = solve_assignment(cost);
    for (Eigen::Index a = 0; a < n_t; ++a) {
        const int b = assign.empty() ? -1 : assign[a];
        if (b < 0) continue;
        if ((truth[a] - estimates[b]).norm() < config.cutoff) {
            r.localization += cost(a, b);
            ++assigned_truth;
        }
    }
    r.n_assigned = assigned_truth;
    r.missed = cp / config.alpha * static_cast<double>(n_t - assigned_truth);
    r.false_targets = cp / config.alpha * static_cast<double>(n_e - assigned_truth);
    r.total = std::pow(r.localization + r.missed + r.false_targets, 1.0 / config.order);
    return r;
}

}  // namespace mmwmap
