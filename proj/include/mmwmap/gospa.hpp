#pragma once

#include <vector>

#include "mmwmap/geometry.hpp"

namespace mmwmap {

struct GospaConfig {
    double cutoff = 2.0;  ///< c, meters
    double order = 2.0;   ///< p
    double alpha = 2.0;   ///< fixed
    void validate() const;
};

/// The decomposition parts are in p-th power units and add up to total^p.
struct GospaResult {
    double total = 0.0;
    double localization = 0.0;
    double missed = 0.0;
    double false_targets = 0.0;
    int n_assigned = 0;
};

GospaResult gospa(const std::vector<Vec2>& estimates, const std::vector<Vec2>& truth,
                  const GospaConfig& config = {});

}  // namespace mmwmap
