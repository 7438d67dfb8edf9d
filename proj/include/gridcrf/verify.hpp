#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridcrf/learning.hpp"
#include "gridcrf/model.hpp"

namespace gridcrf {
namespace verify {

struct Check {
    std::string name;
    double exact = 0.0;
    double empirical = 0.0;
    double std_error = 0.0;
    double deviation = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    bool low_precision = false;
};

struct Report {
    std::vector<Check> checks;
    bool all_pass = true;
    bool low_precision = false;
};

// Central finite differences of pl_objective, the gradient oracle.
WeightsGrad fd_pl_gradient(const Dataset& data, const Weights& weights,
                           const BlockPartition* partition = nullptr, double l2_weight = 0.0,
                           double step = 1e-5);

// Fixed desk-scale identity checks on models derived from `seed`:
//   gumbelmax  argmax histogram vs. the exact distribution (3-chain, K=3)
//   theorem1   local-maximum frequency vs. block-conditional products
//              (2x2 singletons; 2x3 with size-2 blocks)
//   zb         expected local-maxima count: global partition = 1, singleton
//              value vs. Monte Carlo, and >= 1
//   gradcheck  analytic PL gradient vs. finite differences
// `which` is one of the above or "all".
Report run_checks(const std::string& which, std::uint64_t draws, std::uint64_t seed);

} // namespace verify
} // namespace gridcrf
