#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gridcrf/model.hpp"
#include "gridcrf/perturb.hpp"

namespace gridcrf {
namespace oracle {

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EnumerationBudget {
    std::uint64_t max_configs = 1ull << 20;
};

// K^num_nodes, or throws BudgetExceeded.
std::uint64_t config_count(const GridModel& model, const EnumerationBudget& budget = {});

// Lexicographic enumeration index (node 0 most significant) <-> labeling.
std::uint64_t index_of_labeling(const Labeling& y, int num_labels);
Labeling labeling_from_index(std::uint64_t index, int num_nodes, int num_labels);

// log Z by log-sum-exp over every labeling.
double exact_partition(const GridModel& model, const Weights& weights,
                       const EnumerationBudget& budget = {});

// Normalized probability of every labeling, lexicographic order.
std::vector<double> exact_distribution(const GridModel& model, const Weights& weights,
                                       const EnumerationBudget& budget = {});

// Per-node per-label marginals, row-major num_nodes x K.
std::vector<double> exact_marginals(const GridModel& model, const Weights& weights,
                                    const EnumerationBudget& budget = {});

// i.i.d. draws by inverse CDF over the enumerated distribution.
std::vector<Labeling> exact_sample(const GridModel& model, const Weights& weights,
                                   const GumbelSource& source, size_t n,
                                   const EnumerationBudget& budget = {});

// Enumeration argmax of the total log-potential; lexicographic-lowest ties.
Labeling exact_map(const GridModel& model, const Weights& weights,
                   const EnumerationBudget& budget = {});

// Perturbed totals theta(y) + sum_b eps(y_b) for every labeling.
std::vector<double> perturbed_totals(const GridModel& model, const Weights& weights,
                                     const PerturbationTable& table,
                                     const EnumerationBudget& budget = {});

// mask[i] = 1 iff labeling i is a block-coordinate-wise maximum of the
// perturbed total (ties count as maximal).
std::vector<std::uint8_t> local_maxima_mask(const GridModel& model, const Weights& weights,
                                            const PerturbationTable& table,
                                            const EnumerationBudget& budget = {});

std::vector<Labeling> enumerate_local_maxima(const GridModel& model, const Weights& weights,
                                             const PerturbationTable& table,
                                             const EnumerationBudget& budget = {});

// Expected number of local maxima: sum over labelings of the product of
// block conditionals.
double expected_local_maxima(const GridModel& model, const Weights& weights, const BlockPartition& partition,
                const EnumerationBudget& budget = {});

struct CheckReport {
    std::string name;
    double exact = 0.0;     // worst-deviation exact value (per-config checks)
    double empirical = 0.0; // matching empirical frequency
    double std_error = 0.0;
    double max_abs_deviation = 0.0;
    double tolerance = 0.0;
    std::uint64_t draws = 0;
    bool pass = false;
    bool low_precision = false; // 3*SE above tolerance: too few draws to resolve
};

// Gumbel-Max validator: perturb the totals with one i.i.d. Gumbel per
// labeling, take the argmax, and compare the argmax histogram with the
// exact distribution.
CheckReport gumbelmax_check(const GridModel& model, const Weights& weights, std::uint64_t draws,
                            const GumbelSource& source, double tolerance = 0.01,
                            const EnumerationBudget& budget = {});

// Frequency of y being a local maximum of the perturbed total vs. the
// product of its block conditionals. Draw d uses stream_id + d.
CheckReport local_membership_check(const GridModel& model, const Weights& weights,
                           const BlockPartition& partition, const Labeling& y,
                           std::uint64_t draws, const GumbelSource& source,
                           double tolerance = 0.01, const EnumerationBudget& budget = {});

// Same Monte Carlo run shared across every labeling; also reports the mean
// local-maxima count, the Monte Carlo side of expected_local_maxima.
struct LocalMembershipAllReport {
    std::vector<CheckReport> per_labeling;
    double mean_local_maxima = 0.0;
    double mean_local_maxima_se = 0.0;
};
LocalMembershipAllReport local_membership_check_all(const GridModel& model, const Weights& weights,
                                     const BlockPartition& partition, std::uint64_t draws,
                                     const GumbelSource& source, double tolerance = 0.01,
                                     const EnumerationBudget& budget = {});

} // namespace oracle
} // namespace gridcrf
