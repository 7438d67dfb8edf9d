#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gridcrf/model.hpp"

namespace gridcrf {

// Labeled training pairs sharing num_labels, d_unary and d_pairwise (grid
// shapes may differ).
struct Dataset {
    std::vector<std::pair<GridModel, Labeling>> items;

    void validate() const;
};

struct TrainConfig {
    double learning_rate = 0.05;
    int max_iters = 500;
    double l2_weight = 0.0;
    int batch_size = 0; // 0: full batch
    double grad_tol = 1e-6;
    std::uint64_t seed = 0;
    bool freeze_pairwise = false;
    int threads = 1;

    void validate() const;
};

struct TrainDivergence : std::runtime_error {
    int iteration;
    explicit TrainDivergence(int iter)
        : std::runtime_error("training diverged (non-finite objective) at iteration " +
                             std::to_string(iter)),
          iteration(iter) {}
};

// Gradient in Weights shape.
struct WeightsGrad {
    std::vector<double> unary;    // K x d_unary
    std::vector<double> pairwise; // K x K x d_pairwise

    double linf() const;
};

// Composite log-likelihood: sum over items and blocks of the log block
// conditional of the observed labels, minus l2_weight * ||w||^2. A null
// partition means per-item singleton blocks (pseudolikelihood).
double pl_objective(const Dataset& data, const Weights& weights,
                    const BlockPartition* partition = nullptr, double l2_weight = 0.0,
                    int threads = 1);

// Observed minus expected feature statistics per block conditional, summed
// over items and blocks, minus 2 * l2_weight * w. With symmetric pairwise
// weights the two ordered entries of each pair carry the tied gradient
// (sum of both ordered slots).
WeightsGrad pl_gradient(const Dataset& data, const Weights& weights,
                        const BlockPartition* partition = nullptr, double l2_weight = 0.0,
                        int threads = 1);

struct TrainResult {
    Weights weights;
    std::vector<double> trace;      // objective per iteration, including the start
    std::vector<double> grad_norms; // matching L-inf gradient norms
};

// Gradient ascent with a constant step; stops when the full-dataset gradient
// L-inf norm drops below grad_tol or max_iters steps were taken.
TrainResult train(const Dataset& data, const Weights& init, const TrainConfig& config,
                  const BlockPartition* partition = nullptr);

} // namespace gridcrf
