#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridcrf/model.hpp"
#include "gridcrf/perturb.hpp"

namespace gridcrf {

enum class Method { icm, locpmap, icm_iter, gibbs, mean_field, lbp, sa };

const char* method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);
std::vector<std::string> method_names();

enum class IcmInit { unary_argmax, random };

struct InferenceConfig {
    Method method = Method::icm;
    int num_samples = 50;     // locPMAP / ICM-iter repeats
    int max_sweeps = 100;
    double tol = 1e-6;
    double dropout_fraction = 0.1;
    int gibbs_samples = 1000; // kept sweeps
    int burn_in = -1;         // <0: 20% of gibbs_samples
    double sa_t0 = 2.0;
    double sa_alpha = 0.98;
    double lbp_damping = 0.0;
    std::uint64_t seed = 0;
    IcmInit icm_init = IcmInit::unary_argmax;
    int threads = 1;

    void validate() const;
    int resolved_burn_in() const { return burn_in >= 0 ? burn_in : gibbs_samples / 5; }
};

struct InferenceResult {
    Labeling labels;
    std::vector<double> node_prob; // num_nodes x K, rows sum to 1
    std::vector<double> node_var;  // p(1-p) of the predicted label
    int samples_used = 0;
    int sweeps_run = 0;
};

// Raster-order coordinate ascent on the unperturbed potentials. Returns the
// labeling and the number of sweeps executed (the final sweep changes
// nothing when converged).
std::pair<Labeling, int> icm(const GridModel& model, const Weights& weights,
                             const Labeling& init, const InferenceConfig& config);

// One locPMAP draw: perturb, random init, block-ICM on the perturbed scores
// to local convergence. Consumes the source sequentially (perturbation
// first, then the initial labeling).
Labeling locpmap_sample(const GridModel& model, const Weights& weights,
                        const GumbelSource& source, const BlockPartition& partition,
                        const InferenceConfig& config);

// num_samples independent locPMAP draws (run i uses stream_id = i), per-node
// mode aggregation with empirical probabilities and variance.
InferenceResult locpmap_predict(const GridModel& model, const Weights& weights,
                                const InferenceConfig& config, const BlockPartition& partition);

// Repeated ICM from random inits, each repeat zeroing the unary terms of a
// random fraction of nodes; aggregation as in locpmap_predict.
InferenceResult icm_iter(const GridModel& model, const Weights& weights,
                         const InferenceConfig& config);

// Systematic-scan Gibbs chain; marginals from kept sweeps.
InferenceResult gibbs(const GridModel& model, const Weights& weights,
                      const InferenceConfig& config);

// Fully factorized mean field with raster-order coordinate updates.
InferenceResult mean_field(const GridModel& model, const Weights& weights,
                           const InferenceConfig& config);

// Damped sum-product loopy BP; decode from beliefs.
InferenceResult loopy_bp(const GridModel& model, const Weights& weights,
                         const InferenceConfig& config);

// Gibbs sweeps under the schedule T_t = sa_t0 * sa_alpha^t, then one
// zero-temperature ICM pass.
InferenceResult simulated_annealing(const GridModel& model, const Weights& weights,
                                    const InferenceConfig& config);

// Dispatch on config.method; partition only used by locpmap (defaults to
// singletons when absent).
InferenceResult run_inference(const GridModel& model, const Weights& weights,
                              const InferenceConfig& config,
                              const BlockPartition* partition = nullptr);

} // namespace gridcrf
