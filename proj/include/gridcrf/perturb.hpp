#pragma once

#include <cstdint>
#include <vector>

#include "gridcrf/model.hpp"
#include "gridcrf/rng.hpp"

namespace gridcrf {

// Euler-Mascheroni constant. Draws use the Euler-shifted Gumbel with CDF
// F(t) = exp(-exp(-(t + c))) so the distribution has mean zero; the inverse
// transform is g = -ln(-ln u) - c for u uniform on (0,1).
inline constexpr double kEulerGamma = 0.5772156649015329;

// Seed plus stream id for independent, reproducible draw sequences. A value
// type: cloning with a fresh stream_id yields an independent stream.
struct GumbelSource {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    GumbelSource with_stream(std::uint64_t s) const { return {seed, s}; }
    CounterRng rng() const { return CounterRng(seed, stream_id); }
};

double sample_gumbel_one(CounterRng& rng);
std::vector<double> sample_gumbel(const GumbelSource& source, size_t n);

// One i.i.d. Gumbel draw per (block, joint block label). Immutable.
class PerturbationTable {
public:
    PerturbationTable(BlockPartition partition, std::vector<std::vector<double>> eps);

    // All-zero table, a hook for degenerate-noise tests.
    static PerturbationTable zeros(const BlockPartition& partition, int num_labels);

    const BlockPartition& partition() const { return partition_; }
    std::span<const double> block_eps(size_t block_index) const;

    // Sum over blocks of eps(y_block); the perturbation term of the total.
    double perturbation_of(const Labeling& y, int num_labels) const;

private:
    BlockPartition partition_;
    std::vector<std::vector<double>> eps_;
};

PerturbationTable make_perturbation(CounterRng& rng, const GridModel& model,
                                    const BlockPartition& partition);
PerturbationTable make_perturbation(const GumbelSource& source, const GridModel& model,
                                    const BlockPartition& partition);

// block_scores of the joint assignments plus the block's Gumbel entries.
// `block_index` addresses a block of the table's partition.
std::vector<double> perturbed_block_score(const GridModel& model, const Weights& weights,
                                          const PerturbationTable& table, const Labeling& y,
                                          size_t block_index);

} // namespace gridcrf
