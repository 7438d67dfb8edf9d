#include "gridcrf/perturb.hpp"

#include <cmath>
#include <stdexcept>

namespace gridcrf {

double sample_gumbel_one(CounterRng& rng) {
    const double u = rng.next_unit_open();
    return -std::log(-std::log(u)) - kEulerGamma;
}

std::vector<double> sample_gumbel(const GumbelSource& source, size_t n) {
    if (n < 1) throw std::invalid_argument("sample_gumbel: n must be >= 1");
    CounterRng rng = source.rng();
    std::vector<double> out(n);
    for (double& g : out) g = sample_gumbel_one(rng);
    return out;
}

PerturbationTable::PerturbationTable(BlockPartition partition,
                                     std::vector<std::vector<double>> eps)
    : partition_(std::move(partition)), eps_(std::move(eps)) {
    if (eps_.size() != partition_.num_blocks())
        throw std::invalid_argument("PerturbationTable: one entry vector per block required");
    for (const auto& v : eps_)
        for (double g : v)
            if (!std::isfinite(g))
                throw std::invalid_argument("PerturbationTable: non-finite entry");
}

PerturbationTable PerturbationTable::zeros(const BlockPartition& partition, int num_labels) {
    std::vector<std::vector<double>> eps;
    eps.reserve(partition.num_blocks());
    for (const auto& block : partition.blocks())
        eps.emplace_back(static_cast<size_t>(block_entry_count(num_labels, block.size())), 0.0);
    return PerturbationTable(partition, std::move(eps));
}

std::span<const double> PerturbationTable::block_eps(size_t block_index) const {
    if (block_index >= eps_.size())
        throw std::invalid_argument("PerturbationTable: block index out of range");
    return eps_[block_index];
}

double PerturbationTable::perturbation_of(const Labeling& y, int num_labels) const {
    double s = 0.0;
    for (size_t b = 0; b < partition_.num_blocks(); ++b) {
        const auto& block = partition_.blocks()[b];
        s += eps_[b][static_cast<size_t>(block_joint_index(block, y, num_labels))];
    }
    return s;
}

PerturbationTable make_perturbation(CounterRng& rng, const GridModel& model,
                                    const BlockPartition& partition) {
    if (partition.num_nodes() != model.num_nodes())
        throw std::invalid_argument("make_perturbation: partition does not match grid");
    std::vector<std::vector<double>> eps;
    eps.reserve(partition.num_blocks());
    for (const auto& block : partition.blocks()) {
        const std::int64_t entries = block_entry_count(model.num_labels(), block.size());
        std::vector<double> v(static_cast<size_t>(entries));
        for (double& g : v) g = sample_gumbel_one(rng);
        eps.push_back(std::move(v));
    }
    return PerturbationTable(partition, std::move(eps));
}

PerturbationTable make_perturbation(const GumbelSource& source, const GridModel& model,
                                    const BlockPartition& partition) {
    CounterRng rng = source.rng();
    return make_perturbation(rng, model, partition);
}

std::vector<double> perturbed_block_score(const GridModel& model, const Weights& weights,
                                          const PerturbationTable& table, const Labeling& y,
                                          size_t block_index) {
    if (block_index >= table.partition().num_blocks())
        throw std::invalid_argument("perturbed_block_score: block not in partition");
    const auto& block = table.partition().blocks()[block_index];
    const auto eps = table.block_eps(block_index);
    std::vector<double> scores(eps.size());
    block_scores(model, weights, y, block, scores);
    for (size_t i = 0; i < scores.size(); ++i) scores[i] += eps[i];
    return scores;
}

} // namespace gridcrf
