#include "gridcrf/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace gridcrf {
namespace oracle {

std::uint64_t config_count(const GridModel& model, const EnumerationBudget& budget) {
    std::uint64_t count = 1;
    for (int n = 0; n < model.num_nodes(); ++n) {
        if (count > budget.max_configs / static_cast<std::uint64_t>(model.num_labels()))
            throw BudgetExceeded("enumeration budget exceeded: K^n > " +
                                 std::to_string(budget.max_configs));
        count *= static_cast<std::uint64_t>(model.num_labels());
    }
    if (count > budget.max_configs)
        throw BudgetExceeded("enumeration budget exceeded");
    return count;
}

std::uint64_t index_of_labeling(const Labeling& y, int num_labels) {
    std::uint64_t idx = 0;
    for (int l : y) idx = idx * static_cast<std::uint64_t>(num_labels) + static_cast<std::uint64_t>(l);
    return idx;
}

Labeling labeling_from_index(std::uint64_t index, int num_nodes, int num_labels) {
    Labeling y(static_cast<size_t>(num_nodes));
    for (int n = num_nodes - 1; n >= 0; --n) {
        y[static_cast<size_t>(n)] = static_cast<int>(index % static_cast<std::uint64_t>(num_labels));
        index /= static_cast<std::uint64_t>(num_labels);
    }
    return y;
}

namespace {

// Visit every labeling in lexicographic order (node 0 most significant).
template <typename Fn>
void for_each_labeling(const GridModel& model, const EnumerationBudget& budget, Fn&& fn) {
    const std::uint64_t count = config_count(model, budget);
    const int K = model.num_labels();
    Labeling y(static_cast<size_t>(model.num_nodes()), 0);
    for (std::uint64_t idx = 0; idx < count; ++idx) {
        fn(idx, y);
        for (int n = model.num_nodes() - 1; n >= 0; --n) {
            if (++y[static_cast<size_t>(n)] < K) break;
            y[static_cast<size_t>(n)] = 0;
        }
    }
}

std::vector<double> all_totals(const GridModel& model, const Weights& weights,
                               const EnumerationBudget& budget) {
    std::vector<double> totals(static_cast<size_t>(config_count(model, budget)));
    for_each_labeling(model, budget, [&](std::uint64_t idx, const Labeling& y) {
        totals[static_cast<size_t>(idx)] = total_log_potential(model, weights, y);
    });
    return totals;
}

double log_sum_exp(const std::vector<double>& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

double binomial_se(double p, std::uint64_t n) {
    return std::sqrt(std::max(p * (1.0 - p), 1e-12) / static_cast<double>(n));
}

} // namespace

double exact_partition(const GridModel& model, const Weights& weights,
                       const EnumerationBudget& budget) {
    return log_sum_exp(all_totals(model, weights, budget));
}

std::vector<double> exact_distribution(const GridModel& model, const Weights& weights,
                                       const EnumerationBudget& budget) {
    std::vector<double> probs = all_totals(model, weights, budget);
    softmax_inplace(probs);
    return probs;
}

std::vector<double> exact_marginals(const GridModel& model, const Weights& weights,
                                    const EnumerationBudget& budget) {
    const std::vector<double> probs = exact_distribution(model, weights, budget);
    const int K = model.num_labels();
    std::vector<double> marg(static_cast<size_t>(model.num_nodes()) * K, 0.0);
    for_each_labeling(model, budget, [&](std::uint64_t idx, const Labeling& y) {
        const double p = probs[static_cast<size_t>(idx)];
        for (int n = 0; n < model.num_nodes(); ++n)
            marg[static_cast<size_t>(n) * K + static_cast<size_t>(y[static_cast<size_t>(n)])] += p;
    });
    return marg;
}

std::vector<Labeling> exact_sample(const GridModel& model, const Weights& weights,
                                   const GumbelSource& source, size_t n,
                                   const EnumerationBudget& budget) {
    const std::vector<double> probs = exact_distribution(model, weights, budget);
    std::vector<double> cdf(probs.size());
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        cdf[i] = acc;
    }
    cdf.back() = 1.0;

    CounterRng rng = source.rng();
    std::vector<Labeling> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        const double u = rng.next_unit_open();
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        const std::uint64_t idx = static_cast<std::uint64_t>(it - cdf.begin());
        out.push_back(labeling_from_index(idx, model.num_nodes(), model.num_labels()));
    }
    return out;
}

Labeling exact_map(const GridModel& model, const Weights& weights,
                   const EnumerationBudget& budget) {
    double best = -std::numeric_limits<double>::infinity();
    std::uint64_t best_idx = 0;
    for_each_labeling(model, budget, [&](std::uint64_t idx, const Labeling& y) {
        const double t = total_log_potential(model, weights, y);
        if (t > best) {
            best = t;
            best_idx = idx;
        }
    });
    return labeling_from_index(best_idx, model.num_nodes(), model.num_labels());
}

std::vector<double> perturbed_totals(const GridModel& model, const Weights& weights,
                                     const PerturbationTable& table,
                                     const EnumerationBudget& budget) {
    std::vector<double> totals(static_cast<size_t>(config_count(model, budget)));
    for_each_labeling(model, budget, [&](std::uint64_t idx, const Labeling& y) {
        totals[static_cast<size_t>(idx)] =
            total_log_potential(model, weights, y) +
            table.perturbation_of(y, model.num_labels());
    });
    return totals;
}

namespace {

// Index strides of each block's joint assignments into the full labeling
// enumeration; alternatives of a block are reachable from any base index by
// adding (joint' - joint) * stride contributions per block node.
struct BlockStrides {
    std::vector<std::vector<std::uint64_t>> node_stride; // per block, per node
};

BlockStrides make_strides(const GridModel& model, const BlockPartition& partition) {
    const int n = model.num_nodes();
    std::vector<std::uint64_t> stride(static_cast<size_t>(n));
    std::uint64_t s = 1;
    for (int i = n - 1; i >= 0; --i) {
        stride[static_cast<size_t>(i)] = s;
        s *= static_cast<std::uint64_t>(model.num_labels());
    }
    BlockStrides bs;
    bs.node_stride.reserve(partition.num_blocks());
    for (const auto& block : partition.blocks()) {
        std::vector<std::uint64_t> v;
        v.reserve(block.size());
        for (int node : block) v.push_back(stride[static_cast<size_t>(node)]);
        bs.node_stride.push_back(std::move(v));
    }
    return bs;
}

// Checks block-coordinate-wise maximality of the labeling at `idx` directly
// on the table of perturbed totals.
bool is_local_max_at(const std::vector<double>& totals, const Labeling& y, std::uint64_t idx,
                     const BlockPartition& partition, const BlockStrides& strides, int K) {
    const double ref = totals[static_cast<size_t>(idx)];
    for (size_t b = 0; b < partition.num_blocks(); ++b) {
        const auto& block = partition.blocks()[b];
        const auto& stride = strides.node_stride[b];
        // subtract the current block assignment, then add back alternatives
        std::uint64_t base = idx;
        for (size_t t = 0; t < block.size(); ++t)
            base -= static_cast<std::uint64_t>(y[static_cast<size_t>(block[t])]) * stride[t];
        std::vector<int> assign(block.size(), 0);
        const std::int64_t entries = block_entry_count(K, block.size());
        std::uint64_t alt = base;
        for (std::int64_t j = 0; j < entries; ++j) {
            if (totals[static_cast<size_t>(alt)] > ref) return false;
            for (int t = static_cast<int>(block.size()) - 1; t >= 0; --t) {
                if (++assign[static_cast<size_t>(t)] < K) {
                    alt += stride[static_cast<size_t>(t)];
                    break;
                }
                assign[static_cast<size_t>(t)] = 0;
                alt -= stride[static_cast<size_t>(t)] * static_cast<std::uint64_t>(K - 1);
            }
        }
    }
    return true;
}

} // namespace

std::vector<std::uint8_t> local_maxima_mask(const GridModel& model, const Weights& weights,
                                            const PerturbationTable& table,
                                            const EnumerationBudget& budget) {
    const std::vector<double> totals = perturbed_totals(model, weights, table, budget);
    const BlockStrides strides = make_strides(model, table.partition());
    std::vector<std::uint8_t> mask(totals.size(), 0);
    for_each_labeling(model, budget, [&](std::uint64_t idx, const Labeling& y) {
        mask[static_cast<size_t>(idx)] =
            is_local_max_at(totals, y, idx, table.partition(), strides, model.num_labels()) ? 1 : 0;
    });
    return mask;
}

std::vector<Labeling> enumerate_local_maxima(const GridModel& model, const Weights& weights,
                                             const PerturbationTable& table,
                                             const EnumerationBudget& budget) {
    const std::vector<std::uint8_t> mask = local_maxima_mask(model, weights, table, budget);
    std::vector<Labeling> out;
    for (std::uint64_t idx = 0; idx < mask.size(); ++idx)
        if (mask[static_cast<size_t>(idx)])
            out.push_back(labeling_from_index(idx, model.num_nodes(), model.num_labels()));
    return out;
}

double expected_local_maxima(const GridModel& model, const Weights& weights, const BlockPartition& partition,
                const EnumerationBudget& budget) {
    double z = 0.0;
    for_each_labeling(model, budget, [&](std::uint64_t, const Labeling& y) {
        double prod = 1.0;
        for (const auto& block : partition.blocks()) {
            const std::vector<double> cond = block_conditional(model, weights, y, block);
            prod *= cond[static_cast<size_t>(block_joint_index(block, y, model.num_labels()))];
        }
        z += prod;
    });
    return z;
}

CheckReport gumbelmax_check(const GridModel& model, const Weights& weights, std::uint64_t draws,
                            const GumbelSource& source, double tolerance,
                            const EnumerationBudget& budget) {
    const std::vector<double> exact = exact_distribution(model, weights, budget);
    const std::vector<double> totals = all_totals(model, weights, budget);
    std::vector<std::uint64_t> counts(totals.size(), 0);
    CounterRng rng = source.rng();
    for (std::uint64_t d = 0; d < draws; ++d) {
        double best = -std::numeric_limits<double>::infinity();
        size_t best_i = 0;
        for (size_t i = 0; i < totals.size(); ++i) {
            const double t = totals[i] + sample_gumbel_one(rng);
            if (t > best) {
                best = t;
                best_i = i;
            }
        }
        ++counts[best_i];
    }

    CheckReport rep;
    rep.name = "gumbelmax";
    rep.draws = draws;
    rep.tolerance = tolerance;
    for (size_t i = 0; i < totals.size(); ++i) {
        const double emp = static_cast<double>(counts[i]) / static_cast<double>(draws);
        const double dev = std::abs(emp - exact[i]);
        if (dev >= rep.max_abs_deviation) {
            rep.max_abs_deviation = dev;
            rep.exact = exact[i];
            rep.empirical = emp;
            rep.std_error = binomial_se(exact[i], draws);
        }
    }
    rep.low_precision = 3.0 * binomial_se(0.5, draws) > tolerance;
    rep.pass = rep.max_abs_deviation < tolerance;
    return rep;
}

CheckReport local_membership_check(const GridModel& model, const Weights& weights,
                           const BlockPartition& partition, const Labeling& y,
                           std::uint64_t draws, const GumbelSource& source, double tolerance,
                           const EnumerationBudget& budget) {
    check_labeling(model, y);
    double exact = 1.0;
    for (const auto& block : partition.blocks()) {
        const std::vector<double> cond = block_conditional(model, weights, y, block);
        exact *= cond[static_cast<size_t>(block_joint_index(block, y, model.num_labels()))];
    }

    const std::uint64_t idx = index_of_labeling(y, model.num_labels());
    const BlockStrides strides = make_strides(model, partition);
    std::uint64_t hits = 0;
    for (std::uint64_t d = 0; d < draws; ++d) {
        const PerturbationTable table =
            make_perturbation(source.with_stream(source.stream_id + d), model, partition);
        const std::vector<double> totals = perturbed_totals(model, weights, table, budget);
        if (is_local_max_at(totals, y, idx, partition, strides, model.num_labels())) ++hits;
    }

    CheckReport rep;
    rep.name = "theorem1";
    rep.draws = draws;
    rep.tolerance = tolerance;
    rep.exact = exact;
    rep.empirical = static_cast<double>(hits) / static_cast<double>(draws);
    rep.std_error = binomial_se(exact, draws);
    rep.max_abs_deviation = std::abs(rep.empirical - exact);
    rep.low_precision = 3.0 * binomial_se(0.5, draws) > tolerance;
    rep.pass = rep.max_abs_deviation < tolerance;
    return rep;
}

LocalMembershipAllReport local_membership_check_all(const GridModel& model, const Weights& weights,
                                     const BlockPartition& partition, std::uint64_t draws,
                                     const GumbelSource& source, double tolerance,
                                     const EnumerationBudget& budget) {
    const std::uint64_t count = config_count(model, budget);
    std::vector<std::uint64_t> hits(static_cast<size_t>(count), 0);
    double loc_sum = 0.0, loc_sq_sum = 0.0;
    for (std::uint64_t d = 0; d < draws; ++d) {
        const PerturbationTable table =
            make_perturbation(source.with_stream(source.stream_id + d), model, partition);
        const std::vector<std::uint8_t> mask = local_maxima_mask(model, weights, table, budget);
        std::uint64_t loc = 0;
        for (std::uint64_t i = 0; i < count; ++i) {
            if (mask[static_cast<size_t>(i)]) {
                ++hits[static_cast<size_t>(i)];
                ++loc;
            }
        }
        loc_sum += static_cast<double>(loc);
        loc_sq_sum += static_cast<double>(loc) * static_cast<double>(loc);
    }

    LocalMembershipAllReport all;
    all.per_labeling.reserve(static_cast<size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        const Labeling y = labeling_from_index(i, model.num_nodes(), model.num_labels());
        double exact = 1.0;
        for (const auto& block : partition.blocks()) {
            const std::vector<double> cond = block_conditional(model, weights, y, block);
            exact *= cond[static_cast<size_t>(block_joint_index(block, y, model.num_labels()))];
        }
        CheckReport rep;
        rep.name = "theorem1[" + std::to_string(i) + "]";
        rep.draws = draws;
        rep.tolerance = tolerance;
        rep.exact = exact;
        rep.empirical =
            static_cast<double>(hits[static_cast<size_t>(i)]) / static_cast<double>(draws);
        rep.std_error = binomial_se(exact, draws);
        rep.max_abs_deviation = std::abs(rep.empirical - exact);
        rep.low_precision = 3.0 * binomial_se(0.5, draws) > tolerance;
        rep.pass = rep.max_abs_deviation < tolerance;
        all.per_labeling.push_back(std::move(rep));
    }
    const double n = static_cast<double>(draws);
    all.mean_local_maxima = loc_sum / n;
    const double var = std::max(0.0, loc_sq_sum / n - all.mean_local_maxima * all.mean_local_maxima);
    all.mean_local_maxima_se = std::sqrt(var / n);
    return all;
}

} // namespace oracle
} // namespace gridcrf
