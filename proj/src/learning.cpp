#include "gridcrf/learning.hpp"

#include <algorithm>
#include <cmath>

#include "gridcrf/parallel.hpp"
#include "gridcrf/rng.hpp"

namespace gridcrf {

void Dataset::validate() const {
    if (items.empty()) throw std::invalid_argument("Dataset: empty");
    const GridModel& first = items.front().first;
    for (const auto& [model, y] : items) {
        if (model.num_labels() != first.num_labels() || model.d_unary() != first.d_unary() ||
            model.d_pairwise() != first.d_pairwise())
            throw std::invalid_argument("Dataset: items disagree on K/d_unary/d_pairwise");
        check_labeling(model, y);
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (max_iters < 0) throw std::invalid_argument("TrainConfig: max_iters must be >= 0");
    if (l2_weight < 0.0) throw std::invalid_argument("TrainConfig: l2_weight must be >= 0");
    if (batch_size < 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 0");
    if (!(grad_tol >= 0.0)) throw std::invalid_argument("TrainConfig: grad_tol must be >= 0");
}

double WeightsGrad::linf() const {
    double m = 0.0;
    for (double v : unary) m = std::max(m, std::abs(v));
    for (double v : pairwise) m = std::max(m, std::abs(v));
    return m;
}

namespace {

// Items are processed in fixed-size chunks and chunk results reduced in
// chunk order, so objective and gradient do not depend on the thread count.
constexpr size_t kItemChunk = 32;

const BlockPartition& item_partition(const GridModel& model, const BlockPartition* partition,
                                     std::optional<BlockPartition>& scratch) {
    if (partition) {
        if (partition->num_nodes() != model.num_nodes())
            throw std::invalid_argument("partition does not match item grid");
        return *partition;
    }
    if (!scratch || scratch->num_nodes() != model.num_nodes())
        scratch = BlockPartition::singletons(model.num_nodes());
    return *scratch;
}

double item_objective(const GridModel& model, const Labeling& y,
                      const Weights& weights, const BlockPartition& partition) {
    double obj = 0.0;
    for (const auto& block : partition.blocks()) {
        const std::vector<double> cond = block_conditional(model, weights, y, block);
        obj += std::log(
            cond[static_cast<size_t>(block_joint_index(block, y, model.num_labels()))]);
    }
    return obj;
}

struct GradAccum {
    std::vector<double> unary;
    std::vector<double> pairwise;

    GradAccum(const Weights& w)
        : unary(w.unary_flat().size(), 0.0), pairwise(w.pairwise_flat().size(), 0.0) {}

    void add_unary(int label, std::span<const double> feat, double c, int d_unary) {
        double* g = unary.data() + static_cast<size_t>(label) * d_unary;
        for (size_t k = 0; k < feat.size(); ++k) g[k] += c * feat[k];
    }
    void add_pairwise(int a, int b, int K, std::span<const double> feat, double c,
                      int d_pairwise) {
        double* g = pairwise.data() + (static_cast<size_t>(a) * K + b) * d_pairwise;
        for (size_t k = 0; k < feat.size(); ++k) g[k] += c * feat[k];
    }
};

// Per block: coefficient (1[assignment == observed] - p(assignment)) on the
// feature statistics of every term touching the block.
void item_gradient(const GridModel& model, const Labeling& y, const Weights& weights,
                   const BlockPartition& partition, GradAccum& acc) {
    const int K = model.num_labels();
    Labeling work = y;
    for (const auto& block : partition.blocks()) {
        const std::vector<double> cond = block_conditional(model, weights, y, block);
        const std::int64_t observed = block_joint_index(block, y, K);

        std::vector<int> assign(block.size(), 0);
        for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(cond.size()); ++idx) {
            const double c =
                (idx == observed ? 1.0 : 0.0) - cond[static_cast<size_t>(idx)];
            if (c != 0.0) {
                for (size_t t = 0; t < block.size(); ++t)
                    work[static_cast<size_t>(block[t])] = assign[t];
                for (size_t t = 0; t < block.size(); ++t)
                    acc.add_unary(assign[t], model.unary_features(block[t]), c, model.d_unary());
                // every edge with at least one endpoint in the block, once
                for (size_t t = 0; t < block.size(); ++t) {
                    for (int e : model.incident_edges(block[t])) {
                        const Edge& ed = model.edge(e);
                        const int other = ed.a == block[t] ? ed.b : ed.a;
                        const bool other_in_block =
                            std::find(block.begin(), block.end(), other) != block.end();
                        if (other_in_block && other < block[t]) continue; // counted at lower end
                        acc.add_pairwise(work[static_cast<size_t>(ed.a)],
                                         work[static_cast<size_t>(ed.b)], K,
                                         model.pairwise_features(e), c, model.d_pairwise());
                    }
                }
            }
            for (int t = static_cast<int>(block.size()) - 1; t >= 0; --t) {
                if (++assign[static_cast<size_t>(t)] < K) break;
                assign[static_cast<size_t>(t)] = 0;
            }
        }
        for (size_t t = 0; t < block.size(); ++t)
            work[static_cast<size_t>(block[t])] = y[static_cast<size_t>(block[t])];
    }
}

double objective_over_items(const Dataset& data, const Weights& weights,
                            const BlockPartition* partition, std::span<const size_t> item_ids,
                            int threads) {
    const size_t chunks = (item_ids.size() + kItemChunk - 1) / kItemChunk;
    std::vector<double> partial(chunks, 0.0);
    parallel_for(static_cast<std::int64_t>(chunks), threads, [&](std::int64_t c) {
        std::optional<BlockPartition> scratch;
        double s = 0.0;
        const size_t beg = static_cast<size_t>(c) * kItemChunk;
        const size_t end = std::min(beg + kItemChunk, item_ids.size());
        for (size_t i = beg; i < end; ++i) {
            const auto& [model, y] = data.items[item_ids[i]];
            s += item_objective(model, y, weights, item_partition(model, partition, scratch));
        }
        partial[static_cast<size_t>(c)] = s;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

WeightsGrad gradient_over_items(const Dataset& data, const Weights& weights,
                                const BlockPartition* partition,
                                std::span<const size_t> item_ids, int threads) {
    const size_t chunks = (item_ids.size() + kItemChunk - 1) / kItemChunk;
    std::vector<GradAccum> partial(chunks, GradAccum(weights));
    parallel_for(static_cast<std::int64_t>(chunks), threads, [&](std::int64_t c) {
        std::optional<BlockPartition> scratch;
        const size_t beg = static_cast<size_t>(c) * kItemChunk;
        const size_t end = std::min(beg + kItemChunk, item_ids.size());
        for (size_t i = beg; i < end; ++i) {
            const auto& [model, y] = data.items[item_ids[i]];
            item_gradient(model, y, weights, item_partition(model, partition, scratch),
                          partial[static_cast<size_t>(c)]);
        }
    });
    WeightsGrad g;
    g.unary.assign(weights.unary_flat().size(), 0.0);
    g.pairwise.assign(weights.pairwise_flat().size(), 0.0);
    for (const GradAccum& p : partial) {
        for (size_t i = 0; i < g.unary.size(); ++i) g.unary[i] += p.unary[i];
        for (size_t i = 0; i < g.pairwise.size(); ++i) g.pairwise[i] += p.pairwise[i];
    }
    return g;
}

void apply_l2(WeightsGrad& g, const Weights& weights, double l2_weight) {
    if (l2_weight == 0.0) return;
    for (size_t i = 0; i < g.unary.size(); ++i)
        g.unary[i] -= 2.0 * l2_weight * weights.unary_flat()[i];
    for (size_t i = 0; i < g.pairwise.size(); ++i)
        g.pairwise[i] -= 2.0 * l2_weight * weights.pairwise_flat()[i];
}

// Tied gradient for a symmetric pairwise table: both ordered slots of a pair
// receive the sum of their raw components, keeping ascent on the symmetric
// manifold.
void symmetrize(WeightsGrad& g, const Weights& weights) {
    const int K = weights.num_labels();
    const int d = weights.d_pairwise();
    for (int a = 0; a < K; ++a)
        for (int b = a + 1; b < K; ++b)
            for (int k = 0; k < d; ++k) {
                double& gab = g.pairwise[(static_cast<size_t>(a) * K + b) * d + k];
                double& gba = g.pairwise[(static_cast<size_t>(b) * K + a) * d + k];
                const double s = gab + gba;
                gab = s;
                gba = s;
            }
}

std::vector<size_t> all_item_ids(const Dataset& data) {
    std::vector<size_t> ids(data.items.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return ids;
}

} // namespace

double pl_objective(const Dataset& data, const Weights& weights, const BlockPartition* partition,
                    double l2_weight, int threads) {
    data.validate();
    const std::vector<size_t> ids = all_item_ids(data);
    double obj = objective_over_items(data, weights, partition, ids, threads);
    if (l2_weight != 0.0) {
        double norm2 = 0.0;
        for (double w : weights.unary_flat()) norm2 += w * w;
        for (double w : weights.pairwise_flat()) norm2 += w * w;
        obj -= l2_weight * norm2;
    }
    return obj;
}

WeightsGrad pl_gradient(const Dataset& data, const Weights& weights,
                        const BlockPartition* partition, double l2_weight, int threads) {
    data.validate();
    const std::vector<size_t> ids = all_item_ids(data);
    WeightsGrad g = gradient_over_items(data, weights, partition, ids, threads);
    apply_l2(g, weights, l2_weight);
    if (weights.symmetric_pairwise()) symmetrize(g, weights);
    return g;
}

TrainResult train(const Dataset& data, const Weights& init, const TrainConfig& config,
                  const BlockPartition* partition) {
    data.validate();
    config.validate();
    Weights w = init;
    TrainResult res{w, {}, {}};

    auto step = [&](Weights& weights, const WeightsGrad& g) {
        for (size_t i = 0; i < g.unary.size(); ++i)
            weights.unary_flat()[i] += config.learning_rate * g.unary[i];
        if (!config.freeze_pairwise)
            for (size_t i = 0; i < g.pairwise.size(); ++i)
                weights.pairwise_flat()[i] += config.learning_rate * g.pairwise[i];
    };

    const std::vector<size_t> ids = all_item_ids(data);
    CounterRng shuffle_rng(config.seed, 0);

    for (int iter = 0;; ++iter) {
        const double obj = pl_objective(data, w, partition, config.l2_weight, config.threads);
        if (!std::isfinite(obj)) throw TrainDivergence(iter);
        WeightsGrad g = pl_gradient(data, w, partition, config.l2_weight, config.threads);
        res.trace.push_back(obj);
        res.grad_norms.push_back(g.linf());
        if (g.linf() < config.grad_tol || iter >= config.max_iters) break;

        if (config.batch_size == 0 ||
            config.batch_size >= static_cast<int>(data.items.size())) {
            step(w, g);
        } else {
            // one epoch of shuffled minibatches; l2 scaled by batch fraction
            std::vector<size_t> order = ids;
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.next_below(i))]);
            const double frac =
                static_cast<double>(config.batch_size) / static_cast<double>(order.size());
            for (size_t beg = 0; beg < order.size(); beg += static_cast<size_t>(config.batch_size)) {
                const size_t end =
                    std::min(beg + static_cast<size_t>(config.batch_size), order.size());
                WeightsGrad mb = gradient_over_items(
                    data, w, partition, std::span<const size_t>(order.data() + beg, end - beg),
                    config.threads);
                apply_l2(mb, w, config.l2_weight * frac);
                if (w.symmetric_pairwise()) symmetrize(mb, w);
                step(w, mb);
            }
        }
    }
    res.weights = std::move(w);
    return res;
}

} // namespace gridcrf
