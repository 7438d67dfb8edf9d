#include "gridcrf/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace gridcrf {

GridModel::GridModel(int height, int width, int num_labels, int d_unary, int d_pairwise)
    : height_(height), width_(width), num_labels_(num_labels),
      d_unary_(d_unary), d_pairwise_(d_pairwise) {
    if (height < 1 || width < 1)
        throw std::invalid_argument("GridModel: grid dimensions must be positive");
    if (num_labels < 2)
        throw std::invalid_argument("GridModel: need at least 2 labels");
    if (d_unary < 0 || d_pairwise < 0)
        throw std::invalid_argument("GridModel: negative feature dimension");

    // Canonical edge order: raster scan, right edge then down edge.
    edges_.reserve(static_cast<size_t>(height) * (width - 1) +
                   static_cast<size_t>(width) * (height - 1));
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const int n = node_index(r, c);
            if (c + 1 < width) edges_.push_back({n, n + 1});
            if (r + 1 < height) edges_.push_back({n, n + width});
        }
    }

    unary_feat_.assign(static_cast<size_t>(num_nodes()) * d_unary_, 0.0);
    pairwise_feat_.assign(edges_.size() * static_cast<size_t>(d_pairwise_), 0.0);

    std::vector<int> degree(static_cast<size_t>(num_nodes()), 0);
    for (const Edge& e : edges_) {
        ++degree[static_cast<size_t>(e.a)];
        ++degree[static_cast<size_t>(e.b)];
    }
    incident_offsets_.assign(static_cast<size_t>(num_nodes()) + 1, 0);
    for (int n = 0; n < num_nodes(); ++n)
        incident_offsets_[static_cast<size_t>(n) + 1] =
            incident_offsets_[static_cast<size_t>(n)] + degree[static_cast<size_t>(n)];
    incident_ids_.resize(edges_.size() * 2);
    std::vector<int> cursor(incident_offsets_.begin(), incident_offsets_.end() - 1);
    for (int e = 0; e < num_edges(); ++e) {
        incident_ids_[static_cast<size_t>(cursor[static_cast<size_t>(edges_[static_cast<size_t>(e)].a)]++)] = e;
        incident_ids_[static_cast<size_t>(cursor[static_cast<size_t>(edges_[static_cast<size_t>(e)].b)]++)] = e;
    }
}

std::span<const int> GridModel::incident_edges(int node) const {
    check_node(node);
    const int beg = incident_offsets_[static_cast<size_t>(node)];
    const int end = incident_offsets_[static_cast<size_t>(node) + 1];
    return {incident_ids_.data() + beg, static_cast<size_t>(end - beg)};
}

std::span<double> GridModel::unary_features(int node) {
    check_node(node);
    return {unary_feat_.data() + static_cast<size_t>(node) * d_unary_,
            static_cast<size_t>(d_unary_)};
}

std::span<const double> GridModel::unary_features(int node) const {
    check_node(node);
    return {unary_feat_.data() + static_cast<size_t>(node) * d_unary_,
            static_cast<size_t>(d_unary_)};
}

std::span<double> GridModel::pairwise_features(int edge) {
    check_edge(edge);
    return {pairwise_feat_.data() + static_cast<size_t>(edge) * d_pairwise_,
            static_cast<size_t>(d_pairwise_)};
}

std::span<const double> GridModel::pairwise_features(int edge) const {
    check_edge(edge);
    return {pairwise_feat_.data() + static_cast<size_t>(edge) * d_pairwise_,
            static_cast<size_t>(d_pairwise_)};
}

void GridModel::validate() const {
    for (double v : unary_feat_)
        if (!std::isfinite(v)) throw std::invalid_argument("GridModel: non-finite unary feature");
    for (double v : pairwise_feat_)
        if (!std::isfinite(v)) throw std::invalid_argument("GridModel: non-finite pairwise feature");
}

void GridModel::check_node(int node) const {
    if (node < 0 || node >= num_nodes())
        throw std::invalid_argument("GridModel: node index " + std::to_string(node) +
                                    " out of range");
}

void GridModel::check_edge(int edge) const {
    if (edge < 0 || edge >= num_edges())
        throw std::invalid_argument("GridModel: edge index " + std::to_string(edge) +
                                    " out of range");
}

Weights::Weights(int num_labels, int d_unary, int d_pairwise, bool symmetric_pairwise)
    : num_labels_(num_labels), d_unary_(d_unary), d_pairwise_(d_pairwise),
      symmetric_(symmetric_pairwise) {
    if (num_labels < 2) throw std::invalid_argument("Weights: need at least 2 labels");
    unary_.assign(static_cast<size_t>(num_labels_) * d_unary_, 0.0);
    pairwise_.assign(static_cast<size_t>(num_labels_) * num_labels_ * d_pairwise_, 0.0);
}

std::span<double> Weights::unary(int label) {
    if (label < 0 || label >= num_labels_)
        throw std::invalid_argument("Weights: label out of range");
    return {unary_.data() + static_cast<size_t>(label) * d_unary_, static_cast<size_t>(d_unary_)};
}

std::span<const double> Weights::unary(int label) const {
    if (label < 0 || label >= num_labels_)
        throw std::invalid_argument("Weights: label out of range");
    return {unary_.data() + static_cast<size_t>(label) * d_unary_, static_cast<size_t>(d_unary_)};
}

std::span<double> Weights::pairwise(int label_a, int label_b) {
    if (label_a < 0 || label_a >= num_labels_ || label_b < 0 || label_b >= num_labels_)
        throw std::invalid_argument("Weights: label pair out of range");
    return {pairwise_.data() +
                (static_cast<size_t>(label_a) * num_labels_ + label_b) * d_pairwise_,
            static_cast<size_t>(d_pairwise_)};
}

std::span<const double> Weights::pairwise(int label_a, int label_b) const {
    if (label_a < 0 || label_a >= num_labels_ || label_b < 0 || label_b >= num_labels_)
        throw std::invalid_argument("Weights: label pair out of range");
    return {pairwise_.data() +
                (static_cast<size_t>(label_a) * num_labels_ + label_b) * d_pairwise_,
            static_cast<size_t>(d_pairwise_)};
}

void Weights::validate() const {
    for (double v : unary_)
        if (!std::isfinite(v)) throw std::invalid_argument("Weights: non-finite unary weight");
    for (double v : pairwise_)
        if (!std::isfinite(v)) throw std::invalid_argument("Weights: non-finite pairwise weight");
    if (symmetric_) {
        for (int a = 0; a < num_labels_; ++a)
            for (int b = a + 1; b < num_labels_; ++b) {
                auto ab = pairwise(a, b);
                auto ba = pairwise(b, a);
                for (int k = 0; k < d_pairwise_; ++k)
                    if (ab[static_cast<size_t>(k)] != ba[static_cast<size_t>(k)])
                        throw std::invalid_argument(
                            "Weights: symmetric flag set but pairwise table asymmetric");
            }
    }
}

BlockPartition::BlockPartition(std::vector<std::vector<int>> blocks, int num_nodes)
    : blocks_(std::move(blocks)), num_nodes_(num_nodes) {
    std::vector<char> seen(static_cast<size_t>(num_nodes), 0);
    for (const auto& block : blocks_) {
        if (block.empty()) throw std::invalid_argument("BlockPartition: empty block");
        for (int n : block) {
            if (n < 0 || n >= num_nodes)
                throw std::invalid_argument("BlockPartition: node index out of range");
            if (seen[static_cast<size_t>(n)])
                throw std::invalid_argument("BlockPartition: blocks overlap at node " +
                                            std::to_string(n));
            seen[static_cast<size_t>(n)] = 1;
        }
    }
}

BlockPartition BlockPartition::singletons(int num_nodes) {
    std::vector<std::vector<int>> blocks(static_cast<size_t>(num_nodes));
    for (int n = 0; n < num_nodes; ++n) blocks[static_cast<size_t>(n)] = {n};
    return BlockPartition(std::move(blocks), num_nodes);
}

BlockPartition BlockPartition::global(int num_nodes) {
    std::vector<int> all(static_cast<size_t>(num_nodes));
    for (int n = 0; n < num_nodes; ++n) all[static_cast<size_t>(n)] = n;
    return BlockPartition({std::move(all)}, num_nodes);
}

std::int64_t block_entry_count(int num_labels, size_t block_size) {
    std::int64_t entries = 1;
    for (size_t i = 0; i < block_size; ++i) {
        entries *= num_labels;
        if (block_size > kBlockNodeCap && entries > kBlockEntryCap)
            throw UnsupportedBlockSize("block of " + std::to_string(block_size) +
                                       " nodes with " + std::to_string(num_labels) +
                                       " labels exceeds the enumeration cap");
    }
    return entries;
}

std::int64_t block_joint_index(std::span<const int> block, const Labeling& y, int num_labels) {
    std::int64_t idx = 0;
    for (int n : block) idx = idx * num_labels + y[static_cast<size_t>(n)];
    return idx;
}

static double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double log_potential_unary(const GridModel& model, const Weights& weights, int node, int label) {
    if (label < 0 || label >= model.num_labels())
        throw std::invalid_argument("log_potential_unary: label out of range");
    return dot(weights.unary(label), model.unary_features(node));
}

double log_potential_pairwise(const GridModel& model, const Weights& weights, int edge,
                              int label_a, int label_b) {
    if (label_a < 0 || label_a >= model.num_labels() || label_b < 0 ||
        label_b >= model.num_labels())
        throw std::invalid_argument("log_potential_pairwise: label out of range");
    return dot(weights.pairwise(label_a, label_b), model.pairwise_features(edge));
}

void check_labeling(const GridModel& model, const Labeling& y) {
    if (static_cast<int>(y.size()) != model.num_nodes())
        throw std::invalid_argument("labeling length does not match grid");
    for (int l : y)
        if (l < 0 || l >= model.num_labels())
            throw std::invalid_argument("labeling entry out of range");
}

double total_log_potential(const GridModel& model, const Weights& weights, const Labeling& y) {
    check_labeling(model, y);
    double total = 0.0;
    for (int n = 0; n < model.num_nodes(); ++n)
        total += dot(weights.unary(y[static_cast<size_t>(n)]), model.unary_features(n));
    for (int e = 0; e < model.num_edges(); ++e) {
        const Edge& ed = model.edge(e);
        total += dot(weights.pairwise(y[static_cast<size_t>(ed.a)], y[static_cast<size_t>(ed.b)]),
                     model.pairwise_features(e));
    }
    return total;
}

void node_scores(const GridModel& model, const Weights& weights, const Labeling& y,
                 int node, std::span<double> out) {
    const int K = model.num_labels();
    const auto feat = model.unary_features(node);
    for (int l = 0; l < K; ++l)
        out[static_cast<size_t>(l)] = dot(weights.unary(l), feat);
    for (int e : model.incident_edges(node)) {
        const Edge& ed = model.edge(e);
        const auto pf = model.pairwise_features(e);
        if (ed.a == node) {
            const int lb = y[static_cast<size_t>(ed.b)];
            for (int l = 0; l < K; ++l)
                out[static_cast<size_t>(l)] += dot(weights.pairwise(l, lb), pf);
        } else {
            const int la = y[static_cast<size_t>(ed.a)];
            for (int l = 0; l < K; ++l)
                out[static_cast<size_t>(l)] += dot(weights.pairwise(la, l), pf);
        }
    }
}

namespace {

// Per-block edge classification shared by block_scores and the learning code.
struct BlockEdges {
    // (position of a in block, position of b in block, edge id)
    std::vector<std::array<int, 3>> internal;
    // (position in block, edge id, neighbor node, block node is edge.a)
    struct Boundary {
        int pos;
        int edge;
        int neighbor;
        bool block_is_a;
    };
    std::vector<Boundary> boundary;
};

BlockEdges classify_block_edges(const GridModel& model, std::span<const int> block) {
    BlockEdges be;
    std::vector<int> pos_of(static_cast<size_t>(model.num_nodes()), -1);
    for (size_t t = 0; t < block.size(); ++t) {
        const int n = block[t];
        if (n < 0 || n >= model.num_nodes())
            throw std::invalid_argument("block node index out of range");
        pos_of[static_cast<size_t>(n)] = static_cast<int>(t);
    }
    std::vector<char> edge_seen(static_cast<size_t>(model.num_edges()), 0);
    for (int n : block) {
        for (int e : model.incident_edges(n)) {
            if (edge_seen[static_cast<size_t>(e)]) continue;
            edge_seen[static_cast<size_t>(e)] = 1;
            const Edge& ed = model.edge(e);
            const int pa = pos_of[static_cast<size_t>(ed.a)];
            const int pb = pos_of[static_cast<size_t>(ed.b)];
            if (pa >= 0 && pb >= 0)
                be.internal.push_back({pa, pb, e});
            else if (pa >= 0)
                be.boundary.push_back({pa, e, ed.b, true});
            else
                be.boundary.push_back({pb, e, ed.a, false});
        }
    }
    return be;
}

} // namespace

void block_scores(const GridModel& model, const Weights& weights, const Labeling& y,
                  std::span<const int> block, std::span<double> out) {
    const int K = model.num_labels();
    const std::int64_t entries = block_entry_count(K, block.size());
    if (static_cast<std::int64_t>(out.size()) != entries)
        throw std::invalid_argument("block_scores: output size mismatch");

    if (block.size() == 1 && block[0] >= 0) {
        node_scores(model, weights, y, block[0], out);
        return;
    }

    const BlockEdges be = classify_block_edges(model, block);
    std::vector<int> assign(block.size(), 0);
    for (std::int64_t idx = 0; idx < entries; ++idx) {
        double s = 0.0;
        for (size_t t = 0; t < block.size(); ++t)
            s += dot(weights.unary(assign[t]), model.unary_features(block[t]));
        for (const auto& [pa, pb, e] : be.internal)
            s += dot(weights.pairwise(assign[static_cast<size_t>(pa)],
                                      assign[static_cast<size_t>(pb)]),
                     model.pairwise_features(e));
        for (const auto& bd : be.boundary) {
            const int lb = y[static_cast<size_t>(bd.neighbor)];
            const int la = assign[static_cast<size_t>(bd.pos)];
            s += bd.block_is_a ? dot(weights.pairwise(la, lb), model.pairwise_features(bd.edge))
                               : dot(weights.pairwise(lb, la), model.pairwise_features(bd.edge));
        }
        out[static_cast<size_t>(idx)] = s;
        // odometer, last block node fastest
        for (int t = static_cast<int>(block.size()) - 1; t >= 0; --t) {
            if (++assign[static_cast<size_t>(t)] < K) break;
            assign[static_cast<size_t>(t)] = 0;
        }
    }
}

double softmax_inplace(std::span<double> scores) {
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - mx);
        sum += s;
    }
    for (double& s : scores) s /= sum;
    return mx + std::log(sum);
}

std::vector<double> block_conditional(const GridModel& model, const Weights& weights,
                                      const Labeling& y, std::span<const int> block) {
    check_labeling(model, y);
    const std::int64_t entries = block_entry_count(model.num_labels(), block.size());
    std::vector<double> probs(static_cast<size_t>(entries));
    block_scores(model, weights, y, block, probs);
    softmax_inplace(probs);
    return probs;
}

} // namespace gridcrf
