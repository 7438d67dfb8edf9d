#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridcrf {

// One label per grid node, raster order (row-major), each in [0, num_labels).
using Labeling = std::vector<int>;

struct Edge {
    int a; // lower node index
    int b; // higher node index
};

struct UnsupportedBlockSize : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Grid-structured model: 4-connected height x width lattice with per-node
// unary feature vectors and per-edge pairwise feature vectors. Edges are in
// canonical order: raster scan, right neighbor then down neighbor.
// Immutable after construction apart from feature assignment.
class GridModel {
public:
    GridModel(int height, int width, int num_labels, int d_unary, int d_pairwise);

    int height() const { return height_; }
    int width() const { return width_; }
    int num_labels() const { return num_labels_; }
    int d_unary() const { return d_unary_; }
    int d_pairwise() const { return d_pairwise_; }
    int num_nodes() const { return height_ * width_; }
    int num_edges() const { return static_cast<int>(edges_.size()); }

    int node_index(int row, int col) const { return row * width_ + col; }

    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(int e) const { return edges_[static_cast<size_t>(e)]; }

    // Edge ids incident to a node (at most 4).
    std::span<const int> incident_edges(int node) const;

    std::span<double> unary_features(int node);
    std::span<const double> unary_features(int node) const;
    std::span<double> pairwise_features(int edge);
    std::span<const double> pairwise_features(int edge) const;

    // Throws std::invalid_argument on any non-finite feature entry.
    void validate() const;

private:
    void check_node(int node) const;
    void check_edge(int edge) const;

    int height_, width_, num_labels_, d_unary_, d_pairwise_;
    std::vector<Edge> edges_;
    std::vector<double> unary_feat_;    // num_nodes x d_unary
    std::vector<double> pairwise_feat_; // num_edges x d_pairwise
    std::vector<int> incident_offsets_; // CSR over nodes
    std::vector<int> incident_ids_;
};

// Log-linear parameters: one unary weight vector per label, one pairwise
// weight vector per ordered label pair. With symmetric_pairwise set the
// table is constrained to w[a,b] == w[b,a].
class Weights {
public:
    Weights(int num_labels, int d_unary, int d_pairwise, bool symmetric_pairwise = false);

    int num_labels() const { return num_labels_; }
    int d_unary() const { return d_unary_; }
    int d_pairwise() const { return d_pairwise_; }
    bool symmetric_pairwise() const { return symmetric_; }
    void set_symmetric_pairwise(bool s) { symmetric_ = s; }

    std::span<double> unary(int label);
    std::span<const double> unary(int label) const;
    std::span<double> pairwise(int label_a, int label_b);
    std::span<const double> pairwise(int label_a, int label_b) const;

    // Flat storage, label-major: unary K x d_unary, pairwise K x K x d_pairwise.
    std::vector<double>& unary_flat() { return unary_; }
    const std::vector<double>& unary_flat() const { return unary_; }
    std::vector<double>& pairwise_flat() { return pairwise_; }
    const std::vector<double>& pairwise_flat() const { return pairwise_; }

    // Throws std::invalid_argument on non-finite entries or, when the
    // symmetric flag is set, on an asymmetric pairwise table.
    void validate() const;

private:
    int num_labels_, d_unary_, d_pairwise_;
    bool symmetric_;
    std::vector<double> unary_;
    std::vector<double> pairwise_;
};

// Disjoint blocks of node indices. Blocks need not cover every node; the
// default construction helpers cover all of them. Per-block joint labels are
// indexed mixed-radix with the first listed node most significant.
class BlockPartition {
public:
    BlockPartition(std::vector<std::vector<int>> blocks, int num_nodes);

    static BlockPartition singletons(int num_nodes);
    static BlockPartition global(int num_nodes);

    const std::vector<std::vector<int>>& blocks() const { return blocks_; }
    int num_nodes() const { return num_nodes_; }
    size_t num_blocks() const { return blocks_.size(); }

private:
    std::vector<std::vector<int>> blocks_;
    int num_nodes_;
};

// Entry cap for joint block enumeration. A block is admissible when it has
// at most 4 nodes or at most 256 joint labels, whichever is more permissive.
inline constexpr int kBlockNodeCap = 4;
inline constexpr std::int64_t kBlockEntryCap = 256;

// Number of joint labels K^|block|; throws UnsupportedBlockSize over the cap.
std::int64_t block_entry_count(int num_labels, size_t block_size);

// Mixed-radix joint index of y restricted to the block (first node most
// significant).
std::int64_t block_joint_index(std::span<const int> block, const Labeling& y, int num_labels);

double log_potential_unary(const GridModel& model, const Weights& weights, int node, int label);
double log_potential_pairwise(const GridModel& model, const Weights& weights, int edge,
                              int label_a, int label_b);

// Sum of all unary and pairwise log-potentials of y.
double total_log_potential(const GridModel& model, const Weights& weights, const Labeling& y);

// Unnormalized log-scores of every joint assignment of the block with the
// rest of y held fixed: all unary terms of block nodes plus every edge
// touching the block. Output has block_entry_count entries.
void block_scores(const GridModel& model, const Weights& weights, const Labeling& y,
                  std::span<const int> block, std::span<double> out);

// Convenience for singleton blocks: scores for every label of `node`.
void node_scores(const GridModel& model, const Weights& weights, const Labeling& y,
                 int node, std::span<double> out);

// Exact conditional p(y'_block | y_rest) for every joint assignment of the
// block; softmax of block_scores with max-subtraction.
std::vector<double> block_conditional(const GridModel& model, const Weights& weights,
                                      const Labeling& y, std::span<const int> block);

// In-place softmax with max-subtraction; returns log of the normalizer
// (log-sum-exp of the input).
double softmax_inplace(std::span<double> scores);

void check_labeling(const GridModel& model, const Labeling& y);

} // namespace gridcrf
