#pragma once

// Weighted token graphs, cosine affinity construction, graph coarsening and
// lifting, and the combinatorial / normalized Laplacians.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "structmerge/errors.hpp"

namespace structmerge {

using Partition = std::vector<std::vector<int>>;

// Throws PartitionError unless the groups are nonempty, disjoint and cover
// [0, n).
void validate_partition(const Partition& partition, int n);

// Symmetric nonnegative weight matrix with an optional node partition.
// The diagonal is zero unless self-loops were introduced (by lifting, by
// degree flooring, or by an affinity built with self-loops).
struct TokenGraph {
    Eigen::MatrixXd weights;
    std::optional<Partition> partition;
    bool degree_floored = false;

    int size() const { return static_cast<int>(weights.rows()); }
    Eigen::VectorXd degrees() const { return weights.rowwise().sum(); }
};

// Minimum degree guaranteed after flooring.
inline constexpr double kDegreeFloor = 1e-6;

// W[i,j] = (1 + cos(v_i, v_j)) / 2 on l2-normalized tokens. The map
// x -> (1+x)/2 keeps weights in [0,1]. With include_self_loops the diagonal
// carries the self-similarity value 1; otherwise it is zero. If any degree
// falls below kDegreeFloor, a minimal uniform self-loop is added to every
// node and degree_floored is set. Throws ZeroNormError on zero-norm tokens.
TokenGraph cosine_affinity_graph(const Eigen::MatrixXd& tokens, bool include_self_loops = false);

struct Laplacians {
    Eigen::MatrixXd combinatorial;  // L = D - W
    Eigen::MatrixXd normalized;     // I - D^{-1/2} W D^{-1/2}
};

// Requires all degrees > 0 (guaranteed for floored graphs).
Laplacians laplacians(const TokenGraph& graph);

enum class CoarseningConvention { BlockAverage, BlockSum };

// Collapses every partition group into one node. Block-average entries are
// the mean over the block of the dense weight matrix (u = v diagonal terms
// included); block-sum entries are the plain block sum.
TokenGraph coarsen(const TokenGraph& graph, const Partition& partition,
                   CoarseningConvention convention);

// Expands a coarse graph back to the original node set with constant
// blocks, self-loop diagonal entries included. The coarse node count must
// equal the group count.
TokenGraph lift(const TokenGraph& coarse, const Partition& partition, int original_nodes);

// JSON: {"N":..,"weights":[..row-major..],"partition":[[..],..]?}
std::string token_graph_to_json(const TokenGraph& graph);
TokenGraph token_graph_from_json(const std::string& text);

}  // namespace structmerge
