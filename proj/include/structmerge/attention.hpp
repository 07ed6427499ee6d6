#pragma once

// Toy merge-compute-unmerge attention pipeline over a windowed/global layer
// schedule. Projections are seeded and fixed; the simulator verifies
// mechanics and cost, not learned behavior.

#include <cstdint>

#include <Eigen/Dense>

#include "structmerge/cells.hpp"
#include "structmerge/merge.hpp"

namespace structmerge {

struct AttentionParams {
    int heads = 1;
    std::uint64_t seed = 0;
};

// Fixed N(0, 1/sqrt(C)) projection weights derived from the seed.
Eigen::MatrixXd seeded_projection(int channels, std::uint64_t seed);

// Scaled-dot-product attention with explicit projections: per head,
// softmax(q k^T / sqrt(d_head)) v with q = tokens*wq etc. No output
// projection, so a single token yields exactly its value projection.
// Throws ShapeError unless heads divides C.
Eigen::MatrixXd attention_with_weights(const Eigen::MatrixXd& tokens, const Eigen::MatrixXd& wq,
                                       const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv,
                                       int heads);

// Same with q/k/v projections derived from params.seed.
Eigen::MatrixXd attention(const Eigen::MatrixXd& tokens, const AttentionParams& params);

// Window-grouped variant: tokens carry their original grid positions so
// merged token sets can be grouped back into their attention windows.
// For WindowKind::Global this is one attention over all rows.
Eigen::MatrixXd windowed_attention(const Eigen::MatrixXd& tokens,
                                   const std::vector<int>& token_positions, int grid_width,
                                   const WindowLayout& layout, const AttentionParams& params);

// merge -> attention on the merged set (grouped by original window for
// local layers) -> unmerge. Output shape always equals the input grid.
FeatureGrid merge_compute_unmerge_block(const FeatureGrid& grid, const MergePlan& plan,
                                        const WindowLayout& layout,
                                        const AttentionParams& params);

}  // namespace structmerge
