#pragma once

// Applying merge plans to feature grids (merge / unmerge) and the
// non-score-guided baseline planners used for comparison.

#include <cstdint>
#include <string>
#include <vector>

#include "structmerge/cells.hpp"
#include "structmerge/feature_grid.hpp"

namespace structmerge {

// The reduced token set produced by a merge. Rows follow the ascending
// original index order of the kept set B.
struct MergedTokens {
    int channels = 0;
    std::vector<double> features;  // |B| x C, row-major
    std::vector<int> kept_index;   // merged row -> original token index

    int rows() const { return static_cast<int>(kept_index.size()); }
    double* row(int r) { return features.data() + static_cast<std::size_t>(r) * channels; }
    const double* row(int r) const {
        return features.data() + static_cast<std::size_t>(r) * channels;
    }
    // Position of an original kept index in the row order; -1 if absent.
    int row_of(int original_index) const;
};

// Destination rows carry the unweighted mean over their merge group
// (destination included); kept tokens outside any group pass through.
MergedTokens apply_merge(const FeatureGrid& grid, const MergePlan& plan);

// Restores the full H x W x C grid: every source token receives the
// (possibly attention-updated) feature of its destination's row; kept
// tokens receive their own row.
FeatureGrid apply_unmerge(const MergedTokens& merged, const MergePlan& plan);

// --- baseline planners --------------------------------------------------------

// Cells taken in scan order until the rate target is met; the first token
// of each cell (row-major) is the destination.
MergePlan stride_plan(const CellPartition& partition, double rate);

// Cells and in-cell destinations drawn uniformly from the seeded generator.
MergePlan random_plan(const CellPartition& partition, double rate, std::uint64_t seed);

// Single-round parity matching: odd-index tokens are matched to their most
// cosine-similar even-index token and the ceil(r*H*W) highest-similarity
// matches merge into their destinations. Seed-free and content-driven.
MergePlan bipartite_plan(const FeatureGrid& grid, double rate);

// Content-independent free pairing: M*(s^2-1) uniformly chosen source
// tokens, each assigned to a uniformly random kept token. This is the
// random-destination baseline of the stability comparison; unlike the
// cell-atomic planners its pairs may span cells (never windows, since it is
// built per window).
MergePlan random_pairing_plan(int height, int width, double rate, int cell_w, int cell_h,
                              std::uint64_t seed);

// MergedTokens round-trip serialization (FeatureGrid layout plus kept_index).
std::string merged_tokens_to_json(const MergedTokens& merged);
MergedTokens merged_tokens_from_json(const std::string& text);

}  // namespace structmerge
