#pragma once

// Window-aligned cell partitioning, flatness ranking, and merge-plan
// construction (the gradient-guided token partitioning step plus its
// ablation and prompt-aware variants).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "structmerge/errors.hpp"
#include "structmerge/feature_grid.hpp"

namespace structmerge {

enum class WindowKind { Local, Global };

struct WindowLayout {
    int window_h = 0;  // ignored for Global
    int window_w = 0;
    WindowKind kind = WindowKind::Global;

    static WindowLayout global() { return {0, 0, WindowKind::Global}; }
    static WindowLayout local(int wh, int ww) { return {wh, ww, WindowKind::Local}; }
};

struct CellPartition {
    int height = 0;
    int width = 0;
    int cell_h = 0;  // s_y
    int cell_w = 0;  // s_x
    std::vector<std::vector<int>> cells;  // token indices, row-major within cell
    std::vector<int> window_of;           // owning window id per cell

    int cell_count() const { return static_cast<int>(cells.size()); }
    int cell_size() const { return cell_h * cell_w; }
};

// Merge plan: disjoint source set A and kept set B covering all tokens,
// with a total assignment pi: A -> B. Cell-structured plans also carry the
// (cell id, destination) list; baseline plans that pair tokens freely leave
// mergeable_cells empty.
struct MergePlan {
    int height = 0;
    int width = 0;
    int cell_h = 1;
    int cell_w = 1;
    double rate = 0.0;
    std::vector<int> sources;                        // A, ascending
    std::vector<int> kept;                           // B, ascending
    std::map<int, int> assignment;                   // pi: source -> destination (in B)
    std::vector<std::pair<int, int>> mergeable_cells;  // (cell id, destination token)
    std::vector<int> protected_cells;

    int tokens() const { return height * width; }

    // Merge groups: destination plus every source assigned to it, ascending
    // indices, groups ordered by destination. Singletons are not included.
    std::vector<std::vector<int>> merge_groups() const;

    // Full token partition: merge groups plus singletons for untouched kept
    // tokens. Groups ordered by smallest member.
    std::vector<std::vector<int>> partition() const;

    // Throws if the structural invariants do not hold (A/B disjoint cover,
    // pi total on A into B, |B| accounting).
    void validate() const;
};

// --- partitioning -----------------------------------------------------------

// Tiles the grid into s_x-by-s_y cells that never cross attention windows.
// Cells are enumerated row-major by window, then row-major within the
// window; tokens row-major within each cell. Throws DivisibilityError when
// the window does not tile the grid or the cell does not tile the window.
CellPartition partition_cells(int height, int width, const WindowLayout& layout,
                              int cell_w, int cell_h);

enum class FlatnessAggregation { Max, Mean };

// score_m = -agg(G over cell); higher = flatter.
std::vector<double> cell_flatness(const CellPartition& partition, const GradientField& energy,
                                  FlatnessAggregation aggregation);

// ceil(r*H*W / (sx*sy - 1)), clamped to the total cell count.
// Throws RateError unless 0 <= r < 1.
int mergeable_cell_count(double rate, int height, int width, int cell_w, int cell_h);

// Top-M cells by score (ties to the smaller cell id); rest protected.
std::pair<std::vector<int>, std::vector<int>> select_mergeable_cells(
    const std::vector<double>& scores, int mergeable);

// argmax over the cell of sign*score (ties to the smallest token index).
// sign = -1 selects the minimum-score token (gradient magnitudes),
// sign = +1 the maximum (energy scores).
int select_destination(const std::vector<int>& cell_tokens, const GradientField& score, int sign);

struct DstRule {
    enum Kind { MinGrad, MaxGrad, Random } kind = MinGrad;
    std::uint64_t seed = 0;
    static DstRule min_grad() { return {MinGrad, 0}; }
    static DstRule max_grad() { return {MaxGrad, 0}; }
    static DstRule random(std::uint64_t s) { return {Random, s}; }
};

struct CellRule {
    enum Kind { FlatnessMax, FlatnessMean, Random } kind = FlatnessMax;
    std::uint64_t seed = 0;
    static CellRule flatness(FlatnessAggregation agg) {
        return {agg == FlatnessAggregation::Max ? FlatnessMax : FlatnessMean, 0};
    }
    static CellRule random(std::uint64_t s) { return {Random, s}; }
};

// Full plan construction: select mergeable cells, pick destinations, emit A,
// B and pi. Defaults (flatness-max cells, min-gradient destinations)
// reproduce the reference procedure end to end.
MergePlan build_merge_plan(const CellPartition& partition, const GradientField& energy,
                           double rate, DstRule dst = DstRule::min_grad(),
                           CellRule cell = CellRule{});

// --- prompt-aware variant ----------------------------------------------------

// Pixel rectangle, inclusive corners.
struct PixelBox {
    int top = 0, left = 0, bottom = 0, right = 0;
};

// Tight axis-aligned bounding box over mask pixels with value > 128.
// Throws EmptyMaskError if no pixel qualifies.
struct MaskImage {
    int height = 0;
    int width = 0;
    std::vector<int> pixels;  // row-major, values in [0, 255]
    int at(int h, int w) const { return pixels[static_cast<std::size_t>(h) * width + w]; }
};

PixelBox box_from_mask(const MaskImage& mask);

// Box corners mapped to token space (floor for the min corner, ceil for the
// max corner); cells intersecting the token rectangle merge at rate_inside,
// the rest at rate_outside, each with the cell-count formula restricted to
// its own population. rate_inside == rate_outside degenerates to the plain
// plan. Throws BoxError on an inverted box.
MergePlan prompt_aware_plan(const CellPartition& partition, const GradientField& energy,
                            const PixelBox& box, int patch_size, double rate_inside,
                            double rate_outside, DstRule dst = DstRule::min_grad(),
                            FlatnessAggregation aggregation = FlatnessAggregation::Max);

// --- no-cell ablation ---------------------------------------------------------

// Grid-wide variant without cell structure: the M*(s^2-1) lowest-energy
// tokens become sources, each assigned to the nearest kept token
// (Euclidean distance on the grid, ties to the smaller index).
MergePlan no_cell_plan(int height, int width, const GradientField& energy, double rate,
                       int cell_w, int cell_h);

// --- serialization -------------------------------------------------------------

// {"r":..,"s_x":..,"s_y":..,"mergeable_cells":[{"cell":..,"dst":..}],
//  "pi":[{"src":..,"dst":..}]} plus grid dims.
std::string merge_plan_to_json(const MergePlan& plan);
MergePlan merge_plan_from_json(const std::string& text);

// Masks: binary PGM (P5, maxval <= 255) or flat CSV of integers.
MaskImage read_mask_pgm(const std::string& bytes);
MaskImage read_mask_csv(const std::string& text);

}  // namespace structmerge
