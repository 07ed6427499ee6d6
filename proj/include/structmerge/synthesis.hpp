#pragma once

// Synthetic token windows with controllable margin separation and noise,
// merge-correctness bookkeeping, and the stability-comparison trials
// (score-guided vs stride / random-destination / bipartite baselines).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "structmerge/spectral.hpp"

namespace structmerge {

// A window of unit-norm tokens with a ground-truth region partition whose
// realized within-region cosines dominate every cross-region cosine.
struct RegionWindow {
    int height = 0;
    int width = 0;
    Eigen::MatrixXd tokens;        // N x C, rows unit norm
    Partition regions;             // ground truth over token indices
    Eigen::MatrixXd region_means;  // k x C unit rows
    double margin = 0.0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    int rejections = 0;  // resamples needed before separation held
};

// Region layout: one region id per token (cell alignment is the caller's
// responsibility; a vertical half split is provided below).
using RegionLayout = std::vector<int>;

RegionLayout half_split_layout(int height, int width);

// Cells of size s straddle the region boundary when the split is shifted
// off the cell grid; used to probe the cross-region regime.
RegionLayout straddling_layout(int height, int width, int cell_w);

// Tokens are normalize(mean_region + noise * g) with g standard normal from
// the seeded generator. Region mean directions have pairwise cosine
// min(margin - 0.2, ...) clamped to the feasible range. A sample is
// accepted only when min within-region cosine >= max cross-region cosine;
// after 100 rejections SeparabilityError is thrown.
RegionWindow synth_window(int height, int width, const RegionLayout& layout, double margin,
                          double noise, int channels, std::uint64_t seed);

struct CorrectnessReport {
    std::vector<int> event_flags;  // 1 = within-region step
    double cross_rate = 0.0;       // delta-hat: fraction of cross-region steps
};

// Recomputes within-region event flags from the trace's merge order and the
// ground truth; a step is within-region iff all original constituents of
// both merged entities lie in a single region.
CorrectnessReport merge_correctness(const MergeTrace& trace, const MergePlan& plan,
                                    const Partition& ground_truth);

enum class MergeStrategy { ScoreGuided, Stride, RandomDst, Bipartite };

std::string strategy_name(MergeStrategy s);

struct TrialConfig {
    std::vector<double> noise_grid{0.0, 0.02, 0.05, 0.1};
    double margin = 0.5;
    int height = 16;
    int width = 16;
    int channels = 16;
    int cell = 2;     // s
    double rate = 0.5;
    int trials = 50;
    std::uint64_t seed = 7;
    std::vector<MergeStrategy> strategies{MergeStrategy::ScoreGuided, MergeStrategy::Stride,
                                          MergeStrategy::RandomDst, MergeStrategy::Bipartite};
    GradientOp gradient_op = GradientOp::CentralDiff;
    bool straddling = false;  // probe layout with cells split between regions
};

struct TrialCell {
    double noise = 0.0;
    MergeStrategy strategy = MergeStrategy::ScoreGuided;
    int trials = 0;
    double mean_sd = 0.0;
    double mean_terminal = 0.0;
    double delta_hat = 0.0;   // aggregated cross-region step rate
    double mean_within_cos = 0.0;
    double drift_delta_ratio = 0.0;  // mean one-step drift / Delta over probe trace
    bool skipped = false;            // separability failed at this level
};

struct TrialReport {
    TrialConfig config;
    std::vector<TrialCell> cells;
    std::vector<int> skipped_levels;
};

// Runs trials: per (noise level, trial) one window is synthesized and every
// strategy plans/traces on it; per-level aggregation. SeparabilityError at
// a level marks it skipped. Deterministic given the seed.
TrialReport theorem_trial(const TrialConfig& config);

// CSV with columns exactly (noise, strategy, mean_sd, delta_hat, mean_cos, trials).
std::string trial_report_to_csv(const TrialReport& report);

}  // namespace structmerge
