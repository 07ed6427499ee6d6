#pragma once

// Token feature fields on a 2D grid and the first-order gradient energy
// that drives merge decisions. All functions are pure; grids are plain
// value types and safe to share across threads.

#include <cstdint>
#include <string>
#include <vector>

#include "structmerge/errors.hpp"

namespace structmerge {

// H x W x C real-valued token field, row-major (h, w, c).
struct FeatureGrid {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> values;

    FeatureGrid() = default;
    FeatureGrid(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          values(static_cast<std::size_t>(h) * w * c, fill) {}

    int tokens() const { return height * width; }

    double& at(int h, int w, int c) {
        return values[(static_cast<std::size_t>(h) * width + w) * channels + c];
    }
    double at(int h, int w, int c) const {
        return values[(static_cast<std::size_t>(h) * width + w) * channels + c];
    }

    // Token index in row-major grid order.
    int index(int h, int w) const { return h * width + w; }

    // Throws ShapeError if dims are non-positive, the value count does not
    // match H*W*C, or any value is non-finite.
    void validate() const;
};

// Per-token scalar field with the same spatial dims as its source grid.
struct GradientField {
    int height = 0;
    int width = 0;
    std::vector<double> magnitudes;

    GradientField() = default;
    GradientField(int h, int w, double fill = 0.0)
        : height(h), width(w), magnitudes(static_cast<std::size_t>(h) * w, fill) {}

    double& at(int h, int w) { return magnitudes[static_cast<std::size_t>(h) * width + w]; }
    double at(int h, int w) const { return magnitudes[static_cast<std::size_t>(h) * width + w]; }
};

// A pair of per-token C-vector fields (same layout as FeatureGrid).
struct GradientPair {
    FeatureGrid gx;
    FeatureGrid gy;
};

// Clamped central differences: gx(h,w) = f(h, w+1) - f(h, w-1) with indices
// clamped to the border (replicate padding); gy analogous on h.
GradientPair central_diff_gradients(const FeatureGrid& grid);

// 3x3 Sobel convolution per channel, replicate padding. Kernels are the
// standard unnormalized [[-1,0,1],[-2,0,2],[-1,0,1]] and its transpose.
GradientPair sobel_gradients(const FeatureGrid& grid);

// magnitudes(h,w) = sqrt(sum_c gx^2 + sum_c gy^2)
GradientField gradient_magnitude(const GradientPair& grads);

enum class GradientOp { CentralDiff, Sobel };

// Convenience: gradient_magnitude of the selected operator.
GradientField gradient_energy(const FeatureGrid& grid, GradientOp op);

// Fully-connected energy surrogate: magnitude at token i is the mean cosine
// similarity of token i against all tokens (self included), tokens
// l2-normalized first. Throws ZeroNormError if any token has zero norm.
// Values lie in [-1, 1]; used for qualitative maps and cost comparison only.
GradientField pairwise_energy(const FeatureGrid& grid);

// JSON serialization: {"H":..,"W":..,"C":..,"values":[..]} (row-major).
std::string feature_grid_to_json(const FeatureGrid& grid);
FeatureGrid feature_grid_from_json(const std::string& text);

// CSV export: H rows x W comma-separated columns.
std::string gradient_field_to_csv(const GradientField& field);

}  // namespace structmerge
