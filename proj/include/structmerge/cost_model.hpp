#pragma once

// Arithmetic cost model (multiply-accumulates) for a SAM-style encoder
// schedule: per-layer QKV/projection, attention-matrix, MLP, energy
// estimation and merge bookkeeping terms, with and without merging.

#include <cstdint>
#include <string>
#include <vector>

#include "structmerge/errors.hpp"

namespace structmerge {

enum class EnergyMethod { Pairwise, CentralDiff, Sobel };

// MAC count of one energy-estimation pass over N tokens with C channels.
// pairwise: N^2 * d_sim (similarity dim d_sim); central_diff: N*(4C+1);
// sobel: N*(24C+1) - two 6-tap kernels per direction plus the magnitude.
std::uint64_t energy_cost(std::uint64_t tokens, std::uint64_t channels, EnergyMethod method,
                          std::uint64_t d_sim = 64);

enum class LayerKind { Local, Global };

struct LayerSpec {
    LayerKind kind = LayerKind::Local;
    double rate = 0.0;  // merge rate r in [0, 1)
    int cell = 2;       // s
};

struct ModelDims {
    int height = 64;  // token grid
    int width = 64;
    int channels = 768;
    int window = 14;       // local attention window side
    int patch = 16;        // pixels per token side
    double mlp_ratio = 4.0;
    int d_sim = 64;        // similarity dim of the pairwise energy baseline
};

struct LayerSchedule {
    ModelDims dims;
    std::vector<LayerSpec> layers;
};

// SAM presets: vitb = 12 layers, C=768, global attention every third layer;
// vitl = 24 layers, C=1024, global every sixth.
LayerSchedule preset_schedule(const std::string& name, double rate = 0.0, int cell = 2);

// How merging discounts the per-layer terms. AttentionBlock (default)
// scales QKV/proj and the attention matrix by the post-merge count and
// keeps the MLP dense, matching a merge -> attention -> unmerge placement.
enum class MergeCostMode { AttentionOnly, AttentionBlock, FullBlock };

struct LayerCost {
    int layer = 0;
    LayerKind kind = LayerKind::Local;
    double qkv = 0.0;
    double attention = 0.0;
    double mlp = 0.0;
    double energy = 0.0;
    double bookkeeping = 0.0;
    double total() const { return qkv + attention + mlp + energy + bookkeeping; }
};

struct CostReport {
    std::vector<LayerCost> layers;      // merged run
    double patch_embed = 0.0;
    double merged_total = 0.0;
    double baseline_total = 0.0;        // same schedule at r = 0
    double reduction = 0.0;             // 1 - merged/baseline
    double merged_total_attention_only = 0.0;  // alternate discount modes
    double merged_total_full_block = 0.0;
};

// Post-merge token count: H*W - ceil(r*H*W/(s^2-1)) * (s^2-1), clamped.
std::uint64_t merged_token_count(double rate, int height, int width, int cell);

// Per-layer terms: qkv/proj = 4*N_eff*C^2, mlp = 2*mlp_ratio*N_eff*C^2,
// attention = 2 * sum_w N_w^2 * C over (padded) window populations, plus
// the energy pass for merged layers and the patch-embedding cost
// H*W*C*(patch^2*3). Local windows pad the grid up to the next window
// multiple; merged window populations scale uniformly.
CostReport encoder_cost(const LayerSchedule& schedule,
                        MergeCostMode mode = MergeCostMode::AttentionBlock,
                        EnergyMethod energy_method = EnergyMethod::CentralDiff);

}  // namespace structmerge
