#include "structmerge/cost_model.hpp"

#include <cmath>

namespace structmerge {

std::uint64_t energy_cost(std::uint64_t tokens, std::uint64_t channels, EnergyMethod method,
                          std::uint64_t d_sim) {
    switch (method) {
        case EnergyMethod::Pairwise: return tokens * tokens * d_sim;
        case EnergyMethod::CentralDiff: return tokens * (4 * channels + 1);
        case EnergyMethod::Sobel: return tokens * (2 * 11 * channels + 2 * channels + 1);
    }
    return 0;
}

LayerSchedule preset_schedule(const std::string& name, double rate, int cell) {
    LayerSchedule s;
    int layers = 0, global_every = 0;
    if (name == "vitb") {
        s.dims.channels = 768;
        layers = 12;
        global_every = 3;
    } else if (name == "vitl") {
        s.dims.channels = 1024;
        layers = 24;
        global_every = 6;
    } else {
        throw IoError("unknown preset: " + name);
    }
    for (int i = 0; i < layers; ++i) {
        LayerSpec spec;
        spec.kind = (i + 1) % global_every == 0 ? LayerKind::Global : LayerKind::Local;
        spec.rate = rate;
        spec.cell = cell;
        s.layers.push_back(spec);
    }
    return s;
}

std::uint64_t merged_token_count(double rate, int height, int width, int cell) {
    if (rate < 0.0 || rate >= 1.0) throw RateError("merged_token_count: 0 <= r < 1");
    const std::uint64_t total = static_cast<std::uint64_t>(height) * width;
    const std::uint64_t cell_sz = static_cast<std::uint64_t>(cell) * cell;
    if (cell_sz < 2) throw ShapeError("merged_token_count: cell size must be >= 2");
    std::uint64_t m = static_cast<std::uint64_t>(
        std::ceil(rate * static_cast<double>(total) / static_cast<double>(cell_sz - 1)));
    m = std::min(m, total / cell_sz);
    return total - m * (cell_sz - 1);
}

namespace {

struct LayerTerms {
    double qkv, attention, mlp, energy, bookkeeping;
};

LayerTerms layer_terms(const ModelDims& dims, const LayerSpec& spec, MergeCostMode mode,
                       EnergyMethod energy_method) {
    const double total = static_cast<double>(dims.height) * dims.width;
    const double kept =
        static_cast<double>(merged_token_count(spec.rate, dims.height, dims.width, spec.cell));
    const double keep_frac = kept / total;
    const double c = static_cast<double>(dims.channels);
    const bool merged = spec.rate > 0.0;

    const double n_qkv = mode == MergeCostMode::AttentionOnly ? total : kept;
    const double n_mlp = mode == MergeCostMode::FullBlock ? kept : total;

    LayerTerms t{};
    t.qkv = 4.0 * n_qkv * c * c;
    t.mlp = 2.0 * dims.mlp_ratio * n_mlp * c * c;

    if (spec.kind == LayerKind::Global) {
        t.attention = 2.0 * kept * kept * c;
    } else {
        // pad the grid up to the window multiple; merging thins every
        // window uniformly in the model
        const auto pad = [](int n, int w) { return (n + w - 1) / w; };
        const double windows = static_cast<double>(pad(dims.height, dims.window)) *
                               pad(dims.width, dims.window);
        const double population =
            static_cast<double>(dims.window) * dims.window * (merged ? keep_frac : 1.0);
        t.attention = 2.0 * windows * population * population * c;
    }
    if (merged) {
        t.energy = static_cast<double>(energy_cost(static_cast<std::uint64_t>(total),
                                                   static_cast<std::uint64_t>(dims.channels),
                                                   energy_method,
                                                   static_cast<std::uint64_t>(dims.d_sim)));
        t.bookkeeping = total * c;  // cell averaging on the way in
    }
    return t;
}

double schedule_total(const LayerSchedule& schedule, MergeCostMode mode,
                      EnergyMethod energy_method, bool zero_rates) {
    double total = static_cast<double>(schedule.dims.height) * schedule.dims.width *
                   schedule.dims.channels *
                   (static_cast<double>(schedule.dims.patch) * schedule.dims.patch * 3.0);
    for (const auto& layer : schedule.layers) {
        LayerSpec spec = layer;
        if (zero_rates) spec.rate = 0.0;
        const LayerTerms t = layer_terms(schedule.dims, spec, mode, energy_method);
        total += t.qkv + t.attention + t.mlp + t.energy + t.bookkeeping;
    }
    return total;
}

}  // namespace

CostReport encoder_cost(const LayerSchedule& schedule, MergeCostMode mode,
                        EnergyMethod energy_method) {
    CostReport report;
    report.patch_embed = static_cast<double>(schedule.dims.height) * schedule.dims.width *
                         schedule.dims.channels *
                         (static_cast<double>(schedule.dims.patch) * schedule.dims.patch * 3.0);
    double merged = report.patch_embed;
    for (std::size_t i = 0; i < schedule.layers.size(); ++i) {
        const LayerTerms t = layer_terms(schedule.dims, schedule.layers[i], mode, energy_method);
        LayerCost lc;
        lc.layer = static_cast<int>(i);
        lc.kind = schedule.layers[i].kind;
        lc.qkv = t.qkv;
        lc.attention = t.attention;
        lc.mlp = t.mlp;
        lc.energy = t.energy;
        lc.bookkeeping = t.bookkeeping;
        report.layers.push_back(lc);
        merged += lc.total();
    }
    report.merged_total = merged;
    report.baseline_total = schedule_total(schedule, mode, energy_method, /*zero_rates=*/true);
    report.reduction = 1.0 - report.merged_total / report.baseline_total;
    report.merged_total_attention_only =
        schedule_total(schedule, MergeCostMode::AttentionOnly, energy_method, false);
    report.merged_total_full_block =
        schedule_total(schedule, MergeCostMode::FullBlock, energy_method, false);
    return report;
}

}  // namespace structmerge
