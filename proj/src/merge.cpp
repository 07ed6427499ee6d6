#include "structmerge/merge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"

namespace structmerge {

int MergedTokens::row_of(int original_index) const {
    const auto it = std::lower_bound(kept_index.begin(), kept_index.end(), original_index);
    if (it == kept_index.end() || *it != original_index) return -1;
    return static_cast<int>(it - kept_index.begin());
}

MergedTokens apply_merge(const FeatureGrid& grid, const MergePlan& plan) {
    grid.validate();
    if (grid.height != plan.height || grid.width != plan.width)
        throw ShapeError("apply_merge: plan dims do not match grid");
    const int C = grid.channels;

    MergedTokens out;
    out.channels = C;
    out.kept_index = plan.kept;
    out.features.assign(static_cast<std::size_t>(plan.kept.size()) * C, 0.0);
    for (int r = 0; r < out.rows(); ++r) {
        const double* src = grid.values.data() + static_cast<std::size_t>(out.kept_index[r]) * C;
        std::copy(src, src + C, out.row(r));
    }
    for (const auto& group : plan.merge_groups()) {
        // group = destination plus its sources; exactly one member is kept
        int dst_row = -1;
        for (int t : group) {
            const int r = out.row_of(t);
            if (r >= 0) dst_row = r;
        }
        double* acc = out.row(dst_row);
        std::fill(acc, acc + C, 0.0);
        for (int t : group) {
            const double* f = grid.values.data() + static_cast<std::size_t>(t) * C;
            for (int c = 0; c < C; ++c) acc[c] += f[c];
        }
        const double inv = 1.0 / static_cast<double>(group.size());
        for (int c = 0; c < C; ++c) acc[c] *= inv;
    }
    return out;
}

FeatureGrid apply_unmerge(const MergedTokens& merged, const MergePlan& plan) {
    if (merged.rows() != static_cast<int>(plan.kept.size()) ||
        merged.kept_index != plan.kept)
        throw ShapeError("apply_unmerge: merged rows inconsistent with plan");
    FeatureGrid grid(plan.height, plan.width, merged.channels);
    const int C = merged.channels;
    for (int r = 0; r < merged.rows(); ++r) {
        double* dst = grid.values.data() + static_cast<std::size_t>(merged.kept_index[r]) * C;
        std::copy(merged.row(r), merged.row(r) + C, dst);
    }
    for (const auto& [src, dst] : plan.assignment) {
        const int r = merged.row_of(dst);
        double* out = grid.values.data() + static_cast<std::size_t>(src) * C;
        std::copy(merged.row(r), merged.row(r) + C, out);
    }
    return grid;
}

namespace {

MergePlan plan_from_cells(const CellPartition& partition, double rate,
                          const std::vector<int>& mergeable_ids,
                          const std::vector<int>& destinations) {
    MergePlan plan;
    plan.height = partition.height;
    plan.width = partition.width;
    plan.cell_h = partition.cell_h;
    plan.cell_w = partition.cell_w;
    plan.rate = rate;
    std::vector<char> is_merge(partition.cell_count(), 0);
    for (std::size_t k = 0; k < mergeable_ids.size(); ++k) {
        const int cid = mergeable_ids[k];
        is_merge[cid] = 1;
        plan.mergeable_cells.emplace_back(cid, destinations[k]);
        for (int t : partition.cells[cid])
            if (t != destinations[k]) {
                plan.sources.push_back(t);
                plan.assignment[t] = destinations[k];
            }
    }
    for (int c = 0; c < partition.cell_count(); ++c)
        if (!is_merge[c]) plan.protected_cells.push_back(c);
    std::sort(plan.sources.begin(), plan.sources.end());
    std::vector<char> is_source(plan.tokens(), 0);
    for (int t : plan.sources) is_source[t] = 1;
    for (int t = 0; t < plan.tokens(); ++t)
        if (!is_source[t]) plan.kept.push_back(t);
    plan.validate();
    return plan;
}

}  // namespace

MergePlan stride_plan(const CellPartition& partition, double rate) {
    const int m = mergeable_cell_count(rate, partition.height, partition.width,
                                       partition.cell_w, partition.cell_h);
    std::vector<int> ids(m);
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<int> dsts(m);
    for (int k = 0; k < m; ++k) dsts[k] = partition.cells[k].front();
    return plan_from_cells(partition, rate, ids, dsts);
}

MergePlan random_plan(const CellPartition& partition, double rate, std::uint64_t seed) {
    const int m = mergeable_cell_count(rate, partition.height, partition.width,
                                       partition.cell_w, partition.cell_h);
    std::mt19937_64 rng(seed);
    std::vector<int> ids(partition.cell_count());
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
    std::vector<int> dsts(m);
    for (int k = 0; k < m; ++k) {
        const auto& cell = partition.cells[ids[k]];
        std::uniform_int_distribution<std::size_t> pick(0, cell.size() - 1);
        dsts[k] = cell[pick(rng)];
    }
    return plan_from_cells(partition, rate, ids, dsts);
}

MergePlan bipartite_plan(const FeatureGrid& grid, double rate) {
    grid.validate();
    if (rate < 0.0 || rate >= 1.0) throw RateError("bipartite_plan: 0 <= r < 1");
    const int N = grid.tokens(), C = grid.channels;

    std::vector<double> unit(grid.values);
    for (int i = 0; i < N; ++i) {
        double n2 = 0.0;
        for (int c = 0; c < C; ++c) n2 += unit[static_cast<std::size_t>(i) * C + c] *
                                          unit[static_cast<std::size_t>(i) * C + c];
        if (n2 <= 0.0) throw ZeroNormError("bipartite_plan: zero-norm token");
        const double inv = 1.0 / std::sqrt(n2);
        for (int c = 0; c < C; ++c) unit[static_cast<std::size_t>(i) * C + c] *= inv;
    }

    struct Match {
        double sim;
        int src;  // odd-set token
        int dst;  // best even-set token
    };
    std::vector<Match> matches;
    for (int i = 1; i < N; i += 2) {
        double best = -2.0;
        int best_j = -1;
        for (int j = 0; j < N; j += 2) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c)
                dot += unit[static_cast<std::size_t>(i) * C + c] *
                       unit[static_cast<std::size_t>(j) * C + c];
            if (dot > best) {
                best = dot;
                best_j = j;
            }
        }
        matches.push_back({best, i, best_j});
    }
    std::stable_sort(matches.begin(), matches.end(),
                     [](const Match& a, const Match& b) { return a.sim > b.sim; });
    const int want = static_cast<int>(std::ceil(rate * N));
    const int take = std::min<int>(want, static_cast<int>(matches.size()));

    MergePlan plan;
    plan.height = grid.height;
    plan.width = grid.width;
    plan.rate = rate;
    for (int k = 0; k < take; ++k) {
        plan.sources.push_back(matches[k].src);
        plan.assignment[matches[k].src] = matches[k].dst;
    }
    std::sort(plan.sources.begin(), plan.sources.end());
    std::vector<char> is_source(N, 0);
    for (int t : plan.sources) is_source[t] = 1;
    for (int t = 0; t < N; ++t)
        if (!is_source[t]) plan.kept.push_back(t);
    plan.validate();
    return plan;
}

MergePlan random_pairing_plan(int height, int width, double rate, int cell_w, int cell_h,
                              std::uint64_t seed) {
    const int m = mergeable_cell_count(rate, height, width, cell_w, cell_h);
    const int n_sources = m * (cell_w * cell_h - 1);
    const int n = height * width;
    std::mt19937_64 rng(seed);
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);

    MergePlan plan;
    plan.height = height;
    plan.width = width;
    plan.cell_h = cell_h;
    plan.cell_w = cell_w;
    plan.rate = rate;
    plan.sources.assign(ids.begin(), ids.begin() + n_sources);
    std::sort(plan.sources.begin(), plan.sources.end());
    plan.kept.assign(ids.begin() + n_sources, ids.end());
    std::sort(plan.kept.begin(), plan.kept.end());
    std::uniform_int_distribution<std::size_t> pick(0, plan.kept.size() - 1);
    for (int src : plan.sources) plan.assignment[src] = plan.kept[pick(rng)];
    plan.validate();
    return plan;
}

std::string merged_tokens_to_json(const MergedTokens& merged) {
    nlohmann::ordered_json j;
    j["C"] = merged.channels;
    j["kept_index"] = merged.kept_index;
    j["values"] = merged.features;
    return j.dump();
}

MergedTokens merged_tokens_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("merged tokens json: ") + e.what());
    }
    MergedTokens m;
    m.channels = j.at("C").get<int>();
    m.kept_index = j.at("kept_index").get<std::vector<int>>();
    m.features = j.at("values").get<std::vector<double>>();
    if (m.features.size() != m.kept_index.size() * static_cast<std::size_t>(m.channels))
        throw ShapeError("merged tokens json: row count mismatch");
    return m;
}

}  // namespace structmerge
