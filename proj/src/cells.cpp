#include "structmerge/cells.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace structmerge {

std::vector<std::vector<int>> MergePlan::merge_groups() const {
    std::map<int, std::vector<int>> by_dst;
    for (const auto& [src, dst] : assignment) by_dst[dst].push_back(src);
    std::vector<std::vector<int>> groups;
    groups.reserve(by_dst.size());
    for (auto& [dst, srcs] : by_dst) {
        srcs.push_back(dst);
        std::sort(srcs.begin(), srcs.end());
        groups.push_back(std::move(srcs));
    }
    return groups;
}

std::vector<std::vector<int>> MergePlan::partition() const {
    std::vector<std::vector<int>> groups = merge_groups();
    std::vector<char> covered(tokens(), 0);
    for (const auto& g : groups)
        for (int t : g) covered[t] = 1;
    for (int t = 0; t < tokens(); ++t)
        if (!covered[t]) groups.push_back({t});
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return groups;
}

void MergePlan::validate() const {
    const int n = tokens();
    std::vector<char> seen(n, 0);
    for (int t : sources) {
        if (t < 0 || t >= n || seen[t]) throw PartitionError("MergePlan: bad source set");
        seen[t] = 2;
    }
    for (int t : kept) {
        if (t < 0 || t >= n || seen[t]) throw PartitionError("MergePlan: A and B overlap");
        seen[t] = 1;
    }
    for (int t = 0; t < n; ++t)
        if (!seen[t]) throw PartitionError("MergePlan: token not covered by A or B");
    if (assignment.size() != sources.size())
        throw PartitionError("MergePlan: pi not total on A");
    for (const auto& [src, dst] : assignment) {
        if (seen[src] != 2) throw PartitionError("MergePlan: pi key not in A");
        if (seen[dst] != 1) throw PartitionError("MergePlan: pi target not in B");
    }
    if (static_cast<int>(kept.size()) != n - static_cast<int>(sources.size()))
        throw PartitionError("MergePlan: |B| != H*W - |A|");
}

CellPartition partition_cells(int height, int width, const WindowLayout& layout, int cell_w,
                              int cell_h) {
    if (height <= 0 || width <= 0 || cell_w <= 0 || cell_h <= 0)
        throw ShapeError("partition_cells: non-positive dims");
    int win_h = height, win_w = width;
    if (layout.kind == WindowKind::Local) {
        win_h = layout.window_h;
        win_w = layout.window_w;
        if (win_h <= 0 || win_w <= 0) throw ShapeError("partition_cells: bad window dims");
        if (height % win_h || width % win_w)
            throw DivisibilityError("partition_cells: window must tile the grid");
    }
    if (win_w % cell_w || win_h % cell_h)
        throw DivisibilityError("partition_cells: cell must tile the window");

    CellPartition p;
    p.height = height;
    p.width = width;
    p.cell_h = cell_h;
    p.cell_w = cell_w;
    const int wins_y = height / win_h, wins_x = width / win_w;
    int window_id = 0;
    for (int wy = 0; wy < wins_y; ++wy) {
        for (int wx = 0; wx < wins_x; ++wx, ++window_id) {
            for (int cy = 0; cy < win_h / cell_h; ++cy) {
                for (int cx = 0; cx < win_w / cell_w; ++cx) {
                    std::vector<int> cell;
                    cell.reserve(cell_w * cell_h);
                    for (int dy = 0; dy < cell_h; ++dy)
                        for (int dx = 0; dx < cell_w; ++dx) {
                            const int h = wy * win_h + cy * cell_h + dy;
                            const int w = wx * win_w + cx * cell_w + dx;
                            cell.push_back(h * width + w);
                        }
                    p.cells.push_back(std::move(cell));
                    p.window_of.push_back(window_id);
                }
            }
        }
    }
    return p;
}

std::vector<double> cell_flatness(const CellPartition& partition, const GradientField& energy,
                                  FlatnessAggregation aggregation) {
    if (energy.height != partition.height || energy.width != partition.width)
        throw ShapeError("cell_flatness: energy shape mismatch");
    std::vector<double> scores;
    scores.reserve(partition.cells.size());
    for (const auto& cell : partition.cells) {
        double agg = aggregation == FlatnessAggregation::Max
                         ? -std::numeric_limits<double>::infinity()
                         : 0.0;
        for (int t : cell) {
            const double g = energy.magnitudes[t];
            if (aggregation == FlatnessAggregation::Max)
                agg = std::max(agg, g);
            else
                agg += g;
        }
        if (aggregation == FlatnessAggregation::Mean) agg /= static_cast<double>(cell.size());
        scores.push_back(-agg);
    }
    return scores;
}

int mergeable_cell_count(double rate, int height, int width, int cell_w, int cell_h) {
    if (rate < 0.0 || rate >= 1.0) throw RateError("merge rate must satisfy 0 <= r < 1");
    const int cell_sz = cell_w * cell_h;
    if (cell_sz < 2) throw ShapeError("mergeable_cell_count: cell size must be >= 2");
    const long long total = static_cast<long long>(height) * width;
    const int cells_total = static_cast<int>(total / cell_sz);
    const int m = static_cast<int>(std::ceil(rate * static_cast<double>(total) / (cell_sz - 1)));
    if (m > cells_total) {
        std::cerr << "structmerge: merge rate " << rate << " needs " << m
                  << " cells but only " << cells_total << " exist; clamping\n";
        return cells_total;
    }
    return m;
}

std::pair<std::vector<int>, std::vector<int>> select_mergeable_cells(
    const std::vector<double>& scores, int mergeable) {
    const int n = static_cast<int>(scores.size());
    if (mergeable < 0 || mergeable > n)
        throw ShapeError("select_mergeable_cells: M out of range");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    std::vector<int> merge(order.begin(), order.begin() + mergeable);
    std::vector<int> prot(order.begin() + mergeable, order.end());
    std::sort(merge.begin(), merge.end());
    std::sort(prot.begin(), prot.end());
    return {merge, prot};
}

int select_destination(const std::vector<int>& cell_tokens, const GradientField& score,
                       int sign) {
    if (cell_tokens.empty()) throw ShapeError("select_destination: empty cell");
    int best = cell_tokens.front();
    double best_val = sign * score.magnitudes[best];
    for (int t : cell_tokens) {
        const double v = sign * score.magnitudes[t];
        if (v > best_val || (v == best_val && t < best)) {
            best = t;
            best_val = v;
        }
    }
    return best;
}

namespace {

MergePlan assemble_cell_plan(const CellPartition& partition, double rate,
                             const std::vector<int>& mergeable_ids,
                             const std::vector<int>& protected_ids,
                             const std::vector<int>& destinations) {
    MergePlan plan;
    plan.height = partition.height;
    plan.width = partition.width;
    plan.cell_h = partition.cell_h;
    plan.cell_w = partition.cell_w;
    plan.rate = rate;
    plan.protected_cells = protected_ids;
    for (std::size_t k = 0; k < mergeable_ids.size(); ++k) {
        const int cid = mergeable_ids[k];
        const int dst = destinations[k];
        plan.mergeable_cells.emplace_back(cid, dst);
        for (int t : partition.cells[cid]) {
            if (t == dst) continue;
            plan.sources.push_back(t);
            plan.assignment[t] = dst;
        }
    }
    std::vector<char> is_source(plan.tokens(), 0);
    for (int t : plan.sources) is_source[t] = 1;
    for (int t = 0; t < plan.tokens(); ++t)
        if (!is_source[t]) plan.kept.push_back(t);
    std::sort(plan.sources.begin(), plan.sources.end());
    plan.validate();
    return plan;
}

std::vector<int> pick_destinations(const CellPartition& partition,
                                   const std::vector<int>& mergeable_ids,
                                   const GradientField& energy, const DstRule& dst) {
    std::vector<int> out;
    out.reserve(mergeable_ids.size());
    std::mt19937_64 rng(dst.seed);
    for (int cid : mergeable_ids) {
        const auto& cell = partition.cells[cid];
        switch (dst.kind) {
            case DstRule::MinGrad: out.push_back(select_destination(cell, energy, -1)); break;
            case DstRule::MaxGrad: out.push_back(select_destination(cell, energy, +1)); break;
            case DstRule::Random: {
                std::uniform_int_distribution<std::size_t> pick(0, cell.size() - 1);
                out.push_back(cell[pick(rng)]);
                break;
            }
        }
    }
    return out;
}

// Flattest (or random) M cells drawn from the given candidate cell ids.
std::vector<int> pick_cells(const std::vector<int>& candidates,
                            const std::vector<double>& scores, int m, const CellRule& rule) {
    if (rule.kind == CellRule::Random) {
        std::vector<int> pool = candidates;
        std::mt19937_64 rng(rule.seed);
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(m);
        std::sort(pool.begin(), pool.end());
        return pool;
    }
    std::vector<int> order = candidates;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    order.resize(m);
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

MergePlan build_merge_plan(const CellPartition& partition, const GradientField& energy,
                           double rate, DstRule dst, CellRule cell) {
    const int m = mergeable_cell_count(rate, partition.height, partition.width,
                                       partition.cell_w, partition.cell_h);
    const FlatnessAggregation agg = cell.kind == CellRule::FlatnessMean
                                        ? FlatnessAggregation::Mean
                                        : FlatnessAggregation::Max;
    const std::vector<double> scores = cell_flatness(partition, energy, agg);
    std::vector<int> all_cells(partition.cell_count());
    std::iota(all_cells.begin(), all_cells.end(), 0);
    const std::vector<int> mergeable = pick_cells(all_cells, scores, m, cell);
    std::set<int> msel(mergeable.begin(), mergeable.end());
    std::vector<int> prot;
    for (int c : all_cells)
        if (!msel.count(c)) prot.push_back(c);
    const std::vector<int> dsts = pick_destinations(partition, mergeable, energy, dst);
    return assemble_cell_plan(partition, rate, mergeable, prot, dsts);
}

PixelBox box_from_mask(const MaskImage& mask) {
    int top = mask.height, left = mask.width, bottom = -1, right = -1;
    for (int h = 0; h < mask.height; ++h)
        for (int w = 0; w < mask.width; ++w)
            if (mask.at(h, w) > 128) {
                top = std::min(top, h);
                left = std::min(left, w);
                bottom = std::max(bottom, h);
                right = std::max(right, w);
            }
    if (bottom < 0) throw EmptyMaskError("box_from_mask: no pixel above 128");
    return {top, left, bottom, right};
}

MergePlan prompt_aware_plan(const CellPartition& partition, const GradientField& energy,
                            const PixelBox& box, int patch_size, double rate_inside,
                            double rate_outside, DstRule dst, FlatnessAggregation aggregation) {
    if (rate_inside < 0.0 || rate_outside >= 1.0 || rate_inside > rate_outside)
        throw RateError("prompt_aware_plan: need 0 <= r_in <= r_out < 1");
    if (box.bottom < box.top || box.right < box.left)
        throw BoxError("prompt_aware_plan: degenerate box");
    if (patch_size <= 0) throw ShapeError("prompt_aware_plan: bad patch size");

    // Token-space rectangle, inclusive: floor for the min corner, ceil for the max.
    const int row_min = box.top / patch_size;
    const int col_min = box.left / patch_size;
    const int row_max = static_cast<int>(std::ceil(static_cast<double>(box.bottom) / patch_size));
    const int col_max = static_cast<int>(std::ceil(static_cast<double>(box.right) / patch_size));

    const std::vector<double> scores = cell_flatness(partition, energy, aggregation);
    std::vector<int> inside, outside;
    for (int cid = 0; cid < partition.cell_count(); ++cid) {
        bool hit = false;
        for (int t : partition.cells[cid]) {
            const int h = t / partition.width, w = t % partition.width;
            if (h >= row_min && h <= row_max && w >= col_min && w <= col_max) {
                hit = true;
                break;
            }
        }
        (hit ? inside : outside).push_back(cid);
    }

    // No differentiation possible: a single rate governs the whole grid.
    const CellRule rule = CellRule::flatness(aggregation);
    if (rate_inside == rate_outside || outside.empty() || inside.empty())
        return build_merge_plan(partition, energy, inside.empty() ? rate_outside : rate_inside,
                                dst, rule);

    const int cell_sz = partition.cell_size();
    auto population_count = [&](const std::vector<int>& ids, double r) {
        const long long pop = static_cast<long long>(ids.size()) * cell_sz;
        const int m =
            static_cast<int>(std::ceil(r * static_cast<double>(pop) / (cell_sz - 1)));
        return std::min(m, static_cast<int>(ids.size()));
    };
    const int m_in = population_count(inside, rate_inside);
    const int m_out = population_count(outside, rate_outside);

    std::vector<int> mergeable = pick_cells(inside, scores, m_in, rule);
    const std::vector<int> out_sel = pick_cells(outside, scores, m_out, rule);
    mergeable.insert(mergeable.end(), out_sel.begin(), out_sel.end());
    std::sort(mergeable.begin(), mergeable.end());
    std::set<int> msel(mergeable.begin(), mergeable.end());
    std::vector<int> prot;
    for (int c = 0; c < partition.cell_count(); ++c)
        if (!msel.count(c)) prot.push_back(c);
    const std::vector<int> dsts = pick_destinations(partition, mergeable, energy, dst);
    const double eff_rate =
        static_cast<double>((m_in + m_out) * (cell_sz - 1)) / partition.cells.size() / cell_sz;
    return assemble_cell_plan(partition, eff_rate, mergeable, prot, dsts);
}

MergePlan no_cell_plan(int height, int width, const GradientField& energy, double rate,
                       int cell_w, int cell_h) {
    if (energy.height != height || energy.width != width)
        throw ShapeError("no_cell_plan: energy shape mismatch");
    const int m = mergeable_cell_count(rate, height, width, cell_w, cell_h);
    const int n_sources = m * (cell_w * cell_h - 1);
    const int n = height * width;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return energy.magnitudes[a] < energy.magnitudes[b];
    });

    MergePlan plan;
    plan.height = height;
    plan.width = width;
    plan.cell_h = cell_h;
    plan.cell_w = cell_w;
    plan.rate = rate;
    plan.sources.assign(order.begin(), order.begin() + n_sources);
    std::sort(plan.sources.begin(), plan.sources.end());
    std::vector<char> is_source(n, 0);
    for (int t : plan.sources) is_source[t] = 1;
    for (int t = 0; t < n; ++t)
        if (!is_source[t]) plan.kept.push_back(t);
    if (plan.kept.empty()) throw RateError("no_cell_plan: no kept token");
    for (int src : plan.sources) {
        const int sh = src / width, sw = src % width;
        int best = plan.kept.front();
        long long best_d2 = -1;
        for (int k : plan.kept) {
            const long long dh = k / width - sh, dw = k % width - sw;
            const long long d2 = dh * dh + dw * dw;
            if (best_d2 < 0 || d2 < best_d2) {
                best = k;
                best_d2 = d2;
            }
        }
        plan.assignment[src] = best;
    }
    plan.validate();
    return plan;
}

std::string merge_plan_to_json(const MergePlan& plan) {
    nlohmann::ordered_json j;
    j["H"] = plan.height;
    j["W"] = plan.width;
    j["r"] = plan.rate;
    j["s_x"] = plan.cell_w;
    j["s_y"] = plan.cell_h;
    auto cells = nlohmann::ordered_json::array();
    for (const auto& [cid, dst] : plan.mergeable_cells)
        cells.push_back({{"cell", cid}, {"dst", dst}});
    j["mergeable_cells"] = cells;
    auto pi = nlohmann::ordered_json::array();
    for (const auto& [src, dst] : plan.assignment) pi.push_back({{"src", src}, {"dst", dst}});
    j["pi"] = pi;
    return j.dump();
}

MergePlan merge_plan_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("merge plan json: ") + e.what());
    }
    MergePlan plan;
    plan.height = j.at("H").get<int>();
    plan.width = j.at("W").get<int>();
    plan.rate = j.at("r").get<double>();
    plan.cell_w = j.at("s_x").get<int>();
    plan.cell_h = j.at("s_y").get<int>();
    for (const auto& mc : j.at("mergeable_cells"))
        plan.mergeable_cells.emplace_back(mc.at("cell").get<int>(), mc.at("dst").get<int>());
    for (const auto& e : j.at("pi")) {
        const int src = e.at("src").get<int>(), dst = e.at("dst").get<int>();
        plan.assignment[src] = dst;
        plan.sources.push_back(src);
    }
    std::sort(plan.sources.begin(), plan.sources.end());
    std::vector<char> is_source(plan.tokens(), 0);
    for (int t : plan.sources) is_source[t] = 1;
    for (int t = 0; t < plan.tokens(); ++t)
        if (!is_source[t]) plan.kept.push_back(t);
    plan.validate();
    return plan;
}

MaskImage read_mask_pgm(const std::string& bytes) {
    std::istringstream is(bytes);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw IoError("read_mask_pgm: not a P5 PGM");
    auto next_int = [&is]() {
        // skip whitespace and '#' comment lines
        for (;;) {
            const int c = is.peek();
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        int v;
        if (!(is >> v)) throw IoError("read_mask_pgm: truncated header");
        return v;
    };
    MaskImage m;
    m.width = next_int();
    m.height = next_int();
    const int maxval = next_int();
    if (maxval <= 0 || maxval > 255) throw IoError("read_mask_pgm: maxval must be in (0,255]");
    is.get();  // single whitespace before raster
    m.pixels.resize(static_cast<std::size_t>(m.width) * m.height);
    for (auto& px : m.pixels) {
        const int c = is.get();
        if (c == EOF) throw IoError("read_mask_pgm: truncated raster");
        px = c;
    }
    return m;
}

MaskImage read_mask_csv(const std::string& text) {
    MaskImage m;
    std::istringstream is(text);
    std::string line;
    int width = -1;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        int count = 0;
        while (std::getline(ls, tok, ',')) {
            m.pixels.push_back(std::stoi(tok));
            ++count;
        }
        if (width < 0)
            width = count;
        else if (count != width)
            throw IoError("read_mask_csv: ragged rows");
        ++m.height;
    }
    if (m.height == 0) throw IoError("read_mask_csv: empty mask");
    m.width = width;
    for (int px : m.pixels)
        if (px < 0 || px > 255) throw IoError("read_mask_csv: value out of [0,255]");
    return m;
}

}  // namespace structmerge
