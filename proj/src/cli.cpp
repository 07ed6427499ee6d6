#include "structmerge/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "structmerge/attention.hpp"
#include "structmerge/cost_model.hpp"
#include "structmerge/merge.hpp"
#include "structmerge/report.hpp"
#include "structmerge/spectral.hpp"
#include "structmerge/synthesis.hpp"

namespace structmerge {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string output_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("STRUCTMERGE_OUT")) return env;
    return "reports";
}

std::string emit(const std::string& dir, const std::string& name, const std::string& content,
                 const std::vector<std::string>& invocation, const std::string& config,
                 std::uint64_t seed) {
    fs::create_directories(dir);
    const std::string path = (fs::path(dir) / name).string();
    write_text_file(path, content);
    write_manifest(path, invocation, config, seed);
    return path;
}

GradientOp parse_grad(const std::string& s) {
    if (s == "central") return GradientOp::CentralDiff;
    if (s == "sobel") return GradientOp::Sobel;
    throw IoError("unknown gradient operator: " + s);
}

WindowLayout parse_window(int window) {
    return window > 0 ? WindowLayout::local(window, window) : WindowLayout::global();
}

// Random symmetric nonnegative weight matrix, zero diagonal.
Eigen::MatrixXd random_weights(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i) {
        w(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double v = u(rng);
            w(i, j) = v;
            w(j, i) = v;
        }
    }
    return w;
}

Partition random_partition(int n, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick_k(1, n);
    const int k = pick_k(rng);
    std::vector<std::vector<int>> groups(k);
    std::uniform_int_distribution<int> pick_g(0, k - 1);
    for (int u = 0; u < n; ++u) groups[pick_g(rng)].push_back(u);
    Partition out;
    for (auto& g : groups)
        if (!g.empty()) out.push_back(std::move(g));
    return out;
}

Partition equal_size_partition(int n, int group_size, std::mt19937_64& rng) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Partition out;
    for (int start = 0; start < n; start += group_size) {
        std::vector<int> g(perm.begin() + start, perm.begin() + start + group_size);
        std::sort(g.begin(), g.end());
        out.push_back(std::move(g));
    }
    return out;
}

// Token graphs of one plan, split by attention window, with the plan's
// merge partition restricted to each window (cell plans never cross
// windows, so the restriction is exact).
std::vector<WindowCase> plan_window_cases(const FeatureGrid& grid, const MergePlan& plan,
                                          const WindowLayout& layout, bool self_loops) {
    const int H = grid.height, W = grid.width, C = grid.channels;
    std::vector<std::vector<int>> window_tokens;
    if (layout.kind == WindowKind::Global) {
        window_tokens.emplace_back(H * W);
        std::iota(window_tokens[0].begin(), window_tokens[0].end(), 0);
    } else {
        const int wins_x = W / layout.window_w;
        const int wins_y = H / layout.window_h;
        window_tokens.resize(static_cast<std::size_t>(wins_x) * wins_y);
        for (int t = 0; t < H * W; ++t) {
            const int h = t / W, w = t % W;
            window_tokens[(h / layout.window_h) * wins_x + (w / layout.window_w)].push_back(t);
        }
    }
    const Partition full = plan.partition();
    std::vector<WindowCase> cases;
    for (const auto& tokens : window_tokens) {
        std::vector<int> local_of(H * W, -1);
        for (std::size_t i = 0; i < tokens.size(); ++i) local_of[tokens[i]] = static_cast<int>(i);
        Eigen::MatrixXd mat(tokens.size(), C);
        for (std::size_t i = 0; i < tokens.size(); ++i)
            for (int c = 0; c < C; ++c)
                mat(static_cast<int>(i), c) =
                    grid.values[static_cast<std::size_t>(tokens[i]) * C + c];
        WindowCase wc;
        wc.graph = cosine_affinity_graph(mat, self_loops);
        for (const auto& group : full) {
            std::vector<int> local;
            for (int t : group)
                if (local_of[t] >= 0) local.push_back(local_of[t]);
            if (local.empty()) continue;
            if (local.size() != group.size())
                throw PartitionError("plan group crosses a window boundary");
            wc.partition.push_back(std::move(local));
        }
        cases.push_back(std::move(wc));
    }
    return cases;
}

FeatureGrid random_grid(int h, int w, int c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    FeatureGrid g(h, w, c);
    for (auto& v : g.values) v = u(rng);
    return g;
}

std::string kind_name(LayerKind k) { return k == LayerKind::Global ? "global" : "local"; }

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_plan(const std::vector<std::string>& invocation, const std::string& grid_path,
             double rate, int cell, int window, const std::string& grad,
             const std::string& dst, const std::string& cells, std::uint64_t seed,
             const std::string& out_dir) {
    const FeatureGrid grid = feature_grid_from_json(read_text_file(grid_path));
    const GradientField energy = gradient_energy(grid, parse_grad(grad));
    const CellPartition partition =
        partition_cells(grid.height, grid.width, parse_window(window), cell, cell);
    DstRule dr = DstRule::min_grad();
    if (dst == "max_grad") dr = DstRule::max_grad();
    else if (dst == "random") dr = DstRule::random(seed);
    else if (dst != "min_grad") throw IoError("unknown dst strategy: " + dst);
    CellRule cr = CellRule::flatness(FlatnessAggregation::Max);
    if (cells == "flatness_mean") cr = CellRule::flatness(FlatnessAggregation::Mean);
    else if (cells == "random") cr = CellRule::random(seed);
    else if (cells != "flatness_max") throw IoError("unknown cell strategy: " + cells);
    const MergePlan plan = build_merge_plan(partition, energy, rate, dr, cr);
    std::ostringstream config;
    config << "plan rate=" << rate << " cell=" << cell << " window=" << window
           << " grad=" << grad << " dst=" << dst << " cells=" << cells << " seed=" << seed;
    const std::string path = emit(output_dir(out_dir), "plan.json",
                                  merge_plan_to_json(plan) + "\n", invocation, config.str(), seed);
    std::cout << "plan: " << plan.sources.size() << " sources, " << plan.kept.size()
              << " kept -> " << path << "\n";
    return 0;
}

int cmd_merge_roundtrip(const std::vector<std::string>& invocation, int height, int width,
                        int channels, double rate, int cell, int window, int trials,
                        std::uint64_t seed, bool with_attention, const std::string& out_dir) {
    std::mt19937_64 rng(seed);
    const WindowLayout layout = parse_window(window);
    const CellPartition partition = partition_cells(height, width, layout, cell, cell);
    int failures = 0;
    for (int t = 0; t < trials; ++t) {
        const FeatureGrid grid = random_grid(height, width, channels, rng);
        const GradientField energy = gradient_energy(grid, GradientOp::CentralDiff);
        const MergePlan plan = build_merge_plan(partition, energy, rate);
        if (with_attention) {
            AttentionParams params;
            params.seed = seed + t;
            const FeatureGrid out = merge_compute_unmerge_block(grid, plan, layout, params);
            if (out.height != height || out.width != width || out.channels != channels)
                ++failures;
            continue;
        }
        const MergedTokens merged = apply_merge(grid, plan);
        const FeatureGrid out = apply_unmerge(merged, plan);
        bool ok = out.height == height && out.width == width && out.channels == channels;
        // protected tokens bit-identical, merged cells equal to the cell mean
        for (const auto& group : plan.merge_groups()) {
            std::vector<double> mean(channels, 0.0);
            for (int tok : group)
                for (int c = 0; c < channels; ++c)
                    mean[c] += grid.values[static_cast<std::size_t>(tok) * channels + c];
            for (auto& v : mean) v /= static_cast<double>(group.size());
            for (int tok : group)
                for (int c = 0; c < channels; ++c)
                    if (std::abs(out.values[static_cast<std::size_t>(tok) * channels + c] -
                                 mean[c]) > 1e-12)
                        ok = false;
        }
        std::vector<char> in_group(height * width, 0);
        for (const auto& group : plan.merge_groups())
            for (int tok : group) in_group[tok] = 1;
        for (int tok = 0; tok < height * width; ++tok)
            if (!in_group[tok])
                for (int c = 0; c < channels; ++c)
                    if (out.values[static_cast<std::size_t>(tok) * channels + c] !=
                        grid.values[static_cast<std::size_t>(tok) * channels + c])
                        ok = false;
        if (!ok) ++failures;
    }
    ordered_json j;
    j["trials"] = trials;
    j["failures"] = failures;
    j["with_attention"] = with_attention;
    std::ostringstream config;
    config << "merge-roundtrip h=" << height << " w=" << width << " c=" << channels
           << " rate=" << rate << " trials=" << trials << " seed=" << seed;
    emit(output_dir(out_dir), "merge_roundtrip.json", j.dump(2) + "\n", invocation, config.str(),
         seed);
    std::cout << "merge-roundtrip: " << (trials - failures) << "/" << trials << " ok\n";
    return failures ? 1 : 0;
}

int cmd_spectral(const std::vector<std::string>& invocation, const std::string& grid_path,
                 double rate, int cell, int window, const std::string& grad,
                 const std::string& convention, const std::string& out_dir) {
    const FeatureGrid grid = feature_grid_from_json(read_text_file(grid_path));
    const WindowLayout layout = parse_window(window);
    const GradientField energy = gradient_energy(grid, parse_grad(grad));
    const CellPartition partition =
        partition_cells(grid.height, grid.width, layout, cell, cell);
    const MergePlan plan = build_merge_plan(partition, energy, rate);
    const CoarseningConvention route = convention == "block_average"
                                           ? CoarseningConvention::BlockAverage
                                           : CoarseningConvention::BlockSum;
    const std::vector<WindowCase> cases =
        plan_window_cases(grid, plan, layout, /*self_loops=*/true);

    std::ostringstream csv;
    csv << "window,sd\n";
    double total = 0.0;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        const double sd = layer_discrepancy({cases[k]}, route);
        total += sd;
        csv << k << ',' << format_g12(sd) << '\n';
    }
    ordered_json j;
    j["sd_layer"] = total;
    j["d_enc_single_layer"] = total;
    j["windows"] = cases.size();
    j["convention"] = convention;
    std::ostringstream config;
    config << "spectral rate=" << rate << " cell=" << cell << " window=" << window
           << " convention=" << convention;
    const std::string dir = output_dir(out_dir);
    emit(dir, "spectral.json", j.dump(2) + "\n", invocation, config.str(), 0);
    emit(dir, "spectral.csv", csv.str(), invocation, config.str(), 0);
    std::cout << "SD = " << format_g12(total) << " over " << cases.size() << " windows\n";
    return 0;
}

int cmd_verify_lemma(const std::vector<std::string>& invocation, const std::string& convention,
                     int graphs, int max_n, std::uint64_t seed, double tol,
                     const std::string& out_dir) {
    std::mt19937_64 rng(seed);
    const bool block_sum = convention != "block_average";
    int holds = 0;
    double worst = 0.0;
    for (int g = 0; g < graphs; ++g) {
        std::uniform_int_distribution<int> pick_n(2, max_n);
        const int n = pick_n(rng);
        TokenGraph graph;
        graph.weights = random_weights(n, rng);
        if (graph.degrees().minCoeff() <= 1e-9) {
            --g;
            continue;
        }
        Partition partition;
        if (block_sum) {
            partition = random_partition(n, rng);
        } else {
            std::vector<int> divisors;
            for (int d = 1; d <= n; ++d)
                if (n % d == 0) divisors.push_back(d);
            std::uniform_int_distribution<std::size_t> pick_d(0, divisors.size() - 1);
            partition = equal_size_partition(n, divisors[pick_d(rng)], rng);
        }
        const InclusionReport report = verify_eigenvalue_inclusion(
            graph, partition,
            block_sum ? CoarseningConvention::BlockSum : CoarseningConvention::BlockAverage, tol);
        holds += report.holds ? 1 : 0;
        worst = std::max(worst, report.max_mismatch);
    }

    // canonical counterexample: P3 with groups {0,1},{2} under block_average
    TokenGraph p3;
    p3.weights = Eigen::MatrixXd::Zero(3, 3);
    p3.weights(0, 1) = p3.weights(1, 0) = 1.0;
    p3.weights(1, 2) = p3.weights(2, 1) = 1.0;
    const InclusionReport counter = verify_eigenvalue_inclusion(
        p3, {{0, 1}, {2}}, CoarseningConvention::BlockAverage, tol);

    ordered_json j;
    j["convention"] = block_sum ? "block_sum" : "block_average";
    j["graphs"] = graphs;
    j["holds"] = holds;
    j["worst_mismatch"] = worst;
    j["p3_unequal_blockavg_holds"] = counter.holds;
    j["p3_unequal_blockavg_mismatch"] = counter.max_mismatch;
    std::ostringstream config;
    config << "verify-lemma convention=" << convention << " graphs=" << graphs
           << " max-n=" << max_n << " seed=" << seed;
    emit(output_dir(out_dir), "verify_lemma.json", j.dump(2) + "\n", invocation, config.str(),
         seed);
    std::cout << "inclusion holds " << holds << "/" << graphs << " (worst mismatch "
              << format_g12(worst) << "); counterexample flagged "
              << (counter.holds ? "HOLDING (unexpected)" : "non-holding") << "\n";
    return (holds == graphs && !counter.holds) ? 0 : 1;
}

int cmd_verify_hw(const std::vector<std::string>& invocation, int pairs, int max_n, int traces,
                  std::uint64_t seed, const std::string& out_dir) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int violations = 0;
    for (int p = 0; p < pairs; ++p) {
        std::uniform_int_distribution<int> pick_n(2, max_n);
        const int n = pick_n(rng);
        Eigen::MatrixXd a(n, n), b(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                a(i, j) = a(j, i) = u(rng);
                b(i, j) = b(j, i) = u(rng);
            }
        const HoffmanWielandtGap gap = hoffman_wielandt_gap(a, b);
        if (gap.sq_lhs > gap.sq_rhs * (1.0 + 1e-9) + 1e-12 ||
            gap.l1_lhs > gap.l1_rhs * (1.0 + 1e-9) + 1e-12)
            ++violations;
    }
    int trace_steps = 0, trace_violations = 0;
    const double noises[4] = {0.0, 0.02, 0.05, 0.1};
    for (int t = 0; t < traces; ++t) {
        const RegionWindow window = synth_window(8, 8, half_split_layout(8, 8), 0.5,
                                                 noises[t % 4], 16, seed * 131 + t);
        const CellPartition partition = partition_cells(8, 8, WindowLayout::global(), 2, 2);
        FeatureGrid grid(8, 8, 16);
        for (int i = 0; i < 64; ++i)
            for (int c = 0; c < 16; ++c)
                grid.values[static_cast<std::size_t>(i) * 16 + c] = window.tokens(i, c);
        const GradientField energy = gradient_energy(grid, GradientOp::CentralDiff);
        MergePlan plan;
        if (t % 3 == 0)
            plan = build_merge_plan(partition, energy, 0.5);
        else if (t % 3 == 1)
            plan = stride_plan(partition, 0.5);
        else
            plan = random_pairing_plan(8, 8, 0.5, 2, 2, seed + t);
        TraceOptions opts;
        opts.rebuild = t % 2 == 0;
        opts.with_hoffman_wielandt = true;
        const MergeTrace trace = merge_trace(window.tokens, plan, window.regions, opts);
        for (const auto& step : trace.steps) {
            ++trace_steps;
            if (!step.hw_checked || step.hw_sq_slack < -1e-9 || step.hw_l1_slack < -1e-9)
                ++trace_violations;
        }
    }
    ordered_json j;
    j["pairs"] = pairs;
    j["pair_violations"] = violations;
    j["traces"] = traces;
    j["trace_steps"] = trace_steps;
    j["trace_violations"] = trace_violations;
    std::ostringstream config;
    config << "verify-hw pairs=" << pairs << " max-n=" << max_n << " traces=" << traces
           << " seed=" << seed;
    emit(output_dir(out_dir), "verify_hw.json", j.dump(2) + "\n", invocation, config.str(), seed);
    std::cout << "hoffman-wielandt: " << (pairs - violations) << "/" << pairs << " pairs, "
              << (trace_steps - trace_violations) << "/" << trace_steps << " trace steps ok\n";
    return (violations || trace_violations) ? 1 : 0;
}

int cmd_theorem(const std::vector<std::string>& invocation, const TrialConfig& config,
                const std::string& out_dir) {
    const TrialReport report = theorem_trial(config);
    ordered_json j;
    j["margin"] = config.margin;
    j["rate"] = config.rate;
    j["trials"] = config.trials;
    j["seed"] = config.seed;
    j["skipped_levels"] = report.skipped_levels;
    auto rows = ordered_json::array();
    for (const auto& cell : report.cells) {
        ordered_json r;
        r["noise"] = cell.noise;
        r["strategy"] = strategy_name(cell.strategy);
        r["skipped"] = cell.skipped;
        r["trials"] = cell.trials;
        r["mean_sd"] = cell.mean_sd;
        r["mean_terminal"] = cell.mean_terminal;
        r["delta_hat"] = cell.delta_hat;
        r["mean_within_cos"] = cell.mean_within_cos;
        r["drift_delta_ratio"] = cell.drift_delta_ratio;
        rows.push_back(r);
    }
    j["cells"] = rows;
    std::ostringstream cfg;
    cfg << "theorem margin=" << config.margin << " rate=" << config.rate
        << " trials=" << config.trials << " seed=" << config.seed;
    const std::string dir = output_dir(out_dir);
    emit(dir, "theorem.json", j.dump(2) + "\n", invocation, cfg.str(), config.seed);
    emit(dir, "theorem.csv", trial_report_to_csv(report), invocation, cfg.str(), config.seed);
    std::cout << "theorem trial: " << report.cells.size() << " cells, "
              << report.skipped_levels.size() << " skipped levels\n";
    return 0;
}

int cmd_flops(const std::vector<std::string>& invocation, const std::string& preset, double rate,
              int cell, const std::string& mode_name, const std::string& out_dir) {
    MergeCostMode mode = MergeCostMode::AttentionBlock;
    if (mode_name == "attention_only") mode = MergeCostMode::AttentionOnly;
    else if (mode_name == "full_block") mode = MergeCostMode::FullBlock;
    else if (mode_name != "attention_block") throw IoError("unknown cost mode: " + mode_name);

    const LayerSchedule schedule = preset_schedule(preset, rate, cell);
    const CostReport report = encoder_cost(schedule, mode);
    const ModelDims& dims = schedule.dims;

    std::ostringstream csv;
    csv << "layer,kind,term,macs\n";
    const std::uint64_t n_global =
        static_cast<std::uint64_t>(dims.height) * dims.width;
    const auto pad = [](int n, int w) { return (n + w - 1) / w; };
    const std::uint64_t windows =
        static_cast<std::uint64_t>(pad(dims.height, dims.window)) * pad(dims.width, dims.window);
    const std::uint64_t n_window = static_cast<std::uint64_t>(dims.window) * dims.window;
    const std::uint64_t c = static_cast<std::uint64_t>(dims.channels);
    csv << "energy_table,global,pairwise,"
        << energy_cost(n_global, c, EnergyMethod::Pairwise, dims.d_sim) << '\n';
    csv << "energy_table,window,pairwise,"
        << windows * energy_cost(n_window, c, EnergyMethod::Pairwise, dims.d_sim) << '\n';
    csv << "energy_table,global,central_diff,"
        << energy_cost(n_global, c, EnergyMethod::CentralDiff) << '\n';
    csv << "energy_table,window,central_diff,"
        << windows * energy_cost(n_window, c, EnergyMethod::CentralDiff) << '\n';
    csv << "energy_table,global,sobel," << energy_cost(n_global, c, EnergyMethod::Sobel) << '\n';
    csv << "energy_table,window,sobel,"
        << windows * energy_cost(n_window, c, EnergyMethod::Sobel) << '\n';
    for (const auto& lc : report.layers) {
        csv << lc.layer << ',' << kind_name(lc.kind) << ",qkv," << format_g12(lc.qkv) << '\n';
        csv << lc.layer << ',' << kind_name(lc.kind) << ",attention,"
            << format_g12(lc.attention) << '\n';
        csv << lc.layer << ',' << kind_name(lc.kind) << ",mlp," << format_g12(lc.mlp) << '\n';
        csv << lc.layer << ',' << kind_name(lc.kind) << ",energy," << format_g12(lc.energy)
            << '\n';
        csv << lc.layer << ',' << kind_name(lc.kind) << ",bookkeeping,"
            << format_g12(lc.bookkeeping) << '\n';
    }
    csv << "total,,patch_embed," << format_g12(report.patch_embed) << '\n';
    csv << "total,,merged," << format_g12(report.merged_total) << '\n';
    csv << "total,,baseline," << format_g12(report.baseline_total) << '\n';
    csv << "total,,reduction," << format_g12(report.reduction) << '\n';

    ordered_json j;
    j["preset"] = preset;
    j["rate"] = rate;
    j["mode"] = mode_name;
    j["merged_total"] = report.merged_total;
    j["baseline_total"] = report.baseline_total;
    j["reduction"] = report.reduction;
    j["merged_total_attention_only"] = report.merged_total_attention_only;
    j["merged_total_full_block"] = report.merged_total_full_block;

    std::ostringstream cfg;
    cfg << "flops preset=" << preset << " rate=" << rate << " mode=" << mode_name;
    const std::string dir = output_dir(out_dir);
    emit(dir, "flops.csv", csv.str(), invocation, cfg.str(), 0);
    emit(dir, "flops.json", j.dump(2) + "\n", invocation, cfg.str(), 0);
    std::cout << "encoder " << format_g12(report.merged_total / 1e9) << " GMAC (baseline "
              << format_g12(report.baseline_total / 1e9) << ", reduction "
              << format_g12(report.reduction * 100) << "%)\n";
    return 0;
}

int cmd_ablate(const std::vector<std::string>& invocation, const std::vector<double>& rates,
               int trials, double noise, double margin, int height, int width, int channels,
               int cell, std::uint64_t seed, const std::string& out_dir) {
    const RegionLayout layout = half_split_layout(height, width);
    const CellPartition partition =
        partition_cells(height, width, WindowLayout::global(), cell, cell);
    const std::vector<std::string> variants = {"full",      "central_diff", "mean_flatness",
                                               "no_cell",   "rand_cell",    "max_dst",
                                               "rand_dst"};
    std::ostringstream csv;
    csv << "variant,rate,mean_sd,delta_hat,trials\n";
    ordered_json rows = ordered_json::array();
    for (double rate : rates) {
        for (const auto& variant : variants) {
            double sd_sum = 0.0, dhat_sum = 0.0;
            for (int t = 0; t < trials; ++t) {
                const RegionWindow window =
                    synth_window(height, width, layout, margin, noise, channels,
                                 seed + 1000003ULL * t);
                FeatureGrid grid(height, width, channels);
                for (int i = 0; i < height * width; ++i)
                    for (int ch = 0; ch < channels; ++ch)
                        grid.values[static_cast<std::size_t>(i) * channels + ch] =
                            window.tokens(i, ch);
                const GradientField sobel = gradient_energy(grid, GradientOp::Sobel);
                const GradientField central = gradient_energy(grid, GradientOp::CentralDiff);
                MergePlan plan;
                if (variant == "full")
                    plan = build_merge_plan(partition, sobel, rate);
                else if (variant == "central_diff")
                    plan = build_merge_plan(partition, central, rate);
                else if (variant == "mean_flatness")
                    plan = build_merge_plan(partition, sobel, rate, DstRule::min_grad(),
                                            CellRule::flatness(FlatnessAggregation::Mean));
                else if (variant == "no_cell")
                    plan = no_cell_plan(height, width, sobel, rate, cell, cell);
                else if (variant == "rand_cell")
                    plan = build_merge_plan(partition, sobel, rate, DstRule::min_grad(),
                                            CellRule::random(seed + t));
                else if (variant == "max_dst")
                    plan = build_merge_plan(partition, sobel, rate, DstRule::max_grad());
                else
                    plan = build_merge_plan(partition, sobel, rate, DstRule::random(seed + t));
                const MergeTrace trace = merge_trace(window.tokens, plan, window.regions, {});
                sd_sum += trace.plan_sd;
                int cross = 0;
                for (const auto& s : trace.steps) cross += s.within_region == 0 ? 1 : 0;
                dhat_sum += trace.steps.empty()
                                ? 0.0
                                : static_cast<double>(cross) / trace.steps.size();
            }
            const double mean_sd = trials ? sd_sum / trials : 0.0;
            const double dhat = trials ? dhat_sum / trials : 0.0;
            csv << variant << ',' << format_g12(rate) << ',' << format_g12(mean_sd) << ','
                << format_g12(dhat) << ',' << trials << '\n';
            ordered_json r;
            r["variant"] = variant;
            r["rate"] = rate;
            r["mean_sd"] = mean_sd;
            r["delta_hat"] = dhat;
            r["trials"] = trials;
            rows.push_back(r);
        }
    }
    ordered_json j;
    j["noise"] = noise;
    j["margin"] = margin;
    j["rows"] = rows;
    std::ostringstream cfg;
    cfg << "ablate trials=" << trials << " noise=" << noise << " seed=" << seed;
    const std::string dir = output_dir(out_dir);
    emit(dir, "ablate.csv", csv.str(), invocation, cfg.str(), seed);
    emit(dir, "ablate.json", j.dump(2) + "\n", invocation, cfg.str(), seed);
    std::cout << "ablation matrix: " << variants.size() << " variants x " << rates.size()
              << " rates\n";
    return 0;
}

int cmd_box(const std::vector<std::string>& invocation, const std::string& mask_path, int patch,
            const std::string& out_dir) {
    const std::string bytes = read_text_file(mask_path);
    MaskImage mask;
    if (mask_path.size() >= 4 && mask_path.substr(mask_path.size() - 4) == ".pgm")
        mask = read_mask_pgm(bytes);
    else
        mask = read_mask_csv(bytes);
    const PixelBox box = box_from_mask(mask);
    ordered_json j;
    j["top"] = box.top;
    j["left"] = box.left;
    j["bottom"] = box.bottom;
    j["right"] = box.right;
    j["token_row_min"] = box.top / patch;
    j["token_col_min"] = box.left / patch;
    j["token_row_max"] = static_cast<int>(std::ceil(static_cast<double>(box.bottom) / patch));
    j["token_col_max"] = static_cast<int>(std::ceil(static_cast<double>(box.right) / patch));
    std::ostringstream cfg;
    cfg << "box mask=" << mask_path << " patch=" << patch;
    const std::string path =
        emit(output_dir(out_dir), "box.json", j.dump(2) + "\n", invocation, cfg.str(), 0);
    std::cout << "box (" << box.top << "," << box.left << ")-(" << box.bottom << "," << box.right
              << ") -> " << path << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"gradient-guided token merging with spectral verification"};
    app.require_subcommand(1);
    app.fallthrough();  // global options (--out) may follow the subcommand

    std::string out_dir;
    app.add_option("--out", out_dir, "output directory (default $STRUCTMERGE_OUT or ./reports)");

    // plan
    auto* plan = app.add_subcommand("plan", "build a merge plan from a feature grid");
    std::string plan_grid, plan_grad = "central", plan_dst = "min_grad",
                plan_cells = "flatness_max";
    double plan_rate = 0.5;
    int plan_cell = 2, plan_window = 0;
    std::uint64_t plan_seed = 0;
    plan->add_option("--grid", plan_grid, "feature grid JSON")->required();
    plan->add_option("--rate", plan_rate, "merge rate r in [0,1)");
    plan->add_option("--cell", plan_cell, "cell side s");
    plan->add_option("--window", plan_window, "window side (0 = global)");
    plan->add_option("--grad", plan_grad, "central | sobel");
    plan->add_option("--dst", plan_dst, "min_grad | max_grad | random");
    plan->add_option("--cells", plan_cells, "flatness_max | flatness_mean | random");
    plan->add_option("--seed", plan_seed, "seed for randomized strategies");

    // merge-roundtrip
    auto* rt = app.add_subcommand("merge-roundtrip", "verify resolution recovery");
    int rt_h = 16, rt_w = 16, rt_c = 8, rt_trials = 100, rt_window = 0, rt_cell = 2;
    double rt_rate = 0.5;
    std::uint64_t rt_seed = 7;
    bool rt_attention = false;
    rt->add_option("--height", rt_h, "grid height");
    rt->add_option("--width", rt_w, "grid width");
    rt->add_option("--channels", rt_c, "channels");
    rt->add_option("--rate", rt_rate, "merge rate");
    rt->add_option("--cell", rt_cell, "cell side");
    rt->add_option("--window", rt_window, "window side (0 = global)");
    rt->add_option("--trials", rt_trials, "round trips");
    rt->add_option("--seed", rt_seed, "seed");
    rt->add_flag("--attention", rt_attention, "run attention between merge and unmerge");

    // spectral
    auto* spec = app.add_subcommand("spectral", "SD / D_enc for a plan on a grid");
    std::string sp_grid, sp_grad = "central", sp_convention = "block_sum";
    double sp_rate = 0.5;
    int sp_cell = 2, sp_window = 0;
    spec->add_option("--grid", sp_grid, "feature grid JSON")->required();
    spec->add_option("--rate", sp_rate, "merge rate");
    spec->add_option("--cell", sp_cell, "cell side");
    spec->add_option("--window", sp_window, "window side (0 = global)");
    spec->add_option("--grad", sp_grad, "central | sobel");
    spec->add_option("--convention", sp_convention, "block_sum | block_average");

    // verify-lemma
    auto* lemma = app.add_subcommand("verify-lemma", "eigenvalue-inclusion checks");
    std::string lm_convention = "block_sum";
    int lm_graphs = 200, lm_max_n = 32;
    std::uint64_t lm_seed = 7;
    double lm_tol = 1e-8;
    lemma->add_option("--convention", lm_convention, "block_sum | block_average");
    lemma->add_option("--graphs", lm_graphs, "random graphs");
    lemma->add_option("--max-n", lm_max_n, "max node count");
    lemma->add_option("--seed", lm_seed, "seed");
    lemma->add_option("--tol", lm_tol, "multiset tolerance");

    // verify-hw
    auto* hw = app.add_subcommand("verify-hw", "Hoffman-Wielandt sweeps");
    int hw_pairs = 1000, hw_max_n = 32, hw_traces = 100;
    std::uint64_t hw_seed = 11;
    hw->add_option("--pairs", hw_pairs, "random symmetric pairs");
    hw->add_option("--max-n", hw_max_n, "max matrix size");
    hw->add_option("--traces", hw_traces, "merge traces");
    hw->add_option("--seed", hw_seed, "seed");

    // theorem
    auto* thm = app.add_subcommand("theorem", "stability trial report");
    TrialConfig tc;
    std::vector<double> thm_noise;
    bool thm_straddling = false;
    thm->add_option("--noise", thm_noise, "noise grid (repeatable)");
    thm->add_option("--margin", tc.margin, "margin m");
    thm->add_option("--height", tc.height, "window height");
    thm->add_option("--width", tc.width, "window width");
    thm->add_option("--channels", tc.channels, "channels");
    thm->add_option("--cell", tc.cell, "cell side");
    thm->add_option("--rate", tc.rate, "merge rate");
    thm->add_option("--trials", tc.trials, "trials per level");
    thm->add_option("--seed", tc.seed, "seed");
    thm->add_flag("--straddling", thm_straddling, "cells split between regions");

    // flops
    auto* flops = app.add_subcommand("flops", "encoder cost report");
    std::string fl_preset = "vitb", fl_mode = "attention_block";
    double fl_rate = 0.0;
    int fl_cell = 2;
    flops->add_option("--preset", fl_preset, "vitb | vitl");
    flops->add_option("--rate", fl_rate, "merge rate on every layer");
    flops->add_option("--cell", fl_cell, "cell side");
    flops->add_option("--mode", fl_mode, "attention_only | attention_block | full_block");

    // ablate
    auto* ab = app.add_subcommand("ablate", "strategy-variant matrix on synthetic windows");
    std::vector<double> ab_rates;
    int ab_trials = 20, ab_h = 16, ab_w = 16, ab_c = 16, ab_cell = 2;
    double ab_noise = 0.05, ab_margin = 0.5;
    std::uint64_t ab_seed = 5;
    ab->add_option("--rates", ab_rates, "merge rates (repeatable)");
    ab->add_option("--trials", ab_trials, "trials per cell");
    ab->add_option("--noise", ab_noise, "noise level");
    ab->add_option("--margin", ab_margin, "margin m");
    ab->add_option("--height", ab_h, "window height");
    ab->add_option("--width", ab_w, "window width");
    ab->add_option("--channels", ab_c, "channels");
    ab->add_option("--cell", ab_cell, "cell side");
    ab->add_option("--seed", ab_seed, "seed");

    // box
    auto* box = app.add_subcommand("box", "bounding box from a mask");
    std::string bx_mask;
    int bx_patch = 16;
    box->add_option("--mask", bx_mask, "mask file (.pgm or .csv)")->required();
    box->add_option("--patch", bx_patch, "patch size in pixels");

    std::vector<std::string> invocation = args;
    try {
        std::vector<const char*> argv;
        argv.push_back("structmerge");
        for (const auto& a : args) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (plan->parsed())
            return cmd_plan(invocation, plan_grid, plan_rate, plan_cell, plan_window, plan_grad,
                            plan_dst, plan_cells, plan_seed, out_dir);
        if (rt->parsed())
            return cmd_merge_roundtrip(invocation, rt_h, rt_w, rt_c, rt_rate, rt_cell, rt_window,
                                       rt_trials, rt_seed, rt_attention, out_dir);
        if (spec->parsed())
            return cmd_spectral(invocation, sp_grid, sp_rate, sp_cell, sp_window, sp_grad,
                                sp_convention, out_dir);
        if (lemma->parsed())
            return cmd_verify_lemma(invocation, lm_convention, lm_graphs, lm_max_n, lm_seed,
                                    lm_tol, out_dir);
        if (hw->parsed())
            return cmd_verify_hw(invocation, hw_pairs, hw_max_n, hw_traces, hw_seed, out_dir);
        if (thm->parsed()) {
            if (!thm_noise.empty()) tc.noise_grid = thm_noise;
            tc.straddling = thm_straddling;
            return cmd_theorem(invocation, tc, out_dir);
        }
        if (flops->parsed())
            return cmd_flops(invocation, fl_preset, fl_rate, fl_cell, fl_mode, out_dir);
        if (ab->parsed()) {
            if (ab_rates.empty()) ab_rates = {0.35, 0.55};
            return cmd_ablate(invocation, ab_rates, ab_trials, ab_noise, ab_margin, ab_h, ab_w,
                              ab_c, ab_cell, ab_seed, out_dir);
        }
        if (box->parsed()) return cmd_box(invocation, bx_mask, bx_patch, out_dir);
    } catch (const SeparabilityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

}  // namespace structmerge
