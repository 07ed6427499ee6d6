#include "structmerge/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "structmerge/merge.hpp"

namespace structmerge {

namespace {

// splitmix64; used to derive independent per-trial seeds
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic standard normals (explicit Box-Muller over raw 53-bit
// uniforms, so sequences do not depend on the standard library).
class NormalSource {
  public:
    explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

  private:
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace

RegionLayout half_split_layout(int height, int width) {
    RegionLayout layout(static_cast<std::size_t>(height) * width);
    for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w)
            layout[static_cast<std::size_t>(h) * width + w] = w < width / 2 ? 0 : 1;
    return layout;
}

RegionLayout straddling_layout(int height, int width, int cell_w) {
    const int boundary = std::max(1, width / 2 - cell_w / 2);
    RegionLayout layout(static_cast<std::size_t>(height) * width);
    for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w)
            layout[static_cast<std::size_t>(h) * width + w] = w < boundary ? 0 : 1;
    return layout;
}

namespace {

// k unit vectors with equal pairwise cosine c: blend of the all-ones
// direction with a centered simplex inside span(e_0..e_{k-1}).
Eigen::MatrixXd region_mean_directions(int k, int channels, double cosine) {
    if (channels < std::max(2, k))
        throw ShapeError("synth_window: need C >= max(2, region count)");
    if (k == 1) {
        Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(1, channels);
        mu(0, 0) = 1.0;
        return mu;
    }
    const double c_min = -1.0 / (k - 1);
    const double c = std::max(cosine, k == 2 ? -1.0 : c_min + 1e-9);
    Eigen::MatrixXd simplex = Eigen::MatrixXd::Zero(k, channels);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) simplex(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / k;
        simplex.row(i) /= simplex.row(i).norm();
    }
    Eigen::VectorXd ones = Eigen::VectorXd::Zero(channels);
    for (int j = 0; j < k; ++j) ones(j) = 1.0 / std::sqrt(static_cast<double>(k));
    // cos(mu_i, mu_j) = a^2 + b^2 * (-1/(k-1)) = c
    const double a2 = (c - c_min) / (1.0 - c_min);
    const double a = std::sqrt(std::max(0.0, a2));
    const double b = std::sqrt(std::max(0.0, 1.0 - a2));
    Eigen::MatrixXd mu(k, channels);
    for (int i = 0; i < k; ++i) {
        mu.row(i) = a * ones.transpose() + b * simplex.row(i);
        mu.row(i) /= mu.row(i).norm();
    }
    return mu;
}

}  // namespace

RegionWindow synth_window(int height, int width, const RegionLayout& layout, double margin,
                          double noise, int channels, std::uint64_t seed) {
    const int n = height * width;
    if (static_cast<int>(layout.size()) != n)
        throw ShapeError("synth_window: layout size != H*W");
    if (margin <= 0.0 || margin >= 1.0) throw RateError("synth_window: margin must be in (0,1)");
    if (noise < 0.0) throw RateError("synth_window: noise must be >= 0");
    int k = 0;
    for (int r : layout) k = std::max(k, r + 1);

    RegionWindow window;
    window.height = height;
    window.width = width;
    window.margin = margin;
    window.noise = noise;
    window.seed = seed;
    window.region_means = region_mean_directions(k, channels, margin - 0.2);
    window.regions.assign(k, {});
    for (int t = 0; t < n; ++t) window.regions[layout[t]].push_back(t);

    NormalSource normal(seed);
    constexpr int kMaxAttempts = 100;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Eigen::MatrixXd tokens(n, channels);
        for (int t = 0; t < n; ++t) {
            for (int c = 0; c < channels; ++c)
                tokens(t, c) = window.region_means(layout[t], c) + noise * normal();
            const double norm = tokens.row(t).norm();
            if (norm <= 0.0) {
                tokens(t, 0) += 1e-12;  // vanishing draw; resample handles it
            }
            tokens.row(t) /= tokens.row(t).norm();
        }
        bool separated = true;
        if (k >= 2) {
            const Eigen::MatrixXd cos = tokens * tokens.transpose();
            double within_min = 1.0, cross_max = -1.0;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) {
                    if (layout[i] == layout[j])
                        within_min = std::min(within_min, cos(i, j));
                    else
                        cross_max = std::max(cross_max, cos(i, j));
                }
            separated = within_min >= cross_max;
        }
        if (separated) {
            window.tokens = std::move(tokens);
            window.rejections = attempt;
            return window;
        }
    }
    throw SeparabilityError("synth_window: separation failed after 100 rejections (noise " +
                            std::to_string(noise) + " too large for margin " +
                            std::to_string(margin) + ")");
}

CorrectnessReport merge_correctness(const MergeTrace& trace, const MergePlan& plan,
                                    const Partition& ground_truth) {
    const int n = plan.tokens();
    std::vector<int> region(n, -1);
    for (int g = 0; g < static_cast<int>(ground_truth.size()); ++g)
        for (int t : ground_truth[g]) region[t] = g;

    std::vector<std::vector<int>> constituents(n);
    for (int t = 0; t < n; ++t) constituents[t] = {t};

    CorrectnessReport report;
    int cross = 0;
    for (const auto& step : trace.steps) {
        std::set<int> regions;
        for (int t : constituents[step.dst]) regions.insert(region[t]);
        for (int t : constituents[step.src]) regions.insert(region[t]);
        const int flag = regions.size() == 1 ? 1 : 0;
        report.event_flags.push_back(flag);
        cross += 1 - flag;
        auto& dc = constituents[step.dst];
        dc.insert(dc.end(), constituents[step.src].begin(), constituents[step.src].end());
    }
    report.cross_rate =
        trace.steps.empty() ? 0.0 : static_cast<double>(cross) / trace.steps.size();
    return report;
}

std::string strategy_name(MergeStrategy s) {
    switch (s) {
        case MergeStrategy::ScoreGuided: return "score_guided";
        case MergeStrategy::Stride: return "stride";
        case MergeStrategy::RandomDst: return "random_dst";
        case MergeStrategy::Bipartite: return "bipartite";
    }
    return "?";
}

namespace {

FeatureGrid grid_from_tokens(const Eigen::MatrixXd& tokens, int height, int width) {
    FeatureGrid g(height, width, static_cast<int>(tokens.cols()));
    for (int t = 0; t < tokens.rows(); ++t)
        for (int c = 0; c < tokens.cols(); ++c)
            g.values[static_cast<std::size_t>(t) * tokens.cols() + c] = tokens(t, c);
    return g;
}

double mean_within_cosine(const RegionWindow& window) {
    const Eigen::MatrixXd cos = window.tokens * window.tokens.transpose();
    double acc = 0.0;
    long long count = 0;
    for (const auto& group : window.regions)
        for (std::size_t i = 0; i < group.size(); ++i)
            for (std::size_t j = i + 1; j < group.size(); ++j) {
                acc += cos(group[i], group[j]);
                ++count;
            }
    return count ? acc / static_cast<double>(count) : 1.0;
}

}  // namespace

TrialReport theorem_trial(const TrialConfig& config) {
    TrialReport report;
    report.config = config;
    if (config.trials <= 0) return report;
    const RegionLayout layout =
        config.straddling ? straddling_layout(config.height, config.width, config.cell)
                          : half_split_layout(config.height, config.width);
    const CellPartition partition = partition_cells(
        config.height, config.width, WindowLayout::global(), config.cell, config.cell);

    for (std::size_t li = 0; li < config.noise_grid.size(); ++li) {
        const double eta = config.noise_grid[li];
        struct Agg {
            double sd = 0.0, terminal = 0.0, dhat = 0.0, cosine = 0.0, ratio = 0.0;
            int count = 0, ratio_count = 0;
        };
        std::vector<Agg> agg(config.strategies.size());
        bool skipped = false;

        for (int trial = 0; trial < config.trials && !skipped; ++trial) {
            RegionWindow window;
            try {
                window = synth_window(config.height, config.width, layout, config.margin, eta,
                                      config.channels, mix_seed(config.seed, li * 1000 + trial));
            } catch (const SeparabilityError&) {
                skipped = true;
                break;
            }
            const FeatureGrid grid = grid_from_tokens(window.tokens, config.height, config.width);
            const GradientField energy = gradient_energy(grid, config.gradient_op);
            const double wcos = mean_within_cosine(window);

            for (std::size_t si = 0; si < config.strategies.size(); ++si) {
                MergePlan plan;
                switch (config.strategies[si]) {
                    case MergeStrategy::ScoreGuided:
                        plan = build_merge_plan(partition, energy, config.rate);
                        break;
                    case MergeStrategy::Stride:
                        plan = stride_plan(partition, config.rate);
                        break;
                    case MergeStrategy::RandomDst:
                        plan = random_pairing_plan(config.height, config.width, config.rate,
                                                   config.cell, config.cell,
                                                   mix_seed(config.seed, 7700 + li * 97 + trial));
                        break;
                    case MergeStrategy::Bipartite:
                        plan = bipartite_plan(grid, config.rate);
                        break;
                }
                TraceOptions opts;
                opts.with_spectral_drift = trial == 0;  // ratio probe
                const MergeTrace trace = merge_trace(window.tokens, plan, window.regions, opts);
                Agg& a = agg[si];
                a.sd += trace.plan_sd;
                a.terminal += trace.terminal_discrepancy;
                int cross = 0;
                for (const auto& s : trace.steps) cross += s.within_region == 0 ? 1 : 0;
                a.dhat += trace.steps.empty()
                              ? 0.0
                              : static_cast<double>(cross) / trace.steps.size();
                a.cosine += wcos;
                a.count += 1;
                if (trial == 0) {
                    double rsum = 0.0;
                    int rcount = 0;
                    for (const auto& s : trace.steps)
                        if (s.delta > 1e-12 && s.drift >= 0.0) {
                            rsum += s.drift / s.delta;
                            ++rcount;
                        }
                    if (rcount) {
                        a.ratio += rsum / rcount;
                        a.ratio_count += 1;
                    }
                }
            }
        }

        if (skipped) {
            report.skipped_levels.push_back(static_cast<int>(li));
            for (std::size_t si = 0; si < config.strategies.size(); ++si) {
                TrialCell cell;
                cell.noise = eta;
                cell.strategy = config.strategies[si];
                cell.skipped = true;
                report.cells.push_back(cell);
            }
            continue;
        }
        for (std::size_t si = 0; si < config.strategies.size(); ++si) {
            const Agg& a = agg[si];
            TrialCell cell;
            cell.noise = eta;
            cell.strategy = config.strategies[si];
            cell.trials = a.count;
            if (a.count) {
                cell.mean_sd = a.sd / a.count;
                cell.mean_terminal = a.terminal / a.count;
                cell.delta_hat = a.dhat / a.count;
                cell.mean_within_cos = a.cosine / a.count;
            }
            if (a.ratio_count) cell.drift_delta_ratio = a.ratio / a.ratio_count;
            report.cells.push_back(cell);
        }
    }
    return report;
}

std::string trial_report_to_csv(const TrialReport& report) {
    std::ostringstream os;
    os << "noise,strategy,mean_sd,delta_hat,mean_cos,trials\n";
    os.precision(12);
    for (const auto& cell : report.cells) {
        if (cell.skipped) continue;
        os << cell.noise << ',' << strategy_name(cell.strategy) << ',' << cell.mean_sd << ','
           << cell.delta_hat << ',' << cell.mean_within_cos << ',' << cell.trials << '\n';
    }
    return os.str();
}

}  // namespace structmerge
