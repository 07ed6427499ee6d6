// Python bindings for the main operations: grids and gradient energy, merge
// plans, merge/unmerge, token graphs and spectra, merge traces, synthetic
// trials and the cost model.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "structmerge/attention.hpp"
#include "structmerge/cost_model.hpp"
#include "structmerge/merge.hpp"
#include "structmerge/report.hpp"
#include "structmerge/spectral.hpp"
#include "structmerge/synthesis.hpp"

namespace py = pybind11;
using namespace structmerge;

namespace {

FeatureGrid grid_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 3) throw ShapeError("expected an (H, W, C) array");
    FeatureGrid g(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                  static_cast<int>(arr.shape(2)));
    std::copy(arr.data(), arr.data() + arr.size(), g.values.begin());
    g.validate();
    return g;
}

py::array_t<double> array_from_grid(const FeatureGrid& g) {
    py::array_t<double> arr({g.height, g.width, g.channels});
    std::copy(g.values.begin(), g.values.end(), arr.mutable_data());
    return arr;
}

py::array_t<double> array_from_field(const GradientField& f) {
    py::array_t<double> arr({f.height, f.width});
    std::copy(f.magnitudes.begin(), f.magnitudes.end(), arr.mutable_data());
    return arr;
}

GradientField field_from_array(
    py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2) throw ShapeError("expected an (H, W) array");
    GradientField f(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + arr.size(), f.magnitudes.begin());
    return f;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "gradient-guided token merging on 2D feature grids with "
              "spectral-graph verification";
    m.attr("__version__") = kVersion;

    py::register_exception<Error>(m, "StructmergeError");

    // --- plans ------------------------------------------------------------
    py::class_<MergePlan>(m, "MergePlan")
        .def_readonly("height", &MergePlan::height)
        .def_readonly("width", &MergePlan::width)
        .def_readonly("rate", &MergePlan::rate)
        .def_readonly("sources", &MergePlan::sources)
        .def_readonly("kept", &MergePlan::kept)
        .def_readonly("mergeable_cells", &MergePlan::mergeable_cells)
        .def_property_readonly("assignment",
                               [](const MergePlan& p) {
                                   py::dict d;
                                   for (const auto& [s, t] : p.assignment)
                                       d[py::int_(s)] = py::int_(t);
                                   return d;
                               })
        .def("partition", &MergePlan::partition)
        .def("to_json", &merge_plan_to_json)
        .def_static("from_json", &merge_plan_from_json);

    py::class_<CellPartition>(m, "CellPartition")
        .def_readonly("cells", &CellPartition::cells)
        .def_readonly("window_of", &CellPartition::window_of);

    // --- gradients ----------------------------------------------------------
    m.def("central_diff_gradients", [](py::array_t<double> arr) {
        const GradientPair g = central_diff_gradients(grid_from_array(arr));
        return py::make_tuple(array_from_grid(g.gx), array_from_grid(g.gy));
    });
    m.def("sobel_gradients", [](py::array_t<double> arr) {
        const GradientPair g = sobel_gradients(grid_from_array(arr));
        return py::make_tuple(array_from_grid(g.gx), array_from_grid(g.gy));
    });
    m.def("gradient_energy", [](py::array_t<double> arr, const std::string& op) {
        return array_from_field(gradient_energy(
            grid_from_array(arr), op == "sobel" ? GradientOp::Sobel : GradientOp::CentralDiff));
    }, py::arg("grid"), py::arg("op") = "central");
    m.def("pairwise_energy",
          [](py::array_t<double> arr) { return array_from_field(pairwise_energy(grid_from_array(arr))); });

    // --- planning -------------------------------------------------------------
    m.def("partition_cells",
          [](int h, int w, int window, int cell) {
              return partition_cells(h, w,
                                     window > 0 ? WindowLayout::local(window, window)
                                                : WindowLayout::global(),
                                     cell, cell);
          },
          py::arg("height"), py::arg("width"), py::arg("window") = 0, py::arg("cell") = 2);
    m.def("mergeable_cell_count", &mergeable_cell_count);
    m.def("build_merge_plan",
          [](const CellPartition& partition, py::array_t<double> energy, double rate,
             const std::string& dst, const std::string& cells, std::uint64_t seed) {
              DstRule dr = DstRule::min_grad();
              if (dst == "max_grad") dr = DstRule::max_grad();
              else if (dst == "random") dr = DstRule::random(seed);
              CellRule cr = CellRule::flatness(FlatnessAggregation::Max);
              if (cells == "flatness_mean") cr = CellRule::flatness(FlatnessAggregation::Mean);
              else if (cells == "random") cr = CellRule::random(seed);
              return build_merge_plan(partition, field_from_array(energy), rate, dr, cr);
          },
          py::arg("partition"), py::arg("energy"), py::arg("rate"),
          py::arg("dst") = "min_grad", py::arg("cells") = "flatness_max", py::arg("seed") = 0);
    m.def("stride_plan", &stride_plan);
    m.def("random_plan", &random_plan);
    m.def("bipartite_plan",
          [](py::array_t<double> grid, double rate) { return bipartite_plan(grid_from_array(grid), rate); });
    m.def("random_pairing_plan", &random_pairing_plan);
    m.def("no_cell_plan", [](int h, int w, py::array_t<double> energy, double rate, int cell) {
        return no_cell_plan(h, w, field_from_array(energy), rate, cell, cell);
    });

    // --- merge / unmerge ---------------------------------------------------------
    m.def("merge_unmerge_roundtrip", [](py::array_t<double> grid, const MergePlan& plan) {
        const FeatureGrid g = grid_from_array(grid);
        return array_from_grid(apply_unmerge(apply_merge(g, plan), plan));
    });
    m.def("apply_merge", [](py::array_t<double> grid, const MergePlan& plan) {
        const MergedTokens merged = apply_merge(grid_from_array(grid), plan);
        py::array_t<double> rows({merged.rows(), merged.channels});
        std::copy(merged.features.begin(), merged.features.end(), rows.mutable_data());
        return py::make_tuple(rows, merged.kept_index);
    });
    m.def("attention_block",
          [](py::array_t<double> grid, const MergePlan& plan, int window, int heads,
             std::uint64_t seed) {
              AttentionParams params{heads, seed};
              return array_from_grid(merge_compute_unmerge_block(
                  grid_from_array(grid), plan,
                  window > 0 ? WindowLayout::local(window, window) : WindowLayout::global(),
                  params));
          },
          py::arg("grid"), py::arg("plan"), py::arg("window") = 0, py::arg("heads") = 1,
          py::arg("seed") = 0);

    // --- graphs and spectra ---------------------------------------------------------
    py::class_<TokenGraph>(m, "TokenGraph")
        .def_property_readonly("weights", [](const TokenGraph& g) { return g.weights; })
        .def_readonly("degree_floored", &TokenGraph::degree_floored)
        .def("to_json", &token_graph_to_json)
        .def_static("from_json", &token_graph_from_json);

    m.def("cosine_affinity_graph", &cosine_affinity_graph, py::arg("tokens"),
          py::arg("include_self_loops") = false);
    m.def("laplacians", [](const TokenGraph& g) {
        const Laplacians l = laplacians(g);
        return py::make_tuple(l.combinatorial, l.normalized);
    });
    m.def("coarsen",
          [](const TokenGraph& g, const Partition& p, const std::string& convention) {
              return coarsen(g, p,
                             convention == "block_average" ? CoarseningConvention::BlockAverage
                                                           : CoarseningConvention::BlockSum);
          },
          py::arg("graph"), py::arg("partition"), py::arg("convention") = "block_average");
    m.def("lift", &lift);
    m.def("sym_eigenvalues",
          [](const Eigen::MatrixXd& mat) { return sym_eigenvalues(mat).values; });
    m.def("spectral_discrepancy", [](std::vector<double> a, std::vector<double> b) {
        return spectral_discrepancy(Spectrum{std::move(a)}, Spectrum{std::move(b)});
    });
    m.def("lifted_proxy_spectrum", [](const TokenGraph& g, const Partition& p) {
        return lifted_proxy_spectrum(g, p).values;
    });
    m.def("row_drift", &row_drift);
    m.def("hoffman_wielandt_gap", [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        const HoffmanWielandtGap g = hoffman_wielandt_gap(a, b);
        return py::make_tuple(g.sq_lhs, g.sq_rhs, g.l1_lhs, g.l1_rhs);
    });
    m.def("verify_eigenvalue_inclusion",
          [](const TokenGraph& g, const Partition& p, const std::string& convention, double tol) {
              const InclusionReport r = verify_eigenvalue_inclusion(
                  g, p,
                  convention == "block_average" ? CoarseningConvention::BlockAverage
                                                : CoarseningConvention::BlockSum,
                  tol);
              py::dict d;
              d["holds"] = r.holds;
              d["max_mismatch"] = r.max_mismatch;
              d["unit_count"] = r.unit_count;
              return d;
          },
          py::arg("graph"), py::arg("partition"), py::arg("convention") = "block_sum",
          py::arg("tol") = 1e-8);

    // --- traces -----------------------------------------------------------------
    py::class_<TraceStep>(m, "TraceStep")
        .def_readonly("step", &TraceStep::step)
        .def_readonly("dst", &TraceStep::dst)
        .def_readonly("src", &TraceStep::src)
        .def_readonly("delta", &TraceStep::delta)
        .def_readonly("drift", &TraceStep::drift)
        .def_readonly("within_region", &TraceStep::within_region);
    py::class_<MergeTrace>(m, "MergeTrace")
        .def_readonly("steps", &MergeTrace::steps)
        .def_property_readonly("original_spectrum",
                               [](const MergeTrace& t) { return t.original_spectrum.values; })
        .def_property_readonly("lifted_spectrum",
                               [](const MergeTrace& t) { return t.lifted_spectrum.values; })
        .def_readonly("terminal_discrepancy", &MergeTrace::terminal_discrepancy)
        .def_readonly("plan_sd", &MergeTrace::plan_sd)
        .def("to_csv", &merge_trace_to_csv);
    m.def("merge_trace",
          [](const Eigen::MatrixXd& tokens, const MergePlan& plan,
             std::optional<Partition> ground_truth, bool rebuild, bool with_drift) {
              TraceOptions opts;
              opts.rebuild = rebuild;
              opts.with_spectral_drift = with_drift;
              return merge_trace(tokens, plan, ground_truth, opts);
          },
          py::arg("tokens"), py::arg("plan"), py::arg("ground_truth") = std::nullopt,
          py::arg("rebuild") = true, py::arg("with_drift") = false);

    // --- synthesis ---------------------------------------------------------------
    py::class_<RegionWindow>(m, "RegionWindow")
        .def_property_readonly("tokens", [](const RegionWindow& w) { return w.tokens; })
        .def_readonly("regions", &RegionWindow::regions)
        .def_readonly("rejections", &RegionWindow::rejections);
    m.def("half_split_layout", &half_split_layout);
    m.def("synth_window", &synth_window, py::arg("height"), py::arg("width"), py::arg("layout"),
          py::arg("margin"), py::arg("noise"), py::arg("channels"), py::arg("seed"));
    m.def("theorem_trial",
          [](std::vector<double> noise_grid, double margin, int size, int channels, int cell,
             double rate, int trials, std::uint64_t seed) {
              TrialConfig config;
              if (!noise_grid.empty()) config.noise_grid = std::move(noise_grid);
              config.margin = margin;
              config.height = config.width = size;
              config.channels = channels;
              config.cell = cell;
              config.rate = rate;
              config.trials = trials;
              config.seed = seed;
              const TrialReport report = theorem_trial(config);
              py::list rows;
              for (const auto& c : report.cells) {
                  py::dict d;
                  d["noise"] = c.noise;
                  d["strategy"] = strategy_name(c.strategy);
                  d["mean_sd"] = c.mean_sd;
                  d["delta_hat"] = c.delta_hat;
                  d["mean_cos"] = c.mean_within_cos;
                  d["trials"] = c.trials;
                  d["skipped"] = c.skipped;
                  rows.append(d);
              }
              return rows;
          },
          py::arg("noise_grid") = std::vector<double>{}, py::arg("margin") = 0.5,
          py::arg("size") = 16, py::arg("channels") = 16, py::arg("cell") = 2,
          py::arg("rate") = 0.5, py::arg("trials") = 10, py::arg("seed") = 7);

    // --- cost model -----------------------------------------------------------------
    m.def("energy_cost",
          [](std::uint64_t n, std::uint64_t c, const std::string& method, std::uint64_t d_sim) {
              EnergyMethod m_ = EnergyMethod::CentralDiff;
              if (method == "pairwise") m_ = EnergyMethod::Pairwise;
              else if (method == "sobel") m_ = EnergyMethod::Sobel;
              return energy_cost(n, c, m_, d_sim);
          },
          py::arg("tokens"), py::arg("channels"), py::arg("method"), py::arg("d_sim") = 64);
    m.def("encoder_cost",
          [](const std::string& preset, double rate, const std::string& mode) {
              MergeCostMode mm = MergeCostMode::AttentionBlock;
              if (mode == "attention_only") mm = MergeCostMode::AttentionOnly;
              else if (mode == "full_block") mm = MergeCostMode::FullBlock;
              const CostReport r = encoder_cost(preset_schedule(preset, rate), mm);
              py::dict d;
              d["merged_total"] = r.merged_total;
              d["baseline_total"] = r.baseline_total;
              d["reduction"] = r.reduction;
              return d;
          },
          py::arg("preset") = "vitb", py::arg("rate") = 0.0, py::arg("mode") = "attention_block");
}
