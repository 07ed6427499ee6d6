#pragma once

// Eigenvalue computation and the spectral verification apparatus: layer
// discrepancy, encoder distortion, row drift, Hoffman-Wielandt gaps, the
// eigenvalue-inclusion check, and per-merge-step traces.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "structmerge/cells.hpp"
#include "structmerge/token_graph.hpp"

namespace structmerge {

// Ascending-sorted eigenvalues of a symmetric matrix.
struct Spectrum {
    std::vector<double> values;

    int size() const { return static_cast<int>(values.size()); }
};

// Dense symmetric eigensolve. Throws AsymmetryError if max|M - M^T| exceeds
// 1e-10 and ShapeError for N > 1024 (all experiments use windows well below
// that).
Spectrum sym_eigenvalues(const Eigen::MatrixXd& m);

// l1 distance between ascending-sorted spectra (inputs re-sorted first).
// Throws LengthError on size mismatch.
double spectral_discrepancy(const Spectrum& a, const Spectrum& b);

// Spectrum of the N-node lifted proxy lift(coarsen_avg(graph, partition)).
// Computed through the equivalent coarse route: the normalized-Laplacian
// spectrum of the block-sum coarse graph joined with (N - n) ones; this
// multiset identity holds for every partition because the block-sum weights
// equal C * W_avg * C exactly.
Spectrum lifted_proxy_spectrum(const TokenGraph& graph, const Partition& partition);

struct WindowCase {
    TokenGraph graph;
    Partition partition;
};

// Sum over windows of || lambda(L(W)) - lambda(L(W_lifted)) ||_1. The
// convention selects the computational route for the lifted spectrum
// (BlockSum = coarse route above, BlockAverage = eigensolve of the actual
// N x N lifted matrix); the two agree to solver precision.
double layer_discrepancy(const std::vector<WindowCase>& windows,
                         CoarseningConvention route = CoarseningConvention::BlockSum);

// Cumulative distortion: sum of per-layer discrepancies.
double encoder_distortion(const std::vector<std::vector<WindowCase>>& layers,
                          CoarseningConvention route = CoarseningConvention::BlockSum);

// ||W[a,:] - W[b,:]||_1 + ||W[:,a] - W[:,b]||_1. For symmetric inputs the
// two terms coincide and the result is twice the row term. Throws
// IndexError for a == b or out-of-range indices.
double row_drift(const Eigen::MatrixXd& weights, int a, int b);

struct HoffmanWielandtGap {
    double sq_lhs = 0.0;  // sum (alpha_i - beta_i)^2, sorted spectra
    double sq_rhs = 0.0;  // ||A - B||_F^2
    double l1_lhs = 0.0;  // ||alpha - beta||_1
    double l1_rhs = 0.0;  // sqrt(N) ||A - B||_F
};

// Both sides of the squared inequality and of its l1 corollary; the caller
// asserts lhs <= rhs. Throws ShapeError on dimension mismatch.
HoffmanWielandtGap hoffman_wielandt_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct InclusionReport {
    bool holds = false;
    double max_mismatch = 0.0;  // worst sorted-multiset deviation
    int unit_count = 0;         // lifted eigenvalues within tol of 1
};

// Checks spec(L_lifted) == spec(L_coarse(convention)) U {1}^(N-n) within
// tol, with the lifted graph always carrying block-average values. Holds
// unconditionally for BlockSum; for BlockAverage only with equal-size
// groups (the {2,1} path-graph case is the canonical failure).
InclusionReport verify_eigenvalue_inclusion(const TokenGraph& graph, const Partition& partition,
                                            CoarseningConvention convention, double tol);

// --- per-merge-step traces -----------------------------------------------------

struct TraceStep {
    int step = 0;
    int dst = 0;  // destination entity, original token id
    int src = 0;  // merged-in source, original token id
    double delta = 0.0;         // row drift on the pre-step entity graph
    double drift = -1.0;        // one-step spectral drift (-1 when not computed)
    int within_region = -1;     // 1 / 0, -1 without ground truth
    double hw_sq_slack = 0.0;   // rhs - lhs of the squared inequality
    double hw_l1_slack = 0.0;   // rhs - lhs of the l1 corollary
    bool hw_checked = false;
};

struct MergeTrace {
    std::vector<TraceStep> steps;
    Spectrum original_spectrum;  // affinity graph of the input tokens
    Spectrum lifted_spectrum;    // terminal N-node lifted proxy
    double terminal_discrepancy = 0.0;  // ||original - lifted||_1
    double plan_sd = 0.0;  // SD of (original graph, plan partition)
};

struct TraceOptions {
    // rebuild: the entity graph is the cosine affinity of the running token
    // means after every step. static: entities aggregate the original
    // weights (size-weighted block averages), never re-reading the tokens.
    bool rebuild = true;
    bool with_spectral_drift = false;
    bool with_hoffman_wielandt = false;  // implies spectral drift
};

// Serializes the plan's merges into pairwise steps (groups by ascending
// destination, sources ascending) and records per-step row drift, optional
// one-step spectral drift of the cumulative lifted proxy, and within-region
// event flags against the ground-truth partition. Graphs carry self-loop
// affinities so that merging duplicate tokens is exactly drift-free.
MergeTrace merge_trace(const Eigen::MatrixXd& tokens, const MergePlan& plan,
                       const std::optional<Partition>& ground_truth = std::nullopt,
                       const TraceOptions& options = {});

// CSV with columns (step, a, b, delta, drift, within_region).
std::string merge_trace_to_csv(const MergeTrace& trace);

}  // namespace structmerge
