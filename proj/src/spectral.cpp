#include "structmerge/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace structmerge {

Spectrum sym_eigenvalues(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw ShapeError("sym_eigenvalues: matrix not square");
    if (m.rows() > 1024) throw ShapeError("sym_eigenvalues: N > 1024");
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10)
        throw AsymmetryError("sym_eigenvalues: asymmetry " + std::to_string(asym));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
    Spectrum s;
    s.values.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + m.rows());
    std::sort(s.values.begin(), s.values.end());
    return s;
}

double spectral_discrepancy(const Spectrum& a, const Spectrum& b) {
    if (a.size() != b.size()) throw LengthError("spectral_discrepancy: length mismatch");
    std::vector<double> x = a.values, y = b.values;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += std::abs(x[i] - y[i]);
    return d;
}

Spectrum lifted_proxy_spectrum(const TokenGraph& graph, const Partition& partition) {
    const TokenGraph coarse = coarsen(graph, partition, CoarseningConvention::BlockSum);
    Spectrum s = sym_eigenvalues(laplacians(coarse).normalized);
    s.values.resize(graph.size(), 1.0);
    std::sort(s.values.begin(), s.values.end());
    return s;
}

double layer_discrepancy(const std::vector<WindowCase>& windows, CoarseningConvention route) {
    double sd = 0.0;
    for (const auto& w : windows) {
        const Spectrum original = sym_eigenvalues(laplacians(w.graph).normalized);
        Spectrum lifted;
        if (route == CoarseningConvention::BlockSum) {
            lifted = lifted_proxy_spectrum(w.graph, w.partition);
        } else {
            const TokenGraph lg =
                lift(coarsen(w.graph, w.partition, CoarseningConvention::BlockAverage),
                     w.partition, w.graph.size());
            lifted = sym_eigenvalues(laplacians(lg).normalized);
        }
        sd += spectral_discrepancy(original, lifted);
    }
    return sd;
}

double encoder_distortion(const std::vector<std::vector<WindowCase>>& layers,
                          CoarseningConvention route) {
    double total = 0.0;
    for (const auto& layer : layers) total += layer_discrepancy(layer, route);
    return total;
}

double row_drift(const Eigen::MatrixXd& weights, int a, int b) {
    const int n = static_cast<int>(weights.rows());
    if (a < 0 || b < 0 || a >= n || b >= n || a == b)
        throw IndexError("row_drift: invalid index pair");
    const double row_term = (weights.row(a) - weights.row(b)).cwiseAbs().sum();
    const double col_term = (weights.col(a) - weights.col(b)).cwiseAbs().sum();
    return row_term + col_term;
}

HoffmanWielandtGap hoffman_wielandt_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("hoffman_wielandt_gap: shape mismatch");
    const Spectrum alpha = sym_eigenvalues(a);
    const Spectrum beta = sym_eigenvalues(b);
    HoffmanWielandtGap gap;
    for (int i = 0; i < alpha.size(); ++i) {
        const double d = alpha.values[i] - beta.values[i];
        gap.sq_lhs += d * d;
        gap.l1_lhs += std::abs(d);
    }
    gap.sq_rhs = (a - b).squaredNorm();
    gap.l1_rhs = std::sqrt(static_cast<double>(a.rows())) * (a - b).norm();
    return gap;
}

InclusionReport verify_eigenvalue_inclusion(const TokenGraph& graph, const Partition& partition,
                                            CoarseningConvention convention, double tol) {
    const int N = graph.size();
    const TokenGraph lifted =
        lift(coarsen(graph, partition, CoarseningConvention::BlockAverage), partition, N);
    const Spectrum lam_l = sym_eigenvalues(laplacians(lifted).normalized);
    const TokenGraph coarse = coarsen(graph, partition, convention);
    Spectrum expected = sym_eigenvalues(laplacians(coarse).normalized);
    expected.values.resize(N, 1.0);
    std::sort(expected.values.begin(), expected.values.end());

    InclusionReport report;
    for (int i = 0; i < N; ++i)
        report.max_mismatch =
            std::max(report.max_mismatch, std::abs(lam_l.values[i] - expected.values[i]));
    report.holds = report.max_mismatch <= tol;
    for (double v : lam_l.values)
        if (std::abs(v - 1.0) <= tol) ++report.unit_count;
    return report;
}

// ---------------------------------------------------------------------------
// merge traces
// ---------------------------------------------------------------------------

namespace {

void drop_row_col(Eigen::MatrixXd& m, int k) {
    const int n = static_cast<int>(m.rows());
    Eigen::MatrixXd out(n - 1, n - 1);
    for (int i = 0, ii = 0; i < n; ++i) {
        if (i == k) continue;
        for (int j = 0, jj = 0; j < n; ++j) {
            if (j == k) continue;
            out(ii, jj++) = m(i, j);
        }
        ++ii;
    }
    m = std::move(out);
}

void drop_row(Eigen::MatrixXd& m, int k) {
    Eigen::MatrixXd out(m.rows() - 1, m.cols());
    for (int i = 0, ii = 0; i < m.rows(); ++i) {
        if (i == k) continue;
        out.row(ii++) = m.row(i);
    }
    m = std::move(out);
}

// Entity-level trace state. `weights` is the current entity graph: the
// cosine affinity of running means (rebuild mode) or the size-weighted
// block average of the original weights (static mode, kept as block sums).
struct EntityState {
    bool rebuild = true;
    std::vector<std::vector<int>> constituents;
    Eigen::MatrixXd weights;     // entity graph (averages in static mode)
    Eigen::MatrixXd block_sums;  // static mode: sums of original weights
    Eigen::MatrixXd token_sums;  // rebuild mode: running token sums (n x C)

    int count() const { return static_cast<int>(constituents.size()); }

    double group_size(int i) const { return static_cast<double>(constituents[i].size()); }

    Eigen::VectorXd sizes() const {
        Eigen::VectorXd c(count());
        for (int i = 0; i < count(); ++i) c(i) = group_size(i);
        return c;
    }

    void merge(int d_pos, int s_pos) {
        auto& dc = constituents[d_pos];
        dc.insert(dc.end(), constituents[s_pos].begin(), constituents[s_pos].end());
        std::sort(dc.begin(), dc.end());
        constituents.erase(constituents.begin() + s_pos);
        const int d = d_pos - (s_pos < d_pos ? 1 : 0);

        if (rebuild) {
            token_sums.row(d_pos) += token_sums.row(s_pos);
            drop_row(token_sums, s_pos);
            drop_row_col(weights, s_pos);
            // only the merged entity's mean changed: refresh its row/col
            const Eigen::VectorXd mean = token_sums.row(d) / group_size(d);
            const double norm = mean.norm();
            if (norm <= 0.0) throw ZeroNormError("merge_trace: merged mean has zero norm");
            const Eigen::VectorXd unit = mean / norm;
            for (int k = 0; k < count(); ++k) {
                const Eigen::VectorXd mk = token_sums.row(k) / group_size(k);
                const double nk = mk.norm();
                if (nk <= 0.0) throw ZeroNormError("merge_trace: entity mean has zero norm");
                const double w = (1.0 + unit.dot(mk / nk)) / 2.0;
                weights(d, k) = w;
                weights(k, d) = w;
            }
            weights(d, d) = 1.0;
        } else {
            block_sums.row(d_pos) += block_sums.row(s_pos);
            block_sums.col(d_pos) += block_sums.col(s_pos);
            drop_row_col(block_sums, s_pos);
            const Eigen::VectorXd inv = sizes().cwiseInverse();
            weights = inv.asDiagonal() * block_sums * inv.asDiagonal();
        }
    }

    // Block-sum coarse weights of the N-node lifted proxy: C * W_avg * C.
    Eigen::MatrixXd proxy_coarse_sums() const {
        if (!rebuild) return block_sums;
        const Eigen::VectorXd c = sizes();
        return c.asDiagonal() * weights * c.asDiagonal();
    }
};

Spectrum padded_proxy_spectrum(const EntityState& st, int original_nodes) {
    TokenGraph coarse;
    coarse.weights = st.proxy_coarse_sums();
    Spectrum s = sym_eigenvalues(laplacians(coarse).normalized);
    s.values.resize(original_nodes, 1.0);
    std::sort(s.values.begin(), s.values.end());
    return s;
}

Eigen::MatrixXd lifted_proxy_laplacian(const EntityState& st, int original_nodes) {
    TokenGraph coarse;
    coarse.weights = st.weights;
    const TokenGraph lg = lift(coarse, st.constituents, original_nodes);
    return laplacians(lg).normalized;
}

}  // namespace

MergeTrace merge_trace(const Eigen::MatrixXd& tokens, const MergePlan& plan,
                       const std::optional<Partition>& ground_truth,
                       const TraceOptions& options) {
    const int N = static_cast<int>(tokens.rows());
    if (N != plan.tokens()) throw ShapeError("merge_trace: token count does not match plan");
    std::vector<int> region(N, -1);
    if (ground_truth) {
        validate_partition(*ground_truth, N);
        for (int g = 0; g < static_cast<int>(ground_truth->size()); ++g)
            for (int t : (*ground_truth)[g]) region[t] = g;
    }

    const bool want_drift = options.with_spectral_drift || options.with_hoffman_wielandt;
    const TokenGraph original = cosine_affinity_graph(tokens, /*include_self_loops=*/true);

    MergeTrace trace;
    trace.original_spectrum = sym_eigenvalues(laplacians(original).normalized);
    trace.plan_sd = spectral_discrepancy(trace.original_spectrum,
                                         lifted_proxy_spectrum(original, plan.partition()));

    EntityState st;
    st.rebuild = options.rebuild;
    st.constituents.resize(N);
    for (int i = 0; i < N; ++i) st.constituents[i] = {i};
    st.weights = original.weights;
    if (options.rebuild) st.token_sums = tokens;
    else st.block_sums = original.weights;

    std::vector<int> entity_of(N);
    std::iota(entity_of.begin(), entity_of.end(), 0);

    Spectrum prev_proxy = trace.original_spectrum;
    Eigen::MatrixXd prev_lap;
    if (options.with_hoffman_wielandt) prev_lap = laplacians(original).normalized;

    int step_no = 0;
    for (const auto& group : plan.merge_groups()) {
        // the member without an assignment entry is the kept destination
        int kept_member = -1;
        for (int t : group)
            if (!plan.assignment.count(t)) kept_member = t;
        if (kept_member < 0) throw PartitionError("merge_trace: group without destination");
        for (int src : group) {
            if (src == kept_member) continue;
            const int d_pos = entity_of[kept_member];
            const int s_pos = entity_of[src];

            TraceStep step;
            step.step = ++step_no;
            step.dst = kept_member;
            step.src = src;
            step.delta = row_drift(st.weights, d_pos, s_pos);
            if (ground_truth) {
                std::set<int> regions;
                for (int t : st.constituents[d_pos]) regions.insert(region[t]);
                for (int t : st.constituents[s_pos]) regions.insert(region[t]);
                step.within_region = regions.size() == 1 ? 1 : 0;
            }

            st.merge(d_pos, s_pos);
            for (int e = 0; e < st.count(); ++e)
                for (int t : st.constituents[e]) entity_of[t] = e;

            if (want_drift) {
                const Spectrum proxy = padded_proxy_spectrum(st, N);
                step.drift = spectral_discrepancy(prev_proxy, proxy);
                if (options.with_hoffman_wielandt) {
                    const Eigen::MatrixXd lap = lifted_proxy_laplacian(st, N);
                    const HoffmanWielandtGap gap = hoffman_wielandt_gap(prev_lap, lap);
                    step.hw_sq_slack = gap.sq_rhs - gap.sq_lhs;
                    step.hw_l1_slack = gap.l1_rhs - gap.l1_lhs;
                    step.hw_checked = true;
                    prev_lap = lap;
                }
                prev_proxy = proxy;
            }
            trace.steps.push_back(step);
        }
    }

    trace.lifted_spectrum = want_drift ? prev_proxy : padded_proxy_spectrum(st, N);
    trace.terminal_discrepancy =
        spectral_discrepancy(trace.original_spectrum, trace.lifted_spectrum);
    return trace;
}

std::string merge_trace_to_csv(const MergeTrace& trace) {
    std::ostringstream os;
    os << "step,a,b,delta,drift,within_region\n";
    os.precision(12);
    for (const auto& s : trace.steps) {
        os << s.step << ',' << s.dst << ',' << s.src << ',' << s.delta << ',';
        if (s.drift >= 0.0) os << s.drift;
        os << ',';
        if (s.within_region >= 0) os << s.within_region;
        os << '\n';
    }
    return os.str();
}

}  // namespace structmerge
