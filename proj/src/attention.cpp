#include "structmerge/attention.hpp"

#include <cmath>
#include <map>
#include <random>

namespace structmerge {

// Box-Muller over raw 53-bit uniforms so the sequence does not depend on
// the standard library's distributions.
Eigen::MatrixXd seeded_projection(int channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform = [&rng]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    Eigen::MatrixXd w(channels, channels);
    const double scale = 1.0 / std::sqrt(static_cast<double>(channels));
    for (int i = 0; i < channels; ++i)
        for (int j = 0; j < channels; ++j) {
            double u1 = uniform();
            while (u1 <= 0.0) u1 = uniform();
            const double u2 = uniform();
            w(i, j) = scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        }
    return w;
}

Eigen::MatrixXd attention_with_weights(const Eigen::MatrixXd& tokens, const Eigen::MatrixXd& wq,
                                       const Eigen::MatrixXd& wk, const Eigen::MatrixXd& wv,
                                       int heads) {
    const int n = static_cast<int>(tokens.rows());
    const int c = static_cast<int>(tokens.cols());
    if (heads <= 0 || c % heads != 0)
        throw ShapeError("attention: head count must divide channels");
    const int d_head = c / heads;

    const Eigen::MatrixXd q = tokens * wq;
    const Eigen::MatrixXd k = tokens * wk;
    const Eigen::MatrixXd v = tokens * wv;

    Eigen::MatrixXd out(n, c);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d_head));
    for (int h = 0; h < heads; ++h) {
        const auto qh = q.middleCols(h * d_head, d_head);
        const auto kh = k.middleCols(h * d_head, d_head);
        const auto vh = v.middleCols(h * d_head, d_head);
        Eigen::MatrixXd scores = qh * kh.transpose() * inv_sqrt_d;
        for (int i = 0; i < n; ++i) {
            const double mx = scores.row(i).maxCoeff();
            Eigen::VectorXd e = (scores.row(i).array() - mx).exp();
            e /= e.sum();
            out.block(i, h * d_head, 1, d_head) = e.transpose() * vh;
        }
    }
    return out;
}

Eigen::MatrixXd attention(const Eigen::MatrixXd& tokens, const AttentionParams& params) {
    const int c = static_cast<int>(tokens.cols());
    return attention_with_weights(tokens, seeded_projection(c, params.seed * 3 + 1),
                                  seeded_projection(c, params.seed * 3 + 2),
                                  seeded_projection(c, params.seed * 3 + 3), params.heads);
}

Eigen::MatrixXd windowed_attention(const Eigen::MatrixXd& tokens,
                                   const std::vector<int>& token_positions, int grid_width,
                                   const WindowLayout& layout, const AttentionParams& params) {
    if (static_cast<int>(token_positions.size()) != tokens.rows())
        throw ShapeError("windowed_attention: position count != token count");
    if (layout.kind == WindowKind::Global) return attention(tokens, params);
    if (layout.window_h <= 0 || layout.window_w <= 0)
        throw ShapeError("windowed_attention: bad window dims");

    const int wins_x = grid_width / layout.window_w;
    std::map<int, std::vector<int>> rows_by_window;
    for (int r = 0; r < tokens.rows(); ++r) {
        const int h = token_positions[r] / grid_width;
        const int w = token_positions[r] % grid_width;
        const int window_id = (h / layout.window_h) * wins_x + (w / layout.window_w);
        rows_by_window[window_id].push_back(r);
    }
    Eigen::MatrixXd out(tokens.rows(), tokens.cols());
    for (const auto& [wid, rows] : rows_by_window) {
        Eigen::MatrixXd sub(rows.size(), tokens.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) sub.row(i) = tokens.row(rows[i]);
        const Eigen::MatrixXd res = attention(sub, params);
        for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) = res.row(i);
    }
    return out;
}

FeatureGrid merge_compute_unmerge_block(const FeatureGrid& grid, const MergePlan& plan,
                                        const WindowLayout& layout,
                                        const AttentionParams& params) {
    if (layout.kind == WindowKind::Local &&
        (grid.height % layout.window_h || grid.width % layout.window_w))
        throw DivisibilityError("merge_compute_unmerge_block: window must tile the grid");
    const MergedTokens merged = apply_merge(grid, plan);
    Eigen::MatrixXd tokens(merged.rows(), merged.channels);
    for (int r = 0; r < merged.rows(); ++r)
        for (int c = 0; c < merged.channels; ++c) tokens(r, c) = merged.row(r)[c];

    const Eigen::MatrixXd updated =
        windowed_attention(tokens, merged.kept_index, grid.width, layout, params);

    MergedTokens result = merged;
    for (int r = 0; r < merged.rows(); ++r)
        for (int c = 0; c < merged.channels; ++c) result.row(r)[c] = updated(r, c);
    return apply_unmerge(result, plan);
}

}  // namespace structmerge
