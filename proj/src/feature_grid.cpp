#include "structmerge/feature_grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace structmerge {

void FeatureGrid::validate() const {
    if (height <= 0 || width <= 0 || channels <= 0)
        throw ShapeError("FeatureGrid: dims must be positive");
    if (values.size() != static_cast<std::size_t>(height) * width * channels)
        throw ShapeError("FeatureGrid: value count does not match H*W*C");
    for (double v : values)
        if (!std::isfinite(v)) throw ShapeError("FeatureGrid: non-finite value");
}

namespace {

inline int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

GradientPair central_diff_gradients(const FeatureGrid& grid) {
    grid.validate();
    const int H = grid.height, W = grid.width, C = grid.channels;
    GradientPair out{FeatureGrid(H, W, C), FeatureGrid(H, W, C)};
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            const int wp = clampi(w + 1, 0, W - 1), wm = clampi(w - 1, 0, W - 1);
            const int hp = clampi(h + 1, 0, H - 1), hm = clampi(h - 1, 0, H - 1);
            for (int c = 0; c < C; ++c) {
                out.gx.at(h, w, c) = grid.at(h, wp, c) - grid.at(h, wm, c);
                out.gy.at(h, w, c) = grid.at(hp, w, c) - grid.at(hm, w, c);
            }
        }
    }
    return out;
}

GradientPair sobel_gradients(const FeatureGrid& grid) {
    grid.validate();
    const int H = grid.height, W = grid.width, C = grid.channels;
    // kx[dy+1][dx+1]; ky is the transpose.
    static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    GradientPair out{FeatureGrid(H, W, C), FeatureGrid(H, W, C)};
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int wx = kx[dy + 1][dx + 1];
                    const int wy = kx[dx + 1][dy + 1];
                    if (wx == 0 && wy == 0) continue;
                    const int hh = clampi(h + dy, 0, H - 1);
                    const int ww = clampi(w + dx, 0, W - 1);
                    for (int c = 0; c < C; ++c) {
                        const double f = grid.at(hh, ww, c);
                        out.gx.at(h, w, c) += wx * f;
                        out.gy.at(h, w, c) += wy * f;
                    }
                }
            }
        }
    }
    return out;
}

GradientField gradient_magnitude(const GradientPair& grads) {
    const FeatureGrid& gx = grads.gx;
    const FeatureGrid& gy = grads.gy;
    if (gx.height != gy.height || gx.width != gy.width || gx.channels != gy.channels)
        throw ShapeError("gradient_magnitude: gx/gy shape mismatch");
    GradientField out(gx.height, gx.width);
    for (int h = 0; h < gx.height; ++h) {
        for (int w = 0; w < gx.width; ++w) {
            double s = 0.0;
            for (int c = 0; c < gx.channels; ++c) {
                s += gx.at(h, w, c) * gx.at(h, w, c);
                s += gy.at(h, w, c) * gy.at(h, w, c);
            }
            out.at(h, w) = std::sqrt(s);
        }
    }
    return out;
}

GradientField gradient_energy(const FeatureGrid& grid, GradientOp op) {
    return gradient_magnitude(op == GradientOp::Sobel ? sobel_gradients(grid)
                                                      : central_diff_gradients(grid));
}

GradientField pairwise_energy(const FeatureGrid& grid) {
    grid.validate();
    const int N = grid.tokens(), C = grid.channels;
    std::vector<double> unit(static_cast<std::size_t>(N) * C);
    for (int i = 0; i < N; ++i) {
        double n2 = 0.0;
        for (int c = 0; c < C; ++c) {
            const double v = grid.values[static_cast<std::size_t>(i) * C + c];
            n2 += v * v;
        }
        if (n2 <= 0.0) throw ZeroNormError("pairwise_energy: token " + std::to_string(i) + " has zero norm");
        const double inv = 1.0 / std::sqrt(n2);
        for (int c = 0; c < C; ++c)
            unit[static_cast<std::size_t>(i) * C + c] =
                grid.values[static_cast<std::size_t>(i) * C + c] * inv;
    }
    GradientField out(grid.height, grid.width);
    for (int i = 0; i < N; ++i) {
        double acc = 0.0;
        for (int j = 0; j < N; ++j) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c)
                dot += unit[static_cast<std::size_t>(i) * C + c] * unit[static_cast<std::size_t>(j) * C + c];
            acc += dot;
        }
        out.magnitudes[i] = acc / N;
    }
    return out;
}

std::string feature_grid_to_json(const FeatureGrid& grid) {
    nlohmann::ordered_json j;
    j["H"] = grid.height;
    j["W"] = grid.width;
    j["C"] = grid.channels;
    j["values"] = grid.values;
    return j.dump();
}

FeatureGrid feature_grid_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("feature grid json: ") + e.what());
    }
    FeatureGrid g;
    g.height = j.at("H").get<int>();
    g.width = j.at("W").get<int>();
    g.channels = j.at("C").get<int>();
    g.values = j.at("values").get<std::vector<double>>();
    g.validate();
    return g;
}

std::string gradient_field_to_csv(const GradientField& field) {
    std::ostringstream os;
    os.precision(12);
    for (int h = 0; h < field.height; ++h) {
        for (int w = 0; w < field.width; ++w) {
            if (w) os << ',';
            os << field.at(h, w);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace structmerge
