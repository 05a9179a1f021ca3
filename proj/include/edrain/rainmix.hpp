#pragma once

// Rain streak augmentation. One draw mixes a base streak map with up to
// three geometrically transformed copies of itself:
//
//   sample R_org from the streak set
//   (w1..w4) ~ Dirichlet(1,1,1,1)
//   for i = 1..4: sample ops o1,o2,o3, pick a chain from {o1, o2*o1, o3*o2*o1},
//                 t_i = warp(R_org, chain)
//   w ~ Beta(1,1)
//   R = w * R_org + (1-w) * sum_i w_i * t_i
//
// The blend is evaluated as R = R_org + (1-w) * sum_i w_i * (t_i - R_org),
// which is the same expression (the Dirichlet weights sum to 1) but returns
// R_org bit-exactly when every chain is the identity or when w = 1.
//
// Geometric ops: rotation (deg), shear x/y, translation x/y (fraction of the
// dimension), zoom x/y, all about the image center. A chain is composed into
// a single affine and applied with one bilinear warp, zero-filled outside.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "edrain/rng.hpp"
#include "edrain/tensor.hpp"

namespace edrain {

template <typename T>
using RainMap = Tensor<T>; // (H, W), values in [0, 1]

template <typename T>
struct RainStreakSet {
    std::vector<RainMap<T>> maps;
    std::vector<std::string> names;
};

enum class GeomKind : int {
    rotate = 0,
    shear_x,
    shear_y,
    translate_x,
    translate_y,
    zoom_x,
    zoom_y,
};
inline constexpr int kGeomKinds = 7;

template <typename T>
struct GeometricOp {
    GeomKind kind;
    T magnitude; // degrees / shear factor / dimension fraction / zoom factor
};

template <typename T>
struct RainMixConfig {
    T rot_deg = T(30);
    T shear = T(0.2);
    T trans_frac = T(0.1);
    T zoom_min = T(0.8), zoom_max = T(1.25);
    std::array<double, 4> dirichlet_alpha{1, 1, 1, 1};
    double beta_a = 1, beta_b = 1;
};

// Record of one rain_mix draw, kept for previews and tests.
template <typename T>
struct MixDraw {
    std::size_t streak_index = 0;
    std::array<double, 4> weights{};
    double blend = 0;
    std::array<std::vector<GeometricOp<T>>, 4> chains; // truncated to sampled length
};

namespace detail {

// Row-major 2x3 affine: x' = m[0]x + m[1]y + m[2], y' = m[3]x + m[4]y + m[5].
struct Affine {
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};

    static Affine compose(const Affine& a, const Affine& b) { // a after b
        Affine r;
        r.m = {a.m[0] * b.m[0] + a.m[1] * b.m[3],
               a.m[0] * b.m[1] + a.m[1] * b.m[4],
               a.m[0] * b.m[2] + a.m[1] * b.m[5] + a.m[2],
               a.m[3] * b.m[0] + a.m[4] * b.m[3],
               a.m[3] * b.m[1] + a.m[4] * b.m[4],
               a.m[3] * b.m[2] + a.m[4] * b.m[5] + a.m[5]};
        return r;
    }

    double det() const { return m[0] * m[4] - m[1] * m[3]; }

    Affine inverse() const {
        const double d = det();
        Affine r;
        r.m = {m[4] / d, -m[1] / d, (m[1] * m[5] - m[4] * m[2]) / d,
               -m[3] / d, m[0] / d, (m[3] * m[2] - m[0] * m[5]) / d};
        return r;
    }
};

template <typename T>
Affine op_matrix(const GeometricOp<T>& op, int h, int w) {
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double g = static_cast<double>(op.magnitude);
    Affine a; // linear part about the center
    switch (op.kind) {
        case GeomKind::rotate: {
            const double rad = g * 3.141592653589793238462643383279502884 / 180.0;
            const double c = std::cos(rad), s = std::sin(rad);
            a.m = {c, -s, 0, s, c, 0};
            break;
        }
        case GeomKind::shear_x: a.m = {1, g, 0, 0, 1, 0}; break;
        case GeomKind::shear_y: a.m = {1, 0, 0, g, 1, 0}; break;
        case GeomKind::translate_x: a.m = {1, 0, g * w, 0, 1, 0}; break;
        case GeomKind::translate_y: a.m = {1, 0, 0, 0, 1, g * h}; break;
        case GeomKind::zoom_x: a.m = {g, 0, 0, 0, 1, 0}; break;
        case GeomKind::zoom_y: a.m = {1, 0, 0, 0, g, 0}; break;
        default: throw std::invalid_argument("op_matrix: unknown op kind");
    }
    // shift the center to the origin, transform, shift back
    a.m[2] += cx - (a.m[0] * cx + a.m[1] * cy);
    a.m[5] += cy - (a.m[3] * cx + a.m[4] * cy);
    return a;
}

template <typename T>
Affine chain_matrix(std::span<const GeometricOp<T>> chain, int h, int w) {
    Affine m;
    for (const auto& op : chain) m = Affine::compose(op_matrix(op, h, w), m);
    return m;
}

} // namespace detail

// Applies the chain (first element first) as a single composed affine warp
// about the image center; bilinear sampling, zero fill outside the source.
template <typename T>
RainMap<T> apply_geometric_op(const RainMap<T>& map, std::span<const GeometricOp<T>> chain) {
    if (map.rank() != 2)
        throw std::invalid_argument("apply_geometric_op: map must be rank 2, got rank " +
                                    std::to_string(map.rank()));
    if (chain.empty()) return map;
    const int h = map.dim(0), w = map.dim(1);
    const detail::Affine fwd = detail::chain_matrix(chain, h, w);
    if (std::abs(fwd.det()) < 1e-6)
        throw std::invalid_argument("apply_geometric_op: chain affine is degenerate (|det| = " +
                                    std::to_string(std::abs(fwd.det())) + ")");
    const detail::Affine inv = fwd.inverse();
    RainMap<T> out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double sx = inv.m[0] * x + inv.m[1] * y + inv.m[2];
            const double sy = inv.m[3] * x + inv.m[4] * y + inv.m[5];
            const double fx0 = std::floor(sx), fy0 = std::floor(sy);
            const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
            const double ax = sx - fx0, ay = sy - fy0;
            auto tap = [&](int yy, int xx) -> double {
                return (yy < 0 || yy >= h || xx < 0 || xx >= w)
                           ? 0.0
                           : static_cast<double>(map.at(yy, xx));
            };
            const double v = (1 - ay) * ((1 - ax) * tap(y0, x0) + ax * tap(y0, x0 + 1)) +
                             ay * ((1 - ax) * tap(y0 + 1, x0) + ax * tap(y0 + 1, x0 + 1));
            out.at(y, x) = static_cast<T>(std::min(std::max(v, 0.0), 1.0));
        }
    return out;
}

template <typename T>
RainMap<T> apply_geometric_op(const RainMap<T>& map, const std::vector<GeometricOp<T>>& chain) {
    return apply_geometric_op(map, std::span<const GeometricOp<T>>(chain));
}

// Draw source used by rain_mix; tests substitute their own to pin single
// draws (e.g. force the blend weight) without touching the algorithm.
template <typename T>
struct RngMixSampler {
    Rng& rng;
    std::size_t pick_index(std::size_t n) { return rng.uniform_index(n); }
    double uniform(double lo, double hi) { return rng.uniform(lo, hi); }
    void dirichlet(std::span<const double> alpha, std::span<double> out) {
        rng.dirichlet(alpha, out);
    }
    double beta(double a, double b) { return rng.beta(a, b); }
};

namespace detail {

template <typename T, typename Sampler>
T sample_magnitude(GeomKind kind, Sampler& s, const RainMixConfig<T>& cfg) {
    double mag = 0;
    switch (kind) {
        case GeomKind::rotate: mag = s.uniform(-cfg.rot_deg, cfg.rot_deg); break;
        case GeomKind::shear_x:
        case GeomKind::shear_y: mag = s.uniform(-cfg.shear, cfg.shear); break;
        case GeomKind::translate_x:
        case GeomKind::translate_y: mag = s.uniform(-cfg.trans_frac, cfg.trans_frac); break;
        case GeomKind::zoom_x:
        case GeomKind::zoom_y: mag = s.uniform(cfg.zoom_min, cfg.zoom_max); break;
        default: break;
    }
    return static_cast<T>(mag);
}

template <typename T, typename Sampler>
GeometricOp<T> sample_op(Sampler& s, const RainMixConfig<T>& cfg) {
    const auto kind = static_cast<GeomKind>(s.pick_index(kGeomKinds));
    return GeometricOp<T>{kind, sample_magnitude(kind, s, cfg)};
}

} // namespace detail

template <typename T, typename Sampler>
RainMap<T> rain_mix(const RainStreakSet<T>& streaks, Sampler& sampler,
                    const RainMixConfig<T>& cfg = {}, MixDraw<T>* draw = nullptr) {
    if (streaks.maps.empty())
        throw std::invalid_argument("rain_mix: streak set is empty");
    MixDraw<T> local;
    MixDraw<T>& d = draw ? *draw : local;
    d = MixDraw<T>{};

    d.streak_index = sampler.pick_index(streaks.maps.size());
    const RainMap<T>& r_org = streaks.maps[d.streak_index];
    if (r_org.rank() != 2)
        throw std::invalid_argument("rain_mix: streak maps must be rank 2, got rank " +
                                    std::to_string(r_org.rank()));

    sampler.dirichlet(cfg.dirichlet_alpha, d.weights);

    Tensor<double> dev(r_org.shape());
    for (int i = 0; i < 4; ++i) {
        std::array<GeometricOp<T>, 3> ops;
        for (auto& op : ops) op = detail::sample_op(sampler, cfg);
        const std::size_t len = sampler.pick_index(3) + 1;
        // a degenerate chain keeps its op kinds and redraws the magnitudes;
        // unreachable with the default ranges (|det| >= 0.8^3)
        int tries = 0;
        while (std::abs(detail::chain_matrix(std::span<const GeometricOp<T>>(ops.data(), len),
                                             r_org.dim(0), r_org.dim(1))
                            .det()) < 1e-6) {
            if (++tries > 100)
                throw std::runtime_error("rain_mix: could not sample a non-degenerate chain");
            for (auto& op : ops)
                op.magnitude = detail::sample_magnitude(op.kind, sampler, cfg);
        }
        d.chains[static_cast<std::size_t>(i)].assign(ops.begin(), ops.begin() + len);
        const RainMap<T> t = apply_geometric_op(
            r_org, std::span<const GeometricOp<T>>(ops.data(), len));
        const double wi = d.weights[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < dev.size(); ++j)
            dev[j] += wi * (static_cast<double>(t[j]) - static_cast<double>(r_org[j]));
    }

    d.blend = sampler.beta(cfg.beta_a, cfg.beta_b);
    RainMap<T> out(r_org.shape());
    const double rest = 1.0 - d.blend;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double v = static_cast<double>(r_org[j]) + rest * dev[j];
        out[j] = static_cast<T>(std::min(std::max(v, 0.0), 1.0));
    }
    return out;
}

template <typename T>
RainMap<T> rain_mix(const RainStreakSet<T>& streaks, Rng& rng, const RainMixConfig<T>& cfg = {},
                    MixDraw<T>* draw = nullptr) {
    RngMixSampler<T> s{rng};
    return rain_mix(streaks, s, cfg, draw);
}

// Bilinear resize with half-pixel centers and edge clamping; same size is an
// exact copy.
template <typename T>
RainMap<T> resize_bilinear(const RainMap<T>& map, int h_out, int w_out) {
    if (map.rank() != 2)
        throw std::invalid_argument("resize_bilinear: map must be rank 2, got rank " +
                                    std::to_string(map.rank()));
    if (h_out < 1 || w_out < 1)
        throw std::invalid_argument("resize_bilinear: target size must be positive");
    const int h = map.dim(0), w = map.dim(1);
    if (h == h_out && w == w_out) return map;
    RainMap<T> out({h_out, w_out});
    const double sy = static_cast<double>(h) / h_out, sx = static_cast<double>(w) / w_out;
    for (int y = 0; y < h_out; ++y)
        for (int x = 0; x < w_out; ++x) {
            const double src_y = std::min(std::max((y + 0.5) * sy - 0.5, 0.0),
                                          static_cast<double>(h - 1));
            const double src_x = std::min(std::max((x + 0.5) * sx - 0.5, 0.0),
                                          static_cast<double>(w - 1));
            const int y0 = static_cast<int>(src_y), x0 = static_cast<int>(src_x);
            const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
            const double ay = src_y - y0, ax = src_x - x0;
            const double v =
                (1 - ay) * ((1 - ax) * map.at(y0, x0) + ax * map.at(y0, x1)) +
                ay * ((1 - ax) * map.at(y1, x0) + ax * map.at(y1, x1));
            out.at(y, x) = static_cast<T>(v);
        }
    return out;
}

// rainy = clamp(clean + rain), with the rain map resized to the image size.
template <typename T>
Tensor<T> composite_rainy(const Tensor<T>& clean, const RainMap<T>& rain) {
    if (clean.rank() != 3)
        throw std::invalid_argument("composite_rainy: image must be CHW, got rank " +
                                    std::to_string(clean.rank()));
    const int c = clean.dim(0), h = clean.dim(1), w = clean.dim(2);
    const RainMap<T> r = resize_bilinear(rain, h, w);
    Tensor<T> out(clean.shape());
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(ci, y, x) = std::min(std::max(clean.at(ci, y, x) + r.at(y, x), T(0)), T(1));
    return out;
}

template <typename T>
struct StreakGenConfig {
    T density_min = T(0.003), density_max = T(0.012);
    T intensity_min = T(0.5), intensity_max = T(1);
    T angle_min_deg = T(60), angle_max_deg = T(120);
    int length_min = 8, length_max = 24;
    T mean_min = T(0.02), mean_max = T(0.08);
};

// Synthetic streak maps: salt noise stretched by an oriented motion-blur
// kernel, then rescaled to a target mean.
template <typename T>
RainStreakSet<T> generate_synthetic_streaks(int count, int size, Rng& rng,
                                            const StreakGenConfig<T>& cfg = {}) {
    if (count < 1)
        throw std::invalid_argument("generate_synthetic_streaks: count must be >= 1, got " +
                                    std::to_string(count));
    if (size < 8)
        throw std::invalid_argument("generate_synthetic_streaks: size must be >= 8, got " +
                                    std::to_string(size));
    RainStreakSet<T> set;
    for (int m = 0; m < count; ++m) {
        Tensor<double> plane({size, size});
        const double density = rng.uniform(cfg.density_min, cfg.density_max);
        const auto n_drops = static_cast<std::size_t>(
            std::max(1.0, std::round(density * size * size)));
        for (std::size_t i = 0; i < n_drops; ++i) {
            const auto y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(size)));
            const auto x = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(size)));
            const double v = rng.uniform(cfg.intensity_min, cfg.intensity_max);
            plane.at(y, x) = std::max(plane.at(y, x), v);
        }

        // motion-blur kernel: unit-mass line segment at the sampled angle
        const double angle = rng.uniform(cfg.angle_min_deg, cfg.angle_max_deg) *
                             3.141592653589793238462643383279502884 / 180.0;
        const int length = cfg.length_min +
                           static_cast<int>(rng.uniform_index(static_cast<std::size_t>(
                               cfg.length_max - cfg.length_min + 1)));
        const int kr = (length + 1) / 2 + 1;
        const int kw = 2 * kr + 1;
        Tensor<double> kernel({kw, kw});
        const int nsteps = 4 * length;
        const double half = (length - 1) / 2.0;
        for (int s = 0; s < nsteps; ++s) {
            const double t = -half + (length - 1.0) * s / (nsteps - 1);
            const double px = kr + t * std::cos(angle);
            const double py = kr + t * std::sin(angle);
            const int x0 = static_cast<int>(std::floor(px));
            const int y0 = static_cast<int>(std::floor(py));
            const double ax = px - x0, ay = py - y0;
            kernel.at(y0, x0) += (1 - ay) * (1 - ax) / nsteps;
            kernel.at(y0, x0 + 1) += (1 - ay) * ax / nsteps;
            kernel.at(y0 + 1, x0) += ay * (1 - ax) / nsteps;
            kernel.at(y0 + 1, x0 + 1) += ay * ax / nsteps;
        }
        std::vector<std::array<double, 3>> taps; // (dy, dx, weight)
        for (int y = 0; y < kw; ++y)
            for (int x = 0; x < kw; ++x)
                if (kernel.at(y, x) != 0.0)
                    taps.push_back({static_cast<double>(y - kr), static_cast<double>(x - kr),
                                    kernel.at(y, x)});

        Tensor<double> blurred({size, size});
        double mean = 0.0;
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                double acc = 0.0;
                for (const auto& t : taps) {
                    const int yy = y + static_cast<int>(t[0]);
                    const int xx = x + static_cast<int>(t[1]);
                    if (yy >= 0 && yy < size && xx >= 0 && xx < size)
                        acc += t[2] * plane.at(yy, xx);
                }
                blurred.at(y, x) = acc;
                mean += acc;
            }
        mean /= static_cast<double>(size) * size;

        const double target = rng.uniform(cfg.mean_min, cfg.mean_max);
        const double scale = target / std::max(mean, 1e-12);
        RainMap<T> out({size, size});
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<T>(std::min(std::max(blurred[i] * scale, 0.0), 1.0));
        set.maps.push_back(std::move(out));
        set.names.push_back("synthetic_" + std::to_string(m));
    }
    return set;
}

} // namespace edrain
