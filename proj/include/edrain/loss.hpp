#pragma once

// Training loss: L1 minus a weighted SSIM term,
//
//   loss = mean|pred - target| - lambda * ssim(pred, target)
//
// SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated on valid window
// positions only (no padding), per channel, then averaged. The backward pass
// is analytic: writing S(p) = A1*A2 / (B1*B2) per window p,
//
//   dS/dx_i = 2*w_{i-p} * (C(p) + D(p)*y_i + E(p)*x_i)
//
// with D = A1/(B1*B2), E = -S/B2 and C collecting the remaining terms, so the
// image gradient is a scatter of the C/D/E maps back through the window.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "edrain/tensor.hpp"

namespace edrain {

template <typename T>
struct SsimConfig {
    int window = 11;
    T sigma = T(1.5);
    T k1 = T(0.01);
    T k2 = T(0.03);
    T dynamic_range = T(1); // images live in [0, 1]
};

template <typename T>
struct LossConfig {
    T lambda = T(0.2);
    bool use_ssim = true;
    SsimConfig<T> ssim;
};

template <typename T>
struct LossResult {
    T value;
    Tensor<T> grad;
};

template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("l1_loss: shape mismatch " + pred.shape_str() + " vs " +
                                    target.shape_str());
    if (pred.size() == 0) throw std::invalid_argument("l1_loss: empty tensors");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += std::abs(static_cast<double>(pred[i]) - static_cast<double>(target[i]));
    return static_cast<T>(acc / static_cast<double>(pred.size()));
}

template <typename T>
Tensor<T> l1_loss_backward(const Tensor<T>& pred, const Tensor<T>& target) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("l1_loss_backward: shape mismatch " + pred.shape_str() +
                                    " vs " + target.shape_str());
    Tensor<T> g(pred.shape());
    const T inv = T(1) / static_cast<T>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - target[i];
        g[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
    }
    return g;
}

namespace detail {

template <typename T>
std::vector<T> gaussian_window_1d(const SsimConfig<T>& cfg) {
    if (cfg.window < 1 || cfg.window % 2 == 0)
        throw std::invalid_argument("ssim: window must be odd and >= 1, got " +
                                    std::to_string(cfg.window));
    std::vector<T> g(static_cast<std::size_t>(cfg.window));
    const double c = (cfg.window - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < cfg.window; ++i) {
        const double d = i - c;
        const double v = std::exp(-d * d / (2.0 * static_cast<double>(cfg.sigma) * cfg.sigma));
        g[static_cast<std::size_t>(i)] = static_cast<T>(v);
        sum += v;
    }
    for (auto& v : g) v = static_cast<T>(static_cast<double>(v) / sum);
    return g;
}

// Valid-position correlation of a plane with the separable window:
// out (hv x wv) from in (h x w), hv = h-win+1.
template <typename T>
void sep_correlate_valid(const T* in, int h, int w, const std::vector<T>& g, T* tmp, T* out) {
    const int win = static_cast<int>(g.size());
    const int wv = w - win + 1, hv = h - win + 1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wv; ++x) {
            T acc = T(0);
            for (int d = 0; d < win; ++d) acc += g[static_cast<std::size_t>(d)] * in[y * w + x + d];
            tmp[y * wv + x] = acc;
        }
    for (int y = 0; y < hv; ++y)
        for (int x = 0; x < wv; ++x) {
            T acc = T(0);
            for (int d = 0; d < win; ++d)
                acc += g[static_cast<std::size_t>(d)] * tmp[(y + d) * wv + x];
            out[y * wv + x] = acc;
        }
}

// Adjoint of the above: scatter a valid-grid map back onto the full plane.
template <typename T>
void sep_scatter_valid(const T* in, int h, int w, const std::vector<T>& g, T* tmp, T* out) {
    const int win = static_cast<int>(g.size());
    const int wv = w - win + 1, hv = h - win + 1;
    for (int i = 0; i < hv * w; ++i) tmp[i] = T(0);
    for (int y = 0; y < hv; ++y)
        for (int x = 0; x < wv; ++x) {
            const T v = in[y * wv + x];
            for (int d = 0; d < win; ++d) tmp[y * w + x + d] += g[static_cast<std::size_t>(d)] * v;
        }
    for (int i = 0; i < h * w; ++i) out[i] = T(0);
    for (int y = 0; y < hv; ++y)
        for (int x = 0; x < w; ++x) {
            const T v = tmp[y * w + x];
            for (int d = 0; d < win; ++d) out[(y + d) * w + x] += g[static_cast<std::size_t>(d)] * v;
        }
}

// SSIM of one (n, c) plane; optionally accumulates d(mean S)/d(pred) scaled
// by grad_scale into grad.
template <typename T>
double ssim_plane(const T* x, const T* y, int h, int w, const std::vector<T>& g,
                  T c1, T c2, T* grad, double grad_scale, std::vector<T>& scratch) {
    const int win = static_cast<int>(g.size());
    const int hv = h - win + 1, wv = w - win + 1;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t vplane = static_cast<std::size_t>(hv) * wv;
    const std::size_t tmp_size = std::max(static_cast<std::size_t>(h) * wv,
                                          static_cast<std::size_t>(hv) * w);

    scratch.assign(plane * 3 + vplane * 8 + tmp_size, T(0));
    T* xy = scratch.data();
    T* xx = xy + plane;
    T* yy = xx + plane;
    T* tmp = yy + plane; // shared by the correlate (h x wv) and scatter (hv x w) passes
    T* mx = tmp + tmp_size;
    T* my = mx + vplane;
    T* mxy = my + vplane;
    T* mxx = mxy + vplane;
    T* myy = mxx + vplane;
    T* cm = myy + vplane;
    T* dm = cm + vplane;
    T* em = dm + vplane;

    for (std::size_t i = 0; i < plane; ++i) {
        xy[i] = x[i] * y[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
    }
    sep_correlate_valid(x, h, w, g, tmp, mx);
    sep_correlate_valid(y, h, w, g, tmp, my);
    sep_correlate_valid(xy, h, w, g, tmp, mxy);
    sep_correlate_valid(xx, h, w, g, tmp, mxx);
    sep_correlate_valid(yy, h, w, g, tmp, myy);

    double total = 0.0;
    for (std::size_t i = 0; i < vplane; ++i) {
        const T sxy = mxy[i] - mx[i] * my[i];
        const T sxx = mxx[i] - mx[i] * mx[i];
        const T syy = myy[i] - my[i] * my[i];
        const T a1 = T(2) * mx[i] * my[i] + c1;
        const T a2 = T(2) * sxy + c2;
        const T b1 = mx[i] * mx[i] + my[i] * my[i] + c1;
        const T b2 = sxx + syy + c2;
        const T s = (a1 * a2) / (b1 * b2);
        total += static_cast<double>(s);
        if (grad) {
            const T b1b2 = b1 * b2;
            dm[i] = a1 / b1b2;
            em[i] = -s / b2;
            cm[i] = my[i] * a2 / b1b2 - my[i] * a1 / b1b2 - s * mx[i] / b1 + s * mx[i] / b2;
        }
    }
    if (grad) {
        // grad += scale * 2 * (scatter(C) + y .* scatter(D) + x .* scatter(E))
        T* sc = xy; // reuse
        sep_scatter_valid(cm, h, w, g, tmp, sc);
        for (std::size_t i = 0; i < plane; ++i)
            grad[i] += static_cast<T>(grad_scale * 2.0) * sc[i];
        sep_scatter_valid(dm, h, w, g, tmp, sc);
        for (std::size_t i = 0; i < plane; ++i)
            grad[i] += static_cast<T>(grad_scale * 2.0) * y[i] * sc[i];
        sep_scatter_valid(em, h, w, g, tmp, sc);
        for (std::size_t i = 0; i < plane; ++i)
            grad[i] += static_cast<T>(grad_scale * 2.0) * x[i] * sc[i];
    }
    return total / static_cast<double>(vplane);
}

template <typename T>
void check_ssim_args(const Tensor<T>& pred, const Tensor<T>& target, const SsimConfig<T>& cfg) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("ssim: shape mismatch " + pred.shape_str() + " vs " +
                                    target.shape_str());
    if (pred.rank() != 4)
        throw std::invalid_argument("ssim: input must be NCHW, got rank " +
                                    std::to_string(pred.rank()));
    if (pred.dim(2) < cfg.window || pred.dim(3) < cfg.window)
        throw std::invalid_argument("ssim: image " + pred.shape_str() +
                                    " smaller than the " + std::to_string(cfg.window) +
                                    "-pixel window");
}

} // namespace detail

template <typename T>
T ssim(const Tensor<T>& pred, const Tensor<T>& target, const SsimConfig<T>& cfg = {}) {
    detail::check_ssim_args(pred, target, cfg);
    const auto g = detail::gaussian_window_1d(cfg);
    const T c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const T c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    const int n = pred.dim(0), c = pred.dim(1), h = pred.dim(2), w = pred.dim(3);
    std::vector<T> scratch;
    double total = 0.0;
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            total += detail::ssim_plane(&pred.at(ni, ci, 0, 0), &target.at(ni, ci, 0, 0), h, w,
                                        g, c1, c2, static_cast<T*>(nullptr), 0.0, scratch);
    return static_cast<T>(total / (n * c));
}

// d(ssim)/d(pred)
template <typename T>
Tensor<T> ssim_backward(const Tensor<T>& pred, const Tensor<T>& target,
                        const SsimConfig<T>& cfg = {}) {
    detail::check_ssim_args(pred, target, cfg);
    const auto g = detail::gaussian_window_1d(cfg);
    const T c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const T c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    const int n = pred.dim(0), c = pred.dim(1), h = pred.dim(2), w = pred.dim(3);
    const int hv = h - cfg.window + 1, wv = w - cfg.window + 1;
    const double scale = 1.0 / (static_cast<double>(n) * c * hv * wv);
    Tensor<T> grad(pred.shape());
    std::vector<T> scratch;
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            detail::ssim_plane(&pred.at(ni, ci, 0, 0), &target.at(ni, ci, 0, 0), h, w, g, c1,
                               c2, &grad.at(ni, ci, 0, 0), scale, scratch);
    return grad;
}

template <typename T>
T combined_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig<T>& cfg) {
    const T l1 = l1_loss(pred, target);
    if (!cfg.use_ssim) return l1;
    return l1 - cfg.lambda * ssim(pred, target, cfg.ssim);
}

template <typename T>
LossResult<T> combined_loss_with_grad(const Tensor<T>& pred, const Tensor<T>& target,
                                      const LossConfig<T>& cfg) {
    LossResult<T> r{l1_loss(pred, target), l1_loss_backward(pred, target)};
    if (!cfg.use_ssim) return r;
    r.value -= cfg.lambda * ssim(pred, target, cfg.ssim);
    const Tensor<T> gs = ssim_backward(pred, target, cfg.ssim);
    for (std::size_t i = 0; i < r.grad.size(); ++i) r.grad[i] -= cfg.lambda * gs[i];
    return r;
}

// 10*log10(peak^2 / MSE), capped at 100 dB (the cap is the MSE = 0 sentinel).
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (!a.same_shape(b))
        throw std::invalid_argument("psnr: shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    if (a.size() == 0) throw std::invalid_argument("psnr: empty tensors");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return 100.0;
    return std::min(10.0 * std::log10(peak * peak / mse), 100.0);
}

} // namespace edrain
