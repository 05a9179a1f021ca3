#pragma once

// Pixel-wise kernel filtering. Each output pixel applies its own predicted
// K x K kernel to the input:
//
//   out(p) = sum_t k_p(t) * in(p + l*t),   t in [-(K-1)/2, (K-1)/2]^2
//
// where l is the dilation factor (l = 1 is the plain filter). Kernels are
// stored as a KernelField of shape (N, K*K, H, W) and are shared across the
// image channels. Reads past the border contribute zero.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "edrain/layers.hpp"
#include "edrain/tensor.hpp"

namespace edrain {

// (N, K*K, H, W): channel (ty+r)*K + (tx+r) holds the kernel tap at offset
// (ty, tx), r = (K-1)/2.
template <typename T>
using KernelField = Tensor<T>;

using DilationFactors = std::vector<int>;

template <typename T>
struct FusionParams {
    Tensor<T> weights; // (C, L*C, 3, 3)
    Tensor<T> bias;    // (C)
};

template <typename T>
struct FilterGrads {
    Tensor<T> image;
    Tensor<T> kernels;
};

template <typename T>
struct FuseGrads {
    std::vector<Tensor<T>> scales;
    Tensor<T> weights;
    Tensor<T> bias;
};

namespace detail {

template <typename T>
int check_filter_args(const Tensor<T>& image, const KernelField<T>& kernels, int dilation) {
    if (image.rank() != 4)
        throw std::invalid_argument("pixel_wise_filter: image must be NCHW, got rank " +
                                    std::to_string(image.rank()));
    if (kernels.rank() != 4)
        throw std::invalid_argument("pixel_wise_filter: kernel field must be rank 4, got rank " +
                                    std::to_string(kernels.rank()));
    const int kk = kernels.dim(1);
    const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(kk))));
    if (k * k != kk || k % 2 == 0)
        throw std::invalid_argument("pixel_wise_filter: kernel channels " + std::to_string(kk) +
                                    " is not an odd square");
    if (kernels.dim(0) != image.dim(0) || kernels.dim(2) != image.dim(2) ||
        kernels.dim(3) != image.dim(3))
        throw std::invalid_argument("pixel_wise_filter: kernel field " + kernels.shape_str() +
                                    " does not match image " + image.shape_str());
    if (dilation < 1)
        throw std::invalid_argument("pixel_wise_filter: dilation must be >= 1, got " +
                                    std::to_string(dilation));
    return k;
}

} // namespace detail

template <typename T>
Tensor<T> pixel_wise_filter(const Tensor<T>& image, const KernelField<T>& kernels) {
    const int k = detail::check_filter_args(image, kernels, 1);
    const int r = (k - 1) / 2;
    const int n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
    Tensor<T> out(image.shape());
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    T acc = T(0);
                    for (int ty = -r; ty <= r; ++ty) {
                        const int sy = y + ty;
                        if (sy < 0 || sy >= h) continue;
                        for (int tx = -r; tx <= r; ++tx) {
                            const int sx = x + tx;
                            if (sx < 0 || sx >= w) continue;
                            acc += kernels.at(ni, (ty + r) * k + (tx + r), y, x) *
                                   image.at(ni, ci, sy, sx);
                        }
                    }
                    out.at(ni, ci, y, x) = acc;
                }
    return out;
}

// Same kernel field applied at stretched offsets q = p + l*t.
template <typename T>
Tensor<T> pixel_wise_dilated_filter(const Tensor<T>& image, const KernelField<T>& kernels,
                                    int dilation) {
    const int k = detail::check_filter_args(image, kernels, dilation);
    const int r = (k - 1) / 2;
    const int n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
    Tensor<T> out(image.shape());
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    T acc = T(0);
                    for (int ty = -r; ty <= r; ++ty) {
                        const int sy = y + dilation * ty;
                        if (sy < 0 || sy >= h) continue;
                        for (int tx = -r; tx <= r; ++tx) {
                            const int sx = x + dilation * tx;
                            if (sx < 0 || sx >= w) continue;
                            acc += kernels.at(ni, (ty + r) * k + (tx + r), y, x) *
                                   image.at(ni, ci, sy, sx);
                        }
                    }
                    out.at(ni, ci, y, x) = acc;
                }
    return out;
}

template <typename T>
FilterGrads<T> pixel_wise_dilated_filter_backward(const Tensor<T>& image,
                                                  const KernelField<T>& kernels, int dilation,
                                                  const Tensor<T>& grad_output) {
    const int k = detail::check_filter_args(image, kernels, dilation);
    if (!grad_output.same_shape(image))
        throw std::invalid_argument("pixel_wise_dilated_filter_backward: grad shape " +
                                    grad_output.shape_str() + " does not match image " +
                                    image.shape_str());
    const int r = (k - 1) / 2;
    const int n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
    FilterGrads<T> g{Tensor<T>(image.shape()), Tensor<T>(kernels.shape())};
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const T go = grad_output.at(ni, ci, y, x);
                    for (int ty = -r; ty <= r; ++ty) {
                        const int sy = y + dilation * ty;
                        if (sy < 0 || sy >= h) continue;
                        for (int tx = -r; tx <= r; ++tx) {
                            const int sx = x + dilation * tx;
                            if (sx < 0 || sx >= w) continue;
                            const int tap = (ty + r) * k + (tx + r);
                            g.kernels.at(ni, tap, y, x) += go * image.at(ni, ci, sy, sx);
                            g.image.at(ni, ci, sy, sx) += go * kernels.at(ni, tap, y, x);
                        }
                    }
                }
    return g;
}

namespace detail {

template <typename T>
ConvLayerParams<T> fusion_conv(const FusionParams<T>& p) {
    return ConvLayerParams<T>{p.weights, p.bias, 1, 1};
}

template <typename T>
void check_fusion_args(const std::vector<Tensor<T>>& scales, const FusionParams<T>& p) {
    if (scales.empty())
        throw std::invalid_argument("fuse_scales: no scale inputs");
    const int c = scales.front().dim(1);
    for (const auto& s : scales)
        if (!s.same_shape(scales.front()))
            throw std::invalid_argument("fuse_scales: scale shape " + s.shape_str() +
                                        " does not match " + scales.front().shape_str());
    const int l = static_cast<int>(scales.size());
    if (p.weights.rank() != 4 || p.weights.dim(0) != c || p.weights.dim(1) != l * c ||
        p.weights.dim(2) != 3 || p.weights.dim(3) != 3)
        throw std::invalid_argument("fuse_scales: weights " + p.weights.shape_str() +
                                    " do not match " + std::to_string(l) + " scales of " +
                                    std::to_string(c) + " channels");
}

} // namespace detail

// 3x3 conv over the channel-concatenated scale outputs, back to C channels.
template <typename T>
Tensor<T> fuse_scales(const std::vector<Tensor<T>>& scales, const FusionParams<T>& p) {
    detail::check_fusion_args(scales, p);
    std::vector<const Tensor<T>*> parts;
    parts.reserve(scales.size());
    for (const auto& s : scales) parts.push_back(&s);
    return conv2d_forward(concat_channels(parts), detail::fusion_conv(p));
}

template <typename T>
FuseGrads<T> fuse_scales_backward(const std::vector<Tensor<T>>& scales, const FusionParams<T>& p,
                                  const Tensor<T>& grad_output) {
    detail::check_fusion_args(scales, p);
    std::vector<const Tensor<T>*> parts;
    std::vector<int> counts;
    for (const auto& s : scales) {
        parts.push_back(&s);
        counts.push_back(s.dim(1));
    }
    ConvGrads<T> cg = conv2d_backward(concat_channels(parts), detail::fusion_conv(p), grad_output);
    FuseGrads<T> g;
    g.scales = concat_channels_backward(cg.input, counts);
    g.weights = std::move(cg.weights);
    g.bias = std::move(cg.bias);
    return g;
}

} // namespace edrain
