#pragma once

// Differentiable tensor ops for the kernel prediction network. All ops are
// pure functions of their inputs; forward results needed by a backward pass
// are passed back in explicitly.

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "edrain/gemm.hpp"
#include "edrain/tensor.hpp"

namespace edrain {

template <typename T>
struct ConvLayerParams {
    Tensor<T> weights; // (C_out, C_in, k_h, k_w)
    Tensor<T> bias;    // (C_out)
    int stride = 1;
    int padding = 0;
};

template <typename T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

namespace detail {

template <typename T>
void check_conv_args(const Tensor<T>& input, const ConvLayerParams<T>& p) {
    if (input.rank() != 4)
        throw std::invalid_argument("conv2d: input must be NCHW, got rank " +
                                    std::to_string(input.rank()));
    if (p.weights.rank() != 4)
        throw std::invalid_argument("conv2d: weights must be rank 4, got rank " +
                                    std::to_string(p.weights.rank()));
    if (p.bias.rank() != 1 || p.bias.dim(0) != p.weights.dim(0))
        throw std::invalid_argument("conv2d: bias length " + p.bias.shape_str() +
                                    " does not match C_out=" + std::to_string(p.weights.dim(0)));
    if (p.weights.dim(1) != input.dim(1))
        throw std::invalid_argument("conv2d: weight C_in=" + std::to_string(p.weights.dim(1)) +
                                    " does not match input C=" + std::to_string(input.dim(1)));
    if (p.weights.dim(2) % 2 == 0 || p.weights.dim(3) % 2 == 0)
        throw std::invalid_argument("conv2d: kernel dims must be odd, got " +
                                    std::to_string(p.weights.dim(2)) + "x" +
                                    std::to_string(p.weights.dim(3)));
    if (p.stride < 1)
        throw std::invalid_argument("conv2d: stride must be >= 1, got " +
                                    std::to_string(p.stride));
    if (p.padding < 0)
        throw std::invalid_argument("conv2d: padding must be >= 0, got " +
                                    std::to_string(p.padding));
    if (input.dim(2) + 2 * p.padding < p.weights.dim(2))
        throw std::invalid_argument("conv2d: H=" + std::to_string(input.dim(2)) +
                                    " too small for k_h=" + std::to_string(p.weights.dim(2)) +
                                    " with padding " + std::to_string(p.padding));
    if (input.dim(3) + 2 * p.padding < p.weights.dim(3))
        throw std::invalid_argument("conv2d: W=" + std::to_string(input.dim(3)) +
                                    " too small for k_w=" + std::to_string(p.weights.dim(3)) +
                                    " with padding " + std::to_string(p.padding));
}

// Zero-pad all planes of one sample into a (C, H+2p, W+2p) buffer.
template <typename T>
T* pad_sample(const Tensor<T>& input, int n, int pad) {
    const int c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int hp = h + 2 * pad, wp = w + 2 * pad;
    T* out = scratch<T>(kScratchPad, static_cast<std::size_t>(c_in) * hp * wp);
    std::fill_n(out, static_cast<std::size_t>(c_in) * hp * wp, T(0));
    for (int c = 0; c < c_in; ++c)
        for (int y = 0; y < h; ++y)
            std::copy_n(&input.at(n, c, y, 0), w,
                        &out[(static_cast<std::size_t>(c) * hp + y + pad) * wp + pad]);
    return out;
}

// im2col row for patch element (ci, dy, dx): col[kidx][j] = padded input at
// the j-th output pixel's offset. Written straight into the GEMM's packed-B
// panels so no intermediate col matrix is materialized on the forward pass.
template <typename T>
void pack_conv_columns(const T* padded, int wp, int w_out, int n_pix, int k_rows,
                       int kh, int kw, int hp_stride, int stride, T* bpack) {
    const int nr = gemm_col_block<T>();
    for (int j0 = 0; j0 < n_pix; j0 += nr) {
        const int n_eff = std::min(nr, n_pix - j0);
        for (int kidx = 0; kidx < k_rows; ++kidx) {
            const int ci = kidx / (kh * kw);
            const int dy = (kidx / kw) % kh;
            const int dx = kidx % kw;
            const T* plane = padded + (static_cast<std::size_t>(ci) * hp_stride + dy) * wp + dx;
            T* dst = bpack + (static_cast<std::size_t>(j0 / nr) * k_rows + kidx) * nr;
            int j = 0;
            while (j < n_eff) {
                const int oy = (j0 + j) / w_out, ox = (j0 + j) % w_out;
                const int run = std::min(n_eff - j, w_out - ox);
                const T* src = plane + (static_cast<std::size_t>(oy) * stride) * wp +
                               static_cast<std::size_t>(ox) * stride;
                if (stride == 1)
                    std::copy_n(src, run, dst + j);
                else
                    for (int r = 0; r < run; ++r) dst[j + r] = src[static_cast<std::size_t>(r) * stride];
                j += run;
            }
            for (; j < nr; ++j) dst[j] = T(0);
        }
    }
}

// Plain col matrix (k_rows x n_pix), used on the backward pass.
template <typename T>
void im2col(const T* padded, int wp, int w_out, int n_pix, int k_rows, int kh,
            int kw, int hp_stride, int stride, T* col) {
    const int h_out = n_pix / w_out;
    for (int kidx = 0; kidx < k_rows; ++kidx) {
        const int ci = kidx / (kh * kw);
        const int dy = (kidx / kw) % kh;
        const int dx = kidx % kw;
        const T* plane = padded + (static_cast<std::size_t>(ci) * hp_stride + dy) * wp + dx;
        T* dst = col + static_cast<std::size_t>(kidx) * n_pix;
        for (int oy = 0; oy < h_out; ++oy, dst += w_out) {
            const T* src = plane + static_cast<std::size_t>(oy) * stride * wp;
            if (stride == 1)
                std::copy_n(src, w_out, dst);
            else
                for (int ox = 0; ox < w_out; ++ox)
                    dst[ox] = src[static_cast<std::size_t>(ox) * stride];
        }
    }
}

} // namespace detail

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayerParams<T>& p) {
    detail::check_conv_args(input, p);
    const int n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int c_out = p.weights.dim(0), kh = p.weights.dim(2), kw = p.weights.dim(3);
    const int h_out = (h + 2 * p.padding - kh) / p.stride + 1;
    const int w_out = (w + 2 * p.padding - kw) / p.stride + 1;
    const int n_pix = h_out * w_out;
    const int k_rows = c_in * kh * kw;
    const int hp = h + 2 * p.padding, wp = w + 2 * p.padding;

    Tensor<T> out({n, c_out, h_out, w_out});
    T* bpack = detail::scratch<T>(detail::kScratchB, gemm_packed_b_size<T>(k_rows, n_pix));
    for (int ni = 0; ni < n; ++ni) {
        const T* src = p.padding > 0 ? detail::pad_sample(input, ni, p.padding)
                                     : &input.at(ni, 0, 0, 0);
        detail::pack_conv_columns(src, wp, w_out, n_pix, k_rows, kh, kw, hp,
                                  p.stride, bpack);
        T* dst = &out.at(ni, 0, 0, 0);
        gemm_packed_b(c_out, n_pix, k_rows, p.weights.data(), k_rows, false,
                      bpack, dst, n_pix);
        for (int co = 0; co < c_out; ++co) {
            const T b = p.bias[static_cast<std::size_t>(co)];
            T* row = dst + static_cast<std::size_t>(co) * n_pix;
            for (int j = 0; j < n_pix; ++j) row[j] += b;
        }
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvLayerParams<T>& p,
                             const Tensor<T>& grad_output) {
    detail::check_conv_args(input, p);
    const int n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const int c_out = p.weights.dim(0), kh = p.weights.dim(2), kw = p.weights.dim(3);
    const int h_out = (h + 2 * p.padding - kh) / p.stride + 1;
    const int w_out = (w + 2 * p.padding - kw) / p.stride + 1;
    if (grad_output.shape() != std::vector<int>{n, c_out, h_out, w_out})
        throw std::invalid_argument("conv2d_backward: grad_output shape " +
                                    grad_output.shape_str() + " does not match output " +
                                    Tensor<T>::shape_string({n, c_out, h_out, w_out}));
    const int n_pix = h_out * w_out;
    const int k_rows = c_in * kh * kw;
    const int hp = h + 2 * p.padding, wp = w + 2 * p.padding;

    ConvGrads<T> g{Tensor<T>({n, c_in, h, w}), Tensor<T>(p.weights.shape()),
                   Tensor<T>(p.bias.shape())};

    for (int ni = 0; ni < n; ++ni)
        for (int co = 0; co < c_out; ++co) {
            const T* row = &grad_output.at(ni, co, 0, 0);
            T s = T(0);
            for (int j = 0; j < n_pix; ++j) s += row[j];
            g.bias[static_cast<std::size_t>(co)] += s;
        }

    const std::size_t col_size = static_cast<std::size_t>(k_rows) * n_pix;
    const std::size_t pad_size = static_cast<std::size_t>(c_in) * hp * wp;
    T* col = detail::scratch<T>(detail::kScratchCol, col_size);
    T* gcol = detail::scratch<T>(detail::kScratchGcol, col_size);
    T* gpad = detail::scratch<T>(detail::kScratchGpad, pad_size);
    for (int ni = 0; ni < n; ++ni) {
        const T* src = p.padding > 0 ? detail::pad_sample(input, ni, p.padding)
                                     : &input.at(ni, 0, 0, 0);
        detail::im2col(src, wp, w_out, n_pix, k_rows, kh, kw, hp, p.stride, col);

        const T* gout = &grad_output.at(ni, 0, 0, 0);
        // dW computed transposed (col * gOut^T) so the big col matrix packs
        // with sequential reads; samples accumulate in a fixed order
        T* dwt = detail::scratch<T>(detail::kScratchDw,
                                    static_cast<std::size_t>(k_rows) * c_out);
        gemm(false, true, k_rows, c_out, n_pix, col, n_pix, gout, n_pix, dwt, c_out);
        for (int co = 0; co < c_out; ++co) {
            T* wrow = g.weights.data() + static_cast<std::size_t>(co) * k_rows;
            const T* src = dwt + co;
            for (int kidx = 0; kidx < k_rows; ++kidx)
                wrow[kidx] += src[static_cast<std::size_t>(kidx) * c_out];
        }
        // d(col) = W^T * gOut, then scattered back through the padding
        gemm(true, false, k_rows, n_pix, c_out, p.weights.data(), k_rows, gout,
             n_pix, gcol, n_pix);

        std::fill_n(gpad, pad_size, T(0));
        for (int kidx = 0; kidx < k_rows; ++kidx) {
            const int ci = kidx / (kh * kw);
            const int dy = (kidx / kw) % kh;
            const int dx = kidx % kw;
            T* plane = gpad + (static_cast<std::size_t>(ci) * hp + dy) * wp + dx;
            const T* grow = gcol + static_cast<std::size_t>(kidx) * n_pix;
            for (int oy = 0; oy < h_out; ++oy, grow += w_out) {
                T* prow = plane + static_cast<std::size_t>(oy) * p.stride * wp;
                if (p.stride == 1)
                    for (int ox = 0; ox < w_out; ++ox) prow[ox] += grow[ox];
                else
                    for (int ox = 0; ox < w_out; ++ox)
                        prow[static_cast<std::size_t>(ox) * p.stride] += grow[ox];
            }
        }
        for (int ci = 0; ci < c_in; ++ci)
            for (int y = 0; y < h; ++y)
                std::copy_n(&gpad[(static_cast<std::size_t>(ci) * hp + y + p.padding) * wp +
                                  p.padding],
                            w, &g.input.at(ni, ci, y, 0));
    }
    return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return out;
}

// Takes the forward *output*, whose positivity encodes the mask.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
    if (!output.same_shape(grad_output))
        throw std::invalid_argument("relu_backward: shape mismatch " + output.shape_str() +
                                    " vs " + grad_output.shape_str());
    Tensor<T> g(output.shape());
    for (std::size_t i = 0; i < output.size(); ++i)
        g[i] = output[i] > T(0) ? grad_output[i] : T(0);
    return g;
}

template <typename T>
Tensor<T> avgpool2x2_forward(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw std::invalid_argument("avgpool2x2: input must be NCHW, got rank " +
                                    std::to_string(x.rank()));
    if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
        throw std::invalid_argument("avgpool2x2: H and W must be even, got " + x.shape_str());
    const int n = x.dim(0), c = x.dim(1), ho = x.dim(2) / 2, wo = x.dim(3) / 2;
    Tensor<T> out({n, c, ho, wo});
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < ho; ++y)
                for (int xj = 0; xj < wo; ++xj)
                    out.at(ni, ci, y, xj) =
                        (x.at(ni, ci, 2 * y, 2 * xj) + x.at(ni, ci, 2 * y, 2 * xj + 1) +
                         x.at(ni, ci, 2 * y + 1, 2 * xj) + x.at(ni, ci, 2 * y + 1, 2 * xj + 1)) /
                        T(4);
    return out;
}

template <typename T>
Tensor<T> avgpool2x2_backward(const Tensor<T>& grad_output) {
    if (grad_output.rank() != 4)
        throw std::invalid_argument("avgpool2x2_backward: grad must be NCHW, got rank " +
                                    std::to_string(grad_output.rank()));
    const int n = grad_output.dim(0), c = grad_output.dim(1);
    const int ho = grad_output.dim(2), wo = grad_output.dim(3);
    Tensor<T> g({n, c, 2 * ho, 2 * wo});
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < ho; ++y)
                for (int xj = 0; xj < wo; ++xj) {
                    const T v = grad_output.at(ni, ci, y, xj) / T(4);
                    g.at(ni, ci, 2 * y, 2 * xj) = v;
                    g.at(ni, ci, 2 * y, 2 * xj + 1) = v;
                    g.at(ni, ci, 2 * y + 1, 2 * xj) = v;
                    g.at(ni, ci, 2 * y + 1, 2 * xj + 1) = v;
                }
    return g;
}

template <typename T>
Tensor<T> upsample_nearest2x_forward(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw std::invalid_argument("upsample_nearest2x: input must be NCHW, got rank " +
                                    std::to_string(x.rank()));
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> out({n, c, 2 * h, 2 * w});
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int xj = 0; xj < w; ++xj) {
                    const T v = x.at(ni, ci, y, xj);
                    out.at(ni, ci, 2 * y, 2 * xj) = v;
                    out.at(ni, ci, 2 * y, 2 * xj + 1) = v;
                    out.at(ni, ci, 2 * y + 1, 2 * xj) = v;
                    out.at(ni, ci, 2 * y + 1, 2 * xj + 1) = v;
                }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest2x_backward(const Tensor<T>& grad_output) {
    if (grad_output.rank() != 4)
        throw std::invalid_argument("upsample_nearest2x_backward: grad must be NCHW, got rank " +
                                    std::to_string(grad_output.rank()));
    if (grad_output.dim(2) % 2 != 0 || grad_output.dim(3) % 2 != 0)
        throw std::invalid_argument("upsample_nearest2x_backward: H and W must be even, got " +
                                    grad_output.shape_str());
    const int n = grad_output.dim(0), c = grad_output.dim(1);
    const int h = grad_output.dim(2) / 2, w = grad_output.dim(3) / 2;
    Tensor<T> g({n, c, h, w});
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int y = 0; y < h; ++y)
                for (int xj = 0; xj < w; ++xj)
                    g.at(ni, ci, y, xj) =
                        grad_output.at(ni, ci, 2 * y, 2 * xj) +
                        grad_output.at(ni, ci, 2 * y, 2 * xj + 1) +
                        grad_output.at(ni, ci, 2 * y + 1, 2 * xj) +
                        grad_output.at(ni, ci, 2 * y + 1, 2 * xj + 1);
    return g;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
    if (parts.empty())
        throw std::invalid_argument("concat_channels: no inputs");
    const Tensor<T>& first = *parts.front();
    if (first.rank() != 4)
        throw std::invalid_argument("concat_channels: inputs must be NCHW, got rank " +
                                    std::to_string(first.rank()));
    int c_total = 0;
    for (const auto* p : parts) {
        if (p->rank() != 4 || p->dim(0) != first.dim(0) || p->dim(2) != first.dim(2) ||
            p->dim(3) != first.dim(3))
            throw std::invalid_argument("concat_channels: shape " + p->shape_str() +
                                        " incompatible with " + first.shape_str());
        c_total += p->dim(1);
    }
    const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<T> out({n, c_total, h, w});
    for (int ni = 0; ni < n; ++ni) {
        int co = 0;
        for (const auto* p : parts) {
            std::copy_n(&p->at(ni, 0, 0, 0), static_cast<std::size_t>(p->dim(1)) * plane,
                        &out.at(ni, co, 0, 0));
            co += p->dim(1);
        }
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    return concat_channels<T>({&a, &b});
}

template <typename T>
std::vector<Tensor<T>> concat_channels_backward(const Tensor<T>& grad_output,
                                                const std::vector<int>& channel_counts) {
    int c_total = 0;
    for (int c : channel_counts) c_total += c;
    if (grad_output.rank() != 4 || grad_output.dim(1) != c_total)
        throw std::invalid_argument("concat_channels_backward: grad channels " +
                                    grad_output.shape_str() + " do not sum to " +
                                    std::to_string(c_total));
    const int n = grad_output.dim(0), h = grad_output.dim(2), w = grad_output.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<Tensor<T>> grads;
    grads.reserve(channel_counts.size());
    int co = 0;
    for (int c : channel_counts) {
        Tensor<T> g({n, c, h, w});
        for (int ni = 0; ni < n; ++ni)
            std::copy_n(&grad_output.at(ni, co, 0, 0), static_cast<std::size_t>(c) * plane,
                        &g.at(ni, 0, 0, 0));
        grads.push_back(std::move(g));
        co += c;
    }
    return grads;
}

// Per-pixel softmax over the channel axis (used for optional kernel
// normalization).
template <typename T>
Tensor<T> softmax_channels_forward(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw std::invalid_argument("softmax_channels: input must be NCHW, got rank " +
                                    std::to_string(x.rank()));
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> out(x.shape());
    for (int ni = 0; ni < n; ++ni)
        for (int y = 0; y < h; ++y)
            for (int xj = 0; xj < w; ++xj) {
                T mx = x.at(ni, 0, y, xj);
                for (int ci = 1; ci < c; ++ci) mx = std::max(mx, x.at(ni, ci, y, xj));
                T sum = T(0);
                for (int ci = 0; ci < c; ++ci) {
                    const T e = std::exp(x.at(ni, ci, y, xj) - mx);
                    out.at(ni, ci, y, xj) = e;
                    sum += e;
                }
                for (int ci = 0; ci < c; ++ci) out.at(ni, ci, y, xj) /= sum;
            }
    return out;
}

template <typename T>
Tensor<T> softmax_channels_backward(const Tensor<T>& output, const Tensor<T>& grad_output) {
    if (!output.same_shape(grad_output))
        throw std::invalid_argument("softmax_channels_backward: shape mismatch " +
                                    output.shape_str() + " vs " + grad_output.shape_str());
    const int n = output.dim(0), c = output.dim(1), h = output.dim(2), w = output.dim(3);
    Tensor<T> g(output.shape());
    for (int ni = 0; ni < n; ++ni)
        for (int y = 0; y < h; ++y)
            for (int xj = 0; xj < w; ++xj) {
                T dot = T(0);
                for (int ci = 0; ci < c; ++ci)
                    dot += grad_output.at(ni, ci, y, xj) * output.at(ni, ci, y, xj);
                for (int ci = 0; ci < c; ++ci)
                    g.at(ni, ci, y, xj) =
                        output.at(ni, ci, y, xj) * (grad_output.at(ni, ci, y, xj) - dot);
            }
    return g;
}

} // namespace edrain
