#pragma once

// Kernel prediction network: a small UNet that maps the rainy image to a
// per-pixel K x K filtering kernel, applied at several dilation scales whose
// outputs are fused by a 3x3 conv.
//
// Encoder level i: two 3x3 conv+ReLU at base*2^i channels, avgpool2x2 between
// levels. Decoder level i: nearest 2x upsample, concat with the level-i skip,
// then two 3x3 conv+ReLU. A 1x1 head emits the K*K kernel channels.
//
// Init makes the untrained network start near the identity: the head bias is
// the delta kernel and its weights are damped, and the fusion conv starts as
// an exact average of the scale outputs. A freshly initialized model therefore
// roughly reproduces its input, which keeps early training stable.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "edrain/adam.hpp"
#include "edrain/filtering.hpp"
#include "edrain/layers.hpp"
#include "edrain/rng.hpp"
#include "edrain/tensor.hpp"

namespace edrain {

struct KpnConfig {
    int levels = 3;
    int base_channels = 32;
    int kernel_width = 5; // K; the predicted kernels are K x K
    int in_channels = 3;
    DilationFactors dilations{1, 2, 3, 4};
    bool normalize_kernels = false; // softmax over the K*K channels per pixel

    int level_channels(int level) const { return base_channels << level; }
};

inline void check_kpn_config(const KpnConfig& c) {
    if (c.levels < 1)
        throw std::invalid_argument("KpnConfig: levels must be >= 1, got " +
                                    std::to_string(c.levels));
    if (c.base_channels < 1)
        throw std::invalid_argument("KpnConfig: base_channels must be >= 1, got " +
                                    std::to_string(c.base_channels));
    if (c.kernel_width < 1 || c.kernel_width % 2 == 0)
        throw std::invalid_argument("KpnConfig: kernel_width must be odd and >= 1, got " +
                                    std::to_string(c.kernel_width));
    if (c.in_channels < 1)
        throw std::invalid_argument("KpnConfig: in_channels must be >= 1, got " +
                                    std::to_string(c.in_channels));
    if (c.dilations.empty())
        throw std::invalid_argument("KpnConfig: dilations must be non-empty");
    for (int d : c.dilations)
        if (d < 1)
            throw std::invalid_argument("KpnConfig: dilation factors must be >= 1, got " +
                                        std::to_string(d));
}

template <typename T>
struct KpnParams {
    std::vector<ConvLayerParams<T>> enc1, enc2; // per level, shallow to deep
    std::vector<ConvLayerParams<T>> dec1, dec2; // per level, levels-1 entries
    ConvLayerParams<T> head;
    FusionParams<T> fusion;
};

// Visits every parameter tensor in a fixed order with a stable name; the
// checkpoint format and the optimizer state both rely on this order.
template <typename T, typename Fn>
void for_each_param(KpnParams<T>& p, Fn&& fn) {
    for (std::size_t i = 0; i < p.enc1.size(); ++i) {
        const std::string lv = "enc" + std::to_string(i);
        fn(lv + ".conv1.weight", p.enc1[i].weights);
        fn(lv + ".conv1.bias", p.enc1[i].bias);
        fn(lv + ".conv2.weight", p.enc2[i].weights);
        fn(lv + ".conv2.bias", p.enc2[i].bias);
    }
    for (std::size_t i = 0; i < p.dec1.size(); ++i) {
        const std::string lv = "dec" + std::to_string(i);
        fn(lv + ".conv1.weight", p.dec1[i].weights);
        fn(lv + ".conv1.bias", p.dec1[i].bias);
        fn(lv + ".conv2.weight", p.dec2[i].weights);
        fn(lv + ".conv2.bias", p.dec2[i].bias);
    }
    fn("head.weight", p.head.weights);
    fn("head.bias", p.head.bias);
    fn("fusion.weight", p.fusion.weights);
    fn("fusion.bias", p.fusion.bias);
}

template <typename T, typename Fn>
void for_each_param(const KpnParams<T>& p, Fn&& fn) {
    for_each_param(const_cast<KpnParams<T>&>(p),
                   [&](const std::string& name, Tensor<T>& t) {
                       fn(name, static_cast<const Tensor<T>&>(t));
                   });
}

template <typename T>
std::size_t kpn_param_count(const KpnParams<T>& p) {
    std::size_t n = 0;
    for_each_param(p, [&](const std::string&, const Tensor<T>& t) { n += t.size(); });
    return n;
}

namespace detail {

template <typename T>
ConvLayerParams<T> make_conv(int c_out, int c_in, int k, int pad) {
    return ConvLayerParams<T>{Tensor<T>({c_out, c_in, k, k}), Tensor<T>({c_out}), 1, pad};
}

template <typename T>
void he_fill(Tensor<T>& w, Rng& rng, double scale = 1.0) {
    const auto& s = w.shape();
    const double fan_in = static_cast<double>(s[1]) * s[2] * s[3];
    const double std_dev = std::sqrt(2.0 / fan_in) * scale;
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<T>(rng.normal() * std_dev);
}

} // namespace detail

// Zero-valued parameter set with the shapes the config implies.
template <typename T>
KpnParams<T> kpn_alloc(const KpnConfig& cfg) {
    check_kpn_config(cfg);
    KpnParams<T> p;
    const int kk = cfg.kernel_width * cfg.kernel_width;
    const int nscales = static_cast<int>(cfg.dilations.size());
    for (int lv = 0; lv < cfg.levels; ++lv) {
        const int c = cfg.level_channels(lv);
        const int c_in = lv == 0 ? cfg.in_channels : cfg.level_channels(lv - 1);
        p.enc1.push_back(detail::make_conv<T>(c, c_in, 3, 1));
        p.enc2.push_back(detail::make_conv<T>(c, c, 3, 1));
    }
    for (int lv = 0; lv < cfg.levels - 1; ++lv) {
        const int c = cfg.level_channels(lv);
        p.dec1.push_back(detail::make_conv<T>(c, c + cfg.level_channels(lv + 1), 3, 1));
        p.dec2.push_back(detail::make_conv<T>(c, c, 3, 1));
    }
    p.head = detail::make_conv<T>(kk, cfg.base_channels, 1, 0);
    p.fusion = FusionParams<T>{Tensor<T>({cfg.in_channels, nscales * cfg.in_channels, 3, 3}),
                               Tensor<T>({cfg.in_channels})};
    return p;
}

template <typename T>
KpnParams<T> kpn_init(const KpnConfig& cfg, std::uint64_t seed) {
    KpnParams<T> p = kpn_alloc<T>(cfg);
    const int kk = cfg.kernel_width * cfg.kernel_width;
    const int nscales = static_cast<int>(cfg.dilations.size());

    Rng rng(seed);
    for (auto& c : p.enc1) detail::he_fill(c.weights, rng);
    for (auto& c : p.enc2) detail::he_fill(c.weights, rng);
    for (auto& c : p.dec1) detail::he_fill(c.weights, rng);
    for (auto& c : p.dec2) detail::he_fill(c.weights, rng);
    // damped head + delta bias: predicted kernels start close to the identity
    detail::he_fill(p.head.weights, rng, 0.01);
    p.head.bias[static_cast<std::size_t>((kk - 1) / 2)] = T(1);
    // fusion starts as the exact mean of the scale outputs (center tap only)
    for (int c = 0; c < cfg.in_channels; ++c)
        for (int s = 0; s < nscales; ++s)
            p.fusion.weights.at(c, s * cfg.in_channels + c, 1, 1) = T(1) / static_cast<T>(nscales);
    return p;
}

template <typename T>
KpnParams<T> kpn_zero_like(const KpnParams<T>& p) {
    KpnParams<T> z;
    auto zero_conv = [](const ConvLayerParams<T>& c) {
        return ConvLayerParams<T>{Tensor<T>(c.weights.shape()), Tensor<T>(c.bias.shape()),
                                  c.stride, c.padding};
    };
    for (const auto& c : p.enc1) z.enc1.push_back(zero_conv(c));
    for (const auto& c : p.enc2) z.enc2.push_back(zero_conv(c));
    for (const auto& c : p.dec1) z.dec1.push_back(zero_conv(c));
    for (const auto& c : p.dec2) z.dec2.push_back(zero_conv(c));
    z.head = zero_conv(p.head);
    z.fusion = FusionParams<T>{Tensor<T>(p.fusion.weights.shape()),
                               Tensor<T>(p.fusion.bias.shape())};
    return z;
}

// Forward activations kept around for the backward pass.
template <typename T>
struct KpnTrace {
    Tensor<T> input;
    std::vector<Tensor<T>> enc_in, enc_r1, enc_r2; // per level
    std::vector<Tensor<T>> cat, dec_r1, dec_r2;    // per decoder level
    Tensor<T> head_raw;
    KernelField<T> kernels;
    std::vector<Tensor<T>> filtered; // one per dilation scale
    Tensor<T> output;
};

template <typename T>
KernelField<T> kpn_forward(const Tensor<T>& input, const KpnParams<T>& params,
                           const KpnConfig& cfg, KpnTrace<T>* trace = nullptr) {
    check_kpn_config(cfg);
    if (input.rank() != 4)
        throw std::invalid_argument("kpn_forward: input must be NCHW, got rank " +
                                    std::to_string(input.rank()));
    if (input.dim(1) != cfg.in_channels)
        throw std::invalid_argument("kpn_forward: input has " + std::to_string(input.dim(1)) +
                                    " channels, config expects " +
                                    std::to_string(cfg.in_channels));
    const int div = 1 << (cfg.levels - 1);
    if (input.dim(2) % div != 0 || input.dim(3) % div != 0)
        throw std::invalid_argument("kpn_forward: H and W must be divisible by " +
                                    std::to_string(div) + ", got " + input.shape_str());

    KpnTrace<T> local;
    KpnTrace<T>& tr = trace ? *trace : local;
    tr = KpnTrace<T>{};
    tr.input = input;

    for (int lv = 0; lv < cfg.levels; ++lv) {
        tr.enc_in.push_back(lv == 0 ? input : avgpool2x2_forward(tr.enc_r2.back()));
        tr.enc_r1.push_back(relu_forward(conv2d_forward(tr.enc_in.back(), params.enc1[lv])));
        tr.enc_r2.push_back(relu_forward(conv2d_forward(tr.enc_r1.back(), params.enc2[lv])));
    }

    tr.cat.resize(cfg.levels - 1);
    tr.dec_r1.resize(cfg.levels - 1);
    tr.dec_r2.resize(cfg.levels - 1);
    const Tensor<T>* d = &tr.enc_r2.back();
    for (int lv = cfg.levels - 2; lv >= 0; --lv) {
        const Tensor<T> up = upsample_nearest2x_forward(*d);
        tr.cat[lv] = concat_channels(tr.enc_r2[lv], up); // skip first, then upsampled
        tr.dec_r1[lv] = relu_forward(conv2d_forward(tr.cat[lv], params.dec1[lv]));
        tr.dec_r2[lv] = relu_forward(conv2d_forward(tr.dec_r1[lv], params.dec2[lv]));
        d = &tr.dec_r2[lv];
    }

    tr.head_raw = conv2d_forward(*d, params.head);
    tr.kernels = cfg.normalize_kernels ? softmax_channels_forward(tr.head_raw) : tr.head_raw;
    return tr.kernels;
}

template <typename T>
Tensor<T> derain(const Tensor<T>& input, const KpnParams<T>& params, const KpnConfig& cfg,
                 KpnTrace<T>* trace = nullptr) {
    KpnTrace<T> local;
    KpnTrace<T>& tr = trace ? *trace : local;
    const KernelField<T> kernels = kpn_forward(input, params, cfg, &tr);
    tr.filtered.clear();
    for (int l : cfg.dilations)
        tr.filtered.push_back(pixel_wise_dilated_filter(input, kernels, l));
    tr.output = fuse_scales(tr.filtered, params.fusion);
    return tr.output;
}

// Parameter gradients given d(loss)/d(derain output).
template <typename T>
KpnParams<T> kpn_backward(const KpnTrace<T>& tr, const KpnParams<T>& params,
                          const KpnConfig& cfg, const Tensor<T>& grad_output) {
    if (!grad_output.same_shape(tr.output))
        throw std::invalid_argument("kpn_backward: grad shape " + grad_output.shape_str() +
                                    " does not match output " + tr.output.shape_str());
    KpnParams<T> g = kpn_zero_like(params);

    FuseGrads<T> fg = fuse_scales_backward(tr.filtered, params.fusion, grad_output);
    g.fusion.weights = std::move(fg.weights);
    g.fusion.bias = std::move(fg.bias);

    Tensor<T> gkernels(tr.kernels.shape());
    for (std::size_t s = 0; s < cfg.dilations.size(); ++s) {
        FilterGrads<T> fgr = pixel_wise_dilated_filter_backward(
            tr.input, tr.kernels, cfg.dilations[s], fg.scales[s]);
        for (std::size_t i = 0; i < gkernels.size(); ++i) gkernels[i] += fgr.kernels[i];
    }

    const Tensor<T> ghead = cfg.normalize_kernels
                                ? softmax_channels_backward(tr.kernels, gkernels)
                                : std::move(gkernels);
    ConvGrads<T> hc = conv2d_backward(tr.dec_r2.empty() ? tr.enc_r2.back() : tr.dec_r2[0],
                                      params.head, ghead);
    g.head.weights = std::move(hc.weights);
    g.head.bias = std::move(hc.bias);

    // decoder ran deep-to-shallow, so its backward runs shallow-to-deep
    std::vector<Tensor<T>> skip_grad(cfg.levels);
    Tensor<T> gd = std::move(hc.input);
    for (int lv = 0; lv < cfg.levels - 1; ++lv) {
        ConvGrads<T> c2 = conv2d_backward(tr.dec_r1[lv], params.dec2[lv],
                                          relu_backward(tr.dec_r2[lv], gd));
        g.dec2[lv].weights = std::move(c2.weights);
        g.dec2[lv].bias = std::move(c2.bias);
        ConvGrads<T> c1 = conv2d_backward(tr.cat[lv], params.dec1[lv],
                                          relu_backward(tr.dec_r1[lv], c2.input));
        g.dec1[lv].weights = std::move(c1.weights);
        g.dec1[lv].bias = std::move(c1.bias);
        auto parts = concat_channels_backward(
            c1.input, {cfg.level_channels(lv), cfg.level_channels(lv + 1)});
        skip_grad[lv] = std::move(parts[0]);
        gd = upsample_nearest2x_backward(parts[1]);
    }

    // encoder backward, bottleneck first; gd currently holds the grad flowing
    // into the bottleneck output
    for (int lv = cfg.levels - 1; lv >= 0; --lv) {
        Tensor<T> gout = std::move(gd);
        if (lv < cfg.levels - 1)
            for (std::size_t i = 0; i < gout.size(); ++i) gout[i] += skip_grad[lv][i];
        ConvGrads<T> c2 = conv2d_backward(tr.enc_r1[lv], params.enc2[lv],
                                          relu_backward(tr.enc_r2[lv], gout));
        g.enc2[lv].weights = std::move(c2.weights);
        g.enc2[lv].bias = std::move(c2.bias);
        ConvGrads<T> c1 = conv2d_backward(tr.enc_in[lv], params.enc1[lv],
                                          relu_backward(tr.enc_r1[lv], c2.input));
        g.enc1[lv].weights = std::move(c1.weights);
        g.enc1[lv].bias = std::move(c1.bias);
        if (lv > 0) gd = avgpool2x2_backward(c1.input);
    }
    return g;
}

} // namespace edrain
