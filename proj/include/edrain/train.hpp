#pragma once

// Training loop, evaluation and the latency benchmark.
//
// One iteration = one Adam step over batch_size random crops. Two RNG streams
// drive a run: data_rng picks pairs and crop offsets, aug_rng feeds the rain
// augmentation. Both stream states go into the checkpoint, so a resumed run
// replays the exact draw sequence of an uninterrupted one.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "edrain/adam.hpp"
#include "edrain/checkpoint.hpp"
#include "edrain/dataset.hpp"
#include "edrain/image_io.hpp"
#include "edrain/kpn.hpp"
#include "edrain/loss.hpp"
#include "edrain/rainmix.hpp"
#include "edrain/rng.hpp"

namespace edrain {

struct TrainConfig {
    int levels = 3;
    int base_channels = 32;
    int kernel_width = 5;
    std::vector<int> dilations{1, 2, 3, 4};
    bool normalize_kernels = false;

    double lambda = 0.2;
    bool ssim_enabled = true;

    int iterations = 2000;
    int batch_size = 4;
    double lr = 1e-3;
    int crop = 64;

    bool rainmix_enabled = false;

    std::uint64_t seed = 0;
    int checkpoint_interval = 500;
};

// Ablation presets: 1 = single scale + L1, 2 = four scales + L1,
// 3 = four scales + L1-SSIM, 4 = 3 + RainMix. Adjacent presets differ in
// exactly one switch.
inline TrainConfig apply_variant(TrainConfig cfg, int variant) {
    switch (variant) {
        case 1:
            cfg.dilations = {1};
            cfg.ssim_enabled = false;
            cfg.rainmix_enabled = false;
            break;
        case 2:
            cfg.dilations = {1, 2, 3, 4};
            cfg.ssim_enabled = false;
            cfg.rainmix_enabled = false;
            break;
        case 3:
            cfg.dilations = {1, 2, 3, 4};
            cfg.ssim_enabled = true;
            cfg.rainmix_enabled = false;
            break;
        case 4:
            cfg.dilations = {1, 2, 3, 4};
            cfg.ssim_enabled = true;
            cfg.rainmix_enabled = true;
            break;
        default:
            throw std::invalid_argument("variant must be 1..4, got " + std::to_string(variant));
    }
    return cfg;
}

namespace detail {

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

} // namespace detail

inline std::string config_echo(const TrainConfig& cfg, const std::string& precision) {
    std::ostringstream os;
    os << "# levels=" << cfg.levels << "\n"
       << "# base_channels=" << cfg.base_channels << "\n"
       << "# kernel_width=" << cfg.kernel_width << "\n"
       << "# dilations=" << detail::join_ints(cfg.dilations) << "\n"
       << "# normalize_kernels=" << (cfg.normalize_kernels ? 1 : 0) << "\n"
       << "# lambda=" << detail::fmt_g(cfg.lambda) << "\n"
       << "# ssim_enabled=" << (cfg.ssim_enabled ? 1 : 0) << "\n"
       << "# rainmix_enabled=" << (cfg.rainmix_enabled ? 1 : 0) << "\n"
       << "# iterations=" << cfg.iterations << "\n"
       << "# batch_size=" << cfg.batch_size << "\n"
       << "# lr=" << detail::fmt_g(cfg.lr) << "\n"
       << "# crop=" << cfg.crop << "\n"
       << "# seed=" << cfg.seed << "\n"
       << "# checkpoint_interval=" << cfg.checkpoint_interval << "\n"
       << "# precision=" << precision << "\n";
    return os.str();
}

class TrainDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T>
struct TrainResult {
    Checkpoint<T> checkpoint;
    double final_loss = 0;
    double final_holdout_psnr = 0;
};

namespace detail {

template <typename T>
void copy_into_batch(Tensor<T>& batch, int n, const Tensor<T>& img) {
    std::copy_n(img.data(), img.size(), &batch.at(n, 0, 0, 0));
}

template <typename T>
Tensor<T> as_batch(const Tensor<T>& img) {
    Tensor<T> b({1, img.dim(0), img.dim(1), img.dim(2)});
    std::copy_n(img.data(), img.size(), b.data());
    return b;
}

template <typename T>
Tensor<T> from_batch(const Tensor<T>& batch, int n, int h, int w) {
    Tensor<T> img({batch.dim(1), h, w});
    for (int c = 0; c < batch.dim(1); ++c)
        for (int y = 0; y < h; ++y) std::copy_n(&batch.at(n, c, y, 0), w, &img.at(c, y, 0));
    return img;
}

template <typename T>
void dump_diagnostics(const std::string& dir, const TrainConfig& cfg, std::uint64_t iteration,
                      double loss_value, const Tensor<T>& input, const Tensor<T>& target,
                      const Tensor<T>& output) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return; // diagnostics are best-effort; the throw still happens
    for (int b = 0; b < input.dim(0); ++b) {
        const int h = input.dim(2), w = input.dim(3);
        save_image(dir + "/input_" + std::to_string(b) + ".png", from_batch(input, b, h, w));
        save_image(dir + "/target_" + std::to_string(b) + ".png", from_batch(target, b, h, w));
        save_image(dir + "/output_" + std::to_string(b) + ".png", from_batch(output, b, h, w));
    }
    std::ofstream info(dir + "/info.txt");
    info << "iteration=" << iteration << "\n"
         << "loss=" << fmt_g(loss_value) << "\n"
         << config_echo(cfg, sizeof(T) == 4 ? "float" : "double");
}

} // namespace detail

template <typename T>
TrainResult<T> train(const TrainConfig& cfg, const LoadedDataset<T>& data,
                     const RainStreakSet<T>* streaks, const std::string& checkpoint_path,
                     const std::string& log_path, const Checkpoint<T>* resume = nullptr,
                     std::ostream* console = nullptr) {
    if (data.rainy.empty()) throw std::invalid_argument("train: dataset is empty");
    if (cfg.iterations < 1)
        throw std::invalid_argument("train: iterations must be >= 1, got " +
                                    std::to_string(cfg.iterations));
    if (cfg.batch_size < 1)
        throw std::invalid_argument("train: batch_size must be >= 1, got " +
                                    std::to_string(cfg.batch_size));
    const int div = 1 << (cfg.levels - 1);
    if (cfg.crop < 1 || cfg.crop % div != 0)
        throw std::invalid_argument("train: crop " + std::to_string(cfg.crop) +
                                    " must be a positive multiple of " + std::to_string(div));
    if (cfg.ssim_enabled && cfg.crop < 11)
        throw std::invalid_argument("train: crop " + std::to_string(cfg.crop) +
                                    " is smaller than the 11-pixel SSIM window");
    for (std::size_t i = 0; i < data.rainy.size(); ++i)
        if (data.rainy[i].dim(1) < cfg.crop || data.rainy[i].dim(2) < cfg.crop)
            throw std::invalid_argument("train: image '" + data.names[i] + "' " +
                                        data.rainy[i].shape_str() + " is smaller than crop " +
                                        std::to_string(cfg.crop));
    if (cfg.rainmix_enabled && (!streaks || streaks->maps.empty()))
        throw std::invalid_argument("train: rain augmentation enabled but no streak maps given");

    const int in_ch = data.rainy.front().dim(0);
    const KpnConfig kcfg{cfg.levels, cfg.base_channels, cfg.kernel_width, in_ch,
                         cfg.dilations, cfg.normalize_kernels};
    LossConfig<T> lcfg;
    lcfg.lambda = static_cast<T>(cfg.lambda);
    lcfg.use_ssim = cfg.ssim_enabled;

    KpnParams<T> params;
    AdamState<T> adam;
    AdamConfig<T> acfg;
    acfg.lr = static_cast<T>(cfg.lr);
    Rng data_rng(cfg.seed), aug_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uint64_t start_iter = 0;

    if (resume) {
        if (resume->config.levels != kcfg.levels ||
            resume->config.base_channels != kcfg.base_channels ||
            resume->config.kernel_width != kcfg.kernel_width ||
            resume->config.in_channels != kcfg.in_channels ||
            resume->config.dilations != kcfg.dilations ||
            resume->config.normalize_kernels != kcfg.normalize_kernels)
            throw std::invalid_argument("train: resume checkpoint was built for a different "
                                        "model configuration");
        if (!resume->has_adam)
            throw std::invalid_argument("train: resume checkpoint has no optimizer state");
        params = resume->params;
        adam = resume->adam;
        acfg = resume->adam_cfg;
        if (resume->has_rng) {
            data_rng.set_state(resume->data_rng);
            aug_rng.set_state(resume->aug_rng);
        }
        start_iter = resume->iteration;
        if (start_iter >= static_cast<std::uint64_t>(cfg.iterations))
            throw std::invalid_argument("train: checkpoint is already at iteration " +
                                        std::to_string(start_iter) + " of " +
                                        std::to_string(cfg.iterations));
    } else {
        params = kpn_init<T>(kcfg, cfg.seed);
    }

    std::vector<Tensor<T>*> param_ptrs;
    for_each_param(params, [&](const std::string&, Tensor<T>& t) { param_ptrs.push_back(&t); });
    if (!resume) adam = adam_init(param_ptrs);

    // fixed holdout: center crop of the first pair, metric-only
    const int h0 = data.rainy.front().dim(1), w0 = data.rainy.front().dim(2);
    const Tensor<T> hold_in = detail::as_batch(
        crop_image(data.rainy.front(), (h0 - cfg.crop) / 2, (w0 - cfg.crop) / 2, cfg.crop, cfg.crop));
    const Tensor<T> hold_tgt = detail::as_batch(
        crop_image(data.clean.front(), (h0 - cfg.crop) / 2, (w0 - cfg.crop) / 2, cfg.crop, cfg.crop));

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::trunc);
        if (!log) throw std::runtime_error("train: cannot write log: " + log_path);
        log << config_echo(cfg, sizeof(T) == 4 ? "float" : "double");
        log << "iteration,loss,psnr_holdout\n";
    }

    const auto n_pairs = data.rainy.size();
    Tensor<T> batch_in({cfg.batch_size, in_ch, cfg.crop, cfg.crop});
    Tensor<T> batch_tgt({cfg.batch_size, in_ch, cfg.crop, cfg.crop});
    TrainResult<T> result;

    for (std::uint64_t it = start_iter + 1; it <= static_cast<std::uint64_t>(cfg.iterations);
         ++it) {
        for (int b = 0; b < cfg.batch_size; ++b) {
            const std::size_t p = data_rng.uniform_index(n_pairs);
            const auto& rainy = data.rainy[p];
            const auto& clean = data.clean[p];
            const int y0 = static_cast<int>(
                data_rng.uniform_index(static_cast<std::size_t>(rainy.dim(1) - cfg.crop + 1)));
            const int x0 = static_cast<int>(
                data_rng.uniform_index(static_cast<std::size_t>(rainy.dim(2) - cfg.crop + 1)));
            Tensor<T> tgt = crop_image(clean, y0, x0, cfg.crop, cfg.crop);
            Tensor<T> in;
            if (cfg.rainmix_enabled) {
                const RainMap<T> r = rain_mix(*streaks, aug_rng);
                const bool clean_base = aug_rng.uniform() < 0.5; // X ~ {rainy, clean}
                in = composite_rainy(clean_base ? tgt : crop_image(rainy, y0, x0, cfg.crop, cfg.crop),
                                     r);
            } else {
                in = crop_image(rainy, y0, x0, cfg.crop, cfg.crop);
            }
            detail::copy_into_batch(batch_in, b, in);
            detail::copy_into_batch(batch_tgt, b, tgt);
        }

        KpnTrace<T> trace;
        const Tensor<T> out = derain(batch_in, params, kcfg, &trace);
        const LossResult<T> loss = combined_loss_with_grad(out, batch_tgt, lcfg);

        if (!std::isfinite(static_cast<double>(loss.value)) || !all_finite(out)) {
            const std::string diag_dir =
                (log_path.empty() ? std::string("diagnostics") : log_path + ".diagnostics") +
                "_iter" + std::to_string(it);
            detail::dump_diagnostics(diag_dir, cfg, it, static_cast<double>(loss.value),
                                     batch_in, batch_tgt, out);
            throw TrainDiverged("train: non-finite loss at iteration " + std::to_string(it) +
                                ", batch dumped to " + diag_dir);
        }

        KpnParams<T> grads = kpn_backward(trace, params, kcfg, loss.grad);
        std::vector<const Tensor<T>*> grad_ptrs;
        for_each_param(grads, [&](const std::string&, const Tensor<T>& t) {
            grad_ptrs.push_back(&t);
        });
        adam_step(param_ptrs, grad_ptrs, adam, acfg);

        const Tensor<T> hold_out = derain(hold_in, params, kcfg);
        const double hold_psnr = psnr(hold_out, hold_tgt);

        result.final_loss = static_cast<double>(loss.value);
        result.final_holdout_psnr = hold_psnr;
        if (log)
            log << it << ',' << detail::fmt_g(static_cast<double>(loss.value)) << ','
                << detail::fmt_g(hold_psnr) << "\n";
        if (console && (it % 50 == 0 || it == static_cast<std::uint64_t>(cfg.iterations)))
            *console << "iter " << it << "  loss " << detail::fmt_g(static_cast<double>(loss.value))
                     << "  holdout " << detail::fmt_g(hold_psnr) << " dB\n";

        const bool at_interval = cfg.checkpoint_interval > 0 &&
                                 it % static_cast<std::uint64_t>(cfg.checkpoint_interval) == 0;
        if (at_interval || it == static_cast<std::uint64_t>(cfg.iterations)) {
            result.checkpoint.config = kcfg;
            result.checkpoint.params = params;
            result.checkpoint.has_adam = true;
            result.checkpoint.adam_cfg = acfg;
            result.checkpoint.adam = adam;
            result.checkpoint.has_rng = true;
            result.checkpoint.data_rng = data_rng.state();
            result.checkpoint.aug_rng = aug_rng.state();
            result.checkpoint.iteration = it;
            if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, result.checkpoint);
        }
    }
    return result;
}

struct EvalRow {
    std::string name;
    double input_psnr = 0, input_ssim = 0, output_psnr = 0, output_ssim = 0;
};

namespace detail {

template <typename T>
Tensor<T> quantize8(const Tensor<T>& img) {
    Tensor<T> q(img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = static_cast<double>(img[i]);
        if (!std::isfinite(v)) v = 0.0;
        v = std::min(std::max(v, 0.0), 1.0);
        q[i] = static_cast<T>(std::floor(v * 255.0 + 0.5) / 255.0);
    }
    return q;
}

} // namespace detail

// Metrics per pair plus a trailing mean row; all metrics are computed on
// 8-bit-quantized values, matching what an exported PNG would hold. Without
// params the "output" is the input passed through (identity model).
template <typename T>
std::vector<EvalRow> evaluate(const LoadedDataset<T>& data, const KpnParams<T>* params,
                              const KpnConfig& kcfg, const std::string& export_dir,
                              const std::string& csv_path) {
    if (data.rainy.empty()) throw std::invalid_argument("evaluate: dataset is empty");
    if (!export_dir.empty()) std::filesystem::create_directories(export_dir);
    const int div = 1 << (kcfg.levels - 1);
    std::vector<EvalRow> rows;
    SsimConfig<T> scfg;

    for (std::size_t i = 0; i < data.rainy.size(); ++i) {
        const Tensor<T>& rainy = data.rainy[i];
        const Tensor<T>& clean = data.clean[i];
        Tensor<T> out;
        if (params) {
            const int h = rainy.dim(1), w = rainy.dim(2);
            const Tensor<T> padded = pad_to_multiple(rainy, div);
            const Tensor<T> derained = derain(detail::as_batch(padded), *params, kcfg);
            out = crop_image(detail::from_batch(derained, 0, padded.dim(1), padded.dim(2)), 0, 0,
                             h, w);
        } else {
            out = rainy;
        }
        const Tensor<T> in_q = detail::quantize8(rainy);
        const Tensor<T> out_q = detail::quantize8(out);
        const Tensor<T> in4 = detail::as_batch(in_q), out4 = detail::as_batch(out_q);
        const Tensor<T> cl4 = detail::as_batch(clean);
        EvalRow row;
        row.name = data.names[i];
        row.input_psnr = psnr(in_q, clean);
        row.input_ssim = static_cast<double>(ssim(in4, cl4, scfg));
        row.output_psnr = psnr(out_q, clean);
        row.output_ssim = static_cast<double>(ssim(out4, cl4, scfg));
        rows.push_back(row);
        if (!export_dir.empty())
            save_image((std::filesystem::path(export_dir) / data.names[i]).string(), out_q);
    }

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path, std::ios::trunc);
        if (!csv) throw std::runtime_error("evaluate: cannot write csv: " + csv_path);
        csv << "name,input_psnr,input_ssim,output_psnr,output_ssim\n";
        EvalRow mean;
        for (const auto& r : rows) {
            csv << r.name << ',' << detail::fmt_g(r.input_psnr) << ','
                << detail::fmt_g(r.input_ssim) << ',' << detail::fmt_g(r.output_psnr) << ','
                << detail::fmt_g(r.output_ssim) << "\n";
            mean.input_psnr += r.input_psnr;
            mean.input_ssim += r.input_ssim;
            mean.output_psnr += r.output_psnr;
            mean.output_ssim += r.output_ssim;
        }
        const auto n = static_cast<double>(rows.size());
        csv << "mean," << detail::fmt_g(mean.input_psnr / n) << ','
            << detail::fmt_g(mean.input_ssim / n) << ',' << detail::fmt_g(mean.output_psnr / n)
            << ',' << detail::fmt_g(mean.output_ssim / n) << "\n";
    }
    return rows;
}

struct BenchRow {
    std::string stage;
    double median_ms = 0, p95_ms = 0, mean_ms = 0;
};

// Per-stage latency of one derain pass on a random image. Three stages:
// kpn_forward, filtering (all dilated filters plus the fusion conv), and
// end_to_end. Median/p95 over the timed repetitions, warmup excluded.
template <typename T>
std::vector<BenchRow> benchmark_latency(const KpnConfig& kcfg, int h, int w, int warmup,
                                        int iters, std::uint64_t seed = 42) {
    check_kpn_config(kcfg);
    if (iters < 1)
        throw std::invalid_argument("benchmark: iters must be >= 1, got " +
                                    std::to_string(iters));
    Rng rng(seed);
    Tensor<T> input({1, kcfg.in_channels, h, w});
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = static_cast<T>(rng.uniform());
    const KpnParams<T> params = kpn_init<T>(kcfg, seed);

    std::vector<std::vector<double>> samples(3);
    using clock = std::chrono::steady_clock;
    volatile double sink = 0; // keep results alive
    for (int rep = -warmup; rep < iters; ++rep) {
        const auto t0 = clock::now();
        const KernelField<T> kernels = kpn_forward(input, params, kcfg);
        const auto t1 = clock::now();
        std::vector<Tensor<T>> filtered;
        for (int l : kcfg.dilations)
            filtered.push_back(pixel_wise_dilated_filter(input, kernels, l));
        const Tensor<T> fused = fuse_scales(filtered, params.fusion);
        const auto t2 = clock::now();
        sink = sink + static_cast<double>(fused[0]);
        if (rep < 0) continue;
        auto ms = [](clock::time_point a, clock::time_point b) {
            return std::chrono::duration<double, std::milli>(b - a).count();
        };
        samples[0].push_back(ms(t0, t1));
        samples[1].push_back(ms(t1, t2));
        samples[2].push_back(ms(t0, t2));
    }

    std::vector<BenchRow> rows;
    auto summarize = [&](const std::string& name, std::vector<double> xs) {
        std::sort(xs.begin(), xs.end());
        BenchRow r;
        r.stage = name;
        r.median_ms = xs[xs.size() / 2];
        r.p95_ms = xs[std::min(xs.size() - 1,
                               static_cast<std::size_t>(0.95 * static_cast<double>(xs.size())))];
        for (double x : xs) r.mean_ms += x;
        r.mean_ms /= static_cast<double>(xs.size());
        rows.push_back(r);
    };
    summarize("kpn_forward", samples[0]);
    summarize("filtering", samples[1]);
    summarize("end_to_end", samples[2]);
    return rows;
}

} // namespace edrain
