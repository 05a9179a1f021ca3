// Command-line front end: train, derain, eval, rainmix-preview, bench,
// gen-streaks. Exit codes: 0 success, 1 usage error, 2 runtime error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "edrain/checkpoint.hpp"
#include "edrain/dataset.hpp"
#include "edrain/image_io.hpp"
#include "edrain/kpn.hpp"
#include "edrain/rainmix.hpp"
#include "edrain/train.hpp"

namespace {

struct CommonArgs {
    std::string precision = "float";
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& c) {
    cmd->add_option("--precision", c.precision, "Arithmetic precision")
        ->check(CLI::IsMember({"float", "double"}))
        ->capture_default_str();
    cmd->add_option("--threads", c.threads, "OpenMP thread count (0 = runtime default)")
        ->check(CLI::NonNegativeNumber);
}

// CLI11 only processes a config file attached to the app parse() ran on, so a
// subcommand-level one is applied by hand: each key fills the matching long
// option unless the command line already set it.
void apply_config_file(CLI::App* cmd, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw CLI::FileError::Missing(path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
        };
        const std::string text = strip(line);
        if (text.empty() || text.front() == '#') continue;
        const auto at = path + ":" + std::to_string(lineno);
        const auto eq = text.find('=');
        if (eq == std::string::npos || eq == 0)
            throw CLI::ConfigError("expected key=value at " + at + ": " + text);
        const std::string key = strip(text.substr(0, eq));
        const std::string value = strip(text.substr(eq + 1));
        CLI::Option* op = key == "config" ? nullptr : cmd->get_option_no_throw("--" + key);
        if (!op) throw CLI::ConfigError("unknown config key '" + key + "' at " + at);
        if (op->count() > 0) continue; // command-line flags win
        op->add_result(value);
        op->run_callback(); // converts and validates like a parsed flag
    }
}

void apply_threads(const CommonArgs& c) {
#ifdef _OPENMP
    if (c.threads > 0) {
        omp_set_num_threads(c.threads);
    } else if (const char* env = std::getenv("EDRAIN_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#else
    (void)c;
#endif
}

template <typename F>
int with_precision(const std::string& precision, F&& f) {
    if (precision == "double") return f(double{});
    return f(float{});
}

std::vector<int> parse_dilations(const std::string& s) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string tok =
            s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            std::size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            out.push_back(v);
        } catch (const std::exception&) {
            throw std::invalid_argument("dilations: expected comma-separated integers, got '" +
                                        s + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

template <typename T>
edrain::Tensor<T> map_to_image(const edrain::RainMap<T>& map) {
    edrain::Tensor<T> img({1, map.dim(0), map.dim(1)});
    std::copy_n(map.data(), map.size(), img.data());
    return img;
}

struct TrainArgs {
    CommonArgs common;
    std::string data_dir, streaks_dir, out_path, log_path, resume_path, config_path;
    int variant = 0;
    int iterations = 2000, batch_size = 4, crop = 64, checkpoint_interval = 500;
    int levels = 3, base_channels = 32, kernel_width = 5;
    double lr = 1e-3, lambda = 0.2;
    std::string dilations = "1,2,3,4", ssim_loss = "on", rainmix = "off",
                normalize_kernels = "off";
    std::uint64_t seed = 0;
    bool verbose = false;

    CLI::Option *o_variant = nullptr, *o_iterations = nullptr, *o_batch = nullptr,
                *o_crop = nullptr, *o_interval = nullptr, *o_levels = nullptr,
                *o_base = nullptr, *o_kw = nullptr, *o_lr = nullptr, *o_lambda = nullptr,
                *o_dil = nullptr, *o_ssim = nullptr, *o_rainmix = nullptr, *o_norm = nullptr,
                *o_seed = nullptr;
};

edrain::TrainConfig build_train_config(const TrainArgs& a) {
    edrain::TrainConfig cfg;
    if (a.o_variant->count()) cfg = edrain::apply_variant(cfg, a.variant);
    if (a.o_iterations->count()) cfg.iterations = a.iterations;
    if (a.o_batch->count()) cfg.batch_size = a.batch_size;
    if (a.o_crop->count()) cfg.crop = a.crop;
    if (a.o_interval->count()) cfg.checkpoint_interval = a.checkpoint_interval;
    if (a.o_levels->count()) cfg.levels = a.levels;
    if (a.o_base->count()) cfg.base_channels = a.base_channels;
    if (a.o_kw->count()) cfg.kernel_width = a.kernel_width;
    if (a.o_lr->count()) cfg.lr = a.lr;
    if (a.o_lambda->count()) cfg.lambda = a.lambda;
    if (a.o_dil->count()) cfg.dilations = parse_dilations(a.dilations);
    if (a.o_ssim->count()) cfg.ssim_enabled = a.ssim_loss == "on";
    if (a.o_rainmix->count()) cfg.rainmix_enabled = a.rainmix == "on";
    if (a.o_norm->count()) cfg.normalize_kernels = a.normalize_kernels == "on";
    if (a.o_seed->count()) cfg.seed = a.seed;
    return cfg;
}

template <typename T>
int run_train(const TrainArgs& a) {
    const edrain::TrainConfig cfg = build_train_config(a);
    const auto index = edrain::build_dataset_index(a.data_dir + "/rainy", a.data_dir + "/clean");
    const auto data = edrain::load_dataset<T>(index);

    edrain::RainStreakSet<T> streaks;
    if (!a.streaks_dir.empty()) streaks = edrain::load_streak_directory<T>(a.streaks_dir);

    edrain::Checkpoint<T> resume;
    const bool resuming = !a.resume_path.empty();
    if (resuming) resume = edrain::load_checkpoint<T>(a.resume_path);

    const std::string log_path = a.log_path.empty() ? a.out_path + ".log.csv" : a.log_path;
    const auto result = edrain::train<T>(cfg, data, streaks.maps.empty() ? nullptr : &streaks,
                                         a.out_path, log_path, resuming ? &resume : nullptr,
                                         a.verbose ? &std::cout : nullptr);
    std::cout << "trained " << cfg.iterations << " iterations, final loss "
              << edrain::detail::fmt_g(result.final_loss) << ", holdout psnr "
              << edrain::detail::fmt_g(result.final_holdout_psnr) << " dB\n"
              << "checkpoint: " << a.out_path << "\nlog: " << log_path << "\n";
    return 0;
}

struct DerainArgs {
    CommonArgs common;
    std::string input, output, checkpoint;
    std::uint64_t seed = 0;
};

template <typename T>
int run_derain(const DerainArgs& a) {
    const edrain::Tensor<T> img = edrain::load_image<T>(a.input);
    edrain::KpnConfig kcfg;
    edrain::KpnParams<T> params;
    if (!a.checkpoint.empty()) {
        auto ck = edrain::load_checkpoint<T>(a.checkpoint);
        kcfg = ck.config;
        params = std::move(ck.params);
    } else {
        kcfg.in_channels = img.dim(0);
        params = edrain::kpn_init<T>(kcfg, a.seed);
    }
    if (img.dim(0) != kcfg.in_channels)
        throw std::invalid_argument("derain: image has " + std::to_string(img.dim(0)) +
                                    " channels but the model expects " +
                                    std::to_string(kcfg.in_channels));
    const int h = img.dim(1), w = img.dim(2);
    const int div = 1 << (kcfg.levels - 1);
    const edrain::Tensor<T> padded = edrain::pad_to_multiple(img, div);
    const edrain::Tensor<T> batch = edrain::detail::as_batch(padded);
    const edrain::Tensor<T> out4 = edrain::derain(batch, params, kcfg);
    const edrain::Tensor<T> out =
        edrain::crop_image(edrain::detail::from_batch(out4, 0, padded.dim(1), padded.dim(2)),
                           0, 0, h, w);
    edrain::save_image(a.output, out);
    std::cout << "derained " << a.input << " -> " << a.output << " (" << w << "x" << h << ")\n";
    return 0;
}

struct EvalArgs {
    CommonArgs common;
    std::string data_dir, checkpoint, csv_path, export_dir;
    std::uint64_t seed = 0;
};

template <typename T>
int run_eval(const EvalArgs& a) {
    const auto index = edrain::build_dataset_index(a.data_dir + "/rainy", a.data_dir + "/clean");
    const auto data = edrain::load_dataset<T>(index);
    edrain::KpnConfig kcfg;
    edrain::KpnParams<T> params;
    bool have_params = false;
    if (!a.checkpoint.empty()) {
        auto ck = edrain::load_checkpoint<T>(a.checkpoint);
        kcfg = ck.config;
        params = std::move(ck.params);
        have_params = true;
        if (data.rainy.front().dim(0) != kcfg.in_channels)
            throw std::invalid_argument(
                "eval: dataset has " + std::to_string(data.rainy.front().dim(0)) +
                "-channel images but the model expects " + std::to_string(kcfg.in_channels));
    } else {
        kcfg.in_channels = data.rainy.front().dim(0);
    }
    if (!a.export_dir.empty()) std::filesystem::create_directories(a.export_dir);
    const auto rows = edrain::evaluate<T>(data, have_params ? &params : nullptr, kcfg,
                                          a.export_dir, a.csv_path);
    std::printf("%-24s %12s %12s %12s %12s\n", "name", "in_psnr", "in_ssim", "out_psnr",
                "out_ssim");
    edrain::EvalRow mean;
    for (const auto& r : rows) {
        std::printf("%-24s %12.4f %12.6f %12.4f %12.6f\n", r.name.c_str(), r.input_psnr,
                    r.input_ssim, r.output_psnr, r.output_ssim);
        mean.input_psnr += r.input_psnr;
        mean.input_ssim += r.input_ssim;
        mean.output_psnr += r.output_psnr;
        mean.output_ssim += r.output_ssim;
    }
    const auto n = static_cast<double>(rows.size());
    std::printf("%-24s %12.4f %12.6f %12.4f %12.6f\n", "mean", mean.input_psnr / n,
                mean.input_ssim / n, mean.output_psnr / n, mean.output_ssim / n);
    if (!a.csv_path.empty()) std::cout << "csv: " << a.csv_path << "\n";
    return 0;
}

struct PreviewArgs {
    CommonArgs common;
    std::string out_dir, streaks_dir;
    int count = 8, streak_count = 8, size = 128;
    std::uint64_t seed = 0;
};

template <typename T>
int run_preview(const PreviewArgs& a) {
    edrain::Rng rng(a.seed);
    edrain::RainStreakSet<T> streaks;
    if (a.streaks_dir.empty())
        streaks = edrain::generate_synthetic_streaks<T>(a.streak_count, a.size, rng);
    else
        streaks = edrain::load_streak_directory<T>(a.streaks_dir);
    std::filesystem::create_directories(a.out_dir);
    const edrain::RainMixConfig<T> mix_cfg;
    for (int i = 0; i < a.count; ++i) {
        const edrain::RainMap<T> mixed = edrain::rain_mix<T>(streaks, rng, mix_cfg);
        char name[32];
        std::snprintf(name, sizeof(name), "preview_%02d.png", i);
        edrain::save_image((std::filesystem::path(a.out_dir) / name).string(),
                           map_to_image(mixed));
    }
    std::cout << "wrote " << a.count << " previews to " << a.out_dir << "\n";
    return 0;
}

struct BenchArgs {
    CommonArgs common;
    std::string checkpoint, dilations = "1,2,3,4";
    int height = 128, width = 128, iters = 50, warmup = 5;
    int levels = 3, base_channels = 32, kernel_width = 5;
    std::uint64_t seed = 42;
};

template <typename T>
int run_bench(const BenchArgs& a) {
    edrain::KpnConfig kcfg;
    if (!a.checkpoint.empty()) {
        kcfg = edrain::load_checkpoint<T>(a.checkpoint).config;
    } else {
        kcfg.levels = a.levels;
        kcfg.base_channels = a.base_channels;
        kcfg.kernel_width = a.kernel_width;
        kcfg.dilations = parse_dilations(a.dilations);
    }
    const auto rows =
        edrain::benchmark_latency<T>(kcfg, a.height, a.width, a.warmup, a.iters, a.seed);
    std::cout << "stage,median_ms,p95_ms,mean_ms\n";
    for (const auto& r : rows)
        std::cout << r.stage << ',' << edrain::detail::fmt_g(r.median_ms) << ','
                  << edrain::detail::fmt_g(r.p95_ms) << ',' << edrain::detail::fmt_g(r.mean_ms)
                  << "\n";
    std::cout << "# size=" << a.width << "x" << a.height << " iters=" << a.iters
              << " warmup=" << a.warmup << " dilations=" << edrain::detail::join_ints(kcfg.dilations)
              << " precision=" << a.common.precision << "\n"
              << "# filtering_delta_ms=" << edrain::detail::fmt_g(rows[2].median_ms -
                                                                  rows[0].median_ms)
              << "\n";
    return 0;
}

struct GenStreaksArgs {
    CommonArgs common;
    std::string out_dir;
    int count = 16, size = 128;
    std::uint64_t seed = 0;
};

template <typename T>
int run_gen_streaks(const GenStreaksArgs& a) {
    edrain::Rng rng(a.seed);
    const auto set = edrain::generate_synthetic_streaks<T>(a.count, a.size, rng);
    std::filesystem::create_directories(a.out_dir);
    for (std::size_t i = 0; i < set.maps.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "streak_%02zu.png", i);
        edrain::save_image((std::filesystem::path(a.out_dir) / name).string(),
                           map_to_image(set.maps[i]));
    }
    std::cout << "wrote " << set.maps.size() << " streak maps to " << a.out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-image deraining: kernel-prediction network with pixel-wise dilated "
                 "filtering"};
    app.require_subcommand(1);

    TrainArgs train_a;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a model on rainy/clean image pairs");
    train_cmd->add_option("--config", train_a.config_path,
                          "Line-oriented key=value config file; flags override");
    train_cmd->add_option("--data", train_a.data_dir,
                          "Dataset directory holding rainy/ and clean/ subdirectories")
        ->required();
    train_cmd->add_option("--out", train_a.out_path, "Checkpoint output path")->required();
    train_cmd->add_option("--log", train_a.log_path, "Metrics CSV path (default <out>.log.csv)");
    train_cmd->add_option("--streaks", train_a.streaks_dir,
                          "Directory of rain-streak PNGs for augmentation");
    train_cmd->add_option("--resume", train_a.resume_path, "Resume from an existing checkpoint");
    train_a.o_variant = train_cmd->add_option("--variant", train_a.variant,
                                              "Ablation preset 1-4")
                            ->check(CLI::Range(1, 4));
    train_a.o_iterations =
        train_cmd->add_option("--iterations", train_a.iterations, "Adam steps to run")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
    train_a.o_batch = train_cmd->add_option("--batch-size", train_a.batch_size, "Crops per step")
                          ->check(CLI::PositiveNumber)
                          ->capture_default_str();
    train_a.o_crop = train_cmd->add_option("--crop", train_a.crop, "Training crop size")
                         ->check(CLI::PositiveNumber)
                         ->capture_default_str();
    train_a.o_interval = train_cmd
                             ->add_option("--checkpoint-interval", train_a.checkpoint_interval,
                                          "Iterations between checkpoints")
                             ->check(CLI::PositiveNumber)
                             ->capture_default_str();
    train_a.o_levels = train_cmd->add_option("--levels", train_a.levels, "Encoder depth")
                           ->check(CLI::PositiveNumber)
                           ->capture_default_str();
    train_a.o_base = train_cmd
                         ->add_option("--base-channels", train_a.base_channels,
                                      "Channels of the first encoder level")
                         ->check(CLI::PositiveNumber)
                         ->capture_default_str();
    train_a.o_kw = train_cmd
                       ->add_option("--kernel-width", train_a.kernel_width,
                                    "Predicted per-pixel kernel width (odd)")
                       ->check(CLI::PositiveNumber)
                       ->capture_default_str();
    train_a.o_lr = train_cmd->add_option("--lr", train_a.lr, "Adam learning rate")
                       ->capture_default_str();
    train_a.o_lambda =
        train_cmd->add_option("--lambda", train_a.lambda, "Structural-term weight in the loss")
            ->capture_default_str();
    train_a.o_dil = train_cmd
                        ->add_option("--dilations", train_a.dilations,
                                     "Comma-separated dilation factors")
                        ->capture_default_str();
    train_a.o_ssim = train_cmd->add_option("--ssim-loss", train_a.ssim_loss,
                                           "Include the structural term in the loss")
                         ->check(CLI::IsMember({"on", "off"}))
                         ->capture_default_str();
    train_a.o_rainmix = train_cmd->add_option("--rainmix", train_a.rainmix,
                                              "Augment with mixed rain maps")
                            ->check(CLI::IsMember({"on", "off"}))
                            ->capture_default_str();
    train_a.o_norm = train_cmd->add_option("--normalize-kernels", train_a.normalize_kernels,
                                           "Softmax-normalize predicted kernels")
                         ->check(CLI::IsMember({"on", "off"}))
                         ->capture_default_str();
    train_a.o_seed = train_cmd->add_option("--seed", train_a.seed, "Master RNG seed")
                         ->capture_default_str();
    train_cmd->add_flag("--verbose", train_a.verbose, "Print progress to stdout");
    add_common(train_cmd, train_a.common);

    DerainArgs derain_a;
    CLI::App* derain_cmd = app.add_subcommand("derain", "Remove rain from a single PNG");
    derain_cmd->add_option("input", derain_a.input, "Input PNG")->required();
    derain_cmd->add_option("output", derain_a.output, "Output PNG")->required();
    derain_cmd->add_option("--checkpoint", derain_a.checkpoint,
                           "Trained checkpoint (default: untrained identity-start model)");
    derain_cmd->add_option("--seed", derain_a.seed, "Seed for the untrained model")
        ->capture_default_str();
    add_common(derain_cmd, derain_a.common);

    EvalArgs eval_a;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Report PSNR/SSIM over a dataset");
    eval_cmd->add_option("--data", eval_a.data_dir,
                         "Dataset directory holding rainy/ and clean/ subdirectories")
        ->required();
    eval_cmd->add_option("--checkpoint", eval_a.checkpoint,
                         "Trained checkpoint (default: pass-through input)");
    eval_cmd->add_option("--csv", eval_a.csv_path, "Write per-image metrics CSV here");
    eval_cmd->add_option("--export", eval_a.export_dir, "Write derained PNGs here");
    eval_cmd->add_option("--seed", eval_a.seed,
                         "Accepted for interface symmetry; evaluation is deterministic")
        ->capture_default_str();
    add_common(eval_cmd, eval_a.common);

    PreviewArgs preview_a;
    CLI::App* preview_cmd =
        app.add_subcommand("rainmix-preview", "Write sample augmented rain maps");
    preview_cmd->add_option("out_dir", preview_a.out_dir, "Output directory")->required();
    preview_cmd->add_option("--streaks", preview_a.streaks_dir,
                            "Streak PNG directory (default: synthetic streaks)");
    preview_cmd->add_option("--count", preview_a.count, "Previews to write")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    preview_cmd->add_option("--streak-count", preview_a.streak_count,
                            "Synthetic source maps to generate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    preview_cmd->add_option("--size", preview_a.size, "Synthetic map size in pixels")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    preview_cmd->add_option("--seed", preview_a.seed, "RNG seed")->capture_default_str();
    add_common(preview_cmd, preview_a.common);

    BenchArgs bench_a;
    CLI::App* bench_cmd = app.add_subcommand("bench", "Measure per-stage latency");
    bench_cmd->add_option("--checkpoint", bench_a.checkpoint,
                          "Take the model configuration from this checkpoint");
    bench_cmd->add_option("--height", bench_a.height, "Image height")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench_cmd->add_option("--width", bench_a.width, "Image width")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench_cmd->add_option("--iters", bench_a.iters, "Timed repetitions")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    bench_cmd->add_option("--warmup", bench_a.warmup, "Untimed warmup repetitions")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    bench_cmd->add_option("--levels", bench_a.levels, "Encoder depth")->capture_default_str();
    bench_cmd->add_option("--base-channels", bench_a.base_channels,
                          "Channels of the first encoder level")
        ->capture_default_str();
    bench_cmd->add_option("--kernel-width", bench_a.kernel_width, "Per-pixel kernel width")
        ->capture_default_str();
    bench_cmd->add_option("--dilations", bench_a.dilations, "Comma-separated dilation factors")
        ->capture_default_str();
    bench_cmd->add_option("--seed", bench_a.seed, "Seed for weights and the probe image")
        ->capture_default_str();
    add_common(bench_cmd, bench_a.common);

    GenStreaksArgs gen_a;
    CLI::App* gen_cmd = app.add_subcommand("gen-streaks", "Write synthetic rain-streak PNGs");
    gen_cmd->add_option("--out", gen_a.out_dir, "Output directory")->required();
    gen_cmd->add_option("--count", gen_a.count, "Maps to generate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen_cmd->add_option("--size", gen_a.size, "Map size in pixels")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen_cmd->add_option("--seed", gen_a.seed, "RNG seed")->capture_default_str();
    add_common(gen_cmd, gen_a.common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    if (*train_cmd && !train_a.config_path.empty()) {
        try {
            apply_config_file(train_cmd, train_a.config_path);
        } catch (const CLI::ParseError& e) {
            const int rc = app.exit(e);
            return rc == 0 ? 0 : 1;
        }
    }

    try {
        if (*train_cmd) {
            apply_threads(train_a.common);
            return with_precision(train_a.common.precision,
                                  [&](auto tag) { return run_train<decltype(tag)>(train_a); });
        }
        if (*derain_cmd) {
            apply_threads(derain_a.common);
            return with_precision(derain_a.common.precision,
                                  [&](auto tag) { return run_derain<decltype(tag)>(derain_a); });
        }
        if (*eval_cmd) {
            apply_threads(eval_a.common);
            return with_precision(eval_a.common.precision,
                                  [&](auto tag) { return run_eval<decltype(tag)>(eval_a); });
        }
        if (*preview_cmd) {
            apply_threads(preview_a.common);
            return with_precision(preview_a.common.precision, [&](auto tag) {
                return run_preview<decltype(tag)>(preview_a);
            });
        }
        if (*bench_cmd) {
            apply_threads(bench_a.common);
            return with_precision(bench_a.common.precision,
                                  [&](auto tag) { return run_bench<decltype(tag)>(bench_a); });
        }
        if (*gen_cmd) {
            apply_threads(gen_a.common);
            return with_precision(gen_a.common.precision, [&](auto tag) {
                return run_gen_streaks<decltype(tag)>(gen_a);
            });
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
