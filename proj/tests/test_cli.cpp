// End-to-end tests of the command-line binary: exit codes, seeded
// reproducibility, config-file handling, and the train / derain / eval /
// bench round trip. The binary path comes from the EDRAIN_CLI environment
// variable, falling back to the build-time location.
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "edrain/image_io.hpp"
#include "edrain/loss.hpp"
#include "edrain/rainmix.hpp"
#include "edrain/rng.hpp"
#include "edrain/tensor.hpp"

namespace fs = std::filesystem;
using edrain::Tensor;

namespace {

std::string cli_path() {
    if (const char* env = std::getenv("EDRAIN_CLI")) return env;
#ifdef EDRAIN_CLI_PATH
    return EDRAIN_CLI_PATH;
#else
    return "";
#endif
}

struct CmdResult {
    int code = -1;
    std::string out, err;
};

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) lines.push_back(line);
    return lines;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const std::string bin = cli_path();
        ASSERT_FALSE(bin.empty()) << "EDRAIN_CLI is not set and no build-time path is known";
        ASSERT_TRUE(fs::exists(bin)) << bin;
        dir_ = fs::temp_directory_path() /
               ("edrain_cli_" +
                std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

    CmdResult run(const std::string& args) {
        const std::string out = path("_stdout.txt"), err = path("_stderr.txt");
        const std::string cmd = cli_path() + " " + args + " >" + out + " 2>" + err;
        const int rc = std::system(cmd.c_str());
        CmdResult r;
        r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
        r.out = read_file(out);
        r.err = read_file(err);
        return r;
    }

    // writes pairs of rainy/clean PNGs the way a user-prepared dataset would
    // look: clean structure plus additive streaks, both already 8-bit
    void write_dataset(const std::string& rel, int pairs, int size, std::uint64_t seed) {
        edrain::Rng rng(seed);
        const auto streaks = edrain::generate_synthetic_streaks<double>(pairs, size, rng);
        fs::create_directories(path(rel + "/rainy"));
        fs::create_directories(path(rel + "/clean"));
        for (int i = 0; i < pairs; ++i) {
            Tensor<double> clean({3, size, size});
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        clean.at(c, y, x) =
                            0.15 + 0.55 * (x + y + c * 5.0) / (2.0 * size + 15) +
                            0.2 * ((x / 4 + y / 4) % 2);
            for (std::size_t j = 0; j < clean.size(); ++j)
                clean.data()[j] = std::min(1.0, std::max(0.0, clean.data()[j]));
            const Tensor<double> rainy = edrain::composite_rainy(clean, streaks.maps[i]);
            const std::string name = "pair_" + std::to_string(i) + ".png";
            edrain::save_image(path(rel + "/clean/" + name), clean);
            edrain::save_image(path(rel + "/rainy/" + name), rainy);
        }
    }

    // flags shared by every training invocation in this suite: small enough
    // that a run takes well under a second
    std::string tiny_train_flags() const {
        return " --iterations 6 --batch-size 2 --crop 16 --levels 2 --base-channels 4"
               " --kernel-width 3 --dilations 1,2 --checkpoint-interval 3 --precision double";
    }

    fs::path dir_;
};

bool files_equal(const std::string& a, const std::string& b) {
    return read_file(a) == read_file(b);
}

} // namespace

TEST_F(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run("").code, 1);                           // missing subcommand
    EXPECT_EQ(run("frobnicate").code, 1);                 // unknown subcommand
    EXPECT_EQ(run("derain a.png b.png --bogus").code, 1); // unknown flag
    EXPECT_EQ(run("train --out x.ck").code, 1);           // missing required --data
    EXPECT_EQ(run("gen-streaks").code, 1);                // missing required --out
    EXPECT_EQ(run("bench --precision half").code, 1);     // bad enum value
    EXPECT_EQ(run("train --data d --out x.ck --variant 9").code, 1); // out of range
}

TEST_F(Cli, HelpExitsZero) {
    EXPECT_EQ(run("--help").code, 0);
    const CmdResult r = run("train --help");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("--iterations"), std::string::npos);
    EXPECT_NE(r.out.find("--seed"), std::string::npos);
}

TEST_F(Cli, RuntimeErrorsExitTwo) {
    const CmdResult r1 = run("derain " + path("nope.png") + " " + path("out.png"));
    EXPECT_EQ(r1.code, 2);
    EXPECT_EQ(r1.err.substr(0, 7), "error: ");
    EXPECT_FALSE(fs::exists(path("out.png")));

    EXPECT_EQ(run("eval --data " + path("missing_dir")).code, 2);

    write_dataset("data", 1, 24, 1);
    EXPECT_EQ(run("train --data " + path("data") + " --out " + path("m.ck") +
                  tiny_train_flags() + " --resume " + path("absent.ck"))
                  .code,
              2);
    // rainmix on without any streak source is a runtime error, not a crash
    EXPECT_EQ(run("train --data " + path("data") + " --out " + path("m.ck") +
                  tiny_train_flags() + " --rainmix on")
                  .code,
              2);
}

TEST_F(Cli, GenStreaksIsSeedDeterministic) {
    ASSERT_EQ(run("gen-streaks --out " + path("a") + " --count 3 --size 32 --seed 5").code, 0);
    ASSERT_EQ(run("gen-streaks --out " + path("b") + " --count 3 --size 32 --seed 5").code, 0);
    ASSERT_EQ(run("gen-streaks --out " + path("c") + " --count 3 --size 32 --seed 6").code, 0);
    bool any_differs = false;
    for (int i = 0; i < 3; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "streak_%02d.png", i);
        ASSERT_TRUE(fs::exists(path("a/") + name));
        EXPECT_TRUE(files_equal(path("a/") + name, path("b/") + name)) << name;
        any_differs = any_differs || !files_equal(path("a/") + name, path("c/") + name);
    }
    EXPECT_TRUE(any_differs); // a different seed changes the maps
}

TEST_F(Cli, RainmixPreviewIsSeedDeterministic) {
    const std::string flags = " --count 2 --streak-count 3 --size 32";
    ASSERT_EQ(run("rainmix-preview " + path("a") + flags + " --seed 11").code, 0);
    ASSERT_EQ(run("rainmix-preview " + path("b") + flags + " --seed 11").code, 0);
    ASSERT_EQ(run("rainmix-preview " + path("c") + flags + " --seed 12").code, 0);
    bool any_differs = false;
    for (int i = 0; i < 2; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "preview_%02d.png", i);
        ASSERT_TRUE(fs::exists(path("a/") + name));
        EXPECT_TRUE(files_equal(path("a/") + name, path("b/") + name)) << name;
        any_differs = any_differs || !files_equal(path("a/") + name, path("c/") + name);
    }
    EXPECT_TRUE(any_differs);

    // previews can also draw from a directory of streak PNGs
    ASSERT_EQ(run("gen-streaks --out " + path("src") + " --count 3 --size 32 --seed 1").code, 0);
    EXPECT_EQ(run("rainmix-preview " + path("d") + " --streaks " + path("src") +
                  " --count 2 --seed 11")
                  .code,
              0);
    EXPECT_TRUE(fs::exists(path("d/preview_01.png")));
}

TEST_F(Cli, DerainWithoutCheckpointIsNearIdentity) {
    write_dataset("data", 1, 32, 3);
    const std::string in = path("data/rainy/pair_0.png");
    const CmdResult r = run("derain " + in + " " + path("out.png") + " --seed 4");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto a = edrain::load_image<double>(in);
    const auto b = edrain::load_image<double>(path("out.png"));
    ASSERT_EQ(b.dim(1), a.dim(1));
    ASSERT_EQ(b.dim(2), a.dim(2));
    EXPECT_GT(edrain::psnr(b, a), 25.0); // untrained model starts near identity
}

TEST_F(Cli, TrainDerainEvalBenchRoundTrip) {
    write_dataset("data", 3, 24, 7);
    const std::string ck = path("model.ck"), log = path("train.csv");
    const CmdResult tr = run("train --data " + path("data") + " --out " + ck + " --log " + log +
                             tiny_train_flags() + " --seed 9");
    ASSERT_EQ(tr.code, 0) << tr.err;
    ASSERT_TRUE(fs::exists(ck));
    const auto lines = read_lines(log);
    ASSERT_EQ(lines.size(), 15u + 1 + 6); // config echo, header, one row per iteration
    EXPECT_EQ(lines[0], "# levels=2");
    EXPECT_EQ(lines[14], "# precision=double");
    EXPECT_EQ(lines[15], "iteration,loss,psnr_holdout");
    EXPECT_EQ(lines[16].substr(0, 2), "1,");

    const std::string in = path("data/rainy/pair_1.png");
    const CmdResult dr = run("derain " + in + " " + path("derained.png") + " --checkpoint " + ck +
                             " --precision double");
    ASSERT_EQ(dr.code, 0) << dr.err;
    const auto orig = edrain::load_image<double>(in);
    const auto out = edrain::load_image<double>(path("derained.png"));
    EXPECT_EQ(out.dim(1), orig.dim(1));
    EXPECT_EQ(out.dim(2), orig.dim(2));

    const CmdResult ev = run("eval --data " + path("data") + " --checkpoint " + ck + " --csv " +
                             path("eval.csv") + " --export " + path("exp") +
                             " --precision double");
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto csv = read_lines(path("eval.csv"));
    ASSERT_EQ(csv.size(), 1u + 3 + 1);
    EXPECT_EQ(csv[0], "name,input_psnr,input_ssim,output_psnr,output_ssim");
    EXPECT_EQ(csv[4].substr(0, 5), "mean,");
    for (int i = 0; i < 3; ++i)
        EXPECT_TRUE(fs::exists(path("exp/pair_" + std::to_string(i) + ".png")));
    EXPECT_NE(ev.out.find("mean"), std::string::npos);

    const CmdResult be = run("bench --checkpoint " + ck +
                             " --height 16 --width 16 --iters 3 --warmup 1 --precision double");
    ASSERT_EQ(be.code, 0) << be.err;
    EXPECT_NE(be.out.find("stage,median_ms,p95_ms,mean_ms"), std::string::npos);
    EXPECT_NE(be.out.find("kpn_forward,"), std::string::npos);
    EXPECT_NE(be.out.find("filtering,"), std::string::npos);
    EXPECT_NE(be.out.find("end_to_end,"), std::string::npos);
    EXPECT_NE(be.out.find("# filtering_delta_ms="), std::string::npos);
}

TEST_F(Cli, TrainIsSeedReproducible) {
    write_dataset("data", 2, 24, 13);
    const std::string base = "train --data " + path("data") + tiny_train_flags();
    ASSERT_EQ(run(base + " --out " + path("a.ck") + " --log " + path("a.csv") + " --seed 5").code,
              0);
    ASSERT_EQ(run(base + " --out " + path("b.ck") + " --log " + path("b.csv") + " --seed 5").code,
              0);
    ASSERT_EQ(run(base + " --out " + path("c.ck") + " --log " + path("c.csv") + " --seed 6").code,
              0);
    EXPECT_TRUE(files_equal(path("a.csv"), path("b.csv")));
    EXPECT_TRUE(files_equal(path("a.ck"), path("b.ck")));
    // same data, different seed: the loss trace moves
    EXPECT_NE(read_lines(path("a.csv"))[16], read_lines(path("c.csv"))[16]);
}

TEST_F(Cli, VariantPresetsAreEchoed) {
    write_dataset("data", 2, 24, 17);
    ASSERT_EQ(run("gen-streaks --out " + path("strk") + " --count 3 --size 24 --seed 2").code, 0);
    const char* expected[4][3] = {
        {"# dilations=1", "# ssim_enabled=0", "# rainmix_enabled=0"},
        {"# dilations=1,2,3,4", "# ssim_enabled=0", "# rainmix_enabled=0"},
        {"# dilations=1,2,3,4", "# ssim_enabled=1", "# rainmix_enabled=0"},
        {"# dilations=1,2,3,4", "# ssim_enabled=1", "# rainmix_enabled=1"},
    };
    for (int v = 1; v <= 4; ++v) {
        const std::string log = path("v" + std::to_string(v) + ".csv");
        // preset first, then the size-reducing flags override on top
        std::string cmd = "train --data " + path("data") + " --out " +
                          path("v" + std::to_string(v) + ".ck") + " --log " + log +
                          " --variant " + std::to_string(v) +
                          " --iterations 2 --batch-size 2 --crop 16 --levels 2"
                          " --base-channels 4 --kernel-width 3 --checkpoint-interval 2"
                          " --precision double --seed 1 --streaks " + path("strk");
        const CmdResult r = run(cmd);
        ASSERT_EQ(r.code, 0) << "variant " << v << ": " << r.err;
        const auto lines = read_lines(log);
        EXPECT_EQ(lines[3], expected[v - 1][0]) << v;
        EXPECT_EQ(lines[6], expected[v - 1][1]) << v;
        EXPECT_EQ(lines[7], expected[v - 1][2]) << v;
    }
}

TEST_F(Cli, ConfigFileIsReadAndFlagsOverride) {
    write_dataset("data", 1, 24, 19);
    {
        std::ofstream cfg(path("run.cfg"));
        cfg << "iterations=4\n"
            << "batch-size=2\n"
            << "crop=16\n"
            << "levels=2\n"
            << "base-channels=4\n"
            << "kernel-width=3\n"
            << "checkpoint-interval=2\n"
            << "ssim-loss=off\n"
            << "precision=double\n"
            << "seed=3\n";
    }
    const CmdResult r = run("train --config " + path("run.cfg") + " --data " + path("data") +
                            " --out " + path("m.ck") + " --log " + path("m.csv") +
                            " --dilations 1,2 --iterations 6");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto lines = read_lines(path("m.csv"));
    EXPECT_EQ(lines[8], "# iterations=6"); // flag wins over the file
    EXPECT_EQ(lines[11], "# crop=16");     // file value applies
    EXPECT_EQ(lines[6], "# ssim_enabled=0");
    EXPECT_EQ(lines[1], "# base_channels=4");
    EXPECT_EQ(lines[14], "# precision=double");
    EXPECT_EQ(lines.size(), 15u + 1 + 6);
}

TEST_F(Cli, FloatPrecisionIsEchoedAndTrains) {
    write_dataset("data", 1, 24, 23);
    const CmdResult r = run("train --data " + path("data") + " --out " + path("f.ck") +
                            " --log " + path("f.csv") +
                            " --iterations 2 --batch-size 2 --crop 16 --levels 2"
                            " --base-channels 4 --kernel-width 3 --dilations 1,2"
                            " --checkpoint-interval 2 --seed 1 --precision float");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_lines(path("f.csv"))[14], "# precision=float");
    // a float checkpoint loads back through derain
    EXPECT_EQ(run("derain " + path("data/rainy/pair_0.png") + " " + path("o.png") +
                  " --checkpoint " + path("f.ck") + " --precision float")
                  .code,
              0);
}

TEST_F(Cli, BenchWithoutCheckpointUsesFlags) {
    const CmdResult r = run("bench --height 16 --width 16 --iters 3 --warmup 1 --levels 2"
                            " --base-channels 4 --kernel-width 3 --dilations 1,2 --seed 3");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("kpn_forward,"), std::string::npos);
    EXPECT_NE(r.out.find("# size=16x16"), std::string::npos);
    EXPECT_NE(r.out.find("dilations=1,2"), std::string::npos);
}
