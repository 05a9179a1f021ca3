#include <gtest/gtest.h>

#include <cstring>
#include <span>
#include <vector>

#include "edrain/rainmix.hpp"
#include "edrain/rng.hpp"

using edrain::GeometricOp;
using edrain::GeomKind;
using edrain::MixDraw;
using edrain::RainMap;
using edrain::RainMixConfig;
using edrain::RainStreakSet;
using edrain::Rng;
using edrain::Tensor;

namespace {

RainMap<double> random_map(int h, int w, Rng& rng) {
    RainMap<double> m({h, w});
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform();
    return m;
}

RainStreakSet<double> random_set(int count, int size, Rng& rng) {
    RainStreakSet<double> s;
    for (int i = 0; i < count; ++i) {
        s.maps.push_back(random_map(size, size, rng));
        s.names.push_back("m" + std::to_string(i));
    }
    return s;
}

// delegates to the real sampler but pins the final blend weight
struct ForcedBlendSampler {
    edrain::RngMixSampler<double> base;
    double forced_blend;
    std::size_t pick_index(std::size_t n) { return base.pick_index(n); }
    double uniform(double lo, double hi) { return base.uniform(lo, hi); }
    void dirichlet(std::span<const double> a, std::span<double> o) { base.dirichlet(a, o); }
    double beta(double, double) { return forced_blend; }
};

// records which draw kinds happen, in order
struct RecordingSampler {
    edrain::RngMixSampler<double> base;
    std::string tags;
    std::size_t pick_index(std::size_t n) {
        tags += 'i';
        return base.pick_index(n);
    }
    double uniform(double lo, double hi) {
        tags += 'u';
        return base.uniform(lo, hi);
    }
    void dirichlet(std::span<const double> a, std::span<double> o) {
        tags += 'd';
        base.dirichlet(a, o);
    }
    double beta(double a, double b) {
        tags += 'b';
        return base.beta(a, b);
    }
};

} // namespace

TEST(Geometric, IdentityMagnitudesAreBitExact) {
    Rng rng(157);
    const RainMap<double> m = random_map(9, 7, rng);
    const std::vector<GeometricOp<double>> chain{
        {GeomKind::rotate, 0.0},      {GeomKind::shear_x, 0.0},  {GeomKind::shear_y, 0.0},
        {GeomKind::translate_x, 0.0}, {GeomKind::zoom_x, 1.0},   {GeomKind::zoom_y, 1.0},
    };
    const RainMap<double> out = edrain::apply_geometric_op(m, chain);
    ASSERT_EQ(0, std::memcmp(out.data(), m.data(), m.size() * sizeof(double)));

    const std::vector<GeometricOp<double>> empty;
    const RainMap<double> copy = edrain::apply_geometric_op(m, empty);
    ASSERT_EQ(0, std::memcmp(copy.data(), m.data(), m.size() * sizeof(double)));
}

TEST(Geometric, QuarterRotationMatchesIndexOracle) {
    Rng rng(163);
    const RainMap<double> m = random_map(5, 5, rng);
    const std::vector<GeometricOp<double>> chain{{GeomKind::rotate, 90.0}};
    const RainMap<double> out = edrain::apply_geometric_op(m, chain);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x)
            ASSERT_NEAR(out.at(y, x), m.at(4 - x, y), 1e-12) << y << "," << x;
}

TEST(Geometric, WholePixelTranslationIsExact) {
    Rng rng(167);
    const RainMap<double> m = random_map(10, 10, rng);
    // 0.2 of the 10-pixel width = exactly +2 columns, zero-filled on entry
    const std::vector<GeometricOp<double>> chain{{GeomKind::translate_x, 0.2}};
    const RainMap<double> out = edrain::apply_geometric_op(m, chain);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x)
            ASSERT_EQ(out.at(y, x), x >= 2 ? m.at(y, x - 2) : 0.0) << y << "," << x;
}

TEST(Geometric, ChainComposesFirstOpFirst) {
    Rng rng(173);
    const RainMap<double> m = random_map(5, 5, rng);
    // translate +2 px, then rotate 90 degrees: dest (y,x) pulls from
    // (4-x, y-2); the reversed order would pull from (6-x, y) instead
    const std::vector<GeometricOp<double>> chain{{GeomKind::translate_x, 0.4},
                                                 {GeomKind::rotate, 90.0}};
    const RainMap<double> out = edrain::apply_geometric_op(m, chain);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            const int sy = 4 - x, sx = y - 2;
            const double want =
                (sy >= 0 && sy < 5 && sx >= 0 && sx < 5) ? m.at(sy, sx) : 0.0;
            ASSERT_NEAR(out.at(y, x), want, 1e-12) << y << "," << x;
        }
}

TEST(Geometric, DegenerateAffineThrows) {
    Rng rng(179);
    const RainMap<double> m = random_map(6, 6, rng);
    const std::vector<GeometricOp<double>> flat{{GeomKind::zoom_x, 0.0}};
    EXPECT_THROW(edrain::apply_geometric_op(m, flat), std::invalid_argument);
    Tensor<double> not2d({1, 6, 6});
    const std::vector<GeometricOp<double>> ok{{GeomKind::rotate, 10.0}};
    EXPECT_THROW(edrain::apply_geometric_op(not2d, ok), std::invalid_argument);
}

TEST(RainMix, DrawOrderIsPinned) {
    Rng rng(181);
    const RainStreakSet<double> set = random_set(3, 8, rng);
    RecordingSampler s{{rng}, ""};
    MixDraw<double> draw;
    edrain::rain_mix(set, s, RainMixConfig<double>{}, &draw);
    // streak index, dirichlet, then per branch three (kind, magnitude) pairs
    // and a chain length, finally the blend weight
    EXPECT_EQ(s.tags, "id" + std::string("iuiuiui") + "iuiuiui" + "iuiuiui" + "iuiuiui" + "b");
    for (const auto& chain : draw.chains) {
        EXPECT_GE(chain.size(), 1u);
        EXPECT_LE(chain.size(), 3u);
    }
}

TEST(RainMix, DirichletWeightsSumToOne) {
    Rng rng(191);
    const RainStreakSet<double> set = random_set(2, 8, rng);
    for (int trial = 0; trial < 50; ++trial) {
        MixDraw<double> draw;
        edrain::rain_mix(set, rng, RainMixConfig<double>{}, &draw);
        double s = 0;
        for (double w : draw.weights) {
            EXPECT_GE(w, 0.0);
            s += w;
        }
        ASSERT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(RainMix, WeightMeansApproachQuarter) {
    Rng rng(193);
    const RainStreakSet<double> set = random_set(1, 8, rng);
    std::array<double, 4> mean{};
    const int n = 2000;
    for (int trial = 0; trial < n; ++trial) {
        MixDraw<double> draw;
        edrain::rain_mix(set, rng, RainMixConfig<double>{}, &draw);
        for (int i = 0; i < 4; ++i) mean[i] += draw.weights[i];
    }
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(mean[i] / n, 0.25, 0.02) << i;
}

TEST(RainMix, IdentityConfigReturnsOriginalBitExact) {
    Rng rng(197);
    const RainStreakSet<double> set = random_set(4, 12, rng);
    RainMixConfig<double> cfg;
    cfg.rot_deg = 0;
    cfg.shear = 0;
    cfg.trans_frac = 0;
    cfg.zoom_min = cfg.zoom_max = 1.0;
    for (int trial = 0; trial < 10; ++trial) {
        MixDraw<double> draw;
        const RainMap<double> out = edrain::rain_mix(set, rng, cfg, &draw);
        const RainMap<double>& org = set.maps[draw.streak_index];
        ASSERT_EQ(0, std::memcmp(out.data(), org.data(), org.size() * sizeof(double)));
    }
}

TEST(RainMix, FullBlendWeightReturnsOriginalBitExact) {
    Rng rng(199);
    const RainStreakSet<double> set = random_set(4, 12, rng);
    ForcedBlendSampler s{{rng}, 1.0};
    for (int trial = 0; trial < 10; ++trial) {
        MixDraw<double> draw;
        const RainMap<double> out = edrain::rain_mix(set, s, RainMixConfig<double>{}, &draw);
        const RainMap<double>& org = set.maps[draw.streak_index];
        ASSERT_EQ(0, std::memcmp(out.data(), org.data(), org.size() * sizeof(double)));
    }
}

TEST(RainMix, SeededSequenceIsReproducible) {
    Rng rng(211);
    const RainStreakSet<double> set = random_set(3, 16, rng);
    auto run = [&](std::uint64_t seed) {
        Rng r(seed);
        std::vector<RainMap<double>> outs;
        for (int i = 0; i < 5; ++i) outs.push_back(edrain::rain_mix(set, r));
        return outs;
    };
    const auto a = run(42), b = run(42), c = run(43);
    bool differs = false;
    for (int i = 0; i < 5; ++i) {
        ASSERT_EQ(0, std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)));
        if (std::memcmp(a[i].data(), c[i].data(), a[i].size() * sizeof(double))) differs = true;
    }
    EXPECT_TRUE(differs);
}

TEST(RainMix, OutputStaysInUnitRange) {
    Rng rng(223);
    const RainStreakSet<double> set = random_set(2, 16, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const RainMap<double> out = edrain::rain_mix(set, rng);
        for (std::size_t i = 0; i < out.size(); ++i) {
            ASSERT_GE(out[i], 0.0);
            ASSERT_LE(out[i], 1.0);
        }
    }
}

TEST(Resize, SameSizeIsExactCopy) {
    Rng rng(227);
    const RainMap<double> m = random_map(13, 9, rng);
    const RainMap<double> out = edrain::resize_bilinear(m, 13, 9);
    ASSERT_EQ(0, std::memcmp(out.data(), m.data(), m.size() * sizeof(double)));
}

TEST(Resize, KnownUpsampleValues) {
    RainMap<double> m = Tensor<double>::from_data({1, 2}, {0.0, 1.0});
    // half-pixel centers: targets sample the source at -0.25, 0.25, 0.75,
    // 1.25, clamped to the edges
    const RainMap<double> out = edrain::resize_bilinear(m, 1, 4);
    EXPECT_NEAR(out.at(0, 0), 0.0, 1e-15);
    EXPECT_NEAR(out.at(0, 1), 0.25, 1e-15);
    EXPECT_NEAR(out.at(0, 2), 0.75, 1e-15);
    EXPECT_NEAR(out.at(0, 3), 1.0, 1e-15);

    RainMap<double> flat({5, 5}, 0.37);
    const RainMap<double> up = edrain::resize_bilinear(flat, 11, 17);
    for (std::size_t i = 0; i < up.size(); ++i) ASSERT_DOUBLE_EQ(up[i], 0.37);
}

TEST(Composite, AddsResizedRainAndClamps) {
    Rng rng(229);
    Tensor<double> clean({3, 6, 6}, 0.9);
    RainMap<double> rain({3, 3}, 0.3);
    const Tensor<double> rainy = edrain::composite_rainy(clean, rain);
    ASSERT_EQ(rainy.shape(), clean.shape());
    for (std::size_t i = 0; i < rainy.size(); ++i) ASSERT_DOUBLE_EQ(rainy[i], 1.0); // clamped

    Tensor<double> dark({1, 4, 4}, 0.25);
    RainMap<double> drizzle({4, 4}, 0.5);
    const Tensor<double> mix = edrain::composite_rainy(dark, drizzle);
    for (std::size_t i = 0; i < mix.size(); ++i) ASSERT_DOUBLE_EQ(mix[i], 0.75);

    EXPECT_THROW(edrain::composite_rainy(Tensor<double>({4, 4}), rain),
                 std::invalid_argument);
}

TEST(Streaks, SyntheticGenerationIsSeededAndPlausible) {
    Rng a(31), b(31), c(37);
    const auto sa = edrain::generate_synthetic_streaks<double>(4, 64, a);
    const auto sb = edrain::generate_synthetic_streaks<double>(4, 64, b);
    const auto sc = edrain::generate_synthetic_streaks<double>(4, 64, c);
    ASSERT_EQ(sa.maps.size(), 4u);
    ASSERT_EQ(sa.names.size(), 4u);
    bool differs = false;
    for (int i = 0; i < 4; ++i) {
        ASSERT_EQ(sa.maps[i].shape(), (std::vector<int>{64, 64}));
        ASSERT_EQ(0, std::memcmp(sa.maps[i].data(), sb.maps[i].data(),
                                 sa.maps[i].size() * sizeof(double)));
        if (std::memcmp(sa.maps[i].data(), sc.maps[i].data(),
                        sa.maps[i].size() * sizeof(double)))
            differs = true;
        double mean = 0, mx = 0;
        for (std::size_t j = 0; j < sa.maps[i].size(); ++j) {
            const double v = sa.maps[i][j];
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
            mean += v;
            mx = std::max(mx, v);
        }
        mean /= static_cast<double>(sa.maps[i].size());
        EXPECT_GT(mean, 0.005) << i;
        EXPECT_LT(mean, 0.15) << i;
        EXPECT_GT(mx, 0.1) << i; // visible streaks, not a flat haze
    }
    EXPECT_TRUE(differs);
    EXPECT_THROW(edrain::generate_synthetic_streaks<double>(0, 64, a), std::invalid_argument);
    EXPECT_THROW(edrain::generate_synthetic_streaks<double>(1, 4, a), std::invalid_argument);
}
