#include <gtest/gtest.h>

#include <cstring>

#include "edrain/filtering.hpp"
#include "edrain/rng.hpp"
#include "oracle.hpp"

using edrain::FusionParams;
using edrain::KernelField;
using edrain::Rng;
using edrain::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
KernelField<T> delta_kernels(int n, int k, int h, int w) {
    KernelField<T> kf({n, k * k, h, w});
    const int center = (k * k - 1) / 2;
    for (int b = 0; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) kf.at(b, center, y, x) = T(1);
    return kf;
}

} // namespace

TEST(Filter, DeltaKernelsGiveBitExactIdentity) {
    Rng rng(41);
    for (const int k : {3, 5}) {
        const Tensor<double> img = random_tensor<double>({2, 3, 9, 7}, rng);
        const KernelField<double> kf = delta_kernels<double>(2, k, 9, 7);
        for (const int l : {1, 2, 3, 4}) {
            const Tensor<double> out = edrain::pixel_wise_dilated_filter(img, kf, l);
            ASSERT_EQ(0, std::memcmp(out.data(), img.data(), img.size() * sizeof(double)))
                << "k=" << k << " l=" << l;
        }
        const Tensor<double> plain = edrain::pixel_wise_filter(img, kf);
        ASSERT_EQ(0, std::memcmp(plain.data(), img.data(), img.size() * sizeof(double)));
    }
}

TEST(Filter, MatchesDirectSumOracle) {
    Rng rng(43);
    for (const int k : {3, 5}) {
        for (const int l : {1, 2, 3, 4}) {
            const int h = 8 + static_cast<int>(rng.uniform_index(25));
            const int w = 8 + static_cast<int>(rng.uniform_index(25));
            const Tensor<double> img = random_tensor<double>({2, 3, h, w}, rng);
            const KernelField<double> kf = random_tensor<double>({2, k * k, h, w}, rng);
            const Tensor<double> got = edrain::pixel_wise_dilated_filter(img, kf, l);
            const Tensor<double> want = oracle::dilated_filter_ref(img, kf, l);
            for (std::size_t i = 0; i < got.size(); ++i)
                ASSERT_NEAR(got[i], want[i], 1e-12) << "k=" << k << " l=" << l << " i=" << i;
        }
    }
}

TEST(Filter, DilationOneBitIdenticalToPlainPath) {
    Rng rng(47);
    for (const int k : {3, 5}) {
        const Tensor<float> img = random_tensor<float>({1, 3, 16, 12}, rng);
        const KernelField<float> kf = random_tensor<float>({1, k * k, 16, 12}, rng);
        const Tensor<float> plain = edrain::pixel_wise_filter(img, kf);
        const Tensor<float> dilated = edrain::pixel_wise_dilated_filter(img, kf, 1);
        ASSERT_EQ(0, std::memcmp(plain.data(), dilated.data(), plain.size() * sizeof(float)));
    }
}

TEST(Filter, KernelsSharedAcrossColorChannels) {
    Rng rng(53);
    const KernelField<double> kf = random_tensor<double>({1, 9, 6, 6}, rng);
    Tensor<double> img({1, 3, 6, 6});
    // channel c = base image scaled by (c+1); linearity in the image means
    // each output channel must be the base output scaled the same way
    const Tensor<double> base = random_tensor<double>({1, 1, 6, 6}, rng);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) img.at(0, c, y, x) = base.at(0, 0, y, x) * (c + 1);
    const Tensor<double> out = edrain::pixel_wise_dilated_filter(img, kf, 2);
    const Tensor<double> base_out = edrain::pixel_wise_dilated_filter(base, kf, 2);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x)
                ASSERT_NEAR(out.at(0, c, y, x), base_out.at(0, 0, y, x) * (c + 1), 1e-12);
}

TEST(Filter, OutOfBoundsTapsReadZero) {
    // all-ones 3x3 kernels on an all-ones image: the corner pixel sees only
    // the taps that stay inside, so dilation pushes more taps off the edge
    Tensor<double> img({1, 1, 5, 5}, 1.0);
    KernelField<double> kf({1, 9, 5, 5}, 1.0);
    const Tensor<double> l1 = edrain::pixel_wise_dilated_filter(img, kf, 1);
    EXPECT_DOUBLE_EQ(l1.at(0, 0, 0, 0), 4.0);
    EXPECT_DOUBLE_EQ(l1.at(0, 0, 2, 2), 9.0);
    const Tensor<double> l2 = edrain::pixel_wise_dilated_filter(img, kf, 2);
    EXPECT_DOUBLE_EQ(l2.at(0, 0, 0, 0), 4.0);
    EXPECT_DOUBLE_EQ(l2.at(0, 0, 2, 2), 9.0); // taps at +-2 still inside from center
    const Tensor<double> l4 = edrain::pixel_wise_dilated_filter(img, kf, 4);
    EXPECT_DOUBLE_EQ(l4.at(0, 0, 2, 2), 1.0); // +-4 from center leaves the image
}

TEST(Filter, ArgumentErrors) {
    Tensor<double> img({1, 3, 8, 8});
    KernelField<double> ok({1, 9, 8, 8});
    EXPECT_NO_THROW(edrain::pixel_wise_dilated_filter(img, ok, 1));
    KernelField<double> not_square({1, 8, 8, 8});
    EXPECT_THROW(edrain::pixel_wise_dilated_filter(img, not_square, 1), std::invalid_argument);
    KernelField<double> even_k({1, 16, 8, 8});
    EXPECT_THROW(edrain::pixel_wise_dilated_filter(img, even_k, 1), std::invalid_argument);
    KernelField<double> wrong_hw({1, 9, 8, 7});
    EXPECT_THROW(edrain::pixel_wise_dilated_filter(img, wrong_hw, 1), std::invalid_argument);
    KernelField<double> wrong_n({2, 9, 8, 8});
    EXPECT_THROW(edrain::pixel_wise_dilated_filter(img, wrong_n, 1), std::invalid_argument);
    EXPECT_THROW(edrain::pixel_wise_dilated_filter(img, ok, 0), std::invalid_argument);
    EXPECT_THROW(edrain::pixel_wise_dilated_filter(img, ok, -2), std::invalid_argument);
}

TEST(Filter, BackwardMatchesFiniteDifferences) {
    Rng rng(59);
    for (const int l : {1, 3}) {
        Tensor<double> img = random_tensor<double>({1, 2, 7, 6}, rng);
        KernelField<double> kf = random_tensor<double>({1, 9, 7, 6}, rng);
        const Tensor<double> proj = random_tensor<double>({1, 2, 7, 6}, rng);
        auto objective = [&]() {
            const Tensor<double> out = edrain::pixel_wise_dilated_filter(img, kf, l);
            double s = 0;
            for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * proj[i];
            return s;
        };
        const auto g = edrain::pixel_wise_dilated_filter_backward(img, kf, l, proj);
        for (std::size_t i = 0; i < img.size(); i += 5) {
            const double fd = oracle::central_diff(objective, img[i]);
            ASSERT_TRUE(oracle::close(g.image[i], fd, 1e-6, 1e-9)) << "l=" << l << " img " << i;
        }
        for (std::size_t i = 0; i < kf.size(); i += 17) {
            const double fd = oracle::central_diff(objective, kf[i]);
            ASSERT_TRUE(oracle::close(g.kernels[i], fd, 1e-6, 1e-9)) << "l=" << l << " ker " << i;
        }
    }
}

TEST(Fusion, AveragingWeightsReproduceCommonInput) {
    Rng rng(61);
    const int c = 3, n_scales = 4;
    const Tensor<double> img = random_tensor<double>({1, c, 8, 8}, rng);
    // center tap 1/L on each scale's own channel block: output = mean of the
    // scale inputs, which all equal img here
    FusionParams<double> p{Tensor<double>({c, n_scales * c, 3, 3}), Tensor<double>({c})};
    for (int oc = 0; oc < c; ++oc)
        for (int s = 0; s < n_scales; ++s) p.weights.at(oc, s * c + oc, 1, 1) = 1.0 / n_scales;
    const std::vector<Tensor<double>> scales(n_scales, img);
    const Tensor<double> out = edrain::fuse_scales(scales, p);
    for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out[i], img[i], 1e-12);
}

TEST(Fusion, MatchesConvOracleOnConcat) {
    Rng rng(67);
    const int c = 2, n_scales = 3, h = 6, w = 9;
    std::vector<Tensor<double>> scales;
    for (int s = 0; s < n_scales; ++s)
        scales.push_back(random_tensor<double>({2, c, h, w}, rng));
    const FusionParams<double> p{random_tensor<double>({c, n_scales * c, 3, 3}, rng),
                                 random_tensor<double>({c}, rng)};
    const Tensor<double> got = edrain::fuse_scales(scales, p);

    Tensor<double> cat({2, n_scales * c, h, w});
    for (int n = 0; n < 2; ++n)
        for (int s = 0; s < n_scales; ++s)
            for (int cc = 0; cc < c; ++cc)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        cat.at(n, s * c + cc, y, x) = scales[s].at(n, cc, y, x);
    const edrain::ConvLayerParams<double> conv{p.weights, p.bias, 1, 1};
    const Tensor<double> want = oracle::conv2d_ref(cat, conv);
    ASSERT_TRUE(got.same_shape(want));
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
}

TEST(Fusion, BackwardMatchesFiniteDifferences) {
    Rng rng(71);
    const int c = 2, n_scales = 2, h = 5, w = 5;
    std::vector<Tensor<double>> scales;
    for (int s = 0; s < n_scales; ++s)
        scales.push_back(random_tensor<double>({1, c, h, w}, rng));
    FusionParams<double> p{random_tensor<double>({c, n_scales * c, 3, 3}, rng),
                           random_tensor<double>({c}, rng)};
    const Tensor<double> proj = random_tensor<double>({1, c, h, w}, rng);
    auto objective = [&]() {
        const Tensor<double> out = edrain::fuse_scales(scales, p);
        double s = 0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * proj[i];
        return s;
    };
    const auto g = edrain::fuse_scales_backward(scales, p, proj);
    ASSERT_EQ(g.scales.size(), scales.size());
    for (std::size_t i = 0; i < p.weights.size(); i += 3) {
        const double fd = oracle::central_diff(objective, p.weights[i]);
        ASSERT_TRUE(oracle::close(g.weights[i], fd, 1e-6, 1e-9));
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
        const double fd = oracle::central_diff(objective, p.bias[i]);
        ASSERT_TRUE(oracle::close(g.bias[i], fd, 1e-6, 1e-9));
    }
    for (int s = 0; s < n_scales; ++s)
        for (std::size_t i = 0; i < scales[s].size(); i += 7) {
            const double fd = oracle::central_diff(objective, scales[s][i]);
            ASSERT_TRUE(oracle::close(g.scales[s][i], fd, 1e-6, 1e-9));
        }
}

TEST(Fusion, ArgumentErrors) {
    const Tensor<double> img({1, 3, 8, 8});
    FusionParams<double> p{Tensor<double>({3, 12, 3, 3}), Tensor<double>({3})};
    EXPECT_NO_THROW(edrain::fuse_scales(std::vector<Tensor<double>>(4, img), p));
    EXPECT_THROW(edrain::fuse_scales(std::vector<Tensor<double>>(3, img), p),
                 std::invalid_argument);
    EXPECT_THROW(edrain::fuse_scales({}, p), std::invalid_argument);
    std::vector<Tensor<double>> ragged(4, img);
    ragged[2] = Tensor<double>({1, 3, 8, 7});
    EXPECT_THROW(edrain::fuse_scales(ragged, p), std::invalid_argument);
}
