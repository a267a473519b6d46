#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <taccl/encoder.hpp>

using namespace taccl;

namespace {

ImageTensor random_image(Rng& rng, int h, int w) {
    ImageTensor x(3, h, w);
    for (double& v : x.data) v = uniform(rng, 0, 1);
    return x;
}

ModelParams random_params(int d, Rng& rng) {
    ModelParams p = init_params(d, rng());
    // Nonzero biases so every branch of the network is exercised.
    for (int i = 0; i < kParamCount; ++i)
        if (i % 2 == 1)
            for (double& b : p.tensors[i].values) b = uniform(rng, -0.1, 0.1);
    return p;
}

double probe_loss(const ModelParams& p, const ImageTensor& x, const std::vector<double>& gf, const Grid2D& gm) {
    const EncoderOutput o = forward(p, x);
    double s = 0;
    for (std::size_t k = 0; k < gf.size(); ++k) s += gf[k] * o.embedding.vec[k];
    for (std::size_t i = 0; i < gm.size(); ++i) s += gm.data()[i] * o.attention.data()[i];
    return s;
}

}  // namespace

TEST(Encoder, ParameterShapes) {
    const ModelParams p = zero_params(32);
    EXPECT_EQ(p[kConv1W].values.size(), 8u * 3 * 3 * 3);
    EXPECT_EQ(p[kConv2W].values.size(), 16u * 8 * 3 * 3);
    EXPECT_EQ(p[kChannelFc1W].values.size(), 4u * 16);
    EXPECT_EQ(p[kChannelFc2W].values.size(), 16u * 4);
    EXPECT_EQ(p[kSpatialW].values.size(), 2u * 7 * 7);
    EXPECT_EQ(p[kSpatialB].values.size(), 1u);
    EXPECT_EQ(p[kEmbedW].values.size(), 16u * 32);
    EXPECT_EQ(p[kEmbedB].values.size(), 32u);
    EXPECT_EQ(arch::kDownsampleFactor, 4);
}

TEST(Encoder, PaperEmbeddingWidth) {
    EXPECT_EQ(init_params(512, 0)[kEmbedW].values.size(), 16u * 512);
}

TEST(Encoder, InitIsDeterministicAndBounded) {
    EXPECT_EQ(init_params(8, 42), init_params(8, 42));
    EXPECT_NE(init_params(8, 42), init_params(8, 43));
    const ModelParams p = init_params(8, 42);
    // Glorot bounds from the fixed layer sizes.
    const double bound[kParamCount] = {std::sqrt(6.0 / (27 + 72)),  0, std::sqrt(6.0 / (72 + 144)), 0,
                                       std::sqrt(6.0 / (16 + 4)),   0, std::sqrt(6.0 / (4 + 16)),   0,
                                       std::sqrt(6.0 / (98 + 49)),  0, std::sqrt(6.0 / (16 + 8)),   0};
    for (int i = 0; i < kParamCount; ++i) {
        for (double w : p.tensors[i].values) {
            if (i % 2 == 1) {
                EXPECT_EQ(w, 0.0);
            } else {
                EXPECT_LE(std::abs(w), bound[i]);
            }
        }
    }
}

TEST(Encoder, InvalidDimension) { EXPECT_THROW(init_params(0, 1), Error); }

TEST(Encoder, ZeroParamsGiveSentinelAndHalfAttention) {
    const EncoderOutput o = forward(zero_params(4), ImageTensor(3, 8, 8, 0.0));
    EXPECT_TRUE(o.embedding.is_sentinel());
    ASSERT_EQ(o.attention.height(), 2);
    ASSERT_EQ(o.attention.width(), 2);
    for (double a : o.attention.data()) EXPECT_EQ(a, 0.5);
}

TEST(Encoder, ShapeErrors) {
    const ModelParams p = init_params(4, 1);
    for (auto [h, w] : {std::pair{10, 8}, std::pair{8, 6}, std::pair{4, 4}}) {
        try {
            forward(p, ImageTensor(3, h, w));
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
        }
    }
    EXPECT_THROW(forward(p, ImageTensor(1, 8, 8)), Error);
}

TEST(Encoder, AttentionRangeAndUnitNorm) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const ModelParams p = random_params(16, rng);
        const EncoderOutput o = forward(p, random_image(rng, 16, 12));
        EXPECT_EQ(o.attention.height(), 4);
        EXPECT_EQ(o.attention.width(), 3);
        for (double a : o.attention.data()) {
            EXPECT_GT(a, 0.0);
            EXPECT_LT(a, 1.0);
        }
        EXPECT_NEAR(l2_norm(o.embedding.vec), 1.0, 1e-6);
        EXPECT_TRUE(o.embedding.normalized);
    }
}

TEST(Encoder, ForwardIsReferentiallyTransparent) {
    Rng rng(6);
    const ModelParams p = random_params(8, rng);
    const ImageTensor x = random_image(rng, 8, 8);
    const EncoderOutput a = forward(p, x), b = forward(p, x);
    EXPECT_EQ(a.embedding, b.embedding);
    EXPECT_EQ(a.attention, b.attention);
}

TEST(Encoder, BackwardZeroGradients) {
    Rng rng(7);
    const ModelParams p = random_params(8, rng);
    const EncoderOutput o = forward(p, random_image(rng, 8, 8));
    const ParamGrads g = backward(p, o.cache, std::vector<double>(8, 0.0), Grid2D(2, 2, 0.0));
    EXPECT_EQ(g, zeros_like(p));
}

TEST(Encoder, BackwardIsLinear) {
    Rng rng(8);
    const ModelParams p = random_params(8, rng);
    const EncoderOutput o = forward(p, random_image(rng, 8, 8));
    std::vector<double> gf(8);
    Grid2D gm(2, 2);
    for (double& v : gf) v = normal(rng);
    for (double& v : gm.data()) v = normal(rng);
    const ParamGrads g1 = backward(p, o.cache, gf, gm);
    for (double& v : gf) v *= 2;
    for (double& v : gm.data()) v *= 2;
    const ParamGrads g2 = backward(p, o.cache, gf, gm);
    for (int i = 0; i < kParamCount; ++i)
        for (std::size_t k = 0; k < g1.tensors[i].values.size(); ++k)
            EXPECT_NEAR(g2.tensors[i].values[k], 2 * g1.tensors[i].values[k], 1e-12);
}

TEST(Encoder, StaleCache) {
    Rng rng(9);
    const ModelParams p = random_params(8, rng);
    const EncoderOutput o = forward(p, random_image(rng, 8, 8));
    try {
        backward(p, o.cache, std::vector<double>(8, 0.0), Grid2D(3, 3, 0.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::StaleCache);
    }
    EXPECT_THROW(backward(p, o.cache, std::vector<double>(5, 0.0), Grid2D(2, 2, 0.0)), Error);
    EXPECT_THROW(backward(init_params(4, 1), o.cache, std::vector<double>(4, 0.0), Grid2D(2, 2, 0.0)), Error);
}

TEST(Encoder, BackwardMatchesFiniteDifferences) {
    Rng rng(10);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const ModelParams p = random_params(6, rng);
        const ImageTensor x = random_image(rng, 8, 8);
        std::vector<double> gf(6);
        Grid2D gm(2, 2);
        for (double& v : gf) v = normal(rng);
        for (double& v : gm.data()) v = normal(rng);
        const ParamGrads g = backward(p, forward(p, x).cache, gf, gm);

        double diff2 = 0, an2 = 0, fd2 = 0;
        for (int c = 0; c < 60; ++c) {
            const int t = static_cast<int>(uniform_index(rng, kParamCount));
            const std::size_t k = uniform_index(rng, p.tensors[t].values.size());
            ModelParams plus = p, minus = p;
            plus.tensors[t].values[k] += h;
            minus.tensors[t].values[k] -= h;
            const double fd = (probe_loss(plus, x, gf, gm) - probe_loss(minus, x, gf, gm)) / (2 * h);
            const double an = g.tensors[t].values[k];
            diff2 += (fd - an) * (fd - an);
            an2 += an * an;
            fd2 += fd * fd;
        }
        const double rel = std::sqrt(diff2) / std::max({std::sqrt(an2), std::sqrt(fd2), 1e-12});
        EXPECT_LT(rel, 1e-4) << "trial " << trial;
    }
}

TEST(Encoder, RawEmbeddingGradient) {
    // d/dz of g.z equals g, independent of the normalized-output gradient.
    Rng rng(11);
    const ModelParams p = random_params(5, rng);
    const ImageTensor x = random_image(rng, 8, 8);
    const EncoderOutput o = forward(p, x);
    std::vector<double> graw(5);
    for (double& v : graw) v = normal(rng);
    const ParamGrads g = backward(p, o.cache, std::vector<double>(5, 0.0), Grid2D(2, 2, 0.0), graw);
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(g[kEmbedB].values[k], graw[k], 1e-15);
}

TEST(Encoder, CheckpointRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "taccl_ckpt_test";
    std::filesystem::remove_all(dir);
    Rng rng(12);
    const ModelParams p = random_params(7, rng);
    save_checkpoint(dir, p);
    EXPECT_EQ(load_checkpoint(dir), p);
    EXPECT_TRUE(std::filesystem::exists(dir / "model.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "embed_w.tact"));
}

TEST(Encoder, CheckpointArchMismatch) {
    const auto dir = std::filesystem::temp_directory_path() / "taccl_ckpt_bad";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, init_params(4, 1));
    std::ofstream(dir / "model.json") << R"({"d": 4, "seed": 1, "downsample_factor": 4, "arch_version": 99})";
    try {
        load_checkpoint(dir);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IncompatibleCheckpoint);
    }
    EXPECT_THROW(load_checkpoint(dir / "missing"), Error);
}
