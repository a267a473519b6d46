#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "tensor_io.hpp"

namespace taccl {

/// C x H x W image, row-major per channel, values in [0, 1].
struct ImageTensor {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    double& at(int c, int v, int u) { return data[(static_cast<std::size_t>(c) * height + v) * width + u]; }
    double at(int c, int v, int u) const { return data[(static_cast<std::size_t>(c) * height + v) * width + u]; }

    Grid2D channel(int c) const {
        const auto plane = static_cast<std::size_t>(height) * width;
        return Grid2D(height, width, std::vector<double>(data.begin() + c * plane, data.begin() + (c + 1) * plane));
    }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

/// d-dimensional feature vector. A normalized embedding is either unit length
/// or the all-zero sentinel.
struct Embedding {
    std::vector<double> vec;
    bool normalized = false;

    std::size_t dim() const { return vec.size(); }
    bool is_sentinel() const {
        for (double x : vec)
            if (x != 0.0) return false;
        return true;
    }
    friend bool operator==(const Embedding&, const Embedding&) = default;
};

namespace arch {
inline constexpr int kInChannels = 3;
inline constexpr int kConv1Channels = 8;
inline constexpr int kConv2Channels = 16;
inline constexpr int kHidden = 4;  // channel-attention bottleneck
inline constexpr int kConvKernel = 3;
inline constexpr int kSpatialKernel = 7;
inline constexpr int kDownsampleFactor = 4;
inline constexpr int kArchVersion = 1;
inline constexpr double kInputMean = 0.5;  // subtracted from every pixel before conv1
}  // namespace arch

enum ParamId : int {
    kConv1W,
    kConv1B,
    kConv2W,
    kConv2B,
    kChannelFc1W,
    kChannelFc1B,
    kChannelFc2W,
    kChannelFc2B,
    kSpatialW,
    kSpatialB,
    kEmbedW,
    kEmbedB,
    kParamCount
};

inline constexpr std::array<const char*, kParamCount> kParamNames{
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "ca_fc1_w", "ca_fc1_b",
    "ca_fc2_w", "ca_fc2_b", "sa_w", "sa_b", "embed_w", "embed_b"};

struct ParamTensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Weights of the fixed encoder: two strided 3x3 convolutions, a channel-then-spatial
/// attention head, and a dense embedding projection. Gradients share this layout.
struct ModelParams {
    int d = 0;
    std::uint64_t seed = 0;
    std::array<ParamTensor, kParamCount> tensors;

    ParamTensor& operator[](ParamId id) { return tensors[id]; }
    const ParamTensor& operator[](ParamId id) const { return tensors[id]; }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.values.size();
        return n;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using ParamGrads = ModelParams;

inline std::array<std::vector<std::size_t>, kParamCount> param_shapes(int d) {
    using namespace arch;
    return {{{kConv1Channels, kInChannels, kConvKernel, kConvKernel},
             {kConv1Channels},
             {kConv2Channels, kConv1Channels, kConvKernel, kConvKernel},
             {kConv2Channels},
             {kHidden, kConv2Channels},
             {kHidden},
             {kConv2Channels, kHidden},
             {kConv2Channels},
             {1, 2, kSpatialKernel, kSpatialKernel},
             {1},
             {static_cast<std::size_t>(d), kConv2Channels},
             {static_cast<std::size_t>(d)}}};
}

inline ModelParams zero_params(int d) {
    if (d < 1) throw Error(ErrorKind::InvalidConfig, "embedding dimension must be >= 1");
    ModelParams p;
    p.d = d;
    const auto shapes = param_shapes(d);
    for (int i = 0; i < kParamCount; ++i) {
        std::size_t n = 1;
        for (auto s : shapes[i]) n *= s;
        p.tensors[i] = {shapes[i], std::vector<double>(n, 0.0)};
    }
    return p;
}

inline ModelParams zeros_like(const ModelParams& p) {
    ModelParams z = zero_params(p.d);
    z.seed = p.seed;
    return z;
}

/// Glorot-uniform bound for a weight tensor: sqrt(6 / (fan_in + fan_out)).
inline double init_bound(const std::vector<std::size_t>& shape) {
    double fan_in = 0, fan_out = 0;
    if (shape.size() == 4) {
        const double rf = static_cast<double>(shape[2] * shape[3]);
        fan_in = shape[1] * rf;
        fan_out = shape[0] * rf;
    } else {
        fan_in = static_cast<double>(shape[1]);
        fan_out = static_cast<double>(shape[0]);
    }
    return std::sqrt(6.0 / (fan_in + fan_out));
}

inline bool is_bias(int id) { return id % 2 == 1; }

inline ModelParams init_params(int d, std::uint64_t seed) {
    ModelParams p = zero_params(d);
    p.seed = seed;
    Rng rng(derive_seed(seed, 0x1417));
    for (int i = 0; i < kParamCount; ++i) {
        if (is_bias(i)) continue;
        const double a = init_bound(p.tensors[i].shape);
        for (double& w : p.tensors[i].values) w = uniform(rng, -a, a);
    }
    return p;
}

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Zero-padded 2-D convolution, NCHW single image.
inline void conv2d_forward(std::span<const double> in, int cin, int h, int w, std::span<const double> weight,
                           std::span<const double> bias, int cout, int k, int stride, int pad,
                           std::vector<double>& out, int ho, int wo) {
    out.assign(static_cast<std::size_t>(cout) * ho * wo, 0.0);
    for (int o = 0; o < cout; ++o) {
        double* dst = out.data() + static_cast<std::size_t>(o) * ho * wo;
        for (int i = 0; i < ho * wo; ++i) dst[i] = bias[o];
        for (int c = 0; c < cin; ++c) {
            const double* src = in.data() + static_cast<std::size_t>(c) * h * w;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wt = weight[((static_cast<std::size_t>(o) * cin + c) * k + ky) * k + kx];
                    for (int i = 0; i < ho; ++i) {
                        const int y = i * stride + ky - pad;
                        if (y < 0 || y >= h) continue;
                        const double* row = src + static_cast<std::size_t>(y) * w;
                        double* orow = dst + static_cast<std::size_t>(i) * wo;
                        for (int j = 0; j < wo; ++j) {
                            const int x = j * stride + kx - pad;
                            if (x < 0 || x >= w) continue;
                            orow[j] += wt * row[x];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and (optionally) the input gradient.
inline void conv2d_backward(std::span<const double> in, int cin, int h, int w, std::span<const double> weight,
                            int cout, int k, int stride, int pad, std::span<const double> dout, int ho, int wo,
                            std::span<double> dweight, std::span<double> dbias, std::vector<double>* din) {
    if (din) din->assign(static_cast<std::size_t>(cin) * h * w, 0.0);
    for (int o = 0; o < cout; ++o) {
        const double* g = dout.data() + static_cast<std::size_t>(o) * ho * wo;
        double bsum = 0;
        for (int i = 0; i < ho * wo; ++i) bsum += g[i];
        dbias[o] += bsum;
        for (int c = 0; c < cin; ++c) {
            const double* src = in.data() + static_cast<std::size_t>(c) * h * w;
            double* dsrc = din ? din->data() + static_cast<std::size_t>(c) * h * w : nullptr;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const std::size_t widx = ((static_cast<std::size_t>(o) * cin + c) * k + ky) * k + kx;
                    const double wt = weight[widx];
                    double acc = 0;
                    for (int i = 0; i < ho; ++i) {
                        const int y = i * stride + ky - pad;
                        if (y < 0 || y >= h) continue;
                        const double* row = src + static_cast<std::size_t>(y) * w;
                        const double* grow = g + static_cast<std::size_t>(i) * wo;
                        double* drow = dsrc ? dsrc + static_cast<std::size_t>(y) * w : nullptr;
                        for (int j = 0; j < wo; ++j) {
                            const int x = j * stride + kx - pad;
                            if (x < 0 || x >= w) continue;
                            acc += grow[j] * row[x];
                            if (drow) drow[x] += grow[j] * wt;
                        }
                    }
                    dweight[widx] += acc;
                }
            }
        }
    }
}

}  // namespace detail

/// Intermediates kept by forward() for the backward pass.
struct EncoderCache {
    int d = 0;
    int height = 0, width = 0;    // input
    int h1 = 0, w1 = 0;           // after conv1
    int h2 = 0, w2 = 0;           // after conv2 (attention resolution)
    std::vector<double> input;
    std::vector<double> pre1, act1;  // conv1 pre-activation / ReLU output
    std::vector<double> pre2, act2;  // conv2 pre-activation / ReLU output (features A)
    std::vector<double> avg, mx;     // channel pooled descriptors
    std::vector<int> mx_arg;
    std::vector<double> hid_avg_pre, hid_max_pre;  // bottleneck pre-activations
    std::vector<double> channel_att;                // sigmoid(mlp(avg) + mlp(max))
    std::vector<double> feat1;                      // A * channel_att
    std::vector<double> pooled;                     // 2 x h2 x w2: [channel mean; channel max]
    std::vector<int> pooled_arg;
    std::vector<double> spatial_att;  // h2 x w2
    std::vector<double> gap;          // global average of feat1 * spatial_att
    std::vector<double> z;            // pre-normalization embedding
    double z_norm = 0;
    std::vector<double> out;  // normalized embedding (or zero sentinel)
};

struct EncoderOutput {
    Embedding embedding;
    Grid2D attention;
    EncoderCache cache;
};

inline constexpr double kSentinelNorm = 1e-12;

inline EncoderOutput forward(const ModelParams& p, const ImageTensor& x) {
    using namespace arch;
    if (x.channels != kInChannels || x.height % kDownsampleFactor != 0 || x.width % kDownsampleFactor != 0 ||
        x.height < 8 || x.width < 8 || x.data.size() != static_cast<std::size_t>(x.channels) * x.height * x.width) {
        throw Error(ErrorKind::ShapeMismatch, "input must be 3 x H x W with H, W >= 8 and divisible by 4");
    }
    EncoderOutput r;
    EncoderCache& c = r.cache;
    c.d = p.d;
    c.height = x.height;
    c.width = x.width;
    c.h1 = x.height / 2;
    c.w1 = x.width / 2;
    c.h2 = x.height / 4;
    c.w2 = x.width / 4;
    c.input = x.data;
    for (double& v : c.input) v -= kInputMean;

    detail::conv2d_forward(c.input, kInChannels, c.height, c.width, p[kConv1W].values, p[kConv1B].values,
                           kConv1Channels, kConvKernel, 2, 1, c.pre1, c.h1, c.w1);
    c.act1.resize(c.pre1.size());
    for (std::size_t i = 0; i < c.pre1.size(); ++i) c.act1[i] = c.pre1[i] > 0 ? c.pre1[i] : 0.0;

    detail::conv2d_forward(c.act1, kConv1Channels, c.h1, c.w1, p[kConv2W].values, p[kConv2B].values,
                           kConv2Channels, kConvKernel, 2, 1, c.pre2, c.h2, c.w2);
    c.act2.resize(c.pre2.size());
    for (std::size_t i = 0; i < c.pre2.size(); ++i) c.act2[i] = c.pre2[i] > 0 ? c.pre2[i] : 0.0;

    const int P = c.h2 * c.w2;
    const int C = kConv2Channels;

    // Channel attention.
    c.avg.assign(C, 0.0);
    c.mx.assign(C, 0.0);
    c.mx_arg.assign(C, 0);
    for (int ch = 0; ch < C; ++ch) {
        const double* a = c.act2.data() + static_cast<std::size_t>(ch) * P;
        double s = 0, m = a[0];
        int arg = 0;
        for (int i = 0; i < P; ++i) {
            s += a[i];
            if (a[i] > m) {
                m = a[i];
                arg = i;
            }
        }
        c.avg[ch] = s / P;
        c.mx[ch] = m;
        c.mx_arg[ch] = arg;
    }
    const auto& w1 = p[kChannelFc1W].values;
    const auto& b1 = p[kChannelFc1B].values;
    const auto& w2 = p[kChannelFc2W].values;
    const auto& b2 = p[kChannelFc2B].values;
    auto mlp = [&](const std::vector<double>& in, std::vector<double>& hid_pre, std::vector<double>& out) {
        hid_pre.assign(kHidden, 0.0);
        for (int j = 0; j < kHidden; ++j) {
            double s = b1[j];
            for (int ch = 0; ch < C; ++ch) s += w1[j * C + ch] * in[ch];
            hid_pre[j] = s;
        }
        for (int ch = 0; ch < C; ++ch) {
            double s = b2[ch];
            for (int j = 0; j < kHidden; ++j) s += w2[ch * kHidden + j] * std::max(hid_pre[j], 0.0);
            out[ch] += s;
        }
    };
    std::vector<double> logits(C, 0.0);
    mlp(c.avg, c.hid_avg_pre, logits);
    mlp(c.mx, c.hid_max_pre, logits);
    c.channel_att.resize(C);
    for (int ch = 0; ch < C; ++ch) c.channel_att[ch] = detail::sigmoid(logits[ch]);

    c.feat1.resize(c.act2.size());
    for (int ch = 0; ch < C; ++ch)
        for (int i = 0; i < P; ++i) c.feat1[ch * P + i] = c.act2[ch * P + i] * c.channel_att[ch];

    // Spatial attention over [channel mean; channel max].
    c.pooled.assign(2 * static_cast<std::size_t>(P), 0.0);
    c.pooled_arg.assign(P, 0);
    for (int i = 0; i < P; ++i) {
        double s = 0, m = c.feat1[i];
        int arg = 0;
        for (int ch = 0; ch < C; ++ch) {
            const double v = c.feat1[ch * P + i];
            s += v;
            if (v > m) {
                m = v;
                arg = ch;
            }
        }
        c.pooled[i] = s / C;
        c.pooled[P + i] = m;
        c.pooled_arg[i] = arg;
    }
    std::vector<double> sa_logits;
    detail::conv2d_forward(c.pooled, 2, c.h2, c.w2, p[kSpatialW].values, p[kSpatialB].values, 1, kSpatialKernel, 1,
                           kSpatialKernel / 2, sa_logits, c.h2, c.w2);
    c.spatial_att.resize(P);
    for (int i = 0; i < P; ++i) c.spatial_att[i] = detail::sigmoid(sa_logits[i]);

    // Modulate, pool, project.
    c.gap.assign(C, 0.0);
    for (int ch = 0; ch < C; ++ch) {
        double s = 0;
        for (int i = 0; i < P; ++i) s += c.feat1[ch * P + i] * c.spatial_att[i];
        c.gap[ch] = s / P;
    }
    const auto& we = p[kEmbedW].values;
    const auto& be = p[kEmbedB].values;
    c.z.assign(p.d, 0.0);
    for (int k = 0; k < p.d; ++k) {
        double s = be[k];
        for (int ch = 0; ch < C; ++ch) s += we[k * C + ch] * c.gap[ch];
        c.z[k] = s;
    }
    c.z_norm = l2_norm(c.z);
    c.out.assign(p.d, 0.0);
    if (c.z_norm >= kSentinelNorm) {
        for (int k = 0; k < p.d; ++k) c.out[k] = c.z[k] / c.z_norm;
    }

    r.embedding = {c.out, true};
    r.attention = Grid2D(c.h2, c.w2, c.spatial_att);
    return r;
}

/// Gradients of a loss w.r.t. all parameters, given its partials w.r.t. the
/// normalized embedding and the spatial attention map of a forward pass.
/// `grad_raw`, when non-empty, is an extra partial w.r.t. the pre-normalization embedding.
inline ParamGrads backward(const ModelParams& p, const EncoderCache& c, std::span<const double> grad_embedding,
                           const Grid2D& grad_attention, std::span<const double> grad_raw = {}) {
    using namespace arch;
    if (c.d != p.d || grad_embedding.size() != static_cast<std::size_t>(p.d) || grad_attention.height() != c.h2 ||
        grad_attention.width() != c.w2 || c.out.size() != static_cast<std::size_t>(p.d) ||
        (!grad_raw.empty() && grad_raw.size() != static_cast<std::size_t>(p.d))) {
        throw Error(ErrorKind::StaleCache, "gradient shapes do not match the cached forward pass");
    }
    ParamGrads g = zeros_like(p);
    const int P = c.h2 * c.w2;
    const int C = kConv2Channels;

    // Normalization.
    std::vector<double> dz(p.d, 0.0);
    if (c.z_norm >= kSentinelNorm) {
        const double proj = dot(c.out, grad_embedding);
        for (int k = 0; k < p.d; ++k) dz[k] = (grad_embedding[k] - c.out[k] * proj) / c.z_norm;
    }
    if (!grad_raw.empty())
        for (int k = 0; k < p.d; ++k) dz[k] += grad_raw[k];

    // Dense projection.
    const auto& we = p[kEmbedW].values;
    std::vector<double> dgap(C, 0.0);
    for (int k = 0; k < p.d; ++k) {
        g[kEmbedB].values[k] += dz[k];
        for (int ch = 0; ch < C; ++ch) {
            g[kEmbedW].values[k * C + ch] += dz[k] * c.gap[ch];
            dgap[ch] += we[k * C + ch] * dz[k];
        }
    }

    // Global average pool of feat1 * spatial_att.
    std::vector<double> dfeat1(static_cast<std::size_t>(C) * P, 0.0);
    std::vector<double> dsa(grad_attention.values());
    for (int ch = 0; ch < C; ++ch) {
        const double gch = dgap[ch] / P;
        for (int i = 0; i < P; ++i) {
            dfeat1[ch * P + i] += gch * c.spatial_att[i];
            dsa[i] += gch * c.feat1[ch * P + i];
        }
    }

    // Spatial attention: sigmoid, 7x7 conv, pooled descriptors.
    std::vector<double> dsa_logit(P);
    for (int i = 0; i < P; ++i) dsa_logit[i] = dsa[i] * c.spatial_att[i] * (1 - c.spatial_att[i]);
    std::vector<double> dpooled;
    detail::conv2d_backward(c.pooled, 2, c.h2, c.w2, p[kSpatialW].values, 1, kSpatialKernel, 1, kSpatialKernel / 2,
                            dsa_logit, c.h2, c.w2, g[kSpatialW].values, g[kSpatialB].values, &dpooled);
    for (int i = 0; i < P; ++i) {
        const double dmean = dpooled[i] / C;
        for (int ch = 0; ch < C; ++ch) dfeat1[ch * P + i] += dmean;
        dfeat1[c.pooled_arg[i] * P + i] += dpooled[P + i];
    }

    // Channel attention.
    std::vector<double> dact2(static_cast<std::size_t>(C) * P, 0.0);
    std::vector<double> dlogit(C, 0.0);
    for (int ch = 0; ch < C; ++ch) {
        double dca = 0;
        for (int i = 0; i < P; ++i) {
            dact2[ch * P + i] += dfeat1[ch * P + i] * c.channel_att[ch];
            dca += dfeat1[ch * P + i] * c.act2[ch * P + i];
        }
        dlogit[ch] = dca * c.channel_att[ch] * (1 - c.channel_att[ch]);
    }
    const auto& w1 = p[kChannelFc1W].values;
    const auto& w2 = p[kChannelFc2W].values;
    auto mlp_back = [&](const std::vector<double>& in, const std::vector<double>& hid_pre, std::vector<double>& din) {
        din.assign(C, 0.0);
        std::vector<double> dhid(kHidden, 0.0);
        for (int ch = 0; ch < C; ++ch) {
            g[kChannelFc2B].values[ch] += dlogit[ch];
            for (int j = 0; j < kHidden; ++j) {
                g[kChannelFc2W].values[ch * kHidden + j] += dlogit[ch] * std::max(hid_pre[j], 0.0);
                dhid[j] += w2[ch * kHidden + j] * dlogit[ch];
            }
        }
        for (int j = 0; j < kHidden; ++j) {
            if (hid_pre[j] <= 0) continue;
            g[kChannelFc1B].values[j] += dhid[j];
            for (int ch = 0; ch < C; ++ch) {
                g[kChannelFc1W].values[j * C + ch] += dhid[j] * in[ch];
                din[ch] += w1[j * C + ch] * dhid[j];
            }
        }
    };
    std::vector<double> davg, dmx;
    mlp_back(c.avg, c.hid_avg_pre, davg);
    mlp_back(c.mx, c.hid_max_pre, dmx);
    for (int ch = 0; ch < C; ++ch) {
        for (int i = 0; i < P; ++i) dact2[ch * P + i] += davg[ch] / P;
        dact2[ch * P + c.mx_arg[ch]] += dmx[ch];
    }

    // conv2 + ReLU.
    for (std::size_t i = 0; i < dact2.size(); ++i)
        if (c.pre2[i] <= 0) dact2[i] = 0;
    std::vector<double> dact1;
    detail::conv2d_backward(c.act1, kConv1Channels, c.h1, c.w1, p[kConv2W].values, kConv2Channels, kConvKernel, 2, 1,
                            dact2, c.h2, c.w2, g[kConv2W].values, g[kConv2B].values, &dact1);

    // conv1 + ReLU.
    for (std::size_t i = 0; i < dact1.size(); ++i)
        if (c.pre1[i] <= 0) dact1[i] = 0;
    detail::conv2d_backward(c.input, kInChannels, c.height, c.width, p[kConv1W].values, kConv1Channels, kConvKernel,
                            2, 1, dact1, c.h1, c.w1, g[kConv1W].values, g[kConv1B].values, nullptr);
    return g;
}

/// Accumulates `src * scale` into `dst` (same layout).
inline void accumulate(ParamGrads& dst, const ParamGrads& src, double scale = 1.0) {
    for (int i = 0; i < kParamCount; ++i) {
        auto& a = dst.tensors[i].values;
        const auto& b = src.tensors[i].values;
        for (std::size_t j = 0; j < a.size(); ++j) a[j] += scale * b[j];
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: one f64 tensor file per parameter plus model.json.

inline void save_checkpoint(const std::filesystem::path& dir, const ModelParams& p) {
    std::filesystem::create_directories(dir);
    for (int i = 0; i < kParamCount; ++i) {
        TensorFile t;
        t.dtype = DType::F64;
        for (auto s : p.tensors[i].shape) t.dims.push_back(static_cast<std::uint32_t>(s));
        t.values = p.tensors[i].values;
        save_tensor(dir / (std::string(kParamNames[i]) + ".tact"), t);
    }
    nlohmann::json meta = {{"d", p.d},
                           {"seed", p.seed},
                           {"downsample_factor", arch::kDownsampleFactor},
                           {"arch_version", arch::kArchVersion}};
    std::ofstream f(dir / "model.json");
    if (!f) throw Error(ErrorKind::IoError, "cannot write model.json in " + dir.string());
    f << meta.dump(2) << "\n";
}

inline ModelParams load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream f(dir / "model.json");
    if (!f) throw Error(ErrorKind::IoError, "missing model.json in " + dir.string());
    nlohmann::json meta;
    try {
        f >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("model.json: ") + e.what());
    }
    if (meta.value("arch_version", -1) != arch::kArchVersion ||
        meta.value("downsample_factor", -1) != arch::kDownsampleFactor) {
        throw Error(ErrorKind::IncompatibleCheckpoint, "architecture version mismatch in " + dir.string());
    }
    ModelParams p = zero_params(meta.at("d").get<int>());
    p.seed = meta.value("seed", std::uint64_t{0});
    for (int i = 0; i < kParamCount; ++i) {
        TensorFile t = load_tensor(dir / (std::string(kParamNames[i]) + ".tact"));
        if (t.values.size() != p.tensors[i].values.size()) {
            throw Error(ErrorKind::IncompatibleCheckpoint, std::string("shape mismatch for ") + kParamNames[i]);
        }
        p.tensors[i].values = std::move(t.values);
    }
    return p;
}

}  // namespace taccl
