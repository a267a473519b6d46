#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "core.hpp"

namespace taccl {

/// 3x3 homography, row-major. Maps homogeneous (u, v, 1).
using Homography = std::array<double, 9>;

inline constexpr Homography kIdentityHomography{1, 0, 0, 0, 1, 0, 0, 0, 1};

namespace transform {

struct Identity {
    friend bool operator==(const Identity&, const Identity&) = default;
};

/// Crop the box (x0, y0, w, h) of the source and resize it to out_w x out_h.
struct CropResize {
    double x0 = 0, y0 = 0, w = 1, h = 1, out_w = 1, out_h = 1;
    friend bool operator==(const CropResize&, const CropResize&) = default;
};

struct Rotate {
    double theta = 0;  // radians
    Point2 center;
    friend bool operator==(const Rotate&, const Rotate&) = default;
};

struct Zoom {
    double scale = 1;
    Point2 center;
    friend bool operator==(const Zoom&, const Zoom&) = default;
};

struct Perspective {
    Homography h = kIdentityHomography;  // h[8] == 1
    friend bool operator==(const Perspective&, const Perspective&) = default;
};

}  // namespace transform

enum class TransformKind { Identity, CropResize, Rotate, Zoom, Perspective };

inline std::string to_string(TransformKind k) {
    switch (k) {
    case TransformKind::Identity: return "Identity";
    case TransformKind::CropResize: return "CropResize";
    case TransformKind::Rotate: return "Rotate";
    case TransformKind::Zoom: return "Zoom";
    case TransformKind::Perspective: return "Perspective";
    }
    return "Identity";
}

inline double det3(const Homography& m) {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

/// Parametric spatial transform acting on 2-D coordinates.
class TransformSpec {
public:
    using Params = std::variant<transform::Identity, transform::CropResize, transform::Rotate,
                                transform::Zoom, transform::Perspective>;

    TransformSpec() = default;
    TransformSpec(transform::Identity p) : params_(p) {}
    TransformSpec(transform::CropResize p) : params_(p) {
        if (!(p.w > 0 && p.h > 0 && p.out_w > 0 && p.out_h > 0)) {
            throw Error(ErrorKind::InvalidConfig, "CropResize requires positive extents");
        }
    }
    TransformSpec(transform::Rotate p) : params_(p) {}
    TransformSpec(transform::Zoom p) : params_(p) {
        if (!(p.scale > 0)) throw Error(ErrorKind::InvalidConfig, "Zoom scale must be positive");
    }
    TransformSpec(transform::Perspective p) {
        if (std::abs(p.h[8]) < 1e-12) {
            throw Error(ErrorKind::NonInvertible, "homography with h[8] == 0 cannot be normalized");
        }
        const double s = p.h[8];
        for (double& x : p.h) x /= s;
        if (std::abs(det3(p.h)) <= 1e-9) {
            throw Error(ErrorKind::NonInvertible, "homography determinant below 1e-9");
        }
        params_ = p;
    }

    static TransformSpec identity() { return transform::Identity{}; }
    static TransformSpec translation(double du, double dv) {
        return transform::Perspective{{1, 0, du, 0, 1, dv, 0, 0, 1}};
    }
    static TransformSpec from_homography(const Homography& h) { return transform::Perspective{h}; }

    TransformKind kind() const { return static_cast<TransformKind>(params_.index()); }
    const Params& params() const { return params_; }

    template <class T>
    const T& as() const { return std::get<T>(params_); }

    friend bool operator==(const TransformSpec&, const TransformSpec&) = default;

private:
    Params params_{transform::Identity{}};
};

inline Homography mat_mul(const Homography& a, const Homography& b) {
    Homography c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
            c[i * 3 + j] = s;
        }
    return c;
}

inline Homography mat_inverse(const Homography& m) {
    const double det = det3(m);
    if (std::abs(det) <= 1e-9) throw Error(ErrorKind::NonInvertible, "determinant below 1e-9");
    Homography r{};
    r[0] = (m[4] * m[8] - m[5] * m[7]) / det;
    r[1] = (m[2] * m[7] - m[1] * m[8]) / det;
    r[2] = (m[1] * m[5] - m[2] * m[4]) / det;
    r[3] = (m[5] * m[6] - m[3] * m[8]) / det;
    r[4] = (m[0] * m[8] - m[2] * m[6]) / det;
    r[5] = (m[2] * m[3] - m[0] * m[5]) / det;
    r[6] = (m[3] * m[7] - m[4] * m[6]) / det;
    r[7] = (m[1] * m[6] - m[0] * m[7]) / det;
    r[8] = (m[0] * m[4] - m[1] * m[3]) / det;
    return r;
}

/// Scales so that h[8] == 1.
inline Homography normalize_homography(Homography h) {
    if (std::abs(h[8]) < 1e-12) {
        throw Error(ErrorKind::NonInvertible, "homography with h[8] == 0 cannot be normalized");
    }
    const double s = h[8];
    for (double& x : h) x /= s;
    return h;
}

inline Homography to_homography(const TransformSpec& t) {
    using namespace transform;
    switch (t.kind()) {
    case TransformKind::Identity:
        return kIdentityHomography;
    case TransformKind::CropResize: {
        const auto& c = t.as<CropResize>();
        const double sx = c.out_w / c.w;
        const double sy = c.out_h / c.h;
        return {sx, 0, -c.x0 * sx, 0, sy, -c.y0 * sy, 0, 0, 1};
    }
    case TransformKind::Rotate: {
        const auto& r = t.as<Rotate>();
        const double cs = std::cos(r.theta);
        const double sn = std::sin(r.theta);
        const double cu = r.center.u;
        const double cv = r.center.v;
        return {cs, -sn, cu - cs * cu + sn * cv, sn, cs, cv - sn * cu - cs * cv, 0, 0, 1};
    }
    case TransformKind::Zoom: {
        const auto& z = t.as<Zoom>();
        return {z.scale, 0, z.center.u * (1 - z.scale), 0, z.scale, z.center.v * (1 - z.scale), 0, 0, 1};
    }
    case TransformKind::Perspective:
        return t.as<Perspective>().h;
    }
    return kIdentityHomography;
}

inline Point2 apply_homography(const Homography& h, Point2 p) {
    const double den = h[6] * p.u + h[7] * p.v + h[8];
    if (std::abs(den) <= 1e-12) {
        throw Error(ErrorKind::DegeneratePoint, "perspective denominator vanishes");
    }
    return {(h[0] * p.u + h[1] * p.v + h[2]) / den, (h[3] * p.u + h[4] * p.v + h[5]) / den};
}

inline Point2 apply_point(const TransformSpec& t, Point2 p) {
    if (t.kind() == TransformKind::Identity) return p;
    return apply_homography(to_homography(t), p);
}

inline TransformSpec invert(const TransformSpec& t) {
    using namespace transform;
    switch (t.kind()) {
    case TransformKind::Identity:
        return t;
    case TransformKind::Rotate: {
        auto r = t.as<Rotate>();
        r.theta = -r.theta;
        return r;
    }
    case TransformKind::Zoom: {
        auto z = t.as<Zoom>();
        z.scale = 1.0 / z.scale;
        return z;
    }
    case TransformKind::CropResize:
    case TransformKind::Perspective:
        return TransformSpec::from_homography(normalize_homography(mat_inverse(to_homography(t))));
    }
    return t;
}

/// Returns the transform that applies `first`, then `second`.
inline TransformSpec compose(const TransformSpec& first, const TransformSpec& second) {
    if (first.kind() == TransformKind::Identity) return second;
    if (second.kind() == TransformKind::Identity) return first;
    return TransformSpec::from_homography(
        normalize_homography(mat_mul(to_homography(second), to_homography(first))));
}

/// Conjugates an image-space transform into a grid that is `factor` times coarser.
inline TransformSpec rescale(const TransformSpec& t, double factor) {
    if (t.kind() == TransformKind::Identity || factor == 1.0) return t;
    const Homography up{factor, 0, 0, 0, factor, 0, 0, 0, 1};
    const Homography down{1 / factor, 0, 0, 0, 1 / factor, 0, 0, 0, 1};
    return TransformSpec::from_homography(normalize_homography(mat_mul(down, mat_mul(to_homography(t), up))));
}

// ---------------------------------------------------------------------------
// Bilinear sampling

/// The four taps of a bilinear sample. Indices are row-major offsets into the grid.
struct BilinearTaps {
    std::array<std::size_t, 4> index{};
    std::array<double, 4> weight{};
};

inline constexpr double kBoundsTolerance = 1e-9;

/// Computes bilinear taps at p; returns false when p lies outside [0,w-1]x[0,h-1].
inline bool bilinear_taps(int height, int width, Point2 p, BilinearTaps& taps) {
    if (!(p.u >= -kBoundsTolerance && p.u <= width - 1 + kBoundsTolerance && p.v >= -kBoundsTolerance &&
          p.v <= height - 1 + kBoundsTolerance)) {
        return false;
    }
    const double u = std::clamp(p.u, 0.0, static_cast<double>(width - 1));
    const double v = std::clamp(p.v, 0.0, static_cast<double>(height - 1));
    int u0 = static_cast<int>(std::floor(u));
    int v0 = static_cast<int>(std::floor(v));
    u0 = std::min(u0, std::max(width - 2, 0));
    v0 = std::min(v0, std::max(height - 2, 0));
    const int u1 = std::min(u0 + 1, width - 1);
    const int v1 = std::min(v0 + 1, height - 1);
    const double fu = u - u0;
    const double fv = v - v0;
    taps.index = {static_cast<std::size_t>(v0) * width + u0, static_cast<std::size_t>(v0) * width + u1,
                  static_cast<std::size_t>(v1) * width + u0, static_cast<std::size_t>(v1) * width + u1};
    taps.weight = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
    return true;
}

inline double sample(std::span<const double> data, const BilinearTaps& taps) {
    double s = 0;
    for (int k = 0; k < 4; ++k) s += taps.weight[k] * data[taps.index[k]];
    return s;
}

struct WarpResult {
    Grid2D values;
    Grid2D valid;  // 1 where the source sample was in bounds, 0 elsewhere
};

/// Resamples `m` into an out_h x out_w frame: each output cell pulls the bilinear
/// sample of m at the inverse-mapped location.
inline WarpResult warp_map(const Grid2D& m, const TransformSpec& t, int out_h, int out_w) {
    const Homography inv = to_homography(invert(t));
    WarpResult r{Grid2D(out_h, out_w, 0.0), Grid2D(out_h, out_w, 0.0)};
    BilinearTaps taps;
    for (int v = 0; v < out_h; ++v) {
        for (int u = 0; u < out_w; ++u) {
            Point2 src;
            try {
                src = apply_homography(inv, {double(u), double(v)});
            } catch (const Error&) {
                continue;
            }
            if (!bilinear_taps(m.height(), m.width(), src, taps)) continue;
            r.values.at(v, u) = sample(m.data(), taps);
            r.valid.at(v, u) = 1.0;
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Keypoint masks

inline double gaussian_kernel(double du, double dv, double sigma_u, double sigma_v) {
    return std::exp(-(du * du) / (2 * sigma_u * sigma_u) - (dv * dv) / (2 * sigma_v * sigma_v));
}

/// Sum of anisotropic Gaussians centered on the keypoints, evaluated at integer cells.
inline Grid2D gaussian_mask(std::span<const Point2> keypoints, double sigma_u, double sigma_v, int h, int w) {
    if (keypoints.empty()) throw Error(ErrorKind::EmptyKeypoints, "gaussian_mask needs at least one keypoint");
    if (!(sigma_u > 0 && sigma_v > 0)) throw Error(ErrorKind::InvalidConfig, "sigmas must be positive");
    Grid2D g(h, w, 0.0);
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            double s = 0;
            for (const auto& k : keypoints) s += gaussian_kernel(u - k.u, v - k.v, sigma_u, sigma_v);
            g.at(v, u) = s;
        }
    return g;
}

// ---------------------------------------------------------------------------
// Random transform families

/// Enabled transform kinds and their parameter ranges, for a width x height frame.
struct TransformFamily {
    bool identity = false;
    bool crop = true;
    bool rotate = true;
    bool zoom = true;
    bool perspective = true;
    double crop_scale_min = 0.5;
    double crop_scale_max = 1.0;
    double rotate_max = M_PI / 6;  // |theta| bound, radians
    double zoom_min = 0.8;
    double zoom_max = 1.25;
    double perspective_jitter = 0.1;  // corner displacement, fraction of the side
    int width = 32;
    int height = 32;

    static TransformFamily identity_only(int w = 32, int h = 32) {
        TransformFamily f;
        f.identity = true;
        f.crop = f.rotate = f.zoom = f.perspective = false;
        f.width = w;
        f.height = h;
        return f;
    }
};

/// Homography taking four source points to four destination points.
inline Homography homography_from_points(std::span<const Point2> src, std::span<const Point2> dst) {
    Eigen::Matrix<double, 8, 8> a;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = src[i].u, y = src[i].v, X = dst[i].u, Y = dst[i].v;
        a.row(2 * i) << x, y, 1, 0, 0, 0, -X * x, -X * y;
        a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -Y * x, -Y * y;
        b(2 * i) = X;
        b(2 * i + 1) = Y;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
    if (!lu.isInvertible()) throw Error(ErrorKind::DegenerateConfiguration, "degenerate corner configuration");
    const Eigen::Matrix<double, 8, 1> x = lu.solve(b);
    return {x(0), x(1), x(2), x(3), x(4), x(5), x(6), x(7), 1.0};
}

inline TransformSpec sample_transform(const TransformFamily& f, Rng& rng) {
    std::vector<TransformKind> kinds;
    if (f.identity) kinds.push_back(TransformKind::Identity);
    if (f.crop) kinds.push_back(TransformKind::CropResize);
    if (f.rotate) kinds.push_back(TransformKind::Rotate);
    if (f.zoom) kinds.push_back(TransformKind::Zoom);
    if (f.perspective) kinds.push_back(TransformKind::Perspective);
    if (kinds.empty()) throw Error(ErrorKind::EmptyFamily, "no transform kind enabled");

    const double W = f.width, H = f.height;
    const Point2 center{(W - 1) / 2, (H - 1) / 2};
    switch (kinds[uniform_index(rng, kinds.size())]) {
    case TransformKind::Identity:
        return TransformSpec::identity();
    case TransformKind::CropResize: {
        const double s = uniform(rng, f.crop_scale_min, f.crop_scale_max);
        const double w = s * W, h = s * H;
        const double x0 = uniform(rng, 0.0, W - w);
        const double y0 = uniform(rng, 0.0, H - h);
        return transform::CropResize{x0, y0, w, h, W, H};
    }
    case TransformKind::Rotate:
        return transform::Rotate{uniform(rng, -f.rotate_max, f.rotate_max), center};
    case TransformKind::Zoom:
        return transform::Zoom{std::exp(uniform(rng, std::log(f.zoom_min), std::log(f.zoom_max))), center};
    case TransformKind::Perspective: {
        const std::array<Point2, 4> src{Point2{0, 0}, Point2{W - 1, 0}, Point2{W - 1, H - 1}, Point2{0, H - 1}};
        std::array<Point2, 4> dst;
        for (int i = 0; i < 4; ++i) {
            dst[i] = {src[i].u + uniform(rng, -1, 1) * f.perspective_jitter * W,
                      src[i].v + uniform(rng, -1, 1) * f.perspective_jitter * H};
        }
        return TransformSpec::from_homography(homography_from_points(src, dst));
    }
    }
    return TransformSpec::identity();
}

inline TransformSpec sample_transform(const TransformFamily& f, std::uint64_t seed) {
    Rng rng(seed);
    return sample_transform(f, rng);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const TransformSpec& t) {
    using namespace transform;
    nlohmann::json j;
    j["kind"] = to_string(t.kind());
    nlohmann::json p = nlohmann::json::object();
    switch (t.kind()) {
    case TransformKind::Identity:
        break;
    case TransformKind::CropResize: {
        const auto& c = t.as<CropResize>();
        p = {{"x0", c.x0}, {"y0", c.y0}, {"w", c.w}, {"h", c.h}, {"out_w", c.out_w}, {"out_h", c.out_h}};
        break;
    }
    case TransformKind::Rotate: {
        const auto& r = t.as<Rotate>();
        p = {{"theta", r.theta}, {"center", {r.center.u, r.center.v}}};
        break;
    }
    case TransformKind::Zoom: {
        const auto& z = t.as<Zoom>();
        p = {{"scale", z.scale}, {"center", {z.center.u, z.center.v}}};
        break;
    }
    case TransformKind::Perspective:
        p = {{"h", t.as<Perspective>().h}};
        break;
    }
    j["params"] = p;
    return j;
}

inline TransformSpec transform_from_json(const nlohmann::json& j) {
    using namespace transform;
    try {
        const std::string kind = j.at("kind").get<std::string>();
        const nlohmann::json p = j.value("params", nlohmann::json::object());
        auto center = [&] { return Point2{p.at("center").at(0).get<double>(), p.at("center").at(1).get<double>()}; };
        if (kind == "Identity") return TransformSpec::identity();
        if (kind == "CropResize") {
            auto g = [&](const char* k) { return p.at(k).get<double>(); };
            return CropResize{g("x0"), g("y0"), g("w"), g("h"), g("out_w"), g("out_h")};
        }
        if (kind == "Rotate") return Rotate{p.at("theta").get<double>(), center()};
        if (kind == "Zoom") return Zoom{p.at("scale").get<double>(), center()};
        if (kind == "Perspective") return Perspective{p.at("h").get<Homography>()};
        throw Error(ErrorKind::ParseError, "unknown transform kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed transform: ") + e.what());
    }
}

}  // namespace taccl
