#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace taccl {

enum class ErrorKind {
    DegeneratePoint,
    NonInvertible,
    EmptyKeypoints,
    EmptyFamily,
    ShapeMismatch,
    StaleCache,
    DimensionMismatch,
    TooFewCenters,
    TooFewPoints,
    BatchTooLarge,
    ImageTooSmall,
    TooFewMatches,
    DegenerateConfiguration,
    ParseError,
    UnknownImageId,
    InvalidShape,
    CropTooLarge,
    IoError,
    FormatError,
    TooFewClasses,
    AllSingletons,
    UnknownLoss,
    IncompatibleCheckpoint,
    InvalidConfig,
    NonFiniteLoss,
    NotSeparable,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::DegeneratePoint: return "DegeneratePoint";
    case ErrorKind::NonInvertible: return "NonInvertible";
    case ErrorKind::EmptyKeypoints: return "EmptyKeypoints";
    case ErrorKind::EmptyFamily: return "EmptyFamily";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TooFewCenters: return "TooFewCenters";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::BatchTooLarge: return "BatchTooLarge";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::TooFewMatches: return "TooFewMatches";
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UnknownImageId: return "UnknownImageId";
    case ErrorKind::InvalidShape: return "InvalidShape";
    case ErrorKind::CropTooLarge: return "CropTooLarge";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::TooFewClasses: return "TooFewClasses";
    case ErrorKind::AllSingletons: return "AllSingletons";
    case ErrorKind::UnknownLoss: return "UnknownLoss";
    case ErrorKind::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NotSeparable: return "NotSeparable";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the ErrorKind tags.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Validation errors (bad input, bad config) as opposed to runtime failures.
inline bool is_validation_error(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::NonFiniteLoss:
        return false;
    default:
        return true;
    }
}

/// Image-plane coordinate: u is the column, v the row. Pixel centers sit on integers.
struct Point2 {
    double u = 0.0;
    double v = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Row-major height x width grid of reals; carrier for attention maps and masks.
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(int height, int width, double fill = 0.0)
        : height_(height), width_(width) {
        if (height <= 0 || width <= 0) {
            throw Error(ErrorKind::InvalidShape, "grid dimensions must be positive");
        }
        data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
    }
    Grid2D(int height, int width, std::vector<double> data)
        : height_(height), width_(width), data_(std::move(data)) {
        if (height <= 0 || width <= 0 ||
            data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
            throw Error(ErrorKind::InvalidShape, "grid data does not match its dimensions");
        }
    }

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& at(int v, int u) { return data_[static_cast<std::size_t>(v) * width_ + u]; }
    double at(int v, int u) const { return data_[static_cast<std::size_t>(v) * width_ + u]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool same_shape(const Grid2D& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Grid2D&, const Grid2D&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a tag (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Uniform real in [lo, hi) built from raw engine output so results do not
/// depend on the standard library's distribution implementation.
inline double uniform(Rng& rng, double lo, double hi) {
    const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * unit;
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    // Lemire-style rejection to stay unbiased and portable.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = rng();
        if (r >= threshold) return static_cast<std::size_t>(r % bound);
    }
}

/// Standard normal via Box-Muller on the portable uniform source.
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform(rng, 0.0, 1.0);
    while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
    const double u2 = uniform(rng, 0.0, 1.0);
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline bool all_finite(std::span<const double> values) {
    for (double x : values) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Dense row-major matrix of doubles. Used for feature tables (N x d).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace taccl
