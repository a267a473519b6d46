#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "encoder.hpp"
#include "geometry.hpp"
#include "tensor_io.hpp"

namespace taccl {

struct GeneratorConfig {
    std::string name = "synthetic";
    int classes = 20;
    int per_class = 50;
    int train_classes = -1;  // -1: first half of the classes
    int channels = 3;
    int height = 32;
    int width = 32;
    double texture_scale = 8.0;  // typical grating wavelength, pixels
    double noise_sigma = 0.05;
    int jitter = 6;              // max integer shift of an instance, pixels
    int motifs = 2;
    double color_spread = 0.0;    // half-range of the per-class mean intensity around 0.5
    double motif_strength = 0.1;  // max per-channel blob amplitude
};

struct DatasetManifest {
    std::string name;
    int num_classes = 0;
    int per_class = 0;
    std::array<int, 3> image_shape{3, 32, 32};
    std::uint64_t seed = 0;
    std::vector<int> train_ids;
    std::vector<int> test_ids;
    std::vector<int> class_of;  // image id -> ground-truth class
    std::vector<TransformSpec> jitter;  // prototype -> instance transform per image
    double nn_accuracy = 0;
    double noise_sigma = 0;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<ImageTensor> images;  // indexed by image id

    std::size_t size() const { return images.size(); }
};

inline void validate(const GeneratorConfig& cfg) {
    if (cfg.classes < 2 || cfg.per_class < 2) throw Error(ErrorKind::InvalidShape, "need classes >= 2 and per_class >= 2");
    if (cfg.height < 16 || cfg.width < 16 || cfg.height % 4 != 0 || cfg.width % 4 != 0) {
        throw Error(ErrorKind::InvalidShape, "image sides must be >= 16 and divisible by 4");
    }
    if (cfg.channels != 3) throw Error(ErrorKind::InvalidShape, "images must have 3 channels");
    const int train = cfg.train_classes < 0 ? cfg.classes / 2 : cfg.train_classes;
    if (train < 1 || train >= cfg.classes) throw Error(ErrorKind::InvalidShape, "train_classes must leave test classes");
}

/// Rounds to the nearest float so in-memory images equal their f32 files.
inline double quantize_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

/// Leave-one-out 1-NN accuracy on raw pixels over (a subsample of) the images.
inline double raw_pixel_nn_accuracy(const std::vector<ImageTensor>& images, const std::vector<int>& labels,
                                    std::size_t max_images = 400) {
    std::vector<std::size_t> idx(images.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_images) {
        const double stride = static_cast<double>(idx.size()) / max_images;
        std::vector<std::size_t> sub;
        for (std::size_t i = 0; i < max_images; ++i) sub.push_back(static_cast<std::size_t>(i * stride));
        idx = sub;
    }
    std::size_t correct = 0;
    for (std::size_t a : idx) {
        double best = std::numeric_limits<double>::infinity();
        int best_label = -1;
        for (std::size_t b : idx) {
            if (a == b) continue;
            double s = 0;
            const auto& x = images[a].data;
            const auto& y = images[b].data;
            for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
            if (s < best) {
                best = s;
                best_label = labels[b];
            }
        }
        if (best_label == labels[a]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

namespace detail {

/// Renders one class prototype on a canvas: band-limited gratings per channel plus
/// class-specific colored blobs.
inline ImageTensor render_prototype(const GeneratorConfig& cfg, int canvas_h, int canvas_w, Rng& rng) {
    ImageTensor img(cfg.channels, canvas_h, canvas_w);
    struct Grating {
        double fx, fy, phase, amp;
    };
    for (int c = 0; c < cfg.channels; ++c) {
        const double base = 0.5 + uniform(rng, -cfg.color_spread, cfg.color_spread);
        std::vector<Grating> gs;
        for (int g = 0; g < 3; ++g) {
            const double wavelength = cfg.texture_scale * uniform(rng, 0.7, 1.6);
            const double angle = uniform(rng, 0.0, M_PI);
            gs.push_back({std::cos(angle) / wavelength, std::sin(angle) / wavelength, uniform(rng, 0.0, 2 * M_PI),
                          uniform(rng, 0.06, 0.16)});
        }
        for (int v = 0; v < canvas_h; ++v)
            for (int u = 0; u < canvas_w; ++u) {
                double s = base;
                for (const auto& g : gs) s += g.amp * std::cos(2 * M_PI * (g.fx * u + g.fy * v) + g.phase);
                img.at(c, v, u) = s;
            }
    }
    for (int k = 0; k < cfg.motifs; ++k) {
        const double cu = uniform(rng, 2.0, canvas_w - 3.0);
        const double cv = uniform(rng, 2.0, canvas_h - 3.0);
        const double radius = uniform(rng, 1.5, 3.0);
        const double a = cfg.motif_strength;
        std::array<double, 3> color{uniform(rng, -a, a), uniform(rng, -a, a), uniform(rng, -a, a)};
        for (int v = 0; v < canvas_h; ++v)
            for (int u = 0; u < canvas_w; ++u) {
                const double w = std::exp(-((u - cu) * (u - cu) + (v - cv) * (v - cv)) / (2 * radius * radius));
                for (int c = 0; c < cfg.channels; ++c) img.at(c, v, u) += w * color[c % 3];
            }
    }
    for (double& x : img.data) x = std::clamp(x, 0.0, 1.0);
    return img;
}

}  // namespace detail

/// Procedural dataset: each class is a textured prototype; instances are shifted
/// crops of it plus pixel noise. Train and test classes are disjoint.
inline Dataset generate(const GeneratorConfig& cfg, std::uint64_t seed, bool check_separability = true) {
    validate(cfg);
    const int J = cfg.jitter;
    const int ch = cfg.height + 2 * J;
    const int cw = cfg.width + 2 * J;
    const int train_classes = cfg.train_classes < 0 ? cfg.classes / 2 : cfg.train_classes;

    Dataset ds;
    auto& m = ds.manifest;
    m.name = cfg.name;
    m.num_classes = cfg.classes;
    m.per_class = cfg.per_class;
    m.image_shape = {cfg.channels, cfg.height, cfg.width};
    m.seed = seed;
    m.noise_sigma = cfg.noise_sigma;

    for (int cls = 0; cls < cfg.classes; ++cls) {
        Rng proto_rng(derive_seed(seed, 1000 + cls));
        const ImageTensor canvas = detail::render_prototype(cfg, ch, cw, proto_rng);
        Rng inst_rng(derive_seed(seed, 500000 + cls));
        for (int i = 0; i < cfg.per_class; ++i) {
            const int dx = J > 0 ? static_cast<int>(uniform_index(inst_rng, 2 * J + 1)) - J : 0;
            const int dy = J > 0 ? static_cast<int>(uniform_index(inst_rng, 2 * J + 1)) - J : 0;
            ImageTensor img(cfg.channels, cfg.height, cfg.width);
            for (int c = 0; c < cfg.channels; ++c)
                for (int v = 0; v < cfg.height; ++v)
                    for (int u = 0; u < cfg.width; ++u) {
                        double x = canvas.at(c, v + J + dy, u + J + dx);
                        if (cfg.noise_sigma > 0) x += normal(inst_rng, 0.0, cfg.noise_sigma);
                        img.at(c, v, u) = quantize_f32(std::clamp(x, 0.0, 1.0));
                    }
            const int id = static_cast<int>(ds.images.size());
            ds.images.push_back(std::move(img));
            m.class_of.push_back(cls);
            m.jitter.push_back(TransformSpec::translation(-dx, -dy));
            (cls < train_classes ? m.train_ids : m.test_ids).push_back(id);
        }
    }
    if (check_separability) {
        m.nn_accuracy = raw_pixel_nn_accuracy(ds.images, m.class_of);
        if (cfg.noise_sigma <= 0.05 && m.nn_accuracy < 0.8) {
            throw Error(ErrorKind::NotSeparable,
                        "raw-pixel nearest-neighbor accuracy " + std::to_string(m.nn_accuracy) + " below 0.8");
        }
    }
    return ds;
}

/// The noise-free prototype frame of a class (the unshifted center crop).
inline ImageTensor render_class_prototype(const GeneratorConfig& cfg, std::uint64_t seed, int cls) {
    const int J = cfg.jitter;
    Rng proto_rng(derive_seed(seed, 1000 + cls));
    const ImageTensor canvas = detail::render_prototype(cfg, cfg.height + 2 * J, cfg.width + 2 * J, proto_rng);
    ImageTensor img(cfg.channels, cfg.height, cfg.width);
    for (int c = 0; c < cfg.channels; ++c)
        for (int v = 0; v < cfg.height; ++v)
            for (int u = 0; u < cfg.width; ++u) img.at(c, v, u) = quantize_f32(canvas.at(c, v + J, u + J));
    return img;
}

// ---------------------------------------------------------------------------
// Image warps and augmentation

/// Warps every channel of x by t into the same frame; out-of-bounds pixels are 0.
inline ImageTensor warp_image(const ImageTensor& x, const TransformSpec& t) {
    ImageTensor out(x.channels, x.height, x.width, 0.0);
    if (t.kind() == TransformKind::Identity) return x;
    const Homography inv = to_homography(invert(t));
    const std::size_t plane = static_cast<std::size_t>(x.height) * x.width;
    BilinearTaps taps;
    for (int v = 0; v < x.height; ++v)
        for (int u = 0; u < x.width; ++u) {
            Point2 src;
            try {
                src = apply_homography(inv, {double(u), double(v)});
            } catch (const Error&) {
                continue;
            }
            if (!bilinear_taps(x.height, x.width, src, taps)) continue;
            for (int c = 0; c < x.channels; ++c) {
                std::span<const double> chan(x.data.data() + c * plane, plane);
                out.at(c, v, u) = sample(chan, taps);
            }
        }
    return out;
}

struct PairSample {
    ImageTensor x_prime;
    TransformSpec t;
};

/// x' = t(x) for a transform drawn from the family (framed to x's size).
inline PairSample make_pair(const ImageTensor& x, TransformFamily family, std::uint64_t seed) {
    family.width = x.width;
    family.height = x.height;
    const TransformSpec t = sample_transform(family, seed);
    return {warp_image(x, t), t};
}

inline ImageTensor crop(const ImageTensor& x, int top, int left, int h, int w) {
    ImageTensor out(x.channels, h, w);
    for (int c = 0; c < x.channels; ++c)
        for (int v = 0; v < h; ++v)
            for (int u = 0; u < w; ++u) out.at(c, v, u) = x.at(c, top + v, left + u);
    return out;
}

inline ImageTensor hflip(const ImageTensor& x) {
    ImageTensor out(x.channels, x.height, x.width);
    for (int c = 0; c < x.channels; ++c)
        for (int v = 0; v < x.height; ++v)
            for (int u = 0; u < x.width; ++u) out.at(c, v, u) = x.at(c, v, x.width - 1 - u);
    return out;
}

struct CropBox {
    int top = 0, left = 0, height = 0, width = 0;
    bool flipped = false;
};

/// Random crop offsets and flip decision for one augmentation draw.
inline CropBox sample_augmentation(int src_h, int src_w, int crop_h, int crop_w, std::uint64_t seed) {
    if (crop_h > src_h || crop_w > src_w || crop_h <= 0 || crop_w <= 0) {
        throw Error(ErrorKind::CropTooLarge, "crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                                                 " exceeds image " + std::to_string(src_h) + "x" + std::to_string(src_w));
    }
    Rng rng(seed);
    CropBox b;
    b.height = crop_h;
    b.width = crop_w;
    b.top = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(src_h - crop_h + 1)));
    b.left = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(src_w - crop_w + 1)));
    b.flipped = uniform(rng, 0.0, 1.0) < 0.5;
    return b;
}

/// Training-time augmentation: random crop plus a fair-coin horizontal flip.
inline ImageTensor augment(const ImageTensor& x, int crop_h, int crop_w, std::uint64_t seed) {
    const CropBox b = sample_augmentation(x.height, x.width, crop_h, crop_w, seed);
    ImageTensor out = crop(x, b.top, b.left, b.height, b.width);
    return b.flipped ? hflip(out) : out;
}

/// Test-time path: deterministic center crop.
inline ImageTensor center_crop(const ImageTensor& x, int crop_h, int crop_w) {
    if (crop_h > x.height || crop_w > x.width) throw Error(ErrorKind::CropTooLarge, "center crop exceeds image");
    return crop(x, (x.height - crop_h) / 2, (x.width - crop_w) / 2, crop_h, crop_w);
}

// ---------------------------------------------------------------------------
// Persistence: manifest.json plus images/<id>.tact (f32, C x H x W).

inline TensorFile to_tensor(const ImageTensor& x, DType dtype = DType::F32) {
    return {dtype,
            {static_cast<std::uint32_t>(x.channels), static_cast<std::uint32_t>(x.height),
             static_cast<std::uint32_t>(x.width)},
            x.data};
}

inline ImageTensor to_image(const TensorFile& t) {
    if (t.dims.size() != 3) throw Error(ErrorKind::FormatError, "image tensors must be 3-D");
    ImageTensor x(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]));
    x.data = t.values;
    return x;
}

inline std::string image_filename(int id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06d.tact", id);
    return buf;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json jit = nlohmann::json::array();
    for (const auto& t : m.jitter) jit.push_back(to_json(t));
    return {{"name", m.name},
            {"num_classes", m.num_classes},
            {"per_class", m.per_class},
            {"image_shape", m.image_shape},
            {"seed", m.seed},
            {"split", {{"train", m.train_ids}, {"test", m.test_ids}}},
            {"class_of", m.class_of},
            {"jitter", jit},
            {"nn_accuracy", m.nn_accuracy},
            {"noise_sigma", m.noise_sigma}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.num_classes = j.at("num_classes").get<int>();
        m.per_class = j.at("per_class").get<int>();
        m.image_shape = j.at("image_shape").get<std::array<int, 3>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.train_ids = j.at("split").at("train").get<std::vector<int>>();
        m.test_ids = j.at("split").at("test").get<std::vector<int>>();
        m.class_of = j.at("class_of").get<std::vector<int>>();
        if (j.contains("jitter"))
            for (const auto& t : j.at("jitter")) m.jitter.push_back(transform_from_json(t));
        m.nn_accuracy = j.value("nn_accuracy", 0.0);
        m.noise_sigma = j.value("noise_sigma", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("manifest: ") + e.what());
    }
    return m;
}

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir / "images");
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        save_tensor(dir / "images" / image_filename(static_cast<int>(i)), to_tensor(ds.images[i]));
    }
    std::ofstream f(dir / "manifest.json");
    if (!f) throw Error(ErrorKind::IoError, "cannot write manifest.json in " + dir.string());
    f << to_json(ds.manifest).dump(1) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw Error(ErrorKind::IoError, "missing manifest.json in " + dir.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("manifest.json: ") + e.what());
    }
    Dataset ds;
    ds.manifest = manifest_from_json(j);
    for (std::size_t i = 0; i < ds.manifest.class_of.size(); ++i) {
        ds.images.push_back(to_image(load_tensor(dir / "images" / image_filename(static_cast<int>(i)))));
    }
    return ds;
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig c;
    try {
        c.name = j.value("name", c.name);
        c.classes = j.value("classes", c.classes);
        c.per_class = j.value("per_class", c.per_class);
        c.train_classes = j.value("train_classes", c.train_classes);
        if (j.contains("shape")) {
            const auto s = j.at("shape").get<std::vector<int>>();
            if (s.size() != 3) throw Error(ErrorKind::InvalidShape, "shape must be [C, H, W]");
            c.channels = s[0];
            c.height = s[1];
            c.width = s[2];
        }
        c.texture_scale = j.value("texture_scale", c.texture_scale);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        c.jitter = j.value("jitter", c.jitter);
        c.motifs = j.value("motifs", c.motifs);
        c.color_spread = j.value("color_spread", c.color_spread);
        c.motif_strength = j.value("motif_strength", c.motif_strength);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("generator config: ") + e.what());
    }
    return c;
}

}  // namespace taccl
