#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../core.hpp"
#include "../geometry.hpp"
#include "../losses.hpp"
#include "../matching.hpp"

namespace taccl {

enum class SupervisionMode { SelfTransform, MatchedPairs, Mixed };

inline std::string to_string(SupervisionMode m) {
    switch (m) {
        case SupervisionMode::SelfTransform: return "self_transform";
        case SupervisionMode::MatchedPairs: return "matched_pairs";
        case SupervisionMode::Mixed: return "mixed";
    }
    return "?";
}

inline SupervisionMode supervision_mode_from_string(const std::string& s) {
    if (s == "self_transform") return SupervisionMode::SelfTransform;
    if (s == "matched_pairs") return SupervisionMode::MatchedPairs;
    if (s == "mixed") return SupervisionMode::Mixed;
    throw Error(ErrorKind::InvalidConfig, "unknown supervision mode '" + s + "'");
}

struct TrainConfig {
    int d = 32;                 // desk default; the "paper" preset uses 512
    int k_clusters = -1;        // -1: number of training classes in the dataset
    int classes_per_batch = 4;  // P
    int samples_per_class = 5;
    double lr = 1e-3;
    double weight_decay = 5e-4;
    bool decoupled_weight_decay = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 30;
    int steps_per_epoch = -1;   // -1: ceil(train images / batch size)
    int recluster_every = 20;
    int crop = -1;              // training crop side; -1: full image
    LossWeights weights = [] {
        LossWeights w;
        w.ccl_anchor_label = true;
        return w;
    }();
    bool f_pre_normalization = false;  // L_F on raw rather than normalized embeddings
    TransformFamily family;
    int bank_capacity = -1;     // -1: 8x batch size
    bool flush_on_recluster = true;
    SupervisionMode supervision = SupervisionMode::SelfTransform;
    int mixed_self_steps = 1;     // mixed mode: self-transform steps per cycle
    int mixed_matched_steps = 1;  // mixed mode: matched-pair steps per cycle
    PairExtractionConfig pairs;
    double keypoint_sigma = 1.0;  // Gaussian mask width in attention cells
    std::vector<int> recall_ks{1, 2, 4, 8};
    std::uint64_t seed = 0;

    int batch_size() const { return classes_per_batch * samples_per_class; }

    /// Embedding size and cluster count from the paper's setup.
    static TrainConfig paper() {
        TrainConfig c;
        c.d = 512;
        return c;
    }

    /// Desk reference run: the feature-similarity term is off because, at this scale,
    /// it drives the embeddings into a collapsed state (see README).
    static TrainConfig reference() {
        TrainConfig c;
        c.weights.lambda_f = 0;
        return c;
    }

    void validate() const {
        auto require = [](bool ok, const std::string& what) {
            if (!ok) throw Error(ErrorKind::InvalidConfig, what);
        };
        require(d >= 1, "d must be positive");
        require(k_clusters == -1 || k_clusters >= 2, "k_clusters must be >= 2");
        require(classes_per_batch >= 1, "classes_per_batch must be positive");
        require(samples_per_class >= 1, "samples_per_class must be positive");
        require(lr > 0, "lr must be positive");
        require(weight_decay >= 0, "weight_decay must be non-negative");
        require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "betas must lie in [0, 1)");
        require(adam_eps > 0, "adam_eps must be positive");
        require(epochs >= 0, "epochs must be non-negative");
        require(steps_per_epoch == -1 || steps_per_epoch >= 1, "steps_per_epoch must be positive");
        require(recluster_every >= 1, "recluster_every must be positive");
        require(crop == -1 || (crop >= 8 && crop % 4 == 0), "crop must be >= 8 and divisible by 4");
        require(weights.lambda_tac >= 0 && weights.lambda_cc >= 0 && weights.lambda_f >= 0, "loss weights must be >= 0");
        require(weights.ms.alpha > 0 && weights.ms.beta > 0, "MS alpha and beta must be positive");
        require(bank_capacity == -1 || bank_capacity >= batch_size(), "bank_capacity must hold one batch");
        require(mixed_self_steps >= 0 && mixed_matched_steps >= 0 && mixed_self_steps + mixed_matched_steps > 0,
                "mixed ratio must have a positive total");
        require(keypoint_sigma > 0, "keypoint_sigma must be positive");
        for (int k : recall_ks) require(k >= 1, "recall ks must be positive");
    }
};

inline nlohmann::json to_json(const TransformFamily& f) {
    return {{"identity", f.identity},
            {"crop", f.crop},
            {"rotate", f.rotate},
            {"zoom", f.zoom},
            {"perspective", f.perspective},
            {"crop_scale_min", f.crop_scale_min},
            {"crop_scale_max", f.crop_scale_max},
            {"rotate_max", f.rotate_max},
            {"zoom_min", f.zoom_min},
            {"zoom_max", f.zoom_max},
            {"perspective_jitter", f.perspective_jitter}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
    const auto& w = c.weights;
    const auto& p = c.pairs;
    return {{"d", c.d},
            {"k_clusters", c.k_clusters},
            {"classes_per_batch", c.classes_per_batch},
            {"samples_per_class", c.samples_per_class},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"decoupled_weight_decay", c.decoupled_weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"epochs", c.epochs},
            {"steps_per_epoch", c.steps_per_epoch},
            {"recluster_every", c.recluster_every},
            {"crop", c.crop},
            {"loss",
             {{"lambda_tac", w.lambda_tac},
              {"lambda_cc", w.lambda_cc},
              {"lambda_f", w.lambda_f},
              {"use_ms", w.use_ms},
              {"ccl_anchor", w.ccl_anchor_label ? "label" : "nearest"},
              {"tac_reduction", w.tac_reduction == Reduction::Mean ? "mean" : "sum"},
              {"f_pre_normalization", c.f_pre_normalization},
              {"ms", {{"alpha", w.ms.alpha}, {"beta", w.ms.beta}, {"lambda", w.ms.lambda}, {"epsilon", w.ms.epsilon}}}}},
            {"family", to_json(c.family)},
            {"bank_capacity", c.bank_capacity},
            {"flush_on_recluster", c.flush_on_recluster},
            {"supervision", to_string(c.supervision)},
            {"mixed_ratio", {c.mixed_self_steps, c.mixed_matched_steps}},
            {"pairs",
             {{"tau", p.tau},
              {"top_m", p.top_m},
              {"margin", p.margin},
              {"candidates", p.candidates},
              {"min_inliers", p.min_inliers},
              {"patch", p.match.patch},
              {"stride", p.match.stride},
              {"min_score", p.match.min_score},
              {"ransac_iters", p.ransac.iters},
              {"inlier_tol", p.ransac.inlier_tol}}},
            {"keypoint_sigma", c.keypoint_sigma},
            {"recall_ks", c.recall_ks},
            {"seed", c.seed}};
}

/// Reads a config; absent keys keep their defaults. `"preset"` picks the starting
/// point: "desk" (default), "reference" or "paper".
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    try {
        const auto preset = j.value("preset", std::string("desk"));
        TrainConfig c;
        if (preset == "paper") c = TrainConfig::paper();
        else if (preset == "reference") c = TrainConfig::reference();
        else if (preset != "desk") throw Error(ErrorKind::InvalidConfig, "unknown preset '" + preset + "'");
        c.d = j.value("d", c.d);
        c.k_clusters = j.value("k_clusters", c.k_clusters);
        c.classes_per_batch = j.value("classes_per_batch", c.classes_per_batch);
        c.samples_per_class = j.value("samples_per_class", c.samples_per_class);
        c.lr = j.value("lr", c.lr);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.decoupled_weight_decay = j.value("decoupled_weight_decay", c.decoupled_weight_decay);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.epochs = j.value("epochs", c.epochs);
        c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
        c.recluster_every = j.value("recluster_every", c.recluster_every);
        c.crop = j.value("crop", c.crop);
        if (j.contains("loss")) {
            const auto& l = j.at("loss");
            auto& w = c.weights;
            w.lambda_tac = l.value("lambda_tac", w.lambda_tac);
            w.lambda_cc = l.value("lambda_cc", w.lambda_cc);
            w.lambda_f = l.value("lambda_f", w.lambda_f);
            w.use_ms = l.value("use_ms", w.use_ms);
            const auto anchor = l.value("ccl_anchor", std::string(w.ccl_anchor_label ? "label" : "nearest"));
            if (anchor != "label" && anchor != "nearest") throw Error(ErrorKind::InvalidConfig, "ccl_anchor must be label or nearest");
            w.ccl_anchor_label = anchor == "label";
            const auto red = l.value("tac_reduction", std::string("mean"));
            if (red != "mean" && red != "sum") throw Error(ErrorKind::InvalidConfig, "tac_reduction must be mean or sum");
            w.tac_reduction = red == "mean" ? Reduction::Mean : Reduction::Sum;
            c.f_pre_normalization = l.value("f_pre_normalization", c.f_pre_normalization);
            if (l.contains("ms")) {
                const auto& m = l.at("ms");
                w.ms.alpha = m.value("alpha", w.ms.alpha);
                w.ms.beta = m.value("beta", w.ms.beta);
                w.ms.lambda = m.value("lambda", w.ms.lambda);
                w.ms.epsilon = m.value("epsilon", w.ms.epsilon);
            }
        }
        if (j.contains("family")) {
            const auto& f = j.at("family");
            auto& t = c.family;
            t.identity = f.value("identity", t.identity);
            t.crop = f.value("crop", t.crop);
            t.rotate = f.value("rotate", t.rotate);
            t.zoom = f.value("zoom", t.zoom);
            t.perspective = f.value("perspective", t.perspective);
            t.crop_scale_min = f.value("crop_scale_min", t.crop_scale_min);
            t.crop_scale_max = f.value("crop_scale_max", t.crop_scale_max);
            t.rotate_max = f.value("rotate_max", t.rotate_max);
            t.zoom_min = f.value("zoom_min", t.zoom_min);
            t.zoom_max = f.value("zoom_max", t.zoom_max);
            t.perspective_jitter = f.value("perspective_jitter", t.perspective_jitter);
        }
        c.bank_capacity = j.value("bank_capacity", c.bank_capacity);
        c.flush_on_recluster = j.value("flush_on_recluster", c.flush_on_recluster);
        if (j.contains("supervision")) c.supervision = supervision_mode_from_string(j.at("supervision").get<std::string>());
        if (j.contains("mixed_ratio")) {
            const auto r = j.at("mixed_ratio").get<std::vector<int>>();
            if (r.size() != 2) throw Error(ErrorKind::InvalidConfig, "mixed_ratio must be [self, matched]");
            c.mixed_self_steps = r[0];
            c.mixed_matched_steps = r[1];
        }
        if (j.contains("pairs")) {
            const auto& p = j.at("pairs");
            auto& e = c.pairs;
            e.tau = p.value("tau", e.tau);
            e.top_m = p.value("top_m", e.top_m);
            e.margin = p.value("margin", e.margin);
            e.candidates = p.value("candidates", e.candidates);
            e.min_inliers = p.value("min_inliers", e.min_inliers);
            e.match.patch = p.value("patch", e.match.patch);
            e.match.stride = p.value("stride", e.match.stride);
            e.match.min_score = p.value("min_score", e.match.min_score);
            e.ransac.iters = p.value("ransac_iters", e.ransac.iters);
            e.ransac.inlier_tol = p.value("inlier_tol", e.ransac.inlier_tol);
        }
        c.keypoint_sigma = j.value("keypoint_sigma", c.keypoint_sigma);
        c.recall_ks = j.value("recall_ks", c.recall_ks);
        c.seed = j.value("seed", c.seed);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("train config: ") + e.what());
    }
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

}  // namespace taccl
