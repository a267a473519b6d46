#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <vector>

#include <json.hpp>

#include "../clustering.hpp"
#include "../data.hpp"
#include "../encoder.hpp"
#include "../losses.hpp"
#include "../matching.hpp"
#include "../membank.hpp"
#include "config.hpp"
#include "eval.hpp"
#include "optim.hpp"

namespace taccl {

struct ReclusterEvent {
    int epoch = 0;
    long step = 0;
    double inertia = 0;
};

struct TrainResult {
    ModelParams params;
    ModelParams initial;
    std::optional<ClusterModel> clusters;  // the last fit
    std::vector<ReclusterEvent> reclusters;
    std::vector<double> epoch_mean_loss;
    long steps = 0;
    std::size_t matched_pairs = 0;
};

namespace detail {

enum SeedTag : std::uint64_t {
    kTagInit = 1,
    kTagBatch = 2,
    kTagAugment = 3,
    kTagPair = 4,
    kTagCluster = 5,
    kTagMatch = 6,
    kTagPick = 7,
};

inline std::uint64_t step_seed(std::uint64_t seed, SeedTag tag, std::uint64_t a, std::uint64_t b = 0) {
    return derive_seed(derive_seed(derive_seed(seed, tag), a), b);
}

inline std::string epoch_dirname(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04d", epoch);
    return buf;
}

class JsonLines {
public:
    explicit JsonLines(const std::filesystem::path& path) : f_(path) {
        if (!f_) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    void write(const nlohmann::json& j) { f_ << j.dump() << "\n"; }

private:
    std::ofstream f_;
};

/// One training example: the anchor view plus its partner and supervision.
struct TrainingPair {
    ImageTensor x;
    ImageTensor x_prime;
    Supervision supervision;
};

}  // namespace detail

/// Trains the encoder on the training split. When `out_dir` is non-empty it receives
/// metrics.jsonl (one loss line per step plus re-cluster events), a checkpoint and
/// cluster model per re-cluster boundary under checkpoints/, and the final
/// checkpoint/, clusters/ and config.json.
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds, const std::filesystem::path& out_dir = {}) {
    cfg.validate();
    const auto& man = ds.manifest;
    const auto& ids = man.train_ids;
    if (ids.empty()) throw Error(ErrorKind::InvalidConfig, "empty training split");
    if (man.image_shape[0] != arch::kInChannels) throw Error(ErrorKind::InvalidShape, "encoder expects 3 channels");
    const int H = man.image_shape[1];
    const int W = man.image_shape[2];
    const int crop = cfg.crop > 0 ? cfg.crop : std::min(H, W);
    if (crop > H || crop > W) throw Error(ErrorKind::CropTooLarge, "training crop exceeds the image");

    int k = cfg.k_clusters;
    if (k < 0) {
        std::set<int> classes;
        for (int id : ids) classes.insert(man.class_of.at(id));
        k = static_cast<int>(classes.size());
    }
    if (k < 2) throw Error(ErrorKind::InvalidConfig, "need at least two clusters");
    if (static_cast<std::size_t>(k) > ids.size()) throw Error(ErrorKind::TooFewPoints, "more clusters than images");

    const int B = cfg.batch_size();
    const std::size_t capacity = cfg.bank_capacity > 0 ? cfg.bank_capacity : static_cast<std::size_t>(8 * B);
    const long steps_per_epoch =
        cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : static_cast<long>((ids.size() + B - 1) / B);

    TrainResult res;
    res.params = init_params(cfg.d, derive_seed(cfg.seed, detail::kTagInit));
    res.initial = res.params;
    AdamState adam = AdamState::zeros_for(res.params);
    const AdamOptions adam_opt{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay, cfg.decoupled_weight_decay};
    MemoryBank bank(capacity, static_cast<std::size_t>(cfg.d));

    std::optional<detail::JsonLines> log;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(out_dir / "config.json") << to_json(cfg).dump(2) << "\n";
        log.emplace(out_dir / "metrics.jsonl");
    }

    // Matched sub-image pairs, keyed by the anchor image's position in the split.
    std::vector<std::vector<std::size_t>> pairs_of(ids.size());
    std::vector<SubImagePair> matched;
    if (cfg.supervision != SupervisionMode::SelfTransform) {
        PairExtractionConfig pc = cfg.pairs;
        pc.ransac.seed = derive_seed(cfg.seed, detail::kTagMatch);
        matched = extract_pairs(ds.images, ids, pc);
        std::map<int, std::size_t> pos_of;
        for (std::size_t i = 0; i < ids.size(); ++i) pos_of[ids[i]] = i;
        for (std::size_t i = 0; i < matched.size(); ++i) pairs_of[pos_of.at(matched[i].img_a)].push_back(i);
        res.matched_pairs = matched.size();
    }

    const bool need_pair = cfg.weights.lambda_tac > 0 || cfg.weights.lambda_f > 0;
    LossWeights weights = cfg.weights;
    if (cfg.f_pre_normalization) weights.lambda_f = 0;  // handled on the raw embeddings below

    std::vector<int> labels(ids.size(), 0);
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch % cfg.recluster_every == 0) {
            const Matrix feats = embed_images(res.params, ds.images, ids, cfg.crop > 0 ? crop : -1);
            res.clusters = kmeans_fit(feats, k, detail::step_seed(cfg.seed, detail::kTagCluster, epoch));
            labels = assign(feats, *res.clusters);
            if (cfg.flush_on_recluster) bank.clear();
            res.reclusters.push_back({epoch, step, res.clusters->inertia});
            if (log) {
                log->write({{"event", "recluster"}, {"epoch", epoch}, {"step", step}, {"k", k},
                            {"inertia", res.clusters->inertia}});
                const auto dir = out_dir / "checkpoints" / detail::epoch_dirname(epoch);
                save_checkpoint(dir, res.params);
                save_cluster_model(dir / "clusters", *res.clusters);
            }
        }

        double epoch_loss = 0;
        for (long s = 0; s < steps_per_epoch; ++s, ++step) {
            const auto batch = sample_batch(labels, cfg.classes_per_batch,
                                            detail::step_seed(cfg.seed, detail::kTagBatch, step),
                                            cfg.samples_per_class);
            bool matched_step = cfg.supervision == SupervisionMode::MatchedPairs;
            if (cfg.supervision == SupervisionMode::Mixed) {
                const long cycle = cfg.mixed_self_steps + cfg.mixed_matched_steps;
                matched_step = step % cycle >= cfg.mixed_self_steps;
            }

            std::vector<detail::TrainingPair> tp;
            std::vector<int> batch_labels;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                const int pos = batch[i];
                const ImageTensor& img = ds.images.at(ids[pos]);
                batch_labels.push_back(labels[pos]);
                if (matched_step && !pairs_of[pos].empty()) {
                    Rng pick(detail::step_seed(cfg.seed, detail::kTagPick, step, i));
                    const SubImagePair& sp = matched[pairs_of[pos][uniform_index(pick, pairs_of[pos].size())]];
                    KeypointSupervision ks{{}, cfg.keypoint_sigma, cfg.keypoint_sigma};
                    const double f = arch::kDownsampleFactor;
                    for (const auto& m : sp.keypoints.pairs)
                        ks.pairs.push_back({{m.a.u / f, m.a.v / f}, {m.b.u / f, m.b.v / f}});
                    tp.push_back({sp.crop_a, sp.crop_b, std::move(ks)});
                    continue;
                }
                ImageTensor x = augment(img, crop, crop, detail::step_seed(cfg.seed, detail::kTagAugment, step, i));
                if (!need_pair) {
                    tp.push_back({std::move(x), {}, TransformSpec::identity()});
                    continue;
                }
                auto ps = make_pair(x, cfg.family, detail::step_seed(cfg.seed, detail::kTagPair, step, i));
                tp.push_back({std::move(x), std::move(ps.x_prime), rescale(ps.t, arch::kDownsampleFactor)});
            }

            std::vector<EncoderOutput> fa, fb;
            std::vector<PairOutputs> outs;
            for (const auto& t : tp) {
                fa.push_back(forward(res.params, t.x));
                const bool paired = !t.x_prime.data.empty();
                if (paired) fb.push_back(forward(res.params, t.x_prime));
                const EncoderOutput& a = fa.back();
                const EncoderOutput& b = paired ? fb.back() : a;
                outs.push_back({a.embedding.vec, b.embedding.vec, a.attention, b.attention, t.supervision});
                if (!paired) fb.push_back({});
            }

            const BankView view = bank.snapshot();
            LossReport rep = total_loss(outs, batch_labels, view, &*res.clusters, weights);

            std::vector<std::vector<double>> raw_grad_a(tp.size()), raw_grad_b(tp.size());
            if (cfg.f_pre_normalization) {
                const double inv_b = 1.0 / static_cast<double>(tp.size());
                double f_sum = 0;
                for (std::size_t i = 0; i < tp.size(); ++i) {
                    if (tp[i].x_prime.data.empty()) continue;
                    const auto fs = feature_similarity_loss(fa[i].cache.z, fb[i].cache.z);
                    f_sum += fs.value * inv_b;
                    raw_grad_a[i] = fs.grad_f;
                    raw_grad_b[i] = fs.grad_f_prime;
                    for (auto& g : raw_grad_a[i]) g *= cfg.weights.lambda_f * inv_b;
                    for (auto& g : raw_grad_b[i]) g *= cfg.weights.lambda_f * inv_b;
                }
                rep.f = f_sum;
                rep.value += cfg.weights.lambda_f * f_sum;
            }

            if (!std::isfinite(rep.value)) {
                if (!out_dir.empty()) {
                    nlohmann::json dump = rep.to_json(step);
                    std::vector<int> batch_ids;
                    for (int pos : batch) batch_ids.push_back(ids[pos]);
                    dump["epoch"] = epoch;
                    dump["image_ids"] = batch_ids;
                    dump["labels"] = batch_labels;
                    std::ofstream(out_dir / "diagnostic.json") << dump.dump(2) << "\n";
                }
                throw Error(ErrorKind::NonFiniteLoss, "non-finite loss at step " + std::to_string(step));
            }

            ParamGrads grads = zeros_like(res.params);
            for (std::size_t i = 0; i < tp.size(); ++i) {
                const bool paired = !tp[i].x_prime.data.empty();
                if (paired) {
                    accumulate(grads, backward(res.params, fa[i].cache, rep.grad_f[i], rep.grad_m[i], raw_grad_a[i]));
                    accumulate(grads,
                               backward(res.params, fb[i].cache, rep.grad_f_prime[i], rep.grad_m_prime[i], raw_grad_b[i]));
                } else {
                    // Both branches are the same forward pass.
                    std::vector<double> gf = rep.grad_f[i];
                    for (std::size_t k2 = 0; k2 < gf.size(); ++k2) gf[k2] += rep.grad_f_prime[i][k2];
                    Grid2D gm = rep.grad_m[i];
                    for (std::size_t k2 = 0; k2 < gm.size(); ++k2) gm.data()[k2] += rep.grad_m_prime[i].data()[k2];
                    accumulate(grads, backward(res.params, fa[i].cache, gf, gm));
                }
            }
            adam_step(res.params, grads, adam, adam_opt);

            std::vector<std::vector<double>> anchors;
            for (const auto& o : outs) anchors.push_back(o.f);
            bank.enqueue_batch(anchors, batch_labels, step);

            epoch_loss += rep.value;
            if (log) log->write(rep.to_json(step));
        }
        res.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
    }
    res.steps = step;

    if (!out_dir.empty()) {
        save_checkpoint(out_dir / "checkpoint", res.params);
        if (res.clusters) save_cluster_model(out_dir / "clusters", *res.clusters);
    }
    return res;
}

}  // namespace taccl
