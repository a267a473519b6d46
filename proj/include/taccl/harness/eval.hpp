#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include <json.hpp>

#include "../clustering.hpp"
#include "../data.hpp"
#include "../encoder.hpp"
#include "../losses.hpp"
#include "../tensor_io.hpp"

namespace taccl {

struct EvalReport {
    std::map<int, double> recall_at;
    double mean_contrastive_ratio = 0;
    int num_queries = 0;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json rec = nlohmann::json::object();
    for (const auto& [k, v] : r.recall_at) rec[std::to_string(k)] = v;
    return {{"recall_at", rec}, {"mean_contrastive_ratio", r.mean_contrastive_ratio}, {"num_queries", r.num_queries}};
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0 || nb == 0) return 0;
    return dot(a, b) / (na * nb);
}

/// Recall@K by cosine similarity; ties rank the lower index first. Queries whose
/// class has no other member are left out.
inline EvalReport recall_at_k(const Matrix& emb, std::span<const int> labels, std::span<const int> ks) {
    const std::size_t n = emb.rows;
    if (labels.size() != n) throw Error(ErrorKind::DimensionMismatch, "labels/embeddings length mismatch");
    if (n < 2) throw Error(ErrorKind::AllSingletons, "need at least two embeddings");
    std::map<int, int> class_size;
    for (int l : labels) ++class_size[l];

    EvalReport r;
    std::map<int, int> hits;
    for (int k : ks) {
        if (k < 1) throw Error(ErrorKind::InvalidConfig, "recall k must be positive");
        hits[k] = 0;
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t q = 0; q < n; ++q) {
        if (class_size[labels[q]] < 2) continue;
        ++r.num_queries;
        ranked.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != q) ranked.emplace_back(-cosine(emb.row(q), emb.row(j)), j);
        std::sort(ranked.begin(), ranked.end());
        std::size_t first_hit = n;
        for (std::size_t pos = 0; pos < ranked.size(); ++pos)
            if (labels[ranked[pos].second] == labels[q]) {
                first_hit = pos;
                break;
            }
        for (auto& [k, h] : hits)
            if (first_hit < static_cast<std::size_t>(k)) ++h;
    }
    if (r.num_queries == 0) throw Error(ErrorKind::AllSingletons, "every class is a singleton");
    for (const auto& [k, h] : hits) r.recall_at[k] = static_cast<double>(h) / r.num_queries;
    return r;
}

/// Embeddings of the given images through the deterministic test path (center crop
/// to `crop`, or the full image when crop <= 0).
inline Matrix embed_images(const ModelParams& p, const std::vector<ImageTensor>& images, std::span<const int> ids,
                           int crop = -1) {
    Matrix out(ids.size(), static_cast<std::size_t>(p.d));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const ImageTensor& img = images.at(ids[i]);
        const auto fw = crop > 0 ? forward(p, center_crop(img, crop, crop)) : forward(p, img);
        std::copy(fw.embedding.vec.begin(), fw.embedding.vec.end(), out.row(i).begin());
    }
    return out;
}

/// Mean of d+/d- under a K-means fit of the embeddings.
inline double mean_contrastive_ratio(const Matrix& emb, int k, std::uint64_t seed) {
    const ClusterModel model = kmeans_fit(emb, k, seed);
    return contrastive_clustering_loss(emb, model).value;
}

struct EvalOptions {
    std::vector<int> ks{1, 2, 4, 8};
    int crop = -1;
    int k_clusters = -1;  // -1: number of test classes
    std::uint64_t seed = 0;
};

struct EvalResult {
    EvalReport report;
    Matrix embeddings;     // test images x d
    std::vector<int> ids;  // image id of each embedding row
};

inline EvalResult evaluate(const ModelParams& p, const Dataset& ds, const EvalOptions& opt = {}) {
    const auto& m = ds.manifest;
    if (m.image_shape[0] != arch::kInChannels) {
        throw Error(ErrorKind::IncompatibleCheckpoint, "dataset channel count does not match the encoder");
    }
    EvalResult r;
    r.ids = m.test_ids;
    r.embeddings = embed_images(p, ds.images, r.ids, opt.crop);
    std::vector<int> labels;
    std::set<int> classes;
    for (int id : r.ids) {
        labels.push_back(m.class_of.at(id));
        classes.insert(m.class_of.at(id));
    }
    r.report = recall_at_k(r.embeddings, labels, opt.ks);
    const int k = opt.k_clusters > 0 ? opt.k_clusters : static_cast<int>(classes.size());
    if (k >= 2 && static_cast<std::size_t>(k) <= r.ids.size()) {
        r.report.mean_contrastive_ratio = mean_contrastive_ratio(r.embeddings, k, derive_seed(opt.seed, 0xe7a1));
    }
    return r;
}

/// Writes embeddings.tact, ids.json and eval.json.
inline void write_evaluation(const std::filesystem::path& dir, const EvalResult& r) {
    std::filesystem::create_directories(dir);
    save_tensor(dir / "embeddings.tact", to_tensor(r.embeddings));
    std::ofstream ids(dir / "ids.json");
    std::ofstream ev(dir / "eval.json");
    if (!ids || !ev) throw Error(ErrorKind::IoError, "cannot write evaluation outputs to " + dir.string());
    ids << nlohmann::json(r.ids).dump() << "\n";
    ev << to_json(r.report).dump(2) << "\n";
}

}  // namespace taccl
