#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "tensor_io.hpp"

namespace taccl {

/// K cluster centers in feature space (K x d).
struct ClusterModel {
    Matrix centers;
    int k = 0;
    double inertia = 0;
    int iteration_count = 0;
    std::uint64_t seed = 0;
    std::vector<double> inertia_history;  // inertia after each assignment step

    std::size_t dim() const { return centers.cols; }
};

struct KMeansOptions {
    int max_iter = 100;
    double tol = 1e-6;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Index of the nearest center (lowest index wins ties) and the squared distance to it.
inline std::pair<int, double> nearest_center(std::span<const double> f, const Matrix& centers) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.rows; ++c) {
        const double d = squared_distance(f, centers.row(c));
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return {best, best_d};
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding. Empty clusters are re-seeded with the
/// point farthest from its assigned center.
inline ClusterModel kmeans_fit(const Matrix& features, int k, std::uint64_t seed, KMeansOptions opt = {}) {
    const std::size_t n = features.rows;
    const std::size_t d = features.cols;
    if (k < 1) throw Error(ErrorKind::InvalidConfig, "k must be >= 1");
    if (n < static_cast<std::size_t>(k)) {
        throw Error(ErrorKind::TooFewPoints, std::to_string(n) + " points for k=" + std::to_string(k));
    }
    if (!all_finite(features.data)) throw Error(ErrorKind::InvalidConfig, "non-finite features");

    Rng rng(derive_seed(seed, 0x6b6d));
    ClusterModel m;
    m.k = k;
    m.seed = seed;
    m.centers = Matrix(k, d);

    // k-means++ seeding.
    std::vector<double> dist2(n, std::numeric_limits<double>::infinity());
    std::size_t first = uniform_index(rng, n);
    std::copy_n(features.row(first).begin(), d, m.centers.row(0).begin());
    for (int c = 1; c < k; ++c) {
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], detail::squared_distance(features.row(i), m.centers.row(c - 1)));
            total += dist2[i];
        }
        std::size_t pick = 0;
        if (total > 0) {
            const double r = uniform(rng, 0.0, total);
            double acc = 0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist2[i];
                if (r < acc && dist2[i] > 0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = uniform_index(rng, n);
        }
        std::copy_n(features.row(pick).begin(), d, m.centers.row(c).begin());
    }

    std::vector<int> labels(n, 0);
    std::vector<double> point_d2(n, 0.0);
    auto assign_all = [&] {
        double inertia = 0;
        for (std::size_t i = 0; i < n; ++i) {
            auto [c, d2] = detail::nearest_center(features.row(i), m.centers);
            labels[i] = c;
            point_d2[i] = d2;
            inertia += d2;
        }
        return inertia;
    };

    m.inertia = assign_all();
    m.inertia_history.push_back(m.inertia);
    for (int it = 0; it < opt.max_iter; ++it) {
        Matrix next(k, d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto row = next.row(labels[i]);
            auto f = features.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] += f[j];
            ++counts[labels[i]];
        }
        std::vector<bool> taken(n, false);
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (double& x : next.row(c)) x /= static_cast<double>(counts[c]);
                continue;
            }
            // Re-seed with the farthest point not already used for another empty cluster.
            std::size_t far = 0;
            double far_d = -1;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && point_d2[i] > far_d) {
                    far_d = point_d2[i];
                    far = i;
                }
            }
            taken[far] = true;
            std::copy_n(features.row(far).begin(), d, next.row(c).begin());
        }
        double shift = 0;
        for (int c = 0; c < k; ++c) shift = std::max(shift, std::sqrt(detail::squared_distance(next.row(c), m.centers.row(c))));
        m.centers = std::move(next);
        m.inertia = assign_all();
        m.inertia_history.push_back(m.inertia);
        m.iteration_count = it + 1;
        if (shift < opt.tol) break;
    }
    return m;
}

inline std::vector<int> assign(const Matrix& features, const ClusterModel& model) {
    if (features.cols != model.dim()) throw Error(ErrorKind::DimensionMismatch, "feature/center dimension mismatch");
    std::vector<int> labels(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) labels[i] = detail::nearest_center(features.row(i), model.centers).first;
    return labels;
}

struct NearestTwo {
    int plus_index = 0;
    double d_plus = 0;
    int minus_index = 1;
    double d_minus = 0;
};

/// Nearest and second-nearest centers (Euclidean), ties broken by lowest index.
inline NearestTwo nearest_two(std::span<const double> f, const ClusterModel& model) {
    if (model.centers.rows < 2) throw Error(ErrorKind::TooFewCenters, "nearest_two needs k >= 2");
    if (f.size() != model.dim()) throw Error(ErrorKind::DimensionMismatch, "feature/center dimension mismatch");
    int i1 = -1, i2 = -1;
    double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
    for (std::size_t c = 0; c < model.centers.rows; ++c) {
        const double d = detail::squared_distance(f, model.centers.row(c));
        if (d < d1) {
            i2 = i1;
            d2 = d1;
            i1 = static_cast<int>(c);
            d1 = d;
        } else if (d < d2) {
            i2 = static_cast<int>(c);
            d2 = d;
        }
    }
    return {i1, std::sqrt(d1), i2, std::sqrt(d2)};
}

inline void save_cluster_model(const std::filesystem::path& dir, const ClusterModel& m) {
    std::filesystem::create_directories(dir);
    save_tensor(dir / "centers.tact", to_tensor(m.centers));
    nlohmann::json j = {{"k", m.k}, {"inertia", m.inertia}, {"seed", m.seed}};
    std::ofstream f(dir / "clusters.json");
    if (!f) throw Error(ErrorKind::IoError, "cannot write clusters.json");
    f << j.dump(2) << "\n";
}

inline ClusterModel load_cluster_model(const std::filesystem::path& dir) {
    ClusterModel m;
    m.centers = to_matrix(load_tensor(dir / "centers.tact"));
    std::ifstream f(dir / "clusters.json");
    if (!f) throw Error(ErrorKind::IoError, "missing clusters.json");
    const auto j = nlohmann::json::parse(f);
    m.k = j.at("k").get<int>();
    m.inertia = j.at("inertia").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
}

}  // namespace taccl
