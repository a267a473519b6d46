#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "clustering.hpp"
#include "core.hpp"
#include "geometry.hpp"
#include "membank.hpp"

namespace taccl {

enum class Reduction { Mean, Sum };

struct TacResult {
    double value = 0;
    Grid2D grad_m;
    Grid2D grad_m_prime;
    int valid_count = 0;
    bool empty_overlap = false;  // set when no cell was comparable; value and grads are 0
};

/// Attention consistency between M and M' under t, where t maps M's grid onto M''s:
///   sum over comparable cells of (M(u,v) - M'(t(u,v)))^2, M' bilinearly sampled.
/// A cell is comparable when its image lands inside M'. If `prime_valid` is given,
/// the bilinear taps must also all fall on cells flagged valid there.
inline TacResult tac_loss(const Grid2D& m, const Grid2D& m_prime, const TransformSpec& t,
                          Reduction reduction = Reduction::Mean, const Grid2D* prime_valid = nullptr) {
    if (!all_finite(m.data()) || !all_finite(m_prime.data())) {
        throw Error(ErrorKind::InvalidConfig, "attention maps must be finite");
    }
    if (prime_valid && !prime_valid->same_shape(m_prime)) {
        throw Error(ErrorKind::ShapeMismatch, "validity mask does not match M'");
    }
    TacResult r{0, Grid2D(m.height(), m.width(), 0.0), Grid2D(m_prime.height(), m_prime.width(), 0.0), 0, false};
    const Homography h = to_homography(t);

    struct Term {
        std::size_t cell;
        BilinearTaps taps;
        double residual;
    };
    std::vector<Term> terms;
    terms.reserve(m.size());
    BilinearTaps taps;
    const auto mp = m_prime.data();
    for (int v = 0; v < m.height(); ++v) {
        for (int u = 0; u < m.width(); ++u) {
            Point2 q;
            try {
                q = apply_homography(h, {double(u), double(v)});
            } catch (const Error&) {
                continue;
            }
            if (!bilinear_taps(m_prime.height(), m_prime.width(), q, taps)) continue;
            if (prime_valid) {
                bool ok = true;
                for (int k = 0; k < 4; ++k)
                    if (taps.weight[k] > 0 && prime_valid->data()[taps.index[k]] == 0.0) ok = false;
                if (!ok) continue;
            }
            const std::size_t cell = static_cast<std::size_t>(v) * m.width() + u;
            terms.push_back({cell, taps, m.data()[cell] - sample(mp, taps)});
        }
    }
    r.valid_count = static_cast<int>(terms.size());
    if (terms.empty()) {
        r.empty_overlap = true;
        return r;
    }
    const double scale = reduction == Reduction::Mean ? 1.0 / static_cast<double>(terms.size()) : 1.0;
    double sum = 0;
    for (const auto& term : terms) {
        sum += term.residual * term.residual;
        const double g = 2 * term.residual * scale;
        r.grad_m.data()[term.cell] += g;
        for (int k = 0; k < 4; ++k) r.grad_m_prime.data()[term.taps.index[k]] -= g * term.taps.weight[k];
    }
    r.value = sum * scale;
    return r;
}

struct KeypointPair {
    Point2 a;  // location in M
    Point2 b;  // matched location in M'
};

/// Keypoint-masked consistency: mean over the common grid extent of (M*G - M'*G')^2,
/// with G, G' the Gaussian neighborhoods of the matched keypoints in each map.
inline TacResult tac_loss_masked(const Grid2D& m, const Grid2D& m_prime, std::span<const KeypointPair> kp,
                                 double sigma_u, double sigma_v, Reduction reduction = Reduction::Mean) {
    if (kp.empty()) throw Error(ErrorKind::EmptyKeypoints, "tac_loss_masked needs at least one matched pair");
    const int h = std::min(m.height(), m_prime.height());
    const int w = std::min(m.width(), m_prime.width());
    std::vector<Point2> pa, pb;
    for (const auto& p : kp) {
        pa.push_back(p.a);
        pb.push_back(p.b);
    }
    const Grid2D gamma = gaussian_mask(pa, sigma_u, sigma_v, h, w);
    const Grid2D gamma_prime = gaussian_mask(pb, sigma_u, sigma_v, h, w);
    TacResult r{0, Grid2D(m.height(), m.width(), 0.0), Grid2D(m_prime.height(), m_prime.width(), 0.0), h * w, false};
    const double scale = reduction == Reduction::Mean ? 1.0 / (h * w) : 1.0;
    double sum = 0;
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            const double res = m.at(v, u) * gamma.at(v, u) - m_prime.at(v, u) * gamma_prime.at(v, u);
            sum += res * res;
            r.grad_m.at(v, u) = 2 * res * gamma.at(v, u) * scale;
            r.grad_m_prime.at(v, u) = -2 * res * gamma_prime.at(v, u) * scale;
        }
    r.value = sum * scale;
    return r;
}

struct FeatureSimilarityResult {
    double value = 0;
    std::vector<double> grad_f;
    std::vector<double> grad_f_prime;
};

/// ||F - F'||_2 with the zero subgradient at coincidence.
inline FeatureSimilarityResult feature_similarity_loss(std::span<const double> f, std::span<const double> f_prime) {
    if (f.size() != f_prime.size()) throw Error(ErrorKind::DimensionMismatch, "embedding dimensions differ");
    FeatureSimilarityResult r{l2_distance(f, f_prime), std::vector<double>(f.size(), 0.0),
                              std::vector<double>(f.size(), 0.0)};
    if (r.value > 1e-12) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            r.grad_f[i] = (f[i] - f_prime[i]) / r.value;
            r.grad_f_prime[i] = -r.grad_f[i];
        }
    }
    return r;
}

struct ContrastiveClusteringResult {
    double value = 0;
    Matrix grads;                // B x d
    std::vector<double> ratios;  // per-feature d+/d-
    std::vector<NearestTwo> assignments;
};

inline constexpr double kDistanceFloor = 1e-12;

/// Mean over the batch of d+(F)/d-(F): distance to the nearest center over distance
/// to the second-nearest. Centers are constants. Pass `frozen` to keep the center
/// indices of a previous call.
inline ContrastiveClusteringResult contrastive_clustering_loss(const Matrix& batch, const ClusterModel& clusters,
                                                               const std::vector<NearestTwo>* frozen = nullptr) {
    if (clusters.centers.rows < 2) throw Error(ErrorKind::TooFewCenters, "contrastive clustering needs k >= 2");
    if (batch.rows == 0) throw Error(ErrorKind::InvalidConfig, "empty batch");
    if (batch.cols != clusters.dim()) throw Error(ErrorKind::DimensionMismatch, "feature/center dimension mismatch");
    if (frozen && frozen->size() != batch.rows) throw Error(ErrorKind::DimensionMismatch, "frozen assignment count");
    ContrastiveClusteringResult r{0, Matrix(batch.rows, batch.cols, 0.0), {}, {}};
    const double inv_b = 1.0 / static_cast<double>(batch.rows);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        const auto f = batch.row(i);
        NearestTwo nt;
        if (frozen) {
            nt = (*frozen)[i];
            nt.d_plus = l2_distance(f, clusters.centers.row(nt.plus_index));
            nt.d_minus = l2_distance(f, clusters.centers.row(nt.minus_index));
        } else {
            nt = nearest_two(f, clusters);
        }
        r.assignments.push_back(nt);
        const double a = nt.d_plus;
        const double b = std::max(nt.d_minus, kDistanceFloor);
        const double ratio = a / b;
        r.ratios.push_back(ratio);
        r.value += ratio * inv_b;
        const auto cp = clusters.centers.row(nt.plus_index);
        const auto cm = clusters.centers.row(nt.minus_index);
        auto g = r.grads.row(i);
        for (std::size_t j = 0; j < f.size(); ++j) {
            const double da = a > kDistanceFloor ? (f[j] - cp[j]) / a : 0.0;
            const double db = nt.d_minus > kDistanceFloor ? (f[j] - cm[j]) / b : 0.0;
            g[j] = (da * b - a * db) / (b * b) * inv_b;
        }
    }
    return r;
}

/// Multi-similarity loss constants.
struct MsParams {
    double alpha = 2.0;
    double beta = 50.0;
    double lambda = 1.0;  // similarity margin
    double epsilon = 0.1;  // mining slack
};

/// Mined candidate indices per anchor. Index j < B addresses batch row j;
/// j >= B addresses bank row j - B.
struct MiningSets {
    std::vector<std::vector<std::size_t>> positives;
    std::vector<std::vector<std::size_t>> negatives;
};

struct MsResult {
    double value = 0;
    Matrix grads;  // B x d, w.r.t. batch embeddings
    int active_anchors = 0;
    MiningSets mining;
};

namespace detail {

/// log(1 + sum_i exp(x_i)) without overflow.
inline double log1p_sum_exp(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double m = 0.0;
    for (double v : x) m = std::max(m, v);
    if (m == 0.0) {
        double t = 0;
        for (double v : x) t += std::exp(v);
        return std::log1p(t);
    }
    double s = std::exp(-m);
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

}  // namespace detail

/// Multi-similarity loss over batch anchors, with candidates drawn from the rest of
/// the batch and from the memory bank. Bank entries are constants. Pass `frozen` to
/// reuse the mining sets of a previous call.
inline MsResult ms_loss(const Matrix& batch, std::span<const int> labels, const BankView& bank, const MsParams& p,
                        const MiningSets* frozen = nullptr) {
    const std::size_t B = batch.rows;
    const std::size_t M = bank.size();
    if (labels.size() != B) throw Error(ErrorKind::DimensionMismatch, "labels/batch length mismatch");
    if (M > 0 && bank.vecs.cols != batch.cols) throw Error(ErrorKind::DimensionMismatch, "batch/bank dimension mismatch");
    if (!(p.alpha > 0 && p.beta > 0)) throw Error(ErrorKind::InvalidConfig, "alpha and beta must be positive");

    MsResult r{0, Matrix(B, batch.cols, 0.0), 0, {}};
    r.mining.positives.resize(B);
    r.mining.negatives.resize(B);
    auto candidate = [&](std::size_t j) { return j < B ? batch.row(j) : bank.vecs.row(j - B); };
    auto label_of = [&](std::size_t j) { return j < B ? labels[j] : bank.labels[j - B]; };

    std::vector<double> anchor_loss(B, 0.0);
    std::vector<std::vector<std::pair<std::size_t, double>>> dsim(B);  // (candidate, dL/dS)
    for (std::size_t a = 0; a < B; ++a) {
        std::vector<std::size_t> pos, neg;
        if (frozen) {
            pos = frozen->positives[a];
            neg = frozen->negatives[a];
        } else {
            std::vector<std::pair<std::size_t, double>> all_pos, all_neg;
            for (std::size_t j = 0; j < B + M; ++j) {
                if (j == a) continue;
                const double s = dot(batch.row(a), candidate(j));
                (label_of(j) == labels[a] ? all_pos : all_neg).emplace_back(j, s);
            }
            double min_pos = std::numeric_limits<double>::infinity();
            double max_neg = -std::numeric_limits<double>::infinity();
            for (auto& [j, s] : all_pos) min_pos = std::min(min_pos, s);
            for (auto& [j, s] : all_neg) max_neg = std::max(max_neg, s);
            for (auto& [j, s] : all_neg)
                if (all_pos.empty() || s > min_pos - p.epsilon) neg.push_back(j);
            for (auto& [j, s] : all_pos)
                if (all_neg.empty() || s < max_neg + p.epsilon) pos.push_back(j);
        }
        r.mining.positives[a] = pos;
        r.mining.negatives[a] = neg;
        if (pos.empty() && neg.empty()) continue;
        ++r.active_anchors;

        std::vector<double> xp, xn;
        for (auto j : pos) xp.push_back(-p.alpha * (dot(batch.row(a), candidate(j)) - p.lambda));
        for (auto j : neg) xn.push_back(p.beta * (dot(batch.row(a), candidate(j)) - p.lambda));
        const double lp = detail::log1p_sum_exp(xp);
        const double ln = detail::log1p_sum_exp(xn);
        anchor_loss[a] = lp / p.alpha + ln / p.beta;
        // d/dS of (1/alpha) log(1 + sum exp(-alpha (S - lambda))) = -exp(x_i) / (1 + sum exp(x)) = -exp(x_i - lp)
        for (std::size_t i = 0; i < pos.size(); ++i) dsim[a].emplace_back(pos[i], -std::exp(xp[i] - lp));
        for (std::size_t i = 0; i < neg.size(); ++i) dsim[a].emplace_back(neg[i], std::exp(xn[i] - ln));
    }
    if (r.active_anchors == 0) return r;
    const double inv = 1.0 / r.active_anchors;
    for (std::size_t a = 0; a < B; ++a) {
        r.value += anchor_loss[a] * inv;
        auto ga = r.grads.row(a);
        const auto fa = batch.row(a);
        for (auto [j, g] : dsim[a]) {
            const auto fj = candidate(j);
            for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g * inv * fj[k];
            if (j < B) {
                auto gj = r.grads.row(j);
                for (std::size_t k = 0; k < gj.size(); ++k) gj[k] += g * inv * fa[k];
            }
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Weighted total

struct LossWeights {
    double lambda_tac = 1.0;
    double lambda_cc = 1.0;
    double lambda_f = 1.0;
    bool use_ms = true;
    bool ccl_anchor_label = false;  // C+ is the pseudo-label's center instead of the nearest one
    MsParams ms;
    Reduction tac_reduction = Reduction::Mean;
};

/// Matched keypoints in attention coordinates for the masked consistency term.
struct KeypointSupervision {
    std::vector<KeypointPair> pairs;
    double sigma_u = 1.0;
    double sigma_v = 1.0;
};

using Supervision = std::variant<TransformSpec, KeypointSupervision>;

/// Outputs of both Siamese branches for one training pair.
struct PairOutputs {
    std::vector<double> f;
    std::vector<double> f_prime;
    Grid2D m;
    Grid2D m_prime;
    Supervision supervision;
};

struct LossReport {
    double value = 0;
    double ms = 0, tac = 0, cc = 0, f = 0;
    int valid_count = 0;
    bool cc_active = false;
    std::vector<std::vector<double>> grad_f;
    std::vector<std::vector<double>> grad_f_prime;
    std::vector<Grid2D> grad_m;
    std::vector<Grid2D> grad_m_prime;

    nlohmann::json to_json(long step) const {
        return {{"step", step}, {"total", value}, {"ms", ms}, {"tac", tac}, {"cc", cc}, {"f", f}, {"valid_cells", valid_count}};
    }
};

/// ms + lambda_tac * tac + lambda_cc * cc + lambda_f * f over a batch of pairs. The
/// anchor embeddings (pairs[i].f) with `labels` form the MS and CC batch; tac and f
/// are averaged over pairs. `clusters` may be null, which disables the CC term.
inline LossReport total_loss(std::span<const PairOutputs> pairs, std::span<const int> labels, const BankView& bank,
                             const ClusterModel* clusters, const LossWeights& w) {
    const std::size_t B = pairs.size();
    if (B == 0) throw Error(ErrorKind::InvalidConfig, "empty batch");
    if (labels.size() != B) throw Error(ErrorKind::DimensionMismatch, "labels/batch length mismatch");
    const std::size_t d = pairs[0].f.size();
    LossReport rep;
    rep.grad_f.assign(B, std::vector<double>(d, 0.0));
    rep.grad_f_prime.assign(B, std::vector<double>(d, 0.0));
    for (const auto& p : pairs) {
        if (p.f.size() != d || p.f_prime.size() != d) throw Error(ErrorKind::DimensionMismatch, "embedding dimension mismatch");
        rep.grad_m.emplace_back(p.m.height(), p.m.width(), 0.0);
        rep.grad_m_prime.emplace_back(p.m_prime.height(), p.m_prime.width(), 0.0);
    }

    Matrix anchors(B, d);
    for (std::size_t i = 0; i < B; ++i) std::copy(pairs[i].f.begin(), pairs[i].f.end(), anchors.row(i).begin());

    if (w.use_ms) {
        const MsResult ms = ms_loss(anchors, labels, bank, w.ms);
        rep.ms = ms.value;
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t k = 0; k < d; ++k) rep.grad_f[i][k] += ms.grads(i, k);
    }

    if (clusters && clusters->centers.rows >= 2) {
        // Label anchoring: C+ is the center of the pseudo-label, C- the nearest other center.
        std::vector<NearestTwo> by_label;
        if (w.ccl_anchor_label) {
            const int K = static_cast<int>(clusters->centers.rows);
            for (std::size_t i = 0; i < B; ++i) {
                if (labels[i] < 0 || labels[i] >= K) throw Error(ErrorKind::DimensionMismatch, "pseudo-label outside the cluster model");
                NearestTwo nt;
                nt.plus_index = labels[i];
                nt.minus_index = -1;
                double best = 0;
                for (int c = 0; c < K; ++c) {
                    if (c == labels[i]) continue;
                    const double dc = l2_distance(anchors.row(i), clusters->centers.row(c));
                    if (nt.minus_index < 0 || dc < best) {
                        nt.minus_index = c;
                        best = dc;
                    }
                }
                by_label.push_back(nt);
            }
        }
        const auto cc = contrastive_clustering_loss(anchors, *clusters, w.ccl_anchor_label ? &by_label : nullptr);
        rep.cc = cc.value;
        rep.cc_active = true;
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t k = 0; k < d; ++k) rep.grad_f[i][k] += w.lambda_cc * cc.grads(i, k);
    }

    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t i = 0; i < B; ++i) {
        const auto& p = pairs[i];
        const auto fs = feature_similarity_loss(p.f, p.f_prime);
        rep.f += fs.value * inv_b;
        for (std::size_t k = 0; k < d; ++k) {
            rep.grad_f[i][k] += w.lambda_f * inv_b * fs.grad_f[k];
            rep.grad_f_prime[i][k] += w.lambda_f * inv_b * fs.grad_f_prime[k];
        }

        const TacResult tac = std::holds_alternative<TransformSpec>(p.supervision)
                                  ? tac_loss(p.m, p.m_prime, std::get<TransformSpec>(p.supervision), w.tac_reduction)
                                  : [&] {
                                        const auto& ks = std::get<KeypointSupervision>(p.supervision);
                                        return tac_loss_masked(p.m, p.m_prime, ks.pairs, ks.sigma_u, ks.sigma_v,
                                                               w.tac_reduction);
                                    }();
        rep.tac += tac.value * inv_b;
        rep.valid_count += tac.valid_count;
        const double s = w.lambda_tac * inv_b;
        for (std::size_t k = 0; k < tac.grad_m.size(); ++k) rep.grad_m[i].data()[k] += s * tac.grad_m.data()[k];
        for (std::size_t k = 0; k < tac.grad_m_prime.size(); ++k)
            rep.grad_m_prime[i].data()[k] += s * tac.grad_m_prime.data()[k];
    }

    rep.value = rep.ms + w.lambda_tac * rep.tac + w.lambda_cc * rep.cc + w.lambda_f * rep.f;
    return rep;
}

}  // namespace taccl
