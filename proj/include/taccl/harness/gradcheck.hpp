#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "../clustering.hpp"
#include "../encoder.hpp"
#include "../geometry.hpp"
#include "../losses.hpp"
#include "../membank.hpp"

namespace taccl {

/// Central difference of f along every coordinate of x.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h, std::span<const std::size_t> coords = {}) {
    std::vector<std::size_t> all;
    if (coords.empty()) {
        all.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) all[i] = i;
        coords = all;
    }
    std::vector<double> g;
    g.reserve(coords.size());
    for (std::size_t i : coords) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double fp = f(x);
        x[i] = x0 - h;
        const double fm = f(x);
        x[i] = x0;
        g.push_back((fp - fm) / (2 * h));
    }
    return g;
}

/// ||a - n|| / max(||a||, ||n||), or 0 when both vanish.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
    if (analytic.size() != numeric.size()) throw Error(ErrorKind::DimensionMismatch, "gradient sizes differ");
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    const double denom = std::sqrt(std::max(na, nn));
    return denom < 1e-300 ? 0.0 : std::sqrt(diff) / denom;
}

inline const std::vector<std::string>& gradcheck_targets() {
    static const std::vector<std::string> names{"quadratic", "tac",           "tac_masked", "feature_similarity",
                                                "ccl",       "ms",            "encoder"};
    return names;
}

struct GradcheckReport {
    std::string target;
    int trials = 0;
    double max_relative_error = 0;
};

namespace detail {

struct GradInstance {
    std::vector<double> x;
    std::vector<double> analytic;
    std::function<double(const std::vector<double>&)> f;
    std::vector<std::size_t> coords;  // empty: every coordinate
};

inline Grid2D random_grid(Rng& rng, int h, int w) {
    Grid2D g(h, w, 0.0);
    for (double& v : g.data()) v = uniform(rng, 0.0, 1.0);
    return g;
}

inline std::vector<double> random_unit(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = normal(rng);
    const double n = l2_norm(v);
    for (double& x : v) x /= n;
    return v;
}

inline GradInstance tac_instance(Rng& rng) {
    const int n = 8;
    const double c = (n - 1) / 2.0;
    const TransformSpec t = transform::Rotate{uniform(rng, -M_PI, M_PI), {c, c}};
    const Grid2D m = random_grid(rng, n, n), mp = random_grid(rng, n, n);
    GradInstance g;
    g.x = m.values();
    g.x.insert(g.x.end(), mp.values().begin(), mp.values().end());
    const auto r = tac_loss(m, mp, t);
    g.analytic = r.grad_m.values();
    g.analytic.insert(g.analytic.end(), r.grad_m_prime.values().begin(), r.grad_m_prime.values().end());
    g.f = [t, n](const std::vector<double>& x) {
        const Grid2D a(n, n, std::vector<double>(x.begin(), x.begin() + n * n));
        const Grid2D b(n, n, std::vector<double>(x.begin() + n * n, x.end()));
        return tac_loss(a, b, t).value;
    };
    return g;
}

inline GradInstance tac_masked_instance(Rng& rng) {
    const int h = 6, w = 7, hp = 5, wp = 8;
    const Grid2D m = random_grid(rng, h, w), mp = random_grid(rng, hp, wp);
    std::vector<KeypointPair> kp;
    const int count = 1 + static_cast<int>(uniform_index(rng, 4));
    for (int i = 0; i < count; ++i)
        kp.push_back({{uniform(rng, 0, w - 1), uniform(rng, 0, h - 1)}, {uniform(rng, 0, wp - 1), uniform(rng, 0, hp - 1)}});
    const double su = uniform(rng, 0.7, 2.0), sv = uniform(rng, 0.7, 2.0);
    GradInstance g;
    g.x = m.values();
    g.x.insert(g.x.end(), mp.values().begin(), mp.values().end());
    const auto r = tac_loss_masked(m, mp, kp, su, sv);
    g.analytic = r.grad_m.values();
    g.analytic.insert(g.analytic.end(), r.grad_m_prime.values().begin(), r.grad_m_prime.values().end());
    g.f = [=](const std::vector<double>& x) {
        const Grid2D a(h, w, std::vector<double>(x.begin(), x.begin() + h * w));
        const Grid2D b(hp, wp, std::vector<double>(x.begin() + h * w, x.end()));
        return tac_loss_masked(a, b, kp, su, sv).value;
    };
    return g;
}

inline GradInstance feature_similarity_instance(Rng& rng) {
    const std::size_t d = 8;
    const auto f = random_unit(rng, d), fp = random_unit(rng, d);
    GradInstance g;
    g.x = f;
    g.x.insert(g.x.end(), fp.begin(), fp.end());
    const auto r = feature_similarity_loss(f, fp);
    g.analytic = r.grad_f;
    g.analytic.insert(g.analytic.end(), r.grad_f_prime.begin(), r.grad_f_prime.end());
    g.f = [d](const std::vector<double>& x) {
        return feature_similarity_loss(std::span(x).first(d), std::span(x).subspan(d)).value;
    };
    return g;
}

inline GradInstance ccl_instance(Rng& rng) {
    const std::size_t B = 6, d = 5, K = 4;
    ClusterModel cm;
    cm.k = static_cast<int>(K);
    cm.centers = Matrix(K, d);
    for (double& v : cm.centers.data) v = normal(rng);
    Matrix batch(B, d);
    for (double& v : batch.data) v = normal(rng);
    const auto r = contrastive_clustering_loss(batch, cm);
    GradInstance g;
    g.x = batch.data;
    g.analytic = r.grads.data;
    g.f = [cm, B, d, frozen = r.assignments](const std::vector<double>& x) {
        Matrix m(B, d);
        m.data = x;
        return contrastive_clustering_loss(m, cm, &frozen).value;
    };
    return g;
}

inline GradInstance ms_instance(Rng& rng) {
    const std::size_t B = 6, d = 6, M = 5;
    Matrix batch(B, d);
    for (std::size_t i = 0; i < B; ++i) {
        const auto u = random_unit(rng, d);
        std::copy(u.begin(), u.end(), batch.row(i).begin());
    }
    std::vector<int> labels{0, 0, 1, 1, 2, 2};
    BankView bank;
    bank.vecs = Matrix(M, d);
    for (std::size_t i = 0; i < M; ++i) {
        const auto u = random_unit(rng, d);
        std::copy(u.begin(), u.end(), bank.vecs.row(i).begin());
        bank.labels.push_back(static_cast<int>(uniform_index(rng, 3)));
    }
    // Softer constants keep the random instance inside the mined regime.
    MsParams p;
    p.alpha = 2;
    p.beta = 10;
    p.lambda = 0.5;
    p.epsilon = 1.0;
    const auto r = ms_loss(batch, labels, bank, p);
    GradInstance g;
    g.x = batch.data;
    g.analytic = r.grads.data;
    g.f = [=, mining = r.mining](const std::vector<double>& x) {
        Matrix m(B, d);
        m.data = x;
        return ms_loss(m, labels, bank, p, &mining).value;
    };
    return g;
}

inline std::vector<double> flatten(const ModelParams& p) {
    std::vector<double> out;
    for (const auto& t : p.tensors) out.insert(out.end(), t.values.begin(), t.values.end());
    return out;
}

inline ModelParams unflatten(const ModelParams& like, const std::vector<double>& x) {
    ModelParams p = like;
    std::size_t off = 0;
    for (auto& t : p.tensors) {
        std::copy(x.begin() + off, x.begin() + off + t.values.size(), t.values.begin());
        off += t.values.size();
    }
    return p;
}

/// Distance of a forward pass from the nearest ReLU or max-pool switch.
inline double kink_margin(const EncoderCache& c) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto* pre : {&c.pre1, &c.pre2, &c.hid_avg_pre, &c.hid_max_pre})
        for (double v : *pre) m = std::min(m, std::abs(v));
    auto gap = [&](std::vector<double> vals) {
        if (vals.size() < 2) return;
        std::sort(vals.begin(), vals.end(), std::greater<>());
        if (vals[0] > 0) m = std::min(m, vals[0] - vals[1]);
    };
    const int C = arch::kConv2Channels, P = c.h2 * c.w2;
    for (int ch = 0; ch < C; ++ch) gap({c.act2.begin() + ch * P, c.act2.begin() + (ch + 1) * P});
    for (int i = 0; i < P; ++i) {
        std::vector<double> vals;
        for (int ch = 0; ch < C; ++ch) vals.push_back(c.feat1[ch * P + i]);
        gap(std::move(vals));
    }
    return m;
}

/// Encoder backward against a random linear read-out of the embedding and attention map.
/// Draws are repeated until the point sits at least 1e-3 away from every ReLU and
/// max-pool switch, so that the finite differences straddle no kink.
inline GradInstance encoder_instance(Rng& rng, std::size_t coords_per_trial = 80) {
    const int d = 6;
    ModelParams p;
    ImageTensor x(3, 8, 8);
    EncoderOutput fw;
    do {
        p = init_params(d, rng());
        for (int i = 0; i < kParamCount; ++i)
            if (is_bias(i))
                for (double& v : p.tensors[i].values) v = uniform(rng, -0.1, 0.1);
        for (double& v : x.data) v = uniform(rng, 0.0, 1.0);
        fw = forward(p, x);
    } while (kink_margin(fw.cache) < 1e-3);
    const auto w = random_unit(rng, d);
    const Grid2D vmap = random_grid(rng, 2, 2);
    GradInstance g;
    g.x = flatten(p);
    g.analytic = flatten(backward(p, fw.cache, w, vmap));
    g.f = [p, x, w, vmap](const std::vector<double>& flat) {
        const auto out = forward(unflatten(p, flat), x);
        return dot(out.embedding.vec, w) + dot(out.attention.data(), vmap.data());
    };
    for (std::size_t k = 0; k < coords_per_trial; ++k) g.coords.push_back(uniform_index(rng, g.x.size()));
    std::sort(g.coords.begin(), g.coords.end());
    g.coords.erase(std::unique(g.coords.begin(), g.coords.end()), g.coords.end());
    std::vector<double> sub;
    for (auto c : g.coords) sub.push_back(g.analytic[c]);
    g.analytic = std::move(sub);
    return g;
}

inline GradInstance quadratic_instance(Rng& rng) {
    GradInstance g;
    for (int i = 0; i < 4; ++i) g.x.push_back(uniform(rng, -3, 3));
    for (double v : g.x) g.analytic.push_back(2 * v);
    g.f = [](const std::vector<double>& x) { return dot(x, x); };
    return g;
}

}  // namespace detail

/// Max relative error between analytic gradients and central differences over
/// `trials` random instances. Mining sets and cluster assignments stay fixed while
/// the inputs are perturbed.
inline GradcheckReport gradcheck(const std::string& target, int trials, double h = 1e-4, std::uint64_t seed = 0) {
    using namespace detail;
    std::function<GradInstance(Rng&)> make;
    if (target == "quadratic") make = quadratic_instance;
    else if (target == "tac") make = tac_instance;
    else if (target == "tac_masked") make = tac_masked_instance;
    else if (target == "feature_similarity") make = feature_similarity_instance;
    else if (target == "ccl") make = ccl_instance;
    else if (target == "ms") make = ms_instance;
    else if (target == "encoder") make = [](Rng& r) { return encoder_instance(r); };
    else throw Error(ErrorKind::UnknownLoss, "unknown gradcheck target '" + target + "'");
    if (trials < 1) throw Error(ErrorKind::InvalidConfig, "trials must be positive");
    if (!(h > 0)) throw Error(ErrorKind::InvalidConfig, "h must be positive");

    GradcheckReport rep{target, trials, 0};
    for (int t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        const GradInstance g = make(rng);
        const auto numeric = central_difference(g.f, g.x, h, g.coords);
        rep.max_relative_error = std::max(rep.max_relative_error, relative_error(g.analytic, numeric));
    }
    return rep;
}

}  // namespace taccl
