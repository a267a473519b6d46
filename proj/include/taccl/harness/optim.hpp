#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "../core.hpp"
#include "../encoder.hpp"

namespace taccl {

/// P distinct pseudo-classes drawn uniformly, then samples_per_class ids from each:
/// without replacement when the class is large enough, otherwise every member once
/// followed by uniform draws with replacement. `labels` is indexed by position.
inline std::vector<int> sample_batch(std::span<const int> labels, int P, std::uint64_t seed, int samples_per_class = 5) {
    std::map<int, std::vector<int>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<int>(i));
    if (P < 1 || static_cast<int>(members.size()) < P) {
        throw Error(ErrorKind::TooFewClasses, "need " + std::to_string(P) + " pseudo-classes, have " +
                                                  std::to_string(members.size()));
    }
    std::vector<int> classes;
    for (const auto& [c, ids] : members) classes.push_back(c);
    Rng rng(seed);
    for (int i = 0; i < P; ++i) {
        const std::size_t j = i + uniform_index(rng, classes.size() - i);
        std::swap(classes[i], classes[j]);
    }
    std::vector<int> out;
    for (int i = 0; i < P; ++i) {
        std::vector<int> pool = members[classes[i]];
        const int n = static_cast<int>(pool.size());
        if (n >= samples_per_class) {
            for (int k = 0; k < samples_per_class; ++k) {
                const std::size_t j = k + uniform_index(rng, n - k);
                std::swap(pool[k], pool[j]);
                out.push_back(pool[k]);
            }
        } else {
            out.insert(out.end(), pool.begin(), pool.end());
            for (int k = n; k < samples_per_class; ++k) out.push_back(pool[uniform_index(rng, n)]);
        }
    }
    return out;
}

struct AdamState {
    ModelParams m;
    ModelParams v;
    long t = 0;  // steps taken

    static AdamState zeros_for(const ModelParams& p) { return {zeros_like(p), zeros_like(p), 0}; }
};

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0;
    bool decoupled = false;  // decay the weights directly instead of through the gradient
};

/// One Adam update with bias correction; increments state.t first.
inline void adam_step(ModelParams& params, const ParamGrads& grads, AdamState& state, const AdamOptions& o) {
    for (int i = 0; i < kParamCount; ++i) {
        if (params.tensors[i].values.size() != grads.tensors[i].values.size() || params.tensors[i].values.size() != state.m.tensors[i].values.size() ||
            params.tensors[i].values.size() != state.v.tensors[i].values.size()) {
            throw Error(ErrorKind::ShapeMismatch, std::string("adam: shape mismatch in ") + kParamNames[i]);
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
    for (int i = 0; i < kParamCount; ++i) {
        auto& th = params.tensors[i].values;
        const auto& g = grads.tensors[i].values;
        auto& m = state.m.tensors[i].values;
        auto& v = state.v.tensors[i].values;
        for (std::size_t k = 0; k < th.size(); ++k) {
            const double gk = o.decoupled ? g[k] : g[k] + o.weight_decay * th[k];
            m[k] = o.beta1 * m[k] + (1 - o.beta1) * gk;
            v[k] = o.beta2 * v[k] + (1 - o.beta2) * gk * gk;
            const double mh = m[k] / bc1;
            const double vh = v[k] / bc2;
            if (o.decoupled) th[k] -= o.lr * o.weight_decay * th[k];
            th[k] -= o.lr * mh / (std::sqrt(vh) + o.eps);
        }
    }
}

}  // namespace taccl
