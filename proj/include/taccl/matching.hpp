#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "core.hpp"
#include "encoder.hpp"
#include "geometry.hpp"

namespace taccl {

struct KeypointMatch {
    Point2 a;
    Point2 b;
    double score = 0;  // normalized cross-correlation in [-1, 1]
    friend bool operator==(const KeypointMatch&, const KeypointMatch&) = default;
};

enum class MatchSource { Computed, Ingested };

struct KeypointMatchSet {
    int img_a = 0;
    int img_b = 0;
    std::vector<KeypointMatch> pairs;
    MatchSource source = MatchSource::Computed;
    friend bool operator==(const KeypointMatchSet&, const KeypointMatchSet&) = default;
};

struct MatchConfig {
    int patch = 7;
    int stride = 4;
    double min_score = 0.9;
};

namespace detail {

/// Mean-centred, unit-norm patch descriptor over all channels, or nullopt for flat patches.
inline std::optional<std::vector<double>> patch_descriptor(const ImageTensor& img, int cu, int cv, int r) {
    std::vector<double> p;
    p.reserve(static_cast<std::size_t>(img.channels) * (2 * r + 1) * (2 * r + 1));
    for (int c = 0; c < img.channels; ++c)
        for (int v = cv - r; v <= cv + r; ++v)
            for (int u = cu - r; u <= cu + r; ++u) p.push_back(img.at(c, v, u));
    const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
    double n2 = 0;
    for (double& x : p) {
        x -= mean;
        n2 += x * x;
    }
    if (n2 < 1e-18) return std::nullopt;
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : p) x *= inv;
    return p;
}

struct DescriptorField {
    std::vector<Point2> centers;
    std::vector<std::vector<double>> descriptors;
};

inline DescriptorField dense_descriptors(const ImageTensor& img, int r, int stride) {
    DescriptorField f;
    for (int v = r; v + r < img.height; v += stride)
        for (int u = r; u + r < img.width; u += stride) {
            if (auto d = patch_descriptor(img, u, v, r)) {
                f.centers.push_back({double(u), double(v)});
                f.descriptors.push_back(std::move(*d));
            }
        }
    return f;
}

}  // namespace detail

/// Dense-grid patch matching: every grid keypoint of `a` is matched to the location in
/// `b` whose patch has the highest normalized cross-correlation. Exact score ties go
/// to the candidate closest to the keypoint's own coordinates.
inline KeypointMatchSet match_keypoints(const ImageTensor& a, const ImageTensor& b, const MatchConfig& cfg,
                                        int id_a = 0, int id_b = 0) {
    if (cfg.patch < 1 || cfg.stride < 1) throw Error(ErrorKind::InvalidConfig, "patch and stride must be positive");
    if (a.height < cfg.patch || a.width < cfg.patch || b.height < cfg.patch || b.width < cfg.patch) {
        throw Error(ErrorKind::ImageTooSmall, "images must be at least patch-sized");
    }
    if (a.channels != b.channels) throw Error(ErrorKind::ShapeMismatch, "channel counts differ");
    const int r = cfg.patch / 2;
    const auto query = detail::dense_descriptors(a, r, cfg.stride);
    const auto target = detail::dense_descriptors(b, r, 1);
    KeypointMatchSet out{id_a, id_b, {}, MatchSource::Computed};
    for (std::size_t q = 0; q < query.centers.size(); ++q) {
        const auto& qd = query.descriptors[q];
        const Point2 qp = query.centers[q];
        double best = -2;
        double best_dist = 0;
        std::size_t best_idx = 0;
        for (std::size_t t = 0; t < target.centers.size(); ++t) {
            const double s = dot(qd, target.descriptors[t]);
            const double du = target.centers[t].u - qp.u, dv = target.centers[t].v - qp.v;
            const double dist = du * du + dv * dv;
            if (s > best || (s == best && dist < best_dist)) {
                best = s;
                best_dist = dist;
                best_idx = t;
            }
        }
        if (target.centers.empty()) break;
        best = std::clamp(best, -1.0, 1.0);
        if (best >= cfg.min_score) out.pairs.push_back({qp, target.centers[best_idx], best});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Transform estimation

enum class MotionModel { Affine, Homography };

struct RansacConfig {
    int iters = 500;
    double inlier_tol = 1.5;  // pixels
    std::uint64_t seed = 0;
};

struct EstimateResult {
    TransformSpec transform;
    std::vector<std::size_t> inliers;
    double rms = 0;  // reprojection RMS over the inliers
};

namespace detail {

/// True when the points do not span two dimensions.
inline bool collinear(std::span<const Point2> pts) {
    if (pts.size() < 3) return true;
    double mu = 0, mv = 0;
    for (const auto& p : pts) {
        mu += p.u;
        mv += p.v;
    }
    mu /= pts.size();
    mv /= pts.size();
    double suu = 0, svv = 0, suv = 0;
    for (const auto& p : pts) {
        suu += (p.u - mu) * (p.u - mu);
        svv += (p.v - mv) * (p.v - mv);
        suv += (p.u - mu) * (p.v - mv);
    }
    const double tr = suu + svv;
    const double det = suu * svv - suv * suv;
    // Smallest eigenvalue relative to the largest.
    const double disc = std::sqrt(std::max(tr * tr / 4 - det, 0.0));
    const double lmax = tr / 2 + disc;
    const double lmin = tr / 2 - disc;
    return lmax <= 0 || lmin <= 1e-10 * lmax;
}

/// A subset is degenerate for a homography when any three of its points are collinear.
inline bool homography_degenerate(std::span<const Point2> pts) {
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            for (std::size_t k = j + 1; k < pts.size(); ++k) {
                const Point2 tri[3] = {pts[i], pts[j], pts[k]};
                if (collinear(tri)) return true;
            }
    return false;
}

inline Homography fit_affine(std::span<const Point2> a, std::span<const Point2> b) {
    const Eigen::Index n = static_cast<Eigen::Index>(a.size());
    Eigen::MatrixXd m(2 * n, 6);
    Eigen::VectorXd rhs(2 * n);
    m.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
        m.row(2 * i) << a[i].u, a[i].v, 1, 0, 0, 0;
        m.row(2 * i + 1) << 0, 0, 0, a[i].u, a[i].v, 1;
        rhs(2 * i) = b[i].u;
        rhs(2 * i + 1) = b[i].v;
    }
    const Eigen::VectorXd x = m.colPivHouseholderQr().solve(rhs);
    return {x(0), x(1), x(2), x(3), x(4), x(5), 0, 0, 1};
}

/// Normalized DLT.
inline Homography fit_homography(std::span<const Point2> a, std::span<const Point2> b) {
    auto normalizer = [](std::span<const Point2> pts) {
        double mu = 0, mv = 0;
        for (const auto& p : pts) {
            mu += p.u;
            mv += p.v;
        }
        mu /= pts.size();
        mv /= pts.size();
        double mean_dist = 0;
        for (const auto& p : pts) mean_dist += std::hypot(p.u - mu, p.v - mv);
        mean_dist /= pts.size();
        const double s = mean_dist > 0 ? std::sqrt(2.0) / mean_dist : 1.0;
        return Homography{s, 0, -s * mu, 0, s, -s * mv, 0, 0, 1};
    };
    const Homography ta = normalizer(a);
    const Homography tb = normalizer(b);
    const Eigen::Index n = static_cast<Eigen::Index>(a.size());
    Eigen::MatrixXd m(2 * n, 9);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point2 p = apply_homography(ta, a[i]);
        const Point2 q = apply_homography(tb, b[i]);
        m.row(2 * i) << -p.u, -p.v, -1, 0, 0, 0, q.u * p.u, q.u * p.v, q.u;
        m.row(2 * i + 1) << 0, 0, 0, -p.u, -p.v, -1, q.v * p.u, q.v * p.v, q.v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Homography hn{};
    for (int i = 0; i < 9; ++i) hn[i] = h(i);
    return normalize_homography(mat_mul(mat_inverse(tb), mat_mul(hn, ta)));
}

inline double reprojection_error(const Homography& h, Point2 a, Point2 b) {
    const double den = h[6] * a.u + h[7] * a.v + h[8];
    if (std::abs(den) <= 1e-12) return std::numeric_limits<double>::infinity();
    const Point2 p{(h[0] * a.u + h[1] * a.v + h[2]) / den, (h[3] * a.u + h[4] * a.v + h[5]) / den};
    return std::hypot(p.u - b.u, p.v - b.v);
}

}  // namespace detail

/// Robust fit of the transform taking A-side keypoints onto B-side keypoints:
/// RANSAC over minimal samples, then least squares on the best inlier set.
inline EstimateResult estimate_transform(const KeypointMatchSet& matches, MotionModel model,
                                         const RansacConfig& ransac = {}) {
    const std::size_t minimal = model == MotionModel::Affine ? 3 : 4;
    const std::size_t n = matches.pairs.size();
    if (n < minimal) {
        throw Error(ErrorKind::TooFewMatches, std::to_string(n) + " matches, need " + std::to_string(minimal));
    }
    std::vector<Point2> pa, pb;
    for (const auto& m : matches.pairs) {
        pa.push_back(m.a);
        pb.push_back(m.b);
    }
    if (detail::collinear(pa) || detail::collinear(pb)) {
        throw Error(ErrorKind::DegenerateConfiguration, "matched points are collinear");
    }
    auto fit = [&](const std::vector<std::size_t>& idx) {
        std::vector<Point2> sa, sb;
        for (auto i : idx) {
            sa.push_back(pa[i]);
            sb.push_back(pb[i]);
        }
        return model == MotionModel::Affine ? detail::fit_affine(sa, sb) : detail::fit_homography(sa, sb);
    };
    auto inliers_of = [&](const Homography& h) {
        std::vector<std::size_t> in;
        for (std::size_t i = 0; i < n; ++i)
            if (detail::reprojection_error(h, pa[i], pb[i]) <= ransac.inlier_tol) in.push_back(i);
        return in;
    };
    auto residual_sum = [&](const Homography& h, const std::vector<std::size_t>& idx) {
        double s = 0;
        for (auto i : idx) {
            const double e = detail::reprojection_error(h, pa[i], pb[i]);
            s += e * e;
        }
        return s;
    };
    auto degenerate = [&](const std::vector<std::size_t>& idx) {
        std::vector<Point2> sa, sb;
        for (auto i : idx) {
            sa.push_back(pa[i]);
            sb.push_back(pb[i]);
        }
        // Larger sets only need to span the plane; the triple test is for minimal samples.
        if (model == MotionModel::Affine || idx.size() > minimal) return detail::collinear(sa) || detail::collinear(sb);
        return detail::homography_degenerate(sa) || detail::homography_degenerate(sb);
    };

    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    std::vector<std::size_t> best_inliers;
    double best_res = std::numeric_limits<double>::infinity();
    if (n == minimal) {
        best_inliers = all;
    } else {
        Rng rng(derive_seed(ransac.seed, 0x7a5c));
        for (int it = 0; it < ransac.iters; ++it) {
            std::vector<std::size_t> pool = all;
            std::vector<std::size_t> sample;
            for (std::size_t k = 0; k < minimal; ++k) {
                const std::size_t j = k + uniform_index(rng, n - k);
                std::swap(pool[k], pool[j]);
                sample.push_back(pool[k]);
            }
            if (degenerate(sample)) continue;
            Homography h;
            try {
                h = fit(sample);
            } catch (const Error&) {
                continue;
            }
            auto in = inliers_of(h);
            const double res = residual_sum(h, in);
            if (in.size() > best_inliers.size() || (in.size() == best_inliers.size() && res < best_res)) {
                best_inliers = std::move(in);
                best_res = res;
            }
        }
        if (best_inliers.size() < minimal) best_inliers = all;
    }
    if (degenerate(best_inliers)) throw Error(ErrorKind::DegenerateConfiguration, "inlier set is degenerate");

    Homography h = fit(best_inliers);
    // Refit until the inlier set is stable (bounded).
    for (int round = 0; round < 5; ++round) {
        auto in = inliers_of(h);
        if (in.size() < minimal || degenerate(in) || in == best_inliers) break;
        best_inliers = std::move(in);
        h = fit(best_inliers);
    }
    EstimateResult r{TransformSpec::from_homography(h), inliers_of(h), 0};
    if (r.inliers.empty()) r.inliers = best_inliers;
    r.rms = std::sqrt(residual_sum(h, r.inliers) / static_cast<double>(r.inliers.size()));
    return r;
}

// ---------------------------------------------------------------------------
// Matched sub-image pairs

struct Box {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    friend bool operator==(const Box&, const Box&) = default;
};

struct SubImagePair {
    int img_a = 0;
    int img_b = 0;
    Box box_a;
    Box box_b;
    ImageTensor crop_a;
    ImageTensor crop_b;
    TransformSpec transform;        // crop_a coordinates -> crop_b coordinates
    KeypointMatchSet keypoints;     // inliers in crop coordinates
    double confidence = 0;          // mean NCC score of the inliers
};

struct PairExtractionConfig {
    double tau = 0.95;
    int top_m = 3;
    int margin = 2;
    int candidates = 8;    // partners per image kept by the global prefilter
    int min_inliers = 4;
    int min_box = 16;      // crop sides are multiples of 4, at least this large
    MatchConfig match;
    RansacConfig ransac;
};

namespace detail {

/// Thumbnail descriptor for the partner prefilter: 4x4 average pooling, centred and normalized.
inline std::vector<double> global_descriptor(const ImageTensor& img) {
    const int gh = std::max(1, img.height / 4), gw = std::max(1, img.width / 4);
    std::vector<double> d(static_cast<std::size_t>(img.channels) * gh * gw, 0.0);
    for (int c = 0; c < img.channels; ++c)
        for (int v = 0; v < gh * 4 && v < img.height; ++v)
            for (int u = 0; u < gw * 4 && u < img.width; ++u) d[(c * gh + v / 4) * gw + u / 4] += img.at(c, v, u) / 16;
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / d.size();
    for (double& x : d) x -= mean;
    const double n = l2_norm(d);
    if (n > 0)
        for (double& x : d) x /= n;
    return d;
}

inline Box keypoint_box(std::span<const Point2> pts, int margin, int min_side, int img_h, int img_w) {
    double u0 = pts[0].u, u1 = pts[0].u, v0 = pts[0].v, v1 = pts[0].v;
    for (const auto& p : pts) {
        u0 = std::min(u0, p.u);
        u1 = std::max(u1, p.u);
        v0 = std::min(v0, p.v);
        v1 = std::max(v1, p.v);
    }
    auto side = [&](double lo, double hi, int limit) {
        int s = static_cast<int>(std::ceil(hi - lo)) + 1 + 2 * margin;
        s = std::max(s, min_side);
        s = (s + 3) / 4 * 4;
        return std::min(s, limit / 4 * 4);
    };
    const int w = side(u0, u1, img_w);
    const int h = side(v0, v1, img_h);
    auto origin = [&](double lo, double hi, int s, int limit) {
        int o = static_cast<int>(std::floor((lo + hi) / 2 - (s - 1) / 2.0));
        return std::clamp(o, 0, limit - s);
    };
    return {origin(u0, u1, w, img_w), origin(v0, v1, h, img_h), w, h};
}

}  // namespace detail

/// For each image, finds up to top_m partners whose keypoint matches are confident
/// (mean inlier NCC >= tau) and geometrically consistent, and crops the matched
/// regions into sub-image pairs related by the estimated transform.
inline std::vector<SubImagePair> extract_pairs(const std::vector<ImageTensor>& images, std::span<const int> ids,
                                               const PairExtractionConfig& cfg) {
    std::vector<SubImagePair> out;
    if (ids.empty()) return out;
    std::vector<std::vector<double>> global;
    for (int id : ids) global.push_back(detail::global_descriptor(images[id]));

    for (std::size_t ai = 0; ai < ids.size(); ++ai) {
        const int ia = ids[ai];
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t bi = 0; bi < ids.size(); ++bi)
            if (bi != ai) ranked.emplace_back(-dot(global[ai], global[bi]), bi);
        std::sort(ranked.begin(), ranked.end());
        if (static_cast<int>(ranked.size()) > cfg.candidates) ranked.resize(cfg.candidates);

        std::vector<SubImagePair> found;
        for (const auto& [neg_sim, bi] : ranked) {
            const int ib = ids[bi];
            const ImageTensor& a = images[ia];
            const ImageTensor& b = images[ib];
            const KeypointMatchSet ms = match_keypoints(a, b, cfg.match, ia, ib);
            if (static_cast<int>(ms.pairs.size()) < cfg.min_inliers) continue;
            EstimateResult est;
            try {
                RansacConfig rc = cfg.ransac;
                rc.seed = derive_seed(cfg.ransac.seed, static_cast<std::uint64_t>(ia) * 1000003u + ib);
                est = estimate_transform(ms, MotionModel::Affine, rc);
            } catch (const Error&) {
                continue;
            }
            if (static_cast<int>(est.inliers.size()) < cfg.min_inliers) continue;
            double conf = 0;
            for (auto i : est.inliers) conf += ms.pairs[i].score;
            conf /= static_cast<double>(est.inliers.size());
            if (conf < cfg.tau) continue;

            std::vector<Point2> pa, pb;
            for (auto i : est.inliers) {
                pa.push_back(ms.pairs[i].a);
                pb.push_back(ms.pairs[i].b);
            }
            SubImagePair sp;
            sp.img_a = ia;
            sp.img_b = ib;
            sp.box_a = detail::keypoint_box(pa, cfg.margin, cfg.min_box, a.height, a.width);
            sp.box_b = detail::keypoint_box(pb, cfg.margin, cfg.min_box, b.height, b.width);
            sp.crop_a = crop(a, sp.box_a.y0, sp.box_a.x0, sp.box_a.h, sp.box_a.w);
            sp.crop_b = crop(b, sp.box_b.y0, sp.box_b.x0, sp.box_b.h, sp.box_b.w);
            const auto shift_in = TransformSpec::translation(sp.box_a.x0, sp.box_a.y0);
            const auto shift_out = TransformSpec::translation(-sp.box_b.x0, -sp.box_b.y0);
            sp.transform = compose(compose(shift_in, est.transform), shift_out);
            sp.keypoints = {ia, ib, {}, MatchSource::Computed};
            for (auto i : est.inliers) {
                const auto& m = ms.pairs[i];
                const Point2 ca{m.a.u - sp.box_a.x0, m.a.v - sp.box_a.y0};
                const Point2 cb{m.b.u - sp.box_b.x0, m.b.v - sp.box_b.y0};
                const bool inside = ca.u >= 0 && ca.v >= 0 && ca.u <= sp.box_a.w - 1 && ca.v <= sp.box_a.h - 1 &&
                                    cb.u >= 0 && cb.v >= 0 && cb.u <= sp.box_b.w - 1 && cb.v <= sp.box_b.h - 1;
                if (inside) sp.keypoints.pairs.push_back({ca, cb, m.score});
            }
            if (sp.keypoints.pairs.empty()) continue;
            sp.confidence = conf;
            found.push_back(std::move(sp));
        }
        std::stable_sort(found.begin(), found.end(),
                         [](const SubImagePair& x, const SubImagePair& y) { return x.confidence > y.confidence; });
        if (static_cast<int>(found.size()) > cfg.top_m) found.resize(cfg.top_m);
        for (auto& f : found) out.push_back(std::move(f));
    }
    return out;
}

inline std::vector<SubImagePair> extract_pairs(const std::vector<ImageTensor>& images, const PairExtractionConfig& cfg) {
    std::vector<int> ids(images.size());
    std::iota(ids.begin(), ids.end(), 0);
    return extract_pairs(images, ids, cfg);
}

inline nlohmann::json to_json(const Box& b) { return {{"x0", b.x0}, {"y0", b.y0}, {"w", b.w}, {"h", b.h}}; }

/// One line of the pair manifest.
inline nlohmann::json to_json(const SubImagePair& p) {
    return {{"img_a", p.img_a},
            {"img_b", p.img_b},
            {"box_a", to_json(p.box_a)},
            {"box_b", to_json(p.box_b)},
            {"transform", to_json(p.transform)},
            {"confidence", p.confidence}};
}

// ---------------------------------------------------------------------------
// Match files: CSV `img_a,img_b,ua,va,ub,vb,score`

inline constexpr const char* kMatchHeader = "img_a,img_b,ua,va,ub,vb,score";

inline void write_matches(const std::filesystem::path& path, std::span<const KeypointMatchSet> sets) {
    std::ofstream f(path);
    if (!f) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    f << kMatchHeader << "\n";
    char buf[256];
    for (const auto& s : sets)
        for (const auto& m : s.pairs) {
            std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.img_a, s.img_b, m.a.u, m.a.v,
                          m.b.u, m.b.v, m.score);
            f << buf;
        }
}

/// Parses a match file into one set per (img_a, img_b) group, ordered by (img_a, img_b).
/// When `known_ids` is given, every referenced image must be in it.
inline std::vector<KeypointMatchSet> ingest_matches(const std::filesystem::path& path,
                                                    const std::set<int>* known_ids = nullptr) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& why) {
        throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    if (!std::getline(f, line)) {
        lineno = 1;
        fail("missing header");
    }
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line != kMatchHeader) fail("expected header '" + std::string(kMatchHeader) + "'");

    std::map<std::pair<int, int>, KeypointMatchSet> groups;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (fields.size() != 7) fail("expected 7 fields, got " + std::to_string(fields.size()));
        int ids[2];
        double vals[5];
        for (int i = 0; i < 2; ++i) {
            std::size_t used = 0;
            try {
                ids[i] = std::stoi(fields[i], &used);
            } catch (const std::exception&) {
                fail("bad image id '" + fields[i] + "'");
            }
            if (used != fields[i].size()) fail("bad image id '" + fields[i] + "'");
            if (known_ids && !known_ids->contains(ids[i])) {
                throw Error(ErrorKind::UnknownImageId,
                            path.string() + ":" + std::to_string(lineno) + ": unknown image id " + fields[i]);
            }
        }
        for (int i = 0; i < 5; ++i) {
            std::size_t used = 0;
            try {
                vals[i] = std::stod(fields[i + 2], &used);
            } catch (const std::exception&) {
                fail("bad number '" + fields[i + 2] + "'");
            }
            if (used != fields[i + 2].size() || !std::isfinite(vals[i])) fail("bad number '" + fields[i + 2] + "'");
        }
        if (vals[4] < -1 || vals[4] > 1) fail("score outside [-1, 1]");
        auto& g = groups[{ids[0], ids[1]}];
        g.img_a = ids[0];
        g.img_b = ids[1];
        g.source = MatchSource::Ingested;
        g.pairs.push_back({{vals[0], vals[1]}, {vals[2], vals[3]}, vals[4]});
    }
    std::vector<KeypointMatchSet> out;
    for (auto& [key, g] : groups) out.push_back(std::move(g));
    return out;
}

}  // namespace taccl
