#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stcnet/core/grid.hpp"
#include "stcnet/core/ops.hpp"

namespace stcnet {

// 21 landmarks on the signer's upper body, ordered hand-L(6), hand-R(6),
// body(5), face(4). Within a hand: wrist first, then the five digit tips.
// Body: neck, shoulders L/R, elbows L/R. Face: eyes L/R, nose, chin.
constexpr int kNumKeypoints = 21;

struct KeypointGroup {
    int begin, end;
};
constexpr KeypointGroup kGroupHandL{0, 6};
constexpr KeypointGroup kGroupHandR{6, 12};
constexpr KeypointGroup kGroupBody{12, 17};
constexpr KeypointGroup kGroupFace{17, 21};
constexpr KeypointGroup kKeypointGroups[] = {kGroupHandL, kGroupHandR, kGroupBody, kGroupFace};

/// 21 ordered landmarks in normalized [-1,1] coordinates.
struct KeypointSet {
    Tensor pts; // (21, 2), column 0 = x, column 1 = y

    KeypointSet() : pts(Tensor::zeros({kNumKeypoints, 2})) {}
    explicit KeypointSet(Tensor t) : pts(std::move(t)) { validate(); }

    double x(int k) const { return pts.at2(k, 0); }
    double y(int k) const { return pts.at2(k, 1); }
    void set(int k, double px, double py) {
        pts.at2(k, 0) = px;
        pts.at2(k, 1) = py;
    }

    void validate() const {
        STC_CHECK(pts.ndim() == 2 && pts.dim(0) == kNumKeypoints && pts.dim(1) == 2,
                  "KeypointSet: expected (21,2) points");
        STC_CHECK(pts.all_finite(), "KeypointSet: non-finite coordinate");
        for (int k = 0; k < kNumKeypoints; ++k)
            STC_CHECK(std::abs(x(k)) <= 1.0 && std::abs(y(k)) <= 1.0,
                      "KeypointSet: point " << k << " outside [-1,1]");
    }
};

/// Unnormalized Gaussian bumps, one channel per keypoint; peak value 1 when
/// a grid point coincides with the keypoint.
struct HeatmapStack {
    Tensor maps; // (21, res, res)
    double sigma2 = 0.0;
};

/// map_k(p) = exp(-|p - kp_k|^2 / (2 sigma2)) on the normalized grid.
inline Var render_gaussian_heatmaps(const Var& kps, int resolution, double sigma2) {
    STC_CHECK(sigma2 > 0.0, "render_gaussian_heatmaps: sigma2 must be positive");
    const Tensor& kv = kps->value;
    STC_CHECK(kv.ndim() == 2 && kv.dim(1) == 2, "render_gaussian_heatmaps: keypoints must be (k,2)");
    const int nk = kv.dim(0), res = resolution;
    Tensor out = Tensor::zeros({nk, res, res});
    for (int k = 0; k < nk; ++k) {
        const double kx = kv.at2(k, 0), ky = kv.at2(k, 1);
        for (int yy = 0; yy < res; ++yy) {
            const double dy = cell_center(yy, res) - ky;
            for (int xx = 0; xx < res; ++xx) {
                const double dx = cell_center(xx, res) - kx;
                out.at(k, yy, xx) = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma2));
            }
        }
    }
    const Tensor saved = out;
    return make_op(std::move(out), {kps}, [saved, nk, res, sigma2](Node& n) {
        const Tensor& kv = n.parents[0]->value;
        Tensor g = Tensor::zeros({nk, 2});
        for (int k = 0; k < nk; ++k) {
            const double kx = kv.at2(k, 0), ky = kv.at2(k, 1);
            double gx = 0.0, gy = 0.0;
            for (int yy = 0; yy < res; ++yy) {
                const double dy = cell_center(yy, res) - ky;
                for (int xx = 0; xx < res; ++xx) {
                    const double dx = cell_center(xx, res) - kx;
                    const double w = n.grad.at(k, yy, xx) * saved.at(k, yy, xx) / sigma2;
                    gx += w * dx;
                    gy += w * dy;
                }
            }
            g.at2(k, 0) = gx;
            g.at2(k, 1) = gy;
        }
        accumulate(n.parents[0], g);
    });
}

inline HeatmapStack render_gaussian_heatmaps(const KeypointSet& kps, int resolution, double sigma2) {
    HeatmapStack s;
    s.maps = render_gaussian_heatmaps(constant(kps.pts), resolution, sigma2)->value;
    s.sigma2 = sigma2;
    return s;
}

/// Probability-weighted average of the normalized grid coordinates,
/// per channel: (k,h,w) probability maps -> (k,2) coordinates.
inline Var expected_coords(const Var& prob) {
    const Tensor& pv = prob->value;
    STC_CHECK(pv.ndim() == 3, "expected_coords: expected (k,h,w)");
    const int nk = pv.dim(0), h = pv.dim(1), w = pv.dim(2);
    Tensor out = Tensor::zeros({nk, 2});
    for (int k = 0; k < nk; ++k) {
        double ex = 0.0, ey = 0.0;
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
                const double p = pv.at(k, yy, xx);
                ex += p * cell_center(xx, w);
                ey += p * cell_center(yy, h);
            }
        out.at2(k, 0) = ex;
        out.at2(k, 1) = ey;
    }
    return make_op(std::move(out), {prob}, [nk, h, w](Node& n) {
        Tensor g = Tensor::zeros({nk, h, w});
        for (int k = 0; k < nk; ++k) {
            const double gx = n.grad.at2(k, 0), gy = n.grad.at2(k, 1);
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx)
                    g.at(k, yy, xx) = gx * cell_center(xx, w) + gy * cell_center(yy, h);
        }
        accumulate(n.parents[0], g);
    });
}

/// Differentiable localization readout: normalizes each non-negative
/// heatmap to unit mass and returns the expected coordinate. Scaling a
/// channel by any positive constant leaves the result unchanged.
inline Var soft_argmax(const Var& heatmaps) {
    return expected_coords(normalize_channel_sum(heatmaps));
}

inline KeypointSet soft_argmax(const Tensor& heatmaps) {
    return KeypointSet(soft_argmax(constant(heatmaps))->value);
}

// --- keypoints.json: one entry per frame, each an array of 21 [x,y] pairs ---

inline std::vector<KeypointSet> read_keypoints_json(const std::string& path) {
    std::ifstream in(path);
    STC_CHECK(in.good(), "cannot open keypoint file " << path);
    nlohmann::json j;
    in >> j;
    STC_CHECK(j.is_array(), "keypoint file " << path << ": top level must be an array");
    std::vector<KeypointSet> out;
    out.reserve(j.size());
    for (const auto& frame : j) {
        STC_CHECK(frame.is_array() && frame.size() == kNumKeypoints,
                  "keypoint file " << path << ": each frame needs " << kNumKeypoints << " points");
        Tensor t = Tensor::zeros({kNumKeypoints, 2});
        for (int k = 0; k < kNumKeypoints; ++k) {
            t.at2(k, 0) = frame[k][0].get<double>();
            t.at2(k, 1) = frame[k][1].get<double>();
        }
        out.emplace_back(std::move(t));
    }
    return out;
}

inline void write_keypoints_json(const std::string& path, const std::vector<KeypointSet>& kps) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& set : kps) {
        nlohmann::json frame = nlohmann::json::array();
        for (int k = 0; k < kNumKeypoints; ++k)
            frame.push_back(nlohmann::json::array({set.x(k), set.y(k)}));
        j.push_back(std::move(frame));
    }
    std::ofstream out(path);
    STC_CHECK(out.good(), "cannot write keypoint file " << path);
    out << j.dump();
    out << '\n';
}

} // namespace stcnet
