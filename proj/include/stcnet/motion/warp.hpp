#pragma once

#include <cmath>

#include "stcnet/core/grid.hpp"
#include "stcnet/core/ops.hpp"

namespace stcnet {

namespace detail {

struct SampleTap {
    int x0, x1, y0, y1;
    double fx, fy;
    bool in_x, in_y; // false when the raw coordinate was clamped to the border
};

inline SampleTap make_tap(double gx, double gy, int hf, int wf) {
    SampleTap t;
    const double u_raw = to_pixel(gx, wf);
    const double v_raw = to_pixel(gy, hf);
    const double u = std::min(std::max(u_raw, 0.0), static_cast<double>(wf - 1));
    const double v = std::min(std::max(v_raw, 0.0), static_cast<double>(hf - 1));
    t.in_x = (u == u_raw);
    t.in_y = (v == v_raw);
    t.x0 = static_cast<int>(std::floor(u));
    t.y0 = static_cast<int>(std::floor(v));
    t.fx = u - t.x0;
    t.fy = v - t.y0;
    t.x1 = t.x0 + 1 < wf ? t.x0 + 1 : wf - 1;
    t.y1 = t.y0 + 1 < hf ? t.y0 + 1 : hf - 1;
    return t;
}

} // namespace detail

/// Differentiable bilinear sampling of `feature` (C,Hf,Wf) at the normalized
/// coordinates in `grid` (2,H,W); output is (C,H,W). Coordinates outside
/// [-1, 1] replicate the border pixel. Exact integer sample positions copy
/// the source value bitwise, which makes sampling at the identity grid the
/// identity map.
inline Var grid_sample(const Var& feature, const Var& grid) {
    const Tensor& fv = feature->value;
    const Tensor& gv = grid->value;
    STC_CHECK(fv.ndim() == 3, "grid_sample: feature must be CHW");
    STC_CHECK(gv.ndim() == 3 && gv.dim(0) == 2, "grid_sample: grid must be (2,h,w)");
    const int c = fv.dim(0), hf = fv.dim(1), wf = fv.dim(2);
    const int h = gv.dim(1), w = gv.dim(2);

    Tensor out = Tensor::zeros({c, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto t = detail::make_tap(gv.at(0, y, x), gv.at(1, y, x), hf, wf);
            if (t.fx == 0.0 && t.fy == 0.0) {
                for (int ch = 0; ch < c; ++ch) out.at(ch, y, x) = fv.at(ch, t.y0, t.x0);
                continue;
            }
            for (int ch = 0; ch < c; ++ch) {
                const double v00 = fv.at(ch, t.y0, t.x0), v01 = fv.at(ch, t.y0, t.x1);
                const double v10 = fv.at(ch, t.y1, t.x0), v11 = fv.at(ch, t.y1, t.x1);
                out.at(ch, y, x) = (1.0 - t.fy) * ((1.0 - t.fx) * v00 + t.fx * v01) +
                                   t.fy * ((1.0 - t.fx) * v10 + t.fx * v11);
            }
        }
    }

    return make_op(std::move(out), {feature, grid}, [c, hf, wf, h, w](Node& n) {
        const Tensor& fv = n.parents[0]->value;
        const Tensor& gv = n.parents[1]->value;
        const bool need_f = n.parents[0]->requires_grad;
        const bool need_g = n.parents[1]->requires_grad;
        Tensor gf, gg;
        if (need_f) gf = Tensor::zeros(fv.shape());
        if (need_g) gg = Tensor::zeros(gv.shape());
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const auto t = detail::make_tap(gv.at(0, y, x), gv.at(1, y, x), hf, wf);
                double du_sum = 0.0, dv_sum = 0.0;
                for (int ch = 0; ch < c; ++ch) {
                    const double g = n.grad.at(ch, y, x);
                    if (g == 0.0) continue;
                    const double v00 = fv.at(ch, t.y0, t.x0), v01 = fv.at(ch, t.y0, t.x1);
                    const double v10 = fv.at(ch, t.y1, t.x0), v11 = fv.at(ch, t.y1, t.x1);
                    if (need_f) {
                        gf.at(ch, t.y0, t.x0) += g * (1.0 - t.fy) * (1.0 - t.fx);
                        gf.at(ch, t.y0, t.x1) += g * (1.0 - t.fy) * t.fx;
                        gf.at(ch, t.y1, t.x0) += g * t.fy * (1.0 - t.fx);
                        gf.at(ch, t.y1, t.x1) += g * t.fy * t.fx;
                    }
                    if (need_g) {
                        du_sum += g * ((1.0 - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
                        dv_sum += g * ((1.0 - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
                    }
                }
                if (need_g) {
                    if (t.in_x) gg.at(0, y, x) = du_sum * wf / 2.0;
                    if (t.in_y) gg.at(1, y, x) = dv_sum * hf / 2.0;
                }
            }
        }
        if (need_f) accumulate(n.parents[0], gf);
        if (need_g) accumulate(n.parents[1], gg);
    });
}

/// Backward warp of a feature map by a same-size flow field. Callers rescale
/// flows between pyramid scales before warping.
inline Var warp(const Var& feature, const Var& flow) {
    STC_CHECK(flow->value.dim(1) == feature->value.dim(1) &&
                  flow->value.dim(2) == feature->value.dim(2),
              "warp: flow spatial size " << flow->value.dim(1) << "x" << flow->value.dim(2)
                                         << " != feature " << feature->value.dim(1) << "x"
                                         << feature->value.dim(2));
    return grid_sample(feature, flow);
}

inline Tensor warp(const Tensor& feature, const Tensor& flow) {
    return warp(constant(feature), constant(flow))->value;
}

/// Resamples a flow field onto a new grid size. Values are normalized
/// coordinates, so no value scaling is required; at the identical size this
/// is bitwise the identity.
inline Var rescale_flow(const Var& flow, int th, int tw) {
    return grid_sample(flow, constant(identity_flow(th, tw)));
}

inline Tensor rescale_flow(const Tensor& flow, int th, int tw) {
    return rescale_flow(constant(flow), th, tw)->value;
}

} // namespace stcnet
