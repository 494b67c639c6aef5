#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "stcnet/core/ops.hpp"
#include "stcnet/core/rng.hpp"

namespace stcnet {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unfolds x (C,H,W) into a (C*k*k, H*W) patch matrix, zero padding.
inline RowMat im2col(const Tensor& x, int k) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int pad = k / 2;
    RowMat col(c * k * k, h * w);
    int row = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                double* dst = col.data() + static_cast<std::size_t>(row) * h * w;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) {
                        std::fill(dst + y * w, dst + (y + 1) * w, 0.0);
                        continue;
                    }
                    for (int x2 = 0; x2 < w; ++x2) {
                        const int sx = x2 + kx - pad;
                        dst[y * w + x2] = (sx < 0 || sx >= w) ? 0.0 : x.at(ch, sy, sx);
                    }
                }
            }
        }
    }
    return col;
}

/// Adjoint of im2col: scatter-adds a patch matrix back onto an image grad.
inline void col2im_add(const RowMat& col, int k, Tensor& gx) {
    const int c = gx.dim(0), h = gx.dim(1), w = gx.dim(2);
    const int pad = k / 2;
    int row = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++row) {
                const double* src = col.data() + static_cast<std::size_t>(row) * h * w;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int x2 = 0; x2 < w; ++x2) {
                        const int sx = x2 + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        gx.at(ch, sy, sx) += src[y * w + x2];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// Same-padded stride-1 convolution; weight (K,C,k,k), bias (K).
inline Var conv2d(GraphContext& ctx, const Var& x, Parameter& weight, Parameter& bias) {
    const Tensor& xv = x->value;
    STC_CHECK(xv.ndim() == 3, "conv2d: expected CHW input");
    const int k = weight.value.dim(2);
    const int cin = weight.value.dim(1), cout = weight.value.dim(0);
    STC_CHECK(xv.dim(0) == cin, "conv2d: channel mismatch, got " << xv.dim(0) << " want " << cin);
    const int h = xv.dim(1), w = xv.dim(2);

    Var wv = ctx.use(weight);
    Var bv = ctx.use(bias);

    detail::RowMat col = detail::im2col(xv, k);
    Eigen::Map<const detail::RowMat> wm(wv->value.data(), cout, cin * k * k);
    Tensor out = Tensor::zeros({cout, h, w});
    Eigen::Map<detail::RowMat> om(out.data(), cout, h * w);
    om.noalias() = wm * col;
    for (int co = 0; co < cout; ++co) {
        const double b = bv->value[co];
        double* d = out.data() + static_cast<std::size_t>(co) * h * w;
        for (int i = 0; i < h * w; ++i) d[i] += b;
    }

    return make_op(std::move(out), {x, wv, bv}, [k, cin, cout, h, w](Node& n) {
        Eigen::Map<const detail::RowMat> go(n.grad.data(), cout, h * w);
        // weight grad
        if (n.parents[1]->requires_grad) {
            detail::RowMat col = detail::im2col(n.parents[0]->value, k);
            Tensor gw = Tensor::zeros(n.parents[1]->value.shape());
            Eigen::Map<detail::RowMat> gwm(gw.data(), cout, cin * k * k);
            gwm.noalias() = go * col.transpose();
            accumulate(n.parents[1], gw);
        }
        // bias grad
        if (n.parents[2]->requires_grad) {
            Tensor gb = Tensor::zeros({cout});
            for (int co = 0; co < cout; ++co) {
                double s = 0.0;
                const double* g = n.grad.data() + static_cast<std::size_t>(co) * h * w;
                for (int i = 0; i < h * w; ++i) s += g[i];
                gb[co] = s;
            }
            accumulate(n.parents[2], gb);
        }
        // input grad
        if (n.parents[0]->requires_grad) {
            Eigen::Map<const detail::RowMat> wm(n.parents[1]->value.data(), cout, cin * k * k);
            detail::RowMat gcol = wm.transpose() * go;
            Tensor gx = Tensor::zeros(n.parents[0]->value.shape());
            detail::col2im_add(gcol, k, gx);
            accumulate(n.parents[0], gx);
        }
    });
}

/// 2x2 average pooling with stride 2; spatial dims must be even.
inline Var avg_pool2(const Var& x) {
    const Tensor& v = x->value;
    STC_CHECK(v.ndim() == 3 && v.dim(1) % 2 == 0 && v.dim(2) % 2 == 0,
              "avg_pool2: spatial dims must be even");
    const int c = v.dim(0), h = v.dim(1) / 2, w = v.dim(2) / 2;
    Tensor out = Tensor::zeros({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x2 = 0; x2 < w; ++x2)
                out.at(ch, y, x2) = 0.25 * (v.at(ch, 2 * y, 2 * x2) + v.at(ch, 2 * y, 2 * x2 + 1) +
                                            v.at(ch, 2 * y + 1, 2 * x2) + v.at(ch, 2 * y + 1, 2 * x2 + 1));
    return make_op(std::move(out), {x}, [c, h, w](Node& n) {
        Tensor g = Tensor::zeros(n.parents[0]->value.shape());
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x2 = 0; x2 < w; ++x2) {
                    const double gv = 0.25 * n.grad.at(ch, y, x2);
                    g.at(ch, 2 * y, 2 * x2) = gv;
                    g.at(ch, 2 * y, 2 * x2 + 1) = gv;
                    g.at(ch, 2 * y + 1, 2 * x2) = gv;
                    g.at(ch, 2 * y + 1, 2 * x2 + 1) = gv;
                }
        accumulate(n.parents[0], g);
    });
}

inline Var upsample_nearest2(const Var& x) {
    const Tensor& v = x->value;
    STC_CHECK(v.ndim() == 3, "upsample_nearest2: expected CHW");
    const int c = v.dim(0), h = v.dim(1), w = v.dim(2);
    Tensor out = Tensor::zeros({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int x2 = 0; x2 < 2 * w; ++x2) out.at(ch, y, x2) = v.at(ch, y / 2, x2 / 2);
    return make_op(std::move(out), {x}, [c, h, w](Node& n) {
        Tensor g = Tensor::zeros(n.parents[0]->value.shape());
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < 2 * h; ++y)
                for (int x2 = 0; x2 < 2 * w; ++x2) g.at(ch, y / 2, x2 / 2) += n.grad.at(ch, y, x2);
        accumulate(n.parents[0], g);
    });
}

/// Instance normalization over the spatial axes with learnable per-channel
/// gain/bias, eps = 1e-5.
inline Var instance_norm(GraphContext& ctx, const Var& x, Parameter& gain, Parameter& bias) {
    constexpr double eps = 1e-5;
    const Tensor& v = x->value;
    STC_CHECK(v.ndim() == 3, "instance_norm: expected CHW");
    const int c = v.dim(0);
    const std::size_t hw = spatial_size(v);
    STC_CHECK(gain.value.dim(0) == c, "instance_norm: channel mismatch");

    Var gv = ctx.use(gain);
    Var bv = ctx.use(bias);

    Tensor out = Tensor::zeros(v.shape());
    std::vector<double> means(c), inv_sigmas(c);
    for (int ch = 0; ch < c; ++ch) {
        const double* d = v.data() + ch * hw;
        double m = 0.0;
        for (std::size_t i = 0; i < hw; ++i) m += d[i];
        m /= static_cast<double>(hw);
        double var = 0.0;
        for (std::size_t i = 0; i < hw; ++i) var += (d[i] - m) * (d[i] - m);
        var /= static_cast<double>(hw);
        const double inv = 1.0 / std::sqrt(var + eps);
        means[ch] = m;
        inv_sigmas[ch] = inv;
        double* o = out.data() + ch * hw;
        const double g = gv->value[ch], b = bv->value[ch];
        for (std::size_t i = 0; i < hw; ++i) o[i] = g * (d[i] - m) * inv + b;
    }

    return make_op(std::move(out), {x, gv, bv}, [means, inv_sigmas, c, hw](Node& n) {
        const Tensor& xv = n.parents[0]->value;
        const double N = static_cast<double>(hw);
        Tensor gx, gg, gb;
        const bool need_x = n.parents[0]->requires_grad;
        if (need_x) gx = Tensor::zeros(xv.shape());
        if (n.parents[1]->requires_grad) gg = Tensor::zeros({c});
        if (n.parents[2]->requires_grad) gb = Tensor::zeros({c});
        for (int ch = 0; ch < c; ++ch) {
            const double* xd = xv.data() + ch * hw;
            const double* gd = n.grad.data() + ch * hw;
            const double m = means[ch], inv = inv_sigmas[ch];
            const double g = n.parents[1]->value[ch];
            double sum_g = 0.0, sum_gxhat = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                const double xhat = (xd[i] - m) * inv;
                sum_g += gd[i];
                sum_gxhat += gd[i] * xhat;
            }
            if (gg.defined()) gg[ch] = sum_gxhat;
            if (gb.defined()) gb[ch] = sum_g;
            if (need_x) {
                double* o = gx.data() + ch * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    const double xhat = (xd[i] - m) * inv;
                    o[i] = g * inv * (gd[i] - sum_g / N - xhat * sum_gxhat / N);
                }
            }
        }
        if (need_x) accumulate(n.parents[0], gx);
        if (gg.defined()) accumulate(n.parents[1], gg);
        if (gb.defined()) accumulate(n.parents[2], gb);
    });
}

/// Fully connected layer on rank-1 tensors: y = W x + b.
inline Var linear(GraphContext& ctx, const Var& x, Parameter& weight, Parameter& bias) {
    const int in = weight.value.dim(1), out_dim = weight.value.dim(0);
    STC_CHECK(x->value.ndim() == 1 && x->value.dim(0) == in, "linear: input size mismatch");
    Var wv = ctx.use(weight);
    Var bv = ctx.use(bias);
    Tensor out = Tensor::zeros({out_dim});
    for (int o = 0; o < out_dim; ++o) {
        double s = bv->value[o];
        for (int i = 0; i < in; ++i) s += wv->value.at2(o, i) * x->value[i];
        out[o] = s;
    }
    return make_op(std::move(out), {x, wv, bv}, [in, out_dim](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor gx = Tensor::zeros({in});
            for (int o = 0; o < out_dim; ++o)
                for (int i = 0; i < in; ++i) gx[i] += n.parents[1]->value.at2(o, i) * n.grad[o];
            accumulate(n.parents[0], gx);
        }
        if (n.parents[1]->requires_grad) {
            Tensor gw = Tensor::zeros({out_dim, in});
            for (int o = 0; o < out_dim; ++o)
                for (int i = 0; i < in; ++i) gw.at2(o, i) = n.grad[o] * n.parents[0]->value[i];
            accumulate(n.parents[1], gw);
        }
        if (n.parents[2]->requires_grad) accumulate(n.parents[2], n.grad);
    });
}

// ---------------------------------------------------------------------------
// Layer modules: plain structs owning Parameters, callable on a GraphContext.
// ---------------------------------------------------------------------------

struct Conv2dLayer {
    Parameter w, b;

    Conv2dLayer() = default;
    Conv2dLayer(Rng& rng, int cin, int cout, int k, bool zero_init = false) {
        w.value = Tensor::zeros({cout, cin, k, k});
        b.value = Tensor::zeros({cout});
        if (!zero_init) {
            const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
            for (std::size_t i = 0; i < w.value.numel(); ++i) w.value[i] = rng.normal(0.0, std);
        }
    }

    Var operator()(GraphContext& ctx, const Var& x) { return conv2d(ctx, x, w, b); }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

struct InstanceNormLayer {
    Parameter gain, bias;

    InstanceNormLayer() = default;
    explicit InstanceNormLayer(int c) {
        gain.value = Tensor::full({c}, 1.0);
        bias.value = Tensor::zeros({c});
    }

    Var operator()(GraphContext& ctx, const Var& x) { return instance_norm(ctx, x, gain, bias); }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&gain);
        out.push_back(&bias);
    }
};

struct LinearLayer {
    Parameter w, b;

    LinearLayer() = default;
    LinearLayer(Rng& rng, int in, int out, bool zero_init = false) {
        w.value = Tensor::zeros({out, in});
        b.value = Tensor::zeros({out});
        if (!zero_init) {
            const double std = std::sqrt(2.0 / in);
            for (std::size_t i = 0; i < w.value.numel(); ++i) w.value[i] = rng.normal(0.0, std);
        }
    }

    Var operator()(GraphContext& ctx, const Var& x) { return linear(ctx, x, w, b); }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

/// conv -> instance norm -> relu, the downsampling-block body shared by the
/// encoder and the motion hourglass.
struct ConvNormRelu {
    Conv2dLayer conv;
    InstanceNormLayer norm;

    ConvNormRelu() = default;
    ConvNormRelu(Rng& rng, int cin, int cout, int k = 3) : conv(rng, cin, cout, k), norm(cout) {}

    Var operator()(GraphContext& ctx, const Var& x) { return relu(norm(ctx, conv(ctx, x))); }

    void collect(std::vector<Parameter*>& out) {
        conv.collect(out);
        norm.collect(out);
    }
};

/// Pre-activation residual block: x + conv(relu(norm(conv(relu(norm(x)))))).
struct ResBlock {
    InstanceNormLayer norm1, norm2;
    Conv2dLayer conv1, conv2;

    ResBlock() = default;
    ResBlock(Rng& rng, int c) : norm1(c), norm2(c), conv1(rng, c, c, 3), conv2(rng, c, c, 3) {}

    Var operator()(GraphContext& ctx, const Var& x) {
        Var h = conv1(ctx, relu(norm1(ctx, x)));
        h = conv2(ctx, relu(norm2(ctx, h)));
        return add(x, h);
    }

    void collect(std::vector<Parameter*>& out) {
        norm1.collect(out);
        conv1.collect(out);
        norm2.collect(out);
        conv2.collect(out);
    }
};

} // namespace stcnet
