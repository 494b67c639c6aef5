#pragma once

#include <cmath>
#include <vector>

#include "stcnet/core/autograd.hpp"

namespace stcnet {

inline double scalar_value(const Var& v) {
    STC_CHECK(v->value.numel() == 1, "expected scalar var");
    return v->value[0];
}

inline Var add(const Var& a, const Var& b) {
    STC_CHECK(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor out = Tensor::zeros(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        accumulate(n.parents[0], n.grad);
        accumulate(n.parents[1], n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    STC_CHECK(a->value.same_shape(b->value), "sub: shape mismatch");
    Tensor out = Tensor::zeros(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        accumulate(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            Tensor neg = Tensor::zeros(n.grad.shape());
            for (std::size_t i = 0; i < neg.numel(); ++i) neg[i] = -n.grad[i];
            accumulate(n.parents[1], neg);
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    STC_CHECK(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out = Tensor::zeros(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make_op(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor g = Tensor::zeros(n.grad.shape());
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * n.parents[1]->value[i];
            accumulate(n.parents[0], g);
        }
        if (n.parents[1]->requires_grad) {
            Tensor g = Tensor::zeros(n.grad.shape());
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * n.parents[0]->value[i];
            accumulate(n.parents[1], g);
        }
    });
}

inline Var mul_scalar(const Var& a, double s) {
    Tensor out = Tensor::zeros(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * s;
    return make_op(std::move(out), {a}, [s](Node& n) {
        if (s == 0.0) return; // zero-weighted branches contribute nothing
        Tensor g = Tensor::zeros(n.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * s;
        accumulate(n.parents[0], g);
    });
}

/// Elementwise product of a one-channel gate with every channel of b.
inline Var mul_gate(const Var& gate, const Var& b) {
    const Tensor& gv = gate->value;
    const Tensor& bv = b->value;
    STC_CHECK(gv.ndim() == 3 && gv.dim(0) == 1, "mul_gate: gate must be (1,H,W)");
    STC_CHECK(bv.ndim() == 3 && bv.dim(1) == gv.dim(1) && bv.dim(2) == gv.dim(2),
              "mul_gate: spatial mismatch");
    const int c = bv.dim(0);
    const std::size_t hw = spatial_size(bv);
    Tensor out = Tensor::zeros(bv.shape());
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = gv[i] * bv[ch * hw + i];
    return make_op(std::move(out), {gate, b}, [c, hw](Node& n) {
        const Tensor& gv = n.parents[0]->value;
        const Tensor& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            Tensor g = Tensor::zeros(gv.shape());
            for (int ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) g[i] += n.grad[ch * hw + i] * bv[ch * hw + i];
            accumulate(n.parents[0], g);
        }
        if (n.parents[1]->requires_grad) {
            Tensor g = Tensor::zeros(bv.shape());
            for (int ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < hw; ++i) g[ch * hw + i] = n.grad[ch * hw + i] * gv[i];
            accumulate(n.parents[1], g);
        }
    });
}

inline Var relu(const Var& a) {
    Tensor out = Tensor::zeros(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor g = Tensor::zeros(n.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i)
            g[i] = n.parents[0]->value[i] > 0.0 ? n.grad[i] : 0.0;
        accumulate(n.parents[0], g);
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out = Tensor::zeros(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double x = a->value[i];
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    const Tensor saved = out;
    return make_op(std::move(out), {a}, [saved](Node& n) {
        Tensor g = Tensor::zeros(n.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * saved[i] * (1.0 - saved[i]);
        accumulate(n.parents[0], g);
    });
}

inline Var abs(const Var& a) {
    Tensor out = Tensor::zeros(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::abs(a->value[i]);
    return make_op(std::move(out), {a}, [](Node& n) {
        Tensor g = Tensor::zeros(n.grad.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double x = n.parents[0]->value[i];
            g[i] = x > 0.0 ? n.grad[i] : (x < 0.0 ? -n.grad[i] : 0.0);
        }
        accumulate(n.parents[0], g);
    });
}

inline Var mean_all(const Var& a) {
    const std::size_t cnt = a->value.numel();
    double s = 0.0;
    for (std::size_t i = 0; i < cnt; ++i) s += a->value[i];
    return make_op(Tensor::scalar(s / static_cast<double>(cnt)), {a}, [cnt](Node& n) {
        const double gs = n.grad[0] / static_cast<double>(cnt);
        Tensor g = Tensor::full(n.parents[0]->value.shape(), gs);
        accumulate(n.parents[0], g);
    });
}

inline Var sum_all(const Var& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return make_op(Tensor::scalar(s), {a}, [](Node& n) {
        Tensor g = Tensor::full(n.parents[0]->value.shape(), n.grad[0]);
        accumulate(n.parents[0], g);
    });
}

/// Mean absolute difference, the repo-wide L1 on tensors of any shape.
inline Var l1_distance(const Var& a, const Var& b) { return mean_all(abs(sub(a, b))); }

inline Var concat_channels(const std::vector<Var>& parts) {
    STC_CHECK(!parts.empty(), "concat_channels: empty input");
    const int h = parts[0]->value.dim(1), w = parts[0]->value.dim(2);
    int c = 0;
    for (const auto& p : parts) {
        STC_CHECK(p->value.ndim() == 3 && p->value.dim(1) == h && p->value.dim(2) == w,
                  "concat_channels: spatial mismatch");
        c += p->value.dim(0);
    }
    Tensor out = Tensor::zeros({c, h, w});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data(), p->value.data() + p->value.numel(), out.data() + off);
        off += p->value.numel();
    }
    return make_op(std::move(out), parts, [](Node& n) {
        std::size_t off = 0;
        for (auto& p : n.parents) {
            if (p->requires_grad) {
                Tensor g = Tensor::zeros(p->value.shape());
                std::copy(n.grad.data() + off, n.grad.data() + off + g.numel(), g.data());
                accumulate(p, g);
            }
            off += p->value.numel();
        }
    });
}

inline Var slice_channels(const Var& a, int start, int count) {
    const Tensor& v = a->value;
    STC_CHECK(v.ndim() == 3 && start >= 0 && start + count <= v.dim(0), "slice_channels: bad range");
    const std::size_t hw = spatial_size(v);
    Tensor out = Tensor::zeros({count, v.dim(1), v.dim(2)});
    std::copy(v.data() + start * hw, v.data() + (start + count) * hw, out.data());
    return make_op(std::move(out), {a}, [start, hw](Node& n) {
        Tensor g = Tensor::zeros(n.parents[0]->value.shape());
        std::copy(n.grad.data(), n.grad.data() + n.grad.numel(), g.data() + start * hw);
        accumulate(n.parents[0], g);
    });
}

/// Softmax across the channel axis at every spatial location.
inline Var softmax_channels(const Var& a) {
    const Tensor& v = a->value;
    STC_CHECK(v.ndim() == 3, "softmax_channels: expected CHW");
    const int c = v.dim(0);
    const std::size_t hw = spatial_size(v);
    Tensor out = Tensor::zeros(v.shape());
    for (std::size_t i = 0; i < hw; ++i) {
        double m = v[i];
        for (int ch = 1; ch < c; ++ch) m = std::max(m, v[ch * hw + i]);
        double s = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            const double e = std::exp(v[ch * hw + i] - m);
            out[ch * hw + i] = e;
            s += e;
        }
        for (int ch = 0; ch < c; ++ch) out[ch * hw + i] /= s;
    }
    const Tensor saved = out;
    return make_op(std::move(out), {a}, [saved, c, hw](Node& n) {
        Tensor g = Tensor::zeros(saved.shape());
        for (std::size_t i = 0; i < hw; ++i) {
            double dot = 0.0;
            for (int ch = 0; ch < c; ++ch) dot += n.grad[ch * hw + i] * saved[ch * hw + i];
            for (int ch = 0; ch < c; ++ch)
                g[ch * hw + i] = saved[ch * hw + i] * (n.grad[ch * hw + i] - dot);
        }
        accumulate(n.parents[0], g);
    });
}

/// Per-channel stable exponential: exp(x - max_spatial(x)). Output in (0,1].
inline Var exp_shift_max(const Var& a) {
    const Tensor& v = a->value;
    STC_CHECK(v.ndim() == 3, "exp_shift_max: expected CHW");
    const int c = v.dim(0);
    const std::size_t hw = spatial_size(v);
    Tensor out = Tensor::zeros(v.shape());
    std::vector<std::size_t> argmax(c, 0);
    for (int ch = 0; ch < c; ++ch) {
        std::size_t am = 0;
        for (std::size_t i = 1; i < hw; ++i)
            if (v[ch * hw + i] > v[ch * hw + am]) am = i;
        argmax[ch] = am;
        const double m = v[ch * hw + am];
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = std::exp(v[ch * hw + i] - m);
    }
    const Tensor saved = out;
    return make_op(std::move(out), {a}, [saved, argmax, c, hw](Node& n) {
        Tensor g = Tensor::zeros(saved.shape());
        for (int ch = 0; ch < c; ++ch) {
            double sum = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
                const double gi = n.grad[ch * hw + i] * saved[ch * hw + i];
                g[ch * hw + i] = gi;
                sum += gi;
            }
            g[ch * hw + argmax[ch]] -= sum;
        }
        accumulate(n.parents[0], g);
    });
}

/// Normalizes each channel to unit spatial sum; errors on all-zero channels.
inline Var normalize_channel_sum(const Var& a) {
    const Tensor& v = a->value;
    STC_CHECK(v.ndim() == 3, "normalize_channel_sum: expected CHW");
    const int c = v.dim(0);
    const std::size_t hw = spatial_size(v);
    Tensor out = Tensor::zeros(v.shape());
    std::vector<double> sums(c, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
            STC_CHECK(v[ch * hw + i] >= 0.0, "normalize_channel_sum: negative mass");
            s += v[ch * hw + i];
        }
        STC_CHECK(s > 0.0, "normalize_channel_sum: all-zero channel " << ch);
        sums[ch] = s;
        for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = v[ch * hw + i] / s;
    }
    const Tensor saved = out;
    return make_op(std::move(out), {a}, [saved, sums, c, hw](Node& n) {
        Tensor g = Tensor::zeros(saved.shape());
        for (int ch = 0; ch < c; ++ch) {
            double dot = 0.0;
            for (std::size_t i = 0; i < hw; ++i) dot += n.grad[ch * hw + i] * saved[ch * hw + i];
            for (std::size_t i = 0; i < hw; ++i)
                g[ch * hw + i] = (n.grad[ch * hw + i] - dot) / sums[ch];
        }
        accumulate(n.parents[0], g);
    });
}

/// Sum across the channel axis, (C,H,W) -> (1,H,W).
inline Var sum_channels(const Var& a) {
    const Tensor& v = a->value;
    STC_CHECK(v.ndim() == 3, "sum_channels: expected CHW");
    const int c = v.dim(0);
    const std::size_t hw = spatial_size(v);
    Tensor out = Tensor::zeros({1, v.dim(1), v.dim(2)});
    for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) out[i] += v[ch * hw + i];
    return make_op(std::move(out), {a}, [c, hw](Node& n) {
        Tensor g = Tensor::zeros(n.parents[0]->value.shape());
        for (int ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < hw; ++i) g[ch * hw + i] = n.grad[i];
        accumulate(n.parents[0], g);
    });
}

/// Per-channel spatial mean, (C,H,W) -> (C,).
inline Var global_avg(const Var& a) {
    const Tensor& v = a->value;
    STC_CHECK(v.ndim() == 3, "global_avg: expected CHW");
    const int c = v.dim(0);
    const std::size_t hw = spatial_size(v);
    Tensor out = Tensor::zeros({c});
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += v[ch * hw + i];
        out[ch] = s / static_cast<double>(hw);
    }
    return make_op(std::move(out), {a}, [c, hw](Node& n) {
        Tensor g = Tensor::zeros(n.parents[0]->value.shape());
        for (int ch = 0; ch < c; ++ch) {
            const double gs = n.grad[ch] / static_cast<double>(hw);
            for (std::size_t i = 0; i < hw; ++i) g[ch * hw + i] = gs;
        }
        accumulate(n.parents[0], g);
    });
}

} // namespace stcnet
