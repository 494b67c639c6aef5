#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <iostream>
#include <vector>

#include "stcnet/core/tensor.hpp"
#include "stcnet/motion/warp.hpp"

namespace stcnet {

/// Thin-plate spline point map with kernel phi(r) = r^2 log(r^2). The map
/// sends its stored control points (the domain side) onto the fitted
/// targets: an affine part plus radial terms whose weights satisfy the
/// standard side conditions (zero sum, orthogonal to the control
/// coordinates).
struct TpsTransform {
    Tensor controls;    // (n,2) domain points, the radial-basis centers
    Tensor rbf_weights; // (n,2)
    std::array<std::array<double, 3>, 2> affine{}; // row-major 2x3, [a11 a12 tx; a21 a22 ty]
    bool exact = true;  // false when the fit fell back to least-squares affine

    static double kernel(double r2) { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

    std::array<double, 2> apply(double x, double y) const {
        std::array<double, 2> q{affine[0][0] * x + affine[0][1] * y + affine[0][2],
                                affine[1][0] * x + affine[1][1] * y + affine[1][2]};
        const int n = controls.defined() ? controls.dim(0) : 0;
        for (int i = 0; i < n; ++i) {
            const double dx = x - controls.at2(i, 0);
            const double dy = y - controls.at2(i, 1);
            const double u = kernel(dx * dx + dy * dy);
            q[0] += rbf_weights.at2(i, 0) * u;
            q[1] += rbf_weights.at2(i, 1) * u;
        }
        return q;
    }

    /// Evaluates the map on every cell center of an (h,w) grid.
    Tensor evaluate_grid(int h, int w) const {
        Tensor flow = Tensor::zeros({2, h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const auto q = apply(cell_center(x, w), cell_center(y, h));
                flow.at(0, y, x) = q[0];
                flow.at(1, y, x) = q[1];
            }
        return flow;
    }
};

namespace detail {

inline bool controls_degenerate(const Tensor& pts) {
    const int n = pts.dim(0);
    if (n < 3) return true;
    // scale-aware collinearity test over all triples
    double scale = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double dx = pts.at2(i, 0) - pts.at2(j, 0);
            const double dy = pts.at2(i, 1) - pts.at2(j, 1);
            scale = std::max(scale, dx * dx + dy * dy);
        }
    if (scale == 0.0) return true;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) {
                const double cross = (pts.at2(j, 0) - pts.at2(i, 0)) * (pts.at2(k, 1) - pts.at2(i, 1)) -
                                     (pts.at2(j, 1) - pts.at2(i, 1)) * (pts.at2(k, 0) - pts.at2(i, 0));
                if (std::abs(cross) > 1e-10 * scale) return false;
            }
    return true;
}

/// Least-squares affine fit used when the TPS system is degenerate;
/// degrades to a pure translation when even the affine fit is rank
/// deficient.
inline TpsTransform affine_fallback(const Tensor& control_src, const Tensor& control_drv) {
    const int n = control_drv.dim(0);
    TpsTransform t;
    t.exact = false;
    Eigen::MatrixXd p(n, 3);
    Eigen::MatrixXd rhs(n, 2);
    for (int i = 0; i < n; ++i) {
        p(i, 0) = control_drv.at2(i, 0);
        p(i, 1) = control_drv.at2(i, 1);
        p(i, 2) = 1.0;
        rhs(i, 0) = control_src.at2(i, 0);
        rhs(i, 1) = control_src.at2(i, 1);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(p);
    if (n >= 3 && qr.rank() == 3) {
        Eigen::MatrixXd a = qr.solve(rhs);
        t.affine = {{{a(0, 0), a(1, 0), a(2, 0)}, {a(0, 1), a(1, 1), a(2, 1)}}};
        return t;
    }
    double tx = 0.0, ty = 0.0;
    for (int i = 0; i < n; ++i) {
        tx += control_src.at2(i, 0) - control_drv.at2(i, 0);
        ty += control_src.at2(i, 1) - control_drv.at2(i, 1);
    }
    t.affine = {{{1.0, 0.0, tx / n}, {0.0, 1.0, ty / n}}};
    return t;
}

} // namespace detail

/// Fits the backward map taking driving coordinates to source coordinates:
/// the returned transform satisfies apply(control_drv_i) == control_src_i
/// exactly when reg == 0. `reg` adds reg*I to the kernel block.
inline TpsTransform tps_fit(const Tensor& control_src, const Tensor& control_drv, double reg = 0.0) {
    STC_CHECK(control_src.ndim() == 2 && control_src.dim(1) == 2, "tps_fit: controls must be (n,2)");
    STC_CHECK(control_src.same_shape(control_drv), "tps_fit: control count mismatch");
    STC_CHECK(reg >= 0.0, "tps_fit: negative regularization");
    const int n = control_src.dim(0);
    STC_CHECK(n >= 3, "tps_fit: need at least 3 controls");
    STC_CHECK(!detail::controls_degenerate(control_drv), "tps_fit: degenerate controls");

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double dx = control_drv.at2(i, 0) - control_drv.at2(j, 0);
            const double dy = control_drv.at2(i, 1) - control_drv.at2(j, 1);
            a(i, j) = TpsTransform::kernel(dx * dx + dy * dy);
        }
        a(i, i) += reg;
        a(i, n) = a(n, i) = 1.0;
        a(i, n + 1) = a(n + 1, i) = control_drv.at2(i, 0);
        a(i, n + 2) = a(n + 2, i) = control_drv.at2(i, 1);
        rhs(i, 0) = control_src.at2(i, 0);
        rhs(i, 1) = control_src.at2(i, 1);
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    Eigen::MatrixXd sol = lu.solve(rhs);
    const double residual = (a * sol - rhs).cwiseAbs().maxCoeff();
    STC_CHECK(std::isfinite(residual) && residual < 1e-6, "tps_fit: singular TPS system");

    TpsTransform t;
    t.controls = control_drv.clone();
    t.rbf_weights = Tensor::zeros({n, 2});
    for (int i = 0; i < n; ++i) {
        t.rbf_weights.at2(i, 0) = sol(i, 0);
        t.rbf_weights.at2(i, 1) = sol(i, 1);
    }
    t.affine = {{{sol(n + 1, 0), sol(n + 2, 0), sol(n, 0)},
                 {sol(n + 1, 1), sol(n + 2, 1), sol(n, 1)}}};
    return t;
}

/// tps_fit with the documented degenerate-control fallback: collinear or
/// coincident controls produce a least-squares affine fit and a warning.
inline TpsTransform tps_fit_or_affine(const Tensor& control_src, const Tensor& control_drv,
                                      double reg = 0.0) {
    if (detail::controls_degenerate(control_drv)) {
        std::cerr << "[stcnet] warning: degenerate TPS controls, falling back to affine fit\n";
        return detail::affine_fallback(control_src, control_drv);
    }
    return tps_fit(control_src, control_drv, reg);
}

} // namespace stcnet
