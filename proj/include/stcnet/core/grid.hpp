#pragma once

#include "stcnet/core/tensor.hpp"

namespace stcnet {

// Coordinate convention, used identically by warping, heatmaps, soft-argmax
// and flow evaluation: normalized coordinates span [-1, 1] with grid cell
// centers at -1 + (2c+1)/n, so the first center sits at -1 + 1/n and the
// last at 1 - 1/n. Flow fields are backward maps stored as (2, h, w)
// tensors, channel 0 = x coordinate to sample, channel 1 = y.

inline double cell_center(int c, int n) { return -1.0 + (2.0 * c + 1.0) / n; }

/// Normalized coordinate -> continuous pixel index (0-based cell centers).
inline double to_pixel(double x, int n) { return (x + 1.0) * n / 2.0 - 0.5; }

inline Tensor identity_flow(int h, int w) {
    Tensor g = Tensor::zeros({2, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            g.at(0, y, x) = cell_center(x, w);
            g.at(1, y, x) = cell_center(y, h);
        }
    return g;
}

} // namespace stcnet
