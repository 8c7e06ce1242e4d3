#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lesioncad {

// 2D scalar image, row-major with x fastest.
struct Image2D {
    int nx = 0;
    int ny = 0;
    std::vector<double> px;

    Image2D() = default;
    Image2D(int w, int h, double fill = 0.0)
        : nx(w), ny(h), px(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(x);
    }
    double at(int x, int y) const { return px[index(x, y)]; }
    double& at(int x, int y) { return px[index(x, y)]; }
    bool same_shape(const Image2D& o) const { return nx == o.nx && ny == o.ny; }
};

Image2D image_from_slice(std::span<const float> slice, int nx, int ny);

// Separable Gaussian blur, kernel radius ceil(3 sigma), replicated borders.
Image2D gaussian_blur(const Image2D& img, double sigma);

// blur(img, sigma_small) - blur(img, sigma_large)
Image2D difference_of_gaussians(const Image2D& img, double sigma_small, double sigma_large);

struct Component {
    std::vector<std::size_t> pixels;  // raster order
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// 8-connected components of the true pixels of `mask` (size nx*ny), returned in
// order of their first pixel in raster scan.
std::vector<Component> connected_components(std::span<const unsigned char> mask, int nx, int ny);

double median_of(std::vector<double> values);

}  // namespace lesioncad
