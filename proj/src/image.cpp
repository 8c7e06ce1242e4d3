#include "lesioncad/image.hpp"

#include <algorithm>
#include <cmath>

namespace lesioncad {

Image2D image_from_slice(std::span<const float> slice, int nx, int ny) {
    Image2D img(nx, ny);
    for (std::size_t i = 0; i < img.px.size(); ++i) img.px[i] = static_cast<double>(slice[i]);
    return img;
}

Image2D gaussian_blur(const Image2D& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * (k * k) / (sigma * sigma));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        total += w;
    }
    for (double& w : kernel) w /= total;

    Image2D tmp(img.nx, img.ny);
    for (int y = 0; y < img.ny; ++y) {
        for (int x = 0; x < img.nx; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int xx = std::clamp(x + k, 0, img.nx - 1);
                acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(xx, y);
            }
            tmp.at(x, y) = acc;
        }
    }
    Image2D out(img.nx, img.ny);
    for (int y = 0; y < img.ny; ++y) {
        for (int x = 0; x < img.nx; ++x) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int yy = std::clamp(y + k, 0, img.ny - 1);
                acc += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(x, yy);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

Image2D difference_of_gaussians(const Image2D& img, double sigma_small, double sigma_large) {
    Image2D a = gaussian_blur(img, sigma_small);
    const Image2D b = gaussian_blur(img, sigma_large);
    for (std::size_t i = 0; i < a.px.size(); ++i) a.px[i] -= b.px[i];
    return a;
}

std::vector<Component> connected_components(std::span<const unsigned char> mask, int nx, int ny) {
    std::vector<int> label(mask.size(), -1);
    std::vector<Component> comps;
    std::vector<std::size_t> stack;
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            const std::size_t start = static_cast<std::size_t>(y) * nx + x;
            if (!mask[start] || label[start] >= 0) continue;
            const int id = static_cast<int>(comps.size());
            Component c;
            c.x0 = c.x1 = x;
            c.y0 = c.y1 = y;
            label[start] = id;
            stack.assign(1, start);
            while (!stack.empty()) {
                const std::size_t p = stack.back();
                stack.pop_back();
                c.pixels.push_back(p);
                const int px = static_cast<int>(p % nx);
                const int py = static_cast<int>(p / nx);
                c.x0 = std::min(c.x0, px);
                c.x1 = std::max(c.x1, px);
                c.y0 = std::min(c.y0, py);
                c.y1 = std::max(c.y1, py);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int qx = px + dx;
                        const int qy = py + dy;
                        if (qx < 0 || qy < 0 || qx >= nx || qy >= ny) continue;
                        const std::size_t q = static_cast<std::size_t>(qy) * nx + qx;
                        if (mask[q] && label[q] < 0) {
                            label[q] = id;
                            stack.push_back(q);
                        }
                    }
                }
            }
            std::sort(c.pixels.begin(), c.pixels.end());
            comps.push_back(std::move(c));
        }
    }
    return comps;
}

double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

}  // namespace lesioncad
