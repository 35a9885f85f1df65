#pragma once

#include <string>
#include <vector>

#include "spikefuse/common.hpp"

namespace spikefuse {

/// 8-bit RGB image, row-major interleaved (r, g, b per pixel).
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<unsigned char> rgb;
};

Image load_png(const std::string& path);
void save_png(const std::string& path, const Image& img);

/// Binary PPM (P6), an always-available fallback format.
Image load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Image& img);

/// Planar [3, H, W] floats in [0, 1] from an interleaved image, resized to
/// hw x hw with bilinear interpolation.
std::vector<double> image_to_planes(const Image& img, std::size_t hw);

}  // namespace spikefuse
