#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsfg {

/// RGB image, values in [0,1], row-major, interleaved channels.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // size height*width*3
    int global_label = -1;
    bool has_gt_box = false;
    int gt_x = 0, gt_y = 0, gt_w = 0, gt_h = 0;  // pixel units, origin top-left

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0) {}

    double& at(int i, int j, int c) { return pixels[(static_cast<std::size_t>(i) * width + j) * 3 + c]; }
    double at(int i, int j, int c) const { return pixels[(static_cast<std::size_t>(i) * width + j) * 3 + c]; }
};

/// Bilinear resample of a rectangular region [r0,r1]x[c0,c1] (inclusive pixel
/// coords) to target_h x target_w. Uses pixel-center alignment; output clamped
/// to [0,1].
Image bilinear_resample(const Image& src, int r0, int c0, int r1, int c1,
                        int target_h, int target_w);

/// Whole-image resize.
Image resize(const Image& src, int target_h, int target_w);

/// Horizontal mirror.
Image hflip(const Image& src);

/// Lossless PNG I/O. Throws std::runtime_error naming the file on failure.
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

}  // namespace fsfg
