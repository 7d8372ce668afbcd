#include "fsfg/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace fsfg {

Image bilinear_resample(const Image& src, int r0, int c0, int r1, int c1,
                        int target_h, int target_w) {
    if (r0 < 0 || c0 < 0 || r1 >= src.height || c1 >= src.width || r0 > r1 || c0 > c1)
        throw std::invalid_argument("bilinear_resample: region out of bounds");
    const int sh = r1 - r0 + 1, sw = c1 - c0 + 1;
    Image out(target_h, target_w);
    const double sy = static_cast<double>(sh) / target_h;
    const double sx = static_cast<double>(sw) / target_w;
    for (int ti = 0; ti < target_h; ++ti) {
        double fy = (ti + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(sh - 1));
        const int i0 = static_cast<int>(std::floor(fy));
        const int i1 = std::min(i0 + 1, sh - 1);
        const double wy = fy - i0;
        for (int tj = 0; tj < target_w; ++tj) {
            double fx = (tj + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(sw - 1));
            const int j0 = static_cast<int>(std::floor(fx));
            const int j1 = std::min(j0 + 1, sw - 1);
            const double wx = fx - j0;
            for (int c = 0; c < 3; ++c) {
                const double v =
                    (1 - wy) * ((1 - wx) * src.at(r0 + i0, c0 + j0, c) +
                                wx * src.at(r0 + i0, c0 + j1, c)) +
                    wy * ((1 - wx) * src.at(r0 + i1, c0 + j0, c) +
                          wx * src.at(r0 + i1, c0 + j1, c));
                out.at(ti, tj, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

Image resize(const Image& src, int target_h, int target_w) {
    return bilinear_resample(src, 0, 0, src.height - 1, src.width - 1, target_h, target_w);
}

Image hflip(const Image& src) {
    Image out(src.height, src.width);
    out.global_label = src.global_label;
    for (int i = 0; i < src.height; ++i)
        for (int j = 0; j < src.width; ++j)
            for (int c = 0; c < 3; ++c) out.at(i, j, c) = src.at(i, src.width - 1 - j, c);
    return out;
}

void write_png(const Image& img, const std::string& path) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int i = 0; i < img.height; ++i)
        for (int j = 0; j < img.width; ++j) {
            auto& px = m.at<cv::Vec3b>(i, j);
            // OpenCV stores BGR
            for (int c = 0; c < 3; ++c)
                px[2 - c] = static_cast<std::uint8_t>(
                    std::lround(std::clamp(img.at(i, j, c), 0.0, 1.0) * 255.0));
        }
    if (!cv::imwrite(path, m)) throw std::runtime_error("failed to write image: " + path);
}

Image read_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("failed to read image: " + path);
    Image img(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) {
            const auto& px = m.at<cv::Vec3b>(i, j);
            for (int c = 0; c < 3; ++c) img.at(i, j, c) = px[2 - c] / 255.0;
        }
    return img;
}

}  // namespace fsfg
