#include "fsfg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace fsfg {

namespace {

struct Rgb {
    double r, g, b;
};

Rgb hsv(double h, double s, double v) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

struct ClassStyle {
    Rgb body, stripe;
    double angle;      // stripe orientation
    double frequency;  // stripe frequency in cycles per pixel
};

ClassStyle class_style(int class_id) {
    // golden-ratio hue spacing keeps colors well separated for any class count
    const double hue = std::fmod(0.61803398875 * class_id + 0.13, 1.0);
    ClassStyle st;
    st.body = hsv(hue, 0.85, 0.85);
    st.stripe = hsv(hue + 0.37, 0.9, 0.55);
    st.angle = (class_id % 4) * (3.14159265358979 / 4.0);
    st.frequency = 0.45 + 0.25 * (class_id % 3);
    return st;
}

}  // namespace

Image render_synthetic(int class_id, int /*n_classes*/, int size, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Image img(size, size);

    // cluttered but low-saturation background
    const double bg = 0.35 + 0.25 * uni(rng);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j)
            for (int c = 0; c < 3; ++c)
                img.at(i, j, c) = std::clamp(bg + 0.04 * (uni(rng) - 0.5), 0.0, 1.0);
    const int n_rects = 3 + static_cast<int>(uni(rng) * 4);
    for (int r = 0; r < n_rects; ++r) {
        const int rw = 4 + static_cast<int>(uni(rng) * size / 4);
        const int rh = 4 + static_cast<int>(uni(rng) * size / 4);
        const int r0 = static_cast<int>(uni(rng) * (size - rh));
        const int c0 = static_cast<int>(uni(rng) * (size - rw));
        const double shade = bg + 0.12 * (uni(rng) - 0.5);
        for (int i = r0; i < r0 + rh; ++i)
            for (int j = c0; j < c0 + rw; ++j)
                for (int c = 0; c < 3; ++c)
                    img.at(i, j, c) = std::clamp(shade + 0.03 * (uni(rng) - 0.5), 0.0, 1.0);
    }

    // object: striped ellipse, random position and scale
    const ClassStyle st = class_style(class_id);
    const double rx = (0.14 + 0.12 * uni(rng)) * size;
    const double ry = (0.14 + 0.12 * uni(rng)) * size;
    const double cx = rx + uni(rng) * (size - 2 * rx);
    const double cy = ry + uni(rng) * (size - 2 * ry);
    const double ca = std::cos(st.angle), sa = std::sin(st.angle);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double dy = (i - cy) / ry, dx = (j - cx) / rx;
            if (dx * dx + dy * dy > 1.0) continue;
            const double phase = st.frequency * ((j - cx) * ca + (i - cy) * sa);
            const Rgb& col = std::sin(phase) > 0 ? st.body : st.stripe;
            const double n = 0.05 * (uni(rng) - 0.5);
            img.at(i, j, 0) = std::clamp(col.r + n, 0.0, 1.0);
            img.at(i, j, 1) = std::clamp(col.g + n, 0.0, 1.0);
            img.at(i, j, 2) = std::clamp(col.b + n, 0.0, 1.0);
        }

    img.has_gt_box = true;
    img.gt_x = std::max(0, static_cast<int>(std::floor(cx - rx)));
    img.gt_y = std::max(0, static_cast<int>(std::floor(cy - ry)));
    img.gt_w = std::min(size, static_cast<int>(std::ceil(cx + rx))) - img.gt_x;
    img.gt_h = std::min(size, static_cast<int>(std::ceil(cy + ry))) - img.gt_y;
    return img;
}

void write_synthetic_dataset(const std::string& root, const SyntheticSpec& spec) {
    fs::create_directories(root);
    std::mt19937_64 rng(spec.seed);
    for (int cls = 0; cls < spec.n_classes; ++cls) {
        char name[32];
        std::snprintf(name, sizeof(name), "class_%03d", cls);
        const fs::path dir = fs::path(root) / name;
        fs::create_directories(dir);
        std::ofstream boxes(dir / "boxes.txt");
        for (int k = 0; k < spec.images_per_class; ++k) {
            Image img = render_synthetic(cls, spec.n_classes, spec.image_size, rng);
            char fn[32];
            std::snprintf(fn, sizeof(fn), "img_%04d.png", k);
            write_png(img, (dir / fn).string());
            boxes << fn << ' ' << img.gt_x << ' ' << img.gt_y << ' ' << img.gt_w << ' '
                  << img.gt_h << '\n';
        }
    }
}

Image render_blob_probe(std::mt19937_64& rng, int size, double* center_row, double* center_col) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Image img(size, size);
    for (auto& p : img.pixels) p = 0.5;  // flat background
    const double rx = (0.10 + 0.10 * uni(rng)) * size;
    const double ry = (0.10 + 0.10 * uni(rng)) * size;
    const double cx = rx + uni(rng) * (size - 2 * rx);
    const double cy = ry + uni(rng) * (size - 2 * ry);
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double dy = (i - cy) / ry, dx = (j - cx) / rx;
            if (dx * dx + dy * dy > 1.0) continue;
            const double v = uni(rng);  // high-variance texture
            for (int c = 0; c < 3; ++c) img.at(i, j, c) = v;
        }
    if (center_row) *center_row = cy;
    if (center_col) *center_col = cx;
    return img;
}

}  // namespace fsfg
