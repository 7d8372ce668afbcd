#include "fsfg/bas.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fsfg::bas {

ActivationMap aggregate_channels(const FeatureArray& f) {
    ActivationMap a;
    a.h = f.h;
    a.w = f.w;
    a.values = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(f.h) * f.w);
    for (int k = 0; k < f.c; ++k)
        a.values += f.values.segment(static_cast<Eigen::Index>(k) * f.h * f.w,
                                     static_cast<Eigen::Index>(f.h) * f.w);
    return a;
}

double adaptive_threshold(const ActivationMap& a) { return a.values.mean(); }

BinaryMask foreground_mask(const ActivationMap& a, double theta) {
    BinaryMask m;
    m.h = a.h;
    m.w = a.w;
    m.values = (a.values > theta).cast<double>();
    return m;
}

BinaryMask largest_connected_component(const BinaryMask& m) {
    const int h = m.h, w = m.w;
    std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
    int best_label = -1, best_size = 0;
    BBox best_box;
    int n_labels = 0;
    std::vector<int> stack;
    for (int s = 0; s < h * w; ++s) {
        if (m.values(s) == 0.0 || label[s] >= 0) continue;
        const int cur = n_labels++;
        int size = 0;
        BBox box{h, w, -1, -1};
        stack.push_back(s);
        label[s] = cur;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            const int i = p / w, j = p % w;
            ++size;
            box.row_min = std::min(box.row_min, i);
            box.col_min = std::min(box.col_min, j);
            box.row_max = std::max(box.row_max, i);
            box.col_max = std::max(box.col_max, j);
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ni = i + di, nj = j + dj;
                    if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
                    const int q = ni * w + nj;
                    if (m.values(q) != 0.0 && label[q] < 0) {
                        label[q] = cur;
                        stack.push_back(q);
                    }
                }
        }
        const bool better =
            size > best_size ||
            (size == best_size &&
             std::pair{box.row_min, box.col_min} < std::pair{best_box.row_min, best_box.col_min});
        if (better) {
            best_size = size;
            best_label = cur;
            best_box = box;
        }
    }
    BinaryMask out;
    out.h = h;
    out.w = w;
    out.values = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(h) * w);
    if (best_label >= 0)
        for (int s = 0; s < h * w; ++s)
            if (label[s] == best_label) out.values(s) = 1.0;
    return out;
}

BBox tight_bbox(const BinaryMask& m) {
    BBox box{m.h, m.w, -1, -1};
    for (int i = 0; i < m.h; ++i)
        for (int j = 0; j < m.w; ++j)
            if (m.at(i, j) != 0.0) {
                box.row_min = std::min(box.row_min, i);
                box.col_min = std::min(box.col_min, j);
                box.row_max = std::max(box.row_max, i);
                box.col_max = std::max(box.col_max, j);
            }
    if (box.row_max < 0) return BBox{0, 0, m.h - 1, m.w - 1};  // empty-mask fallback
    return box;
}

ImageBBox to_image_box(const BBox& b, int feat_h, int feat_w, int img_h, int img_w) {
    auto span_lo = [](int cell, int img, int feat) {
        return static_cast<int>(std::floor(static_cast<double>(cell) * img / feat));
    };
    auto span_hi = [](int cell, int img, int feat) {
        return static_cast<int>(std::ceil(static_cast<double>(cell + 1) * img / feat)) - 1;
    };
    ImageBBox out;
    out.row_min = std::clamp(span_lo(b.row_min, img_h, feat_h), 0, img_h - 1);
    out.col_min = std::clamp(span_lo(b.col_min, img_w, feat_w), 0, img_w - 1);
    out.row_max = std::clamp(span_hi(b.row_max, img_h, feat_h), 0, img_h - 1);
    out.col_max = std::clamp(span_hi(b.col_max, img_w, feat_w), 0, img_w - 1);
    return out;
}

Image crop_and_zoom(const Image& x, const ImageBBox& b, int target) {
    int r0 = std::clamp(b.row_min, 0, x.height - 1);
    int r1 = std::clamp(b.row_max, 0, x.height - 1);
    int c0 = std::clamp(b.col_min, 0, x.width - 1);
    int c1 = std::clamp(b.col_max, 0, x.width - 1);
    if (r1 < r0 || c1 < c0) {  // degenerate box, use the full image
        r0 = 0;
        c0 = 0;
        r1 = x.height - 1;
        c1 = x.width - 1;
    }
    return bilinear_resample(x, r0, c0, r1, c1, target, target);
}

std::pair<Image, ForegroundEstimate> refine(const Image& x, const FeatureArray& f) {
    ForegroundEstimate fg;
    fg.activation = aggregate_channels(f);
    fg.threshold = adaptive_threshold(fg.activation);
    fg.mask = foreground_mask(fg.activation, fg.threshold);
    fg.component_mask = largest_connected_component(fg.mask);
    fg.feature_box = tight_bbox(fg.component_mask);
    fg.image_box = to_image_box(fg.feature_box, f.h, f.w, x.height, x.width);
    Image refined = crop_and_zoom(x, fg.image_box, x.height);
    refined.global_label = x.global_label;
    return {std::move(refined), std::move(fg)};
}

}  // namespace fsfg::bas

namespace fsfg {

FeatureArray variance_probe_features(const Image& x, int grid_h, int grid_w) {
    FeatureArray f(1, grid_h, grid_w);
    for (int i = 0; i < grid_h; ++i) {
        const int r0 = i * x.height / grid_h;
        const int r1 = std::max(r0 + 1, (i + 1) * x.height / grid_h);
        for (int j = 0; j < grid_w; ++j) {
            const int c0 = j * x.width / grid_w;
            const int c1 = std::max(c0 + 1, (j + 1) * x.width / grid_w);
            double sum = 0.0, sq = 0.0;
            int n = 0;
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c) {
                    const double g =
                        (x.at(r, c, 0) + x.at(r, c, 1) + x.at(r, c, 2)) / 3.0;
                    sum += g;
                    sq += g * g;
                    ++n;
                }
            const double mean = sum / n;
            f.at(0, i, j) = std::max(sq / n - mean * mean, 0.0);
        }
    }
    return f;
}

}  // namespace fsfg
