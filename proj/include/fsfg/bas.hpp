#pragma once

#include <Eigen/Dense>
#include <utility>

#include "fsfg/image.hpp"

namespace fsfg {

/// Plain (gradient-free) feature map, c x h x w row-major.
struct FeatureArray {
    int c = 0, h = 0, w = 0;
    Eigen::ArrayXd values;

    FeatureArray() = default;
    FeatureArray(int c_, int h_, int w_)
        : c(c_), h(h_), w(w_), values(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(c_) * h_ * w_)) {}
    double& at(int k, int i, int j) { return values[(static_cast<Eigen::Index>(k) * h + i) * w + j]; }
    double at(int k, int i, int j) const { return values[(static_cast<Eigen::Index>(k) * h + i) * w + j]; }
};

struct ActivationMap {
    int h = 0, w = 0;
    Eigen::ArrayXd values;  // h*w
    double at(int i, int j) const { return values[static_cast<Eigen::Index>(i) * w + j]; }
};

struct BinaryMask {
    int h = 0, w = 0;
    Eigen::ArrayXd values;  // entries in {0,1}
    double at(int i, int j) const { return values[static_cast<Eigen::Index>(i) * w + j]; }
    int count() const { return static_cast<int>(values.sum()); }
};

/// Inclusive feature-grid box.
struct BBox {
    int row_min = 0, col_min = 0, row_max = 0, col_max = 0;
    bool operator==(const BBox&) const = default;
};

/// Inclusive pixel-coordinate box.
struct ImageBBox {
    int row_min = 0, col_min = 0, row_max = 0, col_max = 0;
    bool operator==(const ImageBBox&) const = default;
};

struct ForegroundEstimate {
    ActivationMap activation;
    double threshold = 0.0;
    BinaryMask mask;
    BinaryMask component_mask;
    BBox feature_box;
    ImageBBox image_box;
};

namespace bas {

/// A_F(i,j) = sum over channels of F.
ActivationMap aggregate_channels(const FeatureArray& f);

/// Spatial mean of the activation map.
double adaptive_threshold(const ActivationMap& a);

/// Strict comparison: mask = 1 where A(i,j) > theta.
BinaryMask foreground_mask(const ActivationMap& a, double theta);

/// Largest 8-connected component of 1s; ties broken by lexicographically
/// smallest (row_min, col_min). All-zero input stays all-zero.
BinaryMask largest_connected_component(const BinaryMask& m);

/// Minimal inclusive box covering all 1s; all-zero mask falls back to the
/// full grid.
BBox tight_bbox(const BinaryMask& m);

/// Map a feature-grid box to pixel coordinates: cell (i,j) covers the span
/// [i*H/h, (i+1)*H/h) x [j*W/w, (j+1)*W/w); the image box is the union of
/// the corner-cell spans, clamped to bounds.
ImageBBox to_image_box(const BBox& b, int feat_h, int feat_w, int img_h, int img_w);

/// Crop to the box and bilinearly zoom to target x target; a degenerate box
/// falls back to the full image.
Image crop_and_zoom(const Image& x, const ImageBBox& b, int target);

/// Full BAS pipeline: activation -> threshold -> mask -> largest component
/// -> tight box -> image box -> crop+zoom. Never fails; corner cases fall
/// back to the full image.
std::pair<Image, ForegroundEstimate> refine(const Image& x, const FeatureArray& f);

}  // namespace bas

/// Non-learned stand-in extractor for localization tests and visualization:
/// cell (i,j) of the single output channel holds the grayscale variance of
/// the corresponding pixel span.
FeatureArray variance_probe_features(const Image& x, int grid_h, int grid_w);

}  // namespace fsfg
