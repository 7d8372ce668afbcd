#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "fsfg/image.hpp"

namespace fsfg {

/// Procedurally rendered fine-grained "species": each class is a distinct
/// combination of body color, stripe color, stripe orientation and stripe
/// frequency, drawn as a textured ellipse at a randomized position and scale
/// over a cluttered background. Ground-truth boxes are emitted alongside.
struct SyntheticSpec {
    int n_classes = 15;
    int images_per_class = 60;
    int image_size = 84;
    std::uint64_t seed = 1;
};

/// Render one sample of `class_id`; fills the image's gt box fields.
Image render_synthetic(int class_id, int n_classes, int size, std::mt19937_64& rng);

/// Write the class-per-folder tree (PNG files + boxes.txt sidecars) under
/// `root`. Class folders are named class_000, class_001, ...
void write_synthetic_dataset(const std::string& root, const SyntheticSpec& spec);

/// Single textured blob on a flat background, for localization sanity
/// checks with the variance probe extractor. Reports the blob centroid.
Image render_blob_probe(std::mt19937_64& rng, int size, double* center_row, double* center_col);

}  // namespace fsfg
