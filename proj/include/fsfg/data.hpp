#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fsfg/image.hpp"

namespace fsfg {

/// Disjoint class-name lists selecting the base / validation / novel pools.
struct SplitSpec {
    std::string dataset_id;
    std::vector<std::string> base_classes;
    std::vector<std::string> val_classes;
    std::vector<std::string> novel_classes;
};

/// Count-based presets over the sorted class folders of a dataset root:
///   cub   100/50/50 of 200,  dogs 70/20/30 of 120,  cars 130/17/49 of 196,
///   synthetic 10/0/5 of 15.
/// Throws if the class count does not match the preset.
SplitSpec preset_split(const std::string& preset, const std::vector<std::string>& sorted_classes);

/// Read one class name per line from three files.
SplitSpec split_from_files(const std::string& dataset_id, const std::string& base_file,
                           const std::string& val_file, const std::string& novel_file);

/// Sorted class-folder names under a dataset root.
std::vector<std::string> list_classes(const std::string& root);

struct ClassPool {
    std::string name;
    int global_label = -1;  // assigned for base classes only, -1 otherwise
    std::vector<Image> images;
};

struct Pool {
    std::vector<ClassPool> classes;
};

struct Dataset {
    Pool base, val, novel;
    int num_base_classes() const { return static_cast<int>(base.classes.size()); }
};

/// Load a class-per-folder tree. Each class folder may carry a `boxes.txt`
/// sidecar with `filename x y w h` lines (pixel units, origin top-left).
/// Base-class global labels follow sorted base-class-name order. Verifies
/// split disjointness and that every named class folder exists.
Dataset load_dataset(const std::string& root, const SplitSpec& split);

struct PreprocessConfig {
    int target_size = 84;
    bool random_crop = true;
    bool horizontal_flip = true;
    bool use_gt_box = false;
    double crop_scale_min = 0.7;  // area fraction of the random resized crop
};

/// Resize (and, in training mode, augment) one decoded image. Eval mode is
/// a plain bilinear resize and is deterministic; train mode draws the crop
/// and flip from `rng`.
Image preprocess(const Image& raw, const PreprocessConfig& cfg, std::mt19937_64& rng,
                 bool training);

}  // namespace fsfg
