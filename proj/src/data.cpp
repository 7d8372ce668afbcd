#include "fsfg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace fsfg {

namespace {

SplitSpec counts_split(const std::string& id, const std::vector<std::string>& classes,
                       std::size_t n_base, std::size_t n_val, std::size_t n_novel) {
    if (classes.size() != n_base + n_val + n_novel)
        throw std::invalid_argument("preset '" + id + "' expects " +
                                    std::to_string(n_base + n_val + n_novel) + " classes, found " +
                                    std::to_string(classes.size()));
    SplitSpec s;
    s.dataset_id = id;
    s.base_classes.assign(classes.begin(), classes.begin() + n_base);
    s.val_classes.assign(classes.begin() + n_base, classes.begin() + n_base + n_val);
    s.novel_classes.assign(classes.begin() + n_base + n_val, classes.end());
    return s;
}

}  // namespace

SplitSpec preset_split(const std::string& preset, const std::vector<std::string>& sorted_classes) {
    if (preset == "cub") return counts_split(preset, sorted_classes, 100, 50, 50);
    if (preset == "dogs") return counts_split(preset, sorted_classes, 70, 20, 30);
    if (preset == "cars") return counts_split(preset, sorted_classes, 130, 17, 49);
    if (preset == "synthetic") return counts_split(preset, sorted_classes, 10, 0, 5);
    throw std::invalid_argument("unknown split preset: " + preset);
}

static std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open split file: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

SplitSpec split_from_files(const std::string& dataset_id, const std::string& base_file,
                           const std::string& val_file, const std::string& novel_file) {
    SplitSpec s;
    s.dataset_id = dataset_id;
    s.base_classes = read_lines(base_file);
    s.val_classes = read_lines(val_file);
    s.novel_classes = read_lines(novel_file);
    return s;
}

std::vector<std::string> list_classes(const std::string& root) {
    if (!fs::is_directory(root)) throw std::runtime_error("dataset root not found: " + root);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

namespace {

struct BoxEntry {
    int x, y, w, h;
};

std::map<std::string, BoxEntry> read_boxes(const fs::path& class_dir) {
    std::map<std::string, BoxEntry> boxes;
    const fs::path f = class_dir / "boxes.txt";
    if (!fs::exists(f)) return boxes;
    std::ifstream in(f);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string name;
        BoxEntry b;
        if (ss >> name >> b.x >> b.y >> b.w >> b.h) boxes[name] = b;
    }
    return boxes;
}

ClassPool load_class(const fs::path& class_dir, int global_label) {
    ClassPool pool;
    pool.name = class_dir.filename().string();
    pool.global_label = global_label;
    auto boxes = read_boxes(class_dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(class_dir)) {
        const std::string fn = e.path().filename().string();
        if (e.is_regular_file() && fn != "boxes.txt") files.push_back(fn);
    }
    std::sort(files.begin(), files.end());
    for (const auto& fn : files) {
        Image img = read_png((class_dir / fn).string());
        img.global_label = global_label;
        if (auto it = boxes.find(fn); it != boxes.end()) {
            img.has_gt_box = true;
            img.gt_x = it->second.x;
            img.gt_y = it->second.y;
            img.gt_w = it->second.w;
            img.gt_h = it->second.h;
        }
        pool.images.push_back(std::move(img));
    }
    return pool;
}

Pool load_pool(const fs::path& root, const std::vector<std::string>& names, bool assign_labels) {
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    Pool pool;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const fs::path dir = root / sorted[i];
        if (!fs::is_directory(dir))
            throw std::runtime_error("missing class folder: " + dir.string());
        pool.classes.push_back(load_class(dir, assign_labels ? static_cast<int>(i) : -1));
    }
    return pool;
}

}  // namespace

Dataset load_dataset(const std::string& root, const SplitSpec& split) {
    std::set<std::string> seen;
    for (const auto* list : {&split.base_classes, &split.val_classes, &split.novel_classes})
        for (const auto& c : *list)
            if (!seen.insert(c).second)
                throw std::invalid_argument("class appears in multiple splits: " + c);
    Dataset ds;
    ds.base = load_pool(root, split.base_classes, true);
    ds.val = load_pool(root, split.val_classes, false);
    ds.novel = load_pool(root, split.novel_classes, false);
    return ds;
}

Image preprocess(const Image& raw, const PreprocessConfig& cfg, std::mt19937_64& rng,
                 bool training) {
    if (cfg.target_size <= 0) throw std::invalid_argument("preprocess: target_size must be > 0");
    const Image* src = &raw;
    Image boxed;
    if (cfg.use_gt_box && raw.has_gt_box) {
        const int r0 = std::clamp(raw.gt_y, 0, raw.height - 1);
        const int c0 = std::clamp(raw.gt_x, 0, raw.width - 1);
        const int r1 = std::clamp(raw.gt_y + raw.gt_h - 1, r0, raw.height - 1);
        const int c1 = std::clamp(raw.gt_x + raw.gt_w - 1, c0, raw.width - 1);
        boxed = bilinear_resample(raw, r0, c0, r1, c1, r1 - r0 + 1, c1 - c0 + 1);
        boxed.global_label = raw.global_label;
        src = &boxed;
    }
    Image out;
    if (training && cfg.random_crop) {
        std::uniform_real_distribution<double> area(cfg.crop_scale_min, 1.0);
        const int short_side = std::min(src->height, src->width);
        const int side = std::max(1, static_cast<int>(std::lround(std::sqrt(area(rng)) * short_side)));
        std::uniform_int_distribution<int> dr(0, src->height - side);
        std::uniform_int_distribution<int> dc(0, src->width - side);
        const int r0 = dr(rng), c0 = dc(rng);
        out = bilinear_resample(*src, r0, c0, r0 + side - 1, c0 + side - 1, cfg.target_size,
                                cfg.target_size);
    } else {
        out = resize(*src, cfg.target_size, cfg.target_size);
    }
    out.global_label = raw.global_label;
    if (training && cfg.horizontal_flip) {
        std::bernoulli_distribution flip(0.5);
        if (flip(rng)) out = hflip(out);
    }
    return out;
}

}  // namespace fsfg
