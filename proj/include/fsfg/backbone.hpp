#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fsfg/autodiff.hpp"
#include "fsfg/bas.hpp"
#include "fsfg/image.hpp"

namespace fsfg {

enum class Architecture { conv64, resnet12, resnet18_like, tiny_test };

Architecture architecture_from_string(const std::string& s);
std::string architecture_to_string(Architecture a);

struct BackboneConfig {
    Architecture architecture = Architecture::resnet12;
    int input_size = 84;
    bool drop_last_pool = true;

    // Output contract, derived from the fields above.
    int output_channels() const;
    int output_spatial() const;  // h == w for square inputs
};

/// Global classifier head over the base-category space; a bare G x c weight
/// matrix (no bias).
struct ClassifierHead {
    int num_classes = 0;
    int feat_dim = 0;
    ad::Var weights;
};

ClassifierHead make_head(int num_classes, int feat_dim, std::uint64_t seed);

/// logits = W * GAP(F).
ad::Var classify_global(const ad::Var& feature_map, const ClassifierHead& head);

/// Shared feature extractor. The same parameter set serves the raw and the
/// refined forward pass; only the classifier heads differ between stages.
class Backbone {
public:
    explicit Backbone(BackboneConfig cfg, std::uint64_t seed = 0);

    /// Forward pass; the input must match config.input_size.
    ad::Var extract(const Image& img) const;
    /// Forward pass from an already-built (3,H,W) input var.
    ad::Var forward(const ad::Var& x) const;

    /// Gradient-free convenience: extract and strip the autodiff wrapper.
    FeatureArray extract_values(const Image& img) const;

    const BackboneConfig& config() const { return cfg_; }
    std::map<std::string, ad::Var>& parameters() { return params_; }
    const std::map<std::string, ad::Var>& parameters() const { return params_; }

private:
    BackboneConfig cfg_;
    std::map<std::string, ad::Var> params_;
};

FeatureArray to_feature_array(const ad::Var& f);

/// Checkpoint container: extractor parameters, both heads, and the config,
/// in a single little-endian binary archive (JSON header + raw doubles).
struct Checkpoint {
    BackboneConfig config;
    std::map<std::string, Eigen::ArrayXd> tensors;
};

void save_checkpoint(const std::string& path, const BackboneConfig& cfg,
                     const std::map<std::string, ad::Var>& named_params);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fsfg
