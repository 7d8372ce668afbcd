#pragma once

#include <string>

#include "fsfg/backbone.hpp"
#include "fsfg/erasing.hpp"
#include "fsfg/objective.hpp"

namespace fsfg {

/// Component switches behind the ablation grid. The full model is
/// {raw, refined, l2l, foa, ae} all on (variant C3).
struct AblationFlags {
    bool use_raw = true;
    bool use_refined = true;  // BAS crop + second stage
    bool use_l2l = true;      // local-descriptor metric (off => cosine over GAP)
    bool use_foa = true;      // support-to-query alignment before L2L
    bool use_ae = true;       // attentive erasing on the raw global branch
    bool bas_twice = false;   // run BAS on the already refined image again
    bool use_gt_box = false;  // crop with human-annotated boxes first

    bool operator==(const AblationFlags&) const = default;
};

/// Named variants per the ablation tables, plus "full", "bas_twice" and
/// "with_bb". Throws on unknown names.
AblationFlags variant_flags(const std::string& variant);

/// Whole trainable model: shared extractor plus the two stage-specific
/// global classifier heads (the only unshared parameters).
class FewShotModel {
public:
    FewShotModel(BackboneConfig cfg, int num_base_classes, std::uint64_t seed = 0);

    Backbone& backbone() { return backbone_; }
    const Backbone& backbone() const { return backbone_; }
    ClassifierHead& head_raw() { return head_raw_; }
    ClassifierHead& head_refined() { return head_refined_; }
    int num_base_classes() const { return head_raw_.num_classes; }

    /// Extractor parameters plus both heads, keyed for checkpoints and the
    /// optimizer.
    std::map<std::string, ad::Var> named_parameters();

    void save(const std::string& path) ;
    static FewShotModel load(const std::string& path);

private:
    Backbone backbone_;
    ClassifierHead head_raw_, head_refined_;
};

/// Episode logit for one (query, prototype) stage pair, honoring the metric
/// flags: FOA+L2L, plain L2L, or cosine over pooled features. Always scaled
/// into [-tau, tau].
ad::Var stage_score(const ad::Var& f_query, const ad::Var& prototype, double tau,
                    bool use_l2l, bool use_foa);

}  // namespace fsfg
