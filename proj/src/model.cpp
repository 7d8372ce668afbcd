#include "fsfg/model.hpp"

namespace fsfg {

AblationFlags variant_flags(const std::string& v) {
    AblationFlags f;
    if (v == "B0") { f = {true, false, false, false, false}; }
    else if (v == "B1") { f = {true, false, true, false, false}; }
    else if (v == "B2") { f = {false, true, true, false, false}; }
    else if (v == "B3") { f = {true, true, true, false, false}; }
    else if (v == "C0") { f = {true, true, false, false, false}; }
    else if (v == "C1") { f = {true, true, true, false, false}; }
    else if (v == "C2") { f = {true, true, true, true, false}; }
    else if (v == "C3" || v == "full") { f = {true, true, true, true, true}; }
    else if (v == "C4") { f = {true, false, true, true, true}; }
    else if (v == "bas_twice") { f = {true, true, true, true, true, true}; }
    else if (v == "with_bb") { f = {true, true, true, true, true, false, true}; }
    else throw std::invalid_argument("unknown ablation variant: " + v);
    return f;
}

FewShotModel::FewShotModel(BackboneConfig cfg, int num_base_classes, std::uint64_t seed)
    : backbone_(cfg, seed),
      head_raw_(make_head(num_base_classes, cfg.output_channels(), seed ^ 0xA1ULL)),
      head_refined_(make_head(num_base_classes, cfg.output_channels(), seed ^ 0xB2ULL)) {}

std::map<std::string, ad::Var> FewShotModel::named_parameters() {
    std::map<std::string, ad::Var> all = backbone_.parameters();
    all["head1.w"] = head_raw_.weights;
    all["head2.w"] = head_refined_.weights;
    return all;
}

void FewShotModel::save(const std::string& path) {
    save_checkpoint(path, backbone_.config(), named_parameters());
}

FewShotModel FewShotModel::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    auto it = ck.tensors.find("head1.w");
    if (it == ck.tensors.end()) throw std::runtime_error("checkpoint lacks classifier heads");
    const int c = ck.config.output_channels();
    const int G = static_cast<int>(it->second.size()) / c;
    FewShotModel model(ck.config, G);
    for (auto& [name, var] : model.named_parameters()) {
        auto t = ck.tensors.find(name);
        if (t == ck.tensors.end()) throw std::runtime_error("checkpoint missing tensor " + name);
        if (t->second.size() != var->value.size())
            throw std::runtime_error("checkpoint tensor size mismatch for " + name);
        var->value = t->second;
    }
    return model;
}

ad::Var stage_score(const ad::Var& f_query, const ad::Var& prototype, double tau,
                    bool use_l2l, bool use_foa) {
    if (f_query->shape != prototype->shape)
        throw std::invalid_argument("stage_score: feature shapes differ");
    if (use_l2l && use_foa) return alignment::score(f_query, prototype, tau);
    if (use_l2l) {
        const double hw = static_cast<double>(f_query->shape[1] * f_query->shape[2]);
        ad::Var s = alignment::l2l(alignment::to_descriptors(prototype),
                                   alignment::to_descriptors(f_query));
        return ad::scale(s, tau / hw);
    }
    // pooled-feature cosine (B0/C0 path)
    const std::size_t c = f_query->shape[0];
    ad::Var q = ad::reshape(ad::gap(f_query), {1, c});
    ad::Var p = ad::reshape(ad::gap(prototype), {1, c});
    ad::Var cosv = ad::sum_all(ad::mul(ad::row_l2_normalize(q, alignment::kCosineEps),
                                       ad::row_l2_normalize(p, alignment::kCosineEps)));
    return ad::scale(cosv, tau);
}

}  // namespace fsfg
