#include "fsfg/objective.hpp"

namespace fsfg::objective {

using ad::Var;

Var global_ce(const Var& logits, std::size_t label) {
    return ad::cross_entropy_logits(logits, label);
}

Var global_ce_batch(const std::vector<Var>& logits, const std::vector<int>& labels) {
    if (logits.empty() || logits.size() != labels.size())
        throw std::invalid_argument("global_ce_batch: empty or mismatched batch");
    std::vector<Var> terms;
    terms.reserve(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (labels[i] < 0) throw std::invalid_argument("global_ce_batch: negative label");
        terms.push_back(global_ce(logits[i], static_cast<std::size_t>(labels[i])));
    }
    return ad::average(terms);
}

Var local_fewshot_loss(const std::vector<Var>& queries, const std::vector<Var>& prototypes,
                       const std::vector<int>& episode_labels, const LossWeights& w) {
    if (queries.empty() || queries.size() != episode_labels.size())
        throw std::invalid_argument("local_fewshot_loss: empty or mismatched query set");
    const double sign = w.softmax_sign == SoftmaxSign::positive_similarity ? 1.0 : -1.0;
    std::vector<Var> terms;
    terms.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const int y = episode_labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= prototypes.size())
            throw std::invalid_argument("local_fewshot_loss: episode label out of range");
        std::vector<Var> logits;
        logits.reserve(prototypes.size());
        for (const auto& proto : prototypes)
            logits.push_back(ad::scale(alignment::score(queries[i], proto, w.tau), sign));
        terms.push_back(
            ad::cross_entropy_logits(ad::concat_scalars(logits), static_cast<std::size_t>(y)));
    }
    return ad::average(terms);
}

Var combine(const Var& global_raw, const Var& global_refined, const Var& local_raw,
            const Var& local_refined, const LossWeights& w, LossBreakdown* out) {
    Var global_total = ad::add(ad::scale(global_raw, w.alpha), ad::scale(global_refined, w.beta));
    Var local_total = ad::add(ad::scale(local_raw, w.alpha), ad::scale(local_refined, w.beta));
    Var total = ad::add(global_total, ad::scale(local_total, w.lambda));
    if (out)
        *out = combine_values(global_raw->value(0), global_refined->value(0), local_raw->value(0),
                              local_refined->value(0), w);
    return total;
}

LossBreakdown combine_values(double global_raw, double global_refined, double local_raw,
                             double local_refined, const LossWeights& w) {
    LossBreakdown b;
    b.global_raw = global_raw;
    b.global_refined = global_refined;
    b.local_raw = local_raw;
    b.local_refined = local_refined;
    b.global_total = w.alpha * global_raw + w.beta * global_refined;
    b.local_total = w.alpha * local_raw + w.beta * local_refined;
    b.total = b.global_total + w.lambda * b.local_total;
    return b;
}

}  // namespace fsfg::objective
