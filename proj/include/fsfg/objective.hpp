#pragma once

#include <vector>

#include "fsfg/alignment.hpp"
#include "fsfg/autodiff.hpp"

namespace fsfg {

enum class SoftmaxSign {
    positive_similarity,  // default: higher score => more probable
    negative_similarity,  // literal typeset form with exp(-L2L)
};

struct LossWeights {
    double alpha = 0.5;  // raw-stage weight
    double beta = 0.5;   // refined-stage weight
    double lambda = 0.1; // local-loss weight (0.4 recommended for shallow backbones)
    double tau = 10.0;   // temperature applied inside score()
    SoftmaxSign softmax_sign = SoftmaxSign::positive_similarity;
};

struct LossBreakdown {
    double global_raw = 0.0;
    double global_refined = 0.0;
    double local_raw = 0.0;
    double local_refined = 0.0;
    double global_total = 0.0;
    double local_total = 0.0;
    double total = 0.0;
};

namespace objective {

/// -log softmax(logits)[label]; label must lie in [0, G).
ad::Var global_ce(const ad::Var& logits, std::size_t label);

/// Mean of global_ce over a batch of logit vectors.
ad::Var global_ce_batch(const std::vector<ad::Var>& logits, const std::vector<int>& labels);

/// Episode-local few-shot loss: per query, softmax over sign * score against
/// the N prototypes, cross-entropy at the true episode label, averaged over
/// queries.
ad::Var local_fewshot_loss(const std::vector<ad::Var>& queries,
                           const std::vector<ad::Var>& prototypes,
                           const std::vector<int>& episode_labels, const LossWeights& w);

/// Weighted sums: global = alpha*raw + beta*refined, local analogous,
/// total = global + lambda*local. Returns the graph node for total plus the
/// numeric breakdown.
ad::Var combine(const ad::Var& global_raw, const ad::Var& global_refined,
                const ad::Var& local_raw, const ad::Var& local_refined,
                const LossWeights& w, LossBreakdown* out = nullptr);

/// Numeric-only combine for logging and tests.
LossBreakdown combine_values(double global_raw, double global_refined, double local_raw,
                             double local_refined, const LossWeights& w);

}  // namespace objective
}  // namespace fsfg
