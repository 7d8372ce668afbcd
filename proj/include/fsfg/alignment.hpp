#pragma once

#include "fsfg/autodiff.hpp"
#include "fsfg/bas.hpp"

namespace fsfg::alignment {

inline constexpr double kCosineEps = 1e-8;

/// Reshape (c,h,w) -> (h*w, c); row r = i*w + j is the deep local descriptor
/// at cell (i,j).
ad::Var to_descriptors(const ad::Var& f);

/// Pairwise cosine matrix: entry (i,j) = cos(query row i, support row j).
/// Zero-norm rows are epsilon-guarded and contribute 0.
ad::Var correlation(const ad::Var& support_desc, const ad::Var& query_desc);

/// Row-wise stabilized softmax; rows sum to 1.
ad::Var row_softmax(const ad::Var& raw);

/// F_{s|q} = row_softmax(correlation) * support descriptors: each output row
/// is a convex combination of support descriptors weighted by affinity to
/// the corresponding query descriptor. Inputs are (c,h,w) feature maps.
ad::Var align(const ad::Var& f_support, const ad::Var& f_query);

/// L2L metric: sum over spatial positions of row-wise cosine similarity.
/// Inputs are descriptor matrices of identical shape; returns a scalar var.
ad::Var l2l(const ad::Var& aligned, const ad::Var& query_desc);

/// Normalized, temperature-scaled episode logit:
/// score = l2l(align(prototype, query), query) / (h*w) * tau.
ad::Var score(const ad::Var& f_query, const ad::Var& prototype, double tau);

// Plain-array convenience wrappers (no gradients), used by the CLI,
// bindings and tests.
Eigen::ArrayXd to_descriptors_values(const FeatureArray& f);
Eigen::ArrayXd correlation_values(const FeatureArray& fs, const FeatureArray& fq);
double l2l_values(const FeatureArray& fs, const FeatureArray& fq);
double score_values(const FeatureArray& fq, const FeatureArray& proto, double tau);

}  // namespace fsfg::alignment
