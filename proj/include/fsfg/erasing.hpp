#pragma once

#include "fsfg/autodiff.hpp"
#include "fsfg/bas.hpp"

namespace fsfg {

struct EraseConfig {
    double gamma = 0.85;  // fraction of the activation maximum kept un-erased
    bool enabled_in_training = true;
};

namespace erasing {

/// Erase mask: channel-sum the features, then mark cells whose activation
/// strictly exceeds gamma * max. gamma must lie in (0,1].
BinaryMask erase_mask(const FeatureArray& f, double gamma);

/// out[k,i,j] = F[k,i,j] * (1 - M[i,j]); the mask is a constant w.r.t.
/// gradients.
FeatureArray apply_erase(const FeatureArray& f, const BinaryMask& m);

/// Autodiff variant used in the training graph; f has shape (c,h,w).
ad::Var apply_erase(const ad::Var& f, const BinaryMask& m);

}  // namespace erasing
}  // namespace fsfg
