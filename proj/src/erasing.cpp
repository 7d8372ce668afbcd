#include "fsfg/erasing.hpp"

namespace fsfg::erasing {

BinaryMask erase_mask(const FeatureArray& f, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw std::invalid_argument("erase_mask: gamma must be in (0,1]");
    ActivationMap att = bas::aggregate_channels(f);
    const double theta = gamma * att.values.maxCoeff();
    BinaryMask m;
    m.h = att.h;
    m.w = att.w;
    m.values = (att.values > theta).cast<double>();
    return m;
}

FeatureArray apply_erase(const FeatureArray& f, const BinaryMask& m) {
    if (m.h != f.h || m.w != f.w)
        throw std::invalid_argument("apply_erase: mask/feature spatial size mismatch");
    FeatureArray out = f;
    const Eigen::Index hw = static_cast<Eigen::Index>(f.h) * f.w;
    for (int k = 0; k < f.c; ++k)
        out.values.segment(k * hw, hw) *= (1.0 - m.values);
    return out;
}

ad::Var apply_erase(const ad::Var& f, const BinaryMask& m) {
    if (f->shape.size() != 3 ||
        f->shape[1] != static_cast<std::size_t>(m.h) ||
        f->shape[2] != static_cast<std::size_t>(m.w))
        throw std::invalid_argument("apply_erase: mask/feature spatial size mismatch");
    return ad::spatial_mask(f, 1.0 - m.values);
}

}  // namespace fsfg::erasing
