#include "fsfg/alignment.hpp"

namespace fsfg::alignment {

using ad::Var;

Var to_descriptors(const Var& f) { return ad::chw_to_rows(f); }

Var correlation(const Var& support_desc, const Var& query_desc) {
    Var qn = ad::row_l2_normalize(query_desc, kCosineEps);
    Var sn = ad::row_l2_normalize(support_desc, kCosineEps);
    return ad::matmul(qn, ad::transpose(sn));
}

Var row_softmax(const Var& raw) { return ad::row_softmax(raw); }

Var align(const Var& f_support, const Var& f_query) {
    if (f_support->shape != f_query->shape)
        throw std::invalid_argument("align: feature shapes differ");
    Var sd = to_descriptors(f_support);
    Var qd = to_descriptors(f_query);
    Var a_hat = ad::row_softmax(correlation(sd, qd));
    return ad::matmul(a_hat, sd);
}

Var l2l(const Var& aligned, const Var& query_desc) {
    if (aligned->shape != query_desc->shape)
        throw std::invalid_argument("l2l: descriptor shapes differ");
    Var an = ad::row_l2_normalize(aligned, kCosineEps);
    Var qn = ad::row_l2_normalize(query_desc, kCosineEps);
    return ad::sum_all(ad::mul(an, qn));
}

Var score(const Var& f_query, const Var& prototype, double tau) {
    if (f_query->shape != prototype->shape)
        throw std::invalid_argument("score: feature shapes differ");
    const double hw = static_cast<double>(f_query->shape[1] * f_query->shape[2]);
    Var s = l2l(align(prototype, f_query), to_descriptors(f_query));
    return ad::scale(s, tau / hw);
}

namespace {
Var as_var(const FeatureArray& f) {
    return ad::constant({static_cast<std::size_t>(f.c), static_cast<std::size_t>(f.h),
                         static_cast<std::size_t>(f.w)},
                        f.values);
}
}  // namespace

Eigen::ArrayXd to_descriptors_values(const FeatureArray& f) {
    return to_descriptors(as_var(f))->value;
}

Eigen::ArrayXd correlation_values(const FeatureArray& fs, const FeatureArray& fq) {
    return correlation(to_descriptors(as_var(fs)), to_descriptors(as_var(fq)))->value;
}

double l2l_values(const FeatureArray& fs, const FeatureArray& fq) {
    return l2l(to_descriptors(as_var(fs)), to_descriptors(as_var(fq)))->value(0);
}

double score_values(const FeatureArray& fq, const FeatureArray& proto, double tau) {
    return score(as_var(fq), as_var(proto), tau)->value(0);
}

}  // namespace fsfg::alignment
