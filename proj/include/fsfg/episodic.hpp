#pragma once

#include <functional>

#include "fsfg/data.hpp"
#include "fsfg/model.hpp"

namespace fsfg {

struct Episode {
    int n_way = 0;
    int k_shot = 0;
    int queries_per_class = 0;
    // support: class-major, K consecutive images per episode class
    std::vector<Image> support;
    std::vector<int> support_episode_labels;
    std::vector<int> support_global_labels;
    std::vector<Image> query;
    std::vector<int> query_episode_labels;
    std::vector<int> query_global_labels;
};

/// Uniform N-way K-shot sampling without replacement, deterministic under
/// the caller's rng state. Throws a descriptive error naming the deficient
/// class when the pool is too small.
Episode sample_episode(const Pool& pool, int n_way, int k_shot, int queries_per_class,
                       std::mt19937_64& rng);
Episode sample_episode(const Pool& pool, int n_way, int k_shot, int queries_per_class,
                       std::uint64_t seed);

/// Per-class arithmetic mean of support feature maps.
std::vector<ad::Var> build_prototypes(const std::vector<std::vector<ad::Var>>& per_class_features);

struct Prediction {
    int label = 0;
    std::vector<double> fused_scores;
};

/// fused_j = alpha * score(F, C_j) + beta * score(F_hat, C_hat_j); stages
/// that are switched off contribute nothing. Ties break toward smallest j.
Prediction predict(const ad::Var& query_raw, const ad::Var* query_refined,
                   const std::vector<ad::Var>& protos_raw,
                   const std::vector<ad::Var>& protos_refined, const LossWeights& w,
                   const AblationFlags& flags);

struct EvalReport {
    std::vector<double> episode_accuracies;
    double mean_accuracy = 0.0;
    double ci95_halfwidth = 0.0;
    int n_episodes = 0;
    int n_way = 0;
    int k_shot = 0;
    std::uint64_t seed = 0;
    std::string config_digest;
};

/// mean plus 1.96 * sample stddev / sqrt(n).
EvalReport aggregate_report(const std::vector<double>& accuracies, int n_way, int k_shot,
                            std::uint64_t seed);

struct EvalConfig {
    int n_episodes = 2000;
    int n_way = 5;
    int k_shot = 1;
    int queries_per_class = 15;
    std::uint64_t seed = 0;
    LossWeights weights;
    AblationFlags flags;
    PreprocessConfig preprocess;
};

/// Full-model episodic evaluation on a split pool.
EvalReport evaluate(const FewShotModel& model, const Pool& split, const EvalConfig& cfg);

/// Episodic evaluation with an arbitrary per-episode predictor (used for
/// protocol tests with stub models). The predictor returns one predicted
/// episode label per query.
EvalReport evaluate_with_predictor(
    const std::function<std::vector<int>(const Episode&)>& predictor, const Pool& split,
    const EvalConfig& cfg);

/// Per-query prediction for one already-featurized episode; shared by
/// evaluate() and the trainer's accuracy probe.
std::vector<int> predict_episode(const FewShotModel& model, const Episode& episode,
                                 const EvalConfig& cfg);

void write_eval_report(const EvalReport& r, const std::string& path);

}  // namespace fsfg
