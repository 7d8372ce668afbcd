#include "fsfg/episodic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace fsfg {

Episode sample_episode(const Pool& pool, int n_way, int k_shot, int queries_per_class,
                       std::mt19937_64& rng) {
    const int need = k_shot + queries_per_class;
    if (static_cast<int>(pool.classes.size()) < n_way)
        throw std::runtime_error("episode sampling: pool has " +
                                 std::to_string(pool.classes.size()) + " classes, need " +
                                 std::to_string(n_way));
    std::vector<int> class_idx(pool.classes.size());
    std::iota(class_idx.begin(), class_idx.end(), 0);
    std::shuffle(class_idx.begin(), class_idx.end(), rng);

    Episode ep;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.queries_per_class = queries_per_class;
    for (int l = 0; l < n_way; ++l) {
        const ClassPool& cls = pool.classes[class_idx[l]];
        if (static_cast<int>(cls.images.size()) < need)
            throw std::runtime_error("episode sampling: class '" + cls.name + "' has " +
                                     std::to_string(cls.images.size()) + " images, need " +
                                     std::to_string(need));
        std::vector<int> img_idx(cls.images.size());
        std::iota(img_idx.begin(), img_idx.end(), 0);
        std::shuffle(img_idx.begin(), img_idx.end(), rng);
        for (int k = 0; k < k_shot; ++k) {
            ep.support.push_back(cls.images[img_idx[k]]);
            ep.support_episode_labels.push_back(l);
            ep.support_global_labels.push_back(cls.global_label);
        }
        for (int q = 0; q < queries_per_class; ++q) {
            ep.query.push_back(cls.images[img_idx[k_shot + q]]);
            ep.query_episode_labels.push_back(l);
            ep.query_global_labels.push_back(cls.global_label);
        }
    }
    return ep;
}

Episode sample_episode(const Pool& pool, int n_way, int k_shot, int queries_per_class,
                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_episode(pool, n_way, k_shot, queries_per_class, rng);
}

std::vector<ad::Var> build_prototypes(
    const std::vector<std::vector<ad::Var>>& per_class_features) {
    std::vector<ad::Var> protos;
    protos.reserve(per_class_features.size());
    for (const auto& feats : per_class_features) {
        if (feats.empty()) throw std::invalid_argument("build_prototypes: K must be >= 1");
        protos.push_back(ad::average(feats));
    }
    return protos;
}

Prediction predict(const ad::Var& query_raw, const ad::Var* query_refined,
                   const std::vector<ad::Var>& protos_raw,
                   const std::vector<ad::Var>& protos_refined, const LossWeights& w,
                   const AblationFlags& flags) {
    const std::size_t n = flags.use_raw ? protos_raw.size() : protos_refined.size();
    Prediction pred;
    pred.fused_scores.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        if (flags.use_raw)
            s += w.alpha *
                 stage_score(query_raw, protos_raw[j], w.tau, flags.use_l2l, flags.use_foa)->value(0);
        if (flags.use_refined) {
            if (!query_refined || protos_refined.size() != n)
                throw std::invalid_argument("predict: refined stage enabled but absent");
            s += w.beta * stage_score(*query_refined, protos_refined[j], w.tau, flags.use_l2l,
                                      flags.use_foa)
                              ->value(0);
        }
        pred.fused_scores[j] = s;
    }
    pred.label = static_cast<int>(std::max_element(pred.fused_scores.begin(),
                                                   pred.fused_scores.end()) -
                                  pred.fused_scores.begin());
    return pred;
}

EvalReport aggregate_report(const std::vector<double>& accuracies, int n_way, int k_shot,
                            std::uint64_t seed) {
    EvalReport r;
    r.episode_accuracies = accuracies;
    r.n_episodes = static_cast<int>(accuracies.size());
    r.n_way = n_way;
    r.k_shot = k_shot;
    r.seed = seed;
    if (r.n_episodes == 0) return r;
    const double mean =
        std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / r.n_episodes;
    r.mean_accuracy = mean;
    if (r.n_episodes > 1) {
        double ss = 0.0;
        for (double a : accuracies) ss += (a - mean) * (a - mean);
        const double stddev = std::sqrt(ss / (r.n_episodes - 1));
        r.ci95_halfwidth = 1.96 * stddev / std::sqrt(static_cast<double>(r.n_episodes));
    }
    return r;
}

namespace {

struct StageFeatures {
    ad::Var raw;
    ad::Var refined;  // null when the refined stage is off
};

StageFeatures featurize(const FewShotModel& model, const Image& img84,
                        const AblationFlags& flags) {
    StageFeatures out;
    out.raw = model.backbone().extract(img84);
    if (flags.use_refined) {
        auto [xr, fg] = bas::refine(img84, to_feature_array(out.raw));
        if (flags.bas_twice) {
            FeatureArray fr = model.backbone().extract_values(xr);
            xr = bas::refine(xr, fr).first;
        }
        out.refined = model.backbone().extract(xr);
    }
    return out;
}

}  // namespace

std::vector<int> predict_episode(const FewShotModel& model, const Episode& episode,
                                 const EvalConfig& cfg) {
    PreprocessConfig pp = cfg.preprocess;
    pp.use_gt_box = pp.use_gt_box || cfg.flags.use_gt_box;
    std::mt19937_64 dummy(0);  // eval preprocessing draws nothing

    std::vector<std::vector<ad::Var>> sup_raw(episode.n_way), sup_ref(episode.n_way);
    for (std::size_t i = 0; i < episode.support.size(); ++i) {
        Image x = preprocess(episode.support[i], pp, dummy, false);
        StageFeatures f = featurize(model, x, cfg.flags);
        const int l = episode.support_episode_labels[i];
        sup_raw[l].push_back(f.raw);
        if (f.refined) sup_ref[l].push_back(f.refined);
    }
    std::vector<ad::Var> protos_raw = build_prototypes(sup_raw);
    std::vector<ad::Var> protos_ref;
    if (cfg.flags.use_refined) protos_ref = build_prototypes(sup_ref);

    std::vector<int> preds;
    preds.reserve(episode.query.size());
    for (const auto& q : episode.query) {
        Image x = preprocess(q, pp, dummy, false);
        StageFeatures f = featurize(model, x, cfg.flags);
        preds.push_back(predict(f.raw, f.refined ? &f.refined : nullptr, protos_raw, protos_ref,
                                cfg.weights, cfg.flags)
                            .label);
    }
    return preds;
}

EvalReport evaluate_with_predictor(
    const std::function<std::vector<int>(const Episode&)>& predictor, const Pool& split,
    const EvalConfig& cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> accs;
    accs.reserve(cfg.n_episodes);
    for (int e = 0; e < cfg.n_episodes; ++e) {
        Episode ep = sample_episode(split, cfg.n_way, cfg.k_shot, cfg.queries_per_class, rng);
        std::vector<int> preds = predictor(ep);
        int correct = 0;
        for (std::size_t i = 0; i < preds.size(); ++i)
            if (preds[i] == ep.query_episode_labels[i]) ++correct;
        accs.push_back(static_cast<double>(correct) / preds.size());
    }
    return aggregate_report(accs, cfg.n_way, cfg.k_shot, cfg.seed);
}

EvalReport evaluate(const FewShotModel& model, const Pool& split, const EvalConfig& cfg) {
    return evaluate_with_predictor(
        [&](const Episode& ep) { return predict_episode(model, ep, cfg); }, split, cfg);
}

void write_eval_report(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write eval report: " + path);
    out << "n_episodes=" << r.n_episodes << '\n'
        << "n_way=" << r.n_way << '\n'
        << "k_shot=" << r.k_shot << '\n'
        << "mean_accuracy=" << r.mean_accuracy << '\n'
        << "ci95_halfwidth=" << r.ci95_halfwidth << '\n'
        << "seed=" << r.seed << '\n'
        << "config_digest=" << r.config_digest << '\n';
}

}  // namespace fsfg
