#include "fsfg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace fs = std::filesystem;

namespace fsfg {

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    if (epoch < 60) return cfg.lr_initial;
    const int decays = (epoch - 60) / 10;
    return cfg.lr_at_60 * std::pow(cfg.lr_decay_factor, decays);
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

namespace {

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("not a boolean: " + v);
}

}  // namespace

void apply_config(TrainConfig& c, const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) {
        if (k == "train.epochs") c.epochs = std::stoi(v);
        else if (k == "train.episodes_per_epoch") c.episodes_per_epoch = std::stoi(v);
        else if (k == "train.lr_initial") c.lr_initial = std::stod(v);
        else if (k == "train.lr_at_60") c.lr_at_60 = std::stod(v);
        else if (k == "train.lr_decay_factor") c.lr_decay_factor = std::stod(v);
        else if (k == "train.momentum") c.momentum = std::stod(v);
        else if (k == "train.weight_decay") c.weight_decay = std::stod(v);
        else if (k == "train.val_episodes") c.val_episodes = std::stoi(v);
        else if (k == "train.save_every_epoch") c.save_every_epoch = parse_bool(v);
        else if (k == "train.seed") c.seed = std::stoull(v);
        else if (k == "episode.n_way") c.n_way = std::stoi(v);
        else if (k == "episode.k_shot") c.k_shot = std::stoi(v);
        else if (k == "episode.queries_per_class") c.queries_per_class = std::stoi(v);
        else if (k == "backbone.architecture") c.backbone.architecture = architecture_from_string(v);
        else if (k == "backbone.input_size") c.backbone.input_size = std::stoi(v);
        else if (k == "backbone.drop_last_pool") c.backbone.drop_last_pool = parse_bool(v);
        else if (k == "loss.alpha") c.weights.alpha = std::stod(v);
        else if (k == "loss.beta") c.weights.beta = std::stod(v);
        else if (k == "loss.lambda") c.weights.lambda = std::stod(v);
        else if (k == "loss.tau") c.weights.tau = std::stod(v);
        else if (k == "loss.softmax_sign")
            c.weights.softmax_sign = v == "negative_similarity" ? SoftmaxSign::negative_similarity
                                                                : SoftmaxSign::positive_similarity;
        else if (k == "erase.gamma") c.erase.gamma = std::stod(v);
        else if (k == "erase.enabled") c.erase.enabled_in_training = parse_bool(v);
        else if (k == "data.target_size") c.preprocess.target_size = std::stoi(v);
        else if (k == "data.random_crop") c.preprocess.random_crop = parse_bool(v);
        else if (k == "data.horizontal_flip") c.preprocess.horizontal_flip = parse_bool(v);
        else if (k == "data.use_gt_box") c.preprocess.use_gt_box = parse_bool(v);
        else if (k == "data.crop_scale_min") c.preprocess.crop_scale_min = std::stod(v);
        else if (k == "variant") c.flags = variant_flags(v);
        else throw std::invalid_argument("unknown config key: " + k);
    }
}

std::string config_to_string(const TrainConfig& c) {
    std::ostringstream s;
    s << "train.epochs=" << c.epochs << '\n'
      << "train.episodes_per_epoch=" << c.episodes_per_epoch << '\n'
      << "train.lr_initial=" << c.lr_initial << '\n'
      << "train.lr_at_60=" << c.lr_at_60 << '\n'
      << "train.lr_decay_factor=" << c.lr_decay_factor << '\n'
      << "train.momentum=" << c.momentum << '\n'
      << "train.weight_decay=" << c.weight_decay << '\n'
      << "train.val_episodes=" << c.val_episodes << '\n'
      << "train.save_every_epoch=" << (c.save_every_epoch ? "true" : "false") << '\n'
      << "train.seed=" << c.seed << '\n'
      << "episode.n_way=" << c.n_way << '\n'
      << "episode.k_shot=" << c.k_shot << '\n'
      << "episode.queries_per_class=" << c.queries_per_class << '\n'
      << "backbone.architecture=" << architecture_to_string(c.backbone.architecture) << '\n'
      << "backbone.input_size=" << c.backbone.input_size << '\n'
      << "backbone.drop_last_pool=" << (c.backbone.drop_last_pool ? "true" : "false") << '\n'
      << "loss.alpha=" << c.weights.alpha << '\n'
      << "loss.beta=" << c.weights.beta << '\n'
      << "loss.lambda=" << c.weights.lambda << '\n'
      << "loss.tau=" << c.weights.tau << '\n'
      << "loss.softmax_sign="
      << (c.weights.softmax_sign == SoftmaxSign::negative_similarity ? "negative_similarity"
                                                                     : "positive_similarity")
      << '\n'
      << "erase.gamma=" << c.erase.gamma << '\n'
      << "erase.enabled=" << (c.erase.enabled_in_training ? "true" : "false") << '\n'
      << "data.target_size=" << c.preprocess.target_size << '\n'
      << "data.random_crop=" << (c.preprocess.random_crop ? "true" : "false") << '\n'
      << "data.horizontal_flip=" << (c.preprocess.horizontal_flip ? "true" : "false") << '\n'
      << "data.use_gt_box=" << (c.preprocess.use_gt_box ? "true" : "false") << '\n'
      << "data.crop_scale_min=" << c.preprocess.crop_scale_min << '\n'
      << "flags.use_raw=" << (c.flags.use_raw ? "true" : "false") << '\n'
      << "flags.use_refined=" << (c.flags.use_refined ? "true" : "false") << '\n'
      << "flags.use_l2l=" << (c.flags.use_l2l ? "true" : "false") << '\n'
      << "flags.use_foa=" << (c.flags.use_foa ? "true" : "false") << '\n'
      << "flags.use_ae=" << (c.flags.use_ae ? "true" : "false") << '\n'
      << "flags.bas_twice=" << (c.flags.bas_twice ? "true" : "false") << '\n'
      << "flags.use_gt_box=" << (c.flags.use_gt_box ? "true" : "false") << '\n';
    return s.str();
}

std::string config_digest(const TrainConfig& cfg) {
    // FNV-1a over the resolved snapshot
    const std::string s = config_to_string(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

namespace {

class SgdOptimizer {
public:
    SgdOptimizer(std::map<std::string, ad::Var> params, double momentum, double weight_decay)
        : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
        for (auto& [name, v] : params_)
            velocity_[name] = Eigen::ArrayXd::Zero(v->value.size());
    }

    void step(double lr) {
        for (auto& [name, v] : params_) {
            if (v->grad.size() != v->value.size()) continue;  // unused this step
            Eigen::ArrayXd g = v->grad + weight_decay_ * v->value;
            auto& vel = velocity_[name];
            vel = momentum_ * vel + g;
            v->value -= lr * vel;
        }
    }

private:
    std::map<std::string, ad::Var> params_;
    double momentum_, weight_decay_;
    std::map<std::string, Eigen::ArrayXd> velocity_;
};

struct EpisodeLoss {
    LossBreakdown breakdown;
    ad::Var total;
    double accuracy = 0.0;
};

ad::Var zero_scalar() { return ad::constant({1}, Eigen::ArrayXd::Zero(1)); }

/// Forward one training episode and assemble the total loss graph.
EpisodeLoss episode_loss(FewShotModel& model, const Episode& ep, const TrainConfig& cfg,
                         std::mt19937_64& aug_rng) {
    const AblationFlags& fl = cfg.flags;
    PreprocessConfig pp = cfg.preprocess;
    pp.use_gt_box = pp.use_gt_box || fl.use_gt_box;

    struct Member {
        ad::Var raw, refined;
        int y_global, y_episode;
        bool is_query;
    };
    std::vector<Member> members;
    auto add_member = [&](const Image& img, int yg, int yl, bool is_query) {
        Image x = preprocess(img, pp, aug_rng, true);
        Member m;
        m.raw = model.backbone().extract(x);
        if (fl.use_refined) {
            auto [xr, fg] = bas::refine(x, to_feature_array(m.raw));
            if (fl.bas_twice) {
                FeatureArray fr = model.backbone().extract_values(xr);
                xr = bas::refine(xr, fr).first;
            }
            m.refined = model.backbone().extract(xr);
        }
        m.y_global = yg;
        m.y_episode = yl;
        m.is_query = is_query;
        members.push_back(std::move(m));
    };
    for (std::size_t i = 0; i < ep.support.size(); ++i)
        add_member(ep.support[i], ep.support_global_labels[i], ep.support_episode_labels[i], false);
    for (std::size_t i = 0; i < ep.query.size(); ++i)
        add_member(ep.query[i], ep.query_global_labels[i], ep.query_episode_labels[i], true);

    // global classification losses over all task members
    const bool erase_on = fl.use_ae && cfg.erase.enabled_in_training;
    std::vector<ad::Var> logits_raw, logits_ref;
    std::vector<int> y_globals;
    for (const auto& m : members) {
        ad::Var f = m.raw;
        if (erase_on) {
            BinaryMask mask = erasing::erase_mask(to_feature_array(m.raw), cfg.erase.gamma);
            f = erasing::apply_erase(m.raw, mask);
        }
        logits_raw.push_back(classify_global(f, model.head_raw()));
        if (fl.use_refined) logits_ref.push_back(classify_global(m.refined, model.head_refined()));
        y_globals.push_back(m.y_global);
    }
    ad::Var global_raw = objective::global_ce_batch(logits_raw, y_globals);
    ad::Var global_ref =
        fl.use_refined ? objective::global_ce_batch(logits_ref, y_globals) : zero_scalar();

    // prototypes from un-erased support features
    std::vector<std::vector<ad::Var>> sup_raw(ep.n_way), sup_ref(ep.n_way);
    for (const auto& m : members)
        if (!m.is_query) {
            sup_raw[m.y_episode].push_back(m.raw);
            if (fl.use_refined) sup_ref[m.y_episode].push_back(m.refined);
        }
    std::vector<ad::Var> protos_raw = build_prototypes(sup_raw);
    std::vector<ad::Var> protos_ref;
    if (fl.use_refined) protos_ref = build_prototypes(sup_ref);

    // episode-local metric losses; the fused scores also give the episode
    // training accuracy
    const double sign =
        cfg.weights.softmax_sign == SoftmaxSign::positive_similarity ? 1.0 : -1.0;
    auto stage_local = [&](const std::vector<ad::Var>& protos,
                           bool refined) -> std::pair<ad::Var, std::vector<std::vector<double>>> {
        std::vector<ad::Var> terms;
        std::vector<std::vector<double>> raw_scores;
        for (const auto& m : members) {
            if (!m.is_query) continue;
            std::vector<ad::Var> logits;
            std::vector<double> svals;
            for (const auto& p : protos) {
                ad::Var s = stage_score(refined ? m.refined : m.raw, p, cfg.weights.tau,
                                        fl.use_l2l, fl.use_foa);
                svals.push_back(s->value(0));
                logits.push_back(ad::scale(s, sign));
            }
            terms.push_back(ad::cross_entropy_logits(ad::concat_scalars(logits),
                                                     static_cast<std::size_t>(m.y_episode)));
            raw_scores.push_back(std::move(svals));
        }
        return {ad::average(terms), std::move(raw_scores)};
    };

    std::vector<std::vector<double>> fused;
    ad::Var local_raw = zero_scalar(), local_ref = zero_scalar();
    if (fl.use_raw) {
        auto [loss, scores] = stage_local(protos_raw, false);
        local_raw = loss;
        fused.resize(scores.size(), std::vector<double>(ep.n_way, 0.0));
        for (std::size_t i = 0; i < scores.size(); ++i)
            for (int j = 0; j < ep.n_way; ++j) fused[i][j] += cfg.weights.alpha * scores[i][j];
    }
    if (fl.use_refined) {
        auto [loss, scores] = stage_local(protos_ref, true);
        local_ref = loss;
        if (fused.empty()) fused.resize(scores.size(), std::vector<double>(ep.n_way, 0.0));
        for (std::size_t i = 0; i < scores.size(); ++i)
            for (int j = 0; j < ep.n_way; ++j) fused[i][j] += cfg.weights.beta * scores[i][j];
    }

    EpisodeLoss out;
    out.total = objective::combine(global_raw, global_ref, local_raw, local_ref, cfg.weights,
                                   &out.breakdown);
    int correct = 0, qi = 0;
    for (const auto& m : members)
        if (m.is_query) {
            const auto& s = fused[qi++];
            const int pred =
                static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
            if (pred == m.y_episode) ++correct;
        }
    out.accuracy = qi ? static_cast<double>(correct) / qi : 0.0;
    return out;
}

}  // namespace

RunArtifacts train(const TrainConfig& cfg, const Dataset& dataset, const std::string& out_dir) {
    fs::create_directories(out_dir);
    RunArtifacts art;
    art.run_dir = out_dir;
    art.config_snapshot = (fs::path(out_dir) / "config.txt").string();
    {
        std::ofstream snap(art.config_snapshot);
        snap << config_to_string(cfg);
    }
    art.metrics_log = (fs::path(out_dir) / "metrics.log").string();
    std::ofstream metrics(art.metrics_log);
    metrics.precision(17);  // keep the loss identities exact under re-parsing

    FewShotModel model(cfg.backbone, dataset.num_base_classes(), cfg.seed);
    SgdOptimizer opt(model.named_parameters(), cfg.momentum, cfg.weight_decay);

    EvalConfig val_cfg;
    val_cfg.n_episodes = cfg.val_episodes;
    val_cfg.n_way = cfg.n_way;
    val_cfg.k_shot = cfg.k_shot;
    val_cfg.queries_per_class = cfg.queries_per_class;
    val_cfg.seed = cfg.seed ^ 0x7A11DA7EULL;
    val_cfg.weights = cfg.weights;
    val_cfg.flags = cfg.flags;
    val_cfg.preprocess = cfg.preprocess;

    const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();
    const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
    double best_val = -1.0;
    const bool have_val = !dataset.val.classes.empty() && cfg.val_episodes > 0;

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        double epoch_acc = 0.0;
        for (int e = 0; e < cfg.episodes_per_epoch; ++e, ++step) {
            const std::uint64_t ep_seed =
                cfg.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(step) + 1;
            std::mt19937_64 ep_rng(ep_seed);
            Episode ep =
                sample_episode(dataset.base, cfg.n_way, cfg.k_shot, cfg.queries_per_class, ep_rng);
            EpisodeLoss el = episode_loss(model, ep, cfg, ep_rng);
            if (!std::isfinite(el.breakdown.total))
                throw std::runtime_error("non-finite loss at step " + std::to_string(step) +
                                         " (episode seed " + std::to_string(ep_seed) + ")");
            ad::backward(el.total);
            opt.step(lr);
            epoch_acc += el.accuracy;
            const auto& b = el.breakdown;
            metrics << "step=" << step << " epoch=" << epoch << " lr=" << lr
                    << " global_raw=" << b.global_raw << " global_refined=" << b.global_refined
                    << " local_raw=" << b.local_raw << " local_refined=" << b.local_refined
                    << " global_total=" << b.global_total << " local_total=" << b.local_total
                    << " total=" << b.total << " episode_acc=" << el.accuracy << '\n';
        }
        art.last_train_accuracy = epoch_acc / cfg.episodes_per_epoch;
        model.save(last_path);
        if (cfg.save_every_epoch) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
            model.save((fs::path(out_dir) / name).string());
        }
        if (have_val) {
            EvalReport vr = evaluate(model, dataset.val, val_cfg);
            metrics << "epoch=" << epoch << " val_accuracy=" << vr.mean_accuracy << '\n';
            if (vr.mean_accuracy > best_val) {
                best_val = vr.mean_accuracy;
                model.save(best_path);
            }
        }
        metrics.flush();
    }
    art.checkpoint = have_val ? best_path : last_path;
    return art;
}

std::map<std::string, EvalReport> run_ablation(const std::vector<std::string>& variants,
                                               const TrainConfig& base_cfg,
                                               const Dataset& dataset,
                                               const EvalConfig& eval_cfg,
                                               const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::map<std::string, EvalReport> table;
    std::ofstream tsv((fs::path(out_dir) / "ablation.tsv").string());
    tsv << "variant\tBAS\tL2L\tFOA\tAE\tn_way\tk_shot\tmean_accuracy\tci95_halfwidth\n";
    for (const auto& v : variants) {
        TrainConfig cfg = base_cfg;
        cfg.flags = variant_flags(v);
        RunArtifacts art = train(cfg, dataset, (fs::path(out_dir) / v).string());
        FewShotModel model = FewShotModel::load(art.checkpoint);
        EvalConfig ec = eval_cfg;
        ec.flags = cfg.flags;
        EvalReport r = evaluate(model, dataset.novel, ec);
        r.config_digest = config_digest(cfg);
        write_eval_report(r, (fs::path(out_dir) / (v + ".report.txt")).string());
        const auto& f = cfg.flags;
        tsv << v << '\t' << f.use_refined << '\t' << f.use_l2l << '\t' << f.use_foa << '\t'
            << f.use_ae << '\t' << r.n_way << '\t' << r.k_shot << '\t' << r.mean_accuracy << '\t'
            << r.ci95_halfwidth << '\n';
        tsv.flush();
        table[v] = std::move(r);
    }
    return table;
}

namespace {

void write_heatmap(const Eigen::ArrayXd& values, int h, int w, int out_size,
                   const std::string& path) {
    const double lo = values.minCoeff(), hi = values.maxCoeff();
    const double range = hi > lo ? hi - lo : 1.0;
    Image hm(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double t = (values(i * w + j) - lo) / range;
            // blue-to-red ramp
            hm.at(i, j, 0) = t;
            hm.at(i, j, 1) = 0.2 * (1.0 - std::fabs(2.0 * t - 1.0));
            hm.at(i, j, 2) = 1.0 - t;
        }
    write_png(resize(hm, out_size, out_size), path);
}

void write_mask(const BinaryMask& m, int out_size, const std::string& path) {
    Image img(m.h, m.w);
    for (int i = 0; i < m.h; ++i)
        for (int j = 0; j < m.w; ++j)
            for (int c = 0; c < 3; ++c) img.at(i, j, c) = m.at(i, j);
    // nearest-neighbour blow-up keeps the mask strictly binary
    Image big(out_size, out_size);
    for (int i = 0; i < out_size; ++i)
        for (int j = 0; j < out_size; ++j)
            for (int c = 0; c < 3; ++c)
                big.at(i, j, c) = img.at(i * m.h / out_size, j * m.w / out_size, c);
    write_png(big, path);
}

void draw_box(Image& img, const ImageBBox& b) {
    auto mark = [&](int i, int j) {
        img.at(i, j, 0) = 1.0;
        img.at(i, j, 1) = 0.0;
        img.at(i, j, 2) = 0.0;
    };
    for (int j = b.col_min; j <= b.col_max; ++j) {
        mark(b.row_min, j);
        mark(b.row_max, j);
    }
    for (int i = b.row_min; i <= b.row_max; ++i) {
        mark(i, b.col_min);
        mark(i, b.col_max);
    }
}

}  // namespace

void visualize(const FewShotModel* model, const std::vector<Image>& images,
               const std::string& out_dir, bool use_variance_probe) {
    if (!use_variance_probe && !model)
        throw std::invalid_argument("visualize: need a model or the variance probe");
    fs::create_directories(out_dir);
    for (std::size_t idx = 0; idx < images.size(); ++idx) {
        const int size = use_variance_probe ? images[idx].height
                                            : model->backbone().config().input_size;
        Image x = resize(images[idx], size, size);
        FeatureArray f = use_variance_probe
                             ? variance_probe_features(x, 11, 11)
                             : model->backbone().extract_values(x);
        auto [refined, fg] = bas::refine(x, f);
        FeatureArray f2 = use_variance_probe ? variance_probe_features(refined, 11, 11)
                                             : model->backbone().extract_values(refined);
        ActivationMap a2 = bas::aggregate_channels(f2);

        char prefix[32];
        std::snprintf(prefix, sizeof(prefix), "input_%03zu", idx);
        const fs::path base = fs::path(out_dir) / prefix;
        Image boxed = x;
        draw_box(boxed, fg.image_box);
        write_png(boxed, base.string() + "_raw_box.png");
        write_heatmap(fg.activation.values, fg.activation.h, fg.activation.w, size,
                      base.string() + "_activation.png");
        write_mask(fg.mask, size, base.string() + "_mask.png");
        write_mask(fg.component_mask, size, base.string() + "_component.png");
        write_png(refined, base.string() + "_refined.png");
        write_heatmap(a2.values, a2.h, a2.w, size, base.string() + "_refined_activation.png");
    }
}

}  // namespace fsfg
