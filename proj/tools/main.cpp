#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "fsfg/harness.hpp"
#include "fsfg/synthetic.hpp"

namespace fs = std::filesystem;
using namespace fsfg;

namespace {

struct CommonOpts {
    std::string config_file;
    std::string dataset_root;
    std::string split_preset = "synthetic";
    std::string out_dir = "runs/run";
    std::vector<std::string> overrides;  // key=value
    int n_way = -1, k_shot = -1, episodes = -1;
    long long seed = -1;
    std::string variant;
    bool use_gt_box = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_data) {
    cmd->add_option("--config", o.config_file, "flat key=value config file");
    auto* root = cmd->add_option("--dataset-root", o.dataset_root, "class-per-folder dataset root");
    if (needs_data) root->required();
    cmd->add_option("--split-preset", o.split_preset, "cub|dogs|cars|synthetic")
        ->check(CLI::IsMember({"cub", "dogs", "cars", "synthetic"}));
    cmd->add_option("--n-way", o.n_way);
    cmd->add_option("--k-shot", o.k_shot);
    cmd->add_option("--episodes", o.episodes, "episode count (eval) / episodes per epoch (train)");
    cmd->add_option("--seed", o.seed);
    cmd->add_option("--variant", o.variant, "ablation variant (B0..B3, C0..C4, full, ...)");
    cmd->add_flag("--use-gt-box", o.use_gt_box, "crop with human-annotated boxes first");
    cmd->add_option("--out-dir", o.out_dir);
    cmd->add_option("--set", o.overrides, "config override, key=value, repeatable");
}

TrainConfig resolve_config(const CommonOpts& o) {
    TrainConfig cfg;
    cfg.backbone.architecture = Architecture::tiny_test;  // desk-scale default
    if (!o.config_file.empty()) apply_config(cfg, parse_config_file(o.config_file));
    std::map<std::string, std::string> kv;
    for (const auto& s : o.overrides) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value: " + s);
        kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    apply_config(cfg, kv);
    if (o.n_way > 0) cfg.n_way = o.n_way;
    if (o.k_shot > 0) cfg.k_shot = o.k_shot;
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    if (!o.variant.empty()) cfg.flags = variant_flags(o.variant);
    if (o.use_gt_box) cfg.preprocess.use_gt_box = true;
    return cfg;
}

Dataset load(const CommonOpts& o) {
    SplitSpec split = preset_split(o.split_preset, list_classes(o.dataset_root));
    return load_dataset(o.dataset_root, split);
}

EvalConfig eval_config(const TrainConfig& cfg, const CommonOpts& o) {
    EvalConfig ec;
    ec.n_way = cfg.n_way;
    ec.k_shot = cfg.k_shot;
    ec.queries_per_class = cfg.queries_per_class;
    ec.seed = cfg.seed;
    ec.weights = cfg.weights;
    ec.flags = cfg.flags;
    ec.preprocess = cfg.preprocess;
    if (o.episodes > 0) ec.n_episodes = o.episodes;
    return ec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage background-suppression / foreground-alignment few-shot recognizer"};
    app.require_subcommand(1);

    CommonOpts train_o, eval_o, ablate_o, vis_o;
    std::string eval_ckpt, vis_ckpt, eval_split = "novel";
    std::vector<std::string> vis_images;
    bool vis_probe = false;

    auto* cmd_train = app.add_subcommand("train", "episodic training on the base split");
    add_common(cmd_train, train_o, true);

    auto* cmd_eval = app.add_subcommand("eval", "episodic evaluation of a checkpoint");
    add_common(cmd_eval, eval_o, true);
    cmd_eval->add_option("--checkpoint", eval_ckpt)->required();
    cmd_eval->add_option("--eval-split", eval_split, "novel|val|base")
        ->check(CLI::IsMember({"novel", "val", "base"}));

    auto* cmd_ablate = app.add_subcommand("ablate", "train+evaluate the ablation grid");
    add_common(cmd_ablate, ablate_o, true);
    std::vector<std::string> variants = {"B0", "B1", "B2", "B3", "C0", "C1", "C2", "C3", "C4"};
    cmd_ablate->add_option("--variants", variants, "variant subset to run");

    auto* cmd_vis = app.add_subcommand("visualize", "emit BAS panels for input images");
    add_common(cmd_vis, vis_o, false);
    cmd_vis->add_option("--checkpoint", vis_ckpt);
    cmd_vis->add_option("--images", vis_images, "input image files")->required();
    cmd_vis->add_flag("--probe", vis_probe, "use the variance probe instead of a checkpoint");

    std::string synth_root = "synthetic_data";
    SyntheticSpec synth;
    auto* cmd_synth = app.add_subcommand("make-synthetic", "write the bundled synthetic dataset");
    cmd_synth->add_option("--out-dir", synth_root);
    cmd_synth->add_option("--classes", synth.n_classes);
    cmd_synth->add_option("--images-per-class", synth.images_per_class);
    cmd_synth->add_option("--image-size", synth.image_size);
    cmd_synth->add_option("--seed", synth.seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_train->parsed()) {
            TrainConfig cfg = resolve_config(train_o);
            if (train_o.episodes > 0) cfg.episodes_per_epoch = train_o.episodes;
            Dataset ds = load(train_o);
            RunArtifacts art = train(cfg, ds, train_o.out_dir);
            std::cout << "checkpoint: " << art.checkpoint << "\n"
                      << "metrics: " << art.metrics_log << "\n"
                      << "final train accuracy: " << art.last_train_accuracy << "\n";
        } else if (cmd_eval->parsed()) {
            TrainConfig cfg = resolve_config(eval_o);
            Dataset ds = load(eval_o);
            FewShotModel model = FewShotModel::load(eval_ckpt);
            EvalConfig ec = eval_config(cfg, eval_o);
            const Pool& pool = eval_split == "base" ? ds.base
                               : eval_split == "val" ? ds.val
                                                     : ds.novel;
            EvalReport r = evaluate(model, pool, ec);
            r.config_digest = config_digest(cfg);
            fs::create_directories(eval_o.out_dir);
            const std::string path = (fs::path(eval_o.out_dir) / "eval_report.txt").string();
            write_eval_report(r, path);
            std::cout << "mean_accuracy=" << r.mean_accuracy
                      << " ci95_halfwidth=" << r.ci95_halfwidth << " (" << path << ")\n";
        } else if (cmd_ablate->parsed()) {
            TrainConfig cfg = resolve_config(ablate_o);
            Dataset ds = load(ablate_o);
            EvalConfig ec = eval_config(cfg, ablate_o);
            auto table = run_ablation(variants, cfg, ds, ec, ablate_o.out_dir);
            for (const auto& [v, r] : table)
                std::cout << v << ": " << r.mean_accuracy << " +- " << r.ci95_halfwidth << "\n";
            std::cout << "table: " << (fs::path(ablate_o.out_dir) / "ablation.tsv").string()
                      << "\n";
        } else if (cmd_vis->parsed()) {
            std::vector<Image> imgs;
            for (const auto& p : vis_images) imgs.push_back(read_png(p));
            if (vis_probe) {
                visualize(nullptr, imgs, vis_o.out_dir, true);
            } else {
                if (vis_ckpt.empty())
                    throw std::runtime_error("visualize needs --checkpoint or --probe");
                FewShotModel model = FewShotModel::load(vis_ckpt);
                visualize(&model, imgs, vis_o.out_dir, false);
            }
            std::cout << "wrote " << imgs.size() * 6 << " files to " << vis_o.out_dir << "\n";
        } else if (cmd_synth->parsed()) {
            write_synthetic_dataset(synth_root, synth);
            std::cout << "wrote " << synth.n_classes << " classes x " << synth.images_per_class
                      << " images to " << synth_root << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
