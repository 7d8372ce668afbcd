#pragma once

#include <map>
#include <string>

#include "fsfg/episodic.hpp"

namespace fsfg {

struct TrainConfig {
    int epochs = 90;
    int episodes_per_epoch = 100;
    double lr_initial = 0.1;
    double lr_at_60 = 0.06;
    double lr_decay_factor = 0.2;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int n_way = 5;
    int k_shot = 1;
    int queries_per_class = 15;
    int val_episodes = 40;      // per-epoch validation probe (skipped if no val split)
    bool save_every_epoch = false;
    std::uint64_t seed = 0;
    BackboneConfig backbone;
    LossWeights weights;
    EraseConfig erase;
    AblationFlags flags;
    PreprocessConfig preprocess;
};

/// Piecewise schedule: lr_initial until epoch 60, lr_at_60 for [60,70), then
/// times lr_decay_factor every 10 epochs.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

/// Flat `key=value` config files with dotted keys (`loss.lambda=0.1`).
std::map<std::string, std::string> parse_config_file(const std::string& path);
/// Apply dotted-key overrides; unknown keys are an error.
void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv);
/// Resolved snapshot in the same key=value format.
std::string config_to_string(const TrainConfig& cfg);
std::string config_digest(const TrainConfig& cfg);

struct RunArtifacts {
    std::string run_dir;
    std::string checkpoint;       // selected (best-val or last) checkpoint
    std::string metrics_log;
    std::string config_snapshot;
    double last_train_accuracy = 0.0;  // mean episode accuracy over the final epoch
};

/// Episodic training per the configured schedule. Writes the config
/// snapshot, a one-record-per-step metrics log, per-epoch checkpoints and
/// the selected checkpoint under out_dir. Aborts with the offending episode
/// seed if the loss goes non-finite.
RunArtifacts train(const TrainConfig& cfg, const Dataset& dataset, const std::string& out_dir);

/// Train + evaluate each requested variant; writes a machine-readable table
/// (TSV mirroring the ablation grids) to out_dir/ablation.tsv.
std::map<std::string, EvalReport> run_ablation(const std::vector<std::string>& variants,
                                               const TrainConfig& base_cfg,
                                               const Dataset& dataset,
                                               const EvalConfig& eval_cfg,
                                               const std::string& out_dir);

/// Per input image emits six deterministic files: raw image with the BAS
/// box drawn, activation heat map, threshold mask, largest-component mask,
/// refined image, and the refined-stage heat map.
void visualize(const FewShotModel* model, const std::vector<Image>& images,
               const std::string& out_dir, bool use_variance_probe = false);

}  // namespace fsfg
