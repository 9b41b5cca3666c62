#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s5cl/augment.hpp"
#include "s5cl/dataset.hpp"
#include "s5cl/evaluator.hpp"
#include "s5cl/losses.hpp"
#include "s5cl/model.hpp"
#include "s5cl/optimizer.hpp"

namespace s5cl {

enum class TrainMode { cross_entropy, supcon, s1cl, s3cl, s5cl, self_supervised };

TrainMode train_mode_from_string(const std::string& name);
const char* to_string(TrainMode mode);

// Loss-weight pattern implied by a mode. dual_view_labeled controls whether
// the strong labeled view joins the supervised contrastive term.
struct ModePreset {
    double w_labeled = 0.0;
    double w_unlabeled = 0.0;
    double w_pseudo = 0.0;
    double w_cross_entropy = 0.0;
    bool dual_view_labeled = false;
    bool finite_pseudo_start = false; // only s5cl switches losses at epoch t
};

ModePreset mode_presets(TrainMode mode);

enum class EarlyStopMetric { accuracy, macro_f1 };

struct TrainConfig {
    TrainMode mode = TrainMode::s5cl;
    LossConfig loss;          // temperatures and pseudo start; weights come from the mode
    ModelConfig model;
    OptimizerConfig optimizer;
    int epochs = 5;
    int labeled_batch = 32;
    int unlabeled_batch = 128;
    std::uint64_t seed = 0;
    std::optional<int> early_stopping_patience;
    EarlyStopMetric early_stop_metric = EarlyStopMetric::accuracy;
    AugmentationPolicy weak_aug = AugmentationPolicy::weak_default();
    AugmentationPolicy strong_aug = AugmentationPolicy::strong_default();

    void validate() const;
    LossConfig effective_loss() const;
    bool needs_unlabeled() const;
    bool needs_labeled() const;
};

struct TrainSchedule {
    int epoch = 0;
    int pseudo_start = 1;
    long step = 0;
};

struct TrainStepResult {
    LossBreakdown losses;
    std::vector<int> pseudo_labels; // one per unlabeled image when L_P was active
};

// One optimization step over a labeled dual-view batch and an optional
// unlabeled dual-view batch, following the epoch schedule.
TrainStepResult train_step(S5CLModel& model, OptimizerState& optimizer_state,
                           const DualViewBatch& labeled, const DualViewBatch* unlabeled,
                           const TrainConfig& config, const LossConfig& loss_config,
                           TrainSchedule& schedule);

struct EpochRecord {
    LossBreakdown mean_losses;
    int steps = 0;
    int unlabeled_loss_steps = 0;
    int pseudo_loss_steps = 0;
    std::optional<ClassificationReport> validation;
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    std::optional<ClassificationReport> test;
    std::optional<double> pseudo_label_audit_accuracy;
    std::uint64_t hidden_label_reads_during_training = 0;
    double wall_clock_seconds = 0.0;
    int best_epoch = -1;
    bool early_stopped = false;
};

struct TrainOutput {
    S5CLModel model;
    RunRecord record;
};

TrainOutput run_training(const TrainConfig& config, const LabeledDataset& labeled,
                         const UnlabeledDataset& unlabeled, const LabeledDataset& validation,
                         const LabeledDataset& test);

std::string run_record_to_json(const RunRecord& record);

// Checkpoint container: "S5CK" magic, u32 version, length-prefixed JSON header
// describing the model config, class names, and tensor catalog, then all
// tensor payloads as little-endian f64.
void save_checkpoint(const std::string& path, const S5CLModel& model,
                     const std::vector<std::string>& class_names);

struct Checkpoint {
    S5CLModel model;
    std::vector<std::string> class_names;
};

Checkpoint load_checkpoint(const std::string& path);

} // namespace s5cl
