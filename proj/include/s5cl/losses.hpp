#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "s5cl/tensor.hpp"

namespace s5cl {

// Pseudo-labels disabled for the whole run.
inline constexpr int kNeverPseudo = std::numeric_limits<int>::max();

// Temperatures and weights of the combined loss, plus the epoch at which the
// self-supervised term hands over to the pseudo-labeled term.
struct LossConfig {
    double t_labeled = 0.2;
    double t_unlabeled = 0.7;
    double t_pseudo = 0.7;
    double w_unlabeled = 1.0;
    double w_pseudo = 1.0;
    double w_labeled = 1.0;
    double w_cross_entropy = 1.0;
    int pseudo_start_epoch = 1;
};

// Throws on non-positive temperatures, negative weights, or a broken
// temperature hierarchy (an active unlabeled/pseudo term requires its
// temperature to exceed the labeled one).
void validate(const LossConfig& config);

struct ContrastiveBatch {
    Tensor embeddings;       // B x d, raw (normalized internally)
    std::vector<int> labels; // class ids, pseudo-class ids, or instance ids
};

struct SupConResult {
    Tensor loss;              // scalar
    int contributing_anchors; // anchors with at least one positive
};

// Supervised contrastive loss over one batch: mean over contributing anchors
// of -(1/|P(i)|) sum_p log( exp(z_i.z_p/tau) / sum_a exp(z_i.z_a/tau) ), with
// positives the same-label rows and the denominator over all other rows.
// Anchors without a positive are skipped; an all-distinct batch yields 0.
SupConResult supcon_loss(const ContrastiveBatch& batch, double temperature);

// Instance-discrimination loss: the two views are concatenated into a 2B batch
// where row k and row B+k share instance label k, then scored as supcon_loss.
Tensor self_supervised_loss(const Tensor& view1, const Tensor& view2, double temperature);

// Same concatenation, but both views of image k carry pseudo_labels[k].
Tensor pseudo_labeled_loss(const Tensor& view1, const Tensor& view2,
                           const std::vector<int>& pseudo_labels, int num_classes,
                           double temperature);

// Mean over the batch of -log_softmax(logits)[i, labels[i]].
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels);

// Row-wise argmax, ties broken toward the lowest class index. No confidence
// threshold is applied. Never recorded on the tape.
std::vector<int> generate_pseudo_labels(const Tensor& logits);

struct LossBreakdown {
    double l_labeled = 0.0;
    double l_unlabeled = 0.0;
    double l_pseudo = 0.0;
    double l_cross_entropy = 0.0;
    double l_total = 0.0;
    bool labeled_active = false;
    bool unlabeled_active = false;
    bool pseudo_active = false;
    bool cross_entropy_active = false;
};

struct TotalLossInputs {
    std::optional<Tensor> labeled;
    std::optional<Tensor> unlabeled;
    std::optional<Tensor> pseudo;
    std::optional<Tensor> cross_entropy;
};

struct TotalLossResult {
    Tensor total; // scalar
    LossBreakdown breakdown;
};

// Scheduled combination: the self-supervised term is active before
// pseudo_start_epoch, the pseudo-labeled term from it onward; labeled terms
// are always active. Terms with zero weight or absent data contribute exactly
// 0 and leave no trace on the tape.
TotalLossResult total_loss(const TotalLossInputs& inputs, const LossConfig& config, int epoch);

} // namespace s5cl
