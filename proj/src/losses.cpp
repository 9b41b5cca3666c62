#include "s5cl/losses.hpp"

#include <cmath>
#include <string>

#include "s5cl/error.hpp"

namespace s5cl {

namespace {

// Large negative offset that drives exp() to exactly 0 in double precision,
// excluding the anchor itself from the softmax denominator.
constexpr double kSelfMask = -1e9;

} // namespace

void validate(const LossConfig& config)
{
    if (config.t_labeled <= 0.0 || config.t_unlabeled <= 0.0 || config.t_pseudo <= 0.0) {
        fail_invalid("loss config: temperatures must be strictly positive");
    }
    if (config.w_unlabeled < 0.0 || config.w_pseudo < 0.0 || config.w_labeled < 0.0 ||
        config.w_cross_entropy < 0.0) {
        fail_invalid("loss config: weights must be non-negative");
    }
    if (config.w_unlabeled > 0.0 && config.w_labeled > 0.0 && config.t_unlabeled <= config.t_labeled) {
        fail_invalid("loss config: unlabeled temperature must exceed the labeled temperature");
    }
    if (config.w_pseudo > 0.0 && config.w_labeled > 0.0 && config.t_pseudo <= config.t_labeled) {
        fail_invalid("loss config: pseudo temperature must exceed the labeled temperature");
    }
    if (config.pseudo_start_epoch < 0) {
        fail_invalid("loss config: pseudo-label start epoch must be non-negative");
    }
}

SupConResult supcon_loss(const ContrastiveBatch& batch, double temperature)
{
    const Tensor& z = batch.embeddings;
    if (temperature <= 0.0) fail_invalid("supcon_loss: temperature must be positive");
    if (z.rank() != 2) fail_invalid("supcon_loss: embeddings must be rank 2, got " + z.shape_string());
    const std::size_t b = z.rows();
    if (b < 2) fail_invalid("supcon_loss: batch size must be at least 2, got " + std::to_string(b));
    if (batch.labels.size() != b) {
        fail_invalid("supcon_loss: " + std::to_string(batch.labels.size()) + " labels for " +
                     std::to_string(b) + " embeddings");
    }
    for (int label : batch.labels) {
        if (label < 0) fail_invalid("supcon_loss: labels must be non-negative");
    }

    // Constant weight matrix folding positives, 1/|P(i)| and the anchor mean
    // into a single mask, so the loss is one weighted sum of log-softmax rows.
    std::vector<double> weights(b * b, 0.0);
    std::vector<double> self_mask(b * b, 0.0);
    int contributing = 0;
    for (std::size_t i = 0; i < b; ++i) {
        self_mask[i * b + i] = kSelfMask;
        std::size_t positives = 0;
        for (std::size_t p = 0; p < b; ++p) {
            if (p != i && batch.labels[p] == batch.labels[i]) ++positives;
        }
        if (positives == 0) continue;
        ++contributing;
        for (std::size_t p = 0; p < b; ++p) {
            if (p != i && batch.labels[p] == batch.labels[i]) {
                weights[i * b + p] = 1.0 / static_cast<double>(positives);
            }
        }
    }
    if (contributing == 0) {
        return SupConResult{Tensor::scalar(0.0), 0};
    }
    for (double& w : weights) w /= static_cast<double>(contributing);

    Tensor normalized = l2_normalize_rows(z);
    Tensor similarities = scalar_mul(matmul(normalized, transpose(normalized)), 1.0 / temperature);
    Tensor masked = add(similarities, Tensor({b, b}, std::move(self_mask)));
    Tensor log_probs = log_softmax_rows(masked);
    Tensor weighted = elementwise_mul(log_probs, Tensor({b, b}, std::move(weights)));
    return SupConResult{scalar_mul(sum(weighted), -1.0), contributing};
}

Tensor self_supervised_loss(const Tensor& view1, const Tensor& view2, double temperature)
{
    if (view1.rank() != 2 || view2.rank() != 2 || view1.shape() != view2.shape()) {
        fail_invalid("self_supervised_loss: views have shapes " + view1.shape_string() + " and " +
                     view2.shape_string());
    }
    const std::size_t b = view1.rows();
    std::vector<int> instance_ids(2 * b);
    for (std::size_t k = 0; k < b; ++k) {
        instance_ids[k] = static_cast<int>(k);
        instance_ids[b + k] = static_cast<int>(k);
    }
    ContrastiveBatch combined{concat_rows(view1, view2), std::move(instance_ids)};
    return supcon_loss(combined, temperature).loss;
}

Tensor pseudo_labeled_loss(const Tensor& view1, const Tensor& view2,
                           const std::vector<int>& pseudo_labels, int num_classes,
                           double temperature)
{
    if (view1.rank() != 2 || view2.rank() != 2 || view1.shape() != view2.shape()) {
        fail_invalid("pseudo_labeled_loss: views have shapes " + view1.shape_string() + " and " +
                     view2.shape_string());
    }
    const std::size_t b = view1.rows();
    if (pseudo_labels.size() != b) {
        fail_invalid("pseudo_labeled_loss: " + std::to_string(pseudo_labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
    }
    for (int label : pseudo_labels) {
        if (label < 0 || label >= num_classes) {
            fail_invalid("pseudo_labeled_loss: label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(num_classes) + ")");
        }
    }
    std::vector<int> duplicated(2 * b);
    for (std::size_t k = 0; k < b; ++k) {
        duplicated[k] = pseudo_labels[k];
        duplicated[b + k] = pseudo_labels[k];
    }
    ContrastiveBatch combined{concat_rows(view1, view2), std::move(duplicated)};
    return supcon_loss(combined, temperature).loss;
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<int>& labels)
{
    if (logits.rank() != 2) {
        fail_invalid("cross_entropy_loss: logits must be rank 2, got " + logits.shape_string());
    }
    const std::size_t b = logits.rows();
    const std::size_t c = logits.cols();
    if (labels.size() != b) {
        fail_invalid("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(b));
    }
    std::vector<double> one_hot(b * c, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        const int label = labels[i];
        if (label < 0 || label >= static_cast<int>(c)) {
            fail_invalid("cross_entropy_loss: label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(c) + ")");
        }
        one_hot[i * c + static_cast<std::size_t>(label)] = 1.0;
    }
    Tensor picked = elementwise_mul(log_softmax_rows(logits), Tensor({b, c}, std::move(one_hot)));
    return scalar_mul(sum(picked), -1.0 / static_cast<double>(b));
}

std::vector<int> generate_pseudo_labels(const Tensor& logits)
{
    if (logits.rank() != 2) {
        fail_invalid("generate_pseudo_labels: logits must be rank 2, got " + logits.shape_string());
    }
    const std::size_t b = logits.rows();
    const std::size_t c = logits.cols();
    const double* d = logits.data().data();
    std::vector<int> labels(b, 0);
    for (std::size_t i = 0; i < b; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j) {
            if (d[i * c + j] > d[i * c + best]) best = j;
        }
        labels[i] = static_cast<int>(best);
    }
    return labels;
}

TotalLossResult total_loss(const TotalLossInputs& inputs, const LossConfig& config, int epoch)
{
    if (epoch < 0) fail_invalid("total_loss: epoch must be non-negative");
    validate(config);

    LossBreakdown breakdown;
    breakdown.unlabeled_active =
        config.w_unlabeled > 0.0 && epoch < config.pseudo_start_epoch && inputs.unlabeled.has_value();
    breakdown.pseudo_active =
        config.w_pseudo > 0.0 && epoch >= config.pseudo_start_epoch && inputs.pseudo.has_value();
    breakdown.labeled_active = config.w_labeled > 0.0 && inputs.labeled.has_value();
    breakdown.cross_entropy_active = config.w_cross_entropy > 0.0 && inputs.cross_entropy.has_value();

    Tensor total;
    auto combine = [&total](const Tensor& term, double weight) {
        Tensor weighted = weight == 1.0 ? term : scalar_mul(term, weight);
        total = total.defined() ? add(total, weighted) : weighted;
    };
    if (breakdown.unlabeled_active) {
        breakdown.l_unlabeled = inputs.unlabeled->value();
        combine(*inputs.unlabeled, config.w_unlabeled);
    }
    if (breakdown.pseudo_active) {
        breakdown.l_pseudo = inputs.pseudo->value();
        combine(*inputs.pseudo, config.w_pseudo);
    }
    if (breakdown.labeled_active) {
        breakdown.l_labeled = inputs.labeled->value();
        combine(*inputs.labeled, config.w_labeled);
    }
    if (breakdown.cross_entropy_active) {
        breakdown.l_cross_entropy = inputs.cross_entropy->value();
        combine(*inputs.cross_entropy, config.w_cross_entropy);
    }
    if (!total.defined()) total = Tensor::scalar(0.0);
    breakdown.l_total = total.value();
    return TotalLossResult{total, breakdown};
}

} // namespace s5cl
