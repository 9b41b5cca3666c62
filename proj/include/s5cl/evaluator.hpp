#pragma once

#include <optional>
#include <string>
#include <vector>

#include "s5cl/augment.hpp"
#include "s5cl/dataset.hpp"
#include "s5cl/model.hpp"

namespace s5cl {

enum class ViewTag { original, weak_aug, strong_aug };

const char* to_string(ViewTag tag);

struct EmbeddingSet {
    int dim = 0;
    std::vector<double> embeddings; // row-major N x dim, rows unit-norm
    std::vector<int> labels;
    std::vector<ViewTag> view_tags;
    std::vector<int> origin_indices;

    int size() const { return static_cast<int>(labels.size()); }
    const double* row(int i) const { return embeddings.data() + static_cast<std::size_t>(i) * dim; }
    void add_row(const double* values, int label, ViewTag tag, int origin);
    void validate() const;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<std::vector<int>> confusion; // [truth][predicted]
};

struct MapAtRResult {
    double value = 0.0;
    int skipped_queries = 0; // singleton-class queries
};

struct HierarchyReport {
    double s_own_median = 0.0;
    double s_pos_median = 0.0;
    double s_neg_median = 0.0;
    double ordering_fraction = 0.0; // anchors with s_own > s_pos > s_neg
    int anchors_used = 0;
    int anchors_skipped = 0; // anchors missing one of the three categories
};

struct MetricsReport {
    ClassificationReport classification;
    std::optional<MapAtRResult> map_at_r;
    std::optional<HierarchyReport> hierarchy;
};

ClassificationReport classification_metrics(const std::vector<int>& predictions,
                                            const std::vector<int>& truth, int num_classes);

// Mean average precision at R over original-view queries, cosine similarity,
// ties broken by row index. R = same-class row count - 1.
MapAtRResult map_at_r(const EmbeddingSet& embeddings);

HierarchyReport hierarchy_report(const EmbeddingSet& embeddings);

struct PredictionResult {
    std::vector<int> predictions;
    EmbeddingSet embeddings; // original rows only
};

// Deterministic eval-mode forward pass in index order; results do not depend
// on the batch size because normalization uses running statistics.
PredictionResult predict_dataset(S5CLModel& model, const LabeledDataset& data, int batch_size = 64);

// Embeds up to per_class_cap images per class (<= 0 keeps all) together with
// augmented_views extra views of each (alternating weak/strong policies), for
// MAP@R and the hierarchy statistics. Total rows: selected × (1 + views).
EmbeddingSet build_embedding_set(S5CLModel& model, const LabeledDataset& data, int per_class_cap,
                                 int augmented_views, const AugmentationPolicy& weak,
                                 const AugmentationPolicy& strong, std::uint64_t seed);

std::string metrics_to_json(const MetricsReport& report, const std::vector<std::string>& class_names);
std::string confusion_to_csv(const ClassificationReport& report,
                             const std::vector<std::string>& class_names);
std::string embedding_set_to_csv(const EmbeddingSet& embeddings);

} // namespace s5cl
