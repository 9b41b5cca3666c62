#include "s5cl/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "s5cl/error.hpp"

namespace s5cl {

namespace {

double dot(const double* a, const double* b, int dim)
{
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += a[i] * b[i];
    return s;
}

double median(std::vector<double> values)
{
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

int argmax_row(const std::vector<double>& data, std::size_t offset, int width)
{
    int best = 0;
    double best_value = data[offset];
    for (int j = 1; j < width; ++j) {
        if (data[offset + j] > best_value) {
            best_value = data[offset + j];
            best = j;
        }
    }
    return best;
}

void append_normalized_rows(EmbeddingSet& set, const Tensor& raw, const std::vector<int>& labels,
                            ViewTag tag, const std::vector<int>& origins)
{
    const int rows = raw.shape()[0];
    const int dim = raw.shape()[1];
    const std::vector<double>& data = raw.data();
    std::vector<double> row(dim);
    for (int r = 0; r < rows; ++r) {
        double norm = 0.0;
        for (int j = 0; j < dim; ++j) norm += data[static_cast<std::size_t>(r) * dim + j] *
                                               data[static_cast<std::size_t>(r) * dim + j];
        norm = std::max(std::sqrt(norm), 1e-12);
        for (int j = 0; j < dim; ++j) row[j] = data[static_cast<std::size_t>(r) * dim + j] / norm;
        set.add_row(row.data(), labels[r], tag, origins[r]);
    }
}

} // namespace

const char* to_string(ViewTag tag)
{
    switch (tag) {
    case ViewTag::original: return "original";
    case ViewTag::weak_aug: return "weak_aug";
    default: return "strong_aug";
    }
}

void EmbeddingSet::add_row(const double* values, int label, ViewTag tag, int origin)
{
    if (dim <= 0) fail_invalid("embedding set: dimension not set");
    embeddings.insert(embeddings.end(), values, values + dim);
    labels.push_back(label);
    view_tags.push_back(tag);
    origin_indices.push_back(origin);
}

void EmbeddingSet::validate() const
{
    if (labels.size() != view_tags.size() || labels.size() != origin_indices.size() ||
        embeddings.size() != labels.size() * static_cast<std::size_t>(dim))
        fail_invalid("embedding set: inconsistent field sizes");
    for (int i = 0; i < size(); ++i) {
        const double norm = std::sqrt(dot(row(i), row(i), dim));
        if (std::fabs(norm - 1.0) > 1e-9)
            fail_invalid("embedding set: row " + std::to_string(i) + " has norm " +
                         std::to_string(norm) + ", expected 1");
    }
}

ClassificationReport classification_metrics(const std::vector<int>& predictions,
                                            const std::vector<int>& truth, int num_classes)
{
    if (predictions.size() != truth.size())
        fail_invalid("classification_metrics: " + std::to_string(predictions.size()) +
                     " predictions vs " + std::to_string(truth.size()) + " truth labels");
    if (num_classes < 1) fail_invalid("classification_metrics: need at least one class");

    ClassificationReport report;
    report.confusion.assign(num_classes, std::vector<int>(num_classes, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= num_classes || predictions[i] < 0 ||
            predictions[i] >= num_classes)
            fail_invalid("classification_metrics: label out of range at index " + std::to_string(i));
        report.confusion[truth[i]][predictions[i]] += 1;
    }

    int correct = 0;
    for (int k = 0; k < num_classes; ++k) correct += report.confusion[k][k];
    report.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / truth.size();

    report.precision.resize(num_classes);
    report.recall.resize(num_classes);
    report.f1.resize(num_classes);
    double f1_sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
        int predicted_k = 0, truth_k = 0;
        for (int j = 0; j < num_classes; ++j) {
            predicted_k += report.confusion[j][k];
            truth_k += report.confusion[k][j];
        }
        const int tp = report.confusion[k][k];
        report.precision[k] = predicted_k > 0 ? static_cast<double>(tp) / predicted_k : 0.0;
        report.recall[k] = truth_k > 0 ? static_cast<double>(tp) / truth_k : 0.0;
        const double pr = report.precision[k] + report.recall[k];
        report.f1[k] = pr > 0 ? 2.0 * report.precision[k] * report.recall[k] / pr : 0.0;
        f1_sum += report.f1[k];
    }
    report.macro_f1 = f1_sum / num_classes;
    return report;
}

MapAtRResult map_at_r(const EmbeddingSet& set)
{
    set.validate();
    const int n = set.size();
    std::vector<int> class_counts;
    for (int label : set.labels) {
        if (label < 0) fail_invalid("map_at_r: negative label");
        if (label >= static_cast<int>(class_counts.size())) class_counts.resize(label + 1, 0);
        class_counts[label] += 1;
    }

    MapAtRResult result;
    double sum = 0.0;
    int queries = 0;
    std::vector<int> order(n);
    std::vector<double> sims(n);
    for (int q = 0; q < n; ++q) {
        if (set.view_tags[q] != ViewTag::original) continue;
        const int r_budget = class_counts[set.labels[q]] - 1;
        if (r_budget <= 0) {
            result.skipped_queries += 1;
            continue;
        }
        for (int j = 0; j < n; ++j) sims[j] = dot(set.row(q), set.row(j), set.dim);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            if (sims[a] != sims[b]) return sims[a] > sims[b];
            return a < b;
        });

        int hits = 0, rank = 0;
        double ap = 0.0;
        for (int j : order) {
            if (j == q) continue;
            ++rank;
            if (rank > r_budget) break;
            if (set.labels[j] == set.labels[q]) {
                ++hits;
                ap += static_cast<double>(hits) / rank;
            }
        }
        sum += ap / r_budget;
        ++queries;
    }
    result.value = queries > 0 ? sum / queries : 0.0;
    return result;
}

HierarchyReport hierarchy_report(const EmbeddingSet& set)
{
    set.validate();
    const int n = set.size();
    HierarchyReport report;
    std::vector<double> own, pos, neg;
    int ordered = 0;
    for (int q = 0; q < n; ++q) {
        if (set.view_tags[q] != ViewTag::original) continue;
        double own_sum = 0.0, pos_sum = 0.0, neg_sum = 0.0;
        int own_count = 0, pos_count = 0, neg_count = 0;
        for (int j = 0; j < n; ++j) {
            if (j == q) continue;
            const double s = dot(set.row(q), set.row(j), set.dim);
            if (set.origin_indices[j] == set.origin_indices[q]) {
                if (set.view_tags[j] != ViewTag::original) {
                    own_sum += s;
                    ++own_count;
                }
            } else if (set.labels[j] == set.labels[q]) {
                pos_sum += s;
                ++pos_count;
            } else {
                neg_sum += s;
                ++neg_count;
            }
        }
        if (own_count == 0 || pos_count == 0 || neg_count == 0) {
            report.anchors_skipped += 1;
            continue;
        }
        const double s_own = own_sum / own_count;
        const double s_pos = pos_sum / pos_count;
        const double s_neg = neg_sum / neg_count;
        own.push_back(s_own);
        pos.push_back(s_pos);
        neg.push_back(s_neg);
        if (s_own > s_pos && s_pos > s_neg) ++ordered;
    }
    report.anchors_used = static_cast<int>(own.size());
    report.s_own_median = median(own);
    report.s_pos_median = median(pos);
    report.s_neg_median = median(neg);
    report.ordering_fraction = report.anchors_used > 0
                                   ? static_cast<double>(ordered) / report.anchors_used
                                   : 0.0;
    return report;
}

PredictionResult predict_dataset(S5CLModel& model, const LabeledDataset& data, int batch_size)
{
    if (batch_size < 1) fail_invalid("predict_dataset: batch size must be positive");
    const bool was_training = model.train_mode();
    model.set_train_mode(false);
    Tape::Pause no_grad;

    PredictionResult result;
    result.embeddings.dim = model.config().embedding_dim;
    for (int start = 0; start < data.size(); start += batch_size) {
        const int end = std::min(start + batch_size, data.size());
        std::vector<ImagePatch> batch(data.images.begin() + start, data.images.begin() + end);
        const Tensor embedded = model.embed(flatten_images(batch));
        const Tensor logits = model.classify(embedded);
        const int num_classes = logits.shape()[1];
        for (int r = 0; r < end - start; ++r)
            result.predictions.push_back(
                argmax_row(logits.data(), static_cast<std::size_t>(r) * num_classes, num_classes));

        std::vector<int> labels(data.labels.begin() + start, data.labels.begin() + end);
        std::vector<int> origins(end - start);
        std::iota(origins.begin(), origins.end(), start);
        append_normalized_rows(result.embeddings, embedded, labels, ViewTag::original, origins);
    }

    model.set_train_mode(was_training);
    return result;
}

EmbeddingSet build_embedding_set(S5CLModel& model, const LabeledDataset& data, int per_class_cap,
                                 int augmented_views, const AugmentationPolicy& weak,
                                 const AugmentationPolicy& strong, std::uint64_t seed)
{
    if (augmented_views < 0) fail_invalid("build_embedding_set: augmented_views must be >= 0");
    data.validate();

    std::vector<int> selected;
    if (per_class_cap <= 0) {
        selected.resize(data.size());
        std::iota(selected.begin(), selected.end(), 0);
    } else {
        std::vector<int> taken(data.num_classes(), 0);
        for (int i = 0; i < data.size(); ++i) {
            if (taken[data.labels[i]] < per_class_cap) {
                selected.push_back(i);
                taken[data.labels[i]] += 1;
            }
        }
    }

    const bool was_training = model.train_mode();
    model.set_train_mode(false);
    Tape::Pause no_grad;

    EmbeddingSet set;
    set.dim = model.config().embedding_dim;
    const Rng view_base = Rng(seed).split(stream::eval_views);

    const int batch_size = 64;
    for (std::size_t start = 0; start < selected.size(); start += batch_size) {
        const std::size_t end = std::min(start + batch_size, selected.size());
        std::vector<ImagePatch> originals, weak_views, strong_views;
        std::vector<int> labels, origins;
        std::vector<int> weak_labels, weak_origins, strong_labels, strong_origins;
        for (std::size_t i = start; i < end; ++i) {
            const int idx = selected[i];
            originals.push_back(data.images[idx]);
            labels.push_back(data.labels[idx]);
            origins.push_back(idx);
            // Augmented view j alternates weak/strong so `augmented_views` is
            // the total number of extra rows per image.
            for (int v = 0; v < augmented_views; ++v) {
                Rng view_rng =
                    view_base.split((static_cast<std::uint64_t>(idx) << 16) | static_cast<unsigned>(v));
                if (v % 2 == 0) {
                    weak_views.push_back(apply_policy(data.images[idx], weak, view_rng));
                    weak_labels.push_back(data.labels[idx]);
                    weak_origins.push_back(idx);
                } else {
                    strong_views.push_back(apply_policy(data.images[idx], strong, view_rng));
                    strong_labels.push_back(data.labels[idx]);
                    strong_origins.push_back(idx);
                }
            }
        }
        append_normalized_rows(set, model.embed(flatten_images(originals)), labels,
                               ViewTag::original, origins);
        if (!weak_views.empty())
            append_normalized_rows(set, model.embed(flatten_images(weak_views)), weak_labels,
                                   ViewTag::weak_aug, weak_origins);
        if (!strong_views.empty())
            append_normalized_rows(set, model.embed(flatten_images(strong_views)), strong_labels,
                                   ViewTag::strong_aug, strong_origins);
    }

    model.set_train_mode(was_training);
    return set;
}

std::string metrics_to_json(const MetricsReport& report, const std::vector<std::string>& class_names)
{
    nlohmann::json j;
    j["accuracy"] = report.classification.accuracy;
    j["macro_f1"] = report.classification.macro_f1;
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t k = 0; k < report.classification.f1.size(); ++k) {
        per_class.push_back({{"class", k < class_names.size() ? class_names[k] : std::to_string(k)},
                             {"precision", report.classification.precision[k]},
                             {"recall", report.classification.recall[k]},
                             {"f1", report.classification.f1[k]}});
    }
    j["per_class"] = per_class;
    j["confusion"] = report.classification.confusion;
    if (report.map_at_r.has_value()) {
        j["map_at_r"] = report.map_at_r->value;
        j["map_at_r_skipped_queries"] = report.map_at_r->skipped_queries;
    }
    if (report.hierarchy.has_value()) {
        j["hierarchy"] = {{"s_own_median", report.hierarchy->s_own_median},
                          {"s_pos_median", report.hierarchy->s_pos_median},
                          {"s_neg_median", report.hierarchy->s_neg_median},
                          {"ordering_fraction", report.hierarchy->ordering_fraction},
                          {"anchors_used", report.hierarchy->anchors_used},
                          {"anchors_skipped", report.hierarchy->anchors_skipped}};
    }
    return j.dump(2);
}

std::string confusion_to_csv(const ClassificationReport& report,
                             const std::vector<std::string>& class_names)
{
    std::ostringstream out;
    out << "truth\\predicted";
    for (std::size_t k = 0; k < report.confusion.size(); ++k)
        out << ',' << (k < class_names.size() ? class_names[k] : std::to_string(k));
    out << '\n';
    for (std::size_t r = 0; r < report.confusion.size(); ++r) {
        out << (r < class_names.size() ? class_names[r] : std::to_string(r));
        for (int v : report.confusion[r]) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

std::string embedding_set_to_csv(const EmbeddingSet& set)
{
    std::ostringstream out;
    out << "origin_index,label,view";
    for (int d = 0; d < set.dim; ++d) out << ",e" << d;
    out << '\n';
    out.precision(17);
    for (int i = 0; i < set.size(); ++i) {
        out << set.origin_indices[i] << ',' << set.labels[i] << ',' << to_string(set.view_tags[i]);
        const double* r = set.row(i);
        for (int d = 0; d < set.dim; ++d) out << ',' << r[d];
        out << '\n';
    }
    return out.str();
}

} // namespace s5cl
