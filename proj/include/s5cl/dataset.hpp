#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "s5cl/augment.hpp"
#include "s5cl/rng.hpp"
#include "s5cl/tensor.hpp"

namespace s5cl {

struct DatasetMeta {
    int height = 0;
    int width = 0;
    std::uint64_t seed = 0;
    std::string generator; // human-readable provenance, empty for imported files
};

struct LabeledDataset {
    std::vector<ImagePatch> images;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    DatasetMeta meta;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    int size() const { return static_cast<int>(images.size()); }
    void validate() const;
    std::vector<int> class_counts() const;
};

// Unlabeled images keep their ground truth behind an access-counting getter so
// pseudo-label quality can be audited after training while the training path
// provably never reads it.
class UnlabeledDataset {
public:
    UnlabeledDataset() = default;
    UnlabeledDataset(std::vector<ImagePatch> images, std::vector<int> hidden_labels);

    const std::vector<ImagePatch>& images() const { return images_; }
    int size() const { return static_cast<int>(images_.size()); }

    const std::vector<int>& audit_labels() const;
    static std::uint64_t audit_access_count();

private:
    std::vector<ImagePatch> images_;
    std::vector<int> hidden_labels_;
};

struct SyntheticSpec {
    int num_classes = 9;
    std::vector<int> per_class_counts; // size 1 = uniform, size num_classes = explicit
    int patch_size = 16;
    double color_separation = 0.25;
    double texture_amplitude = 0.15;
    double noise_std = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<int> expanded_counts() const;
};

LabeledDataset generate_synthetic(const SyntheticSpec& spec);

// 9 balanced classes of 16x16 patches, 400 images per class (300 train + 100
// test once split with test_fraction 0.25).
SyntheticSpec balanced_benchmark_spec(std::uint64_t seed);

// 8 classes whose training sizes fall geometrically from 400 down to 8 once
// split with test_fraction 0.2.
SyntheticSpec imbalanced_benchmark_spec(std::uint64_t seed);

struct SplitSpec {
    // Exactly one of the two labeled budgets must be set.
    std::vector<int> labeled_per_class; // size 1 = same count for every class
    std::optional<double> labeled_fraction_of_majority;
    std::optional<int> keep_all_minority_below;
    double validation_fraction = 0.0;
    double test_fraction = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    LabeledDataset labeled;
    UnlabeledDataset unlabeled;
    LabeledDataset validation;
    LabeledDataset test;
};

SplitResult split_labeled_unlabeled(const LabeledDataset& data, const SplitSpec& spec);

struct BatchIndices {
    std::vector<int> labeled;
    std::vector<int> unlabeled;
};

// One epoch = one shuffled pass over the unlabeled set; the labeled sampler
// cycles, reshuffling on wraparound. With no unlabeled data the iterator
// degrades to one shuffled pass over the labeled set.
class PairedBatchIterator {
public:
    PairedBatchIterator(int labeled_size, int unlabeled_size, int labeled_batch, int unlabeled_batch,
                        Rng rng);

    bool next(BatchIndices& out);
    int batches_per_epoch() const { return batches_per_epoch_; }

private:
    int labeled_size_;
    int unlabeled_size_;
    int labeled_batch_;
    int unlabeled_batch_;
    int batches_per_epoch_;
    int batch_index_ = 0;
    std::vector<int> unlabeled_order_;
    std::vector<int> labeled_order_;
    std::size_t labeled_cursor_ = 0;
    Rng rng_;
};

struct DualViewBatch {
    std::vector<ImagePatch> weak_views;   // Y1
    std::vector<ImagePatch> strong_views; // Y2
    std::vector<int> labels;              // class labels or instance ids
};

// Views are seeded per dataset-level image index so the augmentation of image
// k does not depend on which batch it landed in.
DualViewBatch make_dual_views(const std::vector<ImagePatch>& images,
                              const std::vector<int>& image_indices, const std::vector<int>& labels,
                              const AugmentationPolicy& weak, const AugmentationPolicy& strong,
                              const Rng& base);

// Flattens B patches into a B x (H*W*3) tensor of doubles.
Tensor flatten_images(const std::vector<ImagePatch>& images);

// Bit-exact dataset container: "S5DS" magic, u32 version, length-prefixed JSON
// header, i32 labels (-1 = unlabeled), f32 pixels image-major row-major.
void save_s5ds(const std::string& path, const LabeledDataset& data);
LabeledDataset load_s5ds(const std::string& path);

} // namespace s5cl
