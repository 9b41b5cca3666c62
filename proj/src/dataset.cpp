#include "s5cl/dataset.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "s5cl/error.hpp"

namespace s5cl {

namespace {

std::atomic<std::uint64_t> g_audit_reads{0};

constexpr double kTwoPi = 6.28318530717958647692;

} // namespace

void LabeledDataset::validate() const
{
    if (images.size() != labels.size())
        fail_invalid("dataset: image count " + std::to_string(images.size()) +
                     " does not match label count " + std::to_string(labels.size()));
    const int k = num_classes();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k)
            fail_invalid("dataset: label " + std::to_string(labels[i]) + " at index " +
                         std::to_string(i) + " outside [0," + std::to_string(k) + ")");
    }
}

std::vector<int> LabeledDataset::class_counts() const
{
    std::vector<int> counts(class_names.size(), 0);
    for (int label : labels)
        if (label >= 0 && label < static_cast<int>(counts.size())) counts[label] += 1;
    return counts;
}

UnlabeledDataset::UnlabeledDataset(std::vector<ImagePatch> images, std::vector<int> hidden_labels)
    : images_(std::move(images)), hidden_labels_(std::move(hidden_labels))
{
    if (images_.size() != hidden_labels_.size())
        fail_invalid("unlabeled dataset: hidden label count does not match image count");
}

const std::vector<int>& UnlabeledDataset::audit_labels() const
{
    g_audit_reads.fetch_add(1, std::memory_order_relaxed);
    return hidden_labels_;
}

std::uint64_t UnlabeledDataset::audit_access_count()
{
    return g_audit_reads.load(std::memory_order_relaxed);
}

void SyntheticSpec::validate() const
{
    if (num_classes < 2) fail_invalid("generate_synthetic: need at least 2 classes");
    if (patch_size < 8) fail_invalid("generate_synthetic: patch_size must be >= 8");
    if (per_class_counts.empty()) fail_invalid("generate_synthetic: per-class counts missing");
    if (per_class_counts.size() != 1 && per_class_counts.size() != static_cast<std::size_t>(num_classes))
        fail_invalid("generate_synthetic: per-class counts must have 1 or num_classes entries");
    for (int n : per_class_counts)
        if (n <= 0) fail_invalid("generate_synthetic: per-class counts must be positive");
    if (color_separation < 0 || texture_amplitude < 0 || noise_std < 0)
        fail_invalid("generate_synthetic: magnitudes must be non-negative");
}

std::vector<int> SyntheticSpec::expanded_counts() const
{
    if (per_class_counts.size() == 1) return std::vector<int>(num_classes, per_class_counts[0]);
    return per_class_counts;
}

LabeledDataset generate_synthetic(const SyntheticSpec& spec)
{
    spec.validate();
    const std::vector<int> counts = spec.expanded_counts();

    // Base colors: rejection-sampled inside [0.2, 0.8]^3 until pairwise
    // distances reach the requested separation.
    Rng color_rng = Rng(spec.seed).split(stream::dataset_colors);
    std::vector<std::array<double, 3>> colors;
    colors.reserve(spec.num_classes);
    int attempts = 0;
    while (static_cast<int>(colors.size()) < spec.num_classes) {
        if (++attempts > 100000)
            fail_invalid("generate_synthetic: cannot place " + std::to_string(spec.num_classes) +
                         " class colors with separation " + std::to_string(spec.color_separation));
        std::array<double, 3> candidate = {color_rng.uniform(0.2, 0.8), color_rng.uniform(0.2, 0.8),
                                           color_rng.uniform(0.2, 0.8)};
        bool ok = true;
        for (const auto& other : colors) {
            const double dr = candidate[0] - other[0];
            const double dg = candidate[1] - other[1];
            const double db = candidate[2] - other[2];
            if (std::sqrt(dr * dr + dg * dg + db * db) < spec.color_separation) {
                ok = false;
                break;
            }
        }
        if (ok) colors.push_back(candidate);
    }

    LabeledDataset out;
    out.meta.height = spec.patch_size;
    out.meta.width = spec.patch_size;
    out.meta.seed = spec.seed;
    {
        std::ostringstream gen;
        gen << "synthetic(classes=" << spec.num_classes << ",patch=" << spec.patch_size
            << ",sep=" << spec.color_separation << ",tex=" << spec.texture_amplitude
            << ",noise=" << spec.noise_std << ")";
        out.meta.generator = gen.str();
    }
    for (int k = 0; k < spec.num_classes; ++k) out.class_names.push_back("class_" + std::to_string(k));

    const Rng image_base = Rng(spec.seed).split(stream::dataset_images);
    const int side = spec.patch_size;
    std::uint64_t global_index = 0;
    for (int k = 0; k < spec.num_classes; ++k) {
        const double frequency = k + 1;
        for (int i = 0; i < counts[k]; ++i, ++global_index) {
            Rng rng = image_base.split(global_index);
            const double phase_r = rng.uniform(0.0, kTwoPi);
            const double phase_c = rng.uniform(0.0, kTwoPi);
            ImagePatch img(side, side);
            for (int r = 0; r < side; ++r) {
                for (int c = 0; c < side; ++c) {
                    const double texture = spec.texture_amplitude *
                                           std::sin(kTwoPi * frequency * r / side + phase_r) *
                                           std::sin(kTwoPi * frequency * c / side + phase_c);
                    for (int ch = 0; ch < 3; ++ch) {
                        double v = colors[k][ch] + texture;
                        if (spec.noise_std > 0) v += spec.noise_std * rng.normal();
                        img.at(r, c, ch) = static_cast<float>(std::min(1.0, std::max(0.0, v)));
                    }
                }
            }
            out.images.push_back(std::move(img));
            out.labels.push_back(k);
        }
    }
    return out;
}

SyntheticSpec balanced_benchmark_spec(std::uint64_t seed)
{
    SyntheticSpec spec;
    spec.num_classes = 9;
    spec.per_class_counts = {400};
    spec.patch_size = 16;
    spec.seed = seed;
    return spec;
}

SyntheticSpec imbalanced_benchmark_spec(std::uint64_t seed)
{
    SyntheticSpec spec;
    spec.num_classes = 8;
    // Training sizes fall geometrically 400 -> 8 after an 0.2 test split.
    spec.per_class_counts = {500, 286, 164, 94, 54, 31, 18, 10};
    spec.patch_size = 16;
    spec.seed = seed;
    return spec;
}

void SplitSpec::validate() const
{
    const bool has_counts = !labeled_per_class.empty();
    const bool has_fraction = labeled_fraction_of_majority.has_value();
    if (has_counts == has_fraction)
        fail_invalid("split: set exactly one of labeled_per_class and labeled_fraction_of_majority");
    for (int n : labeled_per_class)
        if (n < 0) fail_invalid("split: labeled_per_class entries must be non-negative");
    if (has_fraction && (*labeled_fraction_of_majority < 0 || *labeled_fraction_of_majority > 1))
        fail_invalid("split: labeled_fraction_of_majority must lie in [0,1]");
    if (keep_all_minority_below.has_value() && *keep_all_minority_below < 0)
        fail_invalid("split: keep_all_minority_below must be non-negative");
    if (validation_fraction < 0 || validation_fraction >= 1)
        fail_invalid("split: validation_fraction must lie in [0,1)");
    if (test_fraction < 0 || test_fraction >= 1)
        fail_invalid("split: test_fraction must lie in [0,1)");
}

SplitResult split_labeled_unlabeled(const LabeledDataset& data, const SplitSpec& spec)
{
    data.validate();
    spec.validate();
    const int num_classes = data.num_classes();
    if (!spec.labeled_per_class.empty() && spec.labeled_per_class.size() != 1 &&
        spec.labeled_per_class.size() != static_cast<std::size_t>(num_classes))
        fail_invalid("split: labeled_per_class must have 1 or num_classes entries");

    std::vector<std::vector<int>> by_class(num_classes);
    for (int i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

    const Rng shuffle_base = Rng(spec.seed).split(stream::split_shuffle);
    std::vector<int> labeled_idx, unlabeled_idx, validation_idx, test_idx;
    std::vector<std::string> deficits;

    int majority_train = 0;
    std::vector<std::vector<int>> train_pools(num_classes);
    for (int k = 0; k < num_classes; ++k) {
        Rng rng = shuffle_base.split(static_cast<std::uint64_t>(k));
        std::vector<int> order = by_class[k];
        rng.shuffle(order);

        const int total = static_cast<int>(order.size());
        const int test_count = static_cast<int>(std::lround(spec.test_fraction * total));
        for (int i = 0; i < test_count; ++i) test_idx.push_back(order[i]);

        const int after_test = total - test_count;
        const int val_count = static_cast<int>(std::lround(spec.validation_fraction * after_test));
        for (int i = 0; i < val_count; ++i) validation_idx.push_back(order[test_count + i]);

        train_pools[k].assign(order.begin() + test_count + val_count, order.end());
        majority_train = std::max(majority_train, static_cast<int>(train_pools[k].size()));
    }

    for (int k = 0; k < num_classes; ++k) {
        const int available = static_cast<int>(train_pools[k].size());
        int want;
        if (!spec.labeled_per_class.empty()) {
            want = spec.labeled_per_class.size() == 1 ? spec.labeled_per_class[0]
                                                      : spec.labeled_per_class[k];
        } else {
            want = static_cast<int>(std::lround(*spec.labeled_fraction_of_majority * available));
        }
        if (spec.keep_all_minority_below.has_value() && available < *spec.keep_all_minority_below)
            want = available;
        if (want > available) {
            deficits.push_back(data.class_names[k] + " (want " + std::to_string(want) + ", have " +
                               std::to_string(available) + ")");
            continue;
        }
        for (int i = 0; i < want; ++i) labeled_idx.push_back(train_pools[k][i]);
        for (int i = want; i < available; ++i) unlabeled_idx.push_back(train_pools[k][i]);
    }

    if (!deficits.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < deficits.size(); ++i)
            joined += (i ? ", " : "") + deficits[i];
        fail_invalid("split: labeled budget infeasible for " + joined);
    }

    std::sort(labeled_idx.begin(), labeled_idx.end());
    std::sort(unlabeled_idx.begin(), unlabeled_idx.end());
    std::sort(validation_idx.begin(), validation_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    auto subset = [&data](const std::vector<int>& idx) {
        LabeledDataset out;
        out.class_names = data.class_names;
        out.meta = data.meta;
        out.images.reserve(idx.size());
        out.labels.reserve(idx.size());
        for (int i : idx) {
            out.images.push_back(data.images[i]);
            out.labels.push_back(data.labels[i]);
        }
        return out;
    };

    SplitResult result;
    result.labeled = subset(labeled_idx);
    result.validation = subset(validation_idx);
    result.test = subset(test_idx);

    std::vector<ImagePatch> unlabeled_images;
    std::vector<int> hidden;
    unlabeled_images.reserve(unlabeled_idx.size());
    for (int i : unlabeled_idx) {
        unlabeled_images.push_back(data.images[i]);
        hidden.push_back(data.labels[i]);
    }
    result.unlabeled = UnlabeledDataset(std::move(unlabeled_images), std::move(hidden));
    return result;
}

PairedBatchIterator::PairedBatchIterator(int labeled_size, int unlabeled_size, int labeled_batch,
                                         int unlabeled_batch, Rng rng)
    : labeled_size_(labeled_size), unlabeled_size_(unlabeled_size),
      labeled_batch_(std::min(labeled_batch, std::max(labeled_size, 1))),
      unlabeled_batch_(unlabeled_batch), rng_(rng)
{
    if (labeled_size == 0 && unlabeled_size == 0)
        fail_invalid("paired_batch_iterator: both datasets are empty");
    if (labeled_batch < 2 || unlabeled_batch < 2)
        fail_invalid("paired_batch_iterator: batch sizes must be >= 2");

    if (unlabeled_size_ > 0) {
        batches_per_epoch_ = (unlabeled_size_ + unlabeled_batch_ - 1) / unlabeled_batch_;
        unlabeled_order_.resize(unlabeled_size_);
        std::iota(unlabeled_order_.begin(), unlabeled_order_.end(), 0);
        rng_.shuffle(unlabeled_order_);
    } else {
        batches_per_epoch_ = (labeled_size_ + labeled_batch_ - 1) / labeled_batch_;
    }
    if (labeled_size_ > 0) {
        labeled_order_.resize(labeled_size_);
        std::iota(labeled_order_.begin(), labeled_order_.end(), 0);
        rng_.shuffle(labeled_order_);
    }
}

bool PairedBatchIterator::next(BatchIndices& out)
{
    if (batch_index_ >= batches_per_epoch_) return false;
    out.labeled.clear();
    out.unlabeled.clear();

    if (unlabeled_size_ > 0) {
        const int start = batch_index_ * unlabeled_batch_;
        const int end = std::min(start + unlabeled_batch_, unlabeled_size_);
        for (int i = start; i < end; ++i) out.unlabeled.push_back(unlabeled_order_[i]);
        if (labeled_size_ > 0) {
            for (int i = 0; i < labeled_batch_; ++i) {
                if (labeled_cursor_ >= labeled_order_.size()) {
                    rng_.shuffle(labeled_order_);
                    labeled_cursor_ = 0;
                }
                out.labeled.push_back(labeled_order_[labeled_cursor_++]);
            }
        }
    } else {
        const int start = batch_index_ * labeled_batch_;
        const int end = std::min(start + labeled_batch_, labeled_size_);
        for (int i = start; i < end; ++i) out.labeled.push_back(labeled_order_[i]);
    }
    ++batch_index_;
    return true;
}

DualViewBatch make_dual_views(const std::vector<ImagePatch>& images,
                              const std::vector<int>& image_indices, const std::vector<int>& labels,
                              const AugmentationPolicy& weak, const AugmentationPolicy& strong,
                              const Rng& base)
{
    if (image_indices.size() != labels.size())
        fail_invalid("make_dual_views: index and label counts differ");
    DualViewBatch batch;
    batch.labels = labels;
    batch.weak_views.reserve(image_indices.size());
    batch.strong_views.reserve(image_indices.size());
    for (int idx : image_indices) {
        if (idx < 0 || idx >= static_cast<int>(images.size()))
            fail_invalid("make_dual_views: image index out of range");
        Rng weak_rng = base.split(2 * static_cast<std::uint64_t>(idx));
        Rng strong_rng = base.split(2 * static_cast<std::uint64_t>(idx) + 1);
        batch.weak_views.push_back(apply_policy(images[idx], weak, weak_rng));
        batch.strong_views.push_back(apply_policy(images[idx], strong, strong_rng));
    }
    return batch;
}

Tensor flatten_images(const std::vector<ImagePatch>& images)
{
    if (images.empty()) fail_invalid("flatten_images: empty batch");
    const std::size_t dim = images[0].size();
    Tensor out = Tensor::zeros({images.size(), dim});
    std::vector<double>& data = out.mutable_data();
    for (std::size_t b = 0; b < images.size(); ++b) {
        if (images[b].size() != dim) fail_invalid("flatten_images: inconsistent image shapes");
        for (std::size_t i = 0; i < dim; ++i) data[b * dim + i] = images[b].pixels[i];
    }
    return out;
}

namespace {

constexpr std::uint32_t kDatasetVersion = 1;

void write_bytes(std::ofstream& out, const void* data, std::size_t n)
{
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const std::string& what)
{
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in) fail(ErrorCode::io, "dataset file truncated while reading " + what);
}

} // namespace

void save_s5ds(const std::string& path, const LabeledDataset& data)
{
    if (data.images.size() != data.labels.size())
        fail_invalid("save dataset: image count does not match label count");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");

    // -1 marks unlabeled rows; anything else must be a valid class id.
    bool labeled = true;
    for (int label : data.labels) {
        if (label < 0) labeled = false;
        if (label < -1 || label >= data.num_classes())
            fail_invalid("save dataset: label " + std::to_string(label) + " out of range");
    }

    nlohmann::json header{{"num_images", data.size()},
                          {"height", data.meta.height},
                          {"width", data.meta.width},
                          {"channels", 3},
                          {"class_names", data.class_names},
                          {"labeled_flag", labeled ? 1 : 0}};
    const std::string header_text = header.dump();

    write_bytes(out, "S5DS", 4);
    const std::uint32_t version = kDatasetVersion;
    write_bytes(out, &version, 4);
    const std::uint32_t header_len = static_cast<std::uint32_t>(header_text.size());
    write_bytes(out, &header_len, 4);
    write_bytes(out, header_text.data(), header_text.size());

    for (int label : data.labels) {
        const std::int32_t v = label;
        write_bytes(out, &v, 4);
    }
    for (const ImagePatch& img : data.images)
        write_bytes(out, img.pixels.data(), img.pixels.size() * sizeof(float));
    if (!out) fail(ErrorCode::io, "failed writing dataset to '" + path + "'");
}

LabeledDataset load_s5ds(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open dataset file '" + path + "'");

    char magic[4];
    read_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, "S5DS", 4) != 0)
        fail(ErrorCode::io, "'" + path + "' is not a dataset file (bad magic)");
    std::uint32_t version = 0;
    read_bytes(in, &version, 4, "version");
    if (version != kDatasetVersion)
        fail(ErrorCode::io, "unsupported dataset version " + std::to_string(version));
    std::uint32_t header_len = 0;
    read_bytes(in, &header_len, 4, "header length");
    std::string header_text(header_len, '\0');
    read_bytes(in, header_text.data(), header_len, "header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const std::exception& e) {
        fail(ErrorCode::io, std::string("malformed dataset header: ") + e.what());
    }

    LabeledDataset data;
    int num_images;
    try {
        num_images = header.at("num_images").get<int>();
        data.meta.height = header.at("height").get<int>();
        data.meta.width = header.at("width").get<int>();
        const int channels = header.at("channels").get<int>();
        if (channels != 3) fail(ErrorCode::io, "dataset must have 3 channels");
        data.class_names = header.at("class_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::io, std::string("dataset header missing field: ") + e.what());
    }
    if (num_images < 0 || data.meta.height <= 0 || data.meta.width <= 0)
        fail(ErrorCode::io, "dataset header has invalid dimensions");

    data.labels.resize(num_images);
    for (int i = 0; i < num_images; ++i) {
        std::int32_t v;
        read_bytes(in, &v, 4, "labels");
        data.labels[i] = v;
    }
    data.images.reserve(num_images);
    for (int i = 0; i < num_images; ++i) {
        ImagePatch img(data.meta.height, data.meta.width);
        read_bytes(in, img.pixels.data(), img.pixels.size() * sizeof(float), "pixels");
        data.images.push_back(std::move(img));
    }
    return data;
}

} // namespace s5cl
