#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "s5cl/dataset.hpp"
#include "s5cl/error.hpp"

using namespace s5cl;

namespace {

SyntheticSpec small_spec(std::uint64_t seed, int per_class = 20, int classes = 4)
{
    SyntheticSpec spec;
    spec.num_classes = classes;
    spec.per_class_counts = {per_class};
    spec.patch_size = 8;
    spec.seed = seed;
    return spec;
}

std::string slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("generator: degenerate spec gives constant class-color images")
{
    SyntheticSpec spec = small_spec(5);
    spec.noise_std = 0.0;
    spec.texture_amplitude = 0.0;
    LabeledDataset data = generate_synthetic(spec);
    REQUIRE(data.size() == 80);

    for (int k = 0; k < spec.num_classes; ++k) {
        // All images of class k share one constant color.
        const ImagePatch* first = nullptr;
        for (int i = 0; i < data.size(); ++i) {
            if (data.labels[i] != k) continue;
            const ImagePatch& img = data.images[i];
            for (int r = 0; r < img.height; ++r)
                for (int c = 0; c < img.width; ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        CHECK(img.at(r, c, ch) == img.at(0, 0, ch));
            if (!first)
                first = &img;
            else
                CHECK(img.pixels == first->pixels);
        }
    }
}

TEST_CASE("generator: identical seeds are bit-identical, different seeds differ")
{
    LabeledDataset a = generate_synthetic(small_spec(9));
    LabeledDataset b = generate_synthetic(small_spec(9));
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) CHECK(a.images[i].pixels == b.images[i].pixels);
    CHECK(a.labels == b.labels);

    LabeledDataset c = generate_synthetic(small_spec(10));
    bool any_diff = false;
    for (int i = 0; i < a.size() && !any_diff; ++i)
        any_diff = a.images[i].pixels != c.images[i].pixels;
    CHECK(any_diff);
}

TEST_CASE("generator: classes are nearest-centroid learnable at separation 0.3")
{
    SyntheticSpec spec;
    spec.num_classes = 9;
    spec.per_class_counts = {60};
    spec.patch_size = 16;
    spec.color_separation = 0.3;
    spec.noise_std = 0.1;
    spec.seed = 123;
    LabeledDataset data = generate_synthetic(spec);

    const std::size_t dim = data.images[0].size();
    std::vector<std::vector<double>> centroids(9, std::vector<double>(dim, 0.0));
    std::vector<int> train_count(9, 0);

    // First 30 per class define the centroid, the rest are scored.
    std::vector<int> seen(9, 0);
    std::vector<int> holdout;
    for (int i = 0; i < data.size(); ++i) {
        const int k = data.labels[i];
        if (seen[k] < 30) {
            for (std::size_t j = 0; j < dim; ++j) centroids[k][j] += data.images[i].pixels[j];
            ++train_count[k];
            ++seen[k];
        } else {
            holdout.push_back(i);
        }
    }
    for (int k = 0; k < 9; ++k)
        for (std::size_t j = 0; j < dim; ++j) centroids[k][j] /= train_count[k];

    int correct = 0;
    for (int i : holdout) {
        int best = -1;
        double best_dist = 1e300;
        for (int k = 0; k < 9; ++k) {
            double dist = 0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = data.images[i].pixels[j] - centroids[k][j];
                dist += d * d;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = k;
            }
        }
        if (best == data.labels[i]) ++correct;
    }
    CHECK(static_cast<double>(correct) / holdout.size() > 0.95);
}

TEST_CASE("generator: infeasible color separation is rejected")
{
    SyntheticSpec spec = small_spec(1, 2, 20);
    spec.color_separation = 0.9; // cannot place 20 colors this far apart in the unit cube
    CHECK_THROWS_AS(generate_synthetic(spec), Error);

    SyntheticSpec bad = small_spec(1);
    bad.num_classes = 1;
    CHECK_THROWS_AS(generate_synthetic(bad), Error);
    bad = small_spec(1);
    bad.patch_size = 4;
    CHECK_THROWS_AS(generate_synthetic(bad), Error);
}

TEST_CASE("benchmark presets have the documented shapes")
{
    LabeledDataset balanced = generate_synthetic(balanced_benchmark_spec(0));
    CHECK(balanced.size() == 9 * 400);
    CHECK(balanced.num_classes() == 9);
    CHECK(balanced.images[0].height == 16);

    SyntheticSpec imbalanced = imbalanced_benchmark_spec(0);
    CHECK(imbalanced.num_classes == 8);
    const std::vector<int> want{500, 286, 164, 94, 54, 31, 18, 10};
    CHECK(imbalanced.expanded_counts() == want);
}

TEST_CASE("split: 5 per class over 9 classes yields exactly 45 labeled")
{
    LabeledDataset data = generate_synthetic(balanced_benchmark_spec(3));
    SplitSpec spec;
    spec.labeled_per_class = {5};
    spec.test_fraction = 0.25;
    spec.seed = 11;
    SplitResult split = split_labeled_unlabeled(data, spec);

    CHECK(split.labeled.size() == 45);
    CHECK(split.test.size() == 900);
    CHECK(split.unlabeled.size() == 3600 - 900 - 45);
    const std::vector<int> counts = split.labeled.class_counts();
    for (int k = 0; k < 9; ++k) CHECK(counts[k] == 5);
}

TEST_CASE("split: full labeled fraction leaves the unlabeled pool empty")
{
    LabeledDataset data = generate_synthetic(small_spec(2, 40));
    SplitSpec spec;
    spec.labeled_per_class = {30}; // 40 - 10 test = 30 available
    spec.test_fraction = 0.25;
    SplitResult split = split_labeled_unlabeled(data, spec);
    CHECK(split.unlabeled.size() == 0);
    CHECK(split.labeled.size() == 120);
}

TEST_CASE("split: result is an exact partition of the dataset")
{
    LabeledDataset data = generate_synthetic(small_spec(7, 24));
    SplitSpec spec;
    spec.labeled_per_class = {4};
    spec.validation_fraction = 0.25;
    spec.test_fraction = 0.25;
    spec.seed = 5;
    SplitResult split = split_labeled_unlabeled(data, spec);

    // 24 per class: 6 test, then 4.5 -> round half to even? lround(0.25*18)=4..5 validation.
    CHECK(split.labeled.size() + split.unlabeled.size() + split.validation.size() +
              split.test.size() ==
          data.size());

    std::map<std::vector<float>, int> counts;
    for (const ImagePatch& img : data.images) counts[img.pixels] += 1;
    auto consume = [&](const std::vector<ImagePatch>& images) {
        for (const ImagePatch& img : images) {
            auto it = counts.find(img.pixels);
            REQUIRE(it != counts.end());
            it->second -= 1;
            CHECK(it->second >= 0);
        }
    };
    consume(split.labeled.images);
    consume(split.unlabeled.images());
    consume(split.validation.images);
    consume(split.test.images);
    for (const auto& [pixels, count] : counts) CHECK(count == 0);
}

TEST_CASE("split: deficits are reported per class")
{
    LabeledDataset data = generate_synthetic(small_spec(4, 10));
    SplitSpec spec;
    spec.labeled_per_class = {9}; // only 10 - 2/3 test available
    spec.test_fraction = 0.25;
    CHECK_THROWS_WITH_AS(split_labeled_unlabeled(data, spec), doctest::Contains("class"), Error);
}

TEST_CASE("split: majority fraction with minority protection")
{
    LabeledDataset data = generate_synthetic(imbalanced_benchmark_spec(2));
    SplitSpec spec;
    spec.labeled_fraction_of_majority = 0.1;
    spec.keep_all_minority_below = 100;
    spec.test_fraction = 0.2;
    spec.seed = 1;
    SplitResult split = split_labeled_unlabeled(data, spec);

    // Train pools after the 20% test cut: 400,229,131,75,43,25,14,8.
    // Large classes contribute 10% of their own pool (preserving the class
    // distribution); classes under the 100-image threshold keep everything.
    const std::vector<int> counts = split.labeled.class_counts();
    CHECK(counts[0] == 40);
    CHECK(counts[1] == 23);
    CHECK(counts[2] == 13);
    CHECK(counts[3] == 75);
    CHECK(counts[4] == 43);
    CHECK(counts[5] == 25);
    CHECK(counts[6] == 14);
    CHECK(counts[7] == 8);
}

TEST_CASE("split spec validation")
{
    SplitSpec both;
    both.labeled_per_class = {5};
    both.labeled_fraction_of_majority = 0.1;
    CHECK_THROWS_AS(both.validate(), Error);

    SplitSpec neither;
    CHECK_THROWS_AS(neither.validate(), Error);

    SplitSpec bad_fraction;
    bad_fraction.labeled_per_class = {5};
    bad_fraction.test_fraction = 1.5;
    CHECK_THROWS_AS(bad_fraction.validate(), Error);
}

TEST_CASE("paired iterator: 256 unlabeled at batch 128 gives two pairs per epoch")
{
    PairedBatchIterator it(45, 256, 32, 128, Rng(1));
    CHECK(it.batches_per_epoch() == 2);
    BatchIndices batch;
    int pairs = 0;
    std::set<int> unlabeled_seen;
    while (it.next(batch)) {
        ++pairs;
        CHECK(batch.labeled.size() == 32);
        CHECK(batch.unlabeled.size() == 128);
        for (int i : batch.unlabeled) unlabeled_seen.insert(i);
    }
    CHECK(pairs == 2);
    CHECK(unlabeled_seen.size() == 256); // every unlabeled image exactly once
}

TEST_CASE("paired iterator: labeled loader wraps with full coverage per cycle")
{
    const int labeled_size = 45, labeled_batch = 32;
    PairedBatchIterator it(labeled_size, 1000, labeled_batch, 100, Rng(2));
    CHECK(it.batches_per_epoch() == 10);
    std::vector<int> seen(labeled_size, 0);
    BatchIndices batch;
    int draws = 0;
    while (it.next(batch)) {
        for (int i : batch.labeled) {
            REQUIRE(i >= 0);
            REQUIRE(i < labeled_size);
            seen[i] += 1;
        }
        draws += static_cast<int>(batch.labeled.size());
    }
    CHECK(draws == 10 * labeled_batch);
    // 320 draws over 45 images: everything appears at least floor(320/45) - 1 times.
    for (int count : seen) CHECK(count >= 6);
}

TEST_CASE("paired iterator: degrades to labeled-only passes and validates inputs")
{
    PairedBatchIterator it(10, 0, 4, 8, Rng(3));
    CHECK(it.batches_per_epoch() == 3); // ceil(10/4)
    BatchIndices batch;
    std::set<int> seen;
    int batches = 0;
    while (it.next(batch)) {
        ++batches;
        CHECK(batch.unlabeled.empty());
        for (int i : batch.labeled) seen.insert(i);
    }
    CHECK(batches == 3);
    CHECK(seen.size() == 10);

    CHECK_THROWS_AS(PairedBatchIterator(0, 0, 4, 8, Rng(1)), Error);
    CHECK_THROWS_AS(PairedBatchIterator(10, 0, 1, 8, Rng(1)), Error);
}

TEST_CASE("dual views: identity policies reproduce the originals")
{
    LabeledDataset data = generate_synthetic(small_spec(6, 5));
    AugmentationPolicy identity;
    identity.color_jitter_magnitude = 0.0;
    identity.flip_probability = 0.0;
    identity.enable_rotation = false;

    std::vector<int> indices{0, 3, 7};
    std::vector<int> labels{data.labels[0], data.labels[3], data.labels[7]};
    DualViewBatch views = make_dual_views(data.images, indices, labels, identity, identity, Rng(4));
    REQUIRE(views.weak_views.size() == 3);
    CHECK(views.labels == labels);
    for (std::size_t i = 0; i < 3; ++i) {
        const ImagePatch& original = data.images[indices[i]];
        for (std::size_t p = 0; p < original.size(); ++p) {
            CHECK(std::abs(views.weak_views[i].pixels[p] - original.pixels[p]) < 1e-6);
            CHECK(std::abs(views.strong_views[i].pixels[p] - original.pixels[p]) < 1e-6);
        }
    }
}

TEST_CASE("dual views: augmentation depends on the image index, not the batch")
{
    LabeledDataset data = generate_synthetic(small_spec(8, 6));
    AugmentationPolicy weak = AugmentationPolicy::weak_default();
    AugmentationPolicy strong = AugmentationPolicy::strong_default();
    const Rng base(77);

    DualViewBatch alone = make_dual_views(data.images, {5}, {0}, weak, strong, base);
    DualViewBatch grouped = make_dual_views(data.images, {2, 5, 9}, {0, 0, 0}, weak, strong, base);
    CHECK(alone.weak_views[0].pixels == grouped.weak_views[1].pixels);
    CHECK(alone.strong_views[0].pixels == grouped.strong_views[1].pixels);

    // And bit-exact across repeated calls.
    DualViewBatch again = make_dual_views(data.images, {5}, {0}, weak, strong, base);
    CHECK(alone.weak_views[0].pixels == again.weak_views[0].pixels);
    CHECK(alone.strong_views[0].pixels == again.strong_views[0].pixels);
}

TEST_CASE("unlabeled dataset counts every ground-truth access")
{
    UnlabeledDataset hidden({ImagePatch(2, 2), ImagePatch(2, 2)}, {1, 0});
    const std::uint64_t before = UnlabeledDataset::audit_access_count();
    (void)hidden.images(); // image access is free
    CHECK(UnlabeledDataset::audit_access_count() == before);
    const std::vector<int>& labels = hidden.audit_labels();
    CHECK(labels == std::vector<int>{1, 0});
    CHECK(UnlabeledDataset::audit_access_count() == before + 1);
}

TEST_CASE("flatten_images: row-major layout and double widening")
{
    ImagePatch a(1, 2);
    a.at(0, 0, 0) = 0.25f;
    a.at(0, 1, 2) = 0.75f;
    Tensor t = flatten_images({a, a});
    CHECK(t.shape() == std::vector<std::size_t>{2, 6});
    CHECK(t.at(0) == 0.25);
    CHECK(t.at(5) == 0.75);
    CHECK(t.at(6) == 0.25);
}

TEST_CASE("s5ds container round-trips bit-exactly and rejects corruption")
{
    LabeledDataset data = generate_synthetic(small_spec(13, 6));
    const std::string path1 = "test_roundtrip_a.s5ds";
    const std::string path2 = "test_roundtrip_b.s5ds";

    save_s5ds(path1, data);
    LabeledDataset loaded = load_s5ds(path1);
    REQUIRE(loaded.size() == data.size());
    CHECK(loaded.labels == data.labels);
    CHECK(loaded.class_names == data.class_names);
    for (int i = 0; i < data.size(); ++i) CHECK(loaded.images[i].pixels == data.images[i].pixels);

    // Saving the loaded dataset again produces byte-identical files.
    save_s5ds(path2, loaded);
    CHECK(slurp(path1) == slurp(path2));

    // Unlabeled entries (-1) survive the trip.
    LabeledDataset mixed = data;
    mixed.labels[0] = -1;
    save_s5ds(path1, mixed);
    CHECK(load_s5ds(path1).labels[0] == -1);

    // Corruption and absence are reported as errors.
    CHECK_THROWS_AS(load_s5ds("does_not_exist.s5ds"), Error);
    {
        std::ofstream out(path2, std::ios::binary | std::ios::trunc);
        out << "BOGUS";
    }
    CHECK_THROWS_AS(load_s5ds(path2), Error);
    {
        const std::string full = slurp(path1);
        std::ofstream out(path2, std::ios::binary | std::ios::trunc);
        out.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
    }
    CHECK_THROWS_AS(load_s5ds(path2), Error);

    std::remove(path1.c_str());
    std::remove(path2.c_str());
}
