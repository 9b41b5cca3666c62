#include "s5cl/runner.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "s5cl/config.hpp"
#include "s5cl/dataset.hpp"
#include "s5cl/error.hpp"
#include "s5cl/evaluator.hpp"
#include "s5cl/trainer.hpp"

namespace fs = std::filesystem;

namespace s5cl {

namespace {

std::string format_double(double v)
{
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), v);
    return std::string(buffer, result.ptr);
}

void write_text_file(const fs::path& path, const std::string& content)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) fail(ErrorCode::io, "failed writing '" + path.string() + "'");
}

double median_of(std::vector<double> values)
{
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ConfigMap config_with_overrides(const std::string& config_text, const RunOptions& options)
{
    ConfigMap map = parse_config_text(config_text);
    if (options.seed.has_value()) map["seed"] = std::to_string(*options.seed);
    if (!options.out_dir.empty()) map["out"] = options.out_dir;
    return map;
}

LabeledDataset load_or_generate(const ExperimentConfig& config)
{
    if (config.dataset.source == "file") return load_s5ds(config.dataset.path);
    return generate_synthetic(config.dataset.synthetic);
}

// The encoder width and classifier head are tied to the data at run time; the
// config file never states them explicitly.
void bind_model_to_data(TrainConfig& train, const LabeledDataset& dataset)
{
    if (dataset.images.empty()) fail_invalid("dataset has no images");
    train.model.input_dim = dataset.images[0].size();
    train.model.num_classes = dataset.class_names.size();
}

struct TestMetricsFiles {
    MetricsReport report;
    bool present = false;
};

// Scores the test split and writes metrics.json / confusion.csv /
// embeddings.csv next to the other run artifacts.
TestMetricsFiles write_test_reports(S5CLModel& model, const LabeledDataset& test,
                                    const ExperimentConfig& config, const fs::path& dir,
                                    const std::optional<ClassificationReport>& precomputed)
{
    TestMetricsFiles out;
    if (test.size() == 0) return out;

    if (precomputed.has_value()) {
        out.report.classification = *precomputed;
    } else {
        const PredictionResult predicted = predict_dataset(model, test);
        out.report.classification =
            classification_metrics(predicted.predictions, test.labels,
                                   static_cast<int>(test.class_names.size()));
    }

    EmbeddingSet set =
        build_embedding_set(model, test, config.eval.per_class_cap, config.eval.augmented_views,
                            config.train.weak_aug, config.train.strong_aug, config.seed);
    out.report.map_at_r = map_at_r(set);
    if (config.eval.augmented_views > 0) out.report.hierarchy = hierarchy_report(set);

    write_text_file(dir / "metrics.json", metrics_to_json(out.report, test.class_names));
    write_text_file(dir / "confusion.csv",
                    confusion_to_csv(out.report.classification, test.class_names));
    if (config.eval.write_embeddings)
        write_text_file(dir / "embeddings.csv", embedding_set_to_csv(set));
    out.present = true;
    return out;
}

nlohmann::json test_summary_json(const TestMetricsFiles& metrics)
{
    if (!metrics.present) return nullptr;
    nlohmann::json j;
    j["accuracy"] = metrics.report.classification.accuracy;
    j["macro_f1"] = metrics.report.classification.macro_f1;
    if (metrics.report.map_at_r.has_value()) {
        j["map_at_r"] = metrics.report.map_at_r->value;
        j["map_at_r_skipped_queries"] = metrics.report.map_at_r->skipped_queries;
    }
    if (metrics.report.hierarchy.has_value()) {
        j["hierarchy"] = {{"s_own_median", metrics.report.hierarchy->s_own_median},
                          {"s_pos_median", metrics.report.hierarchy->s_pos_median},
                          {"s_neg_median", metrics.report.hierarchy->s_neg_median},
                          {"ordering_fraction", metrics.report.hierarchy->ordering_fraction}};
    }
    return j;
}

struct TrainArtifacts {
    std::string summary;
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    double macro_f1 = std::numeric_limits<double>::quiet_NaN();
    double map_at_r = std::numeric_limits<double>::quiet_NaN();
};

TrainArtifacts train_into_dir(const ConfigMap& map)
{
    ExperimentConfig config = materialize_config(map);
    const fs::path dir(config.out_dir);
    fs::create_directories(dir);

    const LabeledDataset dataset = load_or_generate(config);
    SplitResult split = split_labeled_unlabeled(dataset, config.split);
    TrainConfig train = config.train;
    bind_model_to_data(train, dataset);

    TrainOutput result =
        run_training(train, split.labeled, split.unlabeled, split.validation, split.test);

    write_text_file(dir / "effective_config.ini", serialize_config(effective_config(config)));
    write_text_file(dir / "run_record.json", run_record_to_json(result.record));
    save_checkpoint((dir / "model.s5ck").string(), result.model, dataset.class_names);

    const TestMetricsFiles metrics =
        write_test_reports(result.model, split.test, config, dir, result.record.test);

    nlohmann::json summary;
    summary["command"] = "train";
    summary["out_dir"] = dir.string();
    summary["seed"] = config.seed;
    summary["mode"] = to_string(config.train.mode);
    summary["epochs_run"] = result.record.epochs.size();
    summary["best_epoch"] = result.record.best_epoch;
    summary["early_stopped"] = result.record.early_stopped;
    summary["wall_clock_seconds"] = result.record.wall_clock_seconds;
    summary["split"] = {{"labeled", split.labeled.size()},
                        {"unlabeled", split.unlabeled.size()},
                        {"validation", split.validation.size()},
                        {"test", split.test.size()}};
    if (result.record.pseudo_label_audit_accuracy.has_value())
        summary["pseudo_label_audit_accuracy"] = *result.record.pseudo_label_audit_accuracy;
    summary["hidden_label_reads_during_training"] = result.record.hidden_label_reads_during_training;
    summary["test"] = test_summary_json(metrics);
    summary["artifacts"] = {{"run_record", (dir / "run_record.json").string()},
                            {"checkpoint", (dir / "model.s5ck").string()},
                            {"effective_config", (dir / "effective_config.ini").string()}};
    if (metrics.present) {
        summary["artifacts"]["metrics"] = (dir / "metrics.json").string();
        summary["artifacts"]["confusion"] = (dir / "confusion.csv").string();
        if (config.eval.write_embeddings)
            summary["artifacts"]["embeddings"] = (dir / "embeddings.csv").string();
    }

    TrainArtifacts artifacts;
    artifacts.summary = summary.dump(2) + "\n";
    if (metrics.present) {
        artifacts.accuracy = metrics.report.classification.accuracy;
        artifacts.macro_f1 = metrics.report.classification.macro_f1;
        if (metrics.report.map_at_r.has_value()) artifacts.map_at_r = metrics.report.map_at_r->value;
    }
    return artifacts;
}

} // namespace

std::string run_generate(const std::string& config_text, const RunOptions& options)
{
    const ConfigMap map = config_with_overrides(config_text, options);
    ExperimentConfig config = materialize_config(map);
    if (config.dataset.source != "synthetic")
        fail_invalid("generate requires dataset.source = synthetic");

    const fs::path dir(config.out_dir);
    fs::create_directories(dir);

    const LabeledDataset dataset = generate_synthetic(config.dataset.synthetic);
    const fs::path data_path = dir / "dataset.s5ds";
    save_s5ds(data_path.string(), dataset);

    nlohmann::json meta;
    meta["num_images"] = dataset.size();
    meta["height"] = dataset.meta.height;
    meta["width"] = dataset.meta.width;
    meta["channels"] = 3;
    meta["num_classes"] = dataset.num_classes();
    meta["class_names"] = dataset.class_names;
    meta["class_counts"] = dataset.class_counts();
    meta["seed"] = dataset.meta.seed;
    meta["generator"] = dataset.meta.generator;
    write_text_file(dir / "dataset_meta.json", meta.dump(2) + "\n");
    write_text_file(dir / "effective_config.ini", serialize_config(effective_config(config)));

    nlohmann::json summary;
    summary["command"] = "generate";
    summary["out_dir"] = dir.string();
    summary["dataset"] = {{"path", data_path.string()},
                          {"meta", (dir / "dataset_meta.json").string()},
                          {"num_images", dataset.size()},
                          {"num_classes", dataset.num_classes()},
                          {"height", dataset.meta.height},
                          {"width", dataset.meta.width}};
    return summary.dump(2) + "\n";
}

std::string run_train(const std::string& config_text, const RunOptions& options)
{
    return train_into_dir(config_with_overrides(config_text, options)).summary;
}

std::string run_evaluate(const std::string& config_text, const RunOptions& options)
{
    const ConfigMap map = config_with_overrides(config_text, options);
    ExperimentConfig config = materialize_config(map);
    if (config.eval.checkpoint.empty())
        fail_invalid("evaluate requires evaluate.checkpoint to point at a model.s5ck file");

    const fs::path dir(config.out_dir);
    fs::create_directories(dir);

    Checkpoint checkpoint = load_checkpoint(config.eval.checkpoint);
    const LabeledDataset dataset = load_or_generate(config);
    SplitResult split = split_labeled_unlabeled(dataset, config.split);
    if (split.test.size() == 0)
        fail_invalid("evaluate: the configured split has an empty test set");

    const std::size_t pixel_dim = dataset.images[0].size();
    if (checkpoint.model.config().input_dim != pixel_dim)
        fail_invalid("evaluate: checkpoint expects input_dim " +
                     std::to_string(checkpoint.model.config().input_dim) +
                     " but the dataset provides " + std::to_string(pixel_dim));
    if (checkpoint.model.config().num_classes != dataset.class_names.size())
        fail_invalid("evaluate: checkpoint has " +
                     std::to_string(checkpoint.model.config().num_classes) +
                     " classes but the dataset has " + std::to_string(dataset.class_names.size()));

    const TestMetricsFiles metrics =
        write_test_reports(checkpoint.model, split.test, config, dir, std::nullopt);

    nlohmann::json summary;
    summary["command"] = "evaluate";
    summary["out_dir"] = dir.string();
    summary["checkpoint"] = config.eval.checkpoint;
    summary["test_size"] = split.test.size();
    summary["test"] = test_summary_json(metrics);
    summary["artifacts"] = {{"metrics", (dir / "metrics.json").string()},
                            {"confusion", (dir / "confusion.csv").string()}};
    if (config.eval.write_embeddings)
        summary["artifacts"]["embeddings"] = (dir / "embeddings.csv").string();
    return summary.dump(2) + "\n";
}

std::string run_sweep(const std::string& config_text, const RunOptions& options)
{
    const ConfigMap base = config_with_overrides(config_text, options);
    ExperimentConfig config = materialize_config(base);
    const std::vector<ConfigMap> grid = expand_sweep(base, config.sweep);
    const std::vector<std::uint64_t>& seeds = config.sweep.seeds;

    int jobs = std::max(1, options.jobs);
    const char* deterministic = std::getenv("S5CL_DETERMINISTIC");
    if (deterministic && std::string(deterministic) == "1") jobs = 1;

    const fs::path dir(config.out_dir);
    fs::create_directories(dir);

    struct Row {
        std::vector<std::string> axis_values;
        std::uint64_t seed = 0;
        std::string run_dir;
        double accuracy = 0, macro_f1 = 0, map_at_r = 0;
    };
    const std::size_t total = grid.size() * seeds.size();
    std::vector<Row> rows(total);

    auto execute = [&](std::size_t index) {
        const std::size_t combo = index / seeds.size();
        const std::size_t seed_slot = index % seeds.size();
        ConfigMap point = grid[combo];
        char name[16];
        std::snprintf(name, sizeof(name), "run_%03zu", index);
        const fs::path run_dir = dir / name;
        point["seed"] = std::to_string(seeds[seed_slot]);
        point["out"] = run_dir.string();
        const TrainArtifacts artifacts = train_into_dir(point);

        Row& row = rows[index];
        for (const SweepAxis& axis : config.sweep.axes) row.axis_values.push_back(point[axis.key]);
        row.seed = seeds[seed_slot];
        row.run_dir = name;
        row.accuracy = artifacts.accuracy;
        row.macro_f1 = artifacts.macro_f1;
        row.map_at_r = artifacts.map_at_r;
    };

    if (jobs == 1) {
        for (std::size_t i = 0; i < total; ++i) execute(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error = nullptr;
        std::mutex error_mutex;
        auto worker = [&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= total) return;
                try {
                    execute(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        const std::size_t workers = std::min(static_cast<std::size_t>(jobs), total);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    // Median over seeds, repeated on every row of the same combination.
    std::vector<std::array<double, 3>> medians(grid.size());
    for (std::size_t combo = 0; combo < grid.size(); ++combo) {
        std::vector<double> acc, f1, map;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const Row& row = rows[combo * seeds.size() + s];
            acc.push_back(row.accuracy);
            f1.push_back(row.macro_f1);
            map.push_back(row.map_at_r);
        }
        medians[combo] = {median_of(acc), median_of(f1), median_of(map)};
    }

    std::ostringstream csv;
    csv << "run";
    for (const SweepAxis& axis : config.sweep.axes) csv << "," << axis.key;
    csv << ",seed,test_accuracy,test_macro_f1,test_map_at_r"
        << ",median_test_accuracy,median_test_macro_f1,median_test_map_at_r\n";
    for (std::size_t i = 0; i < total; ++i) {
        const Row& row = rows[i];
        const auto& med = medians[i / seeds.size()];
        csv << row.run_dir;
        for (const std::string& value : row.axis_values) csv << "," << value;
        csv << "," << row.seed << "," << format_double(row.accuracy) << ","
            << format_double(row.macro_f1) << "," << format_double(row.map_at_r) << ","
            << format_double(med[0]) << "," << format_double(med[1]) << "," << format_double(med[2])
            << "\n";
    }
    const fs::path csv_path = dir / "sweep_results.csv";
    write_text_file(csv_path, csv.str());

    nlohmann::json summary;
    summary["command"] = "sweep";
    summary["out_dir"] = dir.string();
    summary["combinations"] = grid.size();
    summary["seeds"] = seeds;
    summary["runs"] = total;
    summary["jobs"] = jobs;
    summary["results_csv"] = csv_path.string();
    nlohmann::json combos = nlohmann::json::array();
    for (std::size_t combo = 0; combo < grid.size(); ++combo) {
        nlohmann::json entry;
        for (const SweepAxis& axis : config.sweep.axes)
            entry["axes"][axis.key] = grid[combo].at(axis.key);
        entry["median_test_accuracy"] = medians[combo][0];
        entry["median_test_macro_f1"] = medians[combo][1];
        entry["median_test_map_at_r"] = medians[combo][2];
        nlohmann::json runs = nlohmann::json::array();
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const Row& row = rows[combo * seeds.size() + s];
            runs.push_back({{"run", row.run_dir},
                            {"seed", row.seed},
                            {"test_accuracy", row.accuracy},
                            {"test_macro_f1", row.macro_f1},
                            {"test_map_at_r", row.map_at_r}});
        }
        entry["runs"] = runs;
        combos.push_back(entry);
    }
    summary["results"] = combos;
    return summary.dump(2) + "\n";
}

} // namespace s5cl
