#include "s5cl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "s5cl/error.hpp"

namespace s5cl {

TrainMode train_mode_from_string(const std::string& name)
{
    if (name == "cross_entropy") return TrainMode::cross_entropy;
    if (name == "supcon") return TrainMode::supcon;
    if (name == "s1cl") return TrainMode::s1cl;
    if (name == "s3cl") return TrainMode::s3cl;
    if (name == "s5cl") return TrainMode::s5cl;
    if (name == "self_supervised") return TrainMode::self_supervised;
    fail_invalid("unknown training mode '" + name +
                 "' (expected cross_entropy, supcon, s1cl, s3cl, s5cl, or self_supervised)");
}

const char* to_string(TrainMode mode)
{
    switch (mode) {
    case TrainMode::cross_entropy: return "cross_entropy";
    case TrainMode::supcon: return "supcon";
    case TrainMode::s1cl: return "s1cl";
    case TrainMode::s3cl: return "s3cl";
    case TrainMode::s5cl: return "s5cl";
    default: return "self_supervised";
    }
}

ModePreset mode_presets(TrainMode mode)
{
    ModePreset p;
    switch (mode) {
    case TrainMode::cross_entropy:
        p.w_cross_entropy = 1.0;
        break;
    case TrainMode::supcon:
        p.w_labeled = 1.0;
        p.w_cross_entropy = 1.0;
        break;
    case TrainMode::s1cl:
        p.w_labeled = 1.0;
        p.w_cross_entropy = 1.0;
        p.dual_view_labeled = true;
        break;
    case TrainMode::s3cl:
        p.w_labeled = 1.0;
        p.w_cross_entropy = 1.0;
        p.w_unlabeled = 1.0;
        p.dual_view_labeled = true;
        break;
    case TrainMode::s5cl:
        p.w_labeled = 1.0;
        p.w_cross_entropy = 1.0;
        p.w_unlabeled = 1.0;
        p.w_pseudo = 1.0;
        p.dual_view_labeled = true;
        p.finite_pseudo_start = true;
        break;
    case TrainMode::self_supervised:
        p.w_unlabeled = 1.0;
        break;
    }
    return p;
}

void TrainConfig::validate() const
{
    s5cl::validate(model);
    effective_loss(); // validates temperatures against mode weights
    if (epochs < 0) fail_invalid("train config: epochs must be non-negative");
    if (labeled_batch < 2 || unlabeled_batch < 2)
        fail_invalid("train config: batch sizes must be >= 2");
    if (early_stopping_patience.has_value() && *early_stopping_patience < 1)
        fail_invalid("train config: early_stopping_patience must be >= 1");
    weak_aug.validate();
    strong_aug.validate();
}

LossConfig TrainConfig::effective_loss() const
{
    const ModePreset preset = mode_presets(mode);
    LossConfig effective = loss;
    effective.w_labeled = preset.w_labeled;
    effective.w_unlabeled = preset.w_unlabeled;
    effective.w_pseudo = preset.w_pseudo;
    effective.w_cross_entropy = preset.w_cross_entropy;
    if (preset.finite_pseudo_start) {
        if (loss.pseudo_start_epoch == kNeverPseudo)
            fail_invalid("train config: s5cl needs a finite pseudo_start_epoch");
    } else {
        effective.pseudo_start_epoch = kNeverPseudo;
    }
    s5cl::validate(effective);
    return effective;
}

bool TrainConfig::needs_unlabeled() const
{
    return mode == TrainMode::s3cl || mode == TrainMode::s5cl ||
           mode == TrainMode::self_supervised;
}

bool TrainConfig::needs_labeled() const { return mode != TrainMode::self_supervised; }

TrainStepResult train_step(S5CLModel& model, OptimizerState& optimizer_state,
                           const DualViewBatch& labeled, const DualViewBatch* unlabeled,
                           const TrainConfig& config, const LossConfig& loss_config,
                           TrainSchedule& schedule)
{
    if (!model.train_mode()) fail_invalid("train_step: model must be in train mode");
    const ModePreset preset = mode_presets(config.mode);
    const int epoch = schedule.epoch;
    const bool unlabeled_present = unlabeled != nullptr && !unlabeled->weak_views.empty();
    const bool want_self_supervised =
        loss_config.w_unlabeled > 0 && epoch < loss_config.pseudo_start_epoch && unlabeled_present;
    const bool want_pseudo =
        loss_config.w_pseudo > 0 && epoch >= loss_config.pseudo_start_epoch && unlabeled_present;
    const bool labeled_present = !labeled.weak_views.empty();

    Tape tape;
    Tape::Scope scope(&tape);

    TotalLossInputs inputs;
    TrainStepResult result;

    if (labeled_present && (loss_config.w_labeled > 0 || loss_config.w_cross_entropy > 0)) {
        const std::size_t batch = labeled.weak_views.size();
        Tensor weak = flatten_images(labeled.weak_views);
        Tensor embedded;
        if (preset.dual_view_labeled) {
            // One forward over both views so normalization sees the full 2B batch.
            embedded = model.embed(concat_rows(weak, flatten_images(labeled.strong_views)));
        } else {
            embedded = model.embed(weak);
        }

        if (loss_config.w_labeled > 0) {
            ContrastiveBatch contrastive;
            contrastive.embeddings = embedded;
            contrastive.labels = labeled.labels;
            if (preset.dual_view_labeled)
                contrastive.labels.insert(contrastive.labels.end(), labeled.labels.begin(),
                                          labeled.labels.end());
            inputs.labeled = supcon_loss(contrastive, loss_config.t_labeled).loss;
        }
        if (loss_config.w_cross_entropy > 0) {
            // Only the weak view feeds the classifier.
            Tensor weak_embedded =
                preset.dual_view_labeled ? slice_rows(embedded, 0, batch) : embedded;
            inputs.cross_entropy =
                cross_entropy_loss(model.classify(weak_embedded), labeled.labels);
        }
    }

    if (want_self_supervised || want_pseudo) {
        const std::size_t batch = unlabeled->weak_views.size();
        Tensor embedded = model.embed(concat_rows(flatten_images(unlabeled->weak_views),
                                                  flatten_images(unlabeled->strong_views)));
        Tensor weak_embedded = slice_rows(embedded, 0, batch);
        Tensor strong_embedded = slice_rows(embedded, batch, batch);
        if (want_self_supervised) {
            inputs.unlabeled =
                self_supervised_loss(weak_embedded, strong_embedded, loss_config.t_unlabeled);
        } else {
            {
                Tape::Pause no_grad;
                result.pseudo_labels =
                    generate_pseudo_labels(model.classify(weak_embedded.detach()));
            }
            inputs.pseudo = pseudo_labeled_loss(
                weak_embedded, strong_embedded, result.pseudo_labels,
                static_cast<int>(model.config().num_classes), loss_config.t_pseudo);
        }
    }

    TotalLossResult combined = total_loss(inputs, loss_config, epoch);
    result.losses = combined.breakdown;

    const bool any_active = combined.breakdown.labeled_active ||
                            combined.breakdown.unlabeled_active ||
                            combined.breakdown.pseudo_active ||
                            combined.breakdown.cross_entropy_active;
    if (any_active) {
        GradientStore grads = tape.backward(combined.total);
        std::vector<NamedTensor> params = model.parameters();
        optimizer_step(config.optimizer, optimizer_state, params, grads);
    }
    schedule.step += 1;
    return result;
}

namespace {

double early_stop_value(const ClassificationReport& report, EarlyStopMetric metric)
{
    return metric == EarlyStopMetric::macro_f1 ? report.macro_f1 : report.accuracy;
}

} // namespace

TrainOutput run_training(const TrainConfig& config, const LabeledDataset& labeled,
                         const UnlabeledDataset& unlabeled, const LabeledDataset& validation,
                         const LabeledDataset& test)
{
    config.validate();
    const LossConfig loss_config = config.effective_loss();

    if (config.needs_labeled() && labeled.size() == 0)
        fail_invalid(std::string("run_training: mode ") + to_string(config.mode) +
                     " requires labeled data");
    if (config.needs_unlabeled() && unlabeled.size() == 0)
        fail_invalid(std::string("run_training: mode ") + to_string(config.mode) +
                     " requires unlabeled data");
    if (labeled.size() > 0) labeled.validate();

    const std::size_t pixel_dim = labeled.size() > 0
                                      ? labeled.images[0].size()
                                      : unlabeled.images()[0].size();
    if (config.model.input_dim != pixel_dim)
        fail_invalid("run_training: model input_dim " + std::to_string(config.model.input_dim) +
                     " does not match image size " + std::to_string(pixel_dim));
    if (labeled.size() > 0 && config.model.num_classes != static_cast<std::size_t>(labeled.num_classes()))
        fail_invalid("run_training: model num_classes " + std::to_string(config.model.num_classes) +
                     " does not match dataset classes " + std::to_string(labeled.num_classes()));

    const auto start_time = std::chrono::steady_clock::now();
    const std::uint64_t audit_reads_before = UnlabeledDataset::audit_access_count();

    const Rng base(config.seed);
    Rng init_rng = base.split(stream::model_init);
    S5CLModel model = S5CLModel::init(config.model, init_rng);
    OptimizerState optimizer_state;
    {
        std::vector<NamedTensor> params = model.parameters();
        optimizer_state = zero_like_state(params);
    }

    RunRecord record;
    TrainSchedule schedule;
    schedule.pseudo_start = loss_config.pseudo_start_epoch;

    std::vector<int> last_pseudo(unlabeled.size(), -1);
    bool any_pseudo = false;

    std::optional<S5CLModel> best_model;
    double best_value = -1.0;
    int epochs_since_best = 0;

    const Rng epoch_root = base.split(stream::epoch_base);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        schedule.epoch = epoch;
        const Rng epoch_rng = epoch_root.split(static_cast<std::uint64_t>(epoch));

        model.set_train_mode(true);
        PairedBatchIterator iterator(labeled.size(), unlabeled.size(), config.labeled_batch,
                                     config.unlabeled_batch, epoch_rng.split(0));
        const Rng labeled_aug_rng = epoch_rng.split(1);
        const Rng unlabeled_aug_rng = epoch_rng.split(2);

        EpochRecord epoch_record;
        LossBreakdown sums;
        BatchIndices batch;
        while (iterator.next(batch)) {
            DualViewBatch labeled_views;
            if (!batch.labeled.empty()) {
                std::vector<int> batch_labels;
                batch_labels.reserve(batch.labeled.size());
                for (int idx : batch.labeled) batch_labels.push_back(labeled.labels[idx]);
                labeled_views = make_dual_views(labeled.images, batch.labeled, batch_labels,
                                                config.weak_aug, config.strong_aug, labeled_aug_rng);
            }
            DualViewBatch unlabeled_views;
            if (!batch.unlabeled.empty()) {
                unlabeled_views =
                    make_dual_views(unlabeled.images(), batch.unlabeled, batch.unlabeled,
                                    config.weak_aug, config.strong_aug, unlabeled_aug_rng);
            }

            TrainStepResult step = train_step(model, optimizer_state, labeled_views,
                                              batch.unlabeled.empty() ? nullptr : &unlabeled_views,
                                              config, loss_config, schedule);

            sums.l_labeled += step.losses.l_labeled;
            sums.l_unlabeled += step.losses.l_unlabeled;
            sums.l_pseudo += step.losses.l_pseudo;
            sums.l_cross_entropy += step.losses.l_cross_entropy;
            sums.l_total += step.losses.l_total;
            epoch_record.steps += 1;
            if (step.losses.unlabeled_active) epoch_record.unlabeled_loss_steps += 1;
            if (step.losses.pseudo_active) {
                epoch_record.pseudo_loss_steps += 1;
                any_pseudo = true;
                for (std::size_t i = 0; i < batch.unlabeled.size(); ++i)
                    last_pseudo[batch.unlabeled[i]] = step.pseudo_labels[i];
            }
        }
        if (epoch_record.steps > 0) {
            const double n = epoch_record.steps;
            epoch_record.mean_losses.l_labeled = sums.l_labeled / n;
            epoch_record.mean_losses.l_unlabeled = sums.l_unlabeled / n;
            epoch_record.mean_losses.l_pseudo = sums.l_pseudo / n;
            epoch_record.mean_losses.l_cross_entropy = sums.l_cross_entropy / n;
            epoch_record.mean_losses.l_total = sums.l_total / n;
        }

        if (validation.size() > 0) {
            PredictionResult predicted = predict_dataset(model, validation);
            epoch_record.validation = classification_metrics(predicted.predictions,
                                                             validation.labels,
                                                             validation.num_classes());
            const double value = early_stop_value(*epoch_record.validation,
                                                  config.early_stop_metric);
            if (value > best_value) {
                best_value = value;
                record.best_epoch = epoch;
                epochs_since_best = 0;
                if (config.early_stopping_patience.has_value()) best_model = model.clone();
            } else {
                epochs_since_best += 1;
            }
        }
        record.epochs.push_back(std::move(epoch_record));

        if (config.early_stopping_patience.has_value() && validation.size() > 0 &&
            epochs_since_best >= *config.early_stopping_patience) {
            record.early_stopped = true;
            break;
        }
    }

    if (best_model.has_value()) model = std::move(*best_model);
    model.set_train_mode(false);

    record.hidden_label_reads_during_training =
        UnlabeledDataset::audit_access_count() - audit_reads_before;

    if (test.size() > 0) {
        PredictionResult predicted = predict_dataset(model, test);
        record.test =
            classification_metrics(predicted.predictions, test.labels, test.num_classes());
    }

    // Pseudo-label quality audit: compares the labels actually used in
    // training against the hidden ground truth, strictly after the loop.
    if (any_pseudo) {
        const std::vector<int>& truth = unlabeled.audit_labels();
        int correct = 0, assigned = 0;
        for (std::size_t i = 0; i < last_pseudo.size(); ++i) {
            if (last_pseudo[i] < 0) continue;
            ++assigned;
            if (last_pseudo[i] == truth[i]) ++correct;
        }
        if (assigned > 0)
            record.pseudo_label_audit_accuracy = static_cast<double>(correct) / assigned;
    }

    record.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();

    TrainOutput output{std::move(model), std::move(record)};
    return output;
}

namespace {

nlohmann::json classification_to_json(const ClassificationReport& report)
{
    return {{"accuracy", report.accuracy},
            {"macro_f1", report.macro_f1},
            {"precision", report.precision},
            {"recall", report.recall},
            {"f1", report.f1},
            {"confusion", report.confusion}};
}

} // namespace

std::string run_record_to_json(const RunRecord& record)
{
    nlohmann::json j;
    nlohmann::json epochs = nlohmann::json::array();
    for (const EpochRecord& e : record.epochs) {
        nlohmann::json entry{{"steps", e.steps},
                             {"unlabeled_loss_steps", e.unlabeled_loss_steps},
                             {"pseudo_loss_steps", e.pseudo_loss_steps},
                             {"mean_losses",
                              {{"labeled", e.mean_losses.l_labeled},
                               {"unlabeled", e.mean_losses.l_unlabeled},
                               {"pseudo", e.mean_losses.l_pseudo},
                               {"cross_entropy", e.mean_losses.l_cross_entropy},
                               {"total", e.mean_losses.l_total}}}};
        if (e.validation.has_value()) entry["validation"] = classification_to_json(*e.validation);
        epochs.push_back(std::move(entry));
    }
    j["epochs"] = epochs;
    if (record.test.has_value()) j["test"] = classification_to_json(*record.test);
    if (record.pseudo_label_audit_accuracy.has_value())
        j["pseudo_label_audit_accuracy"] = *record.pseudo_label_audit_accuracy;
    j["hidden_label_reads_during_training"] = record.hidden_label_reads_during_training;
    j["best_epoch"] = record.best_epoch;
    j["early_stopped"] = record.early_stopped;
    // Timing lives in its own subobject so determinism checks can exclude it.
    j["timing"] = {{"wall_clock_seconds", record.wall_clock_seconds}};
    return j.dump(2);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

} // namespace

void save_checkpoint(const std::string& path, const S5CLModel& model,
                     const std::vector<std::string>& class_names)
{
    S5CLModel snapshot = model.clone();
    std::vector<NamedTensor> state = snapshot.state();

    nlohmann::json header;
    const ModelConfig& mc = model.config();
    header["model"] = {{"input_dim", mc.input_dim},
                       {"encoder_hidden", mc.encoder_hidden},
                       {"encoder_out_dim", mc.encoder_out_dim},
                       {"embedding_dim", mc.embedding_dim},
                       {"num_classes", mc.num_classes},
                       {"batchnorm_momentum", mc.batchnorm_momentum}};
    header["class_names"] = class_names;
    nlohmann::json tensors = nlohmann::json::array();
    for (const NamedTensor& t : state)
        tensors.push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
    header["tensors"] = tensors;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
    out.write("S5CK", 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint32_t header_len = static_cast<std::uint32_t>(header_text.size());
    out.write(reinterpret_cast<const char*>(&header_len), 4);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const NamedTensor& t : state) {
        const std::vector<double>& values = t.tensor.data();
        out.write(reinterpret_cast<const char*>(values.data()),
                  static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    if (!out) fail(ErrorCode::io, "failed writing checkpoint to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open checkpoint file '" + path + "'");

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "S5CK", 4) != 0)
        fail(ErrorCode::io, "'" + path + "' is not a checkpoint file (bad magic)");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || version != kCheckpointVersion)
        fail(ErrorCode::io, "unsupported checkpoint version " + std::to_string(version));
    std::uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), 4);
    if (!in) fail(ErrorCode::io, "checkpoint file truncated (header length)");
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), header_len);
    if (!in) fail(ErrorCode::io, "checkpoint file truncated (header)");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const std::exception& e) {
        fail(ErrorCode::io, std::string("malformed checkpoint header: ") + e.what());
    }

    Checkpoint checkpoint;
    ModelConfig mc;
    try {
        const nlohmann::json& m = header.at("model");
        mc.input_dim = m.at("input_dim").get<std::size_t>();
        mc.encoder_hidden = m.at("encoder_hidden").get<std::vector<std::size_t>>();
        mc.encoder_out_dim = m.at("encoder_out_dim").get<std::size_t>();
        mc.embedding_dim = m.at("embedding_dim").get<std::size_t>();
        mc.num_classes = m.at("num_classes").get<std::size_t>();
        mc.batchnorm_momentum = m.at("batchnorm_momentum").get<double>();
        checkpoint.class_names = header.at("class_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::io, std::string("checkpoint header missing field: ") + e.what());
    }

    Rng dummy(0);
    checkpoint.model = S5CLModel::init(mc, dummy);

    std::vector<NamedTensor> state;
    for (const nlohmann::json& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
        std::size_t count = 1;
        for (std::size_t extent : shape) count *= extent;
        std::vector<double> values(count);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) fail(ErrorCode::io, "checkpoint file truncated (tensor '" + name + "')");
        state.push_back({name, Tensor(shape, std::move(values))});
    }
    checkpoint.model.load_state(state);
    checkpoint.model.set_train_mode(false);
    return checkpoint;
}

} // namespace s5cl
