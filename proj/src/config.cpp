#include "s5cl/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "s5cl/error.hpp"

namespace s5cl {

namespace {

std::string trim(const std::string& s)
{
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value)
{
    std::vector<std::string> items;
    std::string current;
    std::istringstream in(value);
    while (std::getline(in, current, ',')) items.push_back(trim(current));
    if (!value.empty() && value.back() == ',') items.push_back("");
    return items;
}

std::string format_double(double v)
{
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), v);
    return std::string(buffer, result.ptr);
}

ConfigMap parse_flat(const std::string& text)
{
    ConfigMap map;
    std::istringstream in(text);
    std::string line, section;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
        if (stripped.front() == '[') {
            if (stripped.back() != ']')
                fail_invalid("config line " + std::to_string(line_number) + ": unterminated section");
            section = trim(stripped.substr(1, stripped.size() - 2));
            if (section.empty())
                fail_invalid("config line " + std::to_string(line_number) + ": empty section name");
            for (char c : section) {
                if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
                    fail_invalid("config line " + std::to_string(line_number) +
                                 ": section name '" + section + "' is not an identifier");
            }
            continue;
        }
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            fail_invalid("config line " + std::to_string(line_number) + ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        if (key.empty())
            fail_invalid("config line " + std::to_string(line_number) + ": empty key");
        const std::string full_key = section.empty() ? key : section + "." + key;
        if (map.count(full_key))
            fail_invalid("config: duplicate key '" + full_key + "'");
        map[full_key] = trim(stripped.substr(eq + 1));
    }
    return map;
}

std::string json_scalar_to_string(const nlohmann::json& value)
{
    if (value.is_string()) return value.get<std::string>();
    if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
    if (value.is_number_integer()) return std::to_string(value.get<long long>());
    if (value.is_number_unsigned()) return std::to_string(value.get<unsigned long long>());
    if (value.is_number_float()) return format_double(value.get<double>());
    fail_invalid("config: unsupported JSON value type");
}

void flatten_json(const nlohmann::json& node, const std::string& prefix, ConfigMap& map, int depth)
{
    if (node.is_object()) {
        if (depth >= 2)
            fail_invalid("config: JSON nesting deeper than section.key at '" + prefix + "'");
        for (const auto& [key, value] : node.items())
            flatten_json(value, prefix.empty() ? key : prefix + "." + key, map, depth + 1);
        return;
    }
    if (node.is_array()) {
        std::string joined;
        for (std::size_t i = 0; i < node.size(); ++i) {
            if (i) joined += ",";
            joined += json_scalar_to_string(node[i]);
        }
        map[prefix] = joined;
        return;
    }
    map[prefix] = json_scalar_to_string(node);
}

// Typed access over a ConfigMap that remembers which keys were read so the
// materializer can reject unknown ones.
class ConfigReader {
public:
    explicit ConfigReader(const ConfigMap& map) : map_(map) {}

    bool has(const std::string& key)
    {
        if (map_.count(key)) {
            consumed_.insert(key);
            return true;
        }
        return false;
    }

    std::string raw(const std::string& key) { return map_.at(key); }

    std::string get_string(const std::string& key, const std::string& fallback)
    {
        return has(key) ? map_.at(key) : fallback;
    }

    double get_double(const std::string& key, double fallback)
    {
        if (!has(key)) return fallback;
        return parse_double(key, map_.at(key));
    }

    long long get_int(const std::string& key, long long fallback)
    {
        if (!has(key)) return fallback;
        return parse_int(key, map_.at(key));
    }

    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback)
    {
        if (!has(key)) return fallback;
        const std::string& value = map_.at(key);
        try {
            std::size_t used = 0;
            const std::uint64_t parsed = std::stoull(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
            return parsed;
        } catch (const std::exception&) {
            fail_invalid("config: '" + key + "' must be a non-negative integer, got '" + value + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback)
    {
        if (!has(key)) return fallback;
        const std::string& value = map_.at(key);
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        fail_invalid("config: '" + key + "' must be true or false, got '" + value + "'");
    }

    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback)
    {
        if (!has(key)) return fallback;
        std::vector<int> items;
        for (const std::string& item : split_list(map_.at(key)))
            items.push_back(static_cast<int>(parse_int(key, item)));
        return items;
    }

    std::vector<std::size_t> get_size_list(const std::string& key, std::vector<std::size_t> fallback)
    {
        if (!has(key)) return fallback;
        std::vector<std::size_t> items;
        for (const std::string& item : split_list(map_.at(key))) {
            const long long v = parse_int(key, item);
            if (v < 0) fail_invalid("config: '" + key + "' entries must be non-negative");
            items.push_back(static_cast<std::size_t>(v));
        }
        return items;
    }

    std::vector<std::uint64_t> get_uint64_list(const std::string& key,
                                               std::vector<std::uint64_t> fallback)
    {
        if (!has(key)) return fallback;
        std::vector<std::uint64_t> items;
        for (const std::string& item : split_list(map_.at(key))) {
            const long long v = parse_int(key, item);
            if (v < 0) fail_invalid("config: '" + key + "' entries must be non-negative");
            items.push_back(static_cast<std::uint64_t>(v));
        }
        return items;
    }

    void finish() const
    {
        std::vector<std::string> unknown;
        for (const auto& [key, value] : map_)
            if (!consumed_.count(key)) unknown.push_back(key);
        if (!unknown.empty()) {
            std::string joined;
            for (std::size_t i = 0; i < unknown.size(); ++i) joined += (i ? ", " : "") + unknown[i];
            fail_invalid("config: unknown keys: " + joined);
        }
    }

    // Marks every key under a section (e.g. "sweep.") as consumed.
    std::vector<std::pair<std::string, std::string>> take_section(const std::string& prefix)
    {
        std::vector<std::pair<std::string, std::string>> entries;
        for (const auto& [key, value] : map_) {
            if (key.rfind(prefix, 0) == 0) {
                consumed_.insert(key);
                entries.emplace_back(key.substr(prefix.size()), value);
            }
        }
        return entries;
    }

private:
    static double parse_double(const std::string& key, const std::string& value)
    {
        try {
            std::size_t used = 0;
            const double parsed = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
            return parsed;
        } catch (const std::exception&) {
            fail_invalid("config: '" + key + "' must be a number, got '" + value + "'");
        }
    }

    static long long parse_int(const std::string& key, const std::string& value)
    {
        try {
            std::size_t used = 0;
            const long long parsed = std::stoll(value, &used);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
            return parsed;
        } catch (const std::exception&) {
            fail_invalid("config: '" + key + "' must be an integer, got '" + value + "'");
        }
    }

    const ConfigMap& map_;
    std::set<std::string> consumed_;
};

void read_policy(ConfigReader& reader, const std::string& section, AugmentationPolicy& policy)
{
    policy.color_jitter_magnitude =
        reader.get_double(section + ".color_jitter_magnitude", policy.color_jitter_magnitude);
    policy.hed_jitter_alpha = reader.get_double(section + ".hed_alpha", policy.hed_jitter_alpha);
    policy.hed_jitter_beta = reader.get_double(section + ".hed_beta", policy.hed_jitter_beta);
    policy.crop_fraction_min = reader.get_double(section + ".crop_min", policy.crop_fraction_min);
    policy.crop_fraction_max = reader.get_double(section + ".crop_max", policy.crop_fraction_max);
    if (reader.has(section + ".crop_mode"))
        policy.crop_mode = crop_mode_from_string(reader.raw(section + ".crop_mode"));
    policy.affine_max_rotation_deg =
        reader.get_double(section + ".affine_max_rotation_deg", policy.affine_max_rotation_deg);
    policy.affine_max_translate_fraction = reader.get_double(
        section + ".affine_max_translate_fraction", policy.affine_max_translate_fraction);
    policy.flip_probability = reader.get_double(section + ".flip_probability", policy.flip_probability);
    policy.enable_rotation = reader.get_bool(section + ".enable_rotation", policy.enable_rotation);
}

void write_policy(ConfigMap& map, const std::string& section, const AugmentationPolicy& policy)
{
    map[section + ".color_jitter_magnitude"] = format_double(policy.color_jitter_magnitude);
    map[section + ".hed_alpha"] = format_double(policy.hed_jitter_alpha);
    map[section + ".hed_beta"] = format_double(policy.hed_jitter_beta);
    map[section + ".crop_min"] = format_double(policy.crop_fraction_min);
    map[section + ".crop_max"] = format_double(policy.crop_fraction_max);
    map[section + ".crop_mode"] = to_string(policy.crop_mode);
    map[section + ".affine_max_rotation_deg"] = format_double(policy.affine_max_rotation_deg);
    map[section + ".affine_max_translate_fraction"] =
        format_double(policy.affine_max_translate_fraction);
    map[section + ".flip_probability"] = format_double(policy.flip_probability);
    map[section + ".enable_rotation"] = policy.enable_rotation ? "true" : "false";
}

} // namespace

ConfigMap parse_config_text(const std::string& text)
{
    const std::string stripped = trim(text);
    if (!stripped.empty() && stripped.front() == '{') {
        nlohmann::json root;
        try {
            root = nlohmann::json::parse(stripped);
        } catch (const std::exception& e) {
            fail_invalid(std::string("config: invalid JSON: ") + e.what());
        }
        if (!root.is_object()) fail_invalid("config: JSON root must be an object");
        ConfigMap map;
        flatten_json(root, "", map, 0);
        return map;
    }
    return parse_flat(text);
}

ConfigMap read_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io, "cannot open config file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

std::string serialize_config(const ConfigMap& map)
{
    // Top-level keys first, then sections alphabetically; std::map iteration
    // is already sorted, so just bucket by section.
    std::ostringstream out;
    for (const auto& [key, value] : map)
        if (key.find('.') == std::string::npos) out << key << " = " << value << "\n";

    std::string section;
    for (const auto& [key, value] : map) {
        const std::size_t dot = key.find('.');
        if (dot == std::string::npos) continue;
        const std::string current = key.substr(0, dot);
        if (current != section) {
            out << "\n[" << current << "]\n";
            section = current;
        }
        out << key.substr(dot + 1) << " = " << value << "\n";
    }
    return out.str();
}

ExperimentConfig materialize_config(const ConfigMap& map)
{
    ConfigReader reader(map);
    ExperimentConfig config;

    config.seed = reader.get_uint64("seed", 0);
    config.out_dir = reader.get_string("out", config.out_dir);

    // Dataset: preset defaults, then field-level overrides.
    config.dataset.source = reader.get_string("dataset.source", "synthetic");
    if (config.dataset.source != "synthetic" && config.dataset.source != "file")
        fail_invalid("config: dataset.source must be synthetic or file");
    config.dataset.path = reader.get_string("dataset.path", "");
    if (config.dataset.source == "file" && config.dataset.path.empty())
        fail_invalid("config: dataset.source = file requires dataset.path");
    config.dataset.preset = reader.get_string("dataset.preset", "balanced");
    if (config.dataset.preset == "balanced")
        config.dataset.synthetic = balanced_benchmark_spec(config.seed);
    else if (config.dataset.preset == "imbalanced")
        config.dataset.synthetic = imbalanced_benchmark_spec(config.seed);
    else if (config.dataset.preset == "custom")
        config.dataset.synthetic.seed = config.seed;
    else
        fail_invalid("config: dataset.preset must be balanced, imbalanced, or custom");
    SyntheticSpec& synthetic = config.dataset.synthetic;
    synthetic.num_classes =
        static_cast<int>(reader.get_int("dataset.num_classes", synthetic.num_classes));
    synthetic.per_class_counts = reader.get_int_list(
        "dataset.per_class", synthetic.per_class_counts.empty() ? std::vector<int>{400}
                                                                : synthetic.per_class_counts);
    synthetic.patch_size = static_cast<int>(reader.get_int("dataset.patch_size", synthetic.patch_size));
    synthetic.color_separation =
        reader.get_double("dataset.color_separation", synthetic.color_separation);
    synthetic.texture_amplitude =
        reader.get_double("dataset.texture_amplitude", synthetic.texture_amplitude);
    synthetic.noise_std = reader.get_double("dataset.noise_std", synthetic.noise_std);
    if (reader.has("dataset.seed")) {
        synthetic.seed = reader.get_uint64("dataset.seed", synthetic.seed);
        config.dataset.seed_overridden = true;
    }

    // Split.
    const bool has_fraction = reader.has("split.labeled_fraction_of_majority");
    if (has_fraction)
        config.split.labeled_fraction_of_majority =
            reader.get_double("split.labeled_fraction_of_majority", 0.0);
    config.split.labeled_per_class =
        reader.get_int_list("split.labeled_per_class",
                            has_fraction ? std::vector<int>{} : std::vector<int>{5});
    if (reader.has("split.keep_all_minority_below"))
        config.split.keep_all_minority_below =
            static_cast<int>(reader.get_int("split.keep_all_minority_below", 0));
    config.split.validation_fraction =
        reader.get_double("split.validation_fraction", config.split.validation_fraction);
    config.split.test_fraction = reader.get_double("split.test_fraction", config.split.test_fraction);
    config.split.seed = reader.get_uint64("split.seed", config.seed);

    // Model (input_dim and num_classes are derived from the dataset later).
    ModelConfig& model = config.train.model;
    model.encoder_hidden = reader.get_size_list("model.encoder_hidden", model.encoder_hidden);
    model.encoder_out_dim = static_cast<std::size_t>(
        reader.get_int("model.encoder_out_dim", static_cast<long long>(model.encoder_out_dim)));
    model.embedding_dim = static_cast<std::size_t>(
        reader.get_int("model.embedding_dim", static_cast<long long>(model.embedding_dim)));
    model.batchnorm_momentum = reader.get_double("model.batchnorm_momentum", model.batchnorm_momentum);

    // Optimizer.
    OptimizerConfig& optimizer = config.train.optimizer;
    if (reader.has("optimizer.kind"))
        optimizer.kind = optimizer_kind_from_string(reader.raw("optimizer.kind"));
    optimizer.learning_rate = reader.get_double("optimizer.learning_rate", optimizer.learning_rate);
    optimizer.beta1 = reader.get_double("optimizer.beta1", optimizer.beta1);
    optimizer.beta2 = reader.get_double("optimizer.beta2", optimizer.beta2);
    optimizer.epsilon = reader.get_double("optimizer.epsilon", optimizer.epsilon);
    optimizer.weight_decay = reader.get_double("optimizer.weight_decay", optimizer.weight_decay);

    // Training.
    if (reader.has("train.mode"))
        config.train.mode = train_mode_from_string(reader.raw("train.mode"));
    config.train.epochs = static_cast<int>(reader.get_int("train.epochs", config.train.epochs));
    config.train.labeled_batch =
        static_cast<int>(reader.get_int("train.labeled_batch", config.train.labeled_batch));
    config.train.unlabeled_batch =
        static_cast<int>(reader.get_int("train.unlabeled_batch", config.train.unlabeled_batch));
    config.train.seed = config.seed;
    LossConfig& loss = config.train.loss;
    loss.t_labeled = reader.get_double("train.t_labeled", loss.t_labeled);
    loss.t_unlabeled = reader.get_double("train.t_unlabeled", loss.t_unlabeled);
    loss.t_pseudo = reader.get_double("train.t_pseudo", loss.t_pseudo);
    loss.pseudo_start_epoch =
        static_cast<int>(reader.get_int("train.pseudo_start_epoch", loss.pseudo_start_epoch));
    const long long patience = reader.get_int("train.early_stopping_patience", 0);
    if (patience > 0) config.train.early_stopping_patience = static_cast<int>(patience);
    const std::string stop_metric = reader.get_string("train.early_stop_metric", "accuracy");
    if (stop_metric == "accuracy")
        config.train.early_stop_metric = EarlyStopMetric::accuracy;
    else if (stop_metric == "macro_f1")
        config.train.early_stop_metric = EarlyStopMetric::macro_f1;
    else
        fail_invalid("config: train.early_stop_metric must be accuracy or macro_f1");

    config.train.weak_aug.strength = Strength::weak;
    config.train.strong_aug.strength = Strength::strong;
    read_policy(reader, "augment_weak", config.train.weak_aug);
    read_policy(reader, "augment_strong", config.train.strong_aug);

    // Evaluation.
    config.eval.checkpoint = reader.get_string("evaluate.checkpoint", "");
    config.eval.augmented_views =
        static_cast<int>(reader.get_int("evaluate.augmented_views", config.eval.augmented_views));
    config.eval.per_class_cap =
        static_cast<int>(reader.get_int("evaluate.per_class_cap", config.eval.per_class_cap));
    config.eval.write_embeddings =
        reader.get_bool("evaluate.write_embeddings", config.eval.write_embeddings);

    // Sweep: every key is an axis except the two reserved ones.
    config.sweep.seeds = reader.get_uint64_list("sweep.seeds", config.sweep.seeds);
    config.sweep.cap = static_cast<int>(reader.get_int("sweep.cap", config.sweep.cap));
    for (const auto& [key, value] : reader.take_section("sweep.")) {
        if (key == "seeds" || key == "cap") continue;
        SweepAxis axis;
        axis.key = key;
        axis.values = split_list(value);
        config.sweep.axes.push_back(std::move(axis));
    }

    reader.finish();
    return config;
}

ConfigMap effective_config(const ExperimentConfig& config)
{
    ConfigMap map;
    map["seed"] = std::to_string(config.seed);
    map["out"] = config.out_dir;

    map["dataset.source"] = config.dataset.source;
    if (!config.dataset.path.empty()) map["dataset.path"] = config.dataset.path;
    map["dataset.preset"] = "custom"; // fields below carry the expanded values
    const SyntheticSpec& synthetic = config.dataset.synthetic;
    map["dataset.num_classes"] = std::to_string(synthetic.num_classes);
    {
        std::string joined;
        for (std::size_t i = 0; i < synthetic.per_class_counts.size(); ++i)
            joined += (i ? "," : "") + std::to_string(synthetic.per_class_counts[i]);
        map["dataset.per_class"] = joined;
    }
    map["dataset.patch_size"] = std::to_string(synthetic.patch_size);
    map["dataset.color_separation"] = format_double(synthetic.color_separation);
    map["dataset.texture_amplitude"] = format_double(synthetic.texture_amplitude);
    map["dataset.noise_std"] = format_double(synthetic.noise_std);
    map["dataset.seed"] = std::to_string(synthetic.seed);

    if (config.split.labeled_fraction_of_majority.has_value())
        map["split.labeled_fraction_of_majority"] =
            format_double(*config.split.labeled_fraction_of_majority);
    if (!config.split.labeled_per_class.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < config.split.labeled_per_class.size(); ++i)
            joined += (i ? "," : "") + std::to_string(config.split.labeled_per_class[i]);
        map["split.labeled_per_class"] = joined;
    }
    if (config.split.keep_all_minority_below.has_value())
        map["split.keep_all_minority_below"] = std::to_string(*config.split.keep_all_minority_below);
    map["split.validation_fraction"] = format_double(config.split.validation_fraction);
    map["split.test_fraction"] = format_double(config.split.test_fraction);
    map["split.seed"] = std::to_string(config.split.seed);

    const ModelConfig& model = config.train.model;
    {
        std::string joined;
        for (std::size_t i = 0; i < model.encoder_hidden.size(); ++i)
            joined += (i ? "," : "") + std::to_string(model.encoder_hidden[i]);
        map["model.encoder_hidden"] = joined;
    }
    map["model.encoder_out_dim"] = std::to_string(model.encoder_out_dim);
    map["model.embedding_dim"] = std::to_string(model.embedding_dim);
    map["model.batchnorm_momentum"] = format_double(model.batchnorm_momentum);

    const OptimizerConfig& optimizer = config.train.optimizer;
    map["optimizer.kind"] = to_string(optimizer.kind);
    map["optimizer.learning_rate"] = format_double(optimizer.learning_rate);
    map["optimizer.beta1"] = format_double(optimizer.beta1);
    map["optimizer.beta2"] = format_double(optimizer.beta2);
    map["optimizer.epsilon"] = format_double(optimizer.epsilon);
    map["optimizer.weight_decay"] = format_double(optimizer.weight_decay);

    map["train.mode"] = to_string(config.train.mode);
    map["train.epochs"] = std::to_string(config.train.epochs);
    map["train.labeled_batch"] = std::to_string(config.train.labeled_batch);
    map["train.unlabeled_batch"] = std::to_string(config.train.unlabeled_batch);
    map["train.t_labeled"] = format_double(config.train.loss.t_labeled);
    map["train.t_unlabeled"] = format_double(config.train.loss.t_unlabeled);
    map["train.t_pseudo"] = format_double(config.train.loss.t_pseudo);
    map["train.pseudo_start_epoch"] = std::to_string(config.train.loss.pseudo_start_epoch);
    map["train.early_stopping_patience"] =
        std::to_string(config.train.early_stopping_patience.value_or(0));
    map["train.early_stop_metric"] =
        config.train.early_stop_metric == EarlyStopMetric::macro_f1 ? "macro_f1" : "accuracy";

    write_policy(map, "augment_weak", config.train.weak_aug);
    write_policy(map, "augment_strong", config.train.strong_aug);

    if (!config.eval.checkpoint.empty()) map["evaluate.checkpoint"] = config.eval.checkpoint;
    map["evaluate.augmented_views"] = std::to_string(config.eval.augmented_views);
    map["evaluate.per_class_cap"] = std::to_string(config.eval.per_class_cap);
    map["evaluate.write_embeddings"] = config.eval.write_embeddings ? "true" : "false";

    if (!config.sweep.axes.empty()) {
        for (const SweepAxis& axis : config.sweep.axes) {
            std::string joined;
            for (std::size_t i = 0; i < axis.values.size(); ++i)
                joined += (i ? "," : "") + axis.values[i];
            map["sweep." + axis.key] = joined;
        }
        std::string joined;
        for (std::size_t i = 0; i < config.sweep.seeds.size(); ++i)
            joined += (i ? "," : "") + std::to_string(config.sweep.seeds[i]);
        map["sweep.seeds"] = joined;
        map["sweep.cap"] = std::to_string(config.sweep.cap);
    }
    return map;
}

std::vector<ConfigMap> expand_sweep(const ConfigMap& base, const SweepConfig& sweep)
{
    if (sweep.axes.empty()) fail_invalid("sweep: no axes declared in the [sweep] section");
    for (const SweepAxis& axis : sweep.axes) {
        if (axis.values.empty() || (axis.values.size() == 1 && axis.values[0].empty()))
            fail_invalid("sweep: axis '" + axis.key + "' has no values");
        for (const std::string& value : axis.values)
            if (value.empty()) fail_invalid("sweep: axis '" + axis.key + "' has an empty value");
    }
    if (sweep.seeds.empty()) fail_invalid("sweep: seeds list is empty");

    std::size_t combinations = 1;
    for (const SweepAxis& axis : sweep.axes) combinations *= axis.values.size();
    const std::size_t total = combinations * sweep.seeds.size();
    if (sweep.cap > 0 && total > static_cast<std::size_t>(sweep.cap))
        fail_invalid("sweep: " + std::to_string(total) + " runs exceed the cap of " +
                     std::to_string(sweep.cap));

    ConfigMap stripped = base;
    for (auto it = stripped.begin(); it != stripped.end();) {
        if (it->first.rfind("sweep.", 0) == 0)
            it = stripped.erase(it);
        else
            ++it;
    }

    std::vector<ConfigMap> grid;
    grid.reserve(combinations);
    std::vector<std::size_t> cursor(sweep.axes.size(), 0);
    while (true) {
        ConfigMap point = stripped;
        for (std::size_t a = 0; a < sweep.axes.size(); ++a)
            point[sweep.axes[a].key] = sweep.axes[a].values[cursor[a]];
        grid.push_back(std::move(point));

        std::size_t a = sweep.axes.size();
        while (a > 0) {
            --a;
            if (++cursor[a] < sweep.axes[a].values.size()) break;
            cursor[a] = 0;
            if (a == 0) return grid;
        }
        if (sweep.axes.empty()) break;
    }
    return grid;
}

} // namespace s5cl
