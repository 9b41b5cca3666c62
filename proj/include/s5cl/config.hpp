#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "s5cl/dataset.hpp"
#include "s5cl/trainer.hpp"

namespace s5cl {

// Raw configuration: dotted keys ("train.mode", top-level keys unprefixed)
// mapping to value strings. Lists are comma-separated.
using ConfigMap = std::map<std::string, std::string>;

// Parses either the flat section/key=value format or a JSON object with the
// same two-level structure.
ConfigMap parse_config_text(const std::string& text);

ConfigMap read_config_file(const std::string& path);

// Flat-format serialization, keys grouped into sections.
std::string serialize_config(const ConfigMap& map);

struct DatasetSourceConfig {
    std::string source = "synthetic"; // synthetic | file
    std::string path;                 // for file source
    std::string preset = "balanced";  // balanced | imbalanced | custom
    SyntheticSpec synthetic;
    bool seed_overridden = false; // dataset seed pinned independently of the run seed
};

struct EvalConfig {
    std::string checkpoint;  // for the evaluate command
    int augmented_views = 2; // extra rows per image, alternating weak/strong
    int per_class_cap = 0;   // <= 0 keeps every image
    bool write_embeddings = true;
};

struct SweepAxis {
    std::string key; // dotted config key
    std::vector<std::string> values;
};

struct SweepConfig {
    std::vector<SweepAxis> axes;
    std::vector<std::uint64_t> seeds = {0};
    int cap = 64; // maximum number of runs (combinations x seeds)
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "runs/out";
    DatasetSourceConfig dataset;
    SplitSpec split;
    TrainConfig train;
    EvalConfig eval;
    SweepConfig sweep;
};

// Typed materialization with defaults; unknown keys are an error. The run
// seed feeds the dataset and split seeds unless those are set explicitly.
ExperimentConfig materialize_config(const ConfigMap& map);

// Every field with defaults expanded, suitable for echoing into a run
// directory; materialize_config(effective_config(c)) reproduces c.
ConfigMap effective_config(const ExperimentConfig& config);

// One ConfigMap per point of the cartesian sweep grid (seed excluded; the
// caller crosses with sweep.seeds). Errors when no axis or an empty axis is
// declared, or when combinations x seeds exceed the cap.
std::vector<ConfigMap> expand_sweep(const ConfigMap& base, const SweepConfig& sweep);

} // namespace s5cl
