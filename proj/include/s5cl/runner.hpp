#pragma once

// Command implementations behind the CLI and the C API. Each runner takes the
// raw config text (flat key=value or JSON), applies command-line overrides,
// executes, writes its artifacts under the output directory, and returns a
// small summary as a JSON string. Failures are reported via s5cl::Error.

#include <cstdint>
#include <optional>
#include <string>

namespace s5cl {

struct RunOptions {
    std::optional<std::uint64_t> seed; // overrides the config's run seed
    std::string out_dir;               // overrides the config's output directory
    int jobs = 1;                      // sweep parallelism (ignored elsewhere)
};

// Writes dataset.s5ds + dataset_meta.json + effective_config.ini.
std::string run_generate(const std::string& config_text, const RunOptions& options);

// Trains one model; writes effective_config.ini, run_record.json, model.s5ck,
// metrics.json, confusion.csv and (optionally) embeddings.csv.
std::string run_train(const std::string& config_text, const RunOptions& options);

// Loads evaluate.checkpoint and scores the config's test split; writes
// metrics.json, confusion.csv and (optionally) embeddings.csv.
std::string run_evaluate(const std::string& config_text, const RunOptions& options);

// Expands the [sweep] grid, trains every combination x seed into run_NNN
// subdirectories and writes sweep_results.csv. S5CL_DETERMINISTIC=1 forces
// sequential execution regardless of options.jobs.
std::string run_sweep(const std::string& config_text, const RunOptions& options);

} // namespace s5cl
