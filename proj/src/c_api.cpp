#include "s5cl.h"

#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "s5cl/dataset.hpp"
#include "s5cl/error.hpp"
#include "s5cl/runner.hpp"

namespace {

thread_local std::string g_last_error;

char* duplicate(const std::string& text)
{
    char* out = static_cast<char*>(std::malloc(text.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, text.c_str(), text.size() + 1);
    return out;
}

s5cl_status status_from(s5cl::ErrorCode code)
{
    switch (code) {
    case s5cl::ErrorCode::invalid_argument: return S5CL_INVALID_ARGUMENT;
    case s5cl::ErrorCode::io: return S5CL_IO_ERROR;
    case s5cl::ErrorCode::runtime: return S5CL_RUNTIME_ERROR;
    }
    return S5CL_RUNTIME_ERROR;
}

s5cl_status guarded(const std::function<void()>& body)
{
    try {
        body();
        g_last_error.clear();
        return S5CL_OK;
    } catch (const s5cl::Error& e) {
        g_last_error = e.what();
        return status_from(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return S5CL_RUNTIME_ERROR;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return S5CL_RUNTIME_ERROR;
    } catch (...) {
        g_last_error = "unknown error";
        return S5CL_RUNTIME_ERROR;
    }
}

s5cl::RunOptions make_options(long long seed_override, const char* out_dir, int jobs)
{
    s5cl::RunOptions options;
    if (seed_override >= 0) options.seed = static_cast<std::uint64_t>(seed_override);
    if (out_dir && *out_dir) options.out_dir = out_dir;
    options.jobs = jobs;
    return options;
}

using Runner = std::string (*)(const std::string&, const s5cl::RunOptions&);

s5cl_status run_command(Runner runner, const char* config_text, long long seed_override,
                        const char* out_dir, int jobs, char** summary_json)
{
    return guarded([&] {
        if (!summary_json) s5cl::fail_invalid("summary_json must not be null");
        *summary_json = nullptr;
        if (!config_text) s5cl::fail_invalid("config_text must not be null (\"\" for defaults)");
        const std::string summary =
            runner(config_text, make_options(seed_override, out_dir, jobs));
        *summary_json = duplicate(summary);
        if (!*summary_json) throw std::bad_alloc();
    });
}

} // namespace

struct s5cl_dataset {
    s5cl::LabeledDataset data;
};

extern "C" {

const char* s5cl_version(void) { return "1.0.0"; }

const char* s5cl_last_error(void) { return g_last_error.c_str(); }

void s5cl_free_string(char* text) { std::free(text); }

s5cl_status s5cl_run_generate(const char* config_text, long long seed_override,
                              const char* out_dir, char** summary_json)
{
    return run_command(&s5cl::run_generate, config_text, seed_override, out_dir, 1, summary_json);
}

s5cl_status s5cl_run_train(const char* config_text, long long seed_override, const char* out_dir,
                           char** summary_json)
{
    return run_command(&s5cl::run_train, config_text, seed_override, out_dir, 1, summary_json);
}

s5cl_status s5cl_run_evaluate(const char* config_text, long long seed_override,
                              const char* out_dir, char** summary_json)
{
    return run_command(&s5cl::run_evaluate, config_text, seed_override, out_dir, 1, summary_json);
}

s5cl_status s5cl_run_sweep(const char* config_text, long long seed_override, const char* out_dir,
                           int jobs, char** summary_json)
{
    return run_command(&s5cl::run_sweep, config_text, seed_override, out_dir, jobs, summary_json);
}

s5cl_status s5cl_dataset_open(const char* path, s5cl_dataset** out)
{
    return guarded([&] {
        if (!out) s5cl::fail_invalid("out must not be null");
        *out = nullptr;
        if (!path || !*path) s5cl::fail_invalid("path must not be empty");
        auto handle = std::make_unique<s5cl_dataset>();
        handle->data = s5cl::load_s5ds(path);
        *out = handle.release();
    });
}

s5cl_status s5cl_dataset_info(const s5cl_dataset* dataset, char** info_json)
{
    return guarded([&] {
        if (!dataset) s5cl::fail_invalid("dataset must not be null");
        if (!info_json) s5cl::fail_invalid("info_json must not be null");
        *info_json = nullptr;
        const s5cl::LabeledDataset& data = dataset->data;
        bool labeled = false;
        for (int label : data.labels)
            if (label >= 0) labeled = true;
        nlohmann::json info;
        info["num_images"] = data.size();
        info["height"] = data.meta.height;
        info["width"] = data.meta.width;
        info["channels"] = 3;
        info["num_classes"] = data.num_classes();
        info["class_names"] = data.class_names;
        info["labeled"] = labeled;
        info["seed"] = data.meta.seed;
        info["generator"] = data.meta.generator;
        *info_json = duplicate(info.dump(2) + "\n");
        if (!*info_json) throw std::bad_alloc();
    });
}

void s5cl_dataset_free(s5cl_dataset* dataset) { delete dataset; }

} // extern "C"
