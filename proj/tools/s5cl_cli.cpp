// Command-line front end. Talks to the library purely through the C API so it
// doubles as a smoke test of the shared-library surface.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include <s5cl.h>

namespace {

struct CommonArgs {
    std::string config_path;
    long long seed = -1;
    std::string out_dir;
    int jobs = 1;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args, bool with_jobs)
{
    cmd->add_option("--config", args.config_path, "Config file (flat key=value or JSON)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "Override the config's run seed")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", args.out_dir, "Override the config's output directory");
    if (with_jobs)
        cmd->add_option("--jobs", args.jobs, "Parallel sweep workers (S5CL_DETERMINISTIC=1 forces 1)")
            ->check(CLI::PositiveNumber);
}

void print_diagnostic(const std::string& kind, const std::string& message)
{
    // Hand-rolled JSON so the diagnostic path cannot itself fail; the message
    // is escaped minimally.
    std::string escaped;
    for (char c : message) {
        switch (c) {
        case '"': escaped += "\\\""; break;
        case '\\': escaped += "\\\\"; break;
        case '\n': escaped += "\\n"; break;
        case '\t': escaped += "\\t"; break;
        default:
            if (static_cast<unsigned char>(c) < 0x20) {
                char buffer[8];
                std::snprintf(buffer, sizeof(buffer), "\\u%04x", c);
                escaped += buffer;
            } else {
                escaped += c;
            }
        }
    }
    std::cerr << "{\"error\": {\"kind\": \"" << kind << "\", \"message\": \"" << escaped
              << "\"}}\n";
}

int exit_code_for(s5cl_status status)
{
    return status == S5CL_INVALID_ARGUMENT ? 1 : 2;
}

const char* status_kind(s5cl_status status)
{
    switch (status) {
    case S5CL_OK: return "ok";
    case S5CL_INVALID_ARGUMENT: return "invalid_argument";
    case S5CL_IO_ERROR: return "io_error";
    case S5CL_RUNTIME_ERROR: return "runtime_error";
    }
    return "unknown";
}

int run(const std::string& command, const CommonArgs& args)
{
    std::string config_text;
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) {
            print_diagnostic("io_error", "cannot open config file '" + args.config_path + "'");
            return 1;
        }
        std::ostringstream buffer;
        buffer << in.rdbuf();
        config_text = buffer.str();
    }

    const char* out_dir = args.out_dir.empty() ? nullptr : args.out_dir.c_str();
    char* summary = nullptr;
    s5cl_status status = S5CL_RUNTIME_ERROR;
    if (command == "generate")
        status = s5cl_run_generate(config_text.c_str(), args.seed, out_dir, &summary);
    else if (command == "train")
        status = s5cl_run_train(config_text.c_str(), args.seed, out_dir, &summary);
    else if (command == "evaluate")
        status = s5cl_run_evaluate(config_text.c_str(), args.seed, out_dir, &summary);
    else if (command == "sweep")
        status = s5cl_run_sweep(config_text.c_str(), args.seed, out_dir, args.jobs, &summary);

    if (status != S5CL_OK) {
        print_diagnostic(status_kind(status), s5cl_last_error());
        return exit_code_for(status);
    }
    if (summary) {
        std::cout << summary;
        s5cl_free_string(summary);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{std::string("s5cl ") + s5cl_version() +
                 " - hierarchical contrastive learning experiments"};
    app.require_subcommand(1);

    CommonArgs generate_args, train_args, evaluate_args, sweep_args;
    CLI::App* generate =
        app.add_subcommand("generate", "Write a synthetic dataset (.s5ds) and its meta JSON");
    add_common_flags(generate, generate_args, false);
    CLI::App* train = app.add_subcommand("train", "Train a model and write run artifacts");
    add_common_flags(train, train_args, false);
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "Score a saved checkpoint on the configured test split");
    add_common_flags(evaluate, evaluate_args, false);
    CLI::App* sweep = app.add_subcommand("sweep", "Train every combination in the [sweep] grid");
    add_common_flags(sweep, sweep_args, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (generate->parsed()) return run("generate", generate_args);
    if (train->parsed()) return run("train", train_args);
    if (evaluate->parsed()) return run("evaluate", evaluate_args);
    if (sweep->parsed()) return run("sweep", sweep_args);
    return 1;
}
