#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include <s5cl.h>

namespace fs = std::filesystem;

namespace {

const char* kConfig = R"(
seed = 3

[dataset]
preset = custom
num_classes = 3
per_class = 16
patch_size = 8

[split]
labeled_per_class = 4
test_fraction = 0.25

[model]
encoder_hidden = 16
encoder_out_dim = 16
embedding_dim = 8

[train]
mode = s5cl
epochs = 2
labeled_batch = 8
unlabeled_batch = 16
)";

fs::path fresh_dir(const std::string& name)
{
    fs::path dir = fs::path("c_api_work") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

nlohmann::json take_json(char* text)
{
    REQUIRE(text != nullptr);
    auto parsed = nlohmann::json::parse(text);
    s5cl_free_string(text);
    return parsed;
}

} // namespace

TEST_CASE("version and error strings are always available")
{
    REQUIRE(s5cl_version() != nullptr);
    CHECK(std::strlen(s5cl_version()) > 0);
    REQUIRE(s5cl_last_error() != nullptr);
    s5cl_free_string(nullptr); // must be a harmless no-op
}

TEST_CASE("generate, train, and evaluate chain through the C interface")
{
    const fs::path gen_dir = fresh_dir("generate");
    char* summary = nullptr;
    REQUIRE(s5cl_run_generate(kConfig, -1, gen_dir.string().c_str(), &summary) == S5CL_OK);
    auto generated = take_json(summary);
    CHECK(generated["command"] == "generate");
    CHECK(generated["dataset"]["num_images"] == 48);
    const std::string dataset_path = generated["dataset"]["path"];
    CHECK(fs::exists(dataset_path));

    const fs::path train_dir = fresh_dir("train");
    summary = nullptr;
    REQUIRE(s5cl_run_train(kConfig, -1, train_dir.string().c_str(), &summary) == S5CL_OK);
    auto trained = take_json(summary);
    CHECK(trained["epochs_run"] == 2);
    CHECK(trained["hidden_label_reads_during_training"] == 0);
    CHECK(fs::exists(train_dir / "model.s5ck"));

    // Point evaluation at the fresh checkpoint via config text.
    std::string eval_config = std::string(kConfig) + "\n[evaluate]\ncheckpoint = " +
                              (train_dir / "model.s5ck").string() + "\n";
    const fs::path eval_dir = fresh_dir("evaluate");
    summary = nullptr;
    REQUIRE(s5cl_run_evaluate(eval_config.c_str(), -1, eval_dir.string().c_str(), &summary) ==
            S5CL_OK);
    auto evaluated = take_json(summary);
    CHECK(evaluated["test"]["accuracy"] == trained["test"]["accuracy"]);
    CHECK(evaluated["test"]["macro_f1"] == trained["test"]["macro_f1"]);

    // A seed override must change the training trajectory.
    const fs::path train_dir_b = fresh_dir("train_b");
    summary = nullptr;
    REQUIRE(s5cl_run_train(kConfig, 99, train_dir_b.string().c_str(), &summary) == S5CL_OK);
    auto reseeded = take_json(summary);
    CHECK(reseeded["seed"] == 99);
    CHECK(reseeded["test"]["accuracy"] != trained["test"]["accuracy"]);
}

TEST_CASE("sweep through the C interface")
{
    const fs::path dir = fresh_dir("sweep");
    std::string config = std::string(kConfig) + "\n[sweep]\ntrain.mode = s1cl,cross_entropy\n"
                                                "seeds = 0,1\n";
    char* summary = nullptr;
    REQUIRE(s5cl_run_sweep(config.c_str(), -1, dir.string().c_str(), 2, &summary) == S5CL_OK);
    auto swept = take_json(summary);
    CHECK(swept["runs"] == 4);
    CHECK(swept["results"].size() == 2);
    CHECK(fs::exists(dir / "sweep_results.csv"));
}

TEST_CASE("failures set a status and a thread-local message")
{
    char* summary = nullptr;

    CHECK(s5cl_run_train("nonsense without equals\n", -1, "c_api_work/err", &summary) ==
          S5CL_INVALID_ARGUMENT);
    CHECK(summary == nullptr);
    CHECK(std::string(s5cl_last_error()).find("line 1") != std::string::npos);

    CHECK(s5cl_run_train("typo_key = 1\n", -1, "c_api_work/err", &summary) ==
          S5CL_INVALID_ARGUMENT);
    CHECK(std::string(s5cl_last_error()).find("typo_key") != std::string::npos);

    // Evaluation without a checkpoint is a config error; with a dangling path
    // it is an I/O error.
    CHECK(s5cl_run_evaluate(kConfig, -1, "c_api_work/err", &summary) == S5CL_INVALID_ARGUMENT);
    std::string eval_config = std::string(kConfig) +
                              "\n[evaluate]\ncheckpoint = c_api_work/missing.s5ck\n";
    CHECK(s5cl_run_evaluate(eval_config.c_str(), -1, "c_api_work/err", &summary) == S5CL_IO_ERROR);

    CHECK(s5cl_run_train(nullptr, -1, "c_api_work/err", &summary) == S5CL_INVALID_ARGUMENT);
    CHECK(s5cl_run_train(kConfig, -1, "c_api_work/err", nullptr) == S5CL_INVALID_ARGUMENT);

    // A successful call afterwards leaves the error slot clean.
    const fs::path dir = fresh_dir("recover");
    REQUIRE(s5cl_run_generate(kConfig, -1, dir.string().c_str(), &summary) == S5CL_OK);
    s5cl_free_string(summary);
    CHECK(std::string(s5cl_last_error()).empty());
}

TEST_CASE("dataset files open through the handle interface")
{
    const fs::path dir = fresh_dir("dataset");
    char* summary = nullptr;
    REQUIRE(s5cl_run_generate(kConfig, -1, dir.string().c_str(), &summary) == S5CL_OK);
    auto generated = take_json(summary);
    const std::string path = generated["dataset"]["path"];

    s5cl_dataset* dataset = nullptr;
    REQUIRE(s5cl_dataset_open(path.c_str(), &dataset) == S5CL_OK);
    REQUIRE(dataset != nullptr);

    char* info = nullptr;
    REQUIRE(s5cl_dataset_info(dataset, &info) == S5CL_OK);
    auto parsed = take_json(info);
    CHECK(parsed["num_images"] == 48);
    CHECK(parsed["num_classes"] == 3);
    CHECK(parsed["height"] == 8);
    CHECK(parsed["width"] == 8);
    CHECK(parsed["class_names"].size() == 3);
    s5cl_dataset_free(dataset);

    s5cl_dataset* missing = nullptr;
    CHECK(s5cl_dataset_open("c_api_work/nowhere.s5ds", &missing) == S5CL_IO_ERROR);
    CHECK(missing == nullptr);
    CHECK(s5cl_dataset_open(nullptr, &missing) == S5CL_INVALID_ARGUMENT);
    CHECK(s5cl_dataset_info(nullptr, &info) == S5CL_INVALID_ARGUMENT);
    s5cl_dataset_free(nullptr); // harmless
}

TEST_CASE("a freshly initialized model scores at chance level")
{
    // Train for zero epochs so the checkpoint holds the random init, then
    // evaluate on the 9-class balanced benchmark: accuracy must sit near 1/9.
    const char* chance_config = R"(
seed = 1

[dataset]
preset = custom
num_classes = 9
per_class = 40
patch_size = 8

[split]
labeled_per_class = 5
test_fraction = 0.25

[train]
mode = s1cl
epochs = 0

[model]
encoder_hidden = 16
encoder_out_dim = 16
embedding_dim = 8

[evaluate]
augmented_views = 0
write_embeddings = false
)";

    double total = 0;
    const int seeds = 10;
    for (int seed = 0; seed < seeds; ++seed) {
        const fs::path train_dir = fresh_dir("chance_train_" + std::to_string(seed));
        char* summary = nullptr;
        REQUIRE(s5cl_run_train(chance_config, seed, train_dir.string().c_str(), &summary) ==
                S5CL_OK);
        s5cl_free_string(summary);

        std::string eval_config = std::string(chance_config) + "checkpoint = " +
                                  (train_dir / "model.s5ck").string() + "\n";
        const fs::path eval_dir = fresh_dir("chance_eval_" + std::to_string(seed));
        summary = nullptr;
        REQUIRE(s5cl_run_evaluate(eval_config.c_str(), seed, eval_dir.string().c_str(),
                                  &summary) == S5CL_OK);
        total += take_json(summary)["test"]["accuracy"].get<double>();
    }
    CHECK(std::abs(total / seeds - 1.0 / 9.0) < 0.05);
}
