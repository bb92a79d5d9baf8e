#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "czsl/common.hpp"
#include "czsl/core.hpp"
#include "czsl/eval.hpp"
#include "czsl/feasibility.hpp"
#include "czsl/io.hpp"
#include "czsl/train.hpp"

namespace czsl {

enum class MaskPolicy { None, Tuned, Fixed, Median, InvMedian, KeepFile };

const char* to_string(MaskPolicy policy);
MaskPolicy mask_policy_from_string(const std::string& text);

struct ExperimentConfig {
    std::filesystem::path manifest_path;
    std::filesystem::path features_path;
    std::filesystem::path embeddings_path;
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> checkpoint_path;  // evaluate without training

    TrainConfig train;
    double dropout_rate = 0.3;
    std::size_t hidden_dim = 0;  // 0 = shared dim
    MissingPolicy missing_embedding = MissingPolicy::Error;

    MaskPolicy mask_policy = MaskPolicy::None;
    double fixed_tau = 0.0;
    std::filesystem::path keep_file;

    bool eval_open = true;
    bool eval_closed = false;
    PrimitiveBias primitive_bias = PrimitiveBias::HmBias;
};

// JSON config document; relative paths resolve against the config file's
// directory. CZSL_OUT_ROOT, when set, re-roots a relative out directory.
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

struct ExperimentResult {
    std::filesystem::path report_path;
    std::filesystem::path feasibility_path;
    std::filesystem::path train_log_path;
    std::filesystem::path checkpoint_path;
    std::optional<EvalReport> open_report;
    std::optional<EvalReport> closed_report;
    double tau = -1.0;
    std::size_t masked_count = 0;
    std::size_t selected_epoch = 0;
};

// Train (or load a checkpoint), tune tau when the mask policy asks for it,
// evaluate the test split in the requested world views, and write report,
// feasibility ranking, training log, and checkpoint under out_dir. Output
// bytes are a pure function of config and seed.
ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const std::filesystem::path& config_path);

// Self-contained toy problem for gradient checking: small dims, full
// feasibility table, dropout 0.
struct GradCheckInstance {
    Vocabulary vocab;
    CompositionSpace space;
    Matrix features;
    std::vector<Sample> batch;
    ModelParams params;
    FeasibilityTable table;
};

GradCheckInstance make_gradcheck_instance(std::uint64_t seed);

// Max relative error for one instance under one training mode.
double run_gradcheck(std::uint64_t seed, TrainMode mode, double alpha = 0.4);

// Command-line entry point; returns the process exit code
// (0 success, 1 validation failure, 2 I/O, parse, or usage failure).
int cli_main(const std::vector<std::string>& args);

}  // namespace czsl
