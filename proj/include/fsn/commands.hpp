#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fsn/config.hpp"
#include "fsn/data.hpp"
#include "fsn/eval.hpp"
#include "fsn/model.hpp"
#include "fsn/types.hpp"

namespace fsn {

// Each command reads only the paths named in the config and writes only under
// `out`. The return value is the process exit status.
int cmd_synth(const RunConfig& config);
int cmd_train(const RunConfig& config);
int cmd_train_weak(const RunConfig& config);
int cmd_predict(const RunConfig& config);
int cmd_predict_weak(const RunConfig& config);
int cmd_eval(const RunConfig& config);
int cmd_ablate(const RunConfig& config);
int cmd_gradcheck(const RunConfig& config);

SynthConfig synth_config_from(const RunConfig& config);

struct AblationRow {
    std::string model;
    EvalReport report;
};

struct AblationResult {
    std::string comparison;  // "temporal" or "pooling"
    std::vector<AblationRow> rows;  // reference model first
    std::vector<Head> heads;        // same order as rows
};

// Trains both variants from the same seed and budget and evaluates them on
// the test split of the dataset under `data_dir`.
AblationResult run_ablation(const RunConfig& config);

// CSV with one row per model and a final "delta" row (first minus second).
void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path);

}  // namespace fsn
