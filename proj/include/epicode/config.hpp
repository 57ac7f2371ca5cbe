#pragma once

#include <filesystem>
#include <string>

#include "epicode/dataset.hpp"
#include "epicode/harness.hpp"
#include "epicode/toy_lm.hpp"

namespace epicode {

/// JSON overlays: each reader starts from `base` and replaces only the keys
/// present in the text. Unknown keys and wrongly typed values throw DataError.
///
/// model:     vocab_size d_model n_layers n_heads d_ff max_context seed
///            activation ("gelu" | "identity")
/// task:      kind ("kv_recall" | "modular_chain") vocab_size n_train n_dev
///            n_test n_pairs chain_length modulus seed
/// optimizer: preset ("default" | "large_model", applied first) beta1 beta2
///            eps learning_rate weight_decay batch_size
/// grid:      mu_values lambda_values
/// pipeline:  task model optimizer grid (objects, as above) alpha
///            max_new_tokens epochs mu lambda
ToyConfig model_from_json(const std::string& text, ToyConfig base = {});
TaskSpec task_from_json(const std::string& text, TaskSpec base = {});
OptimizerConfig optimizer_from_json(const std::string& text, OptimizerConfig base = {});
SweepGrid grid_from_json(const std::string& text, SweepGrid base = SweepGrid::defaults());
PipelineConfig pipeline_from_json(const std::string& text, PipelineConfig base = {});

std::string to_json(const ToyConfig& cfg);
std::string to_json(const TaskSpec& spec);
std::string to_json(const PipelineConfig& cfg);

std::string read_text(const std::filesystem::path& path);

}  // namespace epicode
