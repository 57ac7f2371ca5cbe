#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "epicode/harness.hpp"

namespace epicode {

/// Shortest decimal that parses back to the same double.
std::string format_real(double value);

/// seed,condition,mu,lambda,dev_accuracy,test_accuracy (one row per seed and
/// condition).
void write_runs_csv(const std::filesystem::path& path, std::span<const RunRecord> records);

/// seed,finetune,me_only,cd_only,epicode: test accuracy, one row per seed.
void write_accuracy_csv(const std::filesystem::path& path, std::span<const RunRecord> records);

/// seed,index,condition,correct,output (space-separated generated tokens).
void write_examples_csv(const std::filesystem::path& path, std::span<const RunRecord> records);

/// seed,stage,mu,lambda,dev_accuracy in evaluation order.
void write_sweep_csv(const std::filesystem::path& path, std::span<const RunRecord> records);

/// epoch,step,loss.
void write_train_log_csv(const std::filesystem::path& path, std::span<const TrainLogRow> rows);

/// seed,mu,lambda,ep_alone,weak_init,weak_early,weak_ft.
void write_ablation_csv(const std::filesystem::path& path,
                        std::span<const AblationRecord> records);

/// Rebuilds run records from runs.csv and, if present, examples.csv in dir.
std::vector<RunRecord> read_runs(const std::filesystem::path& dir);

std::vector<AblationRecord> read_ablation_csv(const std::filesystem::path& path);

/// One named numeric column of a CSV file with a header row.
std::vector<double> read_csv_column(const std::filesystem::path& path, const std::string& column);

/// Markdown tables: mean accuracy per condition, per-seed accuracy, paired
/// one-tailed t-tests of epicode against each other condition, success
/// counts, difficulty terciles (when per-example results are present) and the
/// weak-model ablation (when given).
std::string summary_markdown(std::span<const RunRecord> records,
                             std::span<const AblationRecord> ablations = {});

}  // namespace epicode
