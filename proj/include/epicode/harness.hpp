#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epicode/checkpoint.hpp"
#include "epicode/dataset.hpp"
#include "epicode/decode.hpp"
#include "epicode/toy_lm.hpp"

namespace epicode {

enum class Condition { finetune, me_only, cd_only, epicode };

inline constexpr std::array<Condition, 4> kConditions{
    Condition::finetune, Condition::me_only, Condition::cd_only, Condition::epicode};

const char* to_string(Condition condition);
Condition condition_from_string(const std::string& name);

/// Maps a prompt to generated tokens. Must be safe to call concurrently.
using Decoder = std::function<std::vector<Token>(std::span<const Token>)>;

/// Plain greedy argmax on one provider, stopping at kEosToken.
Decoder greedy_decoder(const LogitProvider& model, int max_new_tokens);

/// Masked contrastive greedy decoding, stopping at kEosToken.
Decoder contrastive_decoder(const LogitProvider& strong, const LogitProvider& weak,
                            double lambda, double alpha, int max_new_tokens);

/// The tokens before the first kEosToken.
std::span<const Token> answer_prefix(std::span<const Token> tokens);

/// Exact token equality of answer_prefix(generated) and answer_prefix(gold).
bool answer_matches(std::span<const Token> generated, std::span<const Token> gold);

struct Evaluation {
  double accuracy = 0.0;
  std::vector<std::vector<Token>> outputs;
  std::vector<std::uint8_t> correct;
};

/// Decodes every prompt (concurrently over examples) and scores exact match.
Evaluation evaluate(const Decoder& decoder, std::span<const Example> dataset,
                    std::size_t threads = 0);

struct SweepGrid {
  std::vector<double> mu_values;
  std::vector<double> lambda_values;

  /// mu in {1,2,4,6,8} x {1e-4,1e-3,1e-2,1e-1}, ascending;
  /// lambda in {0.1,0.2,0.4,0.6,0.8,1.0}.
  static SweepGrid defaults();
};

void validate(const SweepGrid& grid);

enum class SweepStage { mu, lambda };

struct SweepStep {
  SweepStage stage = SweepStage::mu;
  double mu = 0.0;
  double lambda = 0.0;
  double dev_accuracy = 0.0;
};

struct SweepResult {
  double mu = 0.0;
  double lambda = 0.0;
  double mu_dev_accuracy = 0.0;
  double lambda_dev_accuracy = 0.0;
  /// Every evaluation in call order.
  std::vector<SweepStep> trace;
};

/// Stage 1 scores every mu with score_mu and keeps the best; stage 2 freezes
/// it and scores every lambda with score_lambda(mu*, lambda). Grid order is
/// the evaluation order. Ties go to the smaller value.
SweepResult two_stage_search(const SweepGrid& grid,
                             const std::function<double(double)>& score_mu,
                             const std::function<double(double, double)>& score_lambda);

struct EvalOptions {
  double alpha = 0.1;
  int max_new_tokens = 4;
  std::size_t threads = 0;
};

/// Stage 1 scores extrapolate(ft, early, mu) alone; stage 2 scores
/// contrastive decoding with strong = that model and weak = ft.
SweepResult sweep(const TensorMap& early, const TensorMap& ft, const ToyConfig& cfg,
                  const SweepGrid& grid, std::span<const Example> dev,
                  const EvalOptions& options = {});

struct PipelineConfig {
  TaskSpec task;
  ToyConfig model;
  OptimizerConfig optimizer;
  SweepGrid grid = SweepGrid::defaults();
  EvalOptions eval;
  int epochs = 2;
  /// Replace the searched value with a fixed one (the search still records
  /// a single evaluation for it).
  std::optional<double> fixed_mu;
  std::optional<double> fixed_lambda;
};

void validate(const PipelineConfig& config);

struct ConditionOutcome {
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<std::vector<Token>> test_outputs;
  std::vector<std::uint8_t> test_correct;
};

struct RunRecord {
  std::uint64_t seed = 0;
  double chosen_mu = 0.0;
  double chosen_lambda = 0.0;
  /// lambda of the contrastive baseline (strong = ft, weak = early), searched
  /// separately over the same lambda grid.
  double cd_lambda = 0.0;
  std::array<ConditionOutcome, 4> conditions;
  std::vector<SweepStep> sweep_trace;
  std::vector<TrainLogRow> train_log;

  ConditionOutcome& at(Condition c) { return conditions[static_cast<std::size_t>(c)]; }
  const ConditionOutcome& at(Condition c) const {
    return conditions[static_cast<std::size_t>(c)];
  }
};

struct PipelineArtifacts {
  Datasets data;
  TensorMap init;
  TensorMap early;
  TensorMap ft;
  TensorMap ep;
};

/// Trains from init (model seed = seed) for config.epochs epochs on the task's
/// train split, takes the last two checkpoints as early and ft, tunes on dev
/// and reports every condition on test. The task seed comes from config.task.
RunRecord run_pipeline(const PipelineConfig& config, std::uint64_t seed,
                       PipelineArtifacts* artifacts = nullptr);

struct AblationRecord {
  std::uint64_t seed = 0;
  double mu = 0.0;
  double lambda = 0.0;
  /// Test accuracy of the extrapolated model decoded alone.
  double ep_alone = 0.0;
  double weak_init = 0.0;
  double weak_early = 0.0;
  double weak_ft = 0.0;
};

/// Test accuracy of contrastive decoding with strong = ep and the given weak
/// model at (lambda, options.alpha).
double weak_model_accuracy(const PipelineArtifacts& artifacts, const TensorMap& weak,
                           const ToyConfig& cfg, double lambda, const EvalOptions& options);

/// Reuses a finished run: weak = ft and ep alone come from the record, init
/// and early are evaluated at the record's mu and lambda.
AblationRecord ablation_from_run(const PipelineConfig& config, const RunRecord& record,
                                 const PipelineArtifacts& artifacts);

AblationRecord weak_model_ablation(const PipelineConfig& config, std::uint64_t seed);

/// Seeds whose test accuracy under `condition` strictly exceeds finetune.
int success_count(std::span<const RunRecord> records, Condition condition);

/// Example indices in three parts by ascending length, ties by index; part i
/// holds sorted positions [floor(i n / 3), floor((i + 1) n / 3)).
std::array<std::vector<std::size_t>, 3> tercile_partition(std::span<const std::size_t> lengths);

struct Tercile {
  std::size_t size = 0;
  std::array<double, 4> accuracy{};
  /// accuracy minus finetune accuracy, per condition.
  std::array<double, 4> delta{};
};

using DifficultyReport = std::array<Tercile, 3>;

/// Terciles by the finetuned model's answer length on test (easy, medium,
/// hard). Over several records each entry is the mean over records.
DifficultyReport difficulty_report(const RunRecord& record);
DifficultyReport difficulty_report(std::span<const RunRecord> records);

}  // namespace epicode
