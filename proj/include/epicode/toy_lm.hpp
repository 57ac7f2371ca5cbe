#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epicode/checkpoint.hpp"
#include "epicode/decode.hpp"
#include "epicode/example.hpp"

namespace epicode {

enum class Activation { gelu, identity };

/// Pre-norm decoder-only transformer with learned positions, causal
/// multi-head attention, a two-layer feed-forward block and an untied head.
struct ToyConfig {
  int vocab_size = 64;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 128;
  int max_context = 64;
  std::uint64_t seed = 0;
  /// Feed-forward nonlinearity; identity gives a linear feed-forward path.
  Activation activation = Activation::gelu;
};

void validate(const ToyConfig& cfg);

/// Tensor names and shapes of the parameter set, in canonical order:
///
///   tok_emb [V,d]   pos_emb [C,d]
///   blocks.{l}.ln1.gain [d]   blocks.{l}.ln1.bias [d]
///   blocks.{l}.attn.wq|wk|wv|wo [d,d]   blocks.{l}.attn.bq|bk|bv|bo [d]
///   blocks.{l}.ln2.gain [d]   blocks.{l}.ln2.bias [d]
///   blocks.{l}.mlp.w1 [d,F]   blocks.{l}.mlp.b1 [F]
///   blocks.{l}.mlp.w2 [F,d]   blocks.{l}.mlp.b2 [d]
///   ln_f.gain [d]   ln_f.bias [d]   head.w [d,V]   head.b [V]
///
/// Linear maps are stored [in, out] and applied to row vectors (y = x W + b).
std::map<std::string, std::vector<std::int64_t>> param_shapes(const ToyConfig& cfg);

/// Embeddings and weight matrices ~ N(0, 0.02^2); biases and layer-norm
/// offsets 0; layer-norm gains 1. Each tensor draws from its own CounterRng
/// stream keyed by (seed, FNV-1a hash of its name).
TensorMap init(const ToyConfig& cfg);

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
struct BlockWeights {
  RowVector<Scalar> ln1_gain, ln1_bias;
  Matrix<Scalar> wq, wk, wv, wo;
  RowVector<Scalar> bq, bk, bv, bo;
  RowVector<Scalar> ln2_gain, ln2_bias;
  Matrix<Scalar> w1, w2;
  RowVector<Scalar> b1, b2;
};

/// Dense working copy of a parameter set.
template <typename Scalar>
struct Weights {
  Matrix<Scalar> tok_emb, pos_emb;
  std::vector<BlockWeights<Scalar>> blocks;
  RowVector<Scalar> lnf_gain, lnf_bias;
  Matrix<Scalar> head_w;
  RowVector<Scalar> head_b;

  /// Throws DataError if names or shapes do not match param_shapes(cfg).
  static Weights from_tensors(const TensorMap& params, const ToyConfig& cfg);
  /// Same structure as params, all zeros.
  static Weights zeros_like(const ToyConfig& cfg);
  TensorMap to_tensors() const;
};

/// Logits for every position, shape [tokens.size(), V].
template <typename Scalar>
Matrix<Scalar> forward(const Weights<Scalar>& w, const ToyConfig& cfg,
                       std::span<const Token> tokens);

/// Logits at the final position only.
template <typename Scalar>
RowVector<Scalar> forward_last(const Weights<Scalar>& w, const ToyConfig& cfg,
                               std::span<const Token> tokens);

/// Mean cross-entropy over answer tokens of the batch. When grad is non-null
/// it receives d(loss)/d(weights) (accumulated, so pass zeros).
template <typename Scalar>
Scalar batch_loss(const Weights<Scalar>& w, const ToyConfig& cfg,
                  std::span<const Example> batch, Weights<Scalar>* grad);

/// TensorMap conveniences over the float instantiation.
std::vector<LogitVector> forward(const TensorMap& params, const ToyConfig& cfg,
                                 std::span<const Token> tokens);
double loss(const TensorMap& params, const ToyConfig& cfg, std::span<const Example> batch);
double loss_and_grad(const TensorMap& params, const ToyConfig& cfg,
                     std::span<const Example> batch, TensorMap& grad);

/// Defaults are toy-scale; betas follow the AdamW setting used for the
/// finetuning runs this library models.
struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  int batch_size = 32;

  /// Large-model preset: learning rate 3e-5, batch size 128.
  static OptimizerConfig large_model_preset();
};

void validate(const OptimizerConfig& opt);

struct TrainState {
  TensorMap params;
  TensorMap first_moments;
  TensorMap second_moments;
  std::int64_t step_count = 0;

  /// Zero moments, step 0.
  static TrainState fresh(TensorMap params);
};

/// One decoupled-weight-decay Adam update, elementwise in float32:
///
///   t  <- t + 1
///   m  <- b1 m + (1 - b1) g
///   v  <- b2 v + (1 - b2) g^2
///   p  <- p (1 - lr wd)
///   p  <- p - lr (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
///
/// Decay applies to every tensor, biases and gains included.
void adamw_step(TrainState& state, const TensorMap& grad, const OptimizerConfig& opt);

struct TrainLogRow {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
};

struct TrainOutput {
  /// One snapshot of the parameters after each epoch.
  std::vector<TensorMap> checkpoints;
  std::vector<TrainLogRow> log;
};

/// Minibatch AdamW training. Epoch e visits the dataset in the order of a
/// Fisher-Yates permutation drawn from CounterRng(shuffle_seed, e); batches
/// are consecutive slices of that order (the last may be short). Throws
/// NumericError on a non-finite loss.
TrainOutput train_epochs(TrainState& state, const ToyConfig& cfg,
                         std::span<const Example> dataset, const OptimizerConfig& opt,
                         int epochs, std::uint64_t shuffle_seed);

struct GradCheckOptions {
  int coordinates = 256;
  double step = 1e-3;
  double abs_tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  int coordinates_checked = 0;
};

/// Compares the float32 analytic gradient against central differences
/// (loss(p + h) - loss(p - h)) / 2h on a random subset of coordinates. The
/// difference quotient is evaluated by the double instantiation so that
/// float rounding in the loss does not swamp the quotient. Error per
/// coordinate is |a - n| / max(|a|, |n|, abs_tolerance).
GradCheckResult grad_check(const TensorMap& params, const ToyConfig& cfg,
                           std::span<const Example> batch,
                           const GradCheckOptions& options = {});

/// LogitProvider over a parameter set: next_logits(prefix) is the last row of
/// forward(prefix).
class ToyProvider final : public LogitProvider {
 public:
  ToyProvider(const TensorMap& params, const ToyConfig& cfg);

  LogitVector next_logits(std::span<const Token> prefix) const override;
  int vocab_size() const override { return cfg_.vocab_size; }

 private:
  ToyConfig cfg_;
  Weights<float> weights_;
};

inline ToyProvider as_provider(const TensorMap& params, const ToyConfig& cfg) {
  return ToyProvider(params, cfg);
}

}  // namespace epicode
