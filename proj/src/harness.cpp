#include "epicode/harness.hpp"

#include <algorithm>
#include <numeric>

#include "epicode/error.hpp"
#include "epicode/extrapolate.hpp"
#include "epicode/parallel.hpp"

namespace epicode {

namespace {

/// Index of the best score; ties (and only exact ties) go to the smaller value.
std::size_t pick_best(const std::vector<double>& values, const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (scores[i] > scores[best] || (scores[i] == scores[best] && values[i] < values[best]))
      best = i;
  return best;
}

double contrastive_accuracy(const TensorMap& strong, const TensorMap& weak,
                            const ToyConfig& cfg, double lambda,
                            std::span<const Example> data, const EvalOptions& options) {
  const auto s = as_provider(strong, cfg);
  const auto w = as_provider(weak, cfg);
  return evaluate(contrastive_decoder(s, w, lambda, options.alpha, options.max_new_tokens),
                  data, options.threads)
      .accuracy;
}

}  // namespace

const char* to_string(Condition c) {
  switch (c) {
    case Condition::finetune: return "finetune";
    case Condition::me_only: return "me_only";
    case Condition::cd_only: return "cd_only";
    case Condition::epicode: return "epicode";
  }
  return "?";
}

Condition condition_from_string(const std::string& name) {
  for (Condition c : kConditions)
    if (name == to_string(c)) return c;
  throw DataError("unknown condition: " + name);
}

Decoder greedy_decoder(const LogitProvider& model, int max_new_tokens) {
  const DecodeLimits limits{max_new_tokens, kEosToken};
  return [&model, limits](std::span<const Token> prompt) {
    return strong_only_decode(model, prompt, limits).tokens;
  };
}

Decoder contrastive_decoder(const LogitProvider& strong, const LogitProvider& weak,
                            double lambda, double alpha, int max_new_tokens) {
  const DecodePolicy policy{lambda, alpha, {max_new_tokens, kEosToken}};
  validate(policy);
  return [&strong, &weak, policy](std::span<const Token> prompt) {
    return greedy_decode(strong, weak, prompt, policy).tokens;
  };
}

std::span<const Token> answer_prefix(std::span<const Token> tokens) {
  const auto end = std::find(tokens.begin(), tokens.end(), kEosToken);
  return tokens.first(static_cast<std::size_t>(end - tokens.begin()));
}

bool answer_matches(std::span<const Token> generated, std::span<const Token> gold) {
  const auto a = answer_prefix(generated);
  const auto b = answer_prefix(gold);
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

Evaluation evaluate(const Decoder& decoder, std::span<const Example> dataset,
                    std::size_t threads) {
  if (dataset.empty()) throw DataError("cannot evaluate on an empty dataset");
  Evaluation out;
  out.outputs.resize(dataset.size());
  out.correct.resize(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    out.outputs[i] = decoder(dataset[i].prompt);
    out.correct[i] = answer_matches(out.outputs[i], dataset[i].answer) ? 1 : 0;
  });
  const auto hits = std::accumulate(out.correct.begin(), out.correct.end(), std::size_t{0});
  out.accuracy = double(hits) / double(dataset.size());
  return out;
}

SweepGrid SweepGrid::defaults() {
  SweepGrid g;
  g.mu_values = {1e-4, 2e-4, 4e-4, 6e-4, 8e-4, 1e-3, 2e-3, 4e-3, 6e-3, 8e-3,
                 1e-2, 2e-2, 4e-2, 6e-2, 8e-2, 0.1,  0.2,  0.4,  0.6,  0.8};
  g.lambda_values = {0.1, 0.2, 0.4, 0.6, 0.8, 1.0};
  return g;
}

void validate(const SweepGrid& g) {
  if (g.mu_values.empty()) throw DataError("sweep grid has no mu values");
  if (g.lambda_values.empty()) throw DataError("sweep grid has no lambda values");
  for (double m : g.mu_values)
    if (!(m >= 0) || !std::isfinite(m)) throw DataError("mu values must be finite and >= 0");
  for (double l : g.lambda_values)
    if (!(l >= 0) || !std::isfinite(l)) throw DataError("lambda values must be finite and >= 0");
}

SweepResult two_stage_search(const SweepGrid& grid,
                             const std::function<double(double)>& score_mu,
                             const std::function<double(double, double)>& score_lambda) {
  validate(grid);
  SweepResult out;
  std::vector<double> scores;
  for (double mu : grid.mu_values) {
    scores.push_back(score_mu(mu));
    out.trace.push_back({SweepStage::mu, mu, 0.0, scores.back()});
  }
  const auto best_mu = pick_best(grid.mu_values, scores);
  out.mu = grid.mu_values[best_mu];
  out.mu_dev_accuracy = scores[best_mu];

  scores.clear();
  for (double lambda : grid.lambda_values) {
    scores.push_back(score_lambda(out.mu, lambda));
    out.trace.push_back({SweepStage::lambda, out.mu, lambda, scores.back()});
  }
  const auto best_lambda = pick_best(grid.lambda_values, scores);
  out.lambda = grid.lambda_values[best_lambda];
  out.lambda_dev_accuracy = scores[best_lambda];
  return out;
}

SweepResult sweep(const TensorMap& early, const TensorMap& ft, const ToyConfig& cfg,
                  const SweepGrid& grid, std::span<const Example> dev,
                  const EvalOptions& options) {
  require_compat(early, ft);
  if (dev.empty()) throw DataError("sweep needs a non-empty dev set");
  TensorMap ep;
  double ep_mu = -1.0;
  auto extrapolated = [&](double mu) -> const TensorMap& {
    if (mu != ep_mu) {
      ep = extrapolate(ft, early, {mu});
      ep_mu = mu;
    }
    return ep;
  };
  return two_stage_search(
      grid,
      [&](double mu) {
        const auto model = as_provider(extrapolated(mu), cfg);
        return evaluate(greedy_decoder(model, options.max_new_tokens), dev, options.threads)
            .accuracy;
      },
      [&](double mu, double lambda) {
        return contrastive_accuracy(extrapolated(mu), ft, cfg, lambda, dev, options);
      });
}

void validate(const PipelineConfig& c) {
  validate(c.task);
  validate(c.model);
  validate(c.optimizer);
  validate(c.grid);
  validate(DecodePolicy{0.0, c.eval.alpha, {c.eval.max_new_tokens, kEosToken}});
  if (c.epochs < 2) throw DataError("pipeline needs at least 2 epochs");
  if (c.task.vocab_size != c.model.vocab_size)
    throw DataError("task vocab_size " + std::to_string(c.task.vocab_size) +
                    " differs from model vocab_size " + std::to_string(c.model.vocab_size));
  if (max_sequence_length(c.task) - 2 + c.eval.max_new_tokens > c.model.max_context)
    throw DataError("prompt plus generated tokens exceed the model context");
  if (c.task.n_dev < 1 || c.task.n_test < 1) throw DataError("pipeline needs dev and test examples");
  if (c.fixed_mu && !(*c.fixed_mu >= 0)) throw DataError("fixed mu must be >= 0");
  if (c.fixed_lambda && !(*c.fixed_lambda >= 0)) throw DataError("fixed lambda must be >= 0");
}

RunRecord run_pipeline(const PipelineConfig& config, std::uint64_t seed,
                       PipelineArtifacts* keep) {
  validate(config);
  PipelineArtifacts local;
  PipelineArtifacts& art = keep ? *keep : local;
  art.data = gen_dataset(config.task);

  ToyConfig cfg = config.model;
  cfg.seed = seed;
  art.init = init(cfg);
  TrainState state = TrainState::fresh(art.init);
  auto trained = train_epochs(state, cfg, art.data.train, config.optimizer, config.epochs, seed);
  const auto n = trained.checkpoints.size();
  art.early = std::move(trained.checkpoints[n - 2]);
  art.ft = std::move(trained.checkpoints[n - 1]);

  RunRecord rec;
  rec.seed = seed;
  rec.train_log = std::move(trained.log);

  SweepGrid grid = config.grid;
  if (config.fixed_mu) grid.mu_values = {*config.fixed_mu};
  if (config.fixed_lambda) grid.lambda_values = {*config.fixed_lambda};
  const auto& opts = config.eval;
  const auto& dev = art.data.dev;
  const auto& test = art.data.test;

  const auto chosen = sweep(art.early, art.ft, cfg, grid, dev, opts);
  rec.chosen_mu = chosen.mu;
  rec.chosen_lambda = chosen.lambda;
  rec.sweep_trace = chosen.trace;
  art.ep = extrapolate(art.ft, art.early, {chosen.mu});

  // Contrastive baseline gets its own lambda search on dev.
  std::vector<double> cd_scores;
  for (double lambda : grid.lambda_values)
    cd_scores.push_back(contrastive_accuracy(art.ft, art.early, cfg, lambda, dev, opts));
  const auto cd_best = pick_best(grid.lambda_values, cd_scores);
  rec.cd_lambda = grid.lambda_values[cd_best];

  auto record = [&](Condition c, double dev_accuracy, const Evaluation& e) {
    auto& slot = rec.at(c);
    slot.dev_accuracy = dev_accuracy;
    slot.test_accuracy = e.accuracy;
    slot.test_outputs = e.outputs;
    slot.test_correct = e.correct;
  };

  const auto ft_model = as_provider(art.ft, cfg);
  const auto early_model = as_provider(art.early, cfg);
  const auto ep_model = as_provider(art.ep, cfg);
  const auto ft_greedy = greedy_decoder(ft_model, opts.max_new_tokens);
  record(Condition::finetune, evaluate(ft_greedy, dev, opts.threads).accuracy,
         evaluate(ft_greedy, test, opts.threads));
  record(Condition::me_only, chosen.mu_dev_accuracy,
         evaluate(greedy_decoder(ep_model, opts.max_new_tokens), test, opts.threads));
  record(Condition::cd_only, cd_scores[cd_best],
         evaluate(contrastive_decoder(ft_model, early_model, rec.cd_lambda, opts.alpha,
                                      opts.max_new_tokens),
                  test, opts.threads));
  record(Condition::epicode, chosen.lambda_dev_accuracy,
         evaluate(contrastive_decoder(ep_model, ft_model, chosen.lambda, opts.alpha,
                                      opts.max_new_tokens),
                  test, opts.threads));
  return rec;
}

double weak_model_accuracy(const PipelineArtifacts& art, const TensorMap& weak,
                           const ToyConfig& cfg, double lambda, const EvalOptions& options) {
  return contrastive_accuracy(art.ep, weak, cfg, lambda, art.data.test, options);
}

AblationRecord ablation_from_run(const PipelineConfig& config, const RunRecord& rec,
                                 const PipelineArtifacts& art) {
  ToyConfig cfg = config.model;
  cfg.seed = rec.seed;
  AblationRecord out;
  out.seed = rec.seed;
  out.mu = rec.chosen_mu;
  out.lambda = rec.chosen_lambda;
  out.ep_alone = rec.at(Condition::me_only).test_accuracy;
  out.weak_ft = rec.at(Condition::epicode).test_accuracy;
  out.weak_init = weak_model_accuracy(art, art.init, cfg, rec.chosen_lambda, config.eval);
  out.weak_early = weak_model_accuracy(art, art.early, cfg, rec.chosen_lambda, config.eval);
  return out;
}

AblationRecord weak_model_ablation(const PipelineConfig& config, std::uint64_t seed) {
  PipelineArtifacts art;
  const auto rec = run_pipeline(config, seed, &art);
  return ablation_from_run(config, rec, art);
}

int success_count(std::span<const RunRecord> records, Condition condition) {
  int count = 0;
  for (const auto& r : records)
    if (r.at(condition).test_accuracy > r.at(Condition::finetune).test_accuracy) ++count;
  return count;
}

std::array<std::vector<std::size_t>, 3> tercile_partition(std::span<const std::size_t> lengths) {
  const auto n = lengths.size();
  if (n < 3) throw DataError("difficulty terciles need at least 3 examples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  std::array<std::vector<std::size_t>, 3> parts;
  for (std::size_t p = 0; p < 3; ++p)
    parts[p].assign(order.begin() + std::ptrdiff_t(p * n / 3),
                    order.begin() + std::ptrdiff_t((p + 1) * n / 3));
  return parts;
}

DifficultyReport difficulty_report(const RunRecord& rec) {
  const auto& ft = rec.at(Condition::finetune);
  const auto n = ft.test_correct.size();
  if (ft.test_outputs.size() != n) throw DataError("finetune outputs missing from run record");
  for (Condition c : kConditions)
    if (rec.at(c).test_correct.size() != n)
      throw DataError(std::string("per-example results missing for ") + to_string(c));
  std::vector<std::size_t> lengths(n);
  for (std::size_t i = 0; i < n; ++i) lengths[i] = answer_prefix(ft.test_outputs[i]).size();

  DifficultyReport report;
  const auto parts = tercile_partition(lengths);
  for (std::size_t p = 0; p < 3; ++p) {
    auto& t = report[p];
    t.size = parts[p].size();
    for (std::size_t c = 0; c < 4; ++c) {
      std::size_t hits = 0;
      for (auto i : parts[p]) hits += rec.conditions[c].test_correct[i];
      t.accuracy[c] = t.size ? double(hits) / double(t.size) : 0.0;
    }
    for (std::size_t c = 0; c < 4; ++c) t.delta[c] = t.accuracy[c] - t.accuracy[0];
  }
  return report;
}

DifficultyReport difficulty_report(std::span<const RunRecord> records) {
  if (records.empty()) throw DataError("difficulty report needs at least one run");
  DifficultyReport mean;
  for (const auto& r : records) {
    const auto one = difficulty_report(r);
    for (std::size_t p = 0; p < 3; ++p) {
      mean[p].size += one[p].size;
      for (std::size_t c = 0; c < 4; ++c) {
        mean[p].accuracy[c] += one[p].accuracy[c];
        mean[p].delta[c] += one[p].delta[c];
      }
    }
  }
  const double k = double(records.size());
  for (auto& t : mean) {
    t.size = static_cast<std::size_t>(std::llround(double(t.size) / k));
    for (std::size_t c = 0; c < 4; ++c) {
      t.accuracy[c] /= k;
      t.delta[c] /= k;
    }
  }
  return mean;
}

}  // namespace epicode
