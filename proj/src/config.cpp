#include "epicode/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "epicode/error.hpp"

namespace epicode {

namespace {

using nlohmann::json;

json parse_object(const std::string& text, const char* what) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string(what) + " config: " + e.what());
  }
  if (!j.is_object()) throw DataError(std::string(what) + " config must be a JSON object");
  return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw DataError(std::string(what) + " config: unknown key '" + key + "'");
}

template <typename T>
void take(const json& j, const char* key, T& out, const char* what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(std::string(what) + " config: bad value for '" + key + "'");
  }
}

ToyConfig model_from(const json& j, ToyConfig c) {
  constexpr const char* w = "model";
  reject_unknown(j, {"vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_context", "seed",
                     "activation"}, w);
  take(j, "vocab_size", c.vocab_size, w);
  take(j, "d_model", c.d_model, w);
  take(j, "n_layers", c.n_layers, w);
  take(j, "n_heads", c.n_heads, w);
  take(j, "d_ff", c.d_ff, w);
  take(j, "max_context", c.max_context, w);
  take(j, "seed", c.seed, w);
  std::string activation;
  take(j, "activation", activation, w);
  if (activation == "gelu") c.activation = Activation::gelu;
  else if (activation == "identity") c.activation = Activation::identity;
  else if (!activation.empty()) throw DataError("model config: unknown activation " + activation);
  return c;
}

TaskSpec task_from(const json& j, TaskSpec s) {
  constexpr const char* w = "task";
  reject_unknown(j, {"kind", "vocab_size", "n_train", "n_dev", "n_test", "n_pairs", "chain_length",
                     "modulus", "seed"}, w);
  std::string kind;
  take(j, "kind", kind, w);
  if (!kind.empty()) s.kind = task_kind_from_string(kind);
  take(j, "vocab_size", s.vocab_size, w);
  take(j, "n_train", s.n_train, w);
  take(j, "n_dev", s.n_dev, w);
  take(j, "n_test", s.n_test, w);
  take(j, "n_pairs", s.n_pairs, w);
  take(j, "chain_length", s.chain_length, w);
  take(j, "modulus", s.modulus, w);
  take(j, "seed", s.seed, w);
  return s;
}

OptimizerConfig optimizer_from(const json& j, OptimizerConfig o) {
  constexpr const char* w = "optimizer";
  reject_unknown(j, {"preset", "beta1", "beta2", "eps", "learning_rate", "weight_decay",
                     "batch_size"}, w);
  std::string preset;
  take(j, "preset", preset, w);
  if (preset == "large_model") o = OptimizerConfig::large_model_preset();
  else if (preset == "default") o = OptimizerConfig{};
  else if (!preset.empty()) throw DataError("optimizer config: unknown preset " + preset);
  take(j, "beta1", o.beta1, w);
  take(j, "beta2", o.beta2, w);
  take(j, "eps", o.eps, w);
  take(j, "learning_rate", o.learning_rate, w);
  take(j, "weight_decay", o.weight_decay, w);
  take(j, "batch_size", o.batch_size, w);
  return o;
}

SweepGrid grid_from(const json& j, SweepGrid g) {
  constexpr const char* w = "grid";
  reject_unknown(j, {"mu_values", "lambda_values"}, w);
  take(j, "mu_values", g.mu_values, w);
  take(j, "lambda_values", g.lambda_values, w);
  return g;
}

const json& section(const json& j, const char* key) {
  const auto& s = j.at(key);
  if (!s.is_object()) throw DataError(std::string("pipeline config: '") + key + "' must be an object");
  return s;
}

}  // namespace

ToyConfig model_from_json(const std::string& text, ToyConfig base) {
  return model_from(parse_object(text, "model"), base);
}

TaskSpec task_from_json(const std::string& text, TaskSpec base) {
  return task_from(parse_object(text, "task"), base);
}

OptimizerConfig optimizer_from_json(const std::string& text, OptimizerConfig base) {
  return optimizer_from(parse_object(text, "optimizer"), base);
}

SweepGrid grid_from_json(const std::string& text, SweepGrid base) {
  return grid_from(parse_object(text, "grid"), std::move(base));
}

PipelineConfig pipeline_from_json(const std::string& text, PipelineConfig c) {
  constexpr const char* w = "pipeline";
  const auto j = parse_object(text, w);
  reject_unknown(j, {"task", "model", "optimizer", "grid", "alpha", "max_new_tokens", "epochs",
                     "mu", "lambda"}, w);
  if (j.contains("task")) c.task = task_from(section(j, "task"), c.task);
  if (j.contains("model")) c.model = model_from(section(j, "model"), c.model);
  if (j.contains("optimizer")) c.optimizer = optimizer_from(section(j, "optimizer"), c.optimizer);
  if (j.contains("grid")) c.grid = grid_from(section(j, "grid"), c.grid);
  take(j, "alpha", c.eval.alpha, w);
  take(j, "max_new_tokens", c.eval.max_new_tokens, w);
  take(j, "epochs", c.epochs, w);
  if (j.contains("mu")) {
    double mu = 0.0;
    take(j, "mu", mu, w);
    c.fixed_mu = mu;
  }
  if (j.contains("lambda")) {
    double lambda = 0.0;
    take(j, "lambda", lambda, w);
    c.fixed_lambda = lambda;
  }
  return c;
}

namespace {

json model_json(const ToyConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},     {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},           {"max_context", c.max_context},
          {"seed", c.seed},
          {"activation", c.activation == Activation::gelu ? "gelu" : "identity"}};
}

json task_json(const TaskSpec& s) {
  return {{"kind", to_string(s.kind)}, {"vocab_size", s.vocab_size}, {"n_train", s.n_train},
          {"n_dev", s.n_dev},          {"n_test", s.n_test},         {"n_pairs", s.n_pairs},
          {"chain_length", s.chain_length}, {"modulus", s.modulus},  {"seed", s.seed}};
}

}  // namespace

std::string to_json(const ToyConfig& cfg) { return model_json(cfg).dump(2); }

std::string to_json(const TaskSpec& spec) { return task_json(spec).dump(2); }

std::string to_json(const PipelineConfig& c) {
  const auto& o = c.optimizer;
  json j{{"task", task_json(c.task)},
         {"model", model_json(c.model)},
         {"optimizer",
          {{"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps},
           {"learning_rate", o.learning_rate}, {"weight_decay", o.weight_decay},
           {"batch_size", o.batch_size}}},
         {"grid", {{"mu_values", c.grid.mu_values}, {"lambda_values", c.grid.lambda_values}}},
         {"alpha", c.eval.alpha},
         {"max_new_tokens", c.eval.max_new_tokens},
         {"epochs", c.epochs}};
  if (c.fixed_mu) j["mu"] = *c.fixed_mu;
  if (c.fixed_lambda) j["lambda"] = *c.fixed_lambda;
  return j.dump(2);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace epicode
