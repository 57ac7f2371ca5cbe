#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "epicode/checkpoint.hpp"
#include "epicode/config.hpp"
#include "epicode/error.hpp"
#include "epicode/extrapolate.hpp"
#include "epicode/harness.hpp"
#include "epicode/parallel.hpp"
#include "epicode/report.hpp"
#include "epicode/stats.hpp"
#include "epicode/theory.hpp"

namespace fs = std::filesystem;
using namespace epicode;

namespace {

enum class LogLevel { quiet, info, debug };

struct Global {
  LogLevel log_level = LogLevel::info;
  std::size_t threads = 0;
};

Global global;

template <typename... Args>
void log_info(const Args&... args) {
  if (global.log_level == LogLevel::quiet) return;
  ((std::cerr << args), ...);
  std::cerr << '\n';
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

ToyConfig load_model(const std::string& path) {
  return path.empty() ? ToyConfig{} : model_from_json(read_text(path));
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, int count) {
  if (count < 1) throw DataError("--seeds must be >= 1");
  std::vector<std::uint64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(first + std::uint64_t(i));
  return out;
}

/// "file.csv:column", split at the last colon.
std::vector<double> load_column(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon + 1 == spec.size())
    throw DataError("expected <file.csv>:<column>, got '" + spec + "'");
  return read_csv_column(spec.substr(0, colon), spec.substr(colon + 1));
}

struct PipelineFlags {
  std::string task_file;
  std::string config_file;
  int seeds = 10;
  std::uint64_t first_seed = 0;
  std::string out_dir;
  std::optional<double> alpha;
  std::optional<double> mu;
  std::optional<double> lambda;
  std::optional<int> epochs;
  std::optional<int> max_new_tokens;

  void attach(CLI::App* app) {
    app->add_option("--task", task_file, "Task spec JSON");
    app->add_option("--config", config_file, "Pipeline JSON (task, model, optimizer, grid, ...)");
    app->add_option("--seeds", seeds, "Number of seeds")->capture_default_str();
    app->add_option("--first-seed", first_seed, "First seed")->capture_default_str();
    app->add_option("--out-dir", out_dir, "Output directory")->required();
    app->add_option("--alpha", alpha, "Plausibility threshold");
    app->add_option("--mu", mu, "Fix mu instead of searching it");
    app->add_option("--lambda", lambda, "Fix lambda instead of searching it");
    app->add_option("--epochs", epochs, "Training epochs (last two are early and ft)");
    app->add_option("--max-new-tokens", max_new_tokens, "Decode length limit");
  }

  PipelineConfig resolve() const {
    PipelineConfig c;
    if (!config_file.empty()) c = pipeline_from_json(read_text(config_file), c);
    if (!task_file.empty()) c.task = task_from_json(read_text(task_file), c.task);
    if (alpha) c.eval.alpha = *alpha;
    if (mu) c.fixed_mu = *mu;
    if (lambda) c.fixed_lambda = *lambda;
    if (epochs) c.epochs = *epochs;
    if (max_new_tokens) c.eval.max_new_tokens = *max_new_tokens;
    c.eval.threads = global.threads;
    validate(c);
    return c;
  }
};

std::vector<RunRecord> run_seeds(const PipelineConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                 std::vector<AblationRecord>* ablations) {
  std::vector<RunRecord> records;
  for (auto seed : seeds) {
    const auto start = std::chrono::steady_clock::now();
    PipelineArtifacts art;
    records.push_back(run_pipeline(cfg, seed, &art));
    const auto& r = records.back();
    if (ablations) ablations->push_back(ablation_from_run(cfg, r, art));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log_info("seed ", seed, ": mu*=", r.chosen_mu, " lambda*=", r.chosen_lambda,
             " finetune=", r.at(Condition::finetune).test_accuracy,
             " epicode=", r.at(Condition::epicode).test_accuracy, " (", secs, " s)");
  }
  return records;
}

void write_pipeline_outputs(const fs::path& dir, const PipelineConfig& cfg,
                            const std::vector<RunRecord>& records,
                            const std::vector<AblationRecord>& ablations) {
  ensure_dir(dir);
  {
    std::ofstream out(dir / "config.json");
    out << to_json(cfg) << '\n';
  }
  write_runs_csv(dir / "runs.csv", records);
  write_accuracy_csv(dir / "test_accuracy.csv", records);
  write_examples_csv(dir / "examples.csv", records);
  write_sweep_csv(dir / "sweep.csv", records);
  if (!ablations.empty()) write_ablation_csv(dir / "ablation.csv", ablations);
  std::ofstream md(dir / "summary.md");
  md << summary_markdown(records, ablations);
}

void print_file(const fs::path& path) { std::cout << read_text(path); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Checkpoint extrapolation, contrastive decoding and the experiment harness"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "quiet | info | debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}))
      ->capture_default_str();
  app.add_option("--threads", global.threads, "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();

  // extrapolate
  std::string strong_path, weak_path, out_path, a_path, b_path;
  double mu = 0.0, t = 0.0;
  auto* extrap = app.add_subcommand("extrapolate", "strong + mu (strong - weak)");
  extrap->add_option("--strong", strong_path)->required();
  extrap->add_option("--weak", weak_path)->required();
  extrap->add_option("--mu", mu)->required();
  extrap->add_option("--out", out_path)->required();

  auto* interp = app.add_subcommand("interpolate", "t a + (1 - t) b");
  interp->add_option("--a", a_path)->required();
  interp->add_option("--b", b_path)->required();
  interp->add_option("--t", t)->required();
  interp->add_option("--out", out_path)->required();

  auto* dist = app.add_subcommand("distance", "Euclidean distance between two checkpoints");
  dist->add_option("--a", a_path)->required();
  dist->add_option("--b", b_path)->required();

  // decode / evaluate
  std::string model_config, prompt_file, data_file;
  double lambda = 0.0, alpha = 0.1;
  int max_new_tokens = 16;
  int eos = kEosToken;
  int eval_max_new_tokens = EvalOptions{}.max_new_tokens;
  auto* decode = app.add_subcommand("decode", "Contrastive greedy decoding of a prompt file");
  decode->add_option("--strong", strong_path)->required();
  decode->add_option("--weak", weak_path, "Weak checkpoint (defaults to the strong one)");
  decode->add_option("--model-config", model_config, "Model JSON");
  decode->add_option("--lambda", lambda)->capture_default_str();
  decode->add_option("--alpha", alpha)->capture_default_str();
  decode->add_option("--prompt-file", prompt_file, "JSON-lines with a \"prompt\" array")->required();
  decode->add_option("--out", out_path, "Output JSON-lines")->required();
  decode->add_option("--max-new-tokens", max_new_tokens)->capture_default_str();
  decode->add_option("--eos", eos, "Stop token (negative disables)")->capture_default_str();

  auto* eval = app.add_subcommand("evaluate", "Exact-match accuracy on a dataset");
  eval->add_option("--strong", strong_path)->required();
  eval->add_option("--weak", weak_path, "Weak checkpoint; omit for plain greedy decoding");
  eval->add_option("--model-config", model_config);
  eval->add_option("--data", data_file)->required();
  eval->add_option("--lambda", lambda)->capture_default_str();
  eval->add_option("--alpha", alpha)->capture_default_str();
  eval->add_option("--max-new-tokens", eval_max_new_tokens)->capture_default_str();

  // train-toy
  std::string data_path, out_dir, optimizer_file;
  int epochs = 2;
  std::uint64_t seed = 0;
  auto* train = app.add_subcommand("train-toy", "Train the toy model, one checkpoint per epoch");
  train->add_option("--config", model_config, "Model JSON");
  train->add_option("--optimizer", optimizer_file, "Optimizer JSON");
  train->add_option("--data", data_path)->required();
  train->add_option("--epochs", epochs)->capture_default_str();
  train->add_option("--seed", seed)->capture_default_str();
  train->add_option("--out-dir", out_dir)->required();

  // gen-data
  std::string task_file;
  std::optional<std::uint64_t> task_seed;
  auto* gen = app.add_subcommand("gen-data", "Write train/dev/test JSON-lines for a task");
  gen->add_option("--task", task_file, "Task spec JSON");
  gen->add_option("--seed", task_seed, "Overrides the task seed");
  gen->add_option("--out-dir", out_dir)->required();

  // sweep
  std::string early_path, ft_path, dev_path, grid_file;
  auto* sw = app.add_subcommand("sweep", "Two-stage mu then lambda search on a dev set");
  sw->add_option("--early", early_path)->required();
  sw->add_option("--ft", ft_path)->required();
  sw->add_option("--model-config", model_config);
  sw->add_option("--dev", dev_path)->required();
  sw->add_option("--grid", grid_file, "Grid JSON");
  sw->add_option("--alpha", alpha)->capture_default_str();
  sw->add_option("--max-new-tokens", eval_max_new_tokens)->capture_default_str();

  // pipeline / ablation
  PipelineFlags pipeline_flags, ablation_flags;
  auto* pipe = app.add_subcommand("pipeline", "Four-condition pipeline over several seeds");
  pipeline_flags.attach(pipe);
  auto* abl = app.add_subcommand("ablation", "Pipeline plus the weak-model ablation");
  ablation_flags.attach(abl);

  // theory
  ErrorScenario scenario;
  double margin = 1.0;
  auto* theory = app.add_subcommand("theory", "Monte Carlo check of contrasted logit error");
  theory->add_option("--epsilon", scenario.epsilon)->capture_default_str();
  theory->add_option("--k", scenario.k)->capture_default_str();
  theory->add_option("--lambda", scenario.lambda)->capture_default_str();
  theory->add_option("--rho", scenario.rho)->capture_default_str();
  theory->add_option("--vocab", scenario.vocab_size)->capture_default_str();
  theory->add_option("--trials", scenario.trials)->capture_default_str();
  theory->add_option("--seed", scenario.seed)->capture_default_str();
  theory->add_option("--margin", margin, "Optimal logits are margin on token 0, zero elsewhere")
      ->capture_default_str();

  // ttest / report
  std::string col_a, col_b;
  auto* ttest = app.add_subcommand("ttest", "Paired one-tailed t-test, H1: a > b");
  ttest->add_option("--a", col_a, "<file.csv>:<column>")->required();
  ttest->add_option("--b", col_b, "<file.csv>:<column>")->required();

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Markdown summary from pipeline/ablation CSVs");
  report->add_option("--dir", report_dir, "Directory with runs.csv")->required();
  report->add_option("--out", out_path, "Write here instead of standard output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const auto leftover = app.remaining();
    if (e.get_exit_code() != 0 && app.get_subcommands().empty() && !leftover.empty()) {
      std::cerr << "ERROR: unknown subcommand: " << leftover.front() << "\n" << app.help();
      return 1;
    }
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }
  global.log_level = log_level == "quiet" ? LogLevel::quiet
                     : log_level == "debug" ? LogLevel::debug
                                            : LogLevel::info;

  try {
    if (*extrap) {
      const auto s = load(strong_path);
      const auto w = load(weak_path);
      save(extrapolate(s, w, {mu}), out_path);
    } else if (*interp) {
      save(interpolate(load(a_path), load(b_path), t), out_path);
    } else if (*dist) {
      std::cout << format_real(param_distance(load(a_path), load(b_path))) << '\n';
    } else if (*decode) {
      const auto cfg = load_model(model_config);
      const auto strong_params = load(strong_path);
      const auto weak_params = weak_path.empty() ? strong_params : load(weak_path);
      const auto strong = as_provider(strong_params, cfg);
      const auto weak = as_provider(weak_params, cfg);
      DecodePolicy policy{lambda, alpha, {max_new_tokens, std::nullopt}};
      if (eos >= 0) policy.limits.eos_token = eos;
      validate(policy);
      const auto prompts = read_jsonl(prompt_file);
      std::vector<Generation> results(prompts.size());
      parallel_for(prompts.size(), global.threads, [&](std::size_t i) {
        results[i] = greedy_decode(strong, weak, prompts[i].prompt, policy);
      });
      std::ofstream out(out_path);
      if (!out) throw DataError("cannot write " + out_path);
      for (std::size_t i = 0; i < prompts.size(); ++i)
        out << nlohmann::json{{"input", prompts[i].prompt},
                              {"output", results[i].tokens},
                              {"scores", results[i].scores}}
                   .dump()
            << '\n';
    } else if (*eval) {
      const auto cfg = load_model(model_config);
      const auto data = read_jsonl(data_file);
      const auto strong_params = load(strong_path);
      const auto strong = as_provider(strong_params, cfg);
      double accuracy = 0.0;
      if (weak_path.empty()) {
        accuracy = evaluate(greedy_decoder(strong, eval_max_new_tokens), data, global.threads).accuracy;
      } else {
        const auto weak_params = load(weak_path);
        const auto weak = as_provider(weak_params, cfg);
        accuracy = evaluate(contrastive_decoder(strong, weak, lambda, alpha, eval_max_new_tokens), data,
                            global.threads)
                       .accuracy;
      }
      std::cout << format_real(accuracy) << '\n';
    } else if (*train) {
      auto cfg = load_model(model_config);
      cfg.seed = seed;
      const auto opt =
          optimizer_file.empty() ? OptimizerConfig{} : optimizer_from_json(read_text(optimizer_file));
      const auto data = read_jsonl(data_path);
      for (const auto& ex : data)
        if (ex.answer.empty()) throw DataError(data_path + ": every example needs an answer");
      TrainState state = TrainState::fresh(init(cfg));
      const auto out = train_epochs(state, cfg, data, opt, epochs, seed);
      ensure_dir(out_dir);
      for (std::size_t e = 0; e < out.checkpoints.size(); ++e) {
        const auto path = fs::path(out_dir) / ("epoch" + std::to_string(e + 1) + ".safetensors");
        save(out.checkpoints[e], path);
        std::cout << path.string() << '\n';
      }
      write_train_log_csv(fs::path(out_dir) / "train_log.csv", out.log);
      log_info("final loss ", out.log.back().loss);
    } else if (*gen) {
      auto spec = task_file.empty() ? TaskSpec{} : task_from_json(read_text(task_file));
      if (task_seed) spec.seed = *task_seed;
      const auto d = gen_dataset(spec);
      ensure_dir(out_dir);
      write_jsonl(fs::path(out_dir) / "train.jsonl", d.train);
      write_jsonl(fs::path(out_dir) / "dev.jsonl", d.dev);
      write_jsonl(fs::path(out_dir) / "test.jsonl", d.test);
      std::cout << d.train.size() << ',' << d.dev.size() << ',' << d.test.size() << '\n';
    } else if (*sw) {
      const auto cfg = load_model(model_config);
      const auto grid = grid_file.empty() ? SweepGrid::defaults() : grid_from_json(read_text(grid_file));
      const auto dev = read_jsonl(dev_path);
      const auto r = sweep(load(early_path), load(ft_path), cfg, grid, dev,
                           {alpha, eval_max_new_tokens, global.threads});
      std::cout << "stage,mu,lambda,dev_accuracy\n";
      for (const auto& s : r.trace)
        std::cout << (s.stage == SweepStage::mu ? "mu" : "lambda") << ',' << format_real(s.mu) << ','
                  << format_real(s.lambda) << ',' << format_real(s.dev_accuracy) << '\n';
      std::cout << "chosen," << format_real(r.mu) << ',' << format_real(r.lambda) << ','
                << format_real(r.lambda_dev_accuracy) << '\n';
    } else if (*pipe || *abl) {
      const bool with_ablation = bool(*abl);
      const auto& flags = with_ablation ? ablation_flags : pipeline_flags;
      const auto cfg = flags.resolve();
      std::vector<AblationRecord> ablations;
      const auto records =
          run_seeds(cfg, seed_list(flags.first_seed, flags.seeds), with_ablation ? &ablations : nullptr);
      write_pipeline_outputs(flags.out_dir, cfg, records, ablations);
      print_file(fs::path(flags.out_dir) / (with_ablation ? "ablation.csv" : "test_accuracy.csv"));
    } else if (*theory) {
      Eigen::VectorXd optimal = Eigen::VectorXd::Zero(std::max(scenario.vocab_size, 0));
      if (optimal.size() > 0) optimal[0] = margin;
      const double estimated = estimate_error_std(scenario, global.threads);
      const double predicted = predicted_error_std(scenario);
      const double bound = literal_lower_bound(scenario);
      const auto flips = argmax_flip_rate(scenario, optimal, global.threads);
      std::cout << "epsilon,k,lambda,rho,vocab,trials,seed,estimated_std,predicted_std,"
                   "relative_error,literal_bound,bound_differs,flip_rate_cd,flip_rate_strong\n";
      std::cout << format_real(scenario.epsilon) << ',' << format_real(scenario.k) << ','
                << format_real(scenario.lambda) << ',' << format_real(scenario.rho) << ','
                << scenario.vocab_size << ',' << scenario.trials << ',' << scenario.seed << ','
                << format_real(estimated) << ',' << format_real(predicted) << ','
                << format_real(predicted > 0 ? std::abs(estimated - predicted) / predicted
                                             : std::abs(estimated))
                << ',' << format_real(bound) << ',' << (scenario.rho == 1.0 && bound < 0 ? 1 : 0)
                << ',' << format_real(flips.cd) << ',' << format_real(flips.strong) << '\n';
    } else if (*ttest) {
      const auto r = paired_t_test(load_column(col_a), load_column(col_b));
      std::cout << "t,df,p_one_tailed\n"
                << format_real(r.t_statistic) << ',' << r.degrees_of_freedom << ','
                << format_real(r.p_value_one_tailed) << '\n';
    } else if (*report) {
      const auto records = read_runs(report_dir);
      const auto ablation_path = fs::path(report_dir) / "ablation.csv";
      const auto ablations = fs::exists(ablation_path) ? read_ablation_csv(ablation_path)
                                                       : std::vector<AblationRecord>{};
      const auto md = summary_markdown(records, ablations);
      if (out_path.empty()) {
        std::cout << md;
      } else {
        std::ofstream out(out_path);
        if (!out) throw DataError("cannot write " + out_path);
        out << md;
      }
    }
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
