// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "epicode/extrapolate.hpp"
#include "epicode/harness.hpp"
#include "epicode/parallel.hpp"
#include "epicode/report.hpp"
#include "epicode/stats.hpp"
#include "epicode/theory.hpp"
#include "test_util.hpp"

using namespace epicode;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_seconds,
               const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o = body();
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs <= budget_seconds;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s %2d %s: %s [%.2f s / %.0f s%s]\n", pass ? "PASS" : "FAIL", id, name,
              o.detail.c_str(), secs, budget_seconds, in_time ? "" : ", over budget");
  std::fflush(stdout);
}

std::string num(double v) { return format_real(v); }

double rel_error(const TensorMap& a, const TensorMap& b) {
  double diff = 0.0, ref = 0.0;
  for (const auto& [name, tb] : b)
    for (std::size_t i = 0; i < tb.data.size(); ++i) {
      const double d = double(a.at(name).data[i]) - double(tb.data[i]);
      diff += d * d;
      ref += double(tb.data[i]) * double(tb.data[i]);
    }
  return std::sqrt(diff / ref);
}

ErrorScenario scenario(double lambda, double k, double rho, std::int64_t trials) {
  ErrorScenario s;
  s.epsilon = 1.0;
  s.lambda = lambda;
  s.k = k;
  s.rho = rho;
  s.trials = trials;
  s.seed = 2024;
  return s;
}

/// Pipeline runs shared by criteria 9 and 10.
struct SharedRuns {
  PipelineConfig config;
  std::vector<RunRecord> records;
  std::vector<PipelineArtifacts> artifacts;
  std::vector<AblationRecord> ablations;
};

}  // namespace

int main() {
  std::printf("acceptance: %zu worker thread(s)\n", default_threads());

  criterion(1, "extrapolation identity and inverse merge", 1.0, [] {
    CounterRng rng(101);
    bool identity = true;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto s = test::random_map(rng, 4);
      const auto w = test::random_like(rng, s);
      const auto same = extrapolate(s, w, {0.0});
      for (const auto& [name, t] : s) identity = identity && test::bits_equal(same.at(name).data, t.data);
      const double mu = 0.05 + 2.0 * rng.uniform();
      const auto ep = extrapolate(s, w, {mu});
      worst = std::max(worst, rel_error(interpolate(ep, w, 1.0 / (1.0 + mu)), s));
    }
    return Outcome{identity && worst < 1e-6,
                   std::string("mu=0 bit-exact ") + (identity ? "yes" : "NO") +
                       ", max relative error " + num(worst) + " (< 1e-6)"};
  });

  criterion(2, "contrastive decoding collapses at lambda = 0", 10.0, [] {
    int mismatches = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      const int vocab = 3 + int(i % 30);
      test::HashedProvider s(i, vocab, 0.5 + double(i % 7)), w(i + 500'000, vocab, 2.0);
      const std::vector<Token> prompt{Token(i % std::uint64_t(vocab)), Token((i / 3) % std::uint64_t(vocab))};
      DecodeLimits effective{6, std::nullopt};
      if (i % 2) effective.eos_token = Token(0);
      const double alpha = 0.05 + 0.9 * double(i % 10) / 10.0;
      if (greedy_decode(s, w, prompt, {0.0, alpha, effective}).tokens !=
          strong_only_decode(s, prompt, effective).tokens)
        ++mismatches;
    }
    return Outcome{mismatches == 0, std::to_string(mismatches) + " mismatches in 1000 instances"};
  });

  criterion(3, "mask soundness and argmax survival", 10.0, [] {
    const double alphas[] = {0.1, 0.5, 0.9};
    int masked_emitted = 0, argmax_masked = 0, steps = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      const int vocab = 4 + int(i % 20);
      test::HashedProvider s(i * 7 + 1, vocab, 3.0), w(i * 7 + 2, vocab, 3.0);
      const double alpha = alphas[i % 3];
      const double lambda = 0.2 * double(1 + i % 5);
      std::vector<Token> context{Token(i % std::uint64_t(vocab))};
      const auto out = greedy_decode(s, w, context, {lambda, alpha, {5, std::nullopt}});
      for (Token t : out.tokens) {
        const auto strong = s.next_logits(context);
        const auto mask = plausibility_mask(strong, alpha);
        if (!mask[std::size_t(t)]) ++masked_emitted;
        if (!mask[std::size_t(argmax(strong))]) ++argmax_masked;
        context.push_back(t);
        ++steps;
      }
    }
    return Outcome{masked_emitted == 0 && argmax_masked == 0,
                   std::to_string(steps) + " steps, masked emitted " + std::to_string(masked_emitted) +
                       ", argmax masked " + std::to_string(argmax_masked)};
  });

  criterion(4, "theory, correlated errors (rho = 1)", 60.0, [] {
    bool ok = true;
    std::string detail;
    for (double lambda : {0.1, 0.5, 1.0})
      for (double k : {1.5, 2.0, 4.0}) {
        const double target = std::abs(1.0 - lambda * (k - 1.0));
        const double got = estimate_error_std(scenario(lambda, k, 1.0, 1'000'000));
        const bool pass = target == 0.0 ? got < 1e-6 : std::abs(got - target) <= 0.01 * target;
        ok = ok && pass;
        detail += (detail.empty() ? "" : "; ") + std::string("l=") + num(lambda) + ",k=" + num(k) +
                  ": " + num(got) + " vs " + num(target) + (pass ? "" : " FAIL");
      }
    return Outcome{ok, detail};
  });

  criterion(5, "theory, independent errors (rho = 0)", 60.0, [] {
    bool ok = true;
    double worst = 0.0;
    for (double lambda : {0.1, 0.5, 1.0})
      for (double k : {1.5, 2.0, 4.0}) {
        const double target = (1 + lambda) * (1 + lambda) + lambda * lambda * k * k;
        const double sd = estimate_error_std(scenario(lambda, k, 0.0, 1'000'000));
        const double rel = std::abs(sd * sd - target) / target;
        worst = std::max(worst, rel);
        ok = ok && rel <= 0.02;
      }
    return Outcome{ok, "max relative variance error " + num(worst) + " over 9 points (<= 0.02)"};
  });

  criterion(6, "argmax flip-rate direction", 10.0, [] {
    Eigen::VectorXd optimal = Eigen::VectorXd::Zero(8);
    optimal[0] = 1.0;
    const auto independent = argmax_flip_rate(scenario(1.0, 2.0, 0.0, 100'000), optimal);
    const auto correlated = argmax_flip_rate(scenario(1.0, 2.0, 1.0, 100'000), optimal);
    const bool ok = independent.cd > independent.strong && correlated.cd == 0.0;
    return Outcome{ok, "rho=0: cd " + num(independent.cd) + " > strong " + num(independent.strong) +
                           "; rho=1: cd " + num(correlated.cd) + " (== 0)"};
  });

  criterion(7, "gradient check", 30.0, [] {
    ToyConfig cfg;
    TaskSpec task;
    const auto data = gen_dataset(task);
    const std::vector<Example> batch(data.train.begin(), data.train.begin() + 8);
    const auto r = grad_check(init(cfg), cfg, batch, {256, 1e-3, 1e-4, 9});
    return Outcome{r.max_relative_error < 1e-2 && r.coordinates_checked >= 200,
                   "max relative error " + num(r.max_relative_error) + " over " +
                       std::to_string(r.coordinates_checked) + " coordinates (< 1e-2)"};
  });

  criterion(8, "paired t-test p-values", 1.0, [] {
    const double headline = student_t_upper_tail(2.262, 9);
    bool ok = std::abs(headline - 0.025) <= 1e-3;
    double worst = 0.0;
    const std::pair<double, double> points[] = {{1.0, 1},  {0.5, 3},   {3.0, 5},  {1.812, 10},
                                                {-1.2, 7}, {2.5, 30},  {4.0, 2},  {1.96, 100},
                                                {6.0, 9},  {0.25, 15}};
    for (const auto& [t, df] : points) {
      boost::math::students_t ref(df);
      const double expected = boost::math::cdf(boost::math::complement(ref, t));
      worst = std::max(worst, std::abs(student_t_upper_tail(t, df) - expected));
    }
    ok = ok && worst <= 1e-3;
    return Outcome{ok, "p(2.262, 9) = " + num(headline) + ", max deviation from reference " +
                           num(worst) + " over 10 points"};
  });

  SharedRuns shared;
  criterion(9, "end-to-end pipeline, 10 seeds", 600.0, [&] {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      shared.artifacts.emplace_back();
      shared.records.push_back(run_pipeline(shared.config, seed, &shared.artifacts.back()));
    }
    const auto& runs = shared.records;
    auto mean = [&](Condition c) {
      double s = 0.0;
      for (const auto& r : runs) s += r.at(c).test_accuracy;
      return s / double(runs.size());
    };
    const double ft = mean(Condition::finetune), me = mean(Condition::me_only),
                 cd = mean(Condition::cd_only), ep = mean(Condition::epicode);
    const int wins = success_count(runs, Condition::epicode);
    const bool ok = ep >= me && ep >= cd && ep > ft && wins >= 8;
    const std::string detail = "mean test accuracy finetune " + num(ft) + ", me_only " + num(me) +
                         ", cd_only " + num(cd) + ", epicode " + num(ep) + "; epicode improved " +
                         std::to_string(wins) + "/10 seeds; epicode >= me_only " + (ep >= me ? "yes" : "NO") +
                              ", >= cd_only " + (ep >= cd ? "yes" : "NO") + ", > finetune " +
                              (ep > ft ? "yes" : "NO") + ", wins >= 8 " + (wins >= 8 ? "yes" : "NO");
    return Outcome{ok, detail};
  });
  std::printf("\n%s\n", summary_markdown(shared.records).c_str());

  criterion(10, "weak-model locality ablation, 10 seeds", 600.0, [&] {
    for (std::size_t i = 0; i < shared.records.size(); ++i)
      shared.ablations.push_back(
          ablation_from_run(shared.config, shared.records[i], shared.artifacts[i]));
    double init_mean = 0.0, early_mean = 0.0, ft_mean = 0.0;
    std::string violations;
    for (const auto& a : shared.ablations) {
      init_mean += a.weak_init / 10.0;
      early_mean += a.weak_early / 10.0;
      ft_mean += a.weak_ft / 10.0;
      if (a.weak_ft < a.weak_early || a.weak_ft < a.weak_init)
        violations += (violations.empty() ? "" : ",") + std::to_string(a.seed);
    }
    const bool ok = ft_mean >= early_mean && ft_mean >= init_mean;
    // Violations are informational; the criterion is on the means.
    return Outcome{ok, "mean accuracy weak=ft " + num(ft_mean) + ", weak=early " + num(early_mean) +
                           ", weak=init " + num(init_mean) + "; per-seed violations: " +
                           (violations.empty() ? "none" : violations)};
  });
  std::printf("\n%s\n", summary_markdown(std::span<const RunRecord>{}, shared.ablations).c_str());

  criterion(11, "sweep protocol: 20 mu then 6 lambda with mu frozen", 60.0, [] {
    PipelineConfig cfg;
    const auto data = gen_dataset(cfg.task);
    TrainState state = TrainState::fresh(init(cfg.model));
    const auto trained = train_epochs(state, cfg.model, data.train, cfg.optimizer, 2, 0);
    const auto& early = trained.checkpoints[0];
    const auto& ft = trained.checkpoints[1];

    std::vector<double> mu_calls;
    std::vector<std::pair<double, double>> lambda_calls;
    bool mu_after_lambda = false;
    const auto counted = two_stage_search(
        SweepGrid::defaults(),
        [&](double mu) {
          mu_after_lambda = mu_after_lambda || !lambda_calls.empty();
          mu_calls.push_back(mu);
          const auto model = as_provider(extrapolate(ft, early, {mu}), cfg.model);
          return evaluate(greedy_decoder(model, cfg.eval.max_new_tokens), data.dev).accuracy;
        },
        [&](double mu, double lambda) {
          lambda_calls.emplace_back(mu, lambda);
          const auto ep = extrapolate(ft, early, {mu});
          const auto s = as_provider(ep, cfg.model);
          const auto w = as_provider(ft, cfg.model);
          return evaluate(contrastive_decoder(s, w, lambda, cfg.eval.alpha, cfg.eval.max_new_tokens),
                          data.dev)
              .accuracy;
        });
    bool frozen = true;
    for (const auto& [mu, lambda] : lambda_calls) frozen = frozen && mu == counted.mu;

    const auto library = sweep(early, ft, cfg.model, SweepGrid::defaults(), data.dev, cfg.eval);
    bool trace_ok = library.trace.size() == 26;
    for (std::size_t i = 0; trace_ok && i < 26; ++i) {
      const auto& step = library.trace[i];
      trace_ok = i < 20 ? step.stage == SweepStage::mu && step.mu == SweepGrid::defaults().mu_values[i]
                        : step.stage == SweepStage::lambda && step.mu == library.mu;
    }
    const bool agree = library.mu == counted.mu && library.lambda == counted.lambda;
    const bool ok = mu_calls.size() == 20 && lambda_calls.size() == 6 && !mu_after_lambda && frozen &&
                    trace_ok && agree;
    return Outcome{ok, std::to_string(mu_calls.size()) + " mu then " +
                           std::to_string(lambda_calls.size()) + " lambda evaluations, mu frozen " +
                           (frozen ? "yes" : "NO") + ", library trace " + (trace_ok ? "ok" : "BAD") +
                           ", chosen (" + num(library.mu) + ", " + num(library.lambda) + ")"};
  });

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
