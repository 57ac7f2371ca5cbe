#include "epicode/theory.hpp"

#include <cmath>
#include <vector>

#include "epicode/error.hpp"
#include "epicode/parallel.hpp"

namespace epicode {

namespace {

constexpr std::int64_t kBlockTrials = 4096;

struct BlockStats {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::int64_t flips_cd = 0;
  std::int64_t flips_strong = 0;
};

Eigen::Index first_argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Runs every trial once; the task (if any) drives flip counting.
std::vector<BlockStats> simulate(const ErrorScenario& s, const Eigen::VectorXd* task,
                                 std::size_t threads) {
  validate(s);
  const auto blocks =
      static_cast<std::size_t>((s.trials + kBlockTrials - 1) / kBlockTrials);
  std::vector<BlockStats> stats(blocks);
  const Eigen::Index truth = task ? first_argmax(*task) : 0;
  parallel_for(blocks, threads, [&](std::size_t b) {
    BlockStats& out = stats[b];
    const auto begin = static_cast<std::int64_t>(b) * kBlockTrials;
    const auto end = std::min(s.trials, begin + kBlockTrials);
    for (std::int64_t trial = begin; trial < end; ++trial) {
      const auto pair = sample_trial(s, trial);
      const Eigen::VectorXd err = cd_error(pair.strong, pair.weak, s.lambda);
      out.sum += err.sum();
      out.sum_sq += err.squaredNorm();
      if (task) {
        if (first_argmax(*task + err) != truth) ++out.flips_cd;
        if (first_argmax(*task + pair.strong) != truth) ++out.flips_strong;
      }
    }
  });
  return stats;
}

}  // namespace

void validate(const ErrorScenario& s) {
  if (!(s.epsilon > 0) || !std::isfinite(s.epsilon)) throw DataError("epsilon must be positive");
  if (!(s.k > 1) || !std::isfinite(s.k)) throw DataError("k must exceed 1");
  if (!(s.lambda >= 0) || !std::isfinite(s.lambda)) throw DataError("lambda must be non-negative");
  if (!(s.rho >= 0 && s.rho <= 1)) throw DataError("rho must lie in [0, 1]");
  if (s.vocab_size < 2) throw DataError("vocab_size must be >= 2");
  if (s.trials < 1) throw DataError("trials must be >= 1");
}

ErrorPair sample_error_pair(const ErrorScenario& s, CounterRng& rng) {
  const double noise = std::sqrt(1.0 - s.rho * s.rho);
  ErrorPair pair{Eigen::VectorXd(s.vocab_size), Eigen::VectorXd(s.vocab_size)};
  for (int v = 0; v < s.vocab_size; ++v) {
    const double ds = s.epsilon * rng.normal();
    const double eta = s.epsilon * rng.normal();
    pair.strong[v] = ds;
    pair.weak[v] = s.k * (s.rho * ds + noise * eta);
  }
  return pair;
}

ErrorPair sample_trial(const ErrorScenario& s, std::int64_t trial) {
  CounterRng rng(s.seed, static_cast<std::uint64_t>(trial));
  return sample_error_pair(s, rng);
}

double estimate_error_std(const ErrorScenario& s, std::size_t threads) {
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& b : simulate(s, nullptr, threads)) {
    sum += b.sum;
    sum_sq += b.sum_sq;
  }
  const double n = static_cast<double>(s.trials) * s.vocab_size;
  if (n < 2) return 0.0;
  const double var = (sum_sq - sum * sum / n) / (n - 1);
  return std::sqrt(std::max(var, 0.0));
}

double predicted_error_std(const ErrorScenario& s) {
  const double a = 1.0 + s.lambda;
  const double b = s.lambda * s.k;
  return s.epsilon * std::sqrt(std::max(0.0, a * a + b * b - 2.0 * s.rho * a * b));
}

double literal_lower_bound(const ErrorScenario& s) {
  return (1.0 - s.lambda * (s.k - 1.0)) * s.epsilon;
}

FlipRates argmax_flip_rate(const ErrorScenario& s, const Eigen::VectorXd& optimal_logits,
                           std::size_t threads) {
  if (optimal_logits.size() != s.vocab_size)
    throw DataError("optimal logits length must equal vocab_size");
  if (!optimal_logits.allFinite()) throw DataError("optimal logits must be finite");
  std::int64_t cd = 0, strong = 0;
  for (const auto& b : simulate(s, &optimal_logits, threads)) {
    cd += b.flips_cd;
    strong += b.flips_strong;
  }
  const auto n = static_cast<double>(s.trials);
  return {static_cast<double>(cd) / n, static_cast<double>(strong) / n};
}

}  // namespace epicode
