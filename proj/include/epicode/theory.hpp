#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "epicode/error.hpp"
#include "epicode/random.hpp"

namespace epicode {

/// One Monte Carlo experiment on logit errors.
///
/// Per vocabulary component, the strong model's error is delta_s ~ N(0, eps^2)
/// and the weak model's is delta_w = k (rho delta_s + sqrt(1 - rho^2) eta),
/// eta ~ N(0, eps^2) independent; so Std(delta_w) = k eps and
/// Corr(delta_s, delta_w) = rho. Components are mutually independent.
struct ErrorScenario {
  double epsilon = 1.0;
  double k = 2.0;
  double lambda = 0.5;
  double rho = 1.0;
  int vocab_size = 8;
  std::int64_t trials = 1'000'000;
  std::uint64_t seed = 0;
};

void validate(const ErrorScenario& scenario);

struct ErrorPair {
  Eigen::VectorXd strong;
  Eigen::VectorXd weak;
};

/// Draws one pair from rng. Component v consumes two consecutive normals:
/// first delta_s[v] / eps, then eta[v] / eps.
ErrorPair sample_error_pair(const ErrorScenario& scenario, CounterRng& rng);

/// The pair for one trial, drawn from the substream CounterRng(seed, trial).
ErrorPair sample_trial(const ErrorScenario& scenario, std::int64_t trial);

/// (1 + lambda) delta_s - lambda delta_w.
template <typename StrongDerived, typename WeakDerived>
auto cd_error(const Eigen::MatrixBase<StrongDerived>& delta_s,
              const Eigen::MatrixBase<WeakDerived>& delta_w, double lambda) {
  if (delta_s.size() != delta_w.size())
    throw DataError("cd_error: length mismatch");
  using Scalar = typename StrongDerived::Scalar;
  return (Scalar(1 + lambda) * delta_s.derived() - Scalar(lambda) * delta_w.derived()).eval();
}

/// Pooled sample standard deviation of all cd_error components over all
/// trials (per-component reading of the error variance). Bit-identical for
/// any thread count: trials are summed in fixed blocks folded in order.
double estimate_error_std(const ErrorScenario& scenario, std::size_t threads = 0);

/// Closed form for general rho:
///   eps * sqrt((1 + lambda)^2 + lambda^2 k^2 - 2 rho lambda (1 + lambda) k).
/// rho = 1 gives |1 - lambda (k - 1)| eps, rho = 0 gives
/// sqrt((1 + lambda)^2 + lambda^2 k^2) eps.
double predicted_error_std(const ErrorScenario& scenario);

/// (1 - lambda (k - 1)) eps without the absolute value. Negative when
/// lambda (k - 1) > 1, where the achievable std is its magnitude.
double literal_lower_bound(const ErrorScenario& scenario);

struct FlipRates {
  double cd = 0.0;
  double strong = 0.0;
};

/// Fraction of trials where argmax(L* + cd_error) != argmax(L*), and where
/// argmax(L* + delta_s) != argmax(L*). Ties resolve to the lowest index.
FlipRates argmax_flip_rate(const ErrorScenario& scenario,
                           const Eigen::VectorXd& optimal_logits,
                           std::size_t threads = 0);

}  // namespace epicode
