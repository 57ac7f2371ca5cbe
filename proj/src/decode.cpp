#include "epicode/decode.hpp"

#include <cmath>
#include <string>

#include "epicode/error.hpp"

namespace epicode {

namespace {

void check_logits(const LogitVector& logits, const char* which) {
  if (logits.size() < 2)
    throw DataError(std::string(which) + " logits must have at least 2 entries");
  if (!logits.allFinite()) throw DataError(std::string(which) + " logits are not finite");
}

template <typename Step>
Generation run_greedy(std::span<const Token> prompt, const DecodeLimits& limits,
                      Step&& step) {
  if (prompt.empty()) throw DataError("prompt must not be empty");
  if (limits.max_new_tokens < 1) throw DataError("max_new_tokens must be >= 1");
  std::vector<Token> context(prompt.begin(), prompt.end());
  Generation out;
  for (int i = 0; i < limits.max_new_tokens; ++i) {
    const auto [token, score] = step(std::span<const Token>(context));
    out.tokens.push_back(token);
    out.scores.push_back(score);
    if (limits.eos_token && token == *limits.eos_token) break;
    context.push_back(token);
  }
  return out;
}

}  // namespace

void validate(const DecodePolicy& policy) {
  if (!(policy.alpha >= 0.0 && policy.alpha <= 1.0))
    throw DataError("alpha must lie in [0, 1]");
  if (!(policy.lambda >= 0.0) || !std::isfinite(policy.lambda))
    throw DataError("lambda must be finite and non-negative");
  if (policy.limits.max_new_tokens < 1) throw DataError("max_new_tokens must be >= 1");
}

std::vector<bool> plausibility_mask(const LogitVector& strong_logits, double alpha) {
  const double top = strong_logits.maxCoeff();
  std::vector<bool> allowed(static_cast<std::size_t>(strong_logits.size()));
  for (Eigen::Index v = 0; v < strong_logits.size(); ++v)
    allowed[static_cast<std::size_t>(v)] =
        std::exp(static_cast<double>(strong_logits[v]) - top) >= alpha;
  return allowed;
}

ContrastedLogits contrast_logits(const LogitVector& strong_logits,
                                 const LogitVector& weak_logits,
                                 const DecodePolicy& policy) {
  check_logits(strong_logits, "strong");
  check_logits(weak_logits, "weak");
  if (strong_logits.size() != weak_logits.size())
    throw DataError("logit length mismatch: " + std::to_string(strong_logits.size()) +
                    " vs " + std::to_string(weak_logits.size()));
  const auto lambda = static_cast<float>(policy.lambda);
  ContrastedLogits out{LogitVector(strong_logits.size()),
                       plausibility_mask(strong_logits, policy.alpha)};
  for (Eigen::Index v = 0; v < strong_logits.size(); ++v)
    out.scores[v] = out.allowed[static_cast<std::size_t>(v)]
                        ? strong_logits[v] + lambda * (strong_logits[v] - weak_logits[v])
                        : kMaskedScore;
  return out;
}

Eigen::Index select_token(const ContrastedLogits& contrasted) {
  Eigen::Index best = -1;
  for (Eigen::Index v = 0; v < contrasted.scores.size(); ++v) {
    if (!contrasted.allowed[static_cast<std::size_t>(v)]) continue;
    if (best < 0 || contrasted.scores[v] > contrasted.scores[best]) best = v;
  }
  if (best < 0) throw DataError("every token is masked");
  return best;
}

Eigen::Index argmax(const LogitVector& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index v = 1; v < logits.size(); ++v)
    if (logits[v] > logits[best]) best = v;
  return best;
}

Generation greedy_decode(const LogitProvider& strong, const LogitProvider& weak,
                         std::span<const Token> prompt, const DecodePolicy& policy) {
  validate(policy);
  if (strong.vocab_size() != weak.vocab_size())
    throw DataError("provider vocab mismatch: " + std::to_string(strong.vocab_size()) +
                    " vs " + std::to_string(weak.vocab_size()));
  return run_greedy(prompt, policy.limits, [&](std::span<const Token> context) {
    const auto contrasted =
        contrast_logits(strong.next_logits(context), weak.next_logits(context), policy);
    const auto v = select_token(contrasted);
    return std::pair{static_cast<Token>(v), contrasted.scores[v]};
  });
}

Generation strong_only_decode(const LogitProvider& strong,
                              std::span<const Token> prompt,
                              const DecodeLimits& limits) {
  return run_greedy(prompt, limits, [&](std::span<const Token> context) {
    const auto logits = strong.next_logits(context);
    check_logits(logits, "strong");
    const auto v = argmax(logits);
    return std::pair{static_cast<Token>(v), logits[v]};
  });
}

}  // namespace epicode
