#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace epicode {

using Token = std::int32_t;
using LogitVector = Eigen::VectorXf;

/// Source of next-token logits (one model, or a scripted stand-in).
/// Implementations must be safe for concurrent const use.
class LogitProvider {
 public:
  virtual ~LogitProvider() = default;
  virtual LogitVector next_logits(std::span<const Token> prefix) const = 0;
  virtual int vocab_size() const = 0;
};

struct DecodeLimits {
  int max_new_tokens = 16;
  std::optional<Token> eos_token;
};

struct DecodePolicy {
  double lambda = 0.0;
  double alpha = 0.1;
  DecodeLimits limits;
};

/// Value written into masked slots of a contrasted vector. Selection never
/// looks at it; it only keeps the vector finite.
inline constexpr float kMaskedScore = std::numeric_limits<float>::lowest();

struct ContrastedLogits {
  LogitVector scores;
  std::vector<bool> allowed;
};

struct Generation {
  std::vector<Token> tokens;
  /// Score of each emitted token (contrasted score, or raw logit for
  /// strong-only decoding).
  std::vector<float> scores;
};

/// allowed[v] iff softmax(strong)[v] >= alpha * max softmax(strong), computed
/// as exp(strong[v] - max strong) >= alpha in double. The argmax is always
/// allowed for alpha <= 1.
std::vector<bool> plausibility_mask(const LogitVector& strong_logits, double alpha);

/// strong + lambda * (strong - weak) on plausible entries; kMaskedScore
/// elsewhere. Throws DataError on length mismatch or non-finite input.
ContrastedLogits contrast_logits(const LogitVector& strong_logits,
                                 const LogitVector& weak_logits,
                                 const DecodePolicy& policy);

/// Index of the highest allowed score; ties go to the lowest index.
Eigen::Index select_token(const ContrastedLogits& contrasted);

/// Index of the maximum entry; ties go to the lowest index.
Eigen::Index argmax(const LogitVector& logits);

/// Greedy contrastive decoding. The prompt is not included in the result.
Generation greedy_decode(const LogitProvider& strong, const LogitProvider& weak,
                         std::span<const Token> prompt, const DecodePolicy& policy);

/// Plain greedy argmax on the strong provider, with no plausibility mask.
Generation strong_only_decode(const LogitProvider& strong,
                              std::span<const Token> prompt,
                              const DecodeLimits& limits);

void validate(const DecodePolicy& policy);

}  // namespace epicode
