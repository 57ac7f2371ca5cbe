#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "epicode/decode.hpp"
#include "epicode/error.hpp"
#include "epicode/random.hpp"
#include "test_util.hpp"

using namespace epicode;
using test::HashedProvider;

namespace {

LogitVector lv(std::initializer_list<float> v) {
  LogitVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (float x : v) out[i++] = x;
  return out;
}

/// Returns table[prefix.size() - prompt_len] (clamped to the last row).
class ScriptedProvider final : public LogitProvider {
 public:
  ScriptedProvider(std::vector<LogitVector> table, std::size_t prompt_len)
      : table_(std::move(table)), prompt_len_(prompt_len) {}
  LogitVector next_logits(std::span<const Token> prefix) const override {
    const auto step = std::min(prefix.size() - prompt_len_, table_.size() - 1);
    return table_[step];
  }
  int vocab_size() const override { return static_cast<int>(table_.front().size()); }

 private:
  std::vector<LogitVector> table_;
  std::size_t prompt_len_;
};

/// Adds constants to a provider's logits.
class ShiftedProvider final : public LogitProvider {
 public:
  ShiftedProvider(const LogitProvider& base, float shift) : base_(base), shift_(shift) {}
  LogitVector next_logits(std::span<const Token> prefix) const override {
    return base_.next_logits(prefix).array() + shift_;
  }
  int vocab_size() const override { return base_.vocab_size(); }

 private:
  const LogitProvider& base_;
  float shift_;
};

// Independent oracle: explicit softmax then the threshold rule.
std::vector<bool> softmax_mask_oracle(const LogitVector& s, double alpha) {
  std::vector<double> p(static_cast<std::size_t>(s.size()));
  double z = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) z += std::exp(double(s[i]));
  double pmax = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(double(s[i])) / z;
    pmax = std::max(pmax, p[static_cast<std::size_t>(i)]);
  }
  std::vector<bool> mask;
  for (double pi : p) mask.push_back(pi >= alpha * pmax);
  return mask;
}

}  // namespace

TEST_CASE("plausibility_mask examples") {
  CHECK(plausibility_mask(lv({5, 0, 0}), 0.0) == std::vector<bool>{true, true, true});
  CHECK(plausibility_mask(lv({5, 0, 0}), 0.5) == std::vector<bool>{true, false, false});
  CHECK(softmax_mask_oracle(lv({5, 0, 0}), 0.5) == std::vector<bool>{true, false, false});
  CHECK(plausibility_mask(lv({2, 1, 0}), 0.1) == std::vector<bool>{true, true, true});
  CHECK(softmax_mask_oracle(lv({2, 1, 0}), 0.1) == std::vector<bool>{true, true, true});
}

TEST_CASE("plausibility_mask agrees with the softmax oracle on random vectors") {
  CounterRng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    LogitVector s(8);
    for (int i = 0; i < 8; ++i) s[i] = static_cast<float>(3.0 * rng.normal());
    const double alpha = rng.uniform();
    const auto mask = plausibility_mask(s, alpha);
    const auto oracle = softmax_mask_oracle(s, alpha);
    // Entries within rounding of the threshold may legitimately differ.
    const double top = s.maxCoeff();
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const double margin = std::abs((double(s[Eigen::Index(i)]) - top) - std::log(alpha));
      if (margin > 1e-9) CHECK(mask[i] == oracle[i]);
    }
    CHECK(mask[static_cast<std::size_t>(argmax(s))]);
  }
}

TEST_CASE("contrast_logits examples") {
  DecodePolicy policy;
  policy.lambda = 0.0;
  policy.alpha = 0.1;
  const auto identity = contrast_logits(lv({0.3f, -1.0f, 0.2f}), lv({9, 9, 9}), policy);
  for (Eigen::Index v = 0; v < 3; ++v)
    if (identity.allowed[std::size_t(v)]) CHECK(identity.scores[v] == lv({0.3f, -1.0f, 0.2f})[v]);

  policy.lambda = 1.0;
  const auto c = contrast_logits(lv({2, 1, 0}), lv({1, 1, 1}), policy);
  CHECK(c.allowed == std::vector<bool>{true, true, true});
  CHECK(c.scores == lv({3, 1, -1}));

  policy.alpha = 0.5;
  const auto trap = contrast_logits(lv({5, 0, 0}), lv({0, 0, -10}), policy);
  CHECK(trap.allowed == std::vector<bool>{true, false, false});
  CHECK(trap.scores[0] == 10.0f);
  CHECK(trap.scores[2] == kMaskedScore);
  CHECK(select_token(trap) == 0);
  // Without the mask the weak model's extreme low score on token 2 wins.
  const auto unmasked = contrast_logits(lv({5, 0, 0}), lv({0, 0, -11}), {1.0, 0.0, {}});
  CHECK(select_token(unmasked) == 2);

  CHECK_THROWS_AS(contrast_logits(lv({1, 2}), lv({1, 2, 3}), policy), DataError);
}

TEST_CASE("strong_only_decode: argmax and tie-break") {
  DecodeLimits limits{1, std::nullopt};
  const std::vector<Token> prompt{0};
  ScriptedProvider p({lv({0.1f, 0.7f, 0.2f})}, 1);
  CHECK(strong_only_decode(p, prompt, limits).tokens == std::vector<Token>{1});
  ScriptedProvider tie({lv({1.0f, 1.0f})}, 1);
  CHECK(strong_only_decode(tie, prompt, limits).tokens == std::vector<Token>{0});
}

TEST_CASE("greedy_decode: scripted 3-token providers over 4 steps") {
  const std::vector<LogitVector> strong_table{lv({2.0f, 1.5f, -1.0f}), lv({0.0f, 0.5f, 0.4f}),
                                              lv({1.0f, 3.0f, 2.9f}), lv({-2.0f, -2.5f, -2.2f})};
  const std::vector<LogitVector> weak_table{lv({2.5f, 0.5f, 0.0f}), lv({0.0f, 1.0f, -0.5f}),
                                            lv({0.0f, 3.5f, 1.0f}), lv({-3.0f, -1.0f, -2.0f})};
  ScriptedProvider strong(strong_table, 2);
  ScriptedProvider weak(weak_table, 2);
  const std::vector<Token> prompt{0, 1};
  DecodePolicy policy{1.0, 0.1, {4, std::nullopt}};

  // Brute-force oracle: softmax every token, apply the threshold, score the
  // survivors, pick the first maximum.
  std::vector<Token> expected;
  for (int step = 0; step < 4; ++step) {
    const auto& s = strong_table[std::size_t(step)];
    const auto& w = weak_table[std::size_t(step)];
    const auto mask = softmax_mask_oracle(s, policy.alpha);
    int best = -1;
    double best_score = 0;
    for (int v = 0; v < 3; ++v) {
      if (!mask[std::size_t(v)]) continue;
      const double score = 2.0 * s[v] - w[v];
      if (best < 0 || score > best_score) {
        best = v;
        best_score = score;
      }
    }
    expected.push_back(best);
  }
  CHECK(expected == std::vector<Token>{1, 2, 2, 0});
  const auto out = greedy_decode(strong, weak, prompt, policy);
  CHECK(out.tokens == expected);
  CHECK(out.scores.size() == 4);
  CHECK(out.scores[0] == doctest::Approx(2.5));
}

TEST_CASE("greedy_decode: stopping and errors") {
  HashedProvider a(1, 5, 1.0), b(2, 5, 1.0), c(3, 6, 1.0);
  const std::vector<Token> prompt{1};
  DecodePolicy policy{0.5, 0.1, {3, std::nullopt}};
  CHECK(greedy_decode(a, b, prompt, policy).tokens.size() == 3);
  CHECK_THROWS_AS(greedy_decode(a, c, prompt, policy), DataError);
  CHECK_THROWS_AS(greedy_decode(a, b, std::vector<Token>{}, policy), DataError);

  ScriptedProvider eos({lv({0, 0, 5})}, 1);
  policy.limits = {10, Token{2}};
  CHECK(greedy_decode(eos, eos, prompt, policy).tokens == std::vector<Token>{2});
}

TEST_CASE("property: lambda = 0 collapses to strong-only; identical providers too") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    HashedProvider s(seed, 7, 2.0), w(seed + 10'000, 7, 2.0);
    const std::vector<Token> prompt{Token(seed % 7)};
    const DecodeLimits limits{5, Token{0}};
    const auto reference = strong_only_decode(s, prompt, limits).tokens;
    CHECK(greedy_decode(s, w, prompt, {0.0, 0.5, limits}).tokens == reference);
    CHECK(greedy_decode(s, s, prompt, {0.8, 0.1, limits}).tokens == reference);
  }
}

TEST_CASE("property: masked tokens are never emitted") {
  const double alphas[] = {0.1, 0.5, 0.9};
  int decodes = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    HashedProvider s(seed, 6, 3.0), w(seed ^ 0xABCDEF, 6, 3.0);
    DecodePolicy policy{0.25 * double(seed % 5), alphas[seed % 3], {4, std::nullopt}};
    std::vector<Token> context{Token(seed % 6)};
    const auto out = greedy_decode(s, w, context, policy);
    for (Token t : out.tokens) {
      const auto mask = plausibility_mask(s.next_logits(context), policy.alpha);
      CHECK(mask[std::size_t(t)]);
      context.push_back(t);
    }
    ++decodes;
  }
  CHECK(decodes == 400);
}

TEST_CASE("property: per-vector constant shifts do not change the decode") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    HashedProvider s(seed, 6, 0.0, true), w(seed + 77, 6, 0.0, true);
    const float c1 = float(int(seed % 9) - 4), c2 = float(int(seed % 7) - 3) * 0.5f;
    ShiftedProvider s2(s, c1), w2(w, c2);
    const double lambdas[] = {0.0, 0.25, 0.5, 1.0};
    DecodePolicy policy{lambdas[seed % 4], 0.25, {4, std::nullopt}};
    const std::vector<Token> prompt{1};
    CHECK(greedy_decode(s, w, prompt, policy).tokens ==
          greedy_decode(s2, w2, prompt, policy).tokens);
  }
}

TEST_CASE("policy validation") {
  CHECK_THROWS_AS(validate(DecodePolicy{0.5, 1.5, {}}), DataError);
  CHECK_THROWS_AS(validate(DecodePolicy{-0.5, 0.1, {}}), DataError);
  CHECK_THROWS_AS(validate(DecodePolicy{0.5, 0.1, {0, std::nullopt}}), DataError);
}
