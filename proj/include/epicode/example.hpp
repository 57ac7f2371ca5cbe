#pragma once

#include <vector>

#include "epicode/decode.hpp"

namespace epicode {

/// One supervised sequence: the model reads `prompt` and must produce
/// `answer` (which ends with the task's end-of-answer token).
struct Example {
  std::vector<Token> prompt;
  std::vector<Token> answer;

  friend bool operator==(const Example&, const Example&) = default;
};

}  // namespace epicode
