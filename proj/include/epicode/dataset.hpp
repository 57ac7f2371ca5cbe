#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "epicode/example.hpp"

namespace epicode {

/// Reserved token ids shared by every synthetic task.
inline constexpr Token kPadToken = 0;
inline constexpr Token kSepToken = 1;
inline constexpr Token kEosToken = 2;
inline constexpr Token kFirstContentToken = 3;

enum class TaskKind { kv_recall, modular_chain };

/// kv_recall: keys occupy [3, 3 + K), values [3 + K, V), K = (V - 3) / 2.
/// Every key has one value in a table drawn from the task seed. A prompt lists
/// n_pairs distinct keys with their values, then SEP and one of those keys;
/// the answer is that key's value followed by EOS.
///
/// modular_chain: chain_length digits in [0, modulus) encoded as tokens
/// 3 + digit, then SEP; the answer is the digit sum mod modulus, then EOS.
struct TaskSpec {
  TaskKind kind = TaskKind::kv_recall;
  int vocab_size = 64;
  int n_train = 512;
  int n_dev = 500;
  int n_test = 1000;
  int n_pairs = 4;
  int chain_length = 4;
  int modulus = 10;
  std::uint64_t seed = 0;
};

void validate(const TaskSpec& spec);

struct Datasets {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

/// Deterministic in spec. No prompt appears twice across or within splits.
Datasets gen_dataset(const TaskSpec& spec);

/// The value table used by kv_recall for this spec: table[k] is the value
/// token of key token kFirstContentToken + k.
std::vector<Token> kv_table(const TaskSpec& spec);

/// Longest prompt plus answer the task can produce.
int max_sequence_length(const TaskSpec& spec);

/// JSON-lines, one {"prompt": [...], "answer": [...]} object per line.
void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples);
std::vector<Example> read_jsonl(const std::filesystem::path& path);

const char* to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

}  // namespace epicode
