#include "epicode/dataset.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "epicode/error.hpp"
#include "epicode/random.hpp"

namespace epicode {

namespace {

int key_count(const TaskSpec& s) { return (s.vocab_size - kFirstContentToken) / 2; }

/// Number of distinct prompts, saturated at 1e18.
double prompt_capacity(const TaskSpec& s) {
  double n = 1.0;
  if (s.kind == TaskKind::kv_recall) {
    for (int i = 0; i < s.n_pairs; ++i) n *= key_count(s) - i;
    n *= s.n_pairs;
  } else {
    n = std::pow(double(s.modulus), double(s.chain_length));
  }
  return std::min(n, 1e18);
}

Example kv_example(const TaskSpec& s, const std::vector<Token>& table, CounterRng& rng) {
  std::vector<int> keys(static_cast<std::size_t>(key_count(s)));
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = int(i);
  shuffle(keys, rng);
  Example ex;
  for (int i = 0; i < s.n_pairs; ++i) {
    const int k = keys[std::size_t(i)];
    ex.prompt.push_back(kFirstContentToken + k);
    ex.prompt.push_back(table[std::size_t(k)]);
  }
  const int q = keys[rng.below(std::uint64_t(s.n_pairs))];
  ex.prompt.push_back(kSepToken);
  ex.prompt.push_back(kFirstContentToken + q);
  ex.answer = {table[std::size_t(q)], kEosToken};
  return ex;
}

Example chain_example(const TaskSpec& s, CounterRng& rng) {
  Example ex;
  int sum = 0;
  for (int i = 0; i < s.chain_length; ++i) {
    const int d = int(rng.below(std::uint64_t(s.modulus)));
    sum += d;
    ex.prompt.push_back(kFirstContentToken + d);
  }
  ex.prompt.push_back(kSepToken);
  ex.answer = {kFirstContentToken + sum % s.modulus, kEosToken};
  return ex;
}

}  // namespace

void validate(const TaskSpec& s) {
  if (s.n_train < 1) throw DataError("n_train must be >= 1");
  if (s.n_dev < 0 || s.n_test < 0) throw DataError("split sizes must be non-negative");
  if (s.kind == TaskKind::kv_recall) {
    if (s.n_pairs < 1) throw DataError("n_pairs must be >= 1");
    if (key_count(s) < s.n_pairs)
      throw DataError("vocab_size " + std::to_string(s.vocab_size) + " too small for " +
                      std::to_string(s.n_pairs) + " distinct keys");
  } else {
    if (s.chain_length < 1) throw DataError("chain_length must be >= 1");
    if (s.modulus < 2) throw DataError("modulus must be >= 2");
    if (kFirstContentToken + s.modulus > s.vocab_size)
      throw DataError("vocab_size too small for modulus " + std::to_string(s.modulus));
  }
  const double total = double(s.n_train) + s.n_dev + s.n_test;
  if (prompt_capacity(s) < total)
    throw DataError("task admits fewer distinct prompts than requested examples");
}

std::vector<Token> kv_table(const TaskSpec& s) {
  validate(s);
  const int keys = key_count(s);
  const int values = s.vocab_size - kFirstContentToken - keys;
  CounterRng rng(s.seed, 0);
  std::vector<Token> table(static_cast<std::size_t>(keys));
  for (auto& v : table) v = kFirstContentToken + keys + Token(rng.below(std::uint64_t(values)));
  return table;
}

Datasets gen_dataset(const TaskSpec& s) {
  validate(s);
  const std::vector<Token> table =
      s.kind == TaskKind::kv_recall ? kv_table(s) : std::vector<Token>{};
  const std::size_t total = std::size_t(s.n_train) + std::size_t(s.n_dev) + std::size_t(s.n_test);
  CounterRng rng(s.seed, 1);
  std::set<std::vector<Token>> seen;
  std::vector<Example> all;
  all.reserve(total);
  std::size_t attempts = 0;
  while (all.size() < total) {
    if (++attempts > 1000 * total + 1000)
      throw DataError("could not draw enough distinct prompts");
    Example ex = s.kind == TaskKind::kv_recall ? kv_example(s, table, rng) : chain_example(s, rng);
    if (seen.insert(ex.prompt).second) all.push_back(std::move(ex));
  }
  Datasets out;
  const auto train_end = all.begin() + s.n_train;
  const auto dev_end = train_end + s.n_dev;
  out.train.assign(all.begin(), train_end);
  out.dev.assign(train_end, dev_end);
  out.test.assign(dev_end, all.end());
  return out;
}

int max_sequence_length(const TaskSpec& s) {
  return s.kind == TaskKind::kv_recall ? 2 * s.n_pairs + 2 + 2 : s.chain_length + 1 + 2;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& ex : examples)
    out << nlohmann::json{{"prompt", ex.prompt}, {"answer", ex.answer}}.dump() << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Example> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<Example> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("prompt"))
      throw DataError(where + ": expected an object with a \"prompt\" array");
    Example ex;
    try {
      ex.prompt = j.at("prompt").get<std::vector<Token>>();
      if (j.contains("answer")) ex.answer = j.at("answer").get<std::vector<Token>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": token arrays must hold integers");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

const char* to_string(TaskKind kind) {
  return kind == TaskKind::kv_recall ? "kv_recall" : "modular_chain";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "kv_recall") return TaskKind::kv_recall;
  if (name == "modular_chain") return TaskKind::modular_chain;
  throw DataError("unknown task kind: " + name);
}

}  // namespace epicode
