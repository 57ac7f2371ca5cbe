#include "epicode/report.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "epicode/error.hpp"
#include "epicode/stats.hpp"

namespace epicode {

namespace {

using Row = std::vector<std::string>;

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

Row split(const std::string& line) {
  Row cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

struct Csv {
  std::map<std::string, std::size_t> columns;
  std::vector<Row> rows;

  std::size_t column(const std::string& name, const std::filesystem::path& path) const {
    const auto it = columns.find(name);
    if (it == columns.end()) throw DataError(path.string() + ": no column named " + name);
    return it->second;
  }
};

Csv read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = split(line);
  for (std::size_t i = 0; i < header.size(); ++i) csv.columns[header[i]] = i;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != header.size())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields");
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

double parse_real(const std::string& s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw DataError("not a number: '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw DataError("not a non-negative integer: '" + s + "'");
  return v;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

std::string signed_fixed(double v) { return (v >= 0 ? "+" : "") + fixed(v); }

double mean_of(std::span<const RunRecord> records, Condition c, bool test = true) {
  double s = 0.0;
  for (const auto& r : records) s += test ? r.at(c).test_accuracy : r.at(c).dev_accuracy;
  return s / double(records.size());
}

std::vector<double> column_of(std::span<const RunRecord> records, Condition c) {
  std::vector<double> out;
  for (const auto& r : records) out.push_back(r.at(c).test_accuracy);
  return out;
}

}  // namespace

std::string format_real(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

void write_runs_csv(const std::filesystem::path& path, std::span<const RunRecord> records) {
  auto out = open_out(path);
  out << "seed,condition,mu,lambda,dev_accuracy,test_accuracy\n";
  for (const auto& r : records)
    for (Condition c : kConditions) {
      const bool uses_mu = c == Condition::me_only || c == Condition::epicode;
      const double lambda = c == Condition::epicode   ? r.chosen_lambda
                            : c == Condition::cd_only ? r.cd_lambda
                                                      : 0.0;
      out << r.seed << ',' << to_string(c) << ',' << format_real(uses_mu ? r.chosen_mu : 0.0)
          << ',' << format_real(lambda) << ',' << format_real(r.at(c).dev_accuracy) << ','
          << format_real(r.at(c).test_accuracy) << '\n';
    }
}

void write_accuracy_csv(const std::filesystem::path& path, std::span<const RunRecord> records) {
  auto out = open_out(path);
  out << "seed";
  for (Condition c : kConditions) out << ',' << to_string(c);
  out << '\n';
  for (const auto& r : records) {
    out << r.seed;
    for (Condition c : kConditions) out << ',' << format_real(r.at(c).test_accuracy);
    out << '\n';
  }
}

void write_examples_csv(const std::filesystem::path& path, std::span<const RunRecord> records) {
  auto out = open_out(path);
  out << "seed,index,condition,correct,output\n";
  for (const auto& r : records)
    for (Condition c : kConditions) {
      const auto& slot = r.at(c);
      for (std::size_t i = 0; i < slot.test_correct.size(); ++i) {
        out << r.seed << ',' << i << ',' << to_string(c) << ',' << int(slot.test_correct[i]) << ',';
        const auto& tokens = slot.test_outputs[i];
        for (std::size_t t = 0; t < tokens.size(); ++t) out << (t ? " " : "") << tokens[t];
        out << '\n';
      }
    }
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const RunRecord> records) {
  auto out = open_out(path);
  out << "seed,stage,mu,lambda,dev_accuracy\n";
  for (const auto& r : records)
    for (const auto& s : r.sweep_trace)
      out << r.seed << ',' << (s.stage == SweepStage::mu ? "mu" : "lambda") << ','
          << format_real(s.mu) << ',' << format_real(s.lambda) << ','
          << format_real(s.dev_accuracy) << '\n';
}

void write_train_log_csv(const std::filesystem::path& path, std::span<const TrainLogRow> rows) {
  auto out = open_out(path);
  out << "epoch,step,loss\n";
  for (const auto& r : rows) out << r.epoch << ',' << r.step << ',' << format_real(r.loss) << '\n';
}

void write_ablation_csv(const std::filesystem::path& path,
                        std::span<const AblationRecord> records) {
  auto out = open_out(path);
  out << "seed,mu,lambda,ep_alone,weak_init,weak_early,weak_ft\n";
  for (const auto& a : records)
    out << a.seed << ',' << format_real(a.mu) << ',' << format_real(a.lambda) << ','
        << format_real(a.ep_alone) << ',' << format_real(a.weak_init) << ','
        << format_real(a.weak_early) << ',' << format_real(a.weak_ft) << '\n';
}

std::vector<RunRecord> read_runs(const std::filesystem::path& dir) {
  const auto runs_path = dir / "runs.csv";
  const auto csv = read_csv(runs_path);
  const auto seed_col = csv.column("seed", runs_path);
  const auto cond_col = csv.column("condition", runs_path);
  const auto mu_col = csv.column("mu", runs_path);
  const auto lambda_col = csv.column("lambda", runs_path);
  const auto dev_col = csv.column("dev_accuracy", runs_path);
  const auto test_col = csv.column("test_accuracy", runs_path);

  std::vector<RunRecord> records;
  std::map<std::uint64_t, std::size_t> by_seed;
  for (const auto& row : csv.rows) {
    const auto seed = parse_uint(row[seed_col]);
    auto [it, inserted] = by_seed.try_emplace(seed, records.size());
    if (inserted) {
      records.emplace_back();
      records.back().seed = seed;
    }
    auto& r = records[it->second];
    const auto c = condition_from_string(row[cond_col]);
    r.at(c).dev_accuracy = parse_real(row[dev_col]);
    r.at(c).test_accuracy = parse_real(row[test_col]);
    if (c == Condition::me_only) r.chosen_mu = parse_real(row[mu_col]);
    if (c == Condition::epicode) r.chosen_lambda = parse_real(row[lambda_col]);
    if (c == Condition::cd_only) r.cd_lambda = parse_real(row[lambda_col]);
  }

  const auto examples_path = dir / "examples.csv";
  if (!std::filesystem::exists(examples_path)) return records;
  const auto ex = read_csv(examples_path);
  const auto ex_seed = ex.column("seed", examples_path);
  const auto ex_index = ex.column("index", examples_path);
  const auto ex_cond = ex.column("condition", examples_path);
  const auto ex_correct = ex.column("correct", examples_path);
  const auto ex_output = ex.column("output", examples_path);
  for (const auto& row : ex.rows) {
    const auto it = by_seed.find(parse_uint(row[ex_seed]));
    if (it == by_seed.end())
      throw DataError(examples_path.string() + ": seed " + row[ex_seed] + " not in runs.csv");
    auto& slot = records[it->second].at(condition_from_string(row[ex_cond]));
    const auto index = parse_uint(row[ex_index]);
    if (index != slot.test_correct.size())
      throw DataError(examples_path.string() + ": example indices must be consecutive");
    slot.test_correct.push_back(parse_uint(row[ex_correct]) ? 1 : 0);
    std::vector<Token> tokens;
    std::istringstream in(row[ex_output]);
    std::string tok;
    while (in >> tok) tokens.push_back(static_cast<Token>(parse_uint(tok)));
    slot.test_outputs.push_back(std::move(tokens));
  }
  return records;
}

std::vector<AblationRecord> read_ablation_csv(const std::filesystem::path& path) {
  const auto csv = read_csv(path);
  std::vector<AblationRecord> out;
  for (const auto& row : csv.rows) {
    AblationRecord a;
    a.seed = parse_uint(row[csv.column("seed", path)]);
    a.mu = parse_real(row[csv.column("mu", path)]);
    a.lambda = parse_real(row[csv.column("lambda", path)]);
    a.ep_alone = parse_real(row[csv.column("ep_alone", path)]);
    a.weak_init = parse_real(row[csv.column("weak_init", path)]);
    a.weak_early = parse_real(row[csv.column("weak_early", path)]);
    a.weak_ft = parse_real(row[csv.column("weak_ft", path)]);
    out.push_back(a);
  }
  return out;
}

std::vector<double> read_csv_column(const std::filesystem::path& path, const std::string& column) {
  const auto csv = read_csv(path);
  const auto col = csv.column(column, path);
  std::vector<double> out;
  for (const auto& row : csv.rows) out.push_back(parse_real(row[col]));
  return out;
}

std::string summary_markdown(std::span<const RunRecord> records,
                             std::span<const AblationRecord> ablations) {
  std::ostringstream md;
  const auto n = records.size();
  if (n > 0) {
    const double ft_mean = mean_of(records, Condition::finetune);
    md << "## Accuracy (" << n << " seeds)\n\n"
       << "| Condition | Test accuracy | vs finetune | Dev accuracy |\n"
       << "|---|---|---|---|\n";
    for (Condition c : kConditions)
      md << "| " << to_string(c) << " | " << fixed(mean_of(records, c)) << " | "
         << (c == Condition::finetune ? std::string("-")
                                      : signed_fixed(mean_of(records, c) - ft_mean))
         << " | " << fixed(mean_of(records, c, false)) << " |\n";

    md << "\n## Per-seed test accuracy\n\n"
       << "| Seed | mu* | lambda* | CD lambda | finetune | me_only | cd_only | epicode |\n"
       << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : records) {
      md << "| " << r.seed << " | " << format_real(r.chosen_mu) << " | "
         << format_real(r.chosen_lambda) << " | " << format_real(r.cd_lambda);
      for (Condition c : kConditions) md << " | " << fixed(r.at(c).test_accuracy);
      md << " |\n";
    }

    md << "\n## Paired one-tailed t-tests\n\n"
       << "| H1 | t | df | p |\n|---|---|---|---|\n";
    const auto ours = column_of(records, Condition::epicode);
    for (Condition c : {Condition::finetune, Condition::me_only, Condition::cd_only}) {
      md << "| epicode > " << to_string(c) << " | ";
      try {
        const auto t = paired_t_test(ours, column_of(records, c));
        md << fixed(t.t_statistic) << " | " << t.degrees_of_freedom << " | "
           << format_real(t.p_value_one_tailed) << " |\n";
      } catch (const DataError& e) {
        md << "n/a | n/a | " << e.what() << " |\n";
      }
    }

    md << "\n## Improvements over finetune\n\n| Condition | Seeds improved |\n|---|---|\n";
    for (Condition c : {Condition::me_only, Condition::cd_only, Condition::epicode})
      md << "| " << to_string(c) << " | " << success_count(records, c) << "/" << n << " |\n";

    bool have_examples = true;
    for (const auto& r : records)
      for (Condition c : kConditions)
        have_examples = have_examples && !r.at(c).test_correct.empty();
    if (have_examples) {
      const auto terciles = difficulty_report(records);
      const char* names[] = {"easy", "medium", "hard"};
      md << "\n## Accuracy by finetuned answer length\n\n"
         << "| Tercile | Size | finetune | me_only | cd_only | epicode |\n"
         << "|---|---|---|---|---|---|\n";
      for (std::size_t p = 0; p < 3; ++p) {
        const auto& t = terciles[p];
        md << "| " << names[p] << " | " << t.size << " | " << fixed(t.accuracy[0]);
        for (std::size_t c = 1; c < 4; ++c)
          md << " | " << fixed(t.accuracy[c]) << " (" << signed_fixed(t.delta[c]) << ")";
        md << " |\n";
      }
    }
  }

  if (!ablations.empty()) {
    md << (n > 0 ? "\n" : "") << "## Weak-model ablation (strong = extrapolated)\n\n"
       << "| Seed | mu | lambda | alone | weak=init | weak=early | weak=ft |\n"
       << "|---|---|---|---|---|---|---|\n";
    double sums[4] = {0, 0, 0, 0};
    for (const auto& a : ablations) {
      md << "| " << a.seed << " | " << format_real(a.mu) << " | " << format_real(a.lambda)
         << " | " << fixed(a.ep_alone) << " | " << fixed(a.weak_init) << " | "
         << fixed(a.weak_early) << " | " << fixed(a.weak_ft) << " |\n";
      sums[0] += a.ep_alone;
      sums[1] += a.weak_init;
      sums[2] += a.weak_early;
      sums[3] += a.weak_ft;
    }
    const double k = double(ablations.size());
    md << "| mean | | | " << fixed(sums[0] / k) << " | " << fixed(sums[1] / k) << " | "
       << fixed(sums[2] / k) << " | " << fixed(sums[3] / k) << " |\n";
  }
  return md.str();
}

}  // namespace epicode
