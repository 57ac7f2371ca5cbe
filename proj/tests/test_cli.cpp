#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "epicode/checkpoint.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "epicode_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Result run(const std::string& args) {
  const auto out = work_dir() / "stdout.txt";
  const auto err = work_dir() / "stderr.txt";
  const std::string cmd = "cd '" + work_dir().string() + "' && '" EPICODE_CLI "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST_CASE("help and usage errors") {
  const auto help = run("theory --help");
  CHECK(help.code == 0);
  CHECK(help.out.find("--epsilon") != std::string::npos);

  const auto bogus = run("theory --bogus");
  CHECK(bogus.code == 1);
  CHECK(bogus.err.find("--bogus") != std::string::npos);

  const auto unknown = run("frobnicate");
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("frobnicate") != std::string::npos);
  CHECK(unknown.err.find("extrapolate") != std::string::npos);

  CHECK(run("").code == 1);
  CHECK(run("extrapolate --strong a").code == 1);
}

TEST_CASE("data and numeric failures") {
  using epicode::Tensor;
  epicode::save({{"head.w", Tensor({2}, {1, 2})}}, work_dir() / "a.safetensors");
  epicode::save({{"other", Tensor({2}, {1, 2})}, {"head.w", Tensor({3}, {1, 2, 3})}},
                work_dir() / "b.safetensors");
  const auto incompatible =
      run("extrapolate --strong a.safetensors --weak b.safetensors --mu 0.5 --out c.safetensors");
  CHECK(incompatible.code == 2);
  CHECK(incompatible.err.find("missing in a: other") != std::string::npos);
  CHECK(incompatible.err.find("head.w") != std::string::npos);
  CHECK_FALSE(fs::exists(work_dir() / "c.safetensors"));

  CHECK(run("distance --a a.safetensors --b missing.safetensors").code == 2);
  CHECK(run("theory --k 0.5 --trials 10").code == 2);
  CHECK(run("ttest --a nothing.csv:x --b nothing.csv:y").code == 2);

  epicode::save({{"w", Tensor({1}, {3e38f})}}, work_dir() / "big.safetensors");
  epicode::save({{"w", Tensor({1}, {-3e38f})}}, work_dir() / "neg.safetensors");
  CHECK(run("extrapolate --strong big.safetensors --weak neg.safetensors --mu 1 --out x.safetensors")
            .code == 3);
}

TEST_CASE("checkpoint arithmetic commands") {
  using epicode::Tensor;
  epicode::save({{"w", Tensor({2}, {2.0f, 1.0f})}}, work_dir() / "s.safetensors");
  epicode::save({{"w", Tensor({2}, {1.0f, 1.0f})}}, work_dir() / "w.safetensors");
  REQUIRE(run("extrapolate --strong s.safetensors --weak w.safetensors --mu 0.5 --out ep.safetensors")
              .code == 0);
  CHECK(epicode::load(work_dir() / "ep.safetensors").at("w").data == std::vector<float>{2.5f, 1.0f});
  CHECK(run("distance --a s.safetensors --b ep.safetensors").out == "0.5\n");
  REQUIRE(run("interpolate --a s.safetensors --b w.safetensors --t 0.25 --out i.safetensors").code == 0);
  CHECK(epicode::load(work_dir() / "i.safetensors").at("w").data == std::vector<float>{1.25f, 1.0f});
}

TEST_CASE("theory and ttest output") {
  const auto a = run("theory --lambda 1 --k 2 --rho 1 --trials 20000 --seed 3");
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("epsilon,k,lambda,rho,vocab,trials,seed,estimated_std", 0) == 0);
  CHECK(a.out.find("\n1,2,1,1,8,20000,3,0,0,") != std::string::npos);
  CHECK(run("--threads 3 theory --lambda 1 --k 2 --rho 1 --trials 20000 --seed 3").out == a.out);

  {
    std::ofstream csv(work_dir() / "acc.csv");
    csv << "seed,x,y\n0,2,1\n1,4,2\n2,6,3\n";
  }
  const auto t = run("ttest --a acc.csv:x --b acc.csv:y");
  REQUIRE(t.code == 0);
  CHECK(t.out.rfind("t,df,p_one_tailed\n3.464", 0) == 0);
}

TEST_CASE("data, training, decoding and pipeline are reproducible") {
  {
    std::ofstream task(work_dir() / "task.json");
    task << R"({"vocab_size": 16, "n_pairs": 3, "n_train": 40, "n_dev": 10, "n_test": 12})";
    std::ofstream model(work_dir() / "model.json");
    model << R"({"vocab_size": 16, "d_model": 8, "d_ff": 16, "max_context": 16})";
    std::ofstream cfg(work_dir() / "pipeline.json");
    cfg << R"({"model": {"vocab_size": 16, "d_model": 8, "d_ff": 16, "max_context": 16},
               "optimizer": {"batch_size": 8, "learning_rate": 0.01},
               "grid": {"mu_values": [0.1, 0.4], "lambda_values": [0.5]}})";
  }
  const auto gen = run("gen-data --task task.json --out-dir data");
  REQUIRE(gen.code == 0);
  CHECK(gen.out == "40,10,12\n");

  REQUIRE(run("train-toy --config model.json --data data/train.jsonl --seed 4 --out-dir r1").code == 0);
  REQUIRE(run("train-toy --config model.json --data data/train.jsonl --seed 4 --out-dir r2").code == 0);
  CHECK(slurp(work_dir() / "r1/epoch2.safetensors") == slurp(work_dir() / "r2/epoch2.safetensors"));
  CHECK(slurp(work_dir() / "r1/train_log.csv").rfind("epoch,step,loss\n1,1,", 0) == 0);

  REQUIRE(run("decode --strong r1/epoch2.safetensors --weak r1/epoch1.safetensors "
              "--model-config model.json --lambda 0.5 --prompt-file data/test.jsonl --out o.jsonl")
              .code == 0);
  const auto decoded = slurp(work_dir() / "o.jsonl");
  CHECK(decoded.rfind("{\"input\":[", 0) == 0);
  CHECK(decoded.find("\"scores\":[") != std::string::npos);

  const auto acc = run("evaluate --strong r1/epoch2.safetensors --model-config model.json "
                       "--data data/test.jsonl");
  REQUIRE(acc.code == 0);
  const double value = std::stod(acc.out);
  CHECK(value >= 0.0);
  CHECK(value <= 1.0);

  const auto p1 = run("--log-level quiet pipeline --config pipeline.json --task task.json "
                      "--seeds 2 --out-dir p1");
  REQUIRE(p1.code == 0);
  CHECK(p1.err.empty());
  CHECK(p1.out.rfind("seed,finetune,me_only,cd_only,epicode\n0,", 0) == 0);
  const auto p2 = run("--threads 2 pipeline --config pipeline.json --task task.json --seeds 2 "
                      "--out-dir p2");
  REQUIRE(p2.code == 0);
  CHECK(p1.out == p2.out);
  CHECK(slurp(work_dir() / "p1/examples.csv") == slurp(work_dir() / "p2/examples.csv"));

  const auto report = run("report --dir p1");
  REQUIRE(report.code == 0);
  CHECK(report.out == slurp(work_dir() / "p1/summary.md"));

  const auto abl = run("ablation --config pipeline.json --task task.json --seeds 2 --out-dir a1");
  REQUIRE(abl.code == 0);
  CHECK(abl.out.rfind("seed,mu,lambda,ep_alone,weak_init,weak_early,weak_ft\n", 0) == 0);
  CHECK(run("report --dir a1").out.find("Weak-model ablation") != std::string::npos);
}
