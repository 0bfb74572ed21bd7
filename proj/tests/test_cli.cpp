#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("scanhd_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI inside the scratch directory; stderr goes to err.txt.
  Result run(const std::string& args, const std::string& env = "env -u SCANHD_SEED") const {
    const std::string cmd =
        "cd '" + dir_.string() + "' && " + env + " '" + SCANHD_CLI + "' " + args + " 2>err.txt";
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  [[nodiscard]] std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  [[nodiscard]] json read_json(const std::string& name) const { return json::parse(read(name)); }
  [[nodiscard]] bool exists(const std::string& name) const { return fs::exists(dir_ / name); }

  void write(const std::string& name, const std::string& content) const {
    std::ofstream out(dir_ / name, std::ios::binary);
    out << content;
  }

  // A small dataset: 2 objects x 2 keys x 27 conditions.
  void gen(const std::string& out = "data") const {
    ASSERT_EQ(run("gen --objects 2 --keys 2 --out " + out).code, 0) << read("err.txt");
  }

  void train(const std::string& extra = "") const {
    ASSERT_EQ(run("train --data data --hyper-dim 2000 --epochs 5 --out model.json " + extra).code, 0)
        << read("err.txt");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndVersion) {
  EXPECT_EQ(run("--help").code, 0);
  const auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("1.0.0"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("gen --objects many").code, 2);
  EXPECT_EQ(run("gen --no-such-flag 1").code, 2);
}

TEST_F(Cli, ValidationErrorsExitThree) {
  EXPECT_EQ(run("gen --objects 0").code, 3);
  EXPECT_EQ(run("gen --objects 2", "SCANHD_SEED=abc").code, 3);
  write("bad.json", R"({"hyper_dimension": 10})");
  EXPECT_EQ(run("gen --config bad.json").code, 3);
  EXPECT_NE(read("err.txt").find("hyper_dimension"), std::string::npos);
  write("typed.json", R"({"eta": "fast"})");
  EXPECT_EQ(run("gen --config typed.json").code, 3);
  write("broken.json", "{");
  EXPECT_EQ(run("gen --config broken.json").code, 3);
  write("split.json", R"({"split": "weather:rain"})");
  EXPECT_EQ(run("gen --config split.json").code, 3);
}

TEST_F(Cli, MissingInputIsRuntimeError) {
  EXPECT_EQ(run("train --data nowhere").code, 1);
  EXPECT_EQ(run("eval --model nowhere.json").code, 1);
}

TEST_F(Cli, BadDatasetIsValidationError) {
  gen();
  std::string text = read("data/dataset.jsonl");
  const std::string key = "\"exposure_time\":\"";
  const auto pos = text.find(key);
  ASSERT_NE(pos, std::string::npos);
  const auto start = pos + key.size();
  text.replace(start, text.find('"', start) - start, "90us");
  write("data/dataset.jsonl", text);
  EXPECT_EQ(run("train --data data --hyper-dim 500").code, 3);
  EXPECT_NE(read("err.txt").find("90us"), std::string::npos);
}

TEST_F(Cli, GenIsByteDeterministicWithManifest) {
  gen("a");
  gen("b");
  EXPECT_EQ(read("a/dataset.jsonl"), read("b/dataset.jsonl"));
  EXPECT_EQ(read("a/embeddings.jsonl"), read("b/embeddings.jsonl"));
  const auto m = read_json("a/dataset.jsonl.manifest.json");
  EXPECT_EQ(m["tool"], "scanhd");
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["rows"], 108);
  EXPECT_EQ(m["config"]["synth"]["objects"], 2);
  EXPECT_TRUE(exists("a/embeddings.jsonl.manifest.json"));
  const auto rows = read("a/dataset.jsonl");
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 108);
}

TEST_F(Cli, SeedPriority) {
  ASSERT_EQ(run("gen --objects 1 --keys 1 --out d0").code, 0);
  EXPECT_EQ(read_json("d0/dataset.jsonl.manifest.json")["config"]["seed"], 1);
  ASSERT_EQ(run("gen --objects 1 --keys 1 --out d1", "SCANHD_SEED=7").code, 0);
  EXPECT_EQ(read_json("d1/dataset.jsonl.manifest.json")["config"]["seed"], 7);
  write("seed.json", R"({"seed": 9})");
  ASSERT_EQ(run("gen --objects 1 --keys 1 --config seed.json --out d2", "SCANHD_SEED=7").code, 0);
  EXPECT_EQ(read_json("d2/dataset.jsonl.manifest.json")["config"]["seed"], 9);
  ASSERT_EQ(run("gen --objects 1 --keys 1 --config seed.json --seed 11 --out d3", "SCANHD_SEED=7").code, 0);
  EXPECT_EQ(read_json("d3/dataset.jsonl.manifest.json")["config"]["seed"], 11);
  EXPECT_NE(read("d0/dataset.jsonl"), read("d1/dataset.jsonl"));
}

TEST_F(Cli, TrainEvalRoundTrip) {
  gen();
  train("--split row_random:0.8");
  const auto model = read("model.json");
  train("--split row_random:0.8");
  EXPECT_EQ(read("model.json"), model);
  const auto mm = read_json("model.json.manifest.json");
  EXPECT_EQ(mm["command"], "train");
  EXPECT_EQ(mm["train_rows"], 86);
  EXPECT_EQ(mm["inputs"].size(), 2U);

  const auto r = run("eval --model model.json --records rec.jsonl --csv report.csv");
  ASSERT_EQ(r.code, 0) << read("err.txt");
  const auto rep = read_json("report.json");
  EXPECT_EQ(rep["split"], "row_random:0.8@1");
  EXPECT_EQ(rep["count"], 22);
  EXPECT_EQ(rep["parameters"].size(), 5U);
  EXPECT_EQ(rep["parameters"][1]["win1"], "N/A");
  EXPECT_GE(rep["average"]["exact"].get<double>(), 0.8);
  EXPECT_TRUE(exists("report.json.manifest.json"));
  const auto records = read("rec.jsonl");
  EXPECT_EQ(std::count(records.begin(), records.end(), '\n'), 22);
  EXPECT_EQ(read("report.csv").substr(0, 24), "parameter,exact,win1,f1\n");
  const auto first = read("report.json");
  ASSERT_EQ(run("eval --model model.json --records rec.jsonl --csv report.csv").code, 0);
  EXPECT_EQ(read("report.json"), first);
}

TEST_F(Cli, TrainHoldsOutTestRowsByDefault) {
  gen();
  train();
  EXPECT_EQ(read_json("model.json.manifest.json")["train_rows"], 86);
  ASSERT_EQ(run("eval --model model.json").code, 0) << read("err.txt");
  auto rep = read_json("report.json");
  EXPECT_EQ(rep["split"], "row_random:0.8@1");
  EXPECT_EQ(rep["warnings"].dump().find("seen in training"), std::string::npos);

  train("--split all");
  EXPECT_EQ(read_json("model.json.manifest.json")["train_rows"], 108);
  ASSERT_EQ(run("eval --model model.json").code, 0) << read("err.txt");
  rep = read_json("report.json");
  ASSERT_FALSE(rep["warnings"].empty());
  EXPECT_NE(rep["warnings"].back().get<std::string>().find("seen in training"), std::string::npos);
  EXPECT_NE(read("err.txt").find("seen in training"), std::string::npos);
}

TEST_F(Cli, EvalBaselinesAndExplicitSplit) {
  gen();
  train("--split lighting:dark");
  ASSERT_EQ(run("eval --model model.json --predictor rule --out rule.json").code, 0) << read("err.txt");
  EXPECT_EQ(read_json("rule.json")["predictor"], "rule_lookup");
  EXPECT_EQ(read_json("rule.json")["split"], "lighting:dark@1");
  ASSERT_EQ(run("eval --model model.json --predictor knn --knn-k 3 --out knn.json").code, 0) << read("err.txt");
  EXPECT_EQ(read_json("knn.json")["predictor"], "knn");
  ASSERT_EQ(run("eval --model model.json --split position:1 --out pos.json").code, 0);
  EXPECT_EQ(read_json("pos.json")["split"], "position:1@1");
  EXPECT_EQ(run("eval --model model.json --predictor oracle").code, 3);
}

TEST_F(Cli, SweepWritesRuns) {
  gen();
  const auto r = run(
      "sweep --data data --protocol ablations --seeds 1,2 --knn false --hyper-dim 1000 --epochs 2 --jobs 2");
  ASSERT_EQ(r.code, 0) << read("err.txt");
  const auto s = read_json("sweep.json");
  EXPECT_EQ(s["protocol"], "ablations");
  EXPECT_EQ(s["runs"].size(), 6U);
  EXPECT_EQ(s["summary"].size(), 3U);
  const auto text = read("sweep.json");
  ASSERT_EQ(run("sweep --data data --protocol ablations --seeds 1,2 --knn false --hyper-dim 1000 --epochs 2").code, 0);
  EXPECT_EQ(read("sweep.json"), text);
}

TEST_F(Cli, FlywheelDistillsGeneratorData) {
  gen();
  const auto r = run("flywheel --objects 2 --keys 2 --corrupt-rate 0.25 --out fw");
  ASSERT_EQ(r.code, 0) << read("err.txt");
  EXPECT_NE(r.out.find("1 corrupted"), std::string::npos) << r.out;
  EXPECT_EQ(read("fw/dataset.jsonl"), read("data/dataset.jsonl"));
  EXPECT_EQ(read("fw/embeddings.jsonl"), read("data/embeddings.jsonl"));
  const auto m = read_json("fw/dataset.jsonl.manifest.json");
  EXPECT_EQ(m["initial_fail"], 27);
  EXPECT_EQ(m["residual_fail"], 0);
  EXPECT_FALSE(read("fw/audit.jsonl").empty());

  ASSERT_EQ(run("flywheel --objects 2 --keys 2 --corrupt-rate 0.25 --rounds 0 --out fw0").code, 0);
  EXPECT_EQ(read_json("fw0/dataset.jsonl.manifest.json")["residual_fail"], 27);
}

TEST_F(Cli, FlywheelSubprocessAgent) {
  const auto r = run(std::string("flywheel --objects 2 --keys 2 --corrupt-rate 0.25 --out remote --agent '") +
                     SCANHD_RULE_AGENT + "'");
  ASSERT_EQ(r.code, 0) << read("err.txt");
  ASSERT_EQ(run("flywheel --objects 2 --keys 2 --corrupt-rate 0.25 --out local").code, 0);
  EXPECT_EQ(read("remote/dataset.jsonl"), read("local/dataset.jsonl"));
  EXPECT_EQ(read("remote/audit.jsonl"), read("local/audit.jsonl"));
  EXPECT_EQ(run("flywheel --objects 1 --keys 1 --corrupt-rate 1 --out dead --agent 'exit 0'").code, 1);
}

TEST_F(Cli, Recommend) {
  gen();
  train();
  const auto data = read("data/dataset.jsonl");
  const auto row = json::parse(data.substr(0, data.find('\n')));
  const std::string text = row["instruction_text"];
  const std::string obs = row["observation_embedding_id"];
  const auto r = run("recommend --model model.json --instruction '" + text + "' --observation-embedding " + obs);
  ASSERT_EQ(r.code, 0) << read("err.txt");
  const auto doc = json::parse(r.out);
  ASSERT_EQ(doc["parameters"].size(), 5U);
  EXPECT_EQ(doc["request"]["instruction_source"], "dataset:" + row["instruction_embedding_id"].get<std::string>());
  EXPECT_EQ(doc["parameters"][0]["parameter"], "sampling_frequency");
  EXPECT_EQ(doc["parameters"][0]["value"], row["labels"]["sampling_frequency"]);
  EXPECT_EQ(doc["parameters"][1]["value"], row["labels"]["measurement_range_x"]);
  EXPECT_EQ(run("recommend --model model.json --instruction '" + text + "'").code, 2);
  EXPECT_EQ(run("recommend --model model.json --instruction 'hello there' --observation-embedding " + obs).code, 3);
  EXPECT_EQ(run("recommend --model model.json --instruction-embedding data/embeddings.jsonl#nope "
                "--observation-embedding " + obs)
                .code,
            1);
  ASSERT_EQ(run("recommend --model model.json --instruction '" + text +
                "' --observation-embedding data/embeddings.jsonl#" + obs + " --out rec.json")
                .code,
            0);
  EXPECT_EQ(read_json("rec.json")["parameters"], doc["parameters"]);
  EXPECT_TRUE(exists("rec.json.manifest.json"));

  // Text outside the dataset is routed through its parsed slot.
  const auto novel = run("recommend --model model.json --instruction 'Trace the silhouette of the bezel on the gear.' "
                         "--observation-embedding " + obs);
  ASSERT_EQ(novel.code, 0) << read("err.txt");
  EXPECT_EQ(json::parse(novel.out)["request"]["instruction_source"], "slot:local_outline/bezel");
}

TEST_F(Cli, Latency) {
  gen();
  train();
  const auto r = run("latency --model model.json --queries 30 --warmup 2");
  ASSERT_EQ(r.code, 0) << read("err.txt");
  const auto st = read_json("latency.json");
  EXPECT_EQ(st["n"], 30);
  EXPECT_LE(st["p50_us"].get<double>(), st["p99_us"].get<double>());
  EXPECT_EQ(read_json("latency.json.manifest.json")["hyper_dim"], 2000);
}
