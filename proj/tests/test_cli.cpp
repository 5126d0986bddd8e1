// Copyright 2026 The Longturn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Sandbox {
 public:
  Sandbox() : dir_(fs::temp_directory_path() / ("longturn_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Sandbox() { fs::remove_all(dir_); }

  const fs::path& dir() const { return dir_; }
  fs::path operator/(const std::string& name) const { return dir_ / name; }

  void Write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name, std::ios::binary) << text;
  }

  // Runs the CLI inside the sandbox directory.
  Result Run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" LONGTURN_CLI "' " +
                            args + " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    Result r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = Slurp(dir_ / "stdout.txt");
    r.err = Slurp(dir_ / "stderr.txt");
    return r;
  }

 private:
  fs::path dir_;
};

std::string ToyHead(std::size_t lines) {
  std::ifstream in(LONGTURN_SOURCE_DIR "/data/toy_corpus.jsonl");
  std::string line, out;
  for (std::size_t i = 0; i < lines && std::getline(in, line); ++i) out += line + "\n";
  return out;
}

std::size_t CountLines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::size_t Eligible(const std::string& corpus) {
  std::istringstream in(corpus);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += nlohmann::json::parse(line).at("utterances").size() >= 4;
  return n;
}

}  // namespace

TEST_CASE("missing input path") {
  Sandbox box;
  const auto r = box.Run("build-pairs --input does/not/exist.jsonl --output pairs.jsonl");
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("does/not/exist.jsonl") != std::string::npos);
  // The last stderr line is a machine-readable error record.
  const auto last = r.err.substr(r.err.rfind('\n', r.err.size() - 2) + 1);
  const auto record = nlohmann::json::parse(last);
  CHECK(record.at("level") == "error");
  CHECK(record.at("cmd") == "build-pairs");
  CHECK(record.at("exit_code") == r.exit_code);
}

TEST_CASE("all sessions too short") {
  Sandbox box;
  box.Write("short.jsonl",
            "{\"id\": \"a\", \"utterances\": [\"hi\", \"hello\"]}\n"
            "{\"id\": \"b\", \"utterances\": [\"one\", \"two\", \"three\"]}\n");
  const auto r = box.Run("build-pairs --input short.jsonl --output pairs.jsonl");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(box / "pairs.jsonl"));
  CHECK(fs::file_size(box / "pairs.jsonl") == 0);
  CHECK(r.err.find("\"level\":\"warning\"") != std::string::npos);
}

TEST_CASE("pairs from a 50-session corpus") {
  Sandbox box;
  const std::string corpus = ToyHead(50);
  box.Write("toy.jsonl", corpus);
  const auto r = box.Run("--seed 3 build-pairs --input toy.jsonl --output pairs.jsonl --n-easy 3 --n-hard 2");
  REQUIRE(r.exit_code == 0);
  CHECK(CountLines(Slurp(box / "pairs.jsonl")) == Eligible(corpus));
  CHECK(Eligible(corpus) > 0);
}

TEST_CASE("config file, environment and flag precedence") {
  Sandbox box;
  box.Write("toy.jsonl", ToyHead(60));
  box.Write("run.toml",
            "seed = 5\n"
            "[build-pairs]\n"
            "input = \"toy.jsonl\"\n"
            "output = \"from_config.jsonl\"\n"
            "n-easy = 2\n"
            "n-hard = 0\n");
  SUBCASE("file") {
    const auto r = box.Run("--config run.toml build-pairs");
    REQUIRE(r.exit_code == 0);
    const auto first = nlohmann::json::parse(Slurp(box / "from_config.jsonl").substr(0, Slurp(box / "from_config.jsonl").find('\n')));
    CHECK(first.at("negatives").size() == 2);
    CHECK(r.err.find("\"seed\":5") != std::string::npos);
  }
  SUBCASE("environment") {
    const auto r = box.Run("build-pairs --n-easy 1", "LONGTURN_CONFIG=run.toml");
    REQUIRE(r.exit_code == 0);
    const auto text = Slurp(box / "from_config.jsonl");
    CHECK(nlohmann::json::parse(text.substr(0, text.find('\n'))).at("negatives").size() == 1);
  }
  SUBCASE("unknown key") {
    box.Write("bad.toml", "[build-pairs]\ninput = \"toy.jsonl\"\nn_easy_typo = 3\n");
    const auto r = box.Run("--config bad.toml build-pairs --output x.jsonl");
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("n_easy_typo") != std::string::npos);
  }
}

TEST_CASE("pipeline") {
  Sandbox box;
  box.Write("toy.jsonl", ToyHead(200));
  REQUIRE(box.Run("--seed 1 build-pairs --input toy.jsonl --output pairs.jsonl").exit_code == 0);
  const std::string train =
      "--seed 1 train --pairs pairs.jsonl --hash-bits 10 --dim 8 --epochs 2 --batch-size 16";
  const auto t1 = box.Run(train + " --output a.bin --report train.json");
  REQUIRE(t1.exit_code == 0);
  CHECK(t1.err.find("\"event\":\"epoch\"") != std::string::npos);
  CHECK(t1.out.find("best checkpoint") != std::string::npos);
  REQUIRE(box.Run(train + " --output b.bin").exit_code == 0);
  CHECK(Slurp(box / "a.bin") == Slurp(box / "b.bin"));
  REQUIRE(box.Run(train + " --output c.bin --resume-from a.bin").exit_code == 0);
  CHECK(Slurp(box / "c.bin") != Slurp(box / "a.bin"));

  REQUIRE(box.Run("index --corpus toy.jsonl --checkpoint a.bin --output idx.bin --shards 3").exit_code == 0);
  const auto rs = box.Run(
      "--seed 1 rescale --corpus toy.jsonl --index idx.bin --checkpoint a.bin --output long.jsonl "
      "--report rescale.json --trace trace.jsonl --updates 3");
  REQUIRE(rs.exit_code == 0);
  const auto report = nlohmann::json::parse(Slurp(box / "rescale.json"));
  CHECK(report.at("sessions") == 200);
  CHECK(report.at("config").at("updates") == 3);
  CHECK(report.contains("input_digest"));
  CHECK(CountLines(Slurp(box / "trace.jsonl")) == 200);

  const auto st = box.Run("stats --corpus long.jsonl --baseline toy.jsonl --output stats.json");
  REQUIRE(st.exit_code == 0);
  const auto stats = nlohmann::json::parse(Slurp(box / "stats.json"));
  CHECK(stats.at("metric") == "stats");
  CHECK(stats.at("value").at("baseline").at("turn_ratio") ==
        doctest::Approx(report.at("turn_ratio").get<double>()));
  CHECK(st.out.find("turn ratio") != std::string::npos);

  const auto ev = box.Run("eval-retriever --corpus toy.jsonl --checkpoint a.bin --output eval.json --ks 1 --ks 5");
  REQUIRE(ev.exit_code == 0);
  for (const char* col : {"Irrelevance", "Local Relevance", "Discourse Incoherence"}) {
    CHECK(ev.out.find(col) != std::string::npos);
  }
  const auto metrics = nlohmann::json::parse(Slurp(box / "eval.json"));
  CHECK(metrics.at("value").at("retrievers").contains("bm25"));
  CHECK(metrics.at("value").at("retrievers").contains("dense"));
  CHECK(metrics.at("value").at("search").at("queries_per_second").get<double>() > 0);

  // Mismatched encoder and index dimensions fail cleanly.
  REQUIRE(box.Run("--seed 1 train --pairs pairs.jsonl --hash-bits 10 --dim 4 --epochs 1 --output small.bin").exit_code == 0);
  const auto bad = box.Run("rescale --corpus toy.jsonl --index idx.bin --checkpoint small.bin --output x.jsonl");
  CHECK(bad.exit_code == 1);
  CHECK(bad.err.find("dimension") != std::string::npos);
}
