// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line binary: pipeline wiring, file
// artifacts, exit codes. The binary path comes in via LGDEA_CLI_PATH.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "lgdea/corpus.hpp"
#include "lgdea/eval.hpp"
#include "lgdea/presets.hpp"
#include "lgdea/trainer.hpp"

namespace fs = std::filesystem;

namespace {
std::string cli() { return LGDEA_CLI_PATH; }

int run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("lgdea_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};
}  // namespace

TEST_CASE("cli: gen -> train -> eval pipeline on a reduced corpus") {
  TempDir dir;
  const std::string corpus = (dir.path / "corpus.jsonl").string();

  REQUIRE(run("--seed 3 gen --images 120 --out " + corpus) == 0);
  lgdea::Corpus loaded = lgdea::load_corpus(corpus);
  CHECK(loaded.paired.size() == 12);
  CHECK(loaded.unpaired_images.size() == 108);

  // A short training config so the test stays fast.
  lgdea::TrainConfig short_cfg = lgdea::preset_by_name("small").train;
  short_cfg.epochs = 2;
  lgdea::save_train_config(short_cfg, (dir.path / "config.json").string());

  const std::string out_dir = (dir.path / "run").string();
  REQUIRE(run("--seed 3 --config " + (dir.path / "config.json").string() + " train --corpus " +
              corpus + " --out " + out_dir) == 0);
  CHECK(fs::exists(out_dir + "/checkpoint.json"));
  CHECK(fs::exists(out_dir + "/metrics.jsonl"));
  // One metrics record per step, parseable as JSON lines.
  std::istringstream metrics(slurp(out_dir + "/metrics.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(metrics, line)) {
    ++lines;
    CHECK(line.find("\"kind\":\"step\"") != std::string::npos);
  }
  CHECK(lines > 0);

  const std::string eval_out = (dir.path / "eval.jsonl").string();
  REQUIRE(run("--seed 5 eval --corpus " + corpus + " --checkpoint " + out_dir +
              "/checkpoint.json --out " + eval_out) == 0);
  lgdea::EvalReport report = lgdea::eval_report_from_json_line(slurp(eval_out));
  CHECK(report.seed == 5);
  CHECK(report.precision_at_k.contains(1));
  CHECK(report.precision_at_k.contains(10));

  // dump-relations produces one relations record.
  const std::string rel_out = (dir.path / "relations.jsonl").string();
  REQUIRE(run("--seed 3 dump-relations --corpus " + corpus + " --checkpoint " + out_dir +
              "/checkpoint.json --out " + rel_out) == 0);
  CHECK(slurp(rel_out).find("\"kind\":\"relations\"") != std::string::npos);
}

TEST_CASE("cli: usage and failure exit codes") {
  TempDir dir;
  CHECK(run("") == 1);                       // missing subcommand
  CHECK(run("train") == 1);                  // missing required --corpus
  CHECK(run("unknown-subcommand") == 1);
  CHECK(run("eval --corpus /nonexistent.jsonl --checkpoint /nonexistent.json") == 1);

  // Truncated corpus fails with a usage-class error, not a crash.
  const std::string corpus = (dir.path / "corpus.jsonl").string();
  REQUIRE(run("--seed 1 gen --images 60 --out " + corpus) == 0);
  std::string text = slurp(corpus);
  std::ofstream out(corpus, std::ios::trunc);
  out << text.substr(0, text.size() / 2);
  out.close();
  CHECK(run("--seed 1 train --corpus " + corpus + " --out " + (dir.path / "r").string()) == 1);
}

TEST_CASE("cli: gradcheck exits zero at default config") {
  CHECK(run("--seed 2 gradcheck") == 0);
  CHECK(run("--seed 2 --mode global_baseline gradcheck") == 0);
}

TEST_CASE("cli: cross-domain generation flag round-trips") {
  TempDir dir;
  const std::string corpus = (dir.path / "cross.jsonl").string();
  REQUIRE(run("--seed 4 gen --images 80 --cross-domain --out " + corpus) == 0);
  lgdea::Corpus loaded = lgdea::load_corpus(corpus);
  CHECK(loaded.config.cross_domain);
}
