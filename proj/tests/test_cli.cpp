#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support.hpp"

using websed::testing::TempDir;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run websed_cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + " " WEBSED_CLI_PATH " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

/// The last line of output parsed as the JSON error report.
nlohmann::json error_line(const Run& r) {
  auto text = r.output;
  while (!text.empty() && text.back() == '\n') text.pop_back();
  const auto pos = text.rfind('\n');
  return nlohmann::json::parse(pos == std::string::npos ? text : text.substr(pos + 1));
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(websed_cli("").code, 64);
  EXPECT_EQ(websed_cli("split --no-such-flag").code, 64);
  EXPECT_EQ(websed_cli("evaluate --gt crowd").code, 64);
  const auto help = websed_cli("--help");
  EXPECT_EQ(help.code, 0);
  for (const char* sub : {"split", "featurize", "train", "crawl", "predict", "rank", "evaluate", "serve"})
    EXPECT_NE(help.output.find(sub), std::string::npos) << sub;
}

TEST(Cli, ConfigErrorsExitTwoAndThree) {
  TempDir dir("cli");
  const auto missing = websed_cli("split --config " + (dir / "absent.json").string());
  EXPECT_EQ(missing.code, 3);
  const auto report = error_line(missing);
  EXPECT_EQ(report.at("error"), "MissingInput");
  EXPECT_EQ(report.at("exit_code"), 3);

  std::ofstream(dir / "typo.json") << R"({"trian": {}})";
  const auto typo = websed_cli("split --config " + (dir / "typo.json").string());
  EXPECT_EQ(typo.code, 2);
  EXPECT_EQ(error_line(typo).at("error"), "BadConfig");

  std::ofstream(dir / "ok.json") << "{}";
  EXPECT_EQ(websed_cli("split --dataset marsquake --config " + (dir / "ok.json").string()).code, 2);
  EXPECT_EQ(websed_cli("split --config " + (dir / "ok.json").string(), "WEBSED_TRAIN__EPOCHS=zero").code, 2);
}

TEST(Cli, StagesRunInOrderOnTheFixture) {
  TempDir dir("cli");
  ASSERT_EQ(websed_cli("fixture --out " + dir.path().string()).code, 0);
  const auto config = (dir / "config.json").string();
  const std::string env = "WEBSED_TRAIN__EPOCHS=2 WEBSED_THREADS=2";
  const auto work = dir / "work";

  // Out of order: nothing to predict with yet.
  const auto early = websed_cli("predict --config " + config, env);
  EXPECT_EQ(early.code, 3) << early.output;

  for (const char* stage : {"split", "featurize --datasets-only", "train", "crawl", "featurize --corpus-only", "predict",
                            "rank", "evaluate --gt query", "evaluate --gt human"}) {
    const auto r = websed_cli(std::string(stage) + " --config " + config, env);
    ASSERT_EQ(r.code, 0) << stage << "\n" << r.output;
    EXPECT_NE(r.output.find("config_hash "), std::string::npos);
  }
  for (const auto& rel : {"custom/splits.csv", "custom/model.bin", "custom/training_log.csv", "custom/test_accuracy.json",
                          "corpus/inventory.csv", "predictions/custom.csv", "rankings/custom.csv",
                          "eval/curves_query.csv", "eval/curves_human.csv", "eval/corpus_precision.csv",
                          "feedback/assignments.csv"})
    EXPECT_TRUE(std::filesystem::exists(work / rel)) << rel;
  EXPECT_EQ(first_line(work / "predictions" / "custom.csv").rfind("# config_hash=", 0), 0u);

  // The training log honors the environment override.
  std::ifstream log(work / "custom" / "training_log.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(log, line))
    if (!line.empty() && std::isdigit(static_cast<unsigned char>(line[0]))) ++rows;
  EXPECT_EQ(rows, 2u);

  // --seed changes the config hash; --threads does not.
  const auto hash_of = [&](const std::string& flags) {
    const auto r = websed_cli("rank --config " + config + " " + flags, env);
    const auto pos = r.output.find("config_hash ");
    return pos == std::string::npos ? std::string() : r.output.substr(pos + 12, 16);
  };
  EXPECT_EQ(hash_of("--threads 1"), hash_of("--threads 3"));
  EXPECT_NE(hash_of("--seed 5"), hash_of(""));
}
