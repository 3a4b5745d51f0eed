#include <gtest/gtest.h>

#include <httplib.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "support/subprocess.hpp"
#include "support/temp_dir.hpp"
#include "test_paths.hpp"

using nlohmann::json;
using testing_support::Background;
using testing_support::run;
using testing_support::TempDir;

namespace {

const std::string kCli = test_paths::kCli.string();

std::string fixture(const char* name) { return test_paths::fixture(name).string(); }

std::vector<std::string> cli(std::initializer_list<std::string> args) {
  std::vector<std::string> argv{kCli};
  argv.insert(argv.end(), args);
  return argv;
}

std::vector<std::string> policy_args(const TempDir& tmp) {
  return cli({"policy", "--tool-bank", fixture("tool_bank.json"), "--all", "--offline",
              "--cache-dir", (tmp / "cache").string(), "--internal-summary",
              fixture("cassettes/internal_summary.json"), "--fixture",
              "https://seqalign.example/privacy=" + fixture("policies/seqalign.html"), "--fixture",
              "https://mail.example/privacy=" + fixture("policies/two_sentence.txt")});
}

}  // namespace

TEST(Cli, ScanExitsThreeOnHighFindings) {
  const auto r = run(cli({"scan", "--gazetteer", fixture("gazetteer.tsv"), fixture("paper_prompt.txt")}));
  EXPECT_EQ(r.exit_code, 3) << r.err;
  EXPECT_NE(r.out.find("2 span(s), 2 High"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("[49,78) GeneName High/Red via Gazetteer"), std::string::npos);
}

TEST(Cli, ScanCleanInputExitsZero) {
  const auto r = run(cli({"scan", "--gazetteer", fixture("gazetteer.tsv")}), "Nothing sensitive in here.");
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("0 span(s)"), std::string::npos);
  EXPECT_EQ(run(cli({"scan"}), "").exit_code, 0);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(cli({"scan", "--gazetteer", "/nonexistent.tsv"})).exit_code, 2);
  EXPECT_EQ(run(cli({"scan", "--no-such-flag"})).exit_code, 2);
  EXPECT_EQ(run(cli({})).exit_code, 2);
  EXPECT_EQ(run(cli({"scan", "/nonexistent/input.txt"})).exit_code, 2);
  EXPECT_EQ(run(cli({"scan", "--cassette", "x.cassette"}), "x").exit_code, 2);
  EXPECT_EQ(run(cli({"policy", "--tool-bank", fixture("tool_bank.json"), "--all", "--tool", "seqalign"})).exit_code, 2);
}

TEST(Cli, RedactWritesPlaceholders) {
  const auto r = run(cli({"redact", "--gazetteer", fixture("gazetteer.tsv"), fixture("paper_prompt.txt")}));
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out,
            "What is the purpose of the novel sequence of the [GENE_NAME] gene? And analyze this "
            "protein sequence '[PROTEIN_SEQUENCE]'.");
}

TEST(Cli, JsonLinesAreStable) {
  const auto args = cli({"scan", "--format", "json-lines", "--gazetteer", fixture("gazetteer.tsv"),
                         fixture("paper_prompt.txt")});
  const auto a = run(args);
  const auto b = run(args);
  EXPECT_EQ(a.out, b.out);
  const auto j = json::parse(a.out);
  EXPECT_EQ(j["report"]["spans"].size(), 2u);
}

TEST(Cli, EvalPrintsTable) {
  const auto r = run(cli({"eval", "--gazetteer", fixture("gazetteer.tsv"), "--corpus", fixture("corpus_20.tsv")}));
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("F1 Score (%)"), std::string::npos);
  EXPECT_NE(r.out.find("78.26"), std::string::npos);  // accuracy and recall, 18/23
  EXPECT_NE(r.out.find("81.82"), std::string::npos);  // precision, 18/22
  EXPECT_NE(r.out.find("80.00"), std::string::npos);
}

TEST(Cli, PolicyAllReportsPerToolFailures) {
  TempDir tmp;
  const auto r = run(policy_args(tmp));
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("Privacy label: seqalign"), std::string::npos);
  EXPECT_NE(r.out.find("Retention:          30 days"), std::string::npos);
  EXPECT_NE(r.out.find("Error for foldserver"), std::string::npos);
  EXPECT_NE(r.out.find("[Violation] seqalign"), std::string::npos);
}

TEST(Cli, PolicyQaFromCassette) {
  TempDir tmp;
  auto args = policy_args(tmp);
  for (const auto& a : {std::string("--questions"), fixture("qa_questions.tsv"), std::string("--backend"),
                        std::string("cassette"), std::string("--cassette"), fixture("cassettes/qa.cassette")}) {
    args.push_back(a);
  }
  const auto r = run(args);
  EXPECT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("QA agreement for seqalign: 0.6000"), std::string::npos) << r.out;
}

TEST(Cli, ServeAnswersHealthAndStopsOnSigterm) {
  TempDir tmp;
  const json config{{"gazetteer", fixture("gazetteer.tsv")},
                    {"tool_bank", fixture("tool_bank.json")},
                    {"policy_cache_dir", (tmp / "cache").string()},
                    {"offline", true}};
  std::ofstream(tmp / "config.json") << config.dump();
  Background server(cli({"serve", "--config", (tmp / "config.json").string(), "--listen", "127.0.0.1:0",
                         "--storage", (tmp / "s.db").string()}));
  const auto line = server.wait_for("listening on port", std::chrono::seconds(10));
  ASSERT_FALSE(line.empty());
  const int port = std::stoi(line.substr(line.rfind(' ') + 1));
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/v1/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const int status = server.kill(SIGTERM);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
}
