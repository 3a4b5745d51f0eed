#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "datashield/error.hpp"
#include "datashield/llm.hpp"
#include "datashield/net.hpp"

namespace ds = datashield;
using namespace datashield::llm;

TEST(Template, RendersEverySlot) {
  Template t("Hi {{name}}, see {{thing}} and {{name}} again");
  EXPECT_EQ(t.render({{"name", "Ana"}, {"thing", "x"}}), "Hi Ana, see x and Ana again");
  ASSERT_EQ(t.slots().size(), 2u);
}

TEST(Template, MissingSlotIsConfigError) {
  Template t("{{a}} {{b}}");
  EXPECT_THROW(t.render({{"a", "1"}}), ds::ConfigError);
}

TEST(Template, UnknownTaskIsConfigError) {
  auto reg = TemplateRegistry::builtin();
  EXPECT_TRUE(reg.contains("forward"));
  EXPECT_THROW(reg.get("no_such_task"), ds::ConfigError);
}

// sha256 of "6:task_a\nhello world", computed outside the library.
TEST(Fingerprint, MatchesReferenceDigest) {
  EXPECT_EQ(fingerprint({"task_a", "hello world"}),
            "b12c51e002b66bfb3c8b4c4ceb4457d7650ab657dc48a43f5512e86674908f42");
  // Length prefix keeps task/prompt boundaries unambiguous.
  EXPECT_NE(fingerprint({"ab", "c"}), fingerprint({"a", "bc"}));
}

TEST(Cassette, SerializeParseRoundTrip) {
  Cassette c({{std::string(64, 'a'), "réponse\n\ttab"}, {std::string(64, 'b'), ""}});
  const auto text = c.serialize();
  EXPECT_NE(text.find("csOpcG9uc2UKCXRhYg=="), std::string::npos);
  EXPECT_EQ(text.rfind("# datashield-cassette v1", 0), 0u);
  EXPECT_EQ(Cassette::parse(text), c);
}

TEST(Cassette, BadLineReportsLineNumber) {
  const std::string text = "# datashield-cassette v1\n" + std::string(64, 'a') + "\taGk=\nnot a record\n";
  try {
    Cassette::parse(text);
    FAIL() << "expected ParseError";
  } catch (const ds::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find('3'), std::string::npos) << e.what();
  }
  EXPECT_THROW(Cassette::parse("abc\taGk=\n"), ds::ParseError);
}

TEST(Cassette, ReplayInOrderThenRepeatsLast) {
  Request r{"t", "p"};
  Request other{"t", "q"};
  const auto fp = fingerprint(r);
  auto backend = CassetteBackend::replay(
      Cassette({{fp, "one"}, {fingerprint(other), "x"}, {fp, "two"}}));
  EXPECT_EQ(backend->send(r), "one");
  EXPECT_EQ(backend->send(r), "two");
  EXPECT_EQ(backend->send(r), "two");
  EXPECT_EQ(backend->send(other), "x");
}

TEST(Cassette, StrictMissThrowsReplayError) {
  auto backend = CassetteBackend::replay(Cassette{});
  EXPECT_THROW(backend->send({"t", "p"}), ds::ReplayError);
}

TEST(Cassette, NonStrictFallsBack) {
  auto stub = std::make_shared<StubBackend>(std::map<std::string, std::string>{{"t", "fallback"}});
  auto backend = CassetteBackend::replay(Cassette{}, false, stub);
  EXPECT_EQ(backend->send({"t", "p"}), "fallback");
}

TEST(Cassette, RecordThenReplayGivesSameAnswers) {
  auto stub = std::make_shared<StubBackend>(std::map<std::string, std::string>{{"a", "A"}, {"b", "B"}});
  auto rec = CassetteBackend::record(stub);
  EXPECT_EQ(rec->send({"a", "1"}), "A");
  EXPECT_EQ(rec->send({"b", "2"}), "B");
  stub->set_response("a", "changed");
  EXPECT_EQ(rec->send({"a", "1"}), "changed");

  auto tmp = std::filesystem::temp_directory_path() / "ds_cassette_test.cassette";
  rec->cassette().save(tmp);
  auto replay = CassetteBackend::replay(Cassette::load(tmp));
  std::filesystem::remove(tmp);
  EXPECT_EQ(replay->send({"a", "1"}), "A");
  EXPECT_EQ(replay->send({"b", "2"}), "B");
  EXPECT_EQ(replay->send({"a", "1"}), "changed");
}

TEST(Stub, ResponsesAndFailure) {
  StubBackend stub({{"t", "yes"}}, "dflt");
  EXPECT_EQ(stub.send({"t", "p"}), "yes");
  EXPECT_EQ(stub.send({"u", "p"}), "dflt");
  stub.set_response_for({"t", "special"}, "override");
  EXPECT_EQ(stub.send({"t", "special"}), "override");
  stub.set_failing(true);
  EXPECT_THROW(stub.send({"t", "p"}), ds::LlmError);
}

TEST(Client, AuditsSuccessAndFailure) {
  auto stub = std::make_shared<StubBackend>(std::map<std::string, std::string>{{"forward", "ok"}});
  auto audit = std::make_shared<AuditLog>();
  Client client(stub, TemplateRegistry::builtin(), "local", audit);
  EXPECT_EQ(client.complete("forward", {{"prompt", "hi"}}), "ok");
  stub->set_failing(true);
  EXPECT_THROW(client.complete("forward", {{"prompt", "again"}}), ds::LlmError);
  const auto recs = audit->records();
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].sequence, 1);
  EXPECT_EQ(recs[0].prompt, "hi");
  EXPECT_EQ(recs[0].response, "ok");
  EXPECT_EQ(recs[0].fingerprint, fingerprint({"forward", "hi"}));
  EXPECT_FALSE(recs[1].error.empty());
  EXPECT_THROW(client.complete("forward", {}), ds::ConfigError);
}

TEST(Client, AuditFileIsJsonLines) {
  auto path = std::filesystem::temp_directory_path() / "ds_audit_test.jsonl";
  std::filesystem::remove(path);
  {
    auto audit = std::make_shared<AuditLog>(path);
    Client client(std::make_shared<StubBackend>(), TemplateRegistry::builtin(), "local", audit);
    client.complete("forward", {{"prompt", "a"}});
    client.complete("forward", {{"prompt", "b"}});
  }
  std::ifstream in(path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  std::filesystem::remove(path);
  EXPECT_EQ(n, 2);
}

namespace {
RetrievalIndex small_index() {
  RetrievalIndex idx;
  idx.add("d2", "SMC5 binds SMC6 and NSE2");
  idx.add("d1", "NSE2 is a SUMO ligase");
  idx.add("d3", "Insulin regulates glucose glucose");
  return idx;
}
}  // namespace

// idf = ln(1 + N/df), score = sum over query terms of qcount * tf * idf.
TEST(Retrieval, HandComputedScores) {
  auto idx = small_index();
  auto hits = idx.retrieve("glucose insulin", 5);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].doc_id, "d3");
  EXPECT_NEAR(hits[0].score, 4.1588830833596715, 1e-12);  // 2 ln4 + ln4

  hits = idx.retrieve("nse2 sumo", 5);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].doc_id, "d1");
  EXPECT_NEAR(hits[0].score, 2.302585092994046, 1e-12);
  EXPECT_EQ(hits[1].doc_id, "d2");
  EXPECT_NEAR(hits[1].score, 0.9162907318741551, 1e-12);
}

TEST(Retrieval, TiesBreakByDocId) {
  auto idx = small_index();
  auto hits = idx.retrieve("NSE2", 5);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].doc_id, "d1");
  EXPECT_EQ(hits[1].doc_id, "d2");
  EXPECT_DOUBLE_EQ(hits[0].score, hits[1].score);
  EXPECT_EQ(idx.retrieve("NSE2", 1).size(), 1u);
  EXPECT_TRUE(idx.retrieve("unrelated", 3).empty());
}

TEST(Retrieval, RejectsBadArguments) {
  auto idx = small_index();
  EXPECT_THROW(idx.retrieve("x", 0), ds::ArgumentError);
  EXPECT_THROW(idx.add("d1", "dup"), ds::ArgumentError);
}

TEST(Retrieval, AugmentPutsHitsInRankOrder) {
  auto idx = small_index();
  Client client(std::make_shared<StubBackend>());
  const auto prompt = render_augmented(client, "qa_answer", "nse2 sumo", idx, 2,
                                       {{"question", "q"}});
  const auto a = prompt.find("NSE2 is a SUMO ligase");
  const auto b = prompt.find("SMC5 binds SMC6 and NSE2");
  ASSERT_NE(a, std::string::npos);
  ASSERT_NE(b, std::string::npos);
  EXPECT_LT(a, b);
  EXPECT_EQ(prompt.find("Insulin"), std::string::npos);
}

TEST(Remote, BlockedByArmedGuard) {
  ASSERT_TRUE(ds::net::guard_armed());
  const auto before = ds::net::outbound_attempts();
  ASSERT_EQ(before, 0u);
  RemoteBackend remote({"http://127.0.0.1:9/v1/chat/completions", "m", "DS_TEST_KEY", {}});
  EXPECT_THROW(remote.send({"t", "p"}), ds::Error);
  EXPECT_EQ(ds::net::outbound_attempts(), 1u);
  // The attempt above was intentional; clear it for the global zero check.
  ds::net::reset_outbound_attempts();
}
