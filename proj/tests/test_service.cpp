#include <gtest/gtest.h>

#include <httplib.h>

#include <fstream>
#include <thread>

#include "datashield/error.hpp"
#include "datashield/service.hpp"
#include "support/fixture_gateway.hpp"
#include "support/schema_check.hpp"
#include "support/temp_dir.hpp"

using namespace datashield;
using nlohmann::json;
using testing_support::kPaperPrompt;
using testing_support::SchemaCheck;
using testing_support::TempDir;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::filesystem::create_directories(tmp_ / "static");
    std::ofstream(tmp_ / "static/index.html") << "<html>dashboard</html>";
    ServiceConfig config;
    config.port = 0;
    config.static_dir = tmp_ / "static";
    auto gateway = std::make_shared<Gateway>(GatewayConfig{},
                                             testing_support::fixture_resources(tmp_ / "cache"),
                                             std::make_shared<SessionStore>(":memory:"));
    service_ = std::make_unique<HttpService>(gateway, config);
    port_ = service_->bind();
    thread_ = std::thread([this] { service_->listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 200 && !service_->running(); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  void TearDown() override {
    service_->stop();
    thread_.join();
  }

  // Parses the body and checks it against a schema definition.
  json expect(const httplib::Result& res, int status, const std::string& def) {
    EXPECT_TRUE(res) << "no response";
    if (!res) return {};
    EXPECT_EQ(res->status, status) << res->body;
    auto body = json::parse(res->body);
    for (const auto& e : schema_.validate(body, def)) ADD_FAILURE() << def << " " << e;
    return body;
  }

  std::string new_session() {
    return expect(client_->Post("/v1/sessions"), 201, "SessionCreated")["session_id"];
  }

  TempDir tmp_;
  SchemaCheck schema_ = SchemaCheck::load(test_paths::kSchema.string());
  std::unique_ptr<HttpService> service_;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

}  // namespace

TEST_F(ServiceTest, HealthAndSchema) {
  const auto health = expect(client_->Get("/v1/health"), 200, "Health");
  EXPECT_EQ(health["status"], "ok");
  auto res = client_->Get("/v1/schema");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body), schema_.root());
}

TEST_F(ServiceTest, StaticRoute) {
  auto res = client_->Get("/index.html");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "<html>dashboard</html>");
}

TEST_F(ServiceTest, AnalyzeFeedbackTermsAndSession) {
  const auto id = new_session();
  const json request{{"prompt", kPaperPrompt}, {"options", {{"redact_before_send", true}, {"forward", false}}}};
  const auto entry = expect(client_->Post("/v1/sessions/" + id + "/analyze", request.dump(), "application/json"),
                            200, "AnalysisResponse");
  ASSERT_EQ(entry["detection"]["spans"].size(), 2u);
  EXPECT_EQ(entry["redacted"]["text"].get<std::string>().find("NSE2"), std::string::npos);

  const std::string span_id = entry["detection"]["spans"][0]["id"];
  const auto fb = expect(client_->Post("/v1/sessions/" + id + "/feedback",
                                       json{{"span_id", span_id}, {"verdict", "NotConfidential"}}.dump(),
                                       "application/json"),
                         200, "FeedbackResponse");
  EXPECT_EQ(fb["status"], "recorded");

  const auto terms = expect(client_->Put("/v1/sessions/" + id + "/terms",
                                         json{{"add", {"ProjectHelix-42"}}, {"remove", json::array()}}.dump(),
                                         "application/json"),
                            200, "TermsResponse");
  EXPECT_EQ(terms["terms"]["terms"].size(), 1u);

  const auto session = expect(client_->Get("/v1/sessions/" + id), 200, "Session");
  EXPECT_EQ(session["history"].size(), 1u);
  EXPECT_EQ(session["feedback"].size(), 1u);
  EXPECT_EQ(session["history"][0], entry);
}

TEST_F(ServiceTest, ErrorResponses) {
  expect(client_->Get("/v1/sessions/missing"), 404, "Error");
  expect(client_->Post("/v1/sessions/missing/analyze", R"({"prompt":"x"})", "application/json"), 404, "Error");
  const auto id = new_session();
  const auto bad = expect(client_->Post("/v1/sessions/" + id + "/analyze", "not json", "application/json"),
                          400, "Error");
  EXPECT_EQ(bad["code"], "validation_error");
  expect(client_->Post("/v1/sessions/" + id + "/analyze", R"({"prompt":42})", "application/json"), 400, "Error");
  expect(client_->Post("/v1/sessions/" + id + "/analyze", R"({"prompt":"  "})", "application/json"), 400, "Error");
  expect(client_->Post("/v1/sessions/" + id + "/feedback", R"({"span_id":"x#0","verdict":"Maybe"})",
                       "application/json"),
         400, "Error");
  expect(client_->Post("/v1/sessions/" + id + "/feedback", R"({"span_id":"x#0","verdict":"Confidential"})",
                       "application/json"),
         404, "Error");
  expect(client_->Put("/v1/sessions/" + id + "/terms", R"({"remove":["absent"]})", "application/json"), 404,
         "Error");
  expect(client_->Put("/v1/sessions/" + id + "/terms", R"({"add":"notalist"})", "application/json"), 400,
         "Error");
  expect(client_->Get("/v1/nothing-here"), 404, "Error");
}

TEST(ServiceConfig, RelativePathsAndEnvironment) {
  const auto c = service_config_from_json(
      json{{"port", 0}, {"gazetteer", "g.tsv"}, {"storage", ":memory:"}, {"backend", {{"kind", "stub"}}}},
      "/base");
  EXPECT_EQ(c.gazetteer_path, std::filesystem::path("/base/g.tsv"));
  EXPECT_EQ(c.storage_path, ":memory:");
  EXPECT_EQ(c.port, 0);

  auto copy = c;
  ::setenv("DATASHIELD_LISTEN", "0.0.0.0:9123", 1);
  ::setenv("DATASHIELD_REDACT_BEFORE_SEND", "true", 1);
  apply_env_overrides(copy);
  ::unsetenv("DATASHIELD_LISTEN");
  ::unsetenv("DATASHIELD_REDACT_BEFORE_SEND");
  EXPECT_EQ(copy.listen_address, "0.0.0.0");
  EXPECT_EQ(copy.port, 9123);
  EXPECT_TRUE(copy.gateway.redact_before_send_default);
}

TEST(ServiceConfig, BackendSelection) {
  BackendConfig none;
  none.kind = "none";
  EXPECT_EQ(make_client(none), nullptr);
  BackendConfig stub;
  stub.kind = "stub";
  ASSERT_NE(make_client(stub), nullptr);
  BackendConfig cassette;
  cassette.kind = "cassette";
  cassette.cassette_path = "/nonexistent.cassette";
  EXPECT_THROW(make_client(cassette), ConfigError);
  BackendConfig remote;
  remote.kind = "remote";
  EXPECT_THROW(make_client(remote), ConfigError);
}

TEST(SchemaCheck, ReportsViolations) {
  const auto schema = SchemaCheck::load(test_paths::kSchema.string());
  EXPECT_FALSE(schema.validate(json::object(), "Health").empty());
  EXPECT_FALSE(schema.validate(json{{"status", 3}, {"version", "x"}}, "Health").empty());
  EXPECT_TRUE(schema.validate(json{{"status", "ok"}, {"version", kVersion}}, "Health").empty());
}
