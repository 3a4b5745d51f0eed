#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "datashield/llm.hpp"
#include "datashield/session.hpp"

namespace datashield {

inline constexpr const char* kVersion = "0.1.0";

// Backend selection shared by the service and the C API.
struct BackendConfig {
  std::string kind = "none";  // none | stub | cassette | remote
  std::filesystem::path cassette_path;
  bool cassette_strict = true;
  bool cassette_record = false;  // record through the remote backend
  llm::RemoteConfig remote;
  std::map<std::string, std::string> stub_responses;  // task -> canned reply
};

// Throws ConfigError on unknown kinds or unreadable cassettes. Returns null
// for kind "none".
std::shared_ptr<llm::Client> make_client(const BackendConfig& config,
                                         std::shared_ptr<llm::AuditLog> audit = nullptr);
BackendConfig backend_config_from_json(const nlohmann::json& j);

struct ServiceConfig {
  std::string listen_address = "127.0.0.1";
  int port = 8470;
  std::string storage_path = "datashield.db";
  std::filesystem::path gazetteer_path;
  std::filesystem::path rules_path;
  std::filesystem::path terms_path;
  std::filesystem::path tool_bank_path;
  std::filesystem::path policy_cache_dir = "policy-cache";
  std::map<std::string, std::filesystem::path> policy_fixtures;
  bool offline = false;
  std::filesystem::path conduct_path;
  std::filesystem::path internal_summary_path;  // precomputed summary JSON
  std::filesystem::path audit_log_path;
  std::filesystem::path static_dir;
  std::filesystem::path schema_path;
  BackendConfig backend;
  GatewayConfig gateway;
};

// Relative paths resolve against `base_dir`.
ServiceConfig service_config_from_json(const nlohmann::json& j,
                                       const std::filesystem::path& base_dir = {});
// DATASHIELD_LISTEN (host[:port]), DATASHIELD_STORAGE, DATASHIELD_GAZETTEER,
// DATASHIELD_TOOL_BANK, DATASHIELD_BACKEND, DATASHIELD_CASSETTE,
// DATASHIELD_REDACT_BEFORE_SEND.
void apply_env_overrides(ServiceConfig& config);

std::unique_ptr<Gateway> build_gateway(const ServiceConfig& config);

class HttpService {
 public:
  HttpService(std::shared_ptr<Gateway> gateway, ServiceConfig config);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Binds to the configured address; port 0 picks a free port. Returns the bound port.
  int bind();
  // Blocks until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace datashield
