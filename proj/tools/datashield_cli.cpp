// Command-line front end. Talks to the library only through datashield.h.
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "datashield/datashield.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitUsage = 2;
constexpr int kExitHigh = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Owns a string returned by the library.
struct DsString {
  char* p = nullptr;
  ~DsString() { ds_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

void check(ds_status st) {
  if (st != DS_OK) {
    throw UsageError(std::string(ds_status_name(st)) + ": " + ds_last_error());
  }
}

std::string read_all(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string read_input(const std::string& name) {
  if (name == "-") return read_all(std::cin);
  std::ifstream in(name, std::ios::binary);
  if (!in) throw UsageError("cannot read input '" + name + "'");
  return read_all(in);
}

struct Common {
  std::string config_path;
  std::string gazetteer;
  std::string terms;
  std::string rules;
  std::string backend;
  std::string cassette;
  std::string format = "text";
  std::string output;
  bool offline = false;

  json file_config = json::object();
  fs::path config_dir;

  void load_config() {
    if (config_path.empty()) {
      if (const char* env = std::getenv("DATASHIELD_CONFIG"); env && *env) config_path = env;
    }
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot read config '" + config_path + "'");
    file_config = json::parse(in, nullptr, false);
    if (file_config.is_discarded() || !file_config.is_object()) {
      throw UsageError("config '" + config_path + "' is not a JSON object");
    }
    config_dir = fs::absolute(config_path).parent_path();
  }

  // Flag value, else config value resolved against the config directory.
  std::string path_or_config(const std::string& flag, const char* key) const {
    if (!flag.empty()) return flag;
    if (!file_config.contains(key)) return {};
    fs::path p = file_config.at(key).get<std::string>();
    return (p.is_relative() ? config_dir / p : p).string();
  }

  json backend_json() const {
    json b = file_config.contains("backend") ? file_config.at("backend") : json{{"kind", "none"}};
    if (b.is_string()) b = json{{"kind", b.get<std::string>()}};
    if (b.contains("cassette") && b.at("cassette").is_string()) {
      fs::path p = b.at("cassette").get<std::string>();
      if (p.is_relative()) b["cassette"] = (config_dir / p).string();
    }
    if (!backend.empty()) b["kind"] = backend;
    if (!cassette.empty()) b["cassette"] = cassette;
    const auto kind = b.value("kind", std::string("none"));
    if (!cassette.empty() && kind != "cassette") {
      throw UsageError("--cassette requires --backend cassette");
    }
    if (kind == "cassette" && b.value("cassette", std::string{}).empty()) {
      throw UsageError("--backend cassette requires --cassette PATH");
    }
    return b;
  }

  json engine_json() const {
    json j = json::object();
    if (auto p = path_or_config(gazetteer, "gazetteer"); !p.empty()) j["gazetteer"] = p;
    if (auto p = path_or_config(terms, "terms"); !p.empty()) j["terms"] = p;
    if (auto p = path_or_config(rules, "rules"); !p.empty()) j["rules"] = p;
    for (const char* key : {"fuzzy_threshold", "indirect", "novelty_lexicon", "block_on_high"}) {
      if (file_config.contains(key)) j[key] = file_config.at(key);
    }
    j["backend"] = backend_json();
    return j;
  }
};

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw UsageError("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

struct Engine {
  ds_engine* e = nullptr;
  explicit Engine(const json& config) { check(ds_engine_create(config.dump().c_str(), &e)); }
  ~Engine() { ds_engine_destroy(e); }
};

std::string span_line(const json& s) {
  std::ostringstream out;
  if (s.value("whole_prompt", false)) {
    out << "  (whole prompt)";
  } else {
    out << "  [" << s.at("start").get<std::size_t>() << "," << s.at("end").get<std::size_t>() << ")";
  }
  out << " " << s.at("category").get<std::string>() << " " << s.at("sensitivity").get<std::string>()
      << "/" << s.at("color").get<std::string>() << " via " << s.at("technique").get<std::string>();
  if (!s.value("whole_prompt", false)) out << " \"" << s.at("surface").get<std::string>() << "\"";
  const auto rationale = s.value("rationale", std::string{});
  if (!rationale.empty()) out << " - " << rationale;
  return out.str();
}

int cmd_scan(const Common& common, const std::vector<std::string>& inputs_in) {
  auto inputs = inputs_in;
  if (inputs.empty()) inputs.push_back("-");
  Engine engine(common.engine_json());
  Output out(common.output);
  bool any_high = false;
  for (const auto& name : inputs) {
    const auto text = read_input(name);
    DsString report;
    size_t high = 0;
    const auto id = name == "-" ? std::string("stdin") : fs::path(name).filename().string();
    check(ds_engine_scan(engine.e, id.c_str(), text.c_str(), &report.p, &high));
    any_high = any_high || high > 0;
    const auto j = json::parse(report.str());
    if (common.format == "json-lines") {
      out.stream() << json{{"input", name}, {"report", j}}.dump() << "\n";
      continue;
    }
    out.stream() << name << ": " << j.at("spans").size() << " span(s), " << high << " High\n";
    for (const auto& s : j.at("spans")) out.stream() << span_line(s) << "\n";
    if (j.value("llm_degraded", false)) {
      out.stream() << "  note: indirect detection degraded (" << j.value("degraded_reason", "")
                   << ")\n";
    }
  }
  return any_high ? kExitHigh : kExitClean;
}

int cmd_redact(const Common& common, const std::string& input, const std::string& spans_path) {
  const auto text = read_input(input);
  DsString result;
  if (!spans_path.empty()) {
    check(ds_redact_spans(text.c_str(), read_input(spans_path).c_str(), &result.p));
  } else {
    Engine engine(common.engine_json());
    check(ds_engine_redact(engine.e, "input", text.c_str(), &result.p));
  }
  Output out(common.output);
  const auto j = json::parse(result.str());
  if (common.format == "json-lines") {
    out.stream() << j.dump() << "\n";
  } else {
    out.stream() << j.at("text").get<std::string>();
  }
  return kExitClean;
}

int cmd_eval(const Common& common, const std::string& corpus, const std::string& corpus_format,
             const std::string& mentions, const std::string& tool_name) {
  const auto corpus_path = common.path_or_config(corpus, "corpus");
  if (corpus_path.empty()) throw UsageError("eval needs --corpus");
  if (corpus_format == "bc2gm" && mentions.empty()) throw UsageError("bc2gm needs --mentions");
  Engine engine(common.engine_json());
  DsString report, table;
  check(ds_engine_evaluate(engine.e, corpus_path.c_str(), corpus_format.c_str(),
                           mentions.empty() ? nullptr : mentions.c_str(), tool_name.c_str(),
                           &report.p, &table.p));
  std::cout << table.str();
  if (common.format == "json-lines") std::cout << report.str() << "\n";
  if (!common.output.empty()) Output(common.output).stream() << report.str() << "\n";
  return kExitClean;
}

struct PolicyArgs {
  std::string tool_bank;
  std::vector<std::string> tools;
  bool all = false;
  std::string conduct;
  std::string internal_summary;
  std::string questions;
  std::string cache_dir;
  std::vector<std::string> fixtures;  // url=path
};

int cmd_policy(const Common& common, const PolicyArgs& args) {
  json j = json::object();
  if (auto p = common.path_or_config(args.tool_bank, "tool_bank"); !p.empty()) j["tool_bank"] = p;
  if (args.all) j["all"] = true;
  else j["tools"] = args.tools;
  if (auto p = common.path_or_config(args.conduct, "conduct"); !p.empty()) j["conduct"] = p;
  if (auto p = common.path_or_config(args.internal_summary, "internal_summary"); !p.empty()) {
    j["internal_summary"] = p;
  }
  if (!args.questions.empty()) j["questions"] = args.questions;
  if (auto p = common.path_or_config(args.cache_dir, "policy_cache_dir"); !p.empty()) {
    j["cache_dir"] = p;
  }
  j["offline"] = common.offline || common.file_config.value("offline", false);
  json fixtures = json::object();
  if (common.file_config.contains("policy_fixtures")) {
    for (const auto& [url, path] : common.file_config.at("policy_fixtures").items()) {
      fs::path p = path.get<std::string>();
      fixtures[url] = (p.is_relative() ? common.config_dir / p : p).string();
    }
  }
  for (const auto& f : args.fixtures) {
    const auto eq = f.find('=');
    if (eq == std::string::npos) throw UsageError("--fixture expects URL=PATH");
    fixtures[f.substr(0, eq)] = f.substr(eq + 1);
  }
  j["fixtures"] = fixtures;
  j["backend"] = common.backend_json();

  DsString result, text;
  check(ds_policy_run(j.dump().c_str(), &result.p, &text.p));
  if (common.format == "json-lines") {
    std::cout << result.str() << "\n";
  } else {
    std::cout << text.str();
  }
  if (!common.output.empty()) Output(common.output).stream() << result.str() << "\n";
  return kExitClean;
}

int cmd_serve(const Common& common, const std::string& listen, const std::string& storage) {
  json config = common.file_config;
  if (!listen.empty()) config["listen"] = listen;
  if (!storage.empty()) config["storage"] = storage;
  if (!common.gazetteer.empty()) config["gazetteer"] = fs::absolute(common.gazetteer).string();
  if (!common.terms.empty()) config["terms"] = fs::absolute(common.terms).string();
  if (!common.rules.empty()) config["rules"] = fs::absolute(common.rules).string();
  if (common.offline) config["offline"] = true;
  if (!common.backend.empty() || !common.cassette.empty() || config.contains("backend")) {
    auto b = common.backend_json();
    if (b.contains("cassette") && b.at("cassette").is_string()) {
      b["cassette"] = fs::absolute(b.at("cassette").get<std::string>()).string();
    }
    config["backend"] = b;
  }

  // Signals are handled on a dedicated thread via sigwait.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ds_service* service = nullptr;
  const auto base = common.config_dir.empty() ? fs::current_path() : common.config_dir;
  check(ds_service_create(config.dump().c_str(), base.string().c_str(), &service));
  int port = 0;
  if (ds_service_bind(service, &port) != DS_OK) {
    const std::string msg = ds_last_error();
    ds_service_destroy(service);
    throw UsageError(msg);
  }
  std::cerr << "datashield " << ds_version() << " listening on port " << port << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    ds_service_stop(service);
  });
  const auto st = ds_service_run(service);
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  ds_service_destroy(service);
  check(st);
  return kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"datashield: confidential-data detection and policy analysis for LLM prompts"};
  app.set_version_flag("--version", ds_version());
  app.require_subcommand(1, 1);

  // Hermetic runs: refuse any outbound connection.
  if (const char* deny = std::getenv("DATASHIELD_NO_NETWORK"); deny && *deny && std::string(deny) != "0") {
    ds_network_guard(1);
  }

  Common common;
  const auto add_common = [&](CLI::App* sub, bool detection, bool backend) {
    sub->add_option("--config", common.config_path, "JSON config file (default: $DATASHIELD_CONFIG)");
    if (detection) {
      sub->add_option("--gazetteer", common.gazetteer, "gazetteer TSV")->check(CLI::ExistingFile);
      sub->add_option("--terms", common.terms, "user term list")->check(CLI::ExistingFile);
      sub->add_option("--rules", common.rules, "rule configuration")->check(CLI::ExistingFile);
    }
    if (backend) {
      sub->add_option("--backend", common.backend, "model backend")
          ->check(CLI::IsMember({"none", "stub", "cassette", "remote"}));
      sub->add_option("--cassette", common.cassette, "cassette file for --backend cassette");
    }
    sub->add_option("--format", common.format, "output format")
        ->check(CLI::IsMember({"text", "json-lines"}));
    sub->add_option("--output", common.output, "write the report to this path");
  };

  auto* scan = app.add_subcommand("scan", "scan prompts for confidential data");
  std::vector<std::string> scan_inputs;
  add_common(scan, true, true);
  scan->add_option("inputs", scan_inputs, "input files ('-' or none for stdin)");

  auto* redact = app.add_subcommand("redact", "replace confidential spans with placeholders");
  std::string redact_input = "-";
  std::string redact_spans;
  add_common(redact, true, true);
  redact->add_option("input", redact_input, "input file ('-' for stdin)");
  redact->add_option("--spans", redact_spans, "JSON span list to use instead of rescanning")
      ->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "entity-level metrics on an annotated corpus");
  std::string corpus, corpus_format = "native", mentions, tool_name = "datashield";
  add_common(eval, true, true);
  eval->add_option("--corpus", corpus, "annotated corpus");
  eval->add_option("--corpus-format", corpus_format, "corpus format")
      ->check(CLI::IsMember({"native", "bc2gm"}));
  eval->add_option("--mentions", mentions, "BC2GM mention file")->check(CLI::ExistingFile);
  eval->add_option("--tool-name", tool_name, "row label in the metrics table");

  auto* policy = app.add_subcommand("policy", "nutrition labels and compliance for tools");
  PolicyArgs pargs;
  add_common(policy, false, true);
  policy->add_option("--tool-bank", pargs.tool_bank, "tool bank JSON");
  auto* tool_opt = policy->add_option("--tool", pargs.tools, "tool id (repeatable)");
  auto* all_opt = policy->add_flag("--all", pargs.all, "every tool in the bank");
  tool_opt->excludes(all_opt);
  all_opt->excludes(tool_opt);
  policy->add_option("--conduct", pargs.conduct, "code of conduct text");
  policy->add_option("--internal-summary", pargs.internal_summary, "precomputed internal summary JSON");
  policy->add_option("--questions", pargs.questions, "question<TAB>answer file for label QA");
  policy->add_option("--cache-dir", pargs.cache_dir, "policy cache directory");
  policy->add_option("--fixture", pargs.fixtures, "URL=PATH served instead of the network");
  policy->add_flag("--offline", common.offline, "never touch the network");

  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  std::string listen, storage;
  add_common(serve, true, true);
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--storage", storage, "session database path");
  serve->add_flag("--offline", common.offline, "never fetch policies from the network");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    common.load_config();
    if (*scan) return cmd_scan(common, scan_inputs);
    if (*redact) return cmd_redact(common, redact_input, redact_spans);
    if (*eval) return cmd_eval(common, corpus, corpus_format, mentions, tool_name);
    if (*policy) {
      if (!pargs.all && pargs.tools.empty()) throw UsageError("policy needs --tool ID or --all");
      return cmd_policy(common, pargs);
    }
    if (*serve) return cmd_serve(common, listen, storage);
  } catch (const UsageError& e) {
    std::cerr << "datashield: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "datashield: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
