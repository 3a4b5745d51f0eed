// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failing criteria.
#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "datashield/detection.hpp"
#include "datashield/llm.hpp"
#include "datashield/metrics.hpp"
#include "datashield/net.hpp"
#include "datashield/policy.hpp"
#include "datashield/serialization.hpp"
#include "datashield/session.hpp"
#include "support/fixture_gateway.hpp"
#include "support/redaction_runs.hpp"
#include "support/subprocess.hpp"
#include "support/temp_dir.hpp"
#include "test_paths.hpp"

using namespace datashield;
using nlohmann::json;
using testing_support::kPaperPrompt;
using testing_support::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Gazetteer fixture_gazetteer() { return Gazetteer::load(test_paths::fixture("gazetteer.tsv")); }

FetcherConfig offline_fetcher(const std::filesystem::path& cache) {
  FetcherConfig fc;
  fc.cache_dir = cache;
  fc.offline = true;
  fc.fixtures["https://seqalign.example/privacy"] = test_paths::fixture("policies/seqalign.html");
  fc.fixtures["https://mail.example/privacy"] = test_paths::fixture("policies/two_sentence.txt");
  return fc;
}

std::shared_ptr<llm::Client> cassette_client(const char* name) {
  return std::make_shared<llm::Client>(std::shared_ptr<llm::Backend>(
      llm::CassetteBackend::replay(llm::Cassette::load(test_paths::fixture(name)))));
}

// --- criteria ---------------------------------------------------------------

Outcome paper_golden() {
  const auto gaz = fixture_gazetteer();
  const auto t0 = Clock::now();
  const auto r = scan_full({"paper", kPaperPrompt, 0}, gaz, {}, nullptr, DetectionConfig{});
  const double secs = seconds_since(t0);
  std::vector<const DetectionSpan*> direct;
  for (const auto& s : r.spans) {
    if (!s.whole_prompt) direct.push_back(&s);
  }
  const bool shape =
      direct.size() == 2 && direct[0]->category == Category::kGeneName && direct[0]->start == 49 &&
      direct[0]->end == 78 && direct[0]->surface == "E3 SUMO-gene ligase NSE2-like" &&
      direct[0]->sensitivity == Sensitivity::kHigh &&
      direct[1]->category == Category::kProteinSequence && direct[1]->start == 120 &&
      direct[1]->end == 169 && direct[1]->length() == 49;
  return {shape && secs < 1.0, std::to_string(direct.size()) + " direct spans, gene [49,78) High, "
                                   "sequence [120,169), " + fmt("%.4f s", secs)};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  const auto rule = oracle::run_rule_cases(101, 10000);
  const auto gaz = oracle::run_gazetteer_cases(202, 10000);
  const auto fuzzy = oracle::run_fuzzy_cases(303, 10000);
  const double secs = seconds_since(t0);
  const auto mism = rule.mismatches + gaz.mismatches + fuzzy.mismatches;
  std::string detail = "rule " + std::to_string(rule.cases) + "/" + std::to_string(rule.mismatches) +
                       ", gazetteer " + std::to_string(gaz.cases) + "/" + std::to_string(gaz.mismatches) +
                       ", fuzzy " + std::to_string(fuzzy.cases) + "/" + std::to_string(fuzzy.mismatches) +
                       " (cases/mismatches), " + fmt("%.2f s", secs);
  for (const auto* r : {&rule, &gaz, &fuzzy}) {
    if (!r->first_failure.empty()) detail += "; " + r->first_failure;
  }
  return {mism == 0 && rule.cases >= 10000 && gaz.cases >= 10000 && fuzzy.cases >= 10000 && secs < 60.0,
          detail};
}

Outcome redaction_round_trip() {
  const auto gaz = fixture_gazetteer();
  const auto r = oracle::run_redaction_cases(404, 1000, gaz);
  return {r.mismatches == 0 && r.cases == 1000,
          std::to_string(r.cases) + " prompts, " + std::to_string(r.with_findings) +
              " with entities, " + std::to_string(r.mismatches) + " failures" +
              (r.first_failure.empty() ? "" : "; " + r.first_failure)};
}

Outcome metrics_harness() {
  const auto corpus = load_corpus(test_paths::fixture("corpus_20.tsv"));
  const auto gaz = fixture_gazetteer();
  DetectorSetup setup;
  setup.gazetteer = &gaz;
  const auto r = evaluate_detection(corpus, setup);
  // Hand count over the 20 sentences: TP 18, FP 4, FN 5.
  const bool counts = r.counts == ConfusionCounts{18, 4, 5};
  const bool values = r.precision == 18.0 / 22.0 && r.recall == 18.0 / 23.0 &&
                      std::abs(r.f1 - 0.8) < 1e-12 && r.accuracy == r.recall;
  const auto t = metrics_from_counts("triple", {3, 1, 1});
  const bool triple = t.precision == 0.75 && t.recall == 0.75 && t.f1 == 0.75 && t.accuracy == t.recall;
  return {counts && values && triple,
          "TP/FP/FN " + std::to_string(r.counts.tp) + "/" + std::to_string(r.counts.fp) + "/" +
              std::to_string(r.counts.fn) + ", P " + fmt("%.4f", r.precision) + " R " +
              fmt("%.4f", r.recall) + " F1 " + fmt("%.4f", r.f1) + " acc " + fmt("%.4f", r.accuracy) +
              ", triple " + fmt("%.2f", t.precision) + "/" + fmt("%.2f", t.recall) + "/" + fmt("%.2f", t.f1)};
}

Outcome policy_fixture() {
  const auto raw = read_file(test_paths::fixture("policies/two_sentence.txt"));
  PolicyDocument doc;
  doc.tool_id = "examplemail";
  doc.raw_text = raw;
  const auto graph = extract_graph(doc, nullptr);
  const std::string s1 =
      "We collect your email address to provide customer support and share it with analytics partners.";
  const std::set<PolicyTuple> annotated{
      {"we", PolicyAction::kCollect, "email address", "customer support", s1},
      {"we", PolicyAction::kShare, "email address", "analytics partners", s1}};
  const std::set<PolicyTuple> got(graph.tuples.begin(), graph.tuples.end());
  std::size_t grounded_n = 0;
  for (const auto& t : graph.tuples) grounded_n += grounded(t, raw);
  const auto label = make_label(graph, doc, nullptr);
  const bool buckets = label.texts(label.data_types) == std::vector<std::string>{"email address"} &&
                       label.texts(label.purposes) == std::vector<std::string>{"customer support"} &&
                       label.texts(label.third_parties) == std::vector<std::string>{"analytics partners"} &&
                       label.retention_text() == "not stated";
  return {graph.tuples.size() == 2 && got == annotated && grounded_n == graph.tuples.size() && buckets,
          std::to_string(graph.tuples.size()) + " tuples, " + std::to_string(grounded_n) +
              " grounded, label " + (buckets ? "buckets as annotated" : "differs") + ", retention \"" +
              label.retention_text() + "\""};
}

Outcome compliance_rule_pass() {
  TempDir tmp;
  PolicyFetcher fetcher(offline_fetcher(tmp.path()));
  const auto bank = ToolBank::load(test_paths::fixture("tool_bank.json"));
  std::vector<NutritionLabel> labels;
  for (const char* id : {"seqalign", "examplemail"}) {
    const auto doc = fetcher.fetch(id, bank);
    labels.push_back(make_label(extract_graph(doc, nullptr), doc, nullptr));
  }
  const auto report = check_compliance(labels, testing_support::fixture_internal_summary(), nullptr);
  std::size_t violations = 0, unclear = 0;
  bool cites = false;
  for (const auto& v : report.verdicts) {
    if (v.verdict == ComplianceVerdict::kViolation) {
      ++violations;
      cites = v.tool_id == "seqalign" &&
              v.internal_clause == "Gene sequences must not be shared with external parties." &&
              v.label_item == "uploaded sequences";
    } else if (v.verdict == ComplianceVerdict::kUnclear && v.explanation == kAdjudicationUnavailable) {
      ++unclear;
    }
  }
  return {violations == 1 && cites && unclear + 1 == report.verdicts.size(),
          std::to_string(report.verdicts.size()) + " pairs: " + std::to_string(violations) +
              " Violation (seqalign, clause and 'uploaded sequences' cited), " + std::to_string(unclear) +
              " Unclear without a model"};
}

Outcome qa_harness() {
  TempDir tmp;
  PolicyFetcher fetcher(offline_fetcher(tmp.path()));
  const auto doc = fetcher.fetch("seqalign", ToolBank::load(test_paths::fixture("tool_bank.json")));
  const auto label = make_label(extract_graph(doc, nullptr), doc, nullptr);
  const auto questions = load_questions(test_paths::fixture("qa_questions.tsv"));
  auto client = cassette_client("cassettes/qa.cassette");
  const auto report = evaluate_summaries(doc, label, questions, client.get());
  // Hand count: retention, recipients and requests agree; 3 of 5.
  return {questions.size() == 5 && report.agreement_rate == 0.6 && !report.degraded,
          "agreement " + fmt("%.4f", report.agreement_rate) + " over " +
              std::to_string(report.verdicts.size()) + " questions (hand count 0.6)"};
}

// Reports that must not change between runs.
std::string machine_reports() {
  std::string out;
  const auto gaz = fixture_gazetteer();
  out += detection_report(scan_full({"paper", kPaperPrompt, 0}, gaz, {}, nullptr, DetectionConfig{})).dump() + "\n";
  DetectorSetup setup;
  setup.gazetteer = &gaz;
  out += json(evaluate_detection(load_corpus(test_paths::fixture("corpus_20.tsv")), setup)).dump() + "\n";

  TempDir tmp;
  PolicyFetcher fetcher(offline_fetcher(tmp.path()));
  const auto bank = ToolBank::load(test_paths::fixture("tool_bank.json"));
  auto stub = std::make_shared<llm::Client>(std::make_shared<llm::StubBackend>());
  std::vector<NutritionLabel> labels;
  for (const char* id : {"seqalign", "examplemail"}) {
    const auto doc = fetcher.fetch(id, bank);
    const auto graph = extract_graph(doc, stub.get());
    labels.push_back(make_label(graph, doc, stub.get()));
    out += json(graph).dump() + "\n" + json(labels.back()).dump() + "\n";
  }
  out += json(check_compliance(labels, testing_support::fixture_internal_summary(), stub.get())).dump() + "\n";
  const auto doc = fetcher.fetch("seqalign", bank);
  auto qa = cassette_client("cassettes/qa.cassette");
  out += json(evaluate_summaries(doc, make_label(extract_graph(doc, nullptr), doc, nullptr),
                                 load_questions(test_paths::fixture("qa_questions.tsv")), qa.get()))
             .dump() + "\n";
  return out;
}

std::string cli_reports() {
  using testing_support::run;
  const auto cli = test_paths::kCli.string();
  const auto f = [](const char* n) { return test_paths::fixture(n).string(); };
  TempDir tmp;
  std::string out;
  out += run({cli, "scan", "--format", "json-lines", "--gazetteer", f("gazetteer.tsv"), f("paper_prompt.txt"),
              f("corpus_20.tsv")}).out;
  out += run({cli, "eval", "--format", "json-lines", "--gazetteer", f("gazetteer.tsv"), "--corpus",
              f("corpus_20.tsv")}).out;
  out += run({cli, "policy", "--format", "json-lines", "--tool-bank", f("tool_bank.json"), "--all", "--offline",
              "--cache-dir", (tmp / "cache").string(), "--internal-summary",
              f("cassettes/internal_summary.json"), "--questions", f("qa_questions.tsv"), "--backend",
              "cassette", "--cassette", f("cassettes/qa.cassette"), "--fixture",
              "https://seqalign.example/privacy=" + f("policies/seqalign.html"), "--fixture",
              "https://mail.example/privacy=" + f("policies/two_sentence.txt")}).out;
  return out;
}

Outcome determinism() {
  const auto a = machine_reports();
  const auto b = machine_reports();
  const auto c = cli_reports();
  const auto d = cli_reports();
  const bool armed = net::guard_armed();
  const auto attempts = net::outbound_attempts();
  return {a == b && c == d && !c.empty() && armed && attempts == 0,
          "library reports " + std::to_string(a.size()) + " bytes " + (a == b ? "identical" : "DIFFER") +
              ", CLI json-lines " + std::to_string(c.size()) + " bytes " + (c == d ? "identical" : "DIFFER") +
              ", guard " + (armed ? "armed" : "off") + ", " + std::to_string(attempts) +
              " outbound attempts"};
}

Outcome service_persistence() {
  using testing_support::Background;
  TempDir tmp;
  const auto f = [](const char* n) { return test_paths::fixture(n).string(); };
  const json config{{"gazetteer", f("gazetteer.tsv")},
                    {"tool_bank", f("tool_bank.json")},
                    {"internal_summary", f("cassettes/internal_summary.json")},
                    {"policy_cache_dir", (tmp / "cache").string()},
                    {"policy_fixtures",
                     {{"https://seqalign.example/privacy", f("policies/seqalign.html")},
                      {"https://mail.example/privacy", f("policies/two_sentence.txt")}}},
                    {"offline", true}};
  std::ofstream(tmp / "config.json") << config.dump();
  const std::vector<std::string> argv{test_paths::kCli.string(), "serve", "--config",
                                      (tmp / "config.json").string(), "--listen", "127.0.0.1:0",
                                      "--storage", (tmp / "sessions.db").string()};
  const auto port_of = [](Background& server) {
    const auto line = server.wait_for("listening on port", std::chrono::seconds(10));
    return line.empty() ? -1 : std::stoi(line.substr(line.rfind(' ') + 1));
  };

  json before;
  std::string id;
  {
    Background server(argv);
    const int port = port_of(server);
    if (port < 0) return {false, "first server did not start"};
    httplib::Client c("127.0.0.1", port);
    auto created = c.Post("/v1/sessions");
    if (!created || created->status != 201) return {false, "session not created"};
    id = json::parse(created->body)["session_id"];
    auto analyzed = c.Post("/v1/sessions/" + id + "/analyze", json{{"prompt", kPaperPrompt}}.dump(),
                           "application/json");
    if (!analyzed || analyzed->status != 200) return {false, "analyze failed"};
    const auto span = json::parse(analyzed->body)["detection"]["spans"][0]["id"].get<std::string>();
    c.Post("/v1/sessions/" + id + "/feedback", json{{"span_id", span}, {"verdict", "NotConfidential"}}.dump(),
           "application/json");
    c.Put("/v1/sessions/" + id + "/terms", json{{"add", {"Zeta compound"}}}.dump(), "application/json");
    auto got = c.Get("/v1/sessions/" + id);
    if (!got || got->status != 200) return {false, "get_session failed before kill"};
    before = json::parse(got->body);
    server.kill(SIGKILL);
  }
  Background server(argv);
  const int port = port_of(server);
  if (port < 0) return {false, "restarted server did not start"};
  httplib::Client c("127.0.0.1", port);
  auto got = c.Get("/v1/sessions/" + id);
  if (!got || got->status != 200) return {false, "get_session failed after restart"};
  const auto after = json::parse(got->body);
  server.kill(SIGTERM);
  return {after == before && before["history"].size() == 1 && before["feedback"].size() == 1,
          "history " + std::to_string(before["history"].size()) + ", feedback " +
              std::to_string(before["feedback"].size()) + ", terms " +
              std::to_string(before["terms"]["terms"].size()) + "; after SIGKILL and restart " +
              (after == before ? "deep-equal" : "DIFFERENT")};
}

Outcome no_egress() {
  TempDir tmp;
  auto stub = std::make_shared<llm::StubBackend>(std::map<std::string, std::string>{{"forward", "ok"}});
  auto audit = std::make_shared<llm::AuditLog>(tmp / "audit.jsonl");
  auto client = std::make_shared<llm::Client>(stub, llm::TemplateRegistry::builtin(), "local", audit);
  GatewayConfig gc;
  gc.redact_before_send_default = true;
  gc.forward_default = true;
  Gateway gw(gc, testing_support::fixture_resources(tmp / "cache", client),
             std::make_shared<SessionStore>(":memory:"));
  const auto id = gw.create_session();
  const auto entry = gw.analyze(id, kPaperPrompt);

  // Everything that leaves the gateway: outbound flow edges and forwarded requests.
  std::string records;
  for (const auto* e : entry.flow.outbound()) records += json(*e).dump() + "\n";
  for (const auto& r : audit->records()) {
    if (r.task == "forward") records += r.prompt + "\n";
  }
  std::size_t forwarded = 0;
  for (const auto& line : [&] {
         std::vector<json> v;
         std::istringstream in(read_file(tmp / "audit.jsonl"));
         for (std::string l; std::getline(in, l);) v.push_back(json::parse(l));
         return v;
       }()) {
    if (line["task"] == "forward") {
      records += line["prompt"].get<std::string>() + "\n";
      ++forwarded;
    }
  }
  std::size_t surfaces = 0, hits = 0;
  for (const auto& s : entry.detection.spans) {
    if (s.whole_prompt || s.surface.empty()) continue;
    ++surfaces;
    if (records.find(s.surface) != std::string::npos) ++hits;
  }
  return {surfaces == 2 && hits == 0 && forwarded == 1 && !entry.flow.outbound().empty(),
          std::to_string(surfaces) + " span surfaces, " + std::to_string(entry.flow.outbound().size()) +
              " outbound edges, " + std::to_string(forwarded) + " forwarded request, " +
              std::to_string(hits) + " surface hits"};
}

}  // namespace

int main() {
  net::Guard guard;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"paper-prompt golden test", paper_golden},
      {"oracle equivalence", oracle_equivalence},
      {"redaction round-trip", redaction_round_trip},
      {"metrics harness", metrics_harness},
      {"policy pipeline fixture", policy_fixture},
      {"compliance rule pass", compliance_rule_pass},
      {"QA harness", qa_harness},
      {"service persistence", service_persistence},
      {"no-egress guarantee", no_egress},
      // Last, so the outbound count covers every criterion above.
      {"determinism and hermeticity", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.ok;
    std::cout << (o.ok ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " primary criteria pass" << std::endl;
  return failed;
}
