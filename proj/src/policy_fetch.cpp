#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "datashield/error.hpp"
#include "datashield/net.hpp"
#include "datashield/policy.hpp"

namespace datashield {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FetchError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool looks_like_html(std::string_view content_type, std::string_view body) {
  if (content_type.find("html") != std::string_view::npos) return true;
  const auto head = lower_ascii(body.substr(0, 512));
  return head.find("<html") != std::string::npos || head.find("<!doctype html") != std::string::npos;
}

std::string decode_entity(std::string_view name) {
  if (name == "amp") return "&";
  if (name == "lt") return "<";
  if (name == "gt") return ">";
  if (name == "quot") return "\"";
  if (name == "apos" || name == "#39") return "'";
  if (name == "nbsp") return " ";
  if (name.size() > 1 && name[0] == '#') {
    try {
      const bool hex = name[1] == 'x' || name[1] == 'X';
      const auto digits = std::string(name.substr(hex ? 2 : 1));
      const unsigned long cp = std::stoul(digits, nullptr, hex ? 16 : 10);
      if (cp > 0 && cp <= 0x10FFFF && (cp < 0xD800 || cp > 0xDFFF)) {
        return text::encode_utf8(static_cast<char32_t>(cp));
      }
    } catch (const std::exception&) {
    }
  }
  return "&" + std::string(name) + ";";
}

}  // namespace

std::string strip_markup(std::string_view html) {
  static const std::vector<std::string> kBlockTags{
      "p", "br", "div", "li", "ul", "ol", "h1", "h2", "h3", "h4", "h5", "h6",
      "section", "article", "tr", "table", "header", "footer", "title", "dd", "dt"};
  const std::string lower = lower_ascii(html);
  std::string out;
  out.reserve(html.size());
  std::size_t i = 0;
  while (i < html.size()) {
    if (html[i] == '<') {
      if (lower.compare(i, 4, "<!--") == 0) {
        const auto end = lower.find("-->", i + 4);
        i = end == std::string::npos ? html.size() : end + 3;
        continue;
      }
      bool skipped = false;
      for (const char* raw : {"script", "style", "noscript"}) {
        const std::string tag = std::string("<") + raw;
        if (lower.compare(i, tag.size(), tag) == 0) {
          const auto end = lower.find(std::string("</") + raw, i);
          const auto close = end == std::string::npos ? std::string::npos : lower.find('>', end);
          i = close == std::string::npos ? html.size() : close + 1;
          skipped = true;
          break;
        }
      }
      if (skipped) continue;
      const auto close = html.find('>', i);
      if (close == std::string_view::npos) break;
      std::size_t n = i + 1;
      if (n < html.size() && html[n] == '/') ++n;
      std::size_t e = n;
      while (e < close && std::isalnum(static_cast<unsigned char>(html[e]))) ++e;
      const auto name = lower.substr(n, e - n);
      const bool block = std::find(kBlockTags.begin(), kBlockTags.end(), name) != kBlockTags.end();
      out += block ? "\n\n" : " ";
      i = close + 1;
      continue;
    }
    if (html[i] == '&') {
      const auto semi = html.find(';', i);
      if (semi != std::string_view::npos && semi - i <= 10) {
        out += decode_entity(html.substr(i + 1, semi - i - 1));
        i = semi + 1;
        continue;
      }
    }
    out.push_back(html[i]);
    ++i;
  }

  // Normalize each paragraph, keep blank-line separation.
  std::string result;
  std::string paragraph;
  const auto flush = [&] {
    const auto norm = text::normalize_space(paragraph);
    if (!norm.empty()) {
      if (!result.empty()) result += "\n\n";
      result += norm;
    }
    paragraph.clear();
  };
  std::size_t pos = 0;
  while (pos <= out.size()) {
    auto next = out.find("\n\n", pos);
    if (next == std::string::npos) next = out.size();
    paragraph = out.substr(pos, next - pos);
    flush();
    pos = next + 2;
  }
  return result;
}

HttpTransport default_http_transport(std::chrono::milliseconds timeout) {
  return [timeout](const std::string& url) -> HttpResponse {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw FetchError("malformed URL " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const auto base = url.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);
    net::note_outbound(base);
    httplib::Client cli(base);
    cli.set_follow_location(true);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    cli.set_connection_timeout(secs);
    cli.set_read_timeout(secs);
    auto res = cli.Get(path);
    if (!res) throw FetchError("GET " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->get_header_value("Content-Type"), res->body};
  };
}

PolicyFetcher::PolicyFetcher(FetcherConfig config, HttpTransport transport,
                             std::function<std::int64_t()> clock)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : default_http_transport()),
      clock_(clock ? std::move(clock) : [] {
        return std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
      }) {
  if (config_.cache_dir.empty()) throw ConfigError("policy cache directory not set");
  std::error_code ec;
  std::filesystem::create_directories(config_.cache_dir / "objects", ec);
  if (ec) throw IoError("cannot create cache directory " + config_.cache_dir.string());
}

std::map<std::string, PolicyFetcher::IndexEntry> PolicyFetcher::read_index() const {
  std::map<std::string, IndexEntry> index;
  std::ifstream in(config_.cache_dir / "index.json");
  if (!in) return index;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [id, e] : j.items()) {
      index[id] = {e.at("hash").get<std::string>(), e.at("fetched_at").get<std::int64_t>(),
                   e.value("source_url", std::string{})};
    }
  } catch (const nlohmann::json::exception&) {
    return {};  // a corrupt index is treated as empty and rewritten
  }
  return index;
}

void PolicyFetcher::write_index(const std::map<std::string, IndexEntry>& index) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, e] : index) {
    j[id] = {{"hash", e.hash}, {"fetched_at", e.fetched_at}, {"source_url", e.source_url}};
  }
  const auto tmp = config_.cache_dir / "index.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write cache index");
    out << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, config_.cache_dir / "index.json");
}

std::optional<PolicyDocument> PolicyFetcher::load_cached(const std::string& tool_id) {
  const auto index = read_index();
  const auto it = index.find(tool_id);
  if (it == index.end()) return std::nullopt;
  const auto path = config_.cache_dir / "objects" / (it->second.hash + ".txt");
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  PolicyDocument doc;
  doc.tool_id = tool_id;
  doc.raw_text = ss.str();
  doc.fetched_at = it->second.fetched_at;
  doc.source_url = it->second.source_url;
  doc.content_hash = sha256_hex(doc.raw_text);
  if (doc.content_hash != it->second.hash) return std::nullopt;
  return doc;
}

void PolicyFetcher::store(const PolicyDocument& doc) {
  const auto path = config_.cache_dir / "objects" / (doc.content_hash + ".txt");
  if (!std::filesystem::exists(path)) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache object " + path.string());
    out << doc.raw_text;
  }
  auto index = read_index();
  index[doc.tool_id] = {doc.content_hash, doc.fetched_at, doc.source_url};
  write_index(index);
}

std::string PolicyFetcher::retrieve(const std::string& url) {
  std::string body;
  std::string content_type;
  if (auto it = config_.fixtures.find(url); it != config_.fixtures.end()) {
    body = read_file(it->second);
    const auto ext = lower_ascii(it->second.extension().string());
    content_type = (ext == ".html" || ext == ".htm") ? "text/html" : "text/plain";
  } else if (url.starts_with("file://")) {
    const std::filesystem::path path(url.substr(7));
    body = read_file(path);
    const auto ext = lower_ascii(path.extension().string());
    content_type = (ext == ".html" || ext == ".htm") ? "text/html" : "text/plain";
  } else if (url.starts_with("http://") || url.starts_with("https://")) {
    if (config_.offline) throw FetchError("offline mode: no fixture for " + url);
    ++network_calls_;
    const auto res = transport_(url);
    if (res.status != 200) {
      throw FetchError("GET " + url + " returned HTTP " + std::to_string(res.status));
    }
    content_type = lower_ascii(res.content_type);
    if (!content_type.empty() && !content_type.starts_with("text/")) {
      throw ContentError("unsupported content type '" + res.content_type + "' at " + url);
    }
    body = res.body;
  } else {
    throw FetchError("unsupported URL scheme: " + url);
  }

  if (body.find('\0') != std::string::npos) throw ContentError("binary content at " + url);
  try {
    text::decode_utf8(body);
  } catch (const ArgumentError&) {
    throw ContentError("policy at " + url + " is not UTF-8 text");
  }
  auto plain = looks_like_html(content_type, body) ? strip_markup(body) : body;
  if (text::trim(plain).empty()) throw ContentError("empty policy at " + url);
  return plain;
}

PolicyDocument PolicyFetcher::fetch(std::string_view tool_id, const ToolBank& bank) {
  const auto* tool = bank.find(tool_id);
  if (tool == nullptr) throw NotFoundError("tool '" + std::string(tool_id) + "' not in tool bank");
  if (tool->policy_url.empty()) {
    throw FetchError("tool '" + tool->id + "' has no policy URL");
  }

  std::lock_guard lock(mutex_);
  const auto now = clock_();
  auto cached = load_cached(tool->id);
  if (cached && cached->source_url == tool->policy_url &&
      now - cached->fetched_at < config_.ttl.count()) {
    return *cached;
  }

  std::string body;
  try {
    body = retrieve(tool->policy_url);
  } catch (const FetchError&) {
    if (cached) {
      cached->stale = true;
      return *cached;
    }
    throw;
  }

  PolicyDocument doc;
  doc.tool_id = tool->id;
  doc.raw_text = std::move(body);
  doc.fetched_at = now;
  doc.source_url = tool->policy_url;
  doc.content_hash = sha256_hex(doc.raw_text);
  store(doc);
  return doc;
}

}  // namespace datashield
