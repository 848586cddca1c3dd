#include "sparta/http_provider.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <regex>

namespace sparta {

HttpConfig HttpConfig::from_json(const nlohmann::json& j) {
  HttpConfig c;
  c.base_url = j.value("base_url", std::string{});
  c.model = j.value("model", std::string{});
  c.api_key = j.value("api_key", std::string{});
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.temperature = j.value("temperature", c.temperature);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.audit_path = j.value("audit_path", std::string{});
  if (const char* env = std::getenv(c.api_key_env.c_str()); env && *env) c.api_key = env;
  return c;
}

HttpProvider::HttpProvider(HttpConfig cfg)
    : cfg_(std::move(cfg)), in_flight_(std::clamp(cfg_.max_in_flight, 1, 1024)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.base_url, m, url)) throw Error("invalid provider base_url '" + cfg_.base_url + "'");
  host_ = m[1].str();
  path_ = m[2].str();
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/chat/completions";
  if (cfg_.model.empty()) throw Error("provider model is not set");
  if (!cfg_.audit_path.empty()) {
    audit_.open(cfg_.audit_path, std::ios::app);
    if (!audit_) throw Error("cannot open audit log '" + cfg_.audit_path + "'");
  }
}

void HttpProvider::audit(const nlohmann::json& record) {
  if (!audit_.is_open()) return;
  std::lock_guard lock(audit_mu_);
  audit_ << record.dump() << '\n';
  audit_.flush();
}

std::string HttpProvider::complete(PromptKind kind, const std::string& prompt, const Slots&, int attempt) {
  nlohmann::json body{{"model", cfg_.model},
                      {"temperature", cfg_.temperature},
                      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  in_flight_.acquire();
  auto t0 = std::chrono::steady_clock::now();
  httplib::Result res;
  {
    httplib::Client cli(host_);
    cli.set_connection_timeout(cfg_.timeout_s);
    cli.set_read_timeout(cfg_.timeout_s);
    cli.set_write_timeout(cfg_.timeout_s);
    res = cli.Post(path_, headers, body.dump(), "application/json");
  }
  in_flight_.release();
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json record{{"kind", to_string(kind)}, {"attempt", attempt}, {"request", body}, {"latency_ms", ms}};
  if (!res) {
    record["error"] = httplib::to_string(res.error());
    audit(record);
    throw TransportError("request to " + host_ + path_ + " failed: " + httplib::to_string(res.error()));
  }
  record["status"] = res->status;
  record["response"] = res->body;
  audit(record);
  if (res->status != 200)
    throw TransportError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
    throw TransportError("provider response has no choices");
  const auto& msg = j["choices"][0].value("message", nlohmann::json::object());
  if (!msg.contains("content") || !msg["content"].is_string())
    throw TransportError("provider response has no message content");
  return msg["content"].get<std::string>();
}

}  // namespace sparta
