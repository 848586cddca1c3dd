#pragma once

#include <fstream>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>

#include <json.hpp>

#include "sparta/llm_gateway.hpp"

namespace sparta {

struct HttpConfig {
  std::string base_url;  // e.g. https://api.example.com/v1
  std::string model;
  std::string api_key;
  std::string api_key_env = "SPARTA_API_KEY";
  double temperature = 0.0;
  int max_in_flight = 4;
  int timeout_s = 120;
  std::string audit_path;  // empty disables the audit log

  /// Reads the provider block of a run config. The API key comes from the
  /// environment variable named by `api_key_env` when set there.
  static HttpConfig from_json(const nlohmann::json& j);
};

/// Chat-completion provider: POSTs {model, messages, temperature} to
/// `<base_url>/chat/completions` and returns the first choice's content.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpConfig cfg);
  std::string complete(PromptKind kind, const std::string& prompt, const Slots& slots, int attempt) override;

 private:
  void audit(const nlohmann::json& record);

  HttpConfig cfg_;
  std::string host_;
  std::string path_;
  std::counting_semaphore<1024> in_flight_;
  std::mutex audit_mu_;
  std::ofstream audit_;
};

}  // namespace sparta
