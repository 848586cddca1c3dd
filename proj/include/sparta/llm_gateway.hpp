#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/value.hpp"

namespace sparta {

class CostLedger;

enum class PromptKind {
  SelectPlain,
  SelectAgg,
  FromClause,
  WhereClause,
  GroupBy,
  Having,
  OrderBy,
  Limit,
  InnerBlockSelection,
  OuterFrom,
  NestedN,
  NestedA,
  NestedJ,
  NestedJA,
  ProvenanceRefine,
  NaturalnessEval,
  Verbalize,
  OneShot,
  OneShotNested,
};

std::string to_string(PromptKind k);
PromptKind prompt_kind_from_string(const std::string& s);
const std::vector<PromptKind>& all_prompt_kinds();
const std::vector<std::string>& required_keys(PromptKind k);

using Slots = std::map<std::string, std::string>;

/// A response that broke the contract; retryable within the call budget.
class ResponseError : public Error {
 public:
  using Error::Error;
};

/// Raised by providers for connection-level failures.
class TransportError : public Error {
 public:
  using Error::Error;
};

class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

struct LlmExchange {
  PromptKind kind = PromptKind::WhereClause;
  std::string rendered_prompt;
  std::string raw_response;
  nlohmann::json parsed;
  int attempt = 0;
  double latency_ms = 0;

  std::string text(const std::string& key) const;
};

/// Named-slot templates, one per kind. `{domain}` is filled from the domain
/// token; every other `{slot}` must be bound at call time.
class PromptSet {
 public:
  explicit PromptSet(std::string domain = "NBA");
  std::string render(PromptKind kind, const Slots& slots) const;
  const std::string& raw(PromptKind kind) const { return templates_.at(kind); }
  std::vector<std::string> slot_names(PromptKind kind) const;
  const std::string& domain() const { return domain_; }

 private:
  std::string domain_;
  std::map<PromptKind, std::string> templates_;
};

/// Parses a bare JSON object or a single fenced block holding one, and
/// checks the object is flat and carries the kind's required keys.
nlohmann::json parse_response(const std::string& raw, PromptKind kind);

class Provider {
 public:
  virtual ~Provider() = default;
  /// `attempt` is 1-based within one gateway call.
  virtual std::string complete(PromptKind kind, const std::string& prompt, const Slots& slots, int attempt) = 0;
};

struct CallOptions {
  int budget = 3;
  bool ideal = true;
  /// Extra contract checks; throw ResponseError to spend another attempt.
  std::function<void(const nlohmann::json&)> validate;
};

/// Renders prompts, calls the provider and enforces the response contract.
/// One gateway per worker; the provider and ledger may be shared.
class Gateway {
 public:
  Gateway(std::shared_ptr<Provider> provider, CostLedger* ledger = nullptr, PromptSet prompts = PromptSet());

  LlmExchange complete(PromptKind kind, const Slots& slots, const CallOptions& opts = {});

  std::int64_t calls() const { return calls_; }
  std::int64_t ideal_calls() const { return ideal_calls_; }
  const PromptSet& prompts() const { return prompts_; }
  void set_ledger(CostLedger* ledger) { ledger_ = ledger; }
  CostLedger* ledger() const { return ledger_; }
  Provider& provider() { return *provider_; }

 private:
  std::shared_ptr<Provider> provider_;
  CostLedger* ledger_;
  PromptSet prompts_;
  std::int64_t calls_ = 0;
  std::int64_t ideal_calls_ = 0;
};

/// Replays queued responses per kind, then falls back to another provider
/// (or fails) once a queue runs dry.
class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(std::shared_ptr<Provider> fallback = nullptr) : fallback_(std::move(fallback)) {}
  void push(PromptKind kind, std::string response);
  std::string complete(PromptKind kind, const std::string& prompt, const Slots& slots, int attempt) override;
  std::size_t pending(PromptKind kind) const;
  const std::vector<std::pair<PromptKind, Slots>>& seen() const { return seen_; }

 private:
  std::shared_ptr<Provider> fallback_;
  std::map<PromptKind, std::deque<std::string>> queues_;
  std::vector<std::pair<PromptKind, Slots>> seen_;
  mutable std::mutex mu_;
};

}  // namespace sparta
