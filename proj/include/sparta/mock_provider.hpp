#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/llm_gateway.hpp"

namespace sparta {

enum class FailureAction {
  Malformed,      // unparseable JSON
  ProseWrapped,   // JSON buried in prose without a fence
  FixedResponse,  // `response` verbatim
  OverSelective,  // adds a predicate no row satisfies
  InvalidSql,     // well-formed JSON carrying broken SQL
};

std::string to_string(FailureAction a);

/// When a rule fires. Calls are eligible if they match `kind` (or belong to
/// `stream`: "where" covers where_clause and one_shot, "nested" covers the
/// nested_* kinds and one_shot_nested) and, unless `on_repair` is set, carry
/// no repair feedback. `attempt` restricts to one gateway attempt (0 = any).
/// A rule fires on its first `first` eligible calls, on every `period`-th
/// one, and otherwise with probability `rate`.
struct FailureRule {
  FailureAction action = FailureAction::Malformed;
  std::optional<PromptKind> kind;
  std::string stream;
  int first = 0;
  int period = 0;
  double rate = 0;
  bool on_repair = false;
  int attempt = 1;
  std::string response;
};

struct FailurePlan {
  std::vector<FailureRule> rules;

  static FailurePlan from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Offline stand-in for the model. Clauses are filled from the columns,
/// ranges and sample rows passed in the `database` slot (and from the
/// `execution_result` slot when present), so the same seed and call sequence
/// always yields the same text.
class MockProvider : public Provider {
 public:
  explicit MockProvider(std::uint64_t seed, FailurePlan plan = {});
  ~MockProvider() override;

  std::string complete(PromptKind kind, const std::string& prompt, const Slots& slots, int attempt) override;

  /// Number of responses altered by the failure plan so far.
  std::int64_t injected() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace sparta
