#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/catalog.hpp"
#include "sparta/executor.hpp"
#include "sparta/llm_gateway.hpp"
#include "sparta/metrics.hpp"
#include "sparta/query_model.hpp"

namespace sparta {

enum class ClauseKind { From, Where, GroupBy, Having, SelectPlain, SelectAgg, OrderBy, Limit };

std::string to_string(ClauseKind k);
ClauseKind clause_kind_from_string(const std::string& s);
PromptKind prompt_kind(ClauseKind k);
/// Key of the clause in a generated-clauses map ("from", "where", ...).
std::string clause_key(ClauseKind k);

struct GenerationConfig {
  // Clause presence. HAVING is drawn only under GROUP BY and LIMIT only
  // under ORDER BY, so those two are conditional: p_having / p_group_by.
  double p_group_by = 0.153;
  double p_having = 0.034;
  double p_order_by = 0.077;
  double p_limit = 0.045;
  double p_aggregation = 0.5;

  /// Shape label ("non-nested", "(1,1)", ...) to fraction of instances.
  std::map<std::string, double> shape_mix;
  /// Relative weights for per-edge nesting types.
  std::map<NestingType, double> nesting_weights;

  std::size_t row_cap = Database::kDefaultRowCap;
  std::chrono::milliseconds timeout{10000};
  int call_budget = 3;       // gateway attempts per call
  int clause_retries = 3;    // re-asks of one clause after an empty result
  int refine_budget = 3;
  int discard_cap = 5;       // per edge
  int one_shot_tries = 20;   // one-shot-k drafts per attempt
  int max_attempts = 200;    // classified attempts per requested query
  std::size_t witnesses = 3;
  std::size_t sample_rows = 20;
  double leaf_pool_factor = 2.0;

  static GenerationConfig defaults();
  /// Throws Error on probabilities outside [0,1], conditional probabilities
  /// above their parent, a shape mix not summing to 1 or unknown labels.
  void validate() const;
  static GenerationConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Clause steps for one non-nested query: FROM, WHERE, the optional
/// clauses drawn from the config, then SELECT (plain or aggregate).
/// `group_by` overrides the GROUP BY draw; HAVING stays conditional on it.
std::vector<ClauseKind> plan_clause_sequence(const GenerationConfig& cfg, std::uint64_t seed,
                                             std::optional<bool> group_by = std::nullopt);

/// Result fingerprints (non-nested) and SQL texts (nested) already emitted.
class SeenSet {
 public:
  bool insert(const ResultFingerprint& fp);
  bool insert(const std::string& sql);
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::set<ResultFingerprint> fps_;
  std::set<std::string> sqls_;
};

/// What one worker needs to generate. The ledger, seen set and manifest may
/// be shared; the database and gateway may not.
struct GenContext {
  const Catalog& catalog;
  Database& db;
  Gateway& gateway;
  GenerationConfig cfg;
  SeenSet* seen = nullptr;
  ManifestWriter* manifest = nullptr;
  std::string schema;  // schema slot text, filled on construction

  GenContext(const Catalog& c, Database& d, Gateway& g, GenerationConfig config, SeenSet* s = nullptr,
             ManifestWriter* m = nullptr);
  CostLedger* ledger() const { return gateway.ledger(); }
};

enum class NonNestedStrategy { OneShot, Clause, ExecutionGuided };
std::string to_string(NonNestedStrategy s);
NonNestedStrategy non_nested_strategy_from_string(const std::string& s);

/// Raised when no attempt succeeds within the attempt cap.
class GenerationFailed : public Error {
 public:
  using Error::Error;
};

struct Generated {
  QueryGraph graph;
  std::string sql;
  ResultSet result;
  int attempts = 0;
};

/// Draws queries until one executes, returns rows and is new. Every attempt
/// is classified in the ledger and written to the manifest.
Generated generate_non_nested(GenContext& ctx, NonNestedStrategy strategy, const std::vector<ClauseKind>& plan,
                              std::uint64_t seed, int slot = 0);

// Shared by the nested generator.

struct ClauseRun {
  bool ok = false;
  Outcome failure = Outcome::ExecErr;
  std::string note;
  QueryGraph graph;
};

/// Asks for each clause of `steps` in turn, growing `clauses`. With
/// `feedback`, the partial query is executed after each clause, the rows
/// are shown to the next prompt and an empty result re-asks the clause.
/// Only the first ask of each clause counts as ideal when `ideal` is set.
ClauseRun run_clauses(GenContext& ctx, std::map<std::string, std::string>& clauses,
                      const std::vector<ClauseKind>& steps, bool feedback, const std::string& purpose, bool ideal,
                      std::uint64_t seed);

/// {"columns", "rows"} JSON of up to `n` sampled rows.
std::string rows_slot(const ResultSet& r, std::size_t n, std::uint64_t seed);

}  // namespace sparta
