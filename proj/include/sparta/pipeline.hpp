#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/catalog.hpp"
#include "sparta/clause_gen.hpp"
#include "sparta/mock_provider.hpp"
#include "sparta/nest_gen.hpp"

namespace sparta {

/// A problem the operator can fix: bad config or a missing upstream
/// artifact.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  GenerationConfig gen = GenerationConfig::defaults();
  std::string provider = "mock";  // "mock" or "http"
  nlohmann::json http = nlohmann::json::object();
  FailurePlan failure_plan;
  std::uint64_t seed = 42;
  int workers = 1;
  std::string out_dir = "sparta_out";
  std::string source;  // .sql script or SQLite file
  std::set<std::string> grounding;
  std::string templates;
  std::vector<std::string> key_hints = kDefaultKeyHints;
  std::size_t instances = 1100;
  /// The first strategy of each list feeds the benchmark; the others only
  /// produce ledgers for comparison.
  std::vector<std::string> non_nested_strategies{"execution_guided"};
  std::vector<std::string> nested_strategies{"post_order_prov"};
  std::string domain = "NBA";

  /// Relative paths resolve against `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Hamilton apportionment of `n` seats to `weights` (ties go to the lower
/// index).
std::vector<std::size_t> largest_remainder(const std::vector<double>& weights, std::size_t n);

struct PlannedSlot {
  int index = 0;
  std::string shape;  // shape_mix label
  std::uint64_t seed = 0;
  bool group_by = false;
  std::vector<ClauseKind> plan;         // non-nested slots
  std::optional<NestedRequest> nested;  // nested slots
};

/// Fixed quotas for every shape label and for GROUP BY presence, spread
/// over slots by a seeded shuffle.
std::vector<PlannedSlot> plan_benchmark(const GenerationConfig& cfg, std::size_t n, std::uint64_t seed);

std::shared_ptr<Provider> make_provider(const RunConfig& cfg);

/// Artifact layout under out_dir.
struct RunPaths {
  std::string root;
  explicit RunPaths(std::string out_dir) : root(std::move(out_dir)) {}
  std::string db() const { return root + "/reference.db"; }
  std::string catalog() const { return root + "/catalog.json"; }
  std::string passages() const { return root + "/passages.jsonl"; }
  std::string manifest(const std::string& strategy) const { return root + "/gen/" + strategy + ".manifest.jsonl"; }
  std::string ledger(const std::string& strategy) const { return root + "/gen/" + strategy + ".ledger.json"; }
  std::string queries(const std::string& strategy) const { return root + "/gen/" + strategy + ".queries.jsonl"; }
  std::string generated() const { return root + "/generated.jsonl"; }
  std::string instances() const { return root + "/instances.jsonl"; }
  std::string verdicts() const { return root + "/verdicts.jsonl"; }
  std::string benchmark() const { return root + "/benchmark.jsonl"; }
  std::string report_dir() const { return root + "/report"; }
};

struct BuildSummary {
  std::size_t tables = 0;
  std::size_t join_edges = 0;
  PassageStats passages;
};

/// Copies or builds the reference database, designates grounding tables
/// and writes the catalog and passage corpus.
BuildSummary build_db(const RunConfig& cfg);

struct StrategyRun {
  std::string strategy;
  LedgerSummary ledger;
  std::size_t emitted = 0;
  std::size_t failed = 0;
};

/// Runs every configured strategy over the same slot plan. `provider`
/// overrides make_provider(); each strategy gets a fresh one otherwise.
std::vector<StrategyRun> generate(const RunConfig& cfg, std::shared_ptr<Provider> provider = nullptr);

/// Questions and gold answers for generated.jsonl, written as pending
/// instances.
std::size_t verbalize_stage(const RunConfig& cfg, std::shared_ptr<Provider> provider = nullptr);

/// Interactive review; new verdicts are appended to verdicts.jsonl.
std::size_t audit_stage(const RunConfig& cfg, std::istream& in, std::ostream& out);

struct FinalizeSummary {
  std::size_t exported = 0;
  std::size_t rejected = 0;
  std::size_t pending = 0;
};

/// Applies verdicts and writes benchmark.jsonl. With `approve_pending`,
/// instances without a verdict count as approved.
FinalizeSummary finalize(const RunConfig& cfg, bool approve_pending = false);

/// Cost table over the strategy ledgers, distribution over the benchmark
/// (or the pending instances before finalize) and, when `naturalness`,
/// grader scores for every instance. Writes report/ and returns it as JSON.
nlohmann::json report(const RunConfig& cfg, bool naturalness = true, std::shared_ptr<Provider> provider = nullptr);

}  // namespace sparta
