#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/benchmark.hpp"

namespace sparta {

class Gateway;

enum class Outcome { Success, Empty, Duplicate, ExecErr };
std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

struct LedgerSummary {
  std::int64_t success_q = 0;
  std::int64_t exec_err = 0;
  std::int64_t empty_q = 0;
  std::int64_t duplicate_q = 0;
  std::int64_t ideal_calls = 0;
  std::int64_t total_calls = 0;
  std::int64_t retries = 0;
  std::int64_t wall_time_us = 0;
  bool operator==(const LedgerSummary&) const = default;

  std::int64_t classified() const { return success_q + exec_err + empty_q + duplicate_q; }
  double wall_time_s() const { return static_cast<double>(wall_time_us) / 1e6; }
};

nlohmann::json to_json(const LedgerSummary& s);
LedgerSummary summary_from_json(const nlohmann::json& j);

/// Generation cost counters. All updates are atomic so workers can share one.
class CostLedger {
 public:
  void record_call(bool ideal);
  void classify(Outcome o);
  void tick(std::chrono::microseconds elapsed);
  LedgerSummary summary() const;

 private:
  std::atomic<std::int64_t> success_{0}, exec_err_{0}, empty_{0}, duplicate_{0};
  std::atomic<std::int64_t> ideal_{0}, total_{0}, retries_{0}, wall_us_{0};
};

/// One classified generation attempt, as written to the run manifest.
struct AttemptRecord {
  std::string strategy;
  std::uint64_t seed = 0;
  int slot = 0;
  int attempt = 0;
  std::string sql;
  Outcome classification = Outcome::Success;
  std::int64_t calls_used = 0;
  std::int64_t ideal_calls_used = 0;
  std::int64_t wall_us = 0;
  std::string note;
  nlohmann::json edges = nlohmann::json::array();
};

nlohmann::json to_json(const AttemptRecord& r);
AttemptRecord attempt_from_json(const nlohmann::json& j);

/// Appends attempt records as JSONL; safe to share between workers.
class ManifestWriter {
 public:
  explicit ManifestWriter(const std::string& path);
  void write(const AttemptRecord& r);

 private:
  std::ofstream out_;
  std::mutex mu_;
};

std::vector<AttemptRecord> read_manifest(const std::string& path);

/// Rebuilds the ledger counters from manifest records alone.
LedgerSummary replay_manifest(const std::vector<AttemptRecord>& records);

/// Aligned text table, one row per labelled summary.
std::string render_summary_table(const std::vector<std::pair<std::string, LedgerSummary>>& rows);

struct NaturalnessScore {
  int relevance = 0;
  int specificity_clarity = 0;
  int overall = 0;
  std::string reason;
  bool natural = false;
};

nlohmann::json to_json(const NaturalnessScore& s);

/// Asks the grader prompt for three 1-5 scores. Out-of-range or non-integer
/// scores spend a retry.
NaturalnessScore naturalness_eval(const std::string& sql, const std::string& schema, Gateway& gateway,
                                  int budget = 3);

struct DistributionReport {
  std::size_t n = 0;
  std::map<std::string, double> shapes;
  std::map<std::string, double> operators;
  std::map<std::string, double> nesting_types;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Empirical shape, operator and nesting-type presence over a set of
/// instances, as fractions. Throws on empty input.
DistributionReport config_report(const std::vector<BenchmarkInstance>& instances);

}  // namespace sparta
