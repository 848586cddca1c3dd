#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "sparta/value.hpp"

struct sqlite3;

namespace sparta {

/// Raised for anything that fails at parse or run time inside the engine.
class ExecError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public ExecError {
 public:
  using ExecError::ExecError;
};

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<Row> rows;
  bool truncated = false;

  bool empty() const { return rows.empty(); }
};

struct ResultFingerprint {
  std::uint64_t digest = 0;
  int column_arity = 0;
  bool operator==(const ResultFingerprint&) const = default;
  auto operator<=>(const ResultFingerprint&) const = default;

  std::string hex() const;
};

/// Owns one SQLite connection. Not thread-safe; give each worker its own.
class Database {
 public:
  static constexpr std::size_t kDefaultRowCap = 10000;

  explicit Database(const std::string& path, bool read_only = true);
  ~Database();
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;
  Database(Database&& other) noexcept;
  Database& operator=(Database&& other) noexcept;

  ResultSet execute(const std::string& sql, std::size_t row_cap = kDefaultRowCap);

  /// True when the query yields no rows. Stops after the first row.
  bool is_empty(const std::string& sql);

  /// Runs a multi-statement script (fixture loading, DDL).
  void exec_script(const std::string& sql);

  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }
  std::chrono::milliseconds timeout() const { return timeout_; }
  const std::string& path() const { return path_; }
  sqlite3* handle() const { return db_; }

 private:
  sqlite3* db_ = nullptr;
  std::string path_;
  std::chrono::milliseconds timeout_{10000};
  std::chrono::steady_clock::time_point deadline_{};

  friend int progress_callback(void*);
};

/// Order-insensitive digest of the row multiset plus the projection arity.
/// Throws Error on truncated input.
ResultFingerprint fingerprint(const ResultSet& r);

/// Up to `s` rows drawn uniformly without replacement, in draw order.
std::vector<Row> sample_witnesses(const ResultSet& r, std::size_t s, std::uint64_t seed);

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t s, std::uint64_t seed);

}  // namespace sparta
