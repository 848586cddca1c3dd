#include "sparta/executor.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <random>

namespace sparta {

int progress_callback(void* self) {
  auto* db = static_cast<Database*>(self);
  return std::chrono::steady_clock::now() > db->deadline_ ? 1 : 0;
}

namespace {

struct Stmt {
  sqlite3_stmt* s = nullptr;
  ~Stmt() { sqlite3_finalize(s); }
};

Value column_value(sqlite3_stmt* s, int i) {
  switch (sqlite3_column_type(s, i)) {
    case SQLITE_INTEGER:
      return static_cast<std::int64_t>(sqlite3_column_int64(s, i));
    case SQLITE_FLOAT:
      return sqlite3_column_double(s, i);
    case SQLITE_NULL:
      return std::monostate{};
    default: {
      auto* p = reinterpret_cast<const char*>(sqlite3_column_text(s, i));
      return std::string(p ? p : "", sqlite3_column_bytes(s, i));
    }
  }
}

}  // namespace

Database::Database(const std::string& path, bool read_only) : path_(path) {
  int flags = read_only ? SQLITE_OPEN_READONLY : (SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
  flags |= SQLITE_OPEN_NOMUTEX;
  if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw Error("cannot open database '" + path + "': " + msg);
  }
  sqlite3_progress_handler(db_, 1000, progress_callback, this);
}

Database::~Database() {
  if (db_) sqlite3_close(db_);
}

Database::Database(Database&& other) noexcept
    : db_(other.db_), path_(std::move(other.path_)), timeout_(other.timeout_) {
  other.db_ = nullptr;
  if (db_) sqlite3_progress_handler(db_, 1000, progress_callback, this);
}

Database& Database::operator=(Database&& other) noexcept {
  if (this != &other) {
    if (db_) sqlite3_close(db_);
    db_ = other.db_;
    path_ = std::move(other.path_);
    timeout_ = other.timeout_;
    other.db_ = nullptr;
    if (db_) sqlite3_progress_handler(db_, 1000, progress_callback, this);
  }
  return *this;
}

ResultSet Database::execute(const std::string& sql, std::size_t row_cap) {
  deadline_ = std::chrono::steady_clock::now() + timeout_;
  Stmt st;
  const char* tail = nullptr;
  if (sqlite3_prepare_v2(db_, sql.c_str(), static_cast<int>(sql.size()), &st.s, &tail) != SQLITE_OK)
    throw ExecError(sqlite3_errmsg(db_));
  if (!st.s) throw ExecError("empty statement");
  if (tail && std::any_of(tail, sql.c_str() + sql.size(), [](char c) { return !std::isspace(static_cast<unsigned char>(c)) && c != ';'; }))
    throw ExecError("multiple statements are not allowed");
  if (!sqlite3_stmt_readonly(st.s)) throw ExecError("statement is not read-only");

  ResultSet r;
  int n = sqlite3_column_count(st.s);
  for (int i = 0; i < n; ++i) r.columns.emplace_back(sqlite3_column_name(st.s, i));
  while (true) {
    int rc = sqlite3_step(st.s);
    if (rc == SQLITE_DONE) break;
    if (rc == SQLITE_INTERRUPT) throw TimeoutError("query exceeded timeout");
    if (rc != SQLITE_ROW) throw ExecError(sqlite3_errmsg(db_));
    if (r.rows.size() == row_cap) {
      r.truncated = true;
      break;
    }
    Row row;
    row.reserve(n);
    for (int i = 0; i < n; ++i) row.push_back(column_value(st.s, i));
    r.rows.push_back(std::move(row));
  }
  return r;
}

bool Database::is_empty(const std::string& sql) { return execute(sql, 1).rows.empty(); }

void Database::exec_script(const std::string& sql) {
  deadline_ = std::chrono::steady_clock::now() + timeout_;
  char* err = nullptr;
  if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw ExecError(msg);
  }
}

std::string ResultFingerprint::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv(std::uint64_t& h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
}

}  // namespace

ResultFingerprint fingerprint(const ResultSet& r) {
  if (r.truncated) throw Error("cannot fingerprint a truncated result");
  std::vector<std::string> lines;
  lines.reserve(r.rows.size());
  for (const auto& row : r.rows) {
    std::string line;
    for (const auto& v : row) {
      // Type tag keeps the integer 1 and the text '1' apart.
      line += is_null(v) ? 'n' : is_numeric(v) ? 'd' : 's';
      line += canonical_text(v);
      line += '\x1f';
    }
    lines.push_back(std::move(line));
  }
  std::sort(lines.begin(), lines.end());
  ResultFingerprint f;
  f.column_arity = static_cast<int>(r.columns.size());
  std::uint64_t h = kFnvOffset;
  fnv(h, std::to_string(f.column_arity) + "\x1e");
  for (const auto& l : lines) fnv(h, l + "\x1e");
  f.digest = h;
  return f;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t s, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::size_t k = std::min(s, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, n - 1);
    std::swap(idx[i], idx[d(rng)]);
  }
  idx.resize(k);
  return idx;
}

std::vector<Row> sample_witnesses(const ResultSet& r, std::size_t s, std::uint64_t seed) {
  if (r.rows.empty()) throw Error("cannot sample witnesses from an empty result");
  std::vector<Row> out;
  for (auto i : sample_indices(r.rows.size(), s, seed)) out.push_back(r.rows[i]);
  return out;
}

}  // namespace sparta
