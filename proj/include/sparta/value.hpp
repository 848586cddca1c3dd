#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace sparta {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A single SQL value as stored by the embedded engine.
using Value = std::variant<std::monostate, std::int64_t, double, std::string>;
using Row = std::vector<Value>;

inline bool is_null(const Value& v) { return std::holds_alternative<std::monostate>(v); }
bool is_numeric(const Value& v);
double as_double(const Value& v);

/// Shortest text that parses back to the same value. Reals always carry a
/// decimal point or exponent so they stay reals when re-read.
std::string to_text(const Value& v);

/// SQL literal syntax ('quoted' strings, NULL).
std::string to_sql_literal(const Value& v);

/// Canonical rendering used for fingerprints and answers: reals at six
/// significant digits, integers in decimal, text verbatim, NULL as "NULL".
std::string canonical_text(const Value& v);

/// Rounds a real to six significant digits; other values pass through.
Value canonicalize(const Value& v);

nlohmann::json to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

/// Lexicographic three-way comparison with NULL < numbers < text.
int compare_values(const Value& a, const Value& b);

}  // namespace sparta
