#pragma once

#include <map>
#include <string>

#include "sparta/query_model.hpp"

namespace sparta {

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Parses the single-table, subquery-nesting dialect that render_sql emits
/// (and that generation prompts ask for). Anything outside it is rejected.
/// The result is normalized, so parse_sql(render_sql(g)) == g.
QueryGraph parse_sql(const std::string& sql);

/// Removes a leading clause keyword ("WHERE", "GROUP BY", ...) if present,
/// case-insensitively, along with surrounding whitespace and a trailing ';'.
std::string clause_body(const std::string& text, const std::string& keyword);

/// Joins clause texts keyed "select", "from", "where", "group", "having",
/// "order" and "limit" (keyword optional) into one statement in canonical
/// order. A missing select renders as `SELECT *`.
std::string assemble_clauses(const std::map<std::string, std::string>& clauses);

}  // namespace sparta
