#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/executor.hpp"
#include "sparta/query_model.hpp"

namespace sparta {

class Gateway;

/// A peel unit of the root block: WHERE predicate `index`, or the HAVING
/// condition.
struct PredicateRef {
  int index = -1;
  bool having = false;
  bool operator==(const PredicateRef&) const = default;
};

std::string describe(const QueryGraph& g, const PredicateRef& ref);

/// True when the query returns no rows, or when it aggregates without
/// grouping over a FROM/WHERE body that matches nothing.
bool yields_no_rows(Database& db, const QueryGraph& g);

struct PeelResult {
  QueryGraph survivor;
  std::vector<PredicateRef> peeled;  // refs into the original, in peel order
};

/// Drops root predicates from the last inserted (HAVING first, then WHERE
/// from the end) until the query returns rows. Nested predicates go as a
/// unit.
PeelResult peel_until_nonempty(const QueryGraph& g, Database& db);

struct ProvenanceReport {
  std::vector<PredicateRef> peeled;
  std::string survivor_sql;
  std::vector<std::string> witness_columns;
  std::vector<Row> witnesses;
  std::vector<std::int64_t> witness_rowids;
  std::optional<PredicateRef> blocking;
  std::string blocking_text;
  std::vector<Value> witness_values;
  std::vector<std::vector<PredicateRef>> culprits;  // per witness, insertion order

  nlohmann::json to_json(const QueryGraph& original) const;
};

class NoUnanimousCulprit : public Error {
 public:
  NoUnanimousCulprit(const std::string& what, ProvenanceReport r) : Error(what), report(std::move(r)) {}
  ProvenanceReport report;
};

/// Point evaluation: does base row `rowid` of the root table satisfy `ref`?
/// HAVING is evaluated on the row's group within `context`'s WHERE.
bool satisfies(Database& db, const QueryGraph& g, const PredicateRef& ref, std::int64_t rowid,
               const QueryGraph& context);

/// Samples witnesses from the survivor and re-tests the peeled predicates
/// on each. The blocking predicate is the first in insertion order that
/// every witness fails; without one, NoUnanimousCulprit carries the
/// per-witness culprit sets.
ProvenanceReport blame(const QueryGraph& original, const PeelResult& peel, Database& db, std::size_t witnesses = 3,
                       std::uint64_t seed = 0);

class RefineError : public Error {
 public:
  using Error::Error;
};

struct RefineResult {
  QueryGraph graph;
  int rounds = 0;
  std::vector<ProvenanceReport> reports;
  std::vector<std::string> rejections;
};

/// Explains why `after` is not a local edit of `before` at `blamed`, or
/// returns an empty string.
std::string locality_violation(const QueryGraph& before, const QueryGraph& after, const PredicateRef& blamed);

struct RefineOptions {
  int budget = 3;
  int call_budget = 3;
  bool ideal = false;
  std::size_t witnesses = 3;
  std::uint64_t seed = 0;
  std::size_t sample_rows = 20;
};

/// Asks the gateway to rewrite only the blocking predicate, re-executing
/// and re-diagnosing until the query returns rows or `budget` refinement
/// rounds are spent. Edits outside the blamed predicate are rejected.
RefineResult refine(const QueryGraph& g, const ProvenanceReport& report, Gateway& gateway, Database& db,
                    const RefineOptions& opts = {});

/// Peel, blame and refine in one go.
RefineResult repair(const QueryGraph& g, Gateway& gateway, Database& db, const RefineOptions& opts = {});

}  // namespace sparta
