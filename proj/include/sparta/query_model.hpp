#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/value.hpp"

namespace sparta {

struct Catalog;

enum class AggFn { None, Count, Sum, Avg, Min, Max };
enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge, Like, NotLike };
enum class Connector { None, And, Or };
enum class PredKind { Comparison, Membership, Existence, AggregateCompare, CorrelationJoin };
enum class NestingType { N, A, J, JA };
enum class HopModality { CrossModal, UniModal };

std::string to_string(AggFn f);
std::string to_string(CmpOp op);
std::string to_string(Connector c);
std::string to_string(PredKind k);
std::string to_string(NestingType t);
std::string to_string(HopModality m);
NestingType nesting_type_from_string(const std::string& s);
CmpOp negate(CmpOp op);

/// A projected column or an aggregate over one column ("*" for COUNT(*)).
struct SelectItem {
  AggFn fn = AggFn::None;
  std::string column;
  bool operator==(const SelectItem&) const = default;
};

/// One conjunct or disjunct of a WHERE list, or the HAVING condition.
///
/// `column` is the local column for comparisons, membership and aggregate
/// comparisons, and the inner column of a correlation join. `child` is the
/// block index of the embedded subquery for nested kinds.
struct Predicate {
  PredKind kind = PredKind::Comparison;
  Connector connector = Connector::None;
  AggFn agg = AggFn::None;  // HAVING only
  std::string column;
  CmpOp op = CmpOp::Eq;
  Value literal;
  bool negated = false;  // NOT IN, NOT EXISTS
  int child = -1;
  std::string outer_column;
  bool operator==(const Predicate&) const = default;

  bool nested() const {
    return kind == PredKind::Membership || kind == PredKind::Existence ||
           kind == PredKind::AggregateCompare;
  }
};

struct OrderBy {
  SelectItem item;
  bool desc = false;
  bool operator==(const OrderBy&) const = default;
};

/// A single-table SELECT block. An empty select list renders as `SELECT *`,
/// which is how partially built blocks are executed.
struct QueryBlock {
  std::vector<SelectItem> select_items;
  std::string from_table;
  std::vector<Predicate> predicates;
  std::optional<std::string> group_by;
  std::optional<Predicate> having;
  std::optional<OrderBy> order_by;
  std::optional<std::int64_t> limit;
  bool operator==(const QueryBlock&) const = default;

  bool aggregates() const;
  bool has_correlation() const;
};

struct Edge {
  int parent = 0;
  int child = 0;
  NestingType type = NestingType::N;
  bool operator==(const Edge&) const = default;
};

/// Tree of blocks. Blocks are kept in canonical pre-order (root is 0 and
/// children follow in predicate order), which makes structural equality
/// meaningful and the rendered text stable.
struct QueryGraph {
  std::vector<QueryBlock> blocks;
  int root = 0;
  std::vector<Edge> edges;
  bool operator==(const QueryGraph&) const = default;

  std::size_t hop_count() const { return edges.size(); }
  std::vector<int> children_of(int block) const;
  int parent_of(int block) const;
};

struct ShapeSpec {
  int depth = 0;
  int breadth = 0;
  int edges = 0;
  std::vector<int> parents;  // parent index of blocks 1..n-1 in pre-order
  bool operator==(const ShapeSpec&) const = default;

  std::string label() const;
};

struct OperatorProfile {
  bool where = false;
  bool group_by = false;
  bool having = false;
  bool order_by = false;
  bool limit = false;
  bool aggregation = false;
  bool operator==(const OperatorProfile&) const = default;
};

/// Throws Error naming the offending block when an invariant is broken.
void validate(const QueryGraph& g);

/// Renumbers blocks in pre-order, drops unreachable ones and recomputes the
/// typed edge list from the nested predicates.
QueryGraph normalize(QueryGraph g);

std::string render_sql(const QueryGraph& g);
std::string render_predicate(const QueryGraph& g, int block, const Predicate& p);
std::string render_where(const QueryGraph& g, int block);
std::string render_from(const QueryGraph& g, int block);

/// Name other blocks use to reference `block`: its alias when the table
/// recurs below it, otherwise the table name.
std::string block_qualifier(const QueryGraph& g, int block);

/// Block with a single-block graph around it.
QueryGraph single_block(QueryBlock b);

/// Copies the subtree rooted at `block` into a standalone graph.
QueryGraph subgraph(const QueryGraph& g, int block);

/// Appends `p` to the root of `outer`, embedding `inner` as its subquery.
/// `p.child` is ignored and set to the new inner root.
QueryGraph attach(QueryGraph outer, Predicate p, const QueryGraph& inner);

ShapeSpec shape_of(const QueryGraph& g);
ShapeSpec shape_preset(int depth, int breadth);
NestingType classify_nesting(const QueryBlock& parent, const QueryBlock& child);
std::vector<HopModality> classify_hops(const QueryGraph& g, const Catalog& c);
OperatorProfile operator_profile(const QueryGraph& g);

nlohmann::json to_json(const QueryGraph& g);
QueryGraph graph_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ShapeSpec& s);
ShapeSpec shape_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OperatorProfile& p);

}  // namespace sparta
