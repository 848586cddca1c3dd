#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/clause_gen.hpp"
#include "sparta/query_model.hpp"

namespace sparta {

enum class NestedStrategy { OneShotK, PostOrder, PostOrderProv };
std::string to_string(NestedStrategy s);
NestedStrategy nested_strategy_from_string(const std::string& s);

struct NestedRequest {
  ShapeSpec shape;
  std::vector<NestingType> edge_types;  // type of the edge into block v at index v-1
  std::vector<ClauseKind> root_plan;    // optional clauses and SELECT of the outermost block
};

/// One independent draw per edge from the config's nesting weights.
std::vector<NestingType> sample_edge_types(const GenerationConfig& cfg, const ShapeSpec& shape, std::uint64_t seed);

/// Root clause plan: the non-nested plan without FROM and WHERE.
std::vector<ClauseKind> root_clause_plan(const GenerationConfig& cfg, std::uint64_t seed,
                                         std::optional<bool> group_by = std::nullopt);

NestedRequest make_request(const GenerationConfig& cfg, const ShapeSpec& shape, std::uint64_t seed,
                           std::optional<bool> group_by = std::nullopt);

/// Picks one of `candidates` not in `consumed` through the gateway. A lone
/// remaining candidate is returned without a call. Naming a consumed or
/// unknown index spends a retry.
std::size_t select_inner_block(GenContext& ctx, const std::vector<QueryGraph>& candidates,
                               const std::set<std::size_t>& consumed, NestingType type, bool ideal);

class WrapError : public Error {
 public:
  enum class Reason { Mismatch, Empty, Invalid };
  WrapError(Reason r, const std::string& what, QueryGraph g = {}) : Error(what), reason(r), graph(std::move(g)) {}
  Reason reason;
  QueryGraph graph;  // the rejected wrap, when it parsed
};

/// Adds a type-`type` nested predicate over `inner` to the root of `outer`
/// through the nested prompt. The reply must leave `outer`'s predicates
/// and `inner` untouched (apart from the correlation a J/JA edge adds) and
/// classify as `type`. Throws WrapError; Reason::Empty carries the graph.
QueryGraph add_nested_predicate(GenContext& ctx, const QueryGraph& outer, const QueryGraph& inner, NestingType type,
                                bool ideal);

/// Chooses the outer table for `inner` and embeds it.
QueryGraph wrap_with_outer(GenContext& ctx, const QueryGraph& inner, NestingType type, bool ideal = true);

/// Draws nested queries of the requested shape until one is new and
/// non-empty. Each instance attempt is classified once; discards and
/// repairs inside it are only counted as calls.
Generated generate_nested(GenContext& ctx, NestedStrategy strategy, const NestedRequest& request, std::uint64_t seed,
                          int slot = 0);

}  // namespace sparta
