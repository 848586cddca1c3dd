#include "sparta/query_model.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "sparta/catalog.hpp"

namespace sparta {

std::string to_string(AggFn f) {
  switch (f) {
    case AggFn::Count: return "COUNT";
    case AggFn::Sum: return "SUM";
    case AggFn::Avg: return "AVG";
    case AggFn::Min: return "MIN";
    case AggFn::Max: return "MAX";
    default: return "";
  }
}

std::string to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "<>";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::Like: return "LIKE";
    default: return "NOT LIKE";
  }
}

std::string to_string(Connector c) {
  switch (c) {
    case Connector::And: return "AND";
    case Connector::Or: return "OR";
    default: return "";
  }
}

std::string to_string(PredKind k) {
  switch (k) {
    case PredKind::Comparison: return "comparison";
    case PredKind::Membership: return "membership";
    case PredKind::Existence: return "existence";
    case PredKind::AggregateCompare: return "aggregate_compare";
    default: return "correlation_join";
  }
}

std::string to_string(NestingType t) {
  switch (t) {
    case NestingType::N: return "N";
    case NestingType::A: return "A";
    case NestingType::J: return "J";
    default: return "JA";
  }
}

std::string to_string(HopModality m) {
  return m == HopModality::CrossModal ? "cross_modal" : "uni_modal";
}

NestingType nesting_type_from_string(const std::string& s) {
  if (s == "N") return NestingType::N;
  if (s == "A") return NestingType::A;
  if (s == "J") return NestingType::J;
  if (s == "JA") return NestingType::JA;
  throw Error("unknown nesting type '" + s + "'");
}

CmpOp negate(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return CmpOp::Ne;
    case CmpOp::Ne: return CmpOp::Eq;
    case CmpOp::Lt: return CmpOp::Ge;
    case CmpOp::Le: return CmpOp::Gt;
    case CmpOp::Gt: return CmpOp::Le;
    case CmpOp::Ge: return CmpOp::Lt;
    case CmpOp::Like: return CmpOp::NotLike;
    default: return CmpOp::Like;
  }
}

namespace {

template <typename E>
E enum_from(const std::string& s, std::initializer_list<E> values) {
  for (auto v : values)
    if (to_string(v) == s) return v;
  throw Error("unknown enum value '" + s + "'");
}

AggFn agg_from(const std::string& s) {
  if (s.empty()) return AggFn::None;
  return enum_from(s, {AggFn::Count, AggFn::Sum, AggFn::Avg, AggFn::Min, AggFn::Max});
}

}  // namespace

bool QueryBlock::aggregates() const {
  return std::any_of(select_items.begin(), select_items.end(),
                     [](const SelectItem& s) { return s.fn != AggFn::None; });
}

bool QueryBlock::has_correlation() const {
  return std::any_of(predicates.begin(), predicates.end(),
                     [](const Predicate& p) { return p.kind == PredKind::CorrelationJoin; });
}

std::vector<int> QueryGraph::children_of(int block) const {
  std::vector<int> out;
  for (const auto& p : blocks.at(block).predicates)
    if (p.nested()) out.push_back(p.child);
  return out;
}

int QueryGraph::parent_of(int block) const {
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (const auto& p : blocks[b].predicates)
      if (p.nested() && p.child == block) return static_cast<int>(b);
  return -1;
}

std::string ShapeSpec::label() const {
  if (edges == 0) return "non-nested";
  return "(" + std::to_string(depth) + "," + std::to_string(breadth) + ")";
}

void validate(const QueryGraph& g) {
  auto fail = [](std::size_t b, const std::string& what) {
    throw Error("block " + std::to_string(b) + ": " + what);
  };
  if (g.blocks.empty()) throw Error("query graph has no blocks");
  if (g.root < 0 || g.root >= static_cast<int>(g.blocks.size())) throw Error("root index out of range");
  std::vector<int> refs(g.blocks.size(), 0);
  for (std::size_t b = 0; b < g.blocks.size(); ++b) {
    const auto& blk = g.blocks[b];
    if (blk.from_table.empty()) fail(b, "missing FROM table");
    for (const auto& s : blk.select_items) {
      if (s.column.empty()) fail(b, "empty select item");
      if (s.column == "*" && s.fn != AggFn::Count) fail(b, "'*' is only allowed inside COUNT");
    }
    for (std::size_t i = 0; i < blk.predicates.size(); ++i) {
      const auto& p = blk.predicates[i];
      if ((i == 0) != (p.connector == Connector::None))
        fail(b, i == 0 ? "first predicate has a connector" : "predicate " + std::to_string(i) + " lacks a connector");
      if (p.agg != AggFn::None) fail(b, "aggregate in WHERE");
      if (p.kind == PredKind::CorrelationJoin) {
        if (static_cast<int>(b) == g.root) fail(b, "correlation join in the root block");
        if (p.column.empty() || p.outer_column.empty()) fail(b, "incomplete correlation join");
      }
      if (p.kind != PredKind::Existence && p.kind != PredKind::CorrelationJoin && p.column.empty())
        fail(b, "predicate without a column");
      if (p.nested()) {
        if (p.child < 0 || p.child >= static_cast<int>(g.blocks.size()) || p.child == static_cast<int>(b))
          fail(b, "nested predicate references an invalid block");
        ++refs[p.child];
      }
    }
    if (blk.having) {
      if (!blk.group_by) fail(b, "HAVING without GROUP BY");
      if (blk.having->kind != PredKind::Comparison) fail(b, "HAVING must be a comparison");
    }
    if (blk.limit && *blk.limit <= 0) fail(b, "LIMIT must be positive");
  }
  for (std::size_t b = 0; b < g.blocks.size(); ++b) {
    int expected = static_cast<int>(b) == g.root ? 0 : 1;
    if (refs[b] != expected) fail(b, "is referenced " + std::to_string(refs[b]) + " times");
  }
  // Reachability also rules out cycles, since every non-root block has one parent.
  std::vector<bool> seen(g.blocks.size(), false);
  std::function<void(int)> walk = [&](int b) {
    if (seen[b]) fail(b, "cycle in query graph");
    seen[b] = true;
    for (int c : g.children_of(b)) walk(c);
  };
  walk(g.root);
  for (std::size_t b = 0; b < g.blocks.size(); ++b)
    if (!seen[b]) fail(b, "unreachable from the root");
}

QueryGraph normalize(QueryGraph g) {
  QueryGraph out;
  std::vector<int> order;
  std::function<void(int)> walk = [&](int b) {
    order.push_back(b);
    for (int c : g.children_of(b)) walk(c);
  };
  walk(g.root);
  std::vector<int> index(g.blocks.size(), -1);
  for (std::size_t i = 0; i < order.size(); ++i) index[order[i]] = static_cast<int>(i);
  for (int b : order) {
    auto blk = g.blocks[b];
    for (auto& p : blk.predicates)
      if (p.nested()) p.child = index[p.child];
    out.blocks.push_back(std::move(blk));
  }
  out.root = 0;
  for (std::size_t b = 0; b < out.blocks.size(); ++b)
    for (const auto& p : out.blocks[b].predicates)
      if (p.nested())
        out.edges.push_back({static_cast<int>(b), p.child, classify_nesting(out.blocks[b], out.blocks[p.child])});
  std::sort(out.edges.begin(), out.edges.end(), [](const Edge& a, const Edge& b) { return a.child < b.child; });
  return out;
}

namespace {

struct Renderer {
  const QueryGraph& g;
  std::vector<int> height;
  std::vector<bool> aliased;

  explicit Renderer(const QueryGraph& graph) : g(graph) {
    height.assign(g.blocks.size(), 0);
    aliased.assign(g.blocks.size(), false);
    std::function<std::set<std::string>(int)> walk = [&](int b) {
      std::set<std::string> below;
      for (int c : g.children_of(b)) {
        auto sub = walk(c);
        below.insert(sub.begin(), sub.end());
        below.insert(g.blocks[c].from_table);
        height[b] = std::max(height[b], height[c] + 1);
      }
      aliased[b] = below.count(g.blocks[b].from_table) > 0;
      return below;
    };
    walk(g.root);
  }

  // Aliases are named after the block's height, which does not change when
  // the block is wrapped, so a subtree renders identically on its own.
  std::string alias(int b) const { return "t" + std::to_string(height[b]); }
  std::string qualifier(int b) const { return aliased[b] ? alias(b) : g.blocks[b].from_table; }

  static std::string item(const SelectItem& s) {
    if (s.fn == AggFn::None) return s.column;
    return to_string(s.fn) + "(" + s.column + ")";
  }

  std::string from(int b) const {
    const auto& blk = g.blocks[b];
    return aliased[b] ? blk.from_table + " AS " + alias(b) : blk.from_table;
  }

  std::string predicate(int b, const Predicate& p) const {
    switch (p.kind) {
      case PredKind::Comparison: {
        std::string lhs = p.agg == AggFn::None ? p.column : to_string(p.agg) + "(" + p.column + ")";
        return lhs + " " + to_string(p.op) + " " + to_sql_literal(p.literal);
      }
      case PredKind::Membership:
        return p.column + (p.negated ? " NOT IN (" : " IN (") + block(p.child) + ")";
      case PredKind::Existence:
        return std::string(p.negated ? "NOT EXISTS (" : "EXISTS (") + block(p.child) + ")";
      case PredKind::AggregateCompare:
        return p.column + " " + to_string(p.op) + " (" + block(p.child) + ")";
      case PredKind::CorrelationJoin: {
        int parent = g.parent_of(b);
        std::string outer = parent >= 0 ? qualifier(parent) : "?";
        return outer + "." + p.outer_column + " = " + qualifier(b) + "." + p.column;
      }
    }
    return {};
  }

  std::string where(int b) const {
    std::string out;
    for (const auto& p : g.blocks[b].predicates) {
      if (p.connector != Connector::None) out += " " + to_string(p.connector) + " ";
      out += predicate(b, p);
    }
    return out;
  }

  std::string block(int b) const {
    const auto& blk = g.blocks[b];
    std::string out = "SELECT ";
    if (blk.select_items.empty()) {
      out += "*";
    } else {
      for (std::size_t i = 0; i < blk.select_items.size(); ++i)
        out += (i ? ", " : "") + item(blk.select_items[i]);
    }
    out += " FROM " + from(b);
    if (!blk.predicates.empty()) out += " WHERE " + where(b);
    if (blk.group_by) out += " GROUP BY " + *blk.group_by;
    if (blk.having) out += " HAVING " + predicate(b, *blk.having);
    if (blk.order_by) out += " ORDER BY " + item(blk.order_by->item) + (blk.order_by->desc ? " DESC" : " ASC");
    if (blk.limit) out += " LIMIT " + std::to_string(*blk.limit);
    return out;
  }
};

}  // namespace

std::string render_sql(const QueryGraph& g) {
  validate(g);
  return Renderer(g).block(g.root);
}

std::string render_predicate(const QueryGraph& g, int block, const Predicate& p) {
  return Renderer(g).predicate(block, p);
}

std::string render_where(const QueryGraph& g, int block) { return Renderer(g).where(block); }

std::string render_from(const QueryGraph& g, int block) { return Renderer(g).from(block); }

std::string block_qualifier(const QueryGraph& g, int block) { return Renderer(g).qualifier(block); }

QueryGraph single_block(QueryBlock b) {
  QueryGraph g;
  g.blocks.push_back(std::move(b));
  return g;
}

QueryGraph subgraph(const QueryGraph& g, int block) {
  QueryGraph copy = g;
  copy.root = block;
  return normalize(std::move(copy));
}

QueryGraph attach(QueryGraph outer, Predicate p, const QueryGraph& inner) {
  int offset = static_cast<int>(outer.blocks.size());
  for (auto blk : inner.blocks) {
    for (auto& q : blk.predicates)
      if (q.nested()) q.child += offset;
    outer.blocks.push_back(std::move(blk));
  }
  p.child = offset + inner.root;
  auto& preds = outer.blocks[outer.root].predicates;
  if (preds.empty()) p.connector = Connector::None;
  else if (p.connector == Connector::None) p.connector = Connector::And;
  preds.push_back(std::move(p));
  return normalize(std::move(outer));
}

ShapeSpec shape_of(const QueryGraph& graph) {
  auto g = normalize(graph);
  ShapeSpec s;
  s.edges = static_cast<int>(g.edges.size());
  std::vector<int> depth(g.blocks.size(), 0);
  std::vector<int> degree(g.blocks.size(), 0);
  s.parents.assign(g.blocks.size() > 0 ? g.blocks.size() - 1 : 0, 0);
  for (const auto& e : g.edges) {
    s.parents[e.child - 1] = e.parent;
    ++degree[e.parent];
  }
  // Pre-order guarantees parents precede children.
  for (std::size_t b = 1; b < g.blocks.size(); ++b) {
    depth[b] = depth[s.parents[b - 1]] + 1;
    s.depth = std::max(s.depth, depth[b]);
  }
  for (int d : degree) s.breadth = std::max(s.breadth, d);
  return s;
}

ShapeSpec shape_preset(int depth, int breadth) {
  if (depth < 0 || breadth < 0 || (depth == 0) != (breadth == 0))
    throw Error("invalid shape preset (" + std::to_string(depth) + "," + std::to_string(breadth) + ")");
  ShapeSpec s;
  s.depth = depth;
  s.breadth = breadth;
  s.edges = depth * breadth;
  int next = 1;
  for (int chain = 0; chain < breadth; ++chain) {
    int parent = 0;
    for (int level = 0; level < depth; ++level) {
      s.parents.push_back(parent);
      parent = next++;
    }
  }
  return s;
}

NestingType classify_nesting(const QueryBlock&, const QueryBlock& child) {
  bool agg = child.aggregates();
  bool corr = child.has_correlation();
  if (agg && corr) return NestingType::JA;
  if (agg) return NestingType::A;
  if (corr) return NestingType::J;
  return NestingType::N;
}

std::vector<HopModality> classify_hops(const QueryGraph& g, const Catalog& c) {
  std::vector<HopModality> out;
  for (const auto& e : g.edges) {
    const auto& a = g.blocks.at(e.parent).from_table;
    const auto& b = g.blocks.at(e.child).from_table;
    c.require_table(a);
    c.require_table(b);
    out.push_back(c.is_grounding(a) != c.is_grounding(b) ? HopModality::CrossModal : HopModality::UniModal);
  }
  return out;
}

OperatorProfile operator_profile(const QueryGraph& g) {
  OperatorProfile p;
  for (const auto& b : g.blocks) {
    p.where |= !b.predicates.empty();
    p.group_by |= b.group_by.has_value();
    p.having |= b.having.has_value();
    p.order_by |= b.order_by.has_value();
    p.limit |= b.limit.has_value();
    p.aggregation |= b.aggregates();
  }
  return p;
}

namespace {

nlohmann::json item_json(const SelectItem& s) { return {{"fn", to_string(s.fn)}, {"column", s.column}}; }

SelectItem item_from(const nlohmann::json& j) {
  return {agg_from(j.at("fn").get<std::string>()), j.at("column").get<std::string>()};
}

nlohmann::json pred_json(const Predicate& p) {
  nlohmann::json j{{"kind", to_string(p.kind)}, {"connector", to_string(p.connector)}};
  switch (p.kind) {
    case PredKind::Comparison:
      if (p.agg != AggFn::None) j["agg"] = to_string(p.agg);
      j["column"] = p.column;
      j["op"] = to_string(p.op);
      j["literal"] = to_json(p.literal);
      break;
    case PredKind::Membership:
      j["column"] = p.column;
      j["negated"] = p.negated;
      j["child"] = p.child;
      break;
    case PredKind::Existence:
      j["negated"] = p.negated;
      j["child"] = p.child;
      break;
    case PredKind::AggregateCompare:
      j["column"] = p.column;
      j["op"] = to_string(p.op);
      j["child"] = p.child;
      break;
    case PredKind::CorrelationJoin:
      j["outer_column"] = p.outer_column;
      j["column"] = p.column;
      break;
  }
  return j;
}

Predicate pred_from(const nlohmann::json& j) {
  Predicate p;
  p.kind = enum_from(j.at("kind").get<std::string>(),
                     {PredKind::Comparison, PredKind::Membership, PredKind::Existence,
                      PredKind::AggregateCompare, PredKind::CorrelationJoin});
  auto conn = j.value("connector", std::string{});
  p.connector = conn.empty() ? Connector::None : enum_from(conn, {Connector::And, Connector::Or});
  p.agg = agg_from(j.value("agg", std::string{}));
  p.column = j.value("column", std::string{});
  if (j.contains("op"))
    p.op = enum_from(j.at("op").get<std::string>(), {CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt,
                                                     CmpOp::Ge, CmpOp::Like, CmpOp::NotLike});
  if (j.contains("literal")) p.literal = value_from_json(j.at("literal"));
  p.negated = j.value("negated", false);
  p.child = j.value("child", -1);
  p.outer_column = j.value("outer_column", std::string{});
  return p;
}

}  // namespace

nlohmann::json to_json(const QueryGraph& g) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : g.blocks) {
    nlohmann::json jb;
    jb["select"] = nlohmann::json::array();
    for (const auto& s : b.select_items) jb["select"].push_back(item_json(s));
    jb["from"] = b.from_table;
    jb["where"] = nlohmann::json::array();
    for (const auto& p : b.predicates) jb["where"].push_back(pred_json(p));
    if (b.group_by) jb["group_by"] = *b.group_by;
    if (b.having) jb["having"] = pred_json(*b.having);
    if (b.order_by) jb["order_by"] = {{"item", item_json(b.order_by->item)}, {"desc", b.order_by->desc}};
    if (b.limit) jb["limit"] = *b.limit;
    blocks.push_back(std::move(jb));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges)
    edges.push_back({{"parent", e.parent}, {"child", e.child}, {"type", to_string(e.type)}});
  return {{"root", g.root}, {"blocks", blocks}, {"edges", edges}};
}

QueryGraph graph_from_json(const nlohmann::json& j) {
  QueryGraph g;
  g.root = j.value("root", 0);
  for (const auto& jb : j.at("blocks")) {
    QueryBlock b;
    for (const auto& s : jb.at("select")) b.select_items.push_back(item_from(s));
    b.from_table = jb.at("from").get<std::string>();
    for (const auto& p : jb.at("where")) b.predicates.push_back(pred_from(p));
    if (jb.contains("group_by")) b.group_by = jb.at("group_by").get<std::string>();
    if (jb.contains("having")) b.having = pred_from(jb.at("having"));
    if (jb.contains("order_by"))
      b.order_by = OrderBy{item_from(jb.at("order_by").at("item")), jb.at("order_by").at("desc").get<bool>()};
    if (jb.contains("limit")) b.limit = jb.at("limit").get<std::int64_t>();
    g.blocks.push_back(std::move(b));
  }
  validate(g);
  return normalize(std::move(g));
}

nlohmann::json to_json(const ShapeSpec& s) {
  return {{"depth", s.depth}, {"breadth", s.breadth}, {"edges", s.edges}, {"template", s.parents}};
}

ShapeSpec shape_from_json(const nlohmann::json& j) {
  ShapeSpec s;
  s.depth = j.at("depth").get<int>();
  s.breadth = j.at("breadth").get<int>();
  s.edges = j.at("edges").get<int>();
  s.parents = j.at("template").get<std::vector<int>>();
  return s;
}

nlohmann::json to_json(const OperatorProfile& p) {
  return {{"WHERE", p.where},       {"GROUP BY", p.group_by}, {"HAVING", p.having},
          {"ORDER BY", p.order_by}, {"LIMIT", p.limit},       {"AGGREGATION", p.aggregation}};
}

}  // namespace sparta
