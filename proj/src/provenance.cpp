#include "sparta/provenance.hpp"

#include <algorithm>

#include "sparta/llm_gateway.hpp"
#include "sparta/sql_parser.hpp"

namespace sparta {

using nlohmann::json;

namespace {

const Predicate& unit(const QueryGraph& g, const PredicateRef& ref) {
  const auto& root = g.blocks.at(g.root);
  if (ref.having) {
    if (!root.having) throw Error("no HAVING condition to reference");
    return *root.having;
  }
  if (ref.index < 0 || ref.index >= static_cast<int>(root.predicates.size()))
    throw Error("predicate index " + std::to_string(ref.index) + " out of range");
  return root.predicates[ref.index];
}

QueryGraph drop(QueryGraph g, const PredicateRef& ref) {
  auto& root = g.blocks[g.root];
  if (ref.having) {
    root.having.reset();
  } else {
    root.predicates.erase(root.predicates.begin() + ref.index);
    if (!root.predicates.empty()) root.predicates.front().connector = Connector::None;
  }
  return normalize(std::move(g));
}

// FROM/WHERE of the root as a standalone filter, used for witness queries.
std::string body(const QueryGraph& g) {
  std::string out = " FROM " + render_from(g, 0);
  if (!g.blocks[0].predicates.empty()) out += " WHERE (" + render_where(g, 0) + ")";
  return out;
}

std::string and_where(const QueryGraph& g) { return g.blocks[0].predicates.empty() ? " WHERE " : " AND "; }

bool truthy(const ResultSet& r) {
  return !r.rows.empty() && !r.rows[0].empty() && is_numeric(r.rows[0][0]) && as_double(r.rows[0][0]) != 0;
}

// Condition restricting the context's rows to the group of base row `rowid`.
std::string same_group(const QueryGraph& g, const QueryGraph& context, std::int64_t rowid) {
  const auto& root = g.blocks[0];
  if (!root.group_by) return "1";
  return block_qualifier(context, 0) + "." + *root.group_by + " IS (SELECT " + *root.group_by + " FROM " +
         root.from_table + " WHERE rowid = " + std::to_string(rowid) + ")";
}

Value witness_value(Database& db, const QueryGraph& g, const PredicateRef& ref, std::size_t w,
                    const ProvenanceReport& r, const QueryGraph& context) {
  const auto& p = unit(g, ref);
  if (ref.having) {
    std::string expr = to_string(p.agg) + "(" + p.column + ")";
    auto rs = db.execute("SELECT " + expr + body(context) + and_where(context) + same_group(g, context, r.witness_rowids[w]));
    return rs.rows.empty() ? Value{} : rs.rows[0][0];
  }
  if (p.kind == PredKind::Existence || p.column.empty()) return {};
  for (std::size_t c = 1; c < r.witness_columns.size(); ++c)
    if (r.witness_columns[c] == p.column) return r.witnesses[w][c];
  return {};
}

}  // namespace

std::string describe(const QueryGraph& g, const PredicateRef& ref) {
  auto text = render_predicate(g, g.root, unit(g, ref));
  return ref.having ? "HAVING " + text : text;
}

bool yields_no_rows(Database& db, const QueryGraph& g) {
  if (db.is_empty(render_sql(g))) return true;
  const auto& root = g.blocks[g.root];
  if (!root.aggregates() || root.group_by) return false;
  auto bare = g;
  auto& b = bare.blocks[bare.root];
  b.select_items.clear();
  b.order_by.reset();
  b.limit.reset();
  b.having.reset();
  return db.is_empty(render_sql(bare));
}

PeelResult peel_until_nonempty(const QueryGraph& g, Database& db) {
  PeelResult out{normalize(g), {}};
  if (!yields_no_rows(db, out.survivor)) return out;
  const auto& root = out.survivor.blocks[0];
  std::vector<PredicateRef> order;
  if (root.having) order.push_back({-1, true});
  for (int i = static_cast<int>(root.predicates.size()) - 1; i >= 0; --i) order.push_back({i, false});
  for (const auto& ref : order) {
    out.survivor = drop(std::move(out.survivor), ref);
    out.peeled.push_back(ref);
    if (!yields_no_rows(db, out.survivor)) return out;
  }
  throw Error("query returns no rows even with every root predicate removed");
}

bool satisfies(Database& db, const QueryGraph& g, const PredicateRef& ref, std::int64_t rowid,
               const QueryGraph& context) {
  const auto& p = unit(g, ref);
  std::string sql;
  if (ref.having) {
    const auto& root = g.blocks[0];
    sql = "SELECT EXISTS(SELECT 1" + body(context) + and_where(context) + same_group(g, context, rowid) +
          (root.group_by ? " GROUP BY " + *root.group_by : "") + " HAVING " + render_predicate(g, 0, p) + ")";
  } else {
    sql = "SELECT EXISTS(SELECT 1 FROM " + render_from(g, 0) + " WHERE " + block_qualifier(g, 0) +
          ".rowid = " + std::to_string(rowid) + " AND (" + render_predicate(g, 0, p) + "))";
  }
  return truthy(db.execute(sql));
}

ProvenanceReport blame(const QueryGraph& original, const PeelResult& peel, Database& db, std::size_t witnesses,
                       std::uint64_t seed) {
  auto g = normalize(original);
  ProvenanceReport r;
  r.peeled = peel.peeled;
  r.survivor_sql = render_sql(peel.survivor);
  if (peel.peeled.empty()) throw Error("nothing was peeled; the query already returns rows");

  const auto& s = peel.survivor;
  auto q = block_qualifier(s, 0);
  auto rs = db.execute("SELECT " + q + ".rowid, " + q + ".*" + body(s));
  r.witness_columns = rs.columns;
  r.witnesses = sample_witnesses(rs, witnesses, seed);
  if (r.witnesses.empty()) throw Error("survivor has no witness rows");
  for (const auto& w : r.witnesses) r.witness_rowids.push_back(static_cast<std::int64_t>(as_double(w.at(0))));

  auto order = peel.peeled;
  std::sort(order.begin(), order.end(), [](const PredicateRef& a, const PredicateRef& b) {
    if (a.having != b.having) return b.having;
    return a.index < b.index;
  });
  std::vector<int> fails(order.size(), 0);
  for (auto rowid : r.witness_rowids) {
    std::vector<PredicateRef> culprits;
    for (std::size_t k = 0; k < order.size(); ++k)
      if (!satisfies(db, g, order[k], rowid, s)) {
        culprits.push_back(order[k]);
        ++fails[k];
      }
    r.culprits.push_back(std::move(culprits));
  }
  for (std::size_t k = 0; k < order.size(); ++k)
    if (fails[k] == static_cast<int>(r.witnesses.size())) {
      r.blocking = order[k];
      break;
    }
  if (!r.blocking) throw NoUnanimousCulprit("no unanimous culprit among the peeled predicates", std::move(r));
  r.blocking_text = describe(g, *r.blocking);
  for (std::size_t w = 0; w < r.witnesses.size(); ++w)
    r.witness_values.push_back(witness_value(db, g, *r.blocking, w, r, s));
  return r;
}

json ProvenanceReport::to_json(const QueryGraph& original) const {
  auto ref_json = [&](const PredicateRef& ref) {
    return json{{"index", ref.index}, {"having", ref.having}, {"text", describe(original, ref)}};
  };
  json j;
  j["peeled"] = json::array();
  for (const auto& p : peeled) j["peeled"].push_back(ref_json(p));
  j["survivor"] = survivor_sql;
  json rows = json::array();
  for (const auto& w : witnesses) {
    json row = json::array();
    for (std::size_t c = 1; c < w.size(); ++c) row.push_back(sparta::to_json(w[c]));
    rows.push_back(row);
  }
  j["witnesses"] = {{"columns", json(std::vector<std::string>(witness_columns.begin() + (witness_columns.empty() ? 0 : 1),
                                                               witness_columns.end()))},
                    {"rows", rows}};
  j["blocking"] = blocking ? ref_json(*blocking) : json(nullptr);
  j["witness_values"] = json::array();
  for (const auto& v : witness_values) j["witness_values"].push_back(sparta::to_json(v));
  j["culprits"] = json::array();
  for (const auto& c : culprits) {
    json set = json::array();
    for (const auto& ref : c) set.push_back(describe(original, ref));
    j["culprits"].push_back(set);
  }
  return j;
}

std::string locality_violation(const QueryGraph& before_in, const QueryGraph& after_in, const PredicateRef& blamed) {
  auto before = normalize(before_in);
  auto after = normalize(after_in);
  if (shape_of(before) != shape_of(after)) return "nesting shape changed";
  for (std::size_t e = 0; e < before.edges.size(); ++e)
    if (before.edges[e].type != after.edges[e].type) return "nesting type of an edge changed";
  const auto& rb = before.blocks[0];
  const auto& ra = after.blocks[0];
  if (rb.from_table != ra.from_table || rb.select_items != ra.select_items || rb.group_by != ra.group_by ||
      rb.order_by != ra.order_by || rb.limit != ra.limit)
    return "root clauses outside WHERE/HAVING changed";
  if (rb.predicates.size() != ra.predicates.size()) return "number of WHERE predicates changed";
  if (!blamed.having && rb.having != ra.having) return "HAVING changed";
  if (blamed.having && !ra.having) return "HAVING was removed";

  auto mask = [&](QueryGraph g) {
    Predicate m;
    m.column = "blamed_predicate";
    m.literal = std::int64_t{0};
    auto& root = g.blocks[0];
    if (blamed.having) {
      root.having = m;
    } else {
      m.connector = before.blocks[0].predicates.at(blamed.index).connector;
      root.predicates.at(blamed.index) = m;
    }
    return render_sql(normalize(std::move(g)));
  };
  if (!blamed.having && ra.predicates.at(blamed.index).connector != rb.predicates.at(blamed.index).connector)
    return "connector of the blamed predicate changed";
  if (mask(before) != mask(after)) return "text outside the blamed predicate changed";

  if (!blamed.having && rb.predicates[blamed.index].nested()) {
    const auto& pb = rb.predicates[blamed.index];
    const auto& pa = ra.predicates[blamed.index];
    if (!pa.nested()) return "nested predicate lost its subquery";
    auto sb = subgraph(before, pb.child);
    auto sa = subgraph(after, pa.child);
    for (std::size_t k = 0; k < sb.blocks.size(); ++k)
      for (const auto& p : sb.blocks[k].predicates)
        if (p.kind == PredKind::CorrelationJoin &&
            std::find(sa.blocks[k].predicates.begin(), sa.blocks[k].predicates.end(), p) ==
                sa.blocks[k].predicates.end())
          return "correlation " + p.outer_column + " = " + p.column + " was dropped";
  }
  return {};
}

RefineResult refine(const QueryGraph& g, const ProvenanceReport& report, Gateway& gateway, Database& db,
                    const RefineOptions& opts) {
  RefineResult out;
  out.graph = normalize(g);
  out.reports.push_back(report);
  for (int round = 1; round <= opts.budget; ++round) {
    const auto& rep = out.reports.back();
    if (!rep.blocking) throw RefineError("provenance report has no blocking predicate");
    auto blamed = *rep.blocking;
    const auto current = out.graph;

    json rows = json::array();
    for (std::size_t w = 0; w < rep.witnesses.size() && w < opts.sample_rows; ++w) {
      json row = json::array();
      for (std::size_t c = 1; c < rep.witnesses[w].size(); ++c) row.push_back(to_json(rep.witnesses[w][c]));
      rows.push_back(row);
    }
    std::vector<std::string> cols;
    if (!rep.witness_columns.empty()) cols.assign(rep.witness_columns.begin() + 1, rep.witness_columns.end());
    Slots slots{{"original_query", render_sql(current)},
                {"problematic_condition", describe(current, blamed)},
                {"execution_result", json{{"columns", cols}, {"rows", rows}}.dump()},
                {"provenance_report", rep.to_json(current).dump()}};

    QueryGraph next;
    CallOptions call;
    call.budget = opts.call_budget;
    call.ideal = opts.ideal && round == 1;
    call.validate = [&](const json& j) {
      QueryGraph parsed;
      try {
        parsed = parse_sql(j.at("corrected_query").get<std::string>());
      } catch (const ParseError& e) {
        throw ResponseError(std::string("corrected query does not parse: ") + e.what());
      }
      if (auto why = locality_violation(current, parsed, blamed); !why.empty()) {
        out.rejections.push_back(why);
        throw ResponseError("refinement is not local: " + why);
      }
      next = std::move(parsed);
    };
    out.rounds = round;
    try {
      gateway.complete(PromptKind::ProvenanceRefine, slots, call);
    } catch (const BudgetExhausted&) {
      continue;
    }
    out.graph = next;
    if (!yields_no_rows(db, out.graph)) return out;
    try {
      auto peel = peel_until_nonempty(out.graph, db);
      out.reports.push_back(blame(out.graph, peel, db, opts.witnesses, opts.seed + round));
    } catch (const NoUnanimousCulprit& e) {
      throw RefineError(std::string("refined query is still empty and ") + e.what());
    }
  }
  throw RefineError("refinement budget exhausted: query still returns no rows after " + std::to_string(opts.budget) +
                    " rounds");
}

RefineResult repair(const QueryGraph& g, Gateway& gateway, Database& db, const RefineOptions& opts) {
  auto peel = peel_until_nonempty(g, db);
  if (peel.peeled.empty()) return RefineResult{normalize(g), 0, {}, {}};
  auto report = blame(g, peel, db, opts.witnesses, opts.seed);
  return refine(g, report, gateway, db, opts);
}

}  // namespace sparta
