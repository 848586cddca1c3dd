#include "sparta/nest_gen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <random>

#include "sparta/provenance.hpp"
#include "sparta/sql_parser.hpp"

namespace sparta {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool aggregate_edge(NestingType t) { return t == NestingType::A || t == NestingType::JA; }

PromptKind nested_kind(NestingType t) {
  switch (t) {
    case NestingType::N: return PromptKind::NestedN;
    case NestingType::A: return PromptKind::NestedA;
    case NestingType::J: return PromptKind::NestedJ;
    case NestingType::JA: return PromptKind::NestedJA;
  }
  return PromptKind::NestedN;
}

// Root WHERE text of the first `count` predicates of `g`.
std::string where_prefix(const QueryGraph& g, std::size_t count) {
  std::string out;
  const auto& preds = g.blocks[g.root].predicates;
  for (std::size_t i = 0; i < count && i < preds.size(); ++i) {
    if (i) out += " " + to_string(preds[i].connector == Connector::None ? Connector::And : preds[i].connector) + " ";
    out += render_predicate(g, g.root, preds[i]);
  }
  return out;
}

QueryGraph keep_first(QueryGraph g, std::size_t count) {
  auto& preds = g.blocks[g.root].predicates;
  preds.resize(std::min(count, preds.size()));
  return normalize(std::move(g));
}

QueryGraph strip_root_correlations(QueryGraph g) {
  auto& preds = g.blocks[g.root].predicates;
  std::erase_if(preds, [](const Predicate& p) { return p.kind == PredKind::CorrelationJoin; });
  if (!preds.empty()) preds.front().connector = Connector::None;
  return normalize(std::move(g));
}

struct AttemptFailure {
  Outcome outcome;
  std::string note;
};

std::string outer_from(GenContext& ctx, const std::vector<QueryGraph>& subs, const std::vector<NestingType>& types,
                       bool ideal) {
  json sql = json::array(), tj = json::array();
  for (const auto& s : subs) sql.push_back(render_sql(s));
  for (auto t : types) tj.push_back(to_string(t));
  std::string table;
  CallOptions call;
  call.budget = ctx.cfg.call_budget;
  call.ideal = ideal;
  call.validate = [&](const json& j) {
    auto name = clause_body(j.at("from").get<std::string>(), "FROM");
    if (!ctx.catalog.table(name)) throw ResponseError("outer table '" + name + "' is not in the schema");
    table = name;
  };
  ctx.gateway.complete(PromptKind::OuterFrom,
                       {{"database", ctx.schema}, {"subquery", sql.dump()}, {"nesting_type", tj.dump()}}, call);
  return table;
}

}  // namespace

std::string to_string(NestedStrategy s) {
  switch (s) {
    case NestedStrategy::OneShotK: return "one_shot_k";
    case NestedStrategy::PostOrder: return "post_order";
    case NestedStrategy::PostOrderProv: return "post_order_prov";
  }
  return "?";
}

NestedStrategy nested_strategy_from_string(const std::string& s) {
  for (auto k : {NestedStrategy::OneShotK, NestedStrategy::PostOrder, NestedStrategy::PostOrderProv})
    if (to_string(k) == s) return k;
  throw Error("unknown nested strategy '" + s + "'");
}

std::vector<NestingType> sample_edge_types(const GenerationConfig& cfg, const ShapeSpec& shape, std::uint64_t seed) {
  std::vector<NestingType> types;
  std::vector<double> weights;
  for (const auto& [t, w] : cfg.nesting_weights) {
    types.push_back(t);
    weights.push_back(w);
  }
  if (types.empty()) throw Error("no nesting weights configured");
  std::mt19937_64 rng(splitmix(seed ^ 0x6e657374ULL));
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::vector<NestingType> out;
  for (int e = 0; e < shape.edges; ++e) out.push_back(types[pick(rng)]);
  return out;
}

std::vector<ClauseKind> root_clause_plan(const GenerationConfig& cfg, std::uint64_t seed,
                                         std::optional<bool> group_by) {
  auto plan = plan_clause_sequence(cfg, seed, group_by);
  std::erase_if(plan, [](ClauseKind k) { return k == ClauseKind::From || k == ClauseKind::Where; });
  return plan;
}

NestedRequest make_request(const GenerationConfig& cfg, const ShapeSpec& shape, std::uint64_t seed,
                           std::optional<bool> group_by) {
  if (shape.edges < 1) throw Error("nested request needs at least one edge");
  return {shape, sample_edge_types(cfg, shape, seed), root_clause_plan(cfg, splitmix(seed + 1), group_by)};
}

std::size_t select_inner_block(GenContext& ctx, const std::vector<QueryGraph>& candidates,
                               const std::set<std::size_t>& consumed, NestingType type, bool ideal) {
  if (candidates.empty()) throw Error("no inner block candidates");
  std::vector<std::size_t> avail;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (!consumed.count(i)) avail.push_back(i);
  if (avail.empty()) throw Error("every inner block candidate is already used");
  if (avail.size() == 1) return avail[0];
  json sql = json::array();
  for (auto i : avail) sql.push_back(render_sql(candidates[i]));
  std::size_t chosen = 0;
  CallOptions call;
  call.budget = ctx.cfg.call_budget;
  call.ideal = ideal;
  call.validate = [&](const json& j) {
    auto idx = j.at("inner_query_block").get<std::int64_t>();
    if (idx < 0 || idx >= static_cast<std::int64_t>(avail.size()))
      throw ResponseError("inner_query_block " + std::to_string(idx) + " is not an offered candidate");
    chosen = avail[static_cast<std::size_t>(idx)];
  };
  ctx.gateway.complete(PromptKind::InnerBlockSelection,
                       {{"database", ctx.schema},
                        {"candidate_inner_query_blocks", sql.dump()},
                        {"nesting_type", to_string(type)}},
                       call);
  return chosen;
}

QueryGraph add_nested_predicate(GenContext& ctx, const QueryGraph& outer_in, const QueryGraph& inner_in,
                                NestingType type, bool ideal) {
  auto outer = normalize(outer_in);
  auto inner = normalize(inner_in);
  const auto m = outer.blocks[0].predicates.size();
  Predicate placeholder;
  placeholder.kind = PredKind::Existence;
  auto context = attach(outer, placeholder, inner);
  auto from_slot = "FROM " + render_from(context, 0);
  auto where_slot = where_prefix(context, m);

  QueryGraph parsed;
  CallOptions call;
  call.budget = ctx.cfg.call_budget;
  call.ideal = ideal;
  call.validate = [&](const json& j) {
    auto op = j.at("logical_operator").get<std::string>();
    for (auto& ch : op) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (!op.empty() && op != "AND" && op != "OR") throw ResponseError("logical_operator must be AND or OR");
    if (op.empty()) op = "AND";
    auto pred = clause_body(j.at("nested_predicate").get<std::string>(), "WHERE");
    auto sql = "SELECT * " + from_slot + " WHERE " + (where_slot.empty() ? pred : where_slot + " " + op + " " + pred);
    try {
      parsed = parse_sql(sql);
    } catch (const ParseError& e) {
      throw ResponseError(std::string("nested predicate does not parse: ") + e.what());
    }
  };
  ctx.gateway.complete(nested_kind(type),
                       {{"database", ctx.schema},
                        {"generated_from_clause", from_slot},
                        {"generated_where_clause", where_slot},
                        {"selected_inner_query_block", render_sql(inner)},
                        {"height", std::to_string(shape_of(context).depth)}},
                       call);

  using R = WrapError::Reason;
  const auto& root = parsed.blocks[0];
  if (root.from_table != outer.blocks[0].from_table) throw WrapError(R::Mismatch, "outer table changed");
  if (root.predicates.size() <= m) throw WrapError(R::Mismatch, "no predicate was added");
  if (keep_first(parsed, m) != outer) throw WrapError(R::Mismatch, "existing outer predicates changed");
  int nested_at = -1;
  for (std::size_t i = m; i < root.predicates.size(); ++i) {
    const auto& p = root.predicates[i];
    if (p.nested()) {
      if (nested_at >= 0) throw WrapError(R::Mismatch, "more than one nested predicate was added");
      nested_at = static_cast<int>(i);
    } else if (p.kind != PredKind::Comparison) {
      throw WrapError(R::Mismatch, "unexpected predicate kind " + to_string(p.kind));
    }
  }
  if (nested_at < 0) throw WrapError(R::Mismatch, "the added predicate is not nested");
  const auto& q = root.predicates[nested_at];
  if (strip_root_correlations(subgraph(parsed, q.child)) != strip_root_correlations(inner))
    throw WrapError(R::Mismatch, "the subquery was modified");
  if (subgraph(parsed, q.child).blocks[0].has_correlation() == false && inner.blocks[0].has_correlation())
    throw WrapError(R::Mismatch, "the subquery lost its correlation");
  auto got = classify_nesting(root, parsed.blocks[q.child]);
  if (got != type)
    throw WrapError(R::Mismatch, "asked for type " + to_string(type) + " but the predicate classifies as " +
                                     to_string(got));

  try {
    if (root.predicates[m].connector == Connector::Or) {
      auto alone = parsed;
      auto& a = alone.blocks[0];
      a.predicates = {q};
      a.predicates[0].connector = Connector::None;
      alone = normalize(std::move(alone));
      if (yields_no_rows(ctx.db, alone))
        throw WrapError(R::Invalid, "OR with a nested predicate that is empty on its own");
    }
    if (yields_no_rows(ctx.db, parsed)) throw WrapError(R::Empty, "the wrapped query returns no rows", parsed);
  } catch (const ExecError& e) {
    throw WrapError(R::Invalid, std::string("the wrapped query fails: ") + e.what());
  }
  return parsed;
}

QueryGraph wrap_with_outer(GenContext& ctx, const QueryGraph& inner, NestingType type, bool ideal) {
  auto table = outer_from(ctx, {inner}, {type}, ideal);
  QueryBlock b;
  b.from_table = table;
  return add_nested_predicate(ctx, single_block(b), inner, type, ideal);
}

namespace {

class NestedBuild {
 public:
  NestedBuild(GenContext& ctx, NestedStrategy strategy, const NestedRequest& req, std::uint64_t seed, bool ideal)
      : ctx_(ctx), strategy_(strategy), req_(req), seed_(seed), ideal_(ideal) {
    std::size_t n = req.shape.parents.size() + 1;
    if (req.edge_types.size() != req.shape.parents.size())
      throw Error("nested request has " + std::to_string(req.edge_types.size()) + " edge types for " +
                  std::to_string(req.shape.parents.size()) + " edges");
    kids_.resize(n);
    for (std::size_t v = 1; v < n; ++v) kids_.at(req.shape.parents[v - 1]).push_back(static_cast<int>(v));
  }

  QueryGraph one_shot() {
    std::vector<int> leaves;
    for (std::size_t v = 1; v < kids_.size(); ++v)
      if (kids_[v].empty()) leaves.push_back(static_cast<int>(v));
    std::string last;
    for (int t = 0; t < ctx_.cfg.one_shot_tries; ++t) {
      bool planned = ideal_ && t == 0;
      json blocks = json::array();
      for (int v : leaves) blocks.push_back(render_sql(make_leaf(needs_agg(v), planned)));
      json types = json::array(), names = json::array();
      for (auto ty : req_.edge_types) types.push_back(to_string(ty));
      for (auto k : req_.root_plan) names.push_back(to_string(k));
      CallOptions call;
      call.budget = ctx_.cfg.call_budget;
      call.ideal = planned;
      try {
        auto text = ctx_.gateway
                        .complete(PromptKind::OneShotNested,
                                  {{"database", ctx_.schema},
                                   {"shape", to_json(req_.shape).dump()},
                                   {"nesting_types", types.dump()},
                                   {"leaf_blocks", blocks.dump()},
                                   {"root_clauses", names.dump()}},
                                  call)
                        .text("query");
        auto g = parse_sql(text);
        if (auto why = mismatch(g); !why.empty()) {
          last = why;
          continue;
        }
        if (yields_no_rows(ctx_.db, g)) {
          last = "draft returns no rows";
          continue;
        }
        return g;
      } catch (const ParseError& e) {
        last = std::string("draft does not parse: ") + e.what();
      } catch (const BudgetExhausted& e) {
        last = e.what();
      } catch (const ExecError& e) {
        last = std::string("draft fails: ") + e.what();
      }
    }
    throw AttemptFailure{last.find("no rows") != std::string::npos ? Outcome::Empty : Outcome::ExecErr,
                         "no usable draft in " + std::to_string(ctx_.cfg.one_shot_tries) + " tries; last: " + last};
  }

  QueryGraph post_order() {
    fill_pools();
    auto g = build(0);
    if (auto why = mismatch(g); !why.empty()) throw AttemptFailure{Outcome::ExecErr, why};
    return g;
  }

  const json& edges() const { return edges_; }

  std::string mismatch(const QueryGraph& g) const {
    if (shape_of(g) != req_.shape) return "shape " + shape_of(g).label() + " does not match " + req_.shape.label();
    for (std::size_t e = 0; e < g.edges.size(); ++e)
      if (g.edges[e].type != req_.edge_types[e])
        return "edge " + std::to_string(e + 1) + " classifies as " + to_string(g.edges[e].type);
    return {};
  }

 private:
  NestingType type_of(int v) const { return req_.edge_types.at(v - 1); }
  bool needs_agg(int v) const { return v > 0 && aggregate_edge(type_of(v)); }
  std::uint64_t next_seed() { return splitmix(seed_ + ++counter_); }

  QueryGraph make_leaf(bool agg, bool planned) {
    std::vector<ClauseKind> steps{ClauseKind::From, ClauseKind::Where,
                                  agg ? ClauseKind::SelectAgg : ClauseKind::SelectPlain};
    std::string note;
    for (int t = 0; t < ctx_.cfg.one_shot_tries; ++t) {
      std::map<std::string, std::string> clauses;
      auto run = run_clauses(ctx_, clauses, steps, true, agg ? "inner_agg" : "inner_plain", planned && t == 0,
                             next_seed());
      if (run.ok && run.graph.blocks[0].aggregates() == agg) return run.graph;
      note = run.ok ? "leaf projection does not fit the edge" : run.note;
    }
    throw AttemptFailure{Outcome::ExecErr, "could not build a leaf block: " + note};
  }

  void fill_pools() {
    std::size_t need[2] = {0, 0};
    for (std::size_t v = 1; v < kids_.size(); ++v)
      if (kids_[v].empty()) ++need[needs_agg(static_cast<int>(v)) ? 1 : 0];
    for (int a = 0; a < 2; ++a) {
      auto size = static_cast<std::size_t>(std::ceil(need[a] * ctx_.cfg.leaf_pool_factor));
      for (std::size_t i = 0; i < size; ++i) pool_[a].push_back(make_leaf(a == 1, ideal_));
    }
  }

  QueryGraph take_leaf(int v, bool planned) {
    int a = needs_agg(v) ? 1 : 0;
    if (consumed_[a].size() == pool_[a].size()) pool_[a].push_back(make_leaf(a == 1, false));
    auto idx = select_inner_block(ctx_, pool_[a], consumed_[a], type_of(v), planned);
    consumed_[a].insert(idx);
    return pool_[a][idx];
  }

  QueryGraph build(int v) {
    const auto& children = kids_[v];
    std::vector<QueryGraph> subs;
    std::vector<NestingType> types;
    for (int c : children) {
      subs.push_back(kids_[c].empty() ? take_leaf(c, ideal_) : build(c));
      types.push_back(type_of(c));
    }
    QueryBlock ob;
    try {
      ob.from_table = outer_from(ctx_, subs, types, ideal_);
    } catch (const BudgetExhausted& e) {
      throw AttemptFailure{Outcome::ExecErr, e.what()};
    }
    QueryGraph o = single_block(ob);

    for (std::size_t i = 0; i < children.size(); ++i) {
      int c = children[i];
      int discards = 0;
      bool repaired = false;
      for (bool first = true;; first = false) {
        std::string why;
        Outcome fail = Outcome::ExecErr;
        try {
          o = add_nested_predicate(ctx_, o, subs[i], type_of(c), ideal_ && first);
          break;
        } catch (const WrapError& e) {
          why = e.what();
          if (e.reason == WrapError::Reason::Empty) {
            fail = Outcome::Empty;
            if (strategy_ == NestedStrategy::PostOrderProv) {
              if (auto fixed = try_repair(e.graph, why)) {
                o = *fixed;
                repaired = true;
                break;
              }
            }
          }
        } catch (const BudgetExhausted& e) {
          why = e.what();
        }
        if (++discards > ctx_.cfg.discard_cap)
          throw AttemptFailure{fail, "edge " + std::to_string(c) + " abandoned after " +
                                         std::to_string(ctx_.cfg.discard_cap) + " discards: " + why};
        if (kids_[c].empty()) subs[i] = take_leaf(c, false);
      }
      edges_.push_back(
          {{"child", c}, {"type", to_string(type_of(c))}, {"discards", discards}, {"repaired", repaired}});
    }

    std::vector<ClauseKind> steps;
    std::string purpose = "query";
    if (v == 0) {
      steps = req_.root_plan;
    } else {
      steps = {needs_agg(v) ? ClauseKind::SelectAgg : ClauseKind::SelectPlain};
      purpose = needs_agg(v) ? "inner_agg" : "inner_plain";
    }
    std::map<std::string, std::string> clauses{{"from", "FROM " + render_from(o, 0)}, {"where", render_where(o, 0)}};
    auto run = run_clauses(ctx_, clauses, steps, true, purpose, ideal_, next_seed());
    if (!run.ok) throw AttemptFailure{run.failure, run.note};
    auto g = normalize(run.graph);
    auto bare = g;
    bare.blocks[0].select_items.clear();
    bare.blocks[0].group_by.reset();
    bare.blocks[0].having.reset();
    bare.blocks[0].order_by.reset();
    bare.blocks[0].limit.reset();
    if (bare != o)
      throw AttemptFailure{Outcome::ExecErr, "clause step altered the nested predicates"};
    if (v > 0 && g.blocks[0].aggregates() != needs_agg(v))
      throw AttemptFailure{Outcome::ExecErr, "SELECT does not fit the edge type"};
    return g;
  }

  std::optional<QueryGraph> try_repair(const QueryGraph& g, std::string& why) {
    RefineOptions opts;
    opts.budget = ctx_.cfg.refine_budget;
    opts.call_budget = ctx_.cfg.call_budget;
    opts.witnesses = ctx_.cfg.witnesses;
    opts.sample_rows = ctx_.cfg.sample_rows;
    opts.seed = next_seed();
    try {
      auto r = repair(g, ctx_.gateway, ctx_.db, opts);
      if (shape_of(r.graph) != shape_of(g)) {
        why = "repair changed the nesting shape";
        return std::nullopt;
      }
      return normalize(r.graph);
    } catch (const Error& e) {
      why = std::string("repair failed: ") + e.what();
      return std::nullopt;
    }
  }

  GenContext& ctx_;
  NestedStrategy strategy_;
  const NestedRequest& req_;
  std::uint64_t seed_;
  bool ideal_;
  std::uint64_t counter_ = 0;
  std::vector<std::vector<int>> kids_;
  std::vector<QueryGraph> pool_[2];
  std::set<std::size_t> consumed_[2];
  json edges_ = json::array();
};

}  // namespace

Generated generate_nested(GenContext& ctx, NestedStrategy strategy, const NestedRequest& request, std::uint64_t seed,
                          int slot) {
  if (request.shape.edges < 1) throw Error("nested generation needs a shape with at least one edge");
  auto* ledger = ctx.ledger();
  for (int a = 1; a <= ctx.cfg.max_attempts; ++a) {
    auto t0 = std::chrono::steady_clock::now();
    auto calls0 = ctx.gateway.calls();
    auto ideal0 = ctx.gateway.ideal_calls();
    NestedBuild build(ctx, strategy, request, splitmix(seed ^ splitmix(static_cast<std::uint64_t>(a))), a == 1);

    Outcome outcome = Outcome::Success;
    std::string note, sql;
    QueryGraph g;
    ResultSet rs;
    try {
      g = strategy == NestedStrategy::OneShotK ? build.one_shot() : build.post_order();
      sql = render_sql(g);
      rs = ctx.db.execute(sql, ctx.cfg.row_cap);
      if (yields_no_rows(ctx.db, g)) {
        outcome = Outcome::Empty;
      } else if (rs.truncated) {
        outcome = Outcome::ExecErr;
        note = "result exceeds the row cap";
      } else if (ctx.seen && !ctx.seen->insert(sql)) {
        outcome = Outcome::Duplicate;
      }
    } catch (const AttemptFailure& f) {
      outcome = f.outcome;
      note = f.note;
    } catch (const ExecError& e) {
      outcome = Outcome::ExecErr;
      note = e.what();
    } catch (const BudgetExhausted& e) {
      outcome = Outcome::ExecErr;
      note = e.what();
    } catch (const TransportError& e) {
      outcome = Outcome::ExecErr;
      note = e.what();
    }

    auto wall = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0);
    if (ledger) {
      ledger->classify(outcome);
      ledger->tick(wall);
    }
    if (ctx.manifest) {
      AttemptRecord r;
      r.strategy = to_string(strategy);
      r.seed = seed;
      r.slot = slot;
      r.attempt = a;
      r.sql = sql;
      r.classification = outcome;
      r.calls_used = ctx.gateway.calls() - calls0;
      r.ideal_calls_used = ctx.gateway.ideal_calls() - ideal0;
      r.wall_us = wall.count();
      r.note = note;
      r.edges = build.edges();
      ctx.manifest->write(r);
    }
    if (outcome == Outcome::Success) return Generated{g, sql, std::move(rs), a};
  }
  throw GenerationFailed("no usable nested query after " + std::to_string(ctx.cfg.max_attempts) + " attempts");
}

}  // namespace sparta
