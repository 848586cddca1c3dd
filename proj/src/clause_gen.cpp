#include "sparta/clause_gen.hpp"

#include <cmath>
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

struct KindInfo {
  ClauseKind kind;
  const char* name;
  const char* key;
  PromptKind prompt;
};

const std::vector<KindInfo>& kind_table() {
  static const std::vector<KindInfo> t = {
      {ClauseKind::From, "from", "from", PromptKind::FromClause},
      {ClauseKind::Where, "where", "where", PromptKind::WhereClause},
      {ClauseKind::GroupBy, "group_by", "group", PromptKind::GroupBy},
      {ClauseKind::Having, "having", "having", PromptKind::Having},
      {ClauseKind::SelectPlain, "select_plain", "select", PromptKind::SelectPlain},
      {ClauseKind::SelectAgg, "select_agg", "select", PromptKind::SelectAgg},
      {ClauseKind::OrderBy, "order_by", "order", PromptKind::OrderBy},
      {ClauseKind::Limit, "limit", "limit", PromptKind::Limit},
  };
  return t;
}

const KindInfo& info(ClauseKind k) {
  for (const auto& i : kind_table())
    if (i.kind == k) return i;
  throw Error("unknown clause kind");
}

const std::vector<std::string>& shape_labels() {
  static const std::vector<std::string> l = {"non-nested", "(1,1)", "(1,2)", "(1,3)", "(2,1)", "(2,2)", "(3,1)"};
  return l;
}

}  // namespace

std::string to_string(ClauseKind k) { return info(k).name; }

ClauseKind clause_kind_from_string(const std::string& s) {
  for (const auto& i : kind_table())
    if (s == i.name) return i.kind;
  throw Error("unknown clause kind '" + s + "'");
}

PromptKind prompt_kind(ClauseKind k) { return info(k).prompt; }
std::string clause_key(ClauseKind k) { return info(k).key; }

GenerationConfig GenerationConfig::defaults() {
  GenerationConfig c;
  c.shape_mix["non-nested"] = 5.0 / 11.0;
  for (std::size_t i = 1; i < shape_labels().size(); ++i) c.shape_mix[shape_labels()[i]] = 1.0 / 11.0;
  c.nesting_weights = {{NestingType::N, 0.578}, {NestingType::A, 0.643}, {NestingType::J, 0.324}, {NestingType::JA, 0.152}};
  return c;
}

void GenerationConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(name) + " must be within [0,1]");
  };
  prob(p_group_by, "p_group_by");
  prob(p_having, "p_having");
  prob(p_order_by, "p_order_by");
  prob(p_limit, "p_limit");
  prob(p_aggregation, "p_aggregation");
  if (p_having > p_group_by) throw Error("p_having cannot exceed p_group_by (HAVING needs GROUP BY)");
  if (p_limit > p_order_by) throw Error("p_limit cannot exceed p_order_by (LIMIT needs ORDER BY)");
  if (shape_mix.empty()) throw Error("shape_mix is empty");
  double sum = 0;
  for (const auto& [label, f] : shape_mix) {
    if (std::find(shape_labels().begin(), shape_labels().end(), label) == shape_labels().end())
      throw Error("unknown shape label '" + label + "'");
    if (f < 0) throw Error("negative shape fraction for " + label);
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("shape_mix sums to " + std::to_string(sum) + ", not 1");
  double w = 0;
  for (const auto& [t, x] : nesting_weights) {
    if (x < 0) throw Error("negative nesting weight for " + sparta::to_string(t));
    w += x;
  }
  if (w <= 0) throw Error("nesting_weights must have a positive entry");
  if (call_budget < 1 || refine_budget < 1 || max_attempts < 1 || one_shot_tries < 1)
    throw Error("budgets must be at least 1");
  if (clause_retries < 0 || discard_cap < 0) throw Error("retry caps cannot be negative");
  if (leaf_pool_factor < 1.0) throw Error("leaf_pool_factor must be at least 1");
  if (witnesses < 1) throw Error("witnesses must be at least 1");
}

GenerationConfig GenerationConfig::from_json(const json& j) {
  auto c = defaults();
  c.p_group_by = j.value("p_group_by", c.p_group_by);
  c.p_having = j.value("p_having", c.p_having);
  c.p_order_by = j.value("p_order_by", c.p_order_by);
  c.p_limit = j.value("p_limit", c.p_limit);
  c.p_aggregation = j.value("p_aggregation", c.p_aggregation);
  if (j.contains("shape_mix")) c.shape_mix = j["shape_mix"].get<std::map<std::string, double>>();
  if (j.contains("nesting_weights")) {
    c.nesting_weights.clear();
    for (const auto& [k, v] : j["nesting_weights"].items()) c.nesting_weights[nesting_type_from_string(k)] = v;
  }
  c.row_cap = j.value("row_cap", c.row_cap);
  c.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<std::int64_t>(c.timeout.count())));
  c.call_budget = j.value("call_budget", c.call_budget);
  c.clause_retries = j.value("clause_retries", c.clause_retries);
  c.refine_budget = j.value("refine_budget", c.refine_budget);
  c.discard_cap = j.value("discard_cap", c.discard_cap);
  c.one_shot_tries = j.value("one_shot_tries", c.one_shot_tries);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.witnesses = j.value("witnesses", c.witnesses);
  c.sample_rows = j.value("sample_rows", c.sample_rows);
  c.leaf_pool_factor = j.value("leaf_pool_factor", c.leaf_pool_factor);
  c.validate();
  return c;
}

json GenerationConfig::to_json() const {
  json w = json::object();
  for (const auto& [t, x] : nesting_weights) w[sparta::to_string(t)] = x;
  return json{{"p_group_by", p_group_by},
              {"p_having", p_having},
              {"p_order_by", p_order_by},
              {"p_limit", p_limit},
              {"p_aggregation", p_aggregation},
              {"shape_mix", shape_mix},
              {"nesting_weights", w},
              {"row_cap", row_cap},
              {"timeout_ms", timeout.count()},
              {"call_budget", call_budget},
              {"clause_retries", clause_retries},
              {"refine_budget", refine_budget},
              {"discard_cap", discard_cap},
              {"one_shot_tries", one_shot_tries},
              {"max_attempts", max_attempts},
              {"witnesses", witnesses},
              {"sample_rows", sample_rows},
              {"leaf_pool_factor", leaf_pool_factor}};
}

std::vector<ClauseKind> plan_clause_sequence(const GenerationConfig& cfg, std::uint64_t seed,
                                             std::optional<bool> group_by) {
  std::mt19937_64 rng(splitmix(seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto cond = [](double p, double parent) { return parent > 0 ? p / parent : 0.0; };
  std::vector<ClauseKind> steps{ClauseKind::From, ClauseKind::Where};
  bool drawn = u(rng) < cfg.p_group_by;
  if (group_by.value_or(drawn)) {
    steps.push_back(ClauseKind::GroupBy);
    if (u(rng) < cond(cfg.p_having, cfg.p_group_by)) steps.push_back(ClauseKind::Having);
  }
  steps.push_back(u(rng) < cfg.p_aggregation ? ClauseKind::SelectAgg : ClauseKind::SelectPlain);
  if (u(rng) < cfg.p_order_by) {
    steps.push_back(ClauseKind::OrderBy);
    if (u(rng) < cond(cfg.p_limit, cfg.p_order_by)) steps.push_back(ClauseKind::Limit);
  }
  return steps;
}

bool SeenSet::insert(const ResultFingerprint& fp) {
  std::lock_guard lock(mu_);
  return fps_.insert(fp).second;
}

bool SeenSet::insert(const std::string& sql) {
  std::lock_guard lock(mu_);
  return sqls_.insert(sql).second;
}

std::size_t SeenSet::size() const {
  std::lock_guard lock(mu_);
  return fps_.size() + sqls_.size();
}

GenContext::GenContext(const Catalog& c, Database& d, Gateway& g, GenerationConfig config, SeenSet* s,
                       ManifestWriter* m)
    : catalog(c), db(d), gateway(g), cfg(std::move(config)), seen(s), manifest(m) {
  cfg.validate();
  schema = schema_slot(catalog).dump();
  db.set_timeout(cfg.timeout);
}

std::string to_string(NonNestedStrategy s) {
  switch (s) {
    case NonNestedStrategy::OneShot: return "one_shot";
    case NonNestedStrategy::Clause: return "clause";
    case NonNestedStrategy::ExecutionGuided: return "execution_guided";
  }
  return "?";
}

NonNestedStrategy non_nested_strategy_from_string(const std::string& s) {
  for (auto k : {NonNestedStrategy::OneShot, NonNestedStrategy::Clause, NonNestedStrategy::ExecutionGuided})
    if (to_string(k) == s) return k;
  throw Error("unknown non-nested strategy '" + s + "'");
}

std::string rows_slot(const ResultSet& r, std::size_t n, std::uint64_t seed) {
  json rows = json::array();
  for (const auto& row : sample_witnesses(r, n, seed)) {
    json jr = json::array();
    for (const auto& v : row) jr.push_back(to_json(v));
    rows.push_back(jr);
  }
  return json{{"columns", r.columns}, {"rows", rows}}.dump();
}

ClauseRun run_clauses(GenContext& ctx, std::map<std::string, std::string>& clauses,
                      const std::vector<ClauseKind>& steps, bool feedback, const std::string& purpose, bool ideal,
                      std::uint64_t seed) {
  ClauseRun run;
  std::string last_rows;
  if (feedback && clauses.count("from")) {
    try {
      last_rows = rows_slot(ctx.db.execute(assemble_clauses(clauses), ctx.cfg.row_cap), ctx.cfg.sample_rows, seed);
    } catch (const Error& e) {
      run.note = e.what();
      return run;
    }
  }
  for (std::size_t s = 0; s < steps.size(); ++s) {
    auto step = steps[s];
    auto key = clause_key(step);
    std::string fb;
    bool accepted = false;
    int asks = feedback ? 1 + ctx.cfg.clause_retries : 1;
    for (int ask = 0; ask < asks && !accepted; ++ask) {
      json generated = clauses;
      Slots slots{{"database", ctx.schema},
                  {"generated_clauses", generated.dump()},
                  {"execution_result", last_rows},
                  {"feedback", fb},
                  {"purpose", purpose}};
      CallOptions call;
      call.budget = ctx.cfg.call_budget;
      call.ideal = ideal && ask == 0;
      std::string text;
      try {
        text = ctx.gateway.complete(prompt_kind(step), slots, call).text(key);
      } catch (const BudgetExhausted& e) {
        run.note = std::string(e.what());
        return run;
      } catch (const TransportError& e) {
        run.note = std::string(e.what());
        return run;
      }
      auto trial = clauses;
      trial[key] = text;
      QueryGraph g;
      try {
        g = parse_sql(assemble_clauses(trial));
      } catch (const ParseError& e) {
        run.note = to_string(step) + " clause does not parse: " + e.what();
        return run;
      }
      if (!feedback) {
        clauses = std::move(trial);
        accepted = true;
        break;
      }
      try {
        if (yields_no_rows(ctx.db, g)) {
          fb = "With this clause the query returns no rows:\n" + render_sql(g) +
               "\nWrite a less restrictive " + key + " clause.";
          continue;
        }
        last_rows = rows_slot(ctx.db.execute(render_sql(g), ctx.cfg.row_cap), ctx.cfg.sample_rows,
                              seed + s * 131 + static_cast<std::uint64_t>(ask));
      } catch (const ExecError& e) {
        run.note = std::string("execution failed: ") + e.what();
        return run;
      }
      clauses = std::move(trial);
      accepted = true;
    }
    if (!accepted) {
      run.failure = Outcome::Empty;
      run.note = to_string(step) + " clause kept emptying the result";
      return run;
    }
  }
  try {
    run.graph = parse_sql(assemble_clauses(clauses));
  } catch (const ParseError& e) {
    run.note = e.what();
    return run;
  }
  run.ok = true;
  return run;
}

Generated generate_non_nested(GenContext& ctx, NonNestedStrategy strategy, const std::vector<ClauseKind>& plan,
                              std::uint64_t seed, int slot) {
  auto* ledger = ctx.ledger();
  for (int a = 1; a <= ctx.cfg.max_attempts; ++a) {
    auto t0 = std::chrono::steady_clock::now();
    auto calls0 = ctx.gateway.calls();
    auto ideal0 = ctx.gateway.ideal_calls();
    std::uint64_t aseed = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(a)));
    bool ideal = a == 1;

    ClauseRun run;
    if (strategy == NonNestedStrategy::OneShot) {
      json names = json::array();
      for (auto k : plan) names.push_back(to_string(k));
      CallOptions call;
      call.budget = ctx.cfg.call_budget;
      call.ideal = ideal;
      try {
        auto text = ctx.gateway.complete(PromptKind::OneShot, {{"database", ctx.schema}, {"clauses", names.dump()}}, call)
                        .text("query");
        run.graph = parse_sql(text);
        run.ok = true;
      } catch (const ParseError& e) {
        run.note = std::string("query does not parse: ") + e.what();
      } catch (const BudgetExhausted& e) {
        run.note = e.what();
      } catch (const TransportError& e) {
        run.note = e.what();
      }
    } else {
      std::map<std::string, std::string> clauses;
      run = run_clauses(ctx, clauses, plan, strategy == NonNestedStrategy::ExecutionGuided, "query", ideal, aseed);
    }

    Outcome outcome = run.failure;
    std::string sql;
    ResultSet rs;
    if (run.ok) {
      sql = render_sql(run.graph);
      try {
        rs = ctx.db.execute(sql, ctx.cfg.row_cap);
        if (yields_no_rows(ctx.db, run.graph)) {
          outcome = Outcome::Empty;
        } else if (rs.truncated) {
          outcome = Outcome::ExecErr;
          run.note = "result exceeds the row cap";
        } else if (ctx.seen && !ctx.seen->insert(fingerprint(rs))) {
          outcome = Outcome::Duplicate;
        } else {
          outcome = Outcome::Success;
        }
      } catch (const ExecError& e) {
        outcome = Outcome::ExecErr;
        run.note = e.what();
      }
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
      r.note = run.note;
      ctx.manifest->write(r);
    }
    if (outcome == Outcome::Success) return Generated{run.graph, sql, std::move(rs), a};
  }
  throw GenerationFailed("no usable query after " + std::to_string(ctx.cfg.max_attempts) + " attempts");
}

}  // namespace sparta
