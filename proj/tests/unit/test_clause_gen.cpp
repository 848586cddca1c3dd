#include <doctest.h>

#include <filesystem>

#include "sparta/clause_gen.hpp"
#include "sparta/mock_provider.hpp"
#include "sparta/provenance.hpp"
#include "sparta/sql_parser.hpp"
#include "support/fixture.hpp"

using namespace sparta;
using nlohmann::json;

namespace {

GenerationConfig bare_config() {
  auto c = GenerationConfig::defaults();
  c.p_group_by = c.p_having = c.p_order_by = c.p_limit = c.p_aggregation = 0;
  return c;
}

FailurePlan plan_of(const json& rules) { return FailurePlan::from_json(rules); }

struct Harness {
  Database db{sparta::testing::fixture_db()};
  CostLedger ledger;
  Gateway gw;
  SeenSet seen;
  std::string manifest_path;
  std::unique_ptr<ManifestWriter> manifest;
  GenContext ctx;

  Harness(std::shared_ptr<Provider> p, GenerationConfig cfg, const std::string& tag)
      : gw(std::move(p), &ledger),
        manifest_path((std::filesystem::temp_directory_path() / ("sparta_cg_" + tag + ".jsonl")).string()),
        manifest(std::make_unique<ManifestWriter>(manifest_path)),
        ctx(sparta::testing::fixture_catalog(), db, gw, std::move(cfg), &seen, manifest.get()) {}

  std::vector<AttemptRecord> records() {
    manifest.reset();
    auto r = read_manifest(manifest_path);
    manifest = std::make_unique<ManifestWriter>(manifest_path + ".more");
    ctx.manifest = manifest.get();
    return r;
  }
};

}  // namespace

TEST_CASE("plans follow canonical clause order") {
  CHECK(plan_clause_sequence(bare_config(), 1) ==
        std::vector<ClauseKind>{ClauseKind::From, ClauseKind::Where, ClauseKind::SelectPlain});
  auto all = GenerationConfig::defaults();
  all.p_group_by = all.p_having = all.p_order_by = all.p_limit = all.p_aggregation = 1;
  CHECK(plan_clause_sequence(all, 5) ==
        std::vector<ClauseKind>{ClauseKind::From, ClauseKind::Where, ClauseKind::GroupBy, ClauseKind::Having,
                                ClauseKind::SelectAgg, ClauseKind::OrderBy, ClauseKind::Limit});
  auto no_group = all;
  no_group.p_group_by = no_group.p_having = 0;
  for (auto k : plan_clause_sequence(no_group, 9)) CHECK(k != ClauseKind::Having);
}

TEST_CASE("clause frequencies match the configured probabilities") {
  auto cfg = GenerationConfig::defaults();
  int group = 0, having = 0, order = 0, limit = 0, agg = 0;
  const int n = 10000;
  for (int s = 0; s < n; ++s) {
    for (auto k : plan_clause_sequence(cfg, static_cast<std::uint64_t>(s))) {
      group += k == ClauseKind::GroupBy;
      having += k == ClauseKind::Having;
      order += k == ClauseKind::OrderBy;
      limit += k == ClauseKind::Limit;
      agg += k == ClauseKind::SelectAgg;
    }
  }
  CHECK(group / double(n) == doctest::Approx(0.153).epsilon(0.02 / 0.153));
  CHECK(having / double(n) == doctest::Approx(0.034).epsilon(0.3));
  CHECK(order / double(n) == doctest::Approx(0.077).epsilon(0.2));
  CHECK(limit / double(n) == doctest::Approx(0.045).epsilon(0.25));
  CHECK(agg / double(n) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("config validation") {
  auto c = GenerationConfig::defaults();
  CHECK_NOTHROW(c.validate());
  double total = 0;
  for (const auto& [k, v] : c.shape_mix) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  auto bad = c;
  bad.p_group_by = 1.2;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.shape_mix["(1,1)"] += 0.01;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("sums to"), Error);
  bad = c;
  bad.p_having = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.shape_mix["(4,4)"] = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  auto round = GenerationConfig::from_json(c.to_json());
  CHECK(round.to_json() == c.to_json());
  CHECK(clause_kind_from_string("select_agg") == ClauseKind::SelectAgg);
  CHECK(non_nested_strategy_from_string("execution_guided") == NonNestedStrategy::ExecutionGuided);
}

TEST_CASE("clause strategy without retries spends one call per planned clause") {
  Harness h(std::make_shared<MockProvider>(11), bare_config(), "clean");
  auto plan = plan_clause_sequence(h.ctx.cfg, 0);
  auto out = generate_non_nested(h.ctx, NonNestedStrategy::Clause, plan, 1);
  auto recs = h.records();
  REQUIRE_FALSE(recs.empty());
  CHECK(recs.front().calls_used == static_cast<std::int64_t>(plan.size()));
  CHECK(recs.front().ideal_calls_used == static_cast<std::int64_t>(plan.size()));
  if (out.attempts == 1) CHECK(h.ledger.summary().total_calls == static_cast<std::int64_t>(plan.size()));
  CHECK_FALSE(out.result.empty());
  CHECK(out.graph.edges.empty());
}

TEST_CASE("execution-guided re-asks only the clause that emptied the result") {
  auto plan = plan_of(json::array({{{"action", "over_selective"}, {"kind", "where_clause"}, {"first", 1}}}));
  Harness h(std::make_shared<MockProvider>(2, plan), bare_config(), "eg");
  auto steps = plan_clause_sequence(h.ctx.cfg, 0);
  auto out = generate_non_nested(h.ctx, NonNestedStrategy::ExecutionGuided, steps, 3);
  auto s = h.ledger.summary();
  CHECK(out.attempts == 1);
  CHECK_FALSE(yields_no_rows(h.db, out.graph));
  CHECK(s.total_calls == s.ideal_calls + 1);
  CHECK(s.ideal_calls == static_cast<std::int64_t>(steps.size()));
  CHECK(s.empty_q == 0);
  CHECK(s.success_q == 1);
}

TEST_CASE("clause strategy keeps an over-selective WHERE and classifies it empty") {
  auto plan = plan_of(json::array({{{"action", "over_selective"}, {"kind", "where_clause"}, {"first", 1}}}));
  Harness h(std::make_shared<MockProvider>(2, plan), bare_config(), "clause_empty");
  auto steps = plan_clause_sequence(h.ctx.cfg, 0);
  auto out = generate_non_nested(h.ctx, NonNestedStrategy::Clause, steps, 3);
  auto s = h.ledger.summary();
  CHECK(out.attempts >= 2);
  CHECK(s.empty_q >= 1);
  auto recs = h.records();
  CHECK(recs.front().classification == Outcome::Empty);
  CHECK(replay_manifest(recs) == s);
}

TEST_CASE("one-shot duplicates are counted and discarded") {
  auto plan = plan_of(json::array({{{"action", "fixed_response"},
                                    {"kind", "one_shot"},
                                    {"first", 2},
                                    {"attempt", 0},
                                    {"response", json{{"query", "SELECT player_name FROM nba_salary WHERE salary "
                                                                "> 20000000"}}
                                                     .dump()}}}));
  Harness h(std::make_shared<MockProvider>(4, plan), bare_config(), "dup");
  auto steps = plan_clause_sequence(h.ctx.cfg, 0);
  auto first = generate_non_nested(h.ctx, NonNestedStrategy::OneShot, steps, 1, 0);
  CHECK(first.sql == "SELECT player_name FROM nba_salary WHERE salary > 20000000");
  auto second = generate_non_nested(h.ctx, NonNestedStrategy::OneShot, steps, 2, 1);
  CHECK(second.sql != first.sql);
  auto s = h.ledger.summary();
  CHECK(s.duplicate_q >= 1);
  CHECK(s.success_q == 2);
  CHECK(s.classified() == s.success_q + s.empty_q + s.duplicate_q + s.exec_err);
}

TEST_CASE("invalid SQL is an execution error") {
  auto plan = plan_of(json::array({{{"action", "invalid_sql"}, {"kind", "where_clause"}, {"first", 1}}}));
  Harness h(std::make_shared<MockProvider>(5, plan), bare_config(), "err");
  auto out = generate_non_nested(h.ctx, NonNestedStrategy::Clause, plan_clause_sequence(h.ctx.cfg, 0), 3);
  CHECK(h.ledger.summary().exec_err == 1);
  CHECK(out.attempts == 2);
}

TEST_CASE("execution guidance removes empty results that one-shot keeps") {
  auto plan = plan_of(json::array({{{"action", "over_selective"}, {"stream", "where"}, {"rate", 0.3}, {"attempt", 0}}}));
  auto cfg = GenerationConfig::defaults();
  Harness one(std::make_shared<MockProvider>(8, plan), cfg, "os");
  Harness eg(std::make_shared<MockProvider>(8, plan), cfg, "eg2");
  for (int i = 0; i < 12; ++i) {
    auto steps = plan_clause_sequence(cfg, static_cast<std::uint64_t>(i));
    generate_non_nested(one.ctx, NonNestedStrategy::OneShot, steps, 100 + i, i);
    auto g = generate_non_nested(eg.ctx, NonNestedStrategy::ExecutionGuided, steps, 100 + i, i);
    CHECK_FALSE(yields_no_rows(eg.db, g.graph));
  }
  CHECK(eg.ledger.summary().empty_q == 0);
  CHECK(one.ledger.summary().empty_q > 0);
  CHECK(replay_manifest(eg.records()) == eg.ledger.summary());
}
