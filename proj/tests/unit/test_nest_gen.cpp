#include <doctest.h>

#include <filesystem>

#include "sparta/mock_provider.hpp"
#include "sparta/nest_gen.hpp"
#include "sparta/provenance.hpp"
#include "sparta/sql_parser.hpp"
#include "support/fixture.hpp"

using namespace sparta;
using nlohmann::json;

namespace {

struct Harness {
  Database db{sparta::testing::fixture_db()};
  CostLedger ledger;
  Gateway gw;
  SeenSet seen;
  std::string path;
  std::unique_ptr<ManifestWriter> manifest;
  GenContext ctx;

  Harness(std::shared_ptr<Provider> p, const std::string& tag, GenerationConfig cfg = GenerationConfig::defaults())
      : gw(std::move(p), &ledger),
        path((std::filesystem::temp_directory_path() / ("sparta_ng_" + tag + ".jsonl")).string()),
        manifest(std::make_unique<ManifestWriter>(path)),
        ctx(sparta::testing::fixture_catalog(), db, gw, std::move(cfg), &seen, manifest.get()) {}

  std::vector<AttemptRecord> records() {
    manifest.reset();
    ctx.manifest = nullptr;
    return read_manifest(path);
  }
};

NestedRequest request(int depth, int breadth, std::vector<NestingType> types, std::vector<ClauseKind> root = {}) {
  if (root.empty()) root = {ClauseKind::SelectPlain};
  return {shape_preset(depth, breadth), std::move(types), std::move(root)};
}

FailurePlan plan_of(const json& rules) { return FailurePlan::from_json(rules); }

}  // namespace

TEST_CASE("a (1,1) N request yields a two-block typed query") {
  Harness h(std::make_shared<MockProvider>(1), "n11");
  auto out = generate_nested(h.ctx, NestedStrategy::PostOrderProv, request(1, 1, {NestingType::N}), 7);
  CHECK(out.graph.blocks.size() == 2);
  REQUIRE(out.graph.edges.size() == 1);
  CHECK(out.graph.edges[0].type == NestingType::N);
  CHECK_FALSE(yields_no_rows(h.db, out.graph));
  CHECK(out.sql == render_sql(out.graph));
}

TEST_CASE("every preset shape comes out exactly") {
  Harness h(std::make_shared<MockProvider>(2), "shapes");
  const std::pair<int, int> presets[] = {{1, 1}, {1, 2}, {1, 3}, {2, 1}, {2, 2}, {3, 1}};
  std::uint64_t seed = 100;
  for (auto [d, b] : presets) {
    for (int rep = 0; rep < 2; ++rep) {
      auto req = make_request(h.ctx.cfg, shape_preset(d, b), ++seed);
      auto out = generate_nested(h.ctx, NestedStrategy::PostOrderProv, req, seed);
      CHECK(shape_of(out.graph) == shape_preset(d, b));
      for (std::size_t e = 0; e < out.graph.edges.size(); ++e) CHECK(out.graph.edges[e].type == req.edge_types[e]);
      CHECK_FALSE(yields_no_rows(h.db, out.graph));
    }
  }
  auto s = h.ledger.summary();
  CHECK(s.success_q == 12);
  CHECK(s.total_calls == s.ideal_calls + s.retries);
}

TEST_CASE("(2,2) has five blocks and four edges") {
  Harness h(std::make_shared<MockProvider>(3), "d22");
  auto req = request(2, 2, {NestingType::A, NestingType::N, NestingType::J, NestingType::JA});
  auto out = generate_nested(h.ctx, NestedStrategy::PostOrder, req, 5);
  auto s = shape_of(out.graph);
  CHECK(out.graph.blocks.size() == 5);
  CHECK(s.edges == 4);
  CHECK(s.depth == 2);
  CHECK(s.breadth == 2);
  std::vector<NestingType> got;
  for (const auto& e : out.graph.edges) got.push_back(e.type);
  CHECK(got == req.edge_types);
}

TEST_CASE("an emptied first wrap is repaired in place") {
  auto plan = plan_of(json::array({{{"action", "over_selective"}, {"stream", "nested"}, {"first", 1}}}));
  Harness h(std::make_shared<MockProvider>(4, plan), "prov");
  auto out = generate_nested(h.ctx, NestedStrategy::PostOrderProv, request(1, 1, {NestingType::N}), 9);
  auto recs = h.records();
  REQUIRE(recs.size() == 1);
  REQUIRE(recs[0].edges.size() == 1);
  CHECK(recs[0].edges[0]["repaired"] == true);
  CHECK(recs[0].edges[0]["discards"] == 0);
  CHECK_FALSE(yields_no_rows(h.db, out.graph));
  // The refinement is the only unplanned call; no leaf was rebuilt.
  CHECK(recs[0].calls_used - recs[0].ideal_calls_used == 1);
}

TEST_CASE("post-order without provenance discards and re-asks") {
  auto plan = plan_of(json::array({{{"action", "over_selective"}, {"stream", "nested"}, {"first", 1}}}));
  Harness h(std::make_shared<MockProvider>(4, plan), "po");
  auto out = generate_nested(h.ctx, NestedStrategy::PostOrder, request(1, 1, {NestingType::N}), 9);
  auto recs = h.records();
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].edges[0]["repaired"] == false);
  CHECK(recs[0].edges[0]["discards"] == 1);
  CHECK_FALSE(yields_no_rows(h.db, out.graph));
}

TEST_CASE("one-shot-k drafts the whole statement in one call") {
  Harness h(std::make_shared<MockProvider>(6), "osk");
  auto req = request(1, 2, {NestingType::N, NestingType::A});
  auto out = generate_nested(h.ctx, NestedStrategy::OneShotK, req, 2);
  CHECK(shape_of(out.graph) == shape_preset(1, 2));
  auto recs = h.records();
  // Two leaves of three clause calls plus the drafting call.
  CHECK(recs[0].ideal_calls_used == 7);
}

TEST_CASE("inner block selection") {
  auto sp = std::make_shared<ScriptedProvider>();
  Harness h(sp, "sel");
  std::vector<QueryGraph> cands = {parse_sql("SELECT player_name FROM nba_player_award"),
                                   parse_sql("SELECT team_name FROM nba_team_information"),
                                   parse_sql("SELECT player_name FROM nba_salary")};
  CHECK(select_inner_block(h.ctx, {cands[0]}, {}, NestingType::N, true) == 0);
  CHECK(select_inner_block(h.ctx, cands, {0, 2}, NestingType::N, true) == 1);
  CHECK(h.gw.calls() == 0);

  sp->push(PromptKind::InnerBlockSelection, R"({"inner_query_block": 7})");
  sp->push(PromptKind::InnerBlockSelection, R"({"inner_query_block": 1})");
  CHECK(select_inner_block(h.ctx, cands, {0}, NestingType::N, true) == 2);
  CHECK(h.gw.calls() == 2);

  for (int i = 0; i < 3; ++i) sp->push(PromptKind::InnerBlockSelection, R"({"inner_query_block": 5})");
  CHECK_THROWS_AS(select_inner_block(h.ctx, cands, {}, NestingType::N, false), BudgetExhausted);

  Harness m(std::make_shared<MockProvider>(12), "sel2");
  auto a = select_inner_block(m.ctx, cands, {}, NestingType::J, true);
  Harness m2(std::make_shared<MockProvider>(12), "sel3");
  CHECK(select_inner_block(m2.ctx, cands, {}, NestingType::J, true) == a);
}

TEST_CASE("wrapping an aggregate subquery gives an aggregate comparison") {
  Harness h(std::make_shared<MockProvider>(7), "wrapA");
  auto inner = parse_sql("SELECT AVG(salary) FROM nba_salary WHERE season = '2016-17'");
  auto g = wrap_with_outer(h.ctx, inner, NestingType::A);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].type == NestingType::A);
  CHECK(g.blocks[0].predicates.back().kind == PredKind::AggregateCompare);
  CHECK(subgraph(g, 1) == inner);
}

TEST_CASE("J wraps add exactly one correlation to the subquery") {
  Harness h(std::make_shared<MockProvider>(8), "wrapJ");
  auto inner = parse_sql("SELECT player_name FROM nba_player_award WHERE award = 'Most Valuable Player'");
  auto g = wrap_with_outer(h.ctx, inner, NestingType::J);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].type == NestingType::J);
  const auto& preds = g.blocks[1].predicates;
  REQUIRE(preds.size() == 2);
  CHECK(preds[1].kind == PredKind::CorrelationJoin);
  CHECK(render_sql(g).find(" = nba_player_award.") != std::string::npos);
}

TEST_CASE("wrap errors") {
  auto sp = std::make_shared<ScriptedProvider>();
  Harness h(sp, "wraperr");
  auto inner = parse_sql("SELECT player_name FROM nba_player_award WHERE season = '1900-01'");
  sp->push(PromptKind::OuterFrom, R"({"from": "FROM nba_salary"})");
  sp->push(PromptKind::NestedN,
           json{{"nested_predicate", "player_name IN (SELECT player_name FROM nba_player_award WHERE season = "
                                     "'1900-01')"},
                {"logical_operator", ""}}
               .dump());
  try {
    wrap_with_outer(h.ctx, inner, NestingType::N);
    FAIL("expected an emptiness error");
  } catch (const WrapError& e) {
    CHECK(e.reason == WrapError::Reason::Empty);
    CHECK(e.graph.blocks.size() == 2);
  }

  auto agg = parse_sql("SELECT AVG(salary) FROM nba_salary");
  sp->push(PromptKind::OuterFrom, R"({"from": "FROM nba_salary"})");
  sp->push(PromptKind::NestedJ,
           json{{"nested_predicate", "salary > (SELECT AVG(salary) FROM nba_salary)"}, {"logical_operator", "AND"}}
               .dump());
  try {
    wrap_with_outer(h.ctx, agg, NestingType::J);
    FAIL("expected a classification mismatch");
  } catch (const WrapError& e) {
    CHECK(e.reason == WrapError::Reason::Mismatch);
    CHECK(std::string(e.what()).find("classifies as A") != std::string::npos);
  }

  auto plain = parse_sql("SELECT player_name FROM nba_player_award");
  sp->push(PromptKind::OuterFrom, R"({"from": "FROM nba_salary"})");
  sp->push(PromptKind::NestedN,
           json{{"nested_predicate", "player_name IN (SELECT player_name FROM nba_player_award WHERE season = "
                                     "'2014-15')"},
                {"logical_operator", "AND"}}
               .dump());
  CHECK_THROWS_WITH_AS(wrap_with_outer(h.ctx, plain, NestingType::N), doctest::Contains("subquery was modified"),
                       WrapError);
}

TEST_CASE("nested duplicates are caught by SQL text") {
  Harness a(std::make_shared<MockProvider>(9), "dupa");
  auto req = request(1, 1, {NestingType::N});
  auto first = generate_nested(a.ctx, NestedStrategy::PostOrder, req, 1);
  CHECK_FALSE(a.seen.insert(first.sql));
  CHECK(a.ledger.summary().duplicate_q == 0);
}
