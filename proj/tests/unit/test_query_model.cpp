#include <doctest.h>

#include "sparta/catalog.hpp"
#include "sparta/query_model.hpp"
#include "support/fixture.hpp"

using namespace sparta;

namespace {

Predicate cmp(const std::string& col, CmpOp op, Value v, Connector c = Connector::None) {
  Predicate p;
  p.column = col;
  p.op = op;
  p.literal = std::move(v);
  p.connector = c;
  return p;
}

Predicate corr(const std::string& outer, const std::string& inner) {
  Predicate p;
  p.kind = PredKind::CorrelationJoin;
  p.outer_column = outer;
  p.column = inner;
  p.connector = Connector::And;
  return p;
}

QueryBlock block(const std::string& table, std::vector<SelectItem> sel, std::vector<Predicate> preds = {}) {
  QueryBlock b;
  b.from_table = table;
  b.select_items = std::move(sel);
  b.predicates = std::move(preds);
  return b;
}

Predicate membership(const std::string& col) {
  Predicate p;
  p.kind = PredKind::Membership;
  p.column = col;
  return p;
}

}  // namespace

TEST_CASE("single block renders select, from and where") {
  auto g = single_block(block("nba_player_information", {{AggFn::None, "birthplace"}},
                              {cmp("birthplace", CmpOp::Ne, std::string("Chicago, Illinois"))}));
  auto sql = render_sql(g);
  CHECK(sql == "SELECT birthplace FROM nba_player_information WHERE birthplace <> 'Chicago, Illinois'");
  CHECK(sql.rfind("SELECT birthplace FROM nba_player_information WHERE ", 0) == 0);
  CHECK(render_sql(g) == sql);
}

TEST_CASE("block without predicates has no WHERE") {
  auto g = single_block(block("nba_salary", {{AggFn::None, "player_name"}}));
  CHECK(render_sql(g) == "SELECT player_name FROM nba_salary");
  auto star = single_block(block("nba_salary", {}));
  CHECK(render_sql(star) == "SELECT * FROM nba_salary");
}

TEST_CASE("type A graph renders the aggregate subquery at the predicate site") {
  auto inner = single_block(block("nba_salary", {{AggFn::Avg, "salary"}},
                                  {cmp("season", CmpOp::Eq, std::string("2016-17"))}));
  Predicate p;
  p.kind = PredKind::AggregateCompare;
  p.column = "salary";
  p.op = CmpOp::Gt;
  auto g = attach(single_block(block("nba_salary", {{AggFn::None, "player_name"}})), p, inner);
  auto sql = render_sql(g);
  CHECK(sql.find("salary > (SELECT AVG(") != std::string::npos);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].type == NestingType::A);
}

TEST_CASE("correlation uses an alias when the outer table recurs below") {
  auto inner = single_block(block("nba_salary", {{AggFn::None, "team_name"}},
                                  {cmp("season", CmpOp::Eq, std::string("2016-17")), corr("player_name", "player_name")}));
  auto outer = single_block(block("nba_salary", {{AggFn::None, "player_name"}}));
  auto g = attach(outer, membership("team_name"), inner);
  CHECK(render_sql(g) ==
        "SELECT player_name FROM nba_salary AS t1 WHERE team_name IN (SELECT team_name FROM nba_salary "
        "WHERE season = '2016-17' AND t1.player_name = nba_salary.player_name)");
  CHECK(g.edges[0].type == NestingType::J);

  auto other = attach(single_block(block("nba_player_award", {{AggFn::None, "award"}})), membership("player_name"),
                      single_block(block("nba_salary", {{AggFn::None, "player_name"}},
                                         {cmp("salary", CmpOp::Gt, std::int64_t{1}), corr("player_name", "player_name")})));
  CHECK(render_sql(other).find("nba_player_award.player_name = nba_salary.player_name") != std::string::npos);
}

TEST_CASE("subtree text is identical embedded and standalone") {
  auto leaf = single_block(block("nba_salary", {{AggFn::None, "player_name"}},
                                 {cmp("salary", CmpOp::Gt, std::int64_t{1000000})}));
  auto mid = attach(single_block(block("nba_salary", {{AggFn::None, "team_name"}})), membership("player_name"), leaf);
  auto top = attach(single_block(block("nba_team_information", {{AggFn::None, "city"}})), membership("team_name"), mid);
  auto mid_sql = render_sql(mid);
  CHECK(render_sql(top).find(mid_sql) != std::string::npos);
  CHECK(render_sql(subgraph(top, 1)) == mid_sql);
}

TEST_CASE("invariant violations name the block") {
  auto g = single_block(block("nba_salary", {{AggFn::None, "player_name"}}));
  g.blocks[0].having = cmp("salary", CmpOp::Gt, std::int64_t{1});
  CHECK_THROWS_WITH(render_sql(g), doctest::Contains("block 0"));
  auto h = single_block(block("nba_salary", {{AggFn::None, "player_name"}},
                              {cmp("a", CmpOp::Eq, std::int64_t{1}), cmp("b", CmpOp::Eq, std::int64_t{1})}));
  CHECK_THROWS(render_sql(h));
  auto c = single_block(block("nba_salary", {{AggFn::None, "player_name"}}, {corr("x", "y")}));
  c.blocks[0].predicates[0].connector = Connector::None;
  CHECK_THROWS_WITH(render_sql(c), doctest::Contains("correlation"));
}

TEST_CASE("shape_of measures depth, breadth and edges") {
  auto leaf = [] { return single_block(block("nba_salary", {{AggFn::None, "player_name"}})); };
  auto s0 = shape_of(leaf());
  CHECK(s0.depth == 0);
  CHECK(s0.breadth == 0);
  CHECK(s0.edges == 0);

  auto root = leaf();
  for (int i = 0; i < 3; ++i) root = attach(root, membership("player_name"), leaf());
  auto s1 = shape_of(root);
  CHECK(s1.depth == 1);
  CHECK(s1.breadth == 3);
  CHECK(s1.edges == 3);
  CHECK(s1 == shape_preset(1, 3));

  auto chain = leaf();
  for (int i = 0; i < 3; ++i) chain = attach(leaf(), membership("player_name"), chain);
  auto s2 = shape_of(chain);
  CHECK(s2.depth == 3);
  CHECK(s2.breadth == 1);
  CHECK(s2.edges == 3);
  CHECK(s2 == shape_preset(3, 1));
}

TEST_CASE("presets expand to breadth chains of length depth") {
  for (int d = 1; d <= 3; ++d)
    for (int b = 1; b <= 3; ++b) {
      auto s = shape_preset(d, b);
      CHECK(s.edges == d * b);
      CHECK(static_cast<int>(s.parents.size()) == d * b);
      // Build the tree from the template and measure it independently.
      std::vector<int> depth(s.parents.size() + 1, 0), degree(s.parents.size() + 1, 0);
      int maxd = 0, maxb = 0;
      for (std::size_t i = 0; i < s.parents.size(); ++i) {
        depth[i + 1] = depth[s.parents[i]] + 1;
        maxd = std::max(maxd, depth[i + 1]);
        maxb = std::max(maxb, ++degree[s.parents[i]]);
      }
      CHECK(maxd == d);
      CHECK(maxb == b);
    }
  CHECK(shape_preset(2, 2).parents == std::vector<int>{0, 1, 0, 3});
  CHECK_THROWS(shape_preset(1, 0));
}

TEST_CASE("nesting classification follows the two-bit grid") {
  auto outer = block("nba_salary", {{AggFn::None, "player_name"}});
  auto plain = block("nba_salary", {{AggFn::None, "player_name"}}, {cmp("salary", CmpOp::Gt, std::int64_t{1})});
  auto agg = block("nba_salary", {{AggFn::Avg, "salary"}}, {cmp("season", CmpOp::Eq, std::string("2016-17"))});
  auto plain_corr = plain;
  plain_corr.predicates.push_back(corr("team_name", "team_name"));
  auto agg_corr = agg;
  agg_corr.predicates.push_back(corr("team_name", "team_name"));

  CHECK(classify_nesting(outer, plain) == NestingType::N);
  CHECK(classify_nesting(outer, agg) == NestingType::A);
  CHECK(classify_nesting(outer, plain_corr) == NestingType::J);
  CHECK(classify_nesting(outer, agg_corr) == NestingType::JA);

  // Flipping one bit moves along one axis of the grid.
  auto flip_agg = [](QueryBlock b) {
    if (b.aggregates()) b.select_items = {{AggFn::None, "player_name"}};
    else b.select_items = {{AggFn::Max, "salary"}};
    return b;
  };
  auto flip_corr = [](QueryBlock b) {
    if (b.has_correlation()) b.predicates.pop_back();
    else b.predicates.push_back(corr("team_name", "team_name"));
    return b;
  };
  auto toggle_agg = [](NestingType t) {
    switch (t) {
      case NestingType::N: return NestingType::A;
      case NestingType::A: return NestingType::N;
      case NestingType::J: return NestingType::JA;
      default: return NestingType::J;
    }
  };
  auto toggle_corr = [](NestingType t) {
    switch (t) {
      case NestingType::N: return NestingType::J;
      case NestingType::J: return NestingType::N;
      case NestingType::A: return NestingType::JA;
      default: return NestingType::A;
    }
  };
  for (const auto& b : {plain, agg, plain_corr, agg_corr}) {
    auto t = classify_nesting(outer, b);
    CHECK(classify_nesting(outer, flip_agg(b)) == toggle_agg(t));
    CHECK(classify_nesting(outer, flip_corr(b)) == toggle_corr(t));
  }
}

TEST_CASE("hop modality depends on grounding endpoints") {
  const auto& cat = sparta::testing::fixture_catalog();
  auto leaf = [](const std::string& t, const std::string& c) { return single_block(block(t, {{AggFn::None, c}})); };
  auto cross = attach(leaf("nba_salary", "player_name"), membership("player_name"), leaf("game_stats", "player_name"));
  CHECK(classify_hops(cross, cat) == std::vector<HopModality>{HopModality::CrossModal});
  auto uni = attach(leaf("nba_salary", "player_name"), membership("player_name"), leaf("nba_player_award", "player_name"));
  CHECK(classify_hops(uni, cat) == std::vector<HopModality>{HopModality::UniModal});

  // Hand-labelled mixed graph: award <- salary <- game_stats, award <- team_game_stats.
  auto chain = attach(leaf("nba_salary", "player_name"), membership("player_name"), leaf("game_stats", "player_name"));
  auto g = attach(leaf("nba_player_award", "player_name"), membership("player_name"), chain);
  g = attach(g, membership("season"), leaf("team_game_stats", "game_date"));
  // Pre-order edges: 0->1 (award->salary), 1->2 (salary->game_stats), 0->3 (award->team_game_stats).
  CHECK(classify_hops(g, cat) ==
        std::vector<HopModality>{HopModality::UniModal, HopModality::CrossModal, HopModality::CrossModal});
  auto bad = leaf("nowhere", "x");
  bad = attach(bad, membership("x"), leaf("nba_salary", "player_name"));
  CHECK_THROWS(classify_hops(bad, cat));
}

TEST_CASE("operator profile flags constructs in any block") {
  auto g = single_block(block("nba_salary", {{AggFn::None, "player_name"}}, {cmp("salary", CmpOp::Gt, std::int64_t{1})}));
  auto p = operator_profile(g);
  CHECK(p.where);
  CHECK_FALSE(p.group_by);
  CHECK_FALSE(p.having);
  CHECK_FALSE(p.order_by);
  CHECK_FALSE(p.limit);
  CHECK_FALSE(p.aggregation);

  auto grouped = block("nba_salary", {{AggFn::None, "team_name"}, {AggFn::Count, "*"}});
  grouped.group_by = "team_name";
  Predicate h = cmp("*", CmpOp::Gt, std::int64_t{2});
  h.agg = AggFn::Count;
  grouped.having = h;
  auto gp = operator_profile(single_block(grouped));
  CHECK(gp.group_by);
  CHECK(gp.having);

  auto inner = single_block(block("nba_salary", {{AggFn::Avg, "salary"}}));
  Predicate ac;
  ac.kind = PredKind::AggregateCompare;
  ac.column = "salary";
  ac.op = CmpOp::Gt;
  auto typea = attach(single_block(block("nba_salary", {{AggFn::None, "player_name"}})), ac, inner);
  CHECK(operator_profile(typea).aggregation);
}

TEST_CASE("graph json round trip") {
  auto inner = single_block(block("nba_salary", {{AggFn::Avg, "salary"}},
                                  {cmp("season", CmpOp::Eq, std::string("2016-17")), corr("team_name", "team_name")}));
  Predicate ac;
  ac.kind = PredKind::AggregateCompare;
  ac.column = "salary";
  ac.op = CmpOp::Ge;
  auto outer = block("nba_salary", {{AggFn::None, "player_name"}}, {cmp("salary", CmpOp::Lt, 1.5)});
  outer.order_by = OrderBy{{AggFn::None, "player_name"}, true};
  outer.limit = 3;
  auto g = attach(single_block(outer), ac, inner);
  auto back = graph_from_json(to_json(g));
  CHECK(back == g);
  CHECK(render_sql(back) == render_sql(g));
}
