#include <doctest.h>

#include "sparta/executor.hpp"
#include "sparta/llm_gateway.hpp"
#include "sparta/metrics.hpp"
#include "sparta/mock_provider.hpp"
#include "sparta/provenance.hpp"
#include "sparta/sql_parser.hpp"
#include "support/fixture.hpp"

using namespace sparta;
using nlohmann::json;

namespace {

const char* kSuns =
    "SELECT player_name FROM nba_salary WHERE team_name = 'Phoenix Suns' AND season = '2016-17' AND salary > 800000";

Database fixture() { return Database(sparta::testing::fixture_db()); }

}  // namespace

TEST_CASE("peeling stops at the first non-empty survivor") {
  auto db = fixture();
  auto g = parse_sql(kSuns);
  CHECK(yields_no_rows(db, g));
  auto peel = peel_until_nonempty(g, db);
  REQUIRE(peel.peeled.size() == 1);
  CHECK(peel.peeled[0] == PredicateRef{2, false});
  CHECK(render_sql(peel.survivor) ==
        "SELECT player_name FROM nba_salary WHERE team_name = 'Phoenix Suns' AND season = '2016-17'");

  auto ok = parse_sql("SELECT player_name FROM nba_salary WHERE salary > 1");
  CHECK(peel_until_nonempty(ok, db).peeled.empty());
}

TEST_CASE("HAVING is peeled before WHERE predicates") {
  auto db = fixture();
  auto g = parse_sql(
      "SELECT team_name, COUNT(*) FROM nba_salary WHERE season = '2016-17' GROUP BY team_name HAVING COUNT(*) >= 50");
  auto peel = peel_until_nonempty(g, db);
  REQUIRE(peel.peeled.size() == 1);
  CHECK(peel.peeled[0].having);
  auto report = blame(g, peel, db, 3, 7);
  REQUIRE(report.blocking);
  CHECK(report.blocking->having);
  CHECK(report.blocking_text == "HAVING COUNT(*) >= 50");
  for (const auto& v : report.witness_values) CHECK((as_double(v) == 4 || as_double(v) == 2));
}

TEST_CASE("nested predicates peel as one unit") {
  auto db = fixture();
  auto g = parse_sql(
      "SELECT player_name FROM nba_salary WHERE season = '2016-17' AND player_name IN (SELECT player_name FROM "
      "nba_player_award WHERE season = '1900-01')");
  auto peel = peel_until_nonempty(g, db);
  REQUIRE(peel.peeled.size() == 1);
  CHECK(peel.survivor.blocks.size() == 1);
  auto report = blame(g, peel, db);
  REQUIRE(report.blocking);
  CHECK(report.blocking->index == 1);
  CHECK(report.blocking_text.find("IN (SELECT") != std::string::npos);
}

TEST_CASE("blame samples witnesses and names the unanimous culprit") {
  auto db = fixture();
  auto g = parse_sql(kSuns);
  auto report = blame(g, peel_until_nonempty(g, db), db, 3, 1);
  CHECK(report.witnesses.size() == 2);  // only two rows survive
  REQUIRE(report.blocking);
  CHECK(report.blocking_text == "salary > 800000");
  std::vector<double> vals;
  for (const auto& v : report.witness_values) vals.push_back(as_double(v));
  std::sort(vals.begin(), vals.end());
  CHECK(vals == std::vector<double>{650000, 700000});
  auto j = report.to_json(g);
  CHECK(j["blocking"]["index"] == 2);
  CHECK(j["witnesses"]["columns"][0] == "player_name");
  for (const auto& c : report.culprits) CHECK(c.size() == 1);
}

TEST_CASE("split blame raises no unanimous culprit") {
  auto db = fixture();
  auto g = parse_sql(kSuns);
  PeelResult all;
  all.survivor = parse_sql("SELECT player_name FROM nba_salary");
  all.peeled = {{2, false}, {1, false}, {0, false}};
  try {
    blame(g, all, db, 500, 3);
    FAIL("expected NoUnanimousCulprit");
  } catch (const NoUnanimousCulprit& e) {
    CHECK(std::string(e.what()).find("no unanimous culprit") != std::string::npos);
    CHECK(e.report.witnesses.size() == 118);
    CHECK_FALSE(e.report.blocking);
  }
}

TEST_CASE("point evaluation matches direct filtering") {
  auto db = fixture();
  auto g = parse_sql(kSuns);
  auto rows = db.execute("SELECT rowid, salary FROM nba_salary");
  auto context = parse_sql("SELECT * FROM nba_salary");
  for (const auto& r : rows.rows) {
    auto id = static_cast<std::int64_t>(as_double(r[0]));
    CHECK(satisfies(db, g, {2, false}, id, context) == (as_double(r[1]) > 800000));
  }
}

TEST_CASE("refinement relaxes salary > 800000 to salary > 600000") {
  auto db = fixture();
  CostLedger ledger;
  Gateway gw(std::make_shared<MockProvider>(0), &ledger);
  auto fixed = repair(parse_sql(kSuns), gw, db);
  CHECK(render_sql(fixed.graph) ==
        "SELECT player_name FROM nba_salary WHERE team_name = 'Phoenix Suns' AND season = '2016-17' AND salary > "
        "600000");
  CHECK(fixed.rounds == 1);
  CHECK_FALSE(yields_no_rows(db, fixed.graph));
  CHECK(ledger.summary().total_calls == 1);
  CHECK(ledger.summary().ideal_calls == 0);
}

TEST_CASE("HAVING refinement uses group aggregates") {
  auto db = fixture();
  Gateway gw(std::make_shared<MockProvider>(0));
  auto g = parse_sql(
      "SELECT team_name, COUNT(*) FROM nba_salary WHERE season = '2016-17' GROUP BY team_name HAVING COUNT(*) >= 50");
  auto fixed = repair(g, gw, db);
  CHECK_FALSE(yields_no_rows(db, fixed.graph));
  CHECK(fixed.graph.blocks[0].predicates == g.blocks[0].predicates);
}

TEST_CASE("edits outside the blamed predicate are rejected") {
  auto db = fixture();
  auto g = parse_sql(kSuns);
  auto report = blame(g, peel_until_nonempty(g, db), db);
  auto sp = std::make_shared<ScriptedProvider>();
  // Drops the season filter instead of touching the salary bound.
  sp->push(PromptKind::ProvenanceRefine,
           json{{"corrected_query",
                 "SELECT player_name FROM nba_salary WHERE team_name = 'Phoenix Suns' AND season = '2015-16' AND "
                 "salary > 800000"}}
               .dump());
  Gateway gw(sp);
  RefineOptions opts;
  opts.budget = 1;
  opts.call_budget = 1;
  CHECK_THROWS_WITH_AS(refine(g, report, gw, db, opts), doctest::Contains("budget exhausted"), RefineError);

  auto changed = parse_sql(
      "SELECT player_name FROM nba_salary WHERE team_name = 'Phoenix Suns' AND season = '2015-16' AND salary > 1");
  CHECK(locality_violation(g, changed, {2, false}) == "text outside the blamed predicate changed");
  auto good = parse_sql(
      "SELECT player_name FROM nba_salary WHERE team_name = 'Phoenix Suns' AND season = '2016-17' AND salary >= 1");
  CHECK(locality_violation(g, good, {2, false}).empty());
  auto other_select = parse_sql(
      "SELECT team_name FROM nba_salary WHERE team_name = 'Phoenix Suns' AND season = '2016-17' AND salary > 1");
  CHECK_FALSE(locality_violation(g, other_select, {2, false}).empty());
}

TEST_CASE("a refinement that keeps the query empty is re-diagnosed") {
  auto db = fixture();
  auto g = parse_sql(kSuns);
  auto report = blame(g, peel_until_nonempty(g, db), db);
  auto sp = std::make_shared<ScriptedProvider>(std::make_shared<MockProvider>(3));
  sp->push(PromptKind::ProvenanceRefine,
           json{{"corrected_query",
                 "SELECT player_name FROM nba_salary WHERE team_name = 'Phoenix Suns' AND season = '2016-17' AND "
                 "salary > 750000"}}
               .dump());
  Gateway gw(sp);
  auto fixed = refine(g, report, gw, db);
  CHECK(fixed.rounds == 2);
  CHECK(fixed.reports.size() == 2);
  CHECK(render_sql(fixed.graph).find("salary > 600000") != std::string::npos);
}

TEST_CASE("dropping a correlation is not local") {
  auto before = parse_sql(
      "SELECT team_name FROM nba_team_information WHERE EXISTS (SELECT * FROM nba_salary WHERE "
      "nba_team_information.team_name = nba_salary.team_name AND salary > 90000000)");
  auto after = parse_sql(
      "SELECT team_name FROM nba_team_information WHERE EXISTS (SELECT * FROM nba_salary WHERE salary > 1)");
  CHECK_FALSE(locality_violation(before, after, {0, false}).empty());
  auto kept = parse_sql(
      "SELECT team_name FROM nba_team_information WHERE EXISTS (SELECT * FROM nba_salary WHERE "
      "nba_team_information.team_name = nba_salary.team_name AND salary > 1)");
  CHECK(locality_violation(before, kept, {0, false}).empty());
}
