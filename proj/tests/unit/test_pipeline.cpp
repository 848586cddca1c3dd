#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sparta/pipeline.hpp"
#include "sparta/verbalizer.hpp"
#include "support/fixture.hpp"

using namespace sparta;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

RunConfig fixture_run(const std::string& tag, std::size_t n = 22) {
  RunConfig c;
  c.out_dir = (fs::temp_directory_path() / ("sparta_pipe_" + tag)).string();
  fs::remove_all(c.out_dir);
  c.source = sparta::testing::fixture_dir() + "/nba_fixture.sql";
  c.templates = sparta::testing::templates_path();
  c.grounding = {"game_stats", "team_game_stats"};
  c.instances = n;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("largest remainder apportionment") {
  CHECK(largest_remainder({5.0 / 11, 1.0 / 11, 1.0 / 11, 1.0 / 11, 1.0 / 11, 1.0 / 11, 1.0 / 11}, 1100) ==
        std::vector<std::size_t>{500, 100, 100, 100, 100, 100, 100});
  auto s = largest_remainder({0.153, 0.847}, 1100);
  CHECK(s[0] == 168);
  CHECK(s[0] + s[1] == 1100);
  CHECK(largest_remainder({1, 1, 1}, 2) == std::vector<std::size_t>{1, 1, 0});
  CHECK(largest_remainder({}, 5).empty());
}

TEST_CASE("benchmark plans hit their quotas exactly") {
  auto cfg = GenerationConfig::defaults();
  auto slots = plan_benchmark(cfg, 1100, 42);
  REQUIRE(slots.size() == 1100);
  std::map<std::string, int> shapes;
  int groups = 0;
  for (const auto& s : slots) {
    ++shapes[s.shape];
    groups += s.group_by;
    bool planned_group = false;
    const auto& steps = s.nested ? s.nested->root_plan : s.plan;
    for (auto k : steps) planned_group |= k == ClauseKind::GroupBy;
    CHECK(planned_group == s.group_by);
    if (s.nested) CHECK(s.nested->shape.label() == s.shape);
  }
  CHECK(shapes["non-nested"] == 500);
  CHECK(shapes["(2,2)"] == 100);
  CHECK(groups == 168);
  auto again = plan_benchmark(cfg, 1100, 42);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    CHECK(again[i].shape == slots[i].shape);
    CHECK(again[i].seed == slots[i].seed);
  }
  auto other = plan_benchmark(cfg, 1100, 43);
  int same = 0;
  for (std::size_t i = 0; i < slots.size(); ++i) same += other[i].shape == slots[i].shape;
  CHECK(same < 1100);
}

TEST_CASE("run config parsing and validation") {
  auto j = json{{"seed", 7},
                {"source", "db.sql"},
                {"out_dir", "out"},
                {"workers", 2},
                {"nested_strategies", {"post_order", "one_shot_k"}},
                {"generation", {{"p_group_by", 0.2}}}};
  auto c = RunConfig::from_json(j, "/base");
  CHECK(c.seed == 7);
  CHECK(c.source == "/base/db.sql");
  CHECK(c.out_dir == "/base/out");
  CHECK(c.gen.p_group_by == doctest::Approx(0.2));
  CHECK_NOTHROW(c.validate());
  auto round = RunConfig::from_json(c.to_json());
  CHECK(round.to_json() == c.to_json());

  auto bad = c;
  bad.provider = "oracle";
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.nested_strategies = {"bottom_up"};
  CHECK_THROWS_AS(bad.validate(), UsageError);
  bad = c;
  bad.gen.p_having = 0.9;
  CHECK_THROWS_AS(bad.validate(), UsageError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"seed", "x"}}), UsageError);
  CHECK_THROWS_AS(RunConfig::from_json(json::array()), UsageError);
}

TEST_CASE("stages refuse to run without their inputs") {
  auto c = fixture_run("missing");
  CHECK_THROWS_WITH_AS(generate(c), doctest::Contains("build-db"), UsageError);
  CHECK_THROWS_WITH_AS(verbalize_stage(c), doctest::Contains("gen"), UsageError);
  CHECK_THROWS_AS(finalize(c), UsageError);
  auto none = c;
  none.source = "/nonexistent/x.sql";
  CHECK_THROWS_AS(build_db(none), UsageError);
}

TEST_CASE("the mock pipeline is reproducible end to end") {
  std::string first;
  for (int run = 0; run < 2; ++run) {
    auto c = fixture_run("repro");
    auto b = build_db(c);
    CHECK(b.tables == 9);
    CHECK(b.passages.emitted > 0);
    auto runs = generate(c);
    REQUIRE(runs.size() == 2);
    std::size_t emitted = 0;
    for (const auto& r : runs) {
      emitted += r.emitted;
      CHECK(r.failed == 0);
      CHECK(r.ledger.total_calls == r.ledger.ideal_calls + r.ledger.retries);
    }
    CHECK(emitted == 22);
    CHECK(verbalize_stage(c) == 22);

    std::istringstream none("q\n");
    std::ostringstream log;
    CHECK(audit_stage(c, none, log) == 0);
    auto f = finalize(c, true);
    CHECK(f.exported == 22);
    auto text = slurp(RunPaths(c.out_dir).benchmark());
    CHECK_FALSE(text.empty());
    if (run == 0) first = text;
    else CHECK(text == first);

    auto rep = report(c);
    CHECK(rep["distribution"]["n"] == 22);
    CHECK(rep["naturalness"]["n"] == 22);
    CHECK(fs::exists(RunPaths(c.out_dir).report_dir() + "/cost.txt"));
  }
}

TEST_CASE("audit verdicts drive finalize") {
  auto c = fixture_run("audit", 11);
  build_db(c);
  generate(c);
  verbalize_stage(c);
  std::istringstream in("a\nr\nc\nWhat is asked here\nq\n");
  std::ostringstream out;
  CHECK(audit_stage(c, in, out) == 3);
  auto f = finalize(c);
  CHECK(f.exported == 2);
  CHECK(f.rejected == 1);
  CHECK(f.pending == 8);
  auto bench = read_instances(RunPaths(c.out_dir).benchmark());
  REQUIRE(bench.size() == 2);
  CHECK(bench[1].question == "What is asked here?");

  std::istringstream rest("");
  std::ostringstream log;
  audit_stage(c, rest, log);
  CHECK(log.str().find("[1/8]") != std::string::npos);
}

TEST_CASE("the nested strategy matrix yields one ledger per strategy") {
  auto c = fixture_run("matrix", 11);
  c.nested_strategies = {"post_order_prov", "post_order", "one_shot_k"};
  c.non_nested_strategies = {"execution_guided", "clause", "one_shot"};
  build_db(c);
  auto runs = generate(c);
  REQUIRE(runs.size() == 6);
  RunPaths p(c.out_dir);
  for (const auto& r : runs) {
    CHECK(fs::exists(p.ledger(r.strategy)));
    CHECK(replay_manifest(read_manifest(p.manifest(r.strategy))) == r.ledger);
  }
  auto generated = read_instances(p.generated());
  CHECK(generated.size() == 11);
  for (const auto& b : generated) CHECK((b.strategy == "execution_guided" || b.strategy == "post_order_prov"));
  auto rep = report(c, false);
  CHECK(rep["cost"].size() == 6);
  CHECK(rep["cost_table"].get<std::string>().find("one_shot_k") != std::string::npos);
}
