#include "support/fixture.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include <unistd.h>

#include "sparta/executor.hpp"

namespace sparta::testing {

namespace fs = std::filesystem;

std::string fixture_dir() { return SPARTA_FIXTURE_DIR; }

std::string templates_path() { return fixture_dir() + "/nba_templates.json"; }

std::string make_db(const std::string& script, const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = fs::temp_directory_path() / ("sparta_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto path = dir / (tag + "_" + std::to_string(counter++) + ".db");
  fs::remove(path);
  Database db(path.string(), false);
  db.exec_script(script);
  return path.string();
}

const std::string& fixture_db() {
  static std::once_flag once;
  static std::string path;
  std::call_once(once, [] {
    std::ifstream in(fixture_dir() + "/nba_fixture.sql");
    std::stringstream ss;
    ss << in.rdbuf();
    path = make_db(ss.str(), "nba");
  });
  return path;
}

const Catalog& fixture_catalog() {
  static const Catalog c = [] {
    auto cat = load_catalog(fixture_db());
    cat.join_edges = infer_join_edges(cat);
    return designate_grounding(std::move(cat), {"game_stats", "team_game_stats"});
  }();
  return c;
}

}  // namespace sparta::testing
