#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "sparta/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUser = 1, kInternal = 2 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> provider;
  std::optional<std::string> out_dir;

  sparta::RunConfig load() const {
    auto c = sparta::RunConfig::load(config);
    if (seed) c.seed = *seed;
    if (workers) c.workers = *workers;
    if (provider) c.provider = *provider;
    if (out_dir) c.out_dir = *out_dir;
    c.validate();
    return c;
  }
};

void print_runs(const std::vector<sparta::StrategyRun>& runs) {
  std::vector<std::pair<std::string, sparta::LedgerSummary>> rows;
  for (const auto& r : runs) {
    rows.emplace_back(r.strategy, r.ledger);
    std::cout << r.strategy << ": " << r.emitted << " emitted, " << r.failed << " failed\n";
  }
  std::cout << sparta::render_summary_table(rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark construction pipeline: reference database, query generation, verbalization, review"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Override the run seed");
  app.add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--provider", o.provider, "Model provider")->check(CLI::IsMember({"http", "mock"}));
  app.add_option("--out-dir", o.out_dir, "Artifact directory");

  auto* build = app.add_subcommand("build-db", "Build the reference database, catalog and passages");
  auto* gen = app.add_subcommand("gen", "Generate queries with every configured strategy");
  auto* verb = app.add_subcommand("verbalize", "Write questions and gold answers as pending instances");
  auto* audit = app.add_subcommand("audit", "Review pending instances in the terminal");
  auto* fin = app.add_subcommand("finalize", "Apply verdicts and write benchmark.jsonl");
  bool approve = false;
  fin->add_flag("--approve-pending", approve, "Treat instances without a verdict as approved");
  auto* rep = app.add_subcommand("report", "Cost, distribution and naturalness reports");
  bool skip_nat = false;
  rep->add_flag("--no-naturalness", skip_nat, "Skip the grader pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUser;
  }

  try {
    auto cfg = o.load();
    if (build->parsed()) {
      auto s = sparta::build_db(cfg);
      std::cout << "tables: " << s.tables << ", join edges: " << s.join_edges << ", passages: " << s.passages.emitted
                << " (" << s.passages.skipped << " skipped)\n";
    } else if (gen->parsed()) {
      print_runs(sparta::generate(cfg));
    } else if (verb->parsed()) {
      std::cout << sparta::verbalize_stage(cfg) << " instances pending review\n";
    } else if (audit->parsed()) {
      auto n = sparta::audit_stage(cfg, std::cin, std::cout);
      std::cout << n << " verdicts recorded\n";
    } else if (fin->parsed()) {
      auto s = sparta::finalize(cfg, approve);
      std::cout << s.exported << " exported, " << s.rejected << " rejected, " << s.pending << " still pending\n";
    } else if (rep->parsed()) {
      auto r = sparta::report(cfg, !skip_nat);
      std::cout << r["cost_table"].get<std::string>();
      if (r.contains("naturalness")) std::cout << "naturalness: " << r["naturalness"].dump() << '\n';
      std::cout << "reports in " << sparta::RunPaths(cfg.out_dir).report_dir() << '\n';
    }
  } catch (const sparta::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUser;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}
