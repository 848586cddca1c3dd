#include "sparta/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "sparta/executor.hpp"
#include "sparta/http_provider.hpp"
#include "sparta/metrics.hpp"
#include "sparta/verbalizer.hpp"

namespace sparta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string resolve(const std::string& p, const std::string& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

ShapeSpec shape_for_label(const std::string& label) {
  int d = 0, b = 0;
  if (std::sscanf(label.c_str(), "(%d,%d)", &d, &b) != 2) throw Error("bad shape label '" + label + "'");
  return shape_preset(d, b);
}

bool is_nested_strategy(const std::string& s) {
  return s == "one_shot_k" || s == "post_order" || s == "post_order_prov";
}

void require_file(const std::string& path, const std::string& stage) {
  if (!fs::exists(path)) throw UsageError("missing " + path + " (run '" + stage + "' first)");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

/// Runs `body(worker, i)` for i in [0, n) on up to `workers` threads.
template <class Setup, class Body>
void parallel_for(std::size_t n, int workers, Setup setup, Body body) {
  std::size_t w = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), 1, std::max<std::size_t>(n, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex fail_mu;
  auto run = [&] {
    try {
      auto state = setup();
      for (std::size_t i; (i = next.fetch_add(1)) < n;) body(*state, i);
    } catch (...) {
      std::lock_guard lock(fail_mu);
      if (!failure) failure = std::current_exception();
      next = n;
    }
  };
  if (w == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < w; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

Catalog load_run_catalog(const RunPaths& paths) {
  require_file(paths.catalog(), "build-db");
  require_file(paths.db(), "build-db");
  auto c = catalog_from_json(read_json(paths.catalog()));
  c.db_path = paths.db();
  return c;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw UsageError("run config must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("generation")) c.gen = GenerationConfig::from_json(j.at("generation"));
    c.provider = j.value("provider", c.provider);
    if (j.contains("http")) c.http = j.at("http");
    if (j.contains("failure_plan")) c.failure_plan = FailurePlan::from_json(j.at("failure_plan"));
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.out_dir = resolve(j.value("out_dir", c.out_dir), base_dir);
    c.source = resolve(j.value("source", c.source), base_dir);
    if (j.contains("grounding")) c.grounding = j.at("grounding").get<std::set<std::string>>();
    c.templates = resolve(j.value("templates", c.templates), base_dir);
    if (j.contains("key_hints")) c.key_hints = j.at("key_hints").get<std::vector<std::string>>();
    c.instances = j.value("instances", c.instances);
    if (j.contains("non_nested_strategies"))
      c.non_nested_strategies = j.at("non_nested_strategies").get<std::vector<std::string>>();
    if (j.contains("nested_strategies")) c.nested_strategies = j.at("nested_strategies").get<std::vector<std::string>>();
    c.domain = j.value("domain", c.domain);
  } catch (const json::exception& e) {
    throw UsageError(std::string("run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  auto j = read_json(path);
  return from_json(j, fs::path(path).parent_path().string());
}

json RunConfig::to_json() const {
  return {{"generation", gen.to_json()},
          {"provider", provider},
          {"http", http},
          {"failure_plan", failure_plan.to_json()},
          {"seed", seed},
          {"workers", workers},
          {"out_dir", out_dir},
          {"source", source},
          {"grounding", grounding},
          {"templates", templates},
          {"key_hints", key_hints},
          {"instances", instances},
          {"non_nested_strategies", non_nested_strategies},
          {"nested_strategies", nested_strategies},
          {"domain", domain}};
}

void RunConfig::validate() const {
  try {
    gen.validate();
  } catch (const Error& e) {
    throw UsageError(std::string("generation config: ") + e.what());
  }
  if (provider != "mock" && provider != "http") throw UsageError("provider must be 'mock' or 'http'");
  if (workers < 1) throw UsageError("workers must be at least 1");
  if (out_dir.empty()) throw UsageError("out_dir is empty");
  for (const auto& s : non_nested_strategies) {
    try {
      non_nested_strategy_from_string(s);
    } catch (const Error&) {
      throw UsageError("unknown non-nested strategy '" + s + "'");
    }
  }
  for (const auto& s : nested_strategies) {
    try {
      nested_strategy_from_string(s);
    } catch (const Error&) {
      throw UsageError("unknown nested strategy '" + s + "'");
    }
  }
  if (non_nested_strategies.empty() || nested_strategies.empty())
    throw UsageError("at least one non-nested and one nested strategy are required");
  if (!grounding.empty() && templates.empty()) throw UsageError("grounding tables need a templates file");
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& weights, std::size_t n) {
  double total = 0;
  for (double w : weights) {
    if (w < 0) throw Error("negative apportionment weight");
    total += w;
  }
  std::vector<std::size_t> seats(weights.size(), 0);
  if (weights.empty() || total <= 0) return seats;
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    double exact = weights[i] / total * static_cast<double>(n);
    seats[i] = static_cast<std::size_t>(std::floor(exact));
    given += seats[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; given < n; ++k, ++given) ++seats[rem[k % rem.size()].second];
  return seats;
}

std::vector<PlannedSlot> plan_benchmark(const GenerationConfig& cfg, std::size_t n, std::uint64_t seed) {
  std::vector<std::string> labels;
  std::vector<double> weights;
  for (const auto& [label, w] : cfg.shape_mix) {
    labels.push_back(label);
    weights.push_back(w);
  }
  auto quota = largest_remainder(weights, n);
  std::vector<std::string> shapes;
  for (std::size_t i = 0; i < labels.size(); ++i) shapes.insert(shapes.end(), quota[i], labels[i]);
  std::mt19937_64 rng(mix64(seed));
  std::shuffle(shapes.begin(), shapes.end(), rng);

  auto groups = largest_remainder({cfg.p_group_by, 1.0 - cfg.p_group_by}, n)[0];
  std::vector<bool> group(n, false);
  std::fill(group.begin(), group.begin() + static_cast<std::ptrdiff_t>(groups), true);
  std::shuffle(group.begin(), group.end(), rng);

  std::vector<PlannedSlot> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = out[i];
    s.index = static_cast<int>(i);
    s.shape = shapes[i];
    s.seed = mix64(seed ^ mix64(i + 1));
    s.group_by = group[i];
    if (s.shape == "non-nested")
      s.plan = plan_clause_sequence(cfg, s.seed, s.group_by);
    else
      s.nested = make_request(cfg, shape_for_label(s.shape), s.seed, s.group_by);
  }
  return out;
}

std::shared_ptr<Provider> make_provider(const RunConfig& cfg) {
  if (cfg.provider == "mock") return std::make_shared<MockProvider>(cfg.seed, cfg.failure_plan);
  if (cfg.provider == "http") {
    auto h = HttpConfig::from_json(cfg.http);
    if (h.api_key.empty()) throw UsageError("http provider: no API key (set " + h.api_key_env + ")");
    return std::make_shared<HttpProvider>(h);
  }
  throw UsageError("unknown provider '" + cfg.provider + "'");
}

BuildSummary build_db(const RunConfig& cfg) {
  RunPaths paths(cfg.out_dir);
  if (cfg.source.empty()) throw UsageError("config has no source database");
  if (!fs::exists(cfg.source)) throw UsageError("source '" + cfg.source + "' does not exist");
  fs::create_directories(paths.root);
  fs::remove(paths.db());
  if (fs::path(cfg.source).extension() == ".sql") {
    std::ifstream in(cfg.source);
    std::stringstream ss;
    ss << in.rdbuf();
    Database db(paths.db(), false);
    db.exec_script(ss.str());
  } else {
    fs::copy_file(cfg.source, paths.db(), fs::copy_options::overwrite_existing);
  }

  auto catalog = load_catalog(paths.db());
  catalog.join_edges = infer_join_edges(catalog, cfg.key_hints);
  catalog = designate_grounding(std::move(catalog), cfg.grounding);

  BuildSummary s;
  s.tables = catalog.tables.size();
  s.join_edges = catalog.join_edges.size();
  if (!cfg.grounding.empty()) {
    std::map<std::string, FactTemplate> bound;
    for (auto& [name, t] : load_templates(cfg.templates)) {
      if (!cfg.grounding.count(name)) continue;
      bound.emplace(name, bind_template(t, catalog));
    }
    for (const auto& g : cfg.grounding)
      if (!bound.count(g)) throw UsageError("no passage template for grounding table '" + g + "'");
    Database db(paths.db());
    s.passages = write_passages(catalog, bound, db, paths.passages());
  }
  write_json(to_json(catalog), paths.catalog());
  return s;
}

namespace {

struct GenWorker {
  Database db;
  Gateway gw;
  GenContext ctx;
  GenWorker(const std::string& db_path, std::shared_ptr<Provider> p, CostLedger* ledger, const RunConfig& cfg,
            const Catalog& catalog, SeenSet* seen, ManifestWriter* manifest)
      : db(db_path), gw(std::move(p), ledger, PromptSet(cfg.domain)), ctx(catalog, db, gw, cfg.gen, seen, manifest) {}
};

std::string slot_id(const PlannedSlot& s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", s.index);
  return std::string(s.nested ? "nested-" : "flat-") + buf;
}

}  // namespace

std::vector<StrategyRun> generate(const RunConfig& cfg, std::shared_ptr<Provider> provider) {
  cfg.validate();
  RunPaths paths(cfg.out_dir);
  auto catalog = load_run_catalog(paths);
  fs::create_directories(paths.root + "/gen");
  auto slots = plan_benchmark(cfg.gen, cfg.instances, cfg.seed);

  std::vector<std::string> strategies = cfg.non_nested_strategies;
  strategies.insert(strategies.end(), cfg.nested_strategies.begin(), cfg.nested_strategies.end());

  std::vector<StrategyRun> runs;
  std::vector<std::optional<BenchmarkInstance>> primary(slots.size());
  for (const auto& strategy : strategies) {
    bool nested = is_nested_strategy(strategy);
    std::vector<std::size_t> mine;
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i].nested.has_value() == nested) mine.push_back(i);

    auto prov = provider ? provider : make_provider(cfg);
    CostLedger ledger;
    SeenSet seen;
    fs::remove(paths.manifest(strategy));
    std::vector<std::optional<BenchmarkInstance>> out(mine.size());
    std::atomic<std::size_t> failed{0};
    {
      ManifestWriter manifest(paths.manifest(strategy));
      parallel_for(
          mine.size(), cfg.workers,
          [&] { return std::make_unique<GenWorker>(paths.db(), prov, &ledger, cfg, catalog, &seen, &manifest); },
          [&](GenWorker& w, std::size_t k) {
            const auto& slot = slots[mine[k]];
            try {
              auto g = nested ? generate_nested(w.ctx, nested_strategy_from_string(strategy), *slot.nested, slot.seed,
                                                slot.index)
                              : generate_non_nested(w.ctx, non_nested_strategy_from_string(strategy), slot.plan,
                                                    slot.seed, slot.index);
              auto b = describe(slot_id(slot), g.graph, &catalog);
              b.strategy = strategy;
              b.domain = cfg.domain;
              out[k] = std::move(b);
            } catch (const GenerationFailed& e) {
              ++failed;
              std::cerr << "warning: " << strategy << " slot " << slot.index << ": " << e.what() << '\n';
            }
          });
    }

    StrategyRun run{strategy, ledger.summary(), 0, failed.load()};
    std::vector<BenchmarkInstance> emitted;
    for (auto& b : out)
      if (b) emitted.push_back(*b);
    run.emitted = emitted.size();
    write_instances(emitted, paths.queries(strategy));
    write_json({{"strategy", strategy},
                {"ledger", sparta::to_json(run.ledger)},
                {"emitted", run.emitted},
                {"failed", run.failed},
                {"requested", mine.size()}},
               paths.ledger(strategy));

    bool is_primary = strategy == cfg.non_nested_strategies.front() || strategy == cfg.nested_strategies.front();
    if (is_primary)
      for (std::size_t k = 0; k < mine.size(); ++k) primary[mine[k]] = std::move(out[k]);
    runs.push_back(std::move(run));
  }

  std::vector<BenchmarkInstance> merged;
  for (auto& b : primary)
    if (b) merged.push_back(std::move(*b));
  write_instances(merged, paths.generated());
  return runs;
}

std::size_t verbalize_stage(const RunConfig& cfg, std::shared_ptr<Provider> provider) {
  cfg.validate();
  RunPaths paths(cfg.out_dir);
  require_file(paths.generated(), "gen");
  require_file(paths.db(), "build-db");
  auto items = read_instances(paths.generated());
  auto prov = provider ? provider : make_provider(cfg);
  CostLedger ledger;
  struct Worker {
    Database db;
    Gateway gw;
  };
  parallel_for(
      items.size(), cfg.workers,
      [&] {
        return std::make_unique<Worker>(Worker{Database(paths.db()), Gateway(prov, &ledger, PromptSet(cfg.domain))});
      },
      [&](Worker& w, std::size_t i) {
        auto& b = items[i];
        b.question = verbalize(b.graph, w.gw, cfg.gen.call_budget);
        b.answer = compute_answer(b.graph, w.db);
        b.status = ValidationStatus::Pending;
        b.corrected_question.reset();
      });
  write_instances(items, paths.instances());
  write_json({{"ledger", sparta::to_json(ledger.summary())}, {"instances", items.size()}},
             paths.root + "/verbalize.ledger.json");
  return items.size();
}

namespace {

std::vector<BenchmarkInstance> reviewed_instances(const RunPaths& paths) {
  require_file(paths.instances(), "verbalize");
  auto items = read_instances(paths.instances());
  if (fs::exists(paths.verdicts())) import_validation(items, paths.verdicts());
  return items;
}

}  // namespace

std::size_t audit_stage(const RunConfig& cfg, std::istream& in, std::ostream& out) {
  RunPaths paths(cfg.out_dir);
  auto items = reviewed_instances(paths);
  auto verdicts = review(items, in, out);
  if (verdicts.empty()) return 0;
  std::ofstream f(paths.verdicts(), std::ios::app);
  if (!f) throw Error("cannot write '" + paths.verdicts() + "'");
  for (const auto& v : verdicts) f << sparta::to_json(v).dump() << '\n';
  return verdicts.size();
}

FinalizeSummary finalize(const RunConfig& cfg, bool approve_pending) {
  RunPaths paths(cfg.out_dir);
  auto items = reviewed_instances(paths);
  FinalizeSummary s;
  for (auto& b : items) {
    if (b.status == ValidationStatus::Pending && approve_pending) b.status = ValidationStatus::Approved;
    if (b.status == ValidationStatus::Pending) ++s.pending;
    if (b.status == ValidationStatus::Rejected) ++s.rejected;
  }
  s.exported = export_benchmark(items, paths.benchmark());
  return s;
}

json report(const RunConfig& cfg, bool naturalness, std::shared_ptr<Provider> provider) {
  cfg.validate();
  RunPaths paths(cfg.out_dir);
  fs::create_directories(paths.report_dir());
  json out;

  std::vector<std::pair<std::string, LedgerSummary>> rows;
  json ledgers = json::object();
  std::vector<std::string> strategies = cfg.non_nested_strategies;
  strategies.insert(strategies.end(), cfg.nested_strategies.begin(), cfg.nested_strategies.end());
  for (const auto& s : strategies) {
    require_file(paths.ledger(s), "gen");
    auto j = read_json(paths.ledger(s));
    auto summary = summary_from_json(j.at("ledger"));
    auto replayed = replay_manifest(read_manifest(paths.manifest(s)));
    if (!(replayed == summary)) throw Error("manifest replay for " + s + " disagrees with its ledger");
    rows.emplace_back(s, summary);
    ledgers[s] = j;
  }
  auto table = render_summary_table(rows);
  out["cost"] = ledgers;
  write_json(ledgers, paths.report_dir() + "/cost.json");
  write_text(table, paths.report_dir() + "/cost.txt");

  std::string source = fs::exists(paths.benchmark())   ? paths.benchmark()
                       : fs::exists(paths.instances()) ? paths.instances()
                                                       : paths.generated();
  require_file(source, "gen");
  auto items = read_instances(source);
  out["distribution_source"] = source;
  if (!items.empty()) {
    auto dist = config_report(items);
    out["distribution"] = dist.to_json();
    write_json(dist.to_json(), paths.report_dir() + "/distribution.json");
    write_text(dist.to_text(), paths.report_dir() + "/distribution.txt");
  }

  if (naturalness && !items.empty()) {
    auto catalog = load_run_catalog(paths);
    auto schema = schema_slot(catalog).dump();
    auto prov = provider ? provider : make_provider(cfg);
    Gateway gw(prov, nullptr, PromptSet(cfg.domain));
    std::ofstream f(paths.report_dir() + "/naturalness.jsonl", std::ios::trunc);
    std::size_t natural = 0;
    double overall = 0;
    for (const auto& b : items) {
      auto s = naturalness_eval(b.sql, schema, gw, cfg.gen.call_budget);
      natural += s.natural;
      overall += s.overall;
      auto j = sparta::to_json(s);
      j["id"] = b.id;
      f << j.dump() << '\n';
    }
    out["naturalness"] = {{"n", items.size()},
                          {"natural_fraction", static_cast<double>(natural) / static_cast<double>(items.size())},
                          {"mean_overall", overall / static_cast<double>(items.size())}};
  }
  write_json(out, paths.report_dir() + "/report.json");
  out["cost_table"] = table;
  return out;
}

}  // namespace sparta
