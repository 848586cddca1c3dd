#include "sparta/metrics.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "sparta/llm_gateway.hpp"

namespace sparta {

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Empty: return "empty";
    case Outcome::Duplicate: return "duplicate";
    case Outcome::ExecErr: return "exec_err";
  }
  return "?";
}

Outcome outcome_from_string(const std::string& s) {
  for (auto o : {Outcome::Success, Outcome::Empty, Outcome::Duplicate, Outcome::ExecErr})
    if (to_string(o) == s) return o;
  throw Error("unknown outcome: " + s);
}

nlohmann::json to_json(const LedgerSummary& s) {
  return {{"success_q", s.success_q},     {"exec_err", s.exec_err},       {"empty_q", s.empty_q},
          {"duplicate_q", s.duplicate_q}, {"ideal_calls", s.ideal_calls}, {"total_calls", s.total_calls},
          {"retries", s.retries},         {"wall_time_us", s.wall_time_us}, {"wall_time_s", s.wall_time_s()}};
}

LedgerSummary summary_from_json(const nlohmann::json& j) {
  LedgerSummary s;
  s.success_q = j.at("success_q");
  s.exec_err = j.at("exec_err");
  s.empty_q = j.at("empty_q");
  s.duplicate_q = j.at("duplicate_q");
  s.ideal_calls = j.at("ideal_calls");
  s.total_calls = j.at("total_calls");
  s.retries = j.at("retries");
  s.wall_time_us = j.at("wall_time_us");
  return s;
}

void CostLedger::record_call(bool ideal) {
  total_.fetch_add(1);
  (ideal ? ideal_ : retries_).fetch_add(1);
}

void CostLedger::classify(Outcome o) {
  switch (o) {
    case Outcome::Success: success_.fetch_add(1); break;
    case Outcome::Empty: empty_.fetch_add(1); break;
    case Outcome::Duplicate: duplicate_.fetch_add(1); break;
    case Outcome::ExecErr: exec_err_.fetch_add(1); break;
  }
}

void CostLedger::tick(std::chrono::microseconds elapsed) { wall_us_.fetch_add(elapsed.count()); }

LedgerSummary CostLedger::summary() const {
  LedgerSummary s;
  s.success_q = success_;
  s.exec_err = exec_err_;
  s.empty_q = empty_;
  s.duplicate_q = duplicate_;
  s.ideal_calls = ideal_;
  s.total_calls = total_;
  s.retries = retries_;
  s.wall_time_us = wall_us_;
  return s;
}

nlohmann::json to_json(const AttemptRecord& r) {
  nlohmann::json j{{"strategy", r.strategy},
                   {"seed", r.seed},
                   {"slot", r.slot},
                   {"attempt", r.attempt},
                   {"sql", r.sql},
                   {"classification", to_string(r.classification)},
                   {"calls_used", r.calls_used},
                   {"ideal_calls_used", r.ideal_calls_used},
                   {"wall_us", r.wall_us}};
  if (!r.note.empty()) j["note"] = r.note;
  if (!r.edges.empty()) j["edges"] = r.edges;
  return j;
}

AttemptRecord attempt_from_json(const nlohmann::json& j) {
  AttemptRecord r;
  r.strategy = j.at("strategy");
  r.seed = j.at("seed");
  r.slot = j.value("slot", 0);
  r.attempt = j.value("attempt", 0);
  r.sql = j.value("sql", std::string{});
  r.classification = outcome_from_string(j.at("classification"));
  r.calls_used = j.at("calls_used");
  r.ideal_calls_used = j.at("ideal_calls_used");
  r.wall_us = j.value("wall_us", std::int64_t{0});
  r.note = j.value("note", std::string{});
  if (j.contains("edges")) r.edges = j.at("edges");
  return r;
}

ManifestWriter::ManifestWriter(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw Error("cannot write manifest '" + path + "'");
}

void ManifestWriter::write(const AttemptRecord& r) {
  std::lock_guard lock(mu_);
  out_ << to_json(r).dump() << '\n';
  out_.flush();
}

std::vector<AttemptRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read manifest '" + path + "'");
  std::vector<AttemptRecord> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(attempt_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

LedgerSummary replay_manifest(const std::vector<AttemptRecord>& records) {
  CostLedger l;
  for (const auto& r : records) {
    for (std::int64_t i = 0; i < r.calls_used; ++i) l.record_call(i < r.ideal_calls_used);
    l.classify(r.classification);
    l.tick(std::chrono::microseconds(r.wall_us));
  }
  return l.summary();
}

std::string render_summary_table(const std::vector<std::pair<std::string, LedgerSummary>>& rows) {
  std::size_t w = 6;
  for (const auto& [label, s] : rows) w = std::max(w, label.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %9s %7s %9s %8s %7s %7s %9s\n", static_cast<int>(w), "Method", "Success",
                "Empty", "Duplicate", "ExecErr", "Ideal", "Total", "Wall(s)");
  out << buf;
  for (const auto& [label, s] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %9lld %7lld %9lld %8lld %7lld %7lld %9.2f\n", static_cast<int>(w),
                  label.c_str(), static_cast<long long>(s.success_q), static_cast<long long>(s.empty_q),
                  static_cast<long long>(s.duplicate_q), static_cast<long long>(s.exec_err),
                  static_cast<long long>(s.ideal_calls), static_cast<long long>(s.total_calls), s.wall_time_s());
    out << buf;
  }
  return out.str();
}

nlohmann::json to_json(const NaturalnessScore& s) {
  return {{"relevance_score", s.relevance},
          {"specificity_clarity_of_intent_score", s.specificity_clarity},
          {"overall_naturalness_score", s.overall},
          {"reason", s.reason},
          {"natural", s.natural}};
}

namespace {

int score_of(const nlohmann::json& v) {
  if (v.is_string()) return std::stoi(v.get<std::string>());
  return static_cast<int>(v.get<double>());
}

}  // namespace

NaturalnessScore naturalness_eval(const std::string& sql, const std::string& schema, Gateway& gateway,
                                  int budget) {
  CallOptions opts;
  opts.budget = budget;
  opts.validate = [](const nlohmann::json& j) {
    for (const char* k : {"relevance_score", "specificity_clarity_of_intent_score", "overall_naturalness_score"}) {
      int v = score_of(j.at(k));
      if (v < 1 || v > 5) throw ResponseError(std::string(k) + " out of range: " + std::to_string(v));
    }
  };
  auto ex = gateway.complete(PromptKind::NaturalnessEval, {{"database", schema}, {"sql", sql}}, opts);
  NaturalnessScore s;
  s.relevance = score_of(ex.parsed.at("relevance_score"));
  s.specificity_clarity = score_of(ex.parsed.at("specificity_clarity_of_intent_score"));
  s.overall = score_of(ex.parsed.at("overall_naturalness_score"));
  s.reason = ex.text("reason");
  s.natural = s.overall >= 3;
  return s;
}

nlohmann::json DistributionReport::to_json() const {
  auto pct = [](const std::map<std::string, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
  };
  return {{"n", n}, {"shapes", pct(shapes)}, {"operators", pct(operators)}, {"nesting_types", pct(nesting_types)}};
}

std::string DistributionReport::to_text() const {
  std::ostringstream out;
  char buf[128];
  out << "instances: " << n << "\n";
  auto section = [&](const char* title, const std::map<std::string, double>& m) {
    out << title << "\n";
    for (const auto& [k, v] : m) {
      std::snprintf(buf, sizeof buf, "  %-12s %6.1f%%\n", k.c_str(), 100.0 * v);
      out << buf;
    }
  };
  section("shape", shapes);
  section("operators", operators);
  section("nesting types", nesting_types);
  return out.str();
}

DistributionReport config_report(const std::vector<BenchmarkInstance>& instances) {
  if (instances.empty()) throw Error("config report needs at least one instance");
  DistributionReport r;
  r.n = instances.size();
  for (const auto* label : {"non-nested", "(1,1)", "(1,2)", "(1,3)", "(2,1)", "(2,2)", "(3,1)"}) r.shapes[label] = 0;
  for (const auto* op : {"WHERE", "GROUP BY", "HAVING", "ORDER BY", "LIMIT", "AGGREGATION"}) r.operators[op] = 0;
  for (const auto* t : {"N", "A", "J", "JA"}) r.nesting_types[t] = 0;
  const double unit = 1.0 / static_cast<double>(r.n);
  for (const auto& inst : instances) {
    r.shapes[inst.shape.label()] += unit;
    auto ops = sparta::to_json(inst.operators);
    for (const auto& [k, v] : ops.items())
      if (v.get<bool>()) r.operators[k] += unit;
    std::set<std::string> types;
    for (auto t : inst.nesting_types) types.insert(to_string(t));
    for (const auto& t : types) r.nesting_types[t] += unit;
  }
  return r;
}

}  // namespace sparta
