#include "sparta/verbalizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include "sparta/sql_parser.hpp"

namespace sparta {

std::string normalize_question(const std::string& text) {
  std::string out;
  bool space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(c);
  }
  if (out.empty()) return out;
  while (!out.empty() && (out.back() == '.' || out.back() == '!')) out.pop_back();
  if (out.empty() || out.back() != '?') out += '?';
  return out;
}

std::string verbalize(const QueryGraph& g, Gateway& gateway, int budget) {
  CallOptions opts;
  opts.budget = budget;
  opts.validate = [](const nlohmann::json& j) {
    const auto& q = j.at("question");
    if (!q.is_string() || normalize_question(q.get<std::string>()).size() < 2)
      throw ResponseError("blank question");
  };
  auto ex = gateway.complete(PromptKind::Verbalize, {{"sql", render_sql(g)}, {"ast", to_json(g).dump()}}, opts);
  return normalize_question(ex.text("question"));
}

Answer compute_answer(const QueryGraph& g, Database& db) {
  auto rs = db.execute(render_sql(g), std::numeric_limits<std::size_t>::max());
  Answer a;
  a.columns = rs.columns;
  a.ordered = g.blocks[g.root].order_by.has_value();
  a.rows.reserve(rs.rows.size());
  for (auto& r : rs.rows) {
    Row row;
    row.reserve(r.size());
    for (const auto& v : r) row.push_back(canonicalize(v));
    a.rows.push_back(std::move(row));
  }
  if (!a.ordered) {
    std::sort(a.rows.begin(), a.rows.end(), [](const Row& x, const Row& y) {
      for (std::size_t i = 0; i < x.size() && i < y.size(); ++i)
        if (int c = compare_values(x[i], y[i])) return c < 0;
      return x.size() < y.size();
    });
  }
  return a;
}

BenchmarkInstance make_instance(std::string id, const QueryGraph& g, std::string question, Database& db,
                                const Catalog* catalog) {
  auto b = describe(std::move(id), g, catalog);
  b.question = std::move(question);
  b.answer = compute_answer(g, db);
  return b;
}

nlohmann::json to_json(const Verdict& v) {
  nlohmann::json j{{"id", v.id}, {"verdict", to_string(v.status)}};
  if (v.corrected_question) j["corrected_question"] = *v.corrected_question;
  return j;
}

Verdict verdict_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("id") || !j.at("id").is_string() || !j.contains("verdict") ||
      !j.at("verdict").is_string())
    throw Error("verdict needs string fields 'id' and 'verdict'");
  Verdict v;
  v.id = j.at("id");
  v.status = validation_status_from_string(j.at("verdict"));
  if (v.status == ValidationStatus::Pending) throw Error("verdict for " + v.id + " cannot be 'pending'");
  if (j.contains("corrected_question")) {
    if (!j.at("corrected_question").is_string()) throw Error("corrected_question for " + v.id + " is not text");
    v.corrected_question = j.at("corrected_question").get<std::string>();
  }
  if (v.status == ValidationStatus::Corrected &&
      (!v.corrected_question || normalize_question(*v.corrected_question).empty()))
    throw Error("verdict 'corrected' for " + v.id + " carries no corrected_question");
  return v;
}

std::size_t export_validation(const std::vector<BenchmarkInstance>& instances, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  std::size_t n = 0;
  for (const auto& b : instances) {
    if (b.status != ValidationStatus::Pending) continue;
    out << nlohmann::json{{"id", b.id}, {"sql", b.sql}, {"question", b.question}, {"answer", to_json(b.answer)}}
               .dump()
        << '\n';
    ++n;
  }
  return n;
}

std::vector<Verdict> read_verdicts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path + "'");
  std::vector<Verdict> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(verdict_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(n) + ": malformed verdict: " + e.what());
    }
  }
  return out;
}

void write_verdicts(const std::vector<Verdict>& verdicts, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& v : verdicts) out << to_json(v).dump() << '\n';
}

void apply_verdicts(std::vector<BenchmarkInstance>& instances, const std::vector<Verdict>& verdicts) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < instances.size(); ++i) index.emplace(instances[i].id, i);
  std::vector<std::string> unknown;
  for (const auto& v : verdicts)
    if (!index.count(v.id)) unknown.push_back(v.id);
  if (!unknown.empty()) {
    std::string msg = "verdicts for unknown ids:";
    for (const auto& id : unknown) msg += " " + id;
    throw Error(msg);
  }
  for (const auto& v : verdicts) {
    auto& b = instances[index.at(v.id)];
    b.status = v.status;
    b.corrected_question.reset();
    if (v.status == ValidationStatus::Corrected) b.corrected_question = normalize_question(*v.corrected_question);
  }
}

std::size_t export_benchmark(const std::vector<BenchmarkInstance>& instances, const std::string& path) {
  std::vector<BenchmarkInstance> keep;
  for (const auto& b : instances) {
    if (b.status != ValidationStatus::Approved && b.status != ValidationStatus::Corrected) continue;
    auto c = b;
    if (c.status == ValidationStatus::Corrected && c.corrected_question) c.question = *c.corrected_question;
    keep.push_back(std::move(c));
  }
  write_instances(keep, path);
  return keep.size();
}

std::vector<Verdict> review(const std::vector<BenchmarkInstance>& instances, std::istream& in, std::ostream& out) {
  std::vector<const BenchmarkInstance*> pending;
  for (const auto& b : instances)
    if (b.status == ValidationStatus::Pending) pending.push_back(&b);
  std::vector<Verdict> verdicts;
  if (pending.empty()) {
    out << "nothing to review\n";
    return verdicts;
  }
  std::size_t i = 0;
  for (const auto* b : pending) {
    ++i;
    out << "[" << i << "/" << pending.size() << "] " << b->id << "\n  SQL: " << b->sql << "\n  Q:   " << b->question
        << "\n  rows: " << b->answer.rows.size() << "\n";
    for (;;) {
      out << "  (a)pprove (r)eject (c)orrect (s)kip (q)uit > " << std::flush;
      std::string line;
      if (!std::getline(in, line)) return verdicts;
      char c = line.empty() ? ' ' : static_cast<char>(std::tolower(static_cast<unsigned char>(line[0])));
      if (c == 'q') return verdicts;
      if (c == 's') break;
      if (c == 'a' || c == 'r') {
        verdicts.push_back({b->id, c == 'a' ? ValidationStatus::Approved : ValidationStatus::Rejected, {}});
        break;
      }
      if (c == 'c') {
        out << "  new question > " << std::flush;
        std::string text;
        if (!std::getline(in, text)) return verdicts;
        auto q = normalize_question(text);
        if (q.empty()) continue;
        verdicts.push_back({b->id, ValidationStatus::Corrected, q});
        break;
      }
    }
  }
  return verdicts;
}

}  // namespace sparta
