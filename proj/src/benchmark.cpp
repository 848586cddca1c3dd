#include "sparta/benchmark.hpp"

#include <fstream>

#include "sparta/catalog.hpp"

namespace sparta {

std::string to_string(ValidationStatus s) {
  switch (s) {
    case ValidationStatus::Pending: return "pending";
    case ValidationStatus::Approved: return "approved";
    case ValidationStatus::Corrected: return "corrected";
    case ValidationStatus::Rejected: return "rejected";
  }
  return "?";
}

ValidationStatus validation_status_from_string(const std::string& s) {
  for (auto v : {ValidationStatus::Pending, ValidationStatus::Approved, ValidationStatus::Corrected,
                 ValidationStatus::Rejected})
    if (to_string(v) == s) return v;
  throw Error("unknown validation status: " + s);
}

nlohmann::json to_json(const Answer& a) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : a.rows) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& v : r) row.push_back(to_json(v));
    rows.push_back(std::move(row));
  }
  return {{"columns", a.columns}, {"rows", rows}, {"ordered", a.ordered}};
}

Answer answer_from_json(const nlohmann::json& j) {
  Answer a;
  a.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& row : j.at("rows")) {
    Row r;
    for (const auto& v : row) r.push_back(value_from_json(v));
    a.rows.push_back(std::move(r));
  }
  a.ordered = j.value("ordered", false);
  return a;
}

nlohmann::json to_json(const BenchmarkInstance& b) {
  nlohmann::json types = nlohmann::json::array();
  for (auto t : b.nesting_types) types.push_back(to_string(t));
  nlohmann::json hops = nlohmann::json::array();
  for (auto h : b.hop_modalities) hops.push_back(to_string(h));
  nlohmann::json j{{"id", b.id},
                   {"sql", b.sql},
                   {"question", b.question},
                   {"answer", to_json(b.answer)},
                   {"shape", to_json(b.shape)},
                   {"operators", to_json(b.operators)},
                   {"nesting_types", types},
                   {"hop_modalities", hops},
                   {"domain", b.domain},
                   {"strategy", b.strategy},
                   {"validation_status", to_string(b.status)},
                   {"ast", to_json(b.graph)}};
  if (b.corrected_question) j["corrected_question"] = *b.corrected_question;
  return j;
}

BenchmarkInstance instance_from_json(const nlohmann::json& j) {
  BenchmarkInstance b;
  b.id = j.at("id");
  b.sql = j.at("sql");
  b.question = j.value("question", std::string{});
  if (j.contains("answer")) b.answer = answer_from_json(j.at("answer"));
  b.graph = graph_from_json(j.at("ast"));
  b.shape = shape_from_json(j.at("shape"));
  b.operators = operator_profile(b.graph);
  for (const auto& t : j.value("nesting_types", nlohmann::json::array()))
    b.nesting_types.push_back(nesting_type_from_string(t));
  for (const auto& h : j.value("hop_modalities", nlohmann::json::array()))
    b.hop_modalities.push_back(h.get<std::string>() == "cross_modal" ? HopModality::CrossModal
                                                                     : HopModality::UniModal);
  b.domain = j.value("domain", std::string{});
  b.strategy = j.value("strategy", std::string{});
  b.status = validation_status_from_string(j.value("validation_status", std::string{"pending"}));
  if (j.contains("corrected_question")) b.corrected_question = j.at("corrected_question").get<std::string>();
  return b;
}

BenchmarkInstance describe(std::string id, const QueryGraph& g, const Catalog* catalog) {
  BenchmarkInstance b;
  b.id = std::move(id);
  b.graph = g;
  b.sql = render_sql(g);
  b.shape = shape_of(g);
  b.operators = operator_profile(g);
  for (const auto& e : g.edges) b.nesting_types.push_back(e.type);
  if (catalog) b.hop_modalities = classify_hops(g, *catalog);
  return b;
}

std::vector<BenchmarkInstance> read_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read '" + path + "'");
  std::vector<BenchmarkInstance> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void write_instances(const std::vector<BenchmarkInstance>& v, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  for (const auto& b : v) out << to_json(b).dump() << '\n';
}

}  // namespace sparta
