#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/query_model.hpp"

namespace sparta {

enum class ValidationStatus { Pending, Approved, Corrected, Rejected };
std::string to_string(ValidationStatus s);
ValidationStatus validation_status_from_string(const std::string& s);

/// Canonicalized gold answer. Rows are sorted unless `ordered` is set.
struct Answer {
  std::vector<std::string> columns;
  std::vector<Row> rows;
  bool ordered = false;
  bool operator==(const Answer&) const = default;
};

nlohmann::json to_json(const Answer& a);
Answer answer_from_json(const nlohmann::json& j);

struct BenchmarkInstance {
  std::string id;
  std::string sql;
  std::string question;
  Answer answer;
  QueryGraph graph;
  ShapeSpec shape;
  OperatorProfile operators;
  std::vector<NestingType> nesting_types;  // one per edge
  std::vector<HopModality> hop_modalities;
  std::string domain;
  std::string strategy;
  ValidationStatus status = ValidationStatus::Pending;
  std::optional<std::string> corrected_question;
};

nlohmann::json to_json(const BenchmarkInstance& b);
BenchmarkInstance instance_from_json(const nlohmann::json& j);

/// Fills shape, operator, nesting-type (and hop modality, when a catalog is
/// given) fields from the graph.
BenchmarkInstance describe(std::string id, const QueryGraph& g, const Catalog* catalog = nullptr);

std::vector<BenchmarkInstance> read_instances(const std::string& path);
void write_instances(const std::vector<BenchmarkInstance>& v, const std::string& path);

}  // namespace sparta
