#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sparta/benchmark.hpp"
#include "sparta/catalog.hpp"
#include "sparta/executor.hpp"
#include "sparta/llm_gateway.hpp"

namespace sparta {

/// Trims, collapses internal whitespace and ends the text with "?".
std::string normalize_question(const std::string& text);

/// One question for `g`. The prompt carries the rendered SQL and the JSON
/// syntax tree. Blank replies spend a retry.
std::string verbalize(const QueryGraph& g, Gateway& gateway, int budget = 3);

/// Full, uncapped result. Reals are rounded to six significant digits and
/// rows are sorted unless the root orders them.
Answer compute_answer(const QueryGraph& g, Database& db);

/// describe() plus the gold answer and question.
BenchmarkInstance make_instance(std::string id, const QueryGraph& g, std::string question, Database& db,
                                const Catalog* catalog = nullptr);

struct Verdict {
  std::string id;
  ValidationStatus status = ValidationStatus::Approved;
  std::optional<std::string> corrected_question;
};

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

/// {id, sql, question, answer} per pending instance.
std::size_t export_validation(const std::vector<BenchmarkInstance>& instances, const std::string& path);

std::vector<Verdict> read_verdicts(const std::string& path);
void write_verdicts(const std::vector<Verdict>& verdicts, const std::string& path);

/// Applies verdicts in file order. Throws listing every unknown id before
/// touching anything.
void apply_verdicts(std::vector<BenchmarkInstance>& instances, const std::vector<Verdict>& verdicts);

inline void import_validation(std::vector<BenchmarkInstance>& instances, const std::string& path) {
  apply_verdicts(instances, read_verdicts(path));
}

/// Approved and corrected instances only; corrected text replaces the
/// question. Returns the number written.
std::size_t export_benchmark(const std::vector<BenchmarkInstance>& instances, const std::string& path);

/// Terminal review of pending instances: a(pprove), r(eject), c(orrect) with
/// the new text on the next line, s(kip), q(uit).
std::vector<Verdict> review(const std::vector<BenchmarkInstance>& instances, std::istream& in, std::ostream& out);

}  // namespace sparta
