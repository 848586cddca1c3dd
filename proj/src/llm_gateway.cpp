#include "sparta/llm_gateway.hpp"

#include <chrono>
#include <regex>

#include "sparta/metrics.hpp"

namespace sparta {

namespace {

struct KindInfo {
  PromptKind kind;
  const char* name;
  std::vector<std::string> keys;
};

const std::vector<KindInfo>& kind_table() {
  static const std::vector<KindInfo> t = {
      {PromptKind::SelectPlain, "select_plain", {"select"}},
      {PromptKind::SelectAgg, "select_agg", {"select"}},
      {PromptKind::FromClause, "from_clause", {"from"}},
      {PromptKind::WhereClause, "where_clause", {"where"}},
      {PromptKind::GroupBy, "group_by", {"group"}},
      {PromptKind::Having, "having", {"having"}},
      {PromptKind::OrderBy, "order_by", {"order"}},
      {PromptKind::Limit, "limit", {"limit"}},
      {PromptKind::InnerBlockSelection, "inner_block_selection", {"inner_query_block"}},
      {PromptKind::OuterFrom, "outer_from", {"from"}},
      {PromptKind::NestedN, "nested_N", {"nested_predicate", "logical_operator"}},
      {PromptKind::NestedA, "nested_A", {"nested_predicate", "logical_operator"}},
      {PromptKind::NestedJ, "nested_J", {"nested_predicate", "logical_operator"}},
      {PromptKind::NestedJA, "nested_JA", {"nested_predicate", "logical_operator"}},
      {PromptKind::ProvenanceRefine, "provenance_refine", {"corrected_query"}},
      {PromptKind::NaturalnessEval,
       "naturalness_eval",
       {"relevance_score", "specificity_clarity_of_intent_score", "overall_naturalness_score", "reason"}},
      {PromptKind::Verbalize, "verbalize", {"question"}},
      {PromptKind::OneShot, "one_shot", {"query"}},
      {PromptKind::OneShotNested, "one_shot_nested", {"query"}},
  };
  return t;
}

const KindInfo& info(PromptKind k) {
  for (const auto& i : kind_table())
    if (i.kind == k) return i;
  throw Error("unknown prompt kind");
}

const char* kJsonTail =
    "\n\nAnswer with one JSON object whose values are plain strings or numbers (no nesting), "
    "using exactly the keys {keys}. Do not add commentary.";

std::map<PromptKind, std::string> default_templates() {
  std::map<PromptKind, std::string> t;
  const std::string clause_ctx =
      "Database schema, sample rows and join paths:\n{database}\n\n"
      "Clauses written so far:\n{generated_clauses}\n\n"
      "Rows returned by the query so far (may be blank):\n{execution_result}\n\n"
      "Notes on the previous answer (may be blank):\n{feedback}\n\n";
  t[PromptKind::FromClause] =
      "You are drafting a question a {domain} fan might ask of a database.\n"
      "Database schema, sample rows and join paths:\n{database}\n\n"
      "Role of this block: {purpose}\n"
      "Pick one table for the FROM clause. Do not use joins or subqueries.";
  t[PromptKind::WhereClause] =
      "You are drafting a question a {domain} fan might ask of a database.\n" + clause_ctx +
      "Write the WHERE clause. Use only columns of the chosen table and literal values that occur in the "
      "data or lie inside a column's range, so the query still returns rows.";
  t[PromptKind::GroupBy] =
      "You are drafting a question a {domain} fan might ask of a database.\n" + clause_ctx +
      "Write a GROUP BY clause over a single column that makes the question more interesting.";
  t[PromptKind::Having] =
      "You are drafting a question a {domain} fan might ask of a database.\n" + clause_ctx +
      "Write a HAVING clause that filters the groups with one aggregate condition.";
  t[PromptKind::SelectPlain] =
      "You are drafting a question a {domain} fan might ask of a database.\n" + clause_ctx +
      "Role of this block: {purpose}\n"
      "Write the SELECT clause projecting a single plain column. If the query is grouped, project the "
      "grouping column.";
  t[PromptKind::SelectAgg] =
      "You are drafting a question a {domain} fan might ask of a database.\n" + clause_ctx +
      "Role of this block: {purpose}\n"
      "Write the SELECT clause with one aggregate (COUNT, SUM, AVG, MIN or MAX). If the query is grouped, "
      "project the grouping column first.";
  t[PromptKind::OrderBy] =
      "You are drafting a question a {domain} fan might ask of a database.\n" + clause_ctx +
      "Write an ORDER BY clause on one projected column or aggregate, with ASC or DESC.";
  t[PromptKind::Limit] =
      "You are drafting a question a {domain} fan might ask of a database.\n" + clause_ctx +
      "Write a LIMIT clause with a small positive row count.";
  t[PromptKind::InnerBlockSelection] =
      "We are growing a nested {domain} query from the inside out.\n"
      "Database schema:\n{database}\n\n"
      "Nesting type of the next predicate: {nesting_type}\n"
      "Candidate subqueries, numbered from 0:\n{candidate_inner_query_blocks}\n\n"
      "Choose the candidate that best supports a meaningful outer question and give its number.";
  t[PromptKind::OuterFrom] =
      "We are growing a nested {domain} query from the inside out.\n"
      "Database schema, sample rows and join paths:\n{database}\n\n"
      "Subquery to embed:\n{subquery}\n"
      "Nesting type: {nesting_type}\n"
      "Pick the table for the enclosing block. It must share a joinable column with the subquery's table; "
      "when the subquery aggregates a column no other table has, use the subquery's own table.";
  const std::string nested_ctx =
      "We are growing a nested {domain} query from the inside out.\n"
      "Database schema, sample rows and join paths:\n{database}\n\n"
      "Outer block so far:\n{generated_from_clause}\nWHERE {generated_where_clause}\n\n"
      "Subquery to embed (nesting height {height}):\n{selected_inner_query_block}\n\n";
  t[PromptKind::NestedN] = nested_ctx +
                           "Write one predicate for the outer WHERE that tests membership in the subquery's "
                           "result with IN, NOT IN, EXISTS or NOT EXISTS. Keep the subquery text unchanged. "
                           "Also give the logical operator (AND or OR) joining it to existing conditions.";
  t[PromptKind::NestedA] = nested_ctx +
                           "Write one predicate for the outer WHERE comparing an outer column against the "
                           "subquery's aggregate value. Keep the subquery text unchanged. Also give the "
                           "logical operator (AND or OR) joining it to existing conditions.";
  t[PromptKind::NestedJ] = nested_ctx +
                           "Write one predicate for the outer WHERE that embeds the subquery with IN or "
                           "EXISTS, and add to the subquery's WHERE a condition equating one of its columns "
                           "with a column of the outer table. Change nothing else in the subquery. Also give "
                           "the logical operator (AND or OR).";
  t[PromptKind::NestedJA] = nested_ctx +
                            "Write one predicate for the outer WHERE comparing an outer column against the "
                            "subquery's aggregate, and add to the subquery's WHERE a condition equating one of "
                            "its columns with a column of the outer table. Change nothing else in the "
                            "subquery. Also give the logical operator (AND or OR).";
  t[PromptKind::ProvenanceRefine] =
      "This query returns no rows:\n{original_query}\n\n"
      "The condition that removes every candidate row:\n{problematic_condition}\n\n"
      "Rows that satisfy everything else:\n{execution_result}\n\n"
      "Diagnosis:\n{provenance_report}\n\n"
      "Rewrite only that condition so the query returns rows for a sensible {domain} question. Leave every "
      "other clause, every nesting level and every join condition exactly as it is. Return the full query.";
  t[PromptKind::NaturalnessEval] =
      "Judge how plausible it is that a {domain} fan would actually want the answer to this query.\n"
      "Database schema:\n{database}\n\nQuery:\n{sql}\n\n"
      "Give integer scores from 1 (implausible) to 5 (very plausible) for relevance, for specificity and "
      "clarity of intent, and overall, plus a one-sentence reason.";
  t[PromptKind::Verbalize] =
      "Turn this {domain} query into one natural question a person would ask. The syntax tree is included "
      "to show the structure.\n\nQuery:\n{sql}\n\nSyntax tree:\n{ast}\n\n"
      "Mention every filter value. Do not mention tables, columns or SQL.";
  t[PromptKind::OneShot] =
      "You are drafting a question a {domain} fan might ask of a database.\n"
      "Database schema, sample rows and join paths:\n{database}\n\n"
      "Required clauses: {clauses}\n"
      "Write the complete single-table SQL query in one go.";
  t[PromptKind::OneShotNested] =
      "You are drafting a multi-step {domain} question as one nested SQL query.\n"
      "Database schema, sample rows and join paths:\n{database}\n\n"
      "Nesting template: {shape}\nNesting types per edge: {nesting_types}\n"
      "Subqueries available for the innermost blocks:\n{leaf_blocks}\n\n"
      "Clauses required on the outermost block: {root_clauses}\n"
      "Write the complete nested query in one go. Subqueries may appear only in WHERE.";
  for (auto& [k, text] : t) {
    std::string keys;
    for (const auto& key : info(k).keys) keys += (keys.empty() ? "\"" : ", \"") + key + "\"";
    std::string tail = kJsonTail;
    tail.replace(tail.find("{keys}"), 6, keys);
    text += tail;
  }
  return t;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool integer_like(const nlohmann::json& v) {
  if (v.is_number_integer()) return true;
  if (v.is_number_float()) return v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()));
  if (v.is_string()) return std::regex_match(v.get<std::string>(), std::regex(R"(\s*-?\d+\s*)"));
  return false;
}

}  // namespace

std::string to_string(PromptKind k) { return info(k).name; }

PromptKind prompt_kind_from_string(const std::string& s) {
  for (const auto& i : kind_table())
    if (s == i.name) return i.kind;
  throw Error("unknown prompt kind: " + s);
}

const std::vector<PromptKind>& all_prompt_kinds() {
  static const std::vector<PromptKind> v = [] {
    std::vector<PromptKind> out;
    for (const auto& i : kind_table()) out.push_back(i.kind);
    return out;
  }();
  return v;
}

const std::vector<std::string>& required_keys(PromptKind k) { return info(k).keys; }

std::string LlmExchange::text(const std::string& key) const {
  const auto& v = parsed.at(key);
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

PromptSet::PromptSet(std::string domain) : domain_(std::move(domain)), templates_(default_templates()) {}

std::vector<std::string> PromptSet::slot_names(PromptKind kind) const {
  static const std::regex slot(R"(\{([a-z_]+)\})");
  std::vector<std::string> names;
  const auto& text = templates_.at(kind);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), slot); it != std::sregex_iterator(); ++it) {
    auto n = (*it)[1].str();
    if (n == "domain") continue;
    if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
  }
  return names;
}

std::string PromptSet::render(PromptKind kind, const Slots& slots) const {
  const auto& text = templates_.at(kind);
  std::string out;
  out.reserve(text.size() + 256);
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      auto close = text.find('}', i);
      auto name = close == std::string::npos ? "" : text.substr(i + 1, close - i - 1);
      bool is_slot = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || c == '_';
      });
      if (is_slot) {
        if (name == "domain") {
          out += domain_;
        } else {
          auto it = slots.find(name);
          if (it == slots.end()) throw Error(to_string(kind) + ": unbound slot '" + name + "'");
          out += it->second;
        }
        i = close + 1;
        continue;
      }
    }
    out += text[i++];
  }
  return out;
}

nlohmann::json parse_response(const std::string& raw, PromptKind kind) {
  std::string body = trim(raw);
  if (body.empty()) throw ResponseError("empty response");
  if (body.front() != '{') {
    static const std::regex fence(R"(```[A-Za-z]*\s*([\s\S]*?)```)");
    std::smatch m;
    auto begin = body.cbegin();
    std::vector<std::string> blocks;
    while (std::regex_search(begin, body.cend(), m, fence)) {
      blocks.push_back(trim(m[1].str()));
      begin = m[0].second;
    }
    if (blocks.size() != 1 || blocks[0].empty() || blocks[0].front() != '{')
      throw ResponseError("response is neither a JSON object nor a single fenced JSON block");
    body = blocks[0];
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ResponseError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw ResponseError("response JSON is not an object");
  for (const auto& [k, v] : j.items())
    if (v.is_object() || v.is_array()) throw ResponseError("response JSON is not flat at key '" + k + "'");
  for (const auto& key : required_keys(kind)) {
    if (!j.contains(key)) throw ResponseError("missing required key '" + key + "'");
    const auto& v = j[key];
    if (key == "inner_query_block" || key.ends_with("_score")) {
      if (!integer_like(v)) throw ResponseError("key '" + key + "' is not an integer");
    } else if (key == "limit") {
      if (!integer_like(v) && !v.is_string()) throw ResponseError("key 'limit' has the wrong type");
    } else if (!v.is_string()) {
      throw ResponseError("key '" + key + "' is not a string");
    } else if (key != "logical_operator" && key != "reason" && trim(v.get<std::string>()).empty()) {
      throw ResponseError("key '" + key + "' is empty");
    }
  }
  return j;
}

Gateway::Gateway(std::shared_ptr<Provider> provider, CostLedger* ledger, PromptSet prompts)
    : provider_(std::move(provider)), ledger_(ledger), prompts_(std::move(prompts)) {
  if (!provider_) throw Error("gateway needs a provider");
}

LlmExchange Gateway::complete(PromptKind kind, const Slots& slots, const CallOptions& opts) {
  if (opts.budget < 1) throw Error("retry budget must be at least 1");
  LlmExchange ex;
  ex.kind = kind;
  ex.rendered_prompt = prompts_.render(kind, slots);
  std::string last_error;
  bool transport_only = true;
  for (int attempt = 1; attempt <= opts.budget; ++attempt) {
    bool ideal = opts.ideal && attempt == 1;
    ++calls_;
    if (ideal) ++ideal_calls_;
    if (ledger_) ledger_->record_call(ideal);
    ex.attempt = attempt;
    auto t0 = std::chrono::steady_clock::now();
    try {
      ex.raw_response = provider_->complete(kind, ex.rendered_prompt, slots, attempt);
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }
    ex.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    transport_only = false;
    try {
      ex.parsed = parse_response(ex.raw_response, kind);
      if (opts.validate) opts.validate(ex.parsed);
      return ex;
    } catch (const ResponseError& e) {
      last_error = e.what();
    }
  }
  std::string msg = to_string(kind) + ": budget exhausted after " + std::to_string(opts.budget) +
                    " attempt(s): " + last_error;
  if (transport_only) throw TransportError(msg);
  throw BudgetExhausted(msg);
}

void ScriptedProvider::push(PromptKind kind, std::string response) {
  std::lock_guard lock(mu_);
  queues_[kind].push_back(std::move(response));
}

std::size_t ScriptedProvider::pending(PromptKind kind) const {
  std::lock_guard lock(mu_);
  auto it = queues_.find(kind);
  return it == queues_.end() ? 0 : it->second.size();
}

std::string ScriptedProvider::complete(PromptKind kind, const std::string& prompt, const Slots& slots,
                                       int attempt) {
  {
    std::lock_guard lock(mu_);
    seen_.emplace_back(kind, slots);
    auto it = queues_.find(kind);
    if (it != queues_.end() && !it->second.empty()) {
      auto r = std::move(it->second.front());
      it->second.pop_front();
      return r;
    }
  }
  if (fallback_) return fallback_->complete(kind, prompt, slots, attempt);
  throw TransportError("no scripted response left for " + to_string(kind));
}

}  // namespace sparta
