#include "sparta/mock_provider.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "sparta/sql_parser.hpp"

namespace sparta {

std::string to_string(FailureAction a) {
  switch (a) {
    case FailureAction::Malformed: return "malformed";
    case FailureAction::ProseWrapped: return "prose_wrapped";
    case FailureAction::FixedResponse: return "fixed_response";
    case FailureAction::OverSelective: return "over_selective";
    case FailureAction::InvalidSql: return "invalid_sql";
  }
  return "?";
}

FailurePlan FailurePlan::from_json(const nlohmann::json& j) {
  FailurePlan plan;
  const auto& rules = j.is_array() ? j : j.value("rules", nlohmann::json::array());
  for (const auto& r : rules) {
    FailureRule rule;
    auto action = r.at("action").get<std::string>();
    bool known = false;
    for (auto a : {FailureAction::Malformed, FailureAction::ProseWrapped, FailureAction::FixedResponse,
                   FailureAction::OverSelective, FailureAction::InvalidSql})
      if (to_string(a) == action) rule.action = a, known = true;
    if (!known) throw Error("unknown failure action: " + action);
    if (r.contains("kind")) rule.kind = prompt_kind_from_string(r.at("kind"));
    rule.stream = r.value("stream", std::string{});
    if (!rule.stream.empty() && rule.stream != "where" && rule.stream != "nested")
      throw Error("unknown failure stream: " + rule.stream);
    rule.first = r.value("first", 0);
    rule.period = r.value("period", 0);
    rule.rate = r.value("rate", 0.0);
    if (rule.rate < 0 || rule.rate > 1) throw Error("failure rate must lie in [0,1]");
    rule.on_repair = r.value("on_repair", false);
    rule.attempt = r.value("attempt", 1);
    rule.response = r.value("response", std::string{});
    plan.rules.push_back(std::move(rule));
  }
  return plan;
}

nlohmann::json FailurePlan::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rules) {
    nlohmann::json j{{"action", to_string(r.action)}, {"first", r.first},         {"period", r.period},
                     {"rate", r.rate},                {"on_repair", r.on_repair}, {"attempt", r.attempt}};
    if (r.kind) j["kind"] = to_string(*r.kind);
    if (!r.stream.empty()) j["stream"] = r.stream;
    if (!r.response.empty()) j["response"] = r.response;
    out.push_back(std::move(j));
  }
  return out;
}

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t s) : state(s) {}
  std::uint64_t next() { return mix(state++); }
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  std::size_t index(std::size_t n) { return n ? static_cast<std::size_t>(next() % n) : 0; }
  bool chance(double p) { return unit() < p; }
  // Rank-concentrated draw: weight of rank i is 1/(i+1)^s.
  std::size_t zipf(std::size_t n, double s) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) total += 1.0 / std::pow(static_cast<double>(i + 1), s);
    double u = unit() * total;
    for (std::size_t i = 0; i < n; ++i) {
      u -= 1.0 / std::pow(static_cast<double>(i + 1), s);
      if (u <= 0) return i;
    }
    return n ? n - 1 : 0;
  }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v.at(index(v.size()));
  }
  std::size_t weighted(const std::vector<double>& w) {
    double total = 0;
    for (double x : w) total += x;
    double u = unit() * total;
    for (std::size_t i = 0; i < w.size(); ++i) {
      u -= w[i];
      if (u <= 0) return i;
    }
    return w.size() - 1;
  }
};

struct MCol {
  std::string name;
  std::string type;
  Value min;
  Value max;
  std::int64_t distinct = 0;
  bool numeric() const { return type == "integer" || type == "real"; }
  bool textual() const { return type == "text" || type == "date"; }
};

struct MTable {
  std::string name;
  std::vector<MCol> cols;
  std::vector<Row> samples;
  std::set<std::string> keys;  // columns on some join edge

  const MCol* col(const std::string& n) const {
    for (const auto& c : cols)
      if (c.name == n) return &c;
    return nullptr;
  }
  int col_index(const std::string& n) const {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i].name == n) return static_cast<int>(i);
    return -1;
  }
};

struct MSchema {
  std::vector<MTable> tables;

  const MTable* find(const std::string& n) const {
    for (const auto& t : tables)
      if (t.name == n) return &t;
    return nullptr;
  }
  const MTable& require(const std::string& n) const {
    if (auto* t = find(n)) return *t;
    throw Error("mock: unknown table " + n);
  }
};

MSchema parse_schema(const std::string& slot) {
  MSchema s;
  auto j = nlohmann::json::parse(slot);
  for (const auto& jt : j.at("tables")) {
    MTable t;
    t.name = jt.at("table");
    for (const auto& jc : jt.at("columns"))
      t.cols.push_back({jc.at("name"), jc.at("type"), value_from_json(jc.value("min", nlohmann::json())),
                        value_from_json(jc.value("max", nlohmann::json())), jc.value("distinct", std::int64_t{0})});
    for (const auto& jr : jt.value("sample_rows", nlohmann::json::array())) {
      Row r;
      for (const auto& v : jr) r.push_back(value_from_json(v));
      t.samples.push_back(std::move(r));
    }
    s.tables.push_back(std::move(t));
  }
  for (const auto& e : j.value("join_edges", nlohmann::json::array())) {
    auto text = e.get<std::string>();
    auto eq = text.find(" = ");
    if (eq == std::string::npos) continue;
    for (auto side : {text.substr(0, eq), text.substr(eq + 3)}) {
      auto dot = side.find('.');
      if (dot == std::string::npos) continue;
      for (auto& t : s.tables)
        if (t.name == side.substr(0, dot)) t.keys.insert(side.substr(dot + 1));
    }
  }
  return s;
}

struct ExecRows {
  std::vector<std::string> columns;
  std::vector<Row> rows;
  bool empty() const { return rows.empty(); }
  const Value* get(const Row& r, const std::string& col) const {
    for (std::size_t i = 0; i < columns.size() && i < r.size(); ++i)
      if (columns[i] == col) return &r[i];
    return nullptr;
  }
};

ExecRows parse_exec(const Slots& slots) {
  ExecRows e;
  auto it = slots.find("execution_result");
  if (it == slots.end() || it->second.empty()) return e;
  auto j = nlohmann::json::parse(it->second, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return e;
  e.columns = j.value("columns", std::vector<std::string>{});
  for (const auto& jr : j.value("rows", nlohmann::json::array())) {
    Row r;
    for (const auto& v : jr) r.push_back(value_from_json(v));
    e.rows.push_back(std::move(r));
  }
  return e;
}

std::string slot(const Slots& s, const std::string& k) {
  auto it = s.find(k);
  return it == s.end() ? std::string{} : it->second;
}

bool id_like(const std::string& n) { return n.size() > 3 && n.compare(n.size() - 3, 3, "_id") == 0; }

std::vector<const MCol*> cols_where(const MTable& t, const std::function<bool(const MCol&)>& f) {
  std::vector<const MCol*> out;
  for (const auto& c : t.cols)
    if (f(c)) out.push_back(&c);
  return out;
}

std::vector<const MCol*> measure_cols(const MTable& t) {
  return cols_where(t, [](const MCol& c) { return c.numeric() && !id_like(c.name); });
}

// Rounds toward -inf (down) or +inf (up) keeping `sig` significant digits;
// reals below 10 keep one decimal.
Value nice_round(const Value& v, int sig, bool up) {
  double x = as_double(v);
  if (x == 0) return v;
  double mag = std::fabs(x);
  double step;
  if (std::holds_alternative<double>(v) && mag < 10) {
    step = 0.1;
  } else {
    int digits = static_cast<int>(std::floor(std::log10(mag))) + 1;
    step = std::pow(10.0, std::max(digits - sig, 0));
  }
  double r = up ? std::ceil(x / step) * step : std::floor(x / step) * step;
  if (std::holds_alternative<double>(v)) return std::round(r * 10) / 10;
  return static_cast<std::int64_t>(std::llround(r));
}

// A predicate the witness value `v` satisfies, biased towards ranges.
Predicate comparison_for(Rng& rng, const MCol& c, const Value& v, const std::vector<Value>& others) {
  Predicate p;
  p.column = c.name;
  if (c.numeric()) {
    static const std::vector<double> w = {3, 3, 1, 1, 1};
    switch (rng.weighted(w)) {
      case 0: {
        auto lit = nice_round(v, 2, false);
        p.op = compare_values(lit, v) < 0 ? CmpOp::Gt : CmpOp::Ge;
        p.literal = p.op == CmpOp::Gt ? lit : v;
        break;
      }
      case 1: {
        auto lit = nice_round(v, 2, true);
        p.op = compare_values(lit, v) > 0 ? CmpOp::Lt : CmpOp::Le;
        p.literal = p.op == CmpOp::Lt ? lit : v;
        break;
      }
      case 2: p.op = CmpOp::Ge; p.literal = nice_round(v, 2, false); break;
      case 3: p.op = CmpOp::Le; p.literal = nice_round(v, 2, true); break;
      default: p.op = CmpOp::Eq; p.literal = v; break;
    }
    return p;
  }
  if (c.type == "date" && rng.chance(0.5)) {
    p.op = rng.chance(0.5) ? CmpOp::Ge : CmpOp::Le;
    p.literal = v;
    return p;
  }
  std::vector<Value> differing;
  for (const auto& o : others)
    if (!is_null(o) && compare_values(o, v) != 0) differing.push_back(o);
  if (!differing.empty() && rng.chance(0.15)) {
    p.op = CmpOp::Ne;
    p.literal = rng.pick(differing);
    return p;
  }
  p.op = CmpOp::Eq;
  p.literal = v;
  return p;
}

// Value of column `c` in a random sample row, or a point inside its range.
Value schema_value(Rng& rng, const MTable& t, const MCol& c) {
  int idx = t.col_index(c.name);
  if (c.numeric() && !is_null(c.min) && !is_null(c.max) && rng.chance(0.5)) {
    double lo = as_double(c.min), hi = as_double(c.max);
    double x = lo + rng.unit() * (hi - lo);
    if (c.type == "integer") return nice_round(static_cast<std::int64_t>(std::llround(x)), 2, false);
    return nice_round(x, 3, false);
  }
  if (!t.samples.empty()) {
    const auto& r = rng.pick(t.samples);
    if (idx >= 0 && idx < static_cast<int>(r.size()) && !is_null(r[idx])) return r[idx];
  }
  return c.min;
}

std::vector<Predicate> over_selective(const MTable& t) {
  Predicate p;
  auto m = measure_cols(t);
  if (m.empty()) m = cols_where(t, [](const MCol& c) { return c.numeric(); });
  if (!m.empty() && !is_null(m.front()->max)) {
    p.column = m.front()->name;
    p.op = CmpOp::Gt;
    p.literal = m.front()->max;
  } else {
    p.column = t.cols.front().name;
    p.op = CmpOp::Eq;
    p.literal = std::string("(none)");
  }
  return {p};
}

std::vector<Predicate> make_where(Rng& rng, const MTable& t, const ExecRows& exec, int count) {
  auto cands = cols_where(t, [](const MCol& c) { return !id_like(c.name) && !c.name.empty(); });
  std::vector<Predicate> out;
  const Row* witness = exec.empty() ? nullptr : &rng.pick(exec.rows);
  std::set<std::string> used;
  for (int i = 0; i < count && !cands.empty(); ++i) {
    for (int tries = 0; tries < 8; ++tries) {
      const MCol& c = *rng.pick(cands);
      if (used.count(c.name)) continue;
      Value v;
      std::vector<Value> others;
      int idx = t.col_index(c.name);
      if (witness) {
        auto* pv = exec.get(*witness, c.name);
        if (!pv || is_null(*pv)) continue;
        v = *pv;
        for (const auto& r : exec.rows)
          if (auto* o = exec.get(r, c.name)) others.push_back(*o);
      } else {
        v = schema_value(rng, t, c);
        if (is_null(v)) continue;
        for (const auto& r : t.samples)
          if (idx >= 0 && idx < static_cast<int>(r.size())) others.push_back(r[idx]);
      }
      auto p = comparison_for(rng, c, v, others);
      p.connector = out.empty() ? Connector::None : Connector::And;
      out.push_back(std::move(p));
      used.insert(c.name);
      break;
    }
  }
  if (out.empty()) throw Error("mock: no usable column in " + t.name);
  return out;
}

std::string where_text(const std::string& table, const std::vector<Predicate>& preds) {
  QueryBlock b;
  b.from_table = table;
  b.predicates = preds;
  return render_where(single_block(b), 0);
}

std::set<std::string> equality_columns(const QueryBlock& b) {
  std::set<std::string> out;
  for (const auto& p : b.predicates)
    if (p.kind == PredKind::Comparison && p.op == CmpOp::Eq) out.insert(p.column);
  return out;
}

QueryBlock partial_block(const Slots& slots) {
  auto j = nlohmann::json::parse(slot(slots, "generated_clauses"));
  std::map<std::string, std::string> clauses;
  for (const auto& [k, v] : j.items()) clauses[k] = v.get<std::string>();
  auto g = parse_sql(assemble_clauses(clauses));
  return g.blocks[0];
}

SelectItem plain_column(Rng& rng, const MTable& t, const QueryBlock& b, const std::string& purpose) {
  if (b.group_by) return {AggFn::None, *b.group_by};
  auto fixed = equality_columns(b);
  if (purpose == "inner_plain") {
    auto keys = cols_where(t, [&](const MCol& c) { return t.keys.count(c.name) && c.textual(); });
    if (keys.empty()) keys = cols_where(t, [&](const MCol& c) { return t.keys.count(c.name) > 0; });
    if (!keys.empty()) return {AggFn::None, rng.pick(keys)->name};
  }
  auto cands = cols_where(t, [&](const MCol& c) { return c.textual() && !fixed.count(c.name); });
  if (cands.empty()) cands = cols_where(t, [&](const MCol& c) { return !fixed.count(c.name); });
  if (cands.empty()) cands = cols_where(t, [](const MCol&) { return true; });
  // Entity names make the most natural answers.
  for (const auto* c : cands)
    if (t.keys.count(c->name) && c->textual() && rng.chance(0.5)) return {AggFn::None, c->name};
  return {AggFn::None, rng.pick(cands)->name};
}

std::vector<SelectItem> agg_items(Rng& rng, const MTable& t, const QueryBlock& b, const std::string& purpose) {
  auto measures = measure_cols(t);
  static const std::vector<AggFn> inner_fns = {AggFn::Avg, AggFn::Max, AggFn::Min};
  static const std::vector<AggFn> fns = {AggFn::Avg, AggFn::Max, AggFn::Min, AggFn::Sum};
  SelectItem agg;
  if (purpose == "inner_agg") {
    if (measures.empty()) agg = {AggFn::Count, "*"};
    else agg = {rng.pick(inner_fns), rng.pick(measures)->name};
  } else if (measures.empty() || rng.chance(0.3)) {
    agg = {AggFn::Count, "*"};
  } else {
    agg = {rng.pick(fns), rng.pick(measures)->name};
  }
  if (b.group_by) return {{AggFn::None, *b.group_by}, agg};
  return {agg};
}

std::string item_text(const SelectItem& s) {
  if (s.fn == AggFn::None) return s.column;
  return to_string(s.fn) + "(" + s.column + ")";
}

std::string items_text(const std::vector<SelectItem>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + item_text(s);
  return out;
}

std::string group_column(Rng& rng, const MTable& t, const QueryBlock& b) {
  auto fixed = equality_columns(b);
  auto cands = cols_where(t, [&](const MCol& c) {
    return c.textual() && !fixed.count(c.name) && c.distinct >= 2 && c.distinct <= 40;
  });
  if (cands.empty()) cands = cols_where(t, [&](const MCol& c) { return c.textual() && !fixed.count(c.name); });
  if (cands.empty()) cands = cols_where(t, [](const MCol&) { return true; });
  return rng.pick(cands)->name;
}

// Table whose columns can host every pending child predicate.
struct ChildReq {
  NestingType type;
  std::string table;
  SelectItem item;
};

std::set<std::string> shared_keys(const MTable& x, const MTable& inner) {
  std::set<std::string> out;
  if (x.name == inner.name) return x.keys;
  for (const auto& k : x.keys)
    if (inner.keys.count(k)) out.insert(k);
  return out;
}

bool hosts(const MSchema& s, const MTable& x, const ChildReq& r) {
  const MTable& in = s.require(r.table);
  bool agg = r.type == NestingType::A || r.type == NestingType::JA;
  bool corr = r.type == NestingType::J || r.type == NestingType::JA;
  if (corr && shared_keys(x, in).empty()) return false;
  if (agg) {
    if (r.item.column == "*") return !measure_cols(x).empty();
    auto* c = x.col(r.item.column);
    return c && c->numeric();
  }
  if (r.type == NestingType::N) return x.col(r.item.column) != nullptr;
  return true;
}

const MTable& choose_outer(Rng& rng, const MSchema& s, const std::vector<ChildReq>& reqs) {
  std::vector<const MTable*> all, first_only;
  for (const auto& t : s.tables) {
    bool ok = true;
    for (const auto& r : reqs) ok = ok && hosts(s, t, r);
    if (ok) all.push_back(&t);
    if (hosts(s, t, reqs.front())) first_only.push_back(&t);
  }
  const auto& pool = !all.empty() ? all : first_only;
  if (pool.empty()) return s.require(reqs.front().table);
  // Prefer a different table when one fits; self-nesting stays possible.
  std::vector<const MTable*> others;
  for (auto* t : pool)
    if (t->name != reqs.front().table) others.push_back(t);
  if (!others.empty() && rng.chance(0.6)) return *rng.pick(others);
  return *rng.pick(pool);
}

// Builds the predicate embedding `inner` under an outer block on `x`.
// Correlated types get their join condition added to `inner`'s root.
Predicate nested_predicate(Rng& rng, NestingType type, const MTable& x, const MSchema& s, QueryGraph& inner) {
  auto& root = inner.blocks[inner.root];
  const MTable* in = s.find(root.from_table);
  SelectItem item = root.select_items.empty() ? SelectItem{AggFn::None, "*"} : root.select_items.front();
  bool agg = type == NestingType::A || type == NestingType::JA;
  bool corr = type == NestingType::J || type == NestingType::JA;
  Predicate p;
  std::string corr_column;
  if (corr && in) {
    auto keys = shared_keys(x, *in);
    if (!keys.empty()) {
      std::vector<std::string> kv(keys.begin(), keys.end());
      // Correlating on the projected column would make IN trivially true.
      std::vector<std::string> pref;
      for (const auto& k : kv)
        if (k != item.column) pref.push_back(k);
      const auto& k = pref.empty() ? rng.pick(kv) : rng.pick(pref);
      Predicate cj;
      cj.kind = PredKind::CorrelationJoin;
      cj.column = k;
      cj.outer_column = k;
      cj.connector = root.predicates.empty() ? Connector::None : Connector::And;
      root.predicates.push_back(cj);
      corr_column = k;
    }
  }
  if (agg) {
    p.kind = PredKind::AggregateCompare;
    const MCol* c = item.column == "*" ? nullptr : x.col(item.column);
    if (!c || !c->numeric()) {
      auto m = measure_cols(x);
      c = m.empty() ? nullptr : rng.pick(m);
    }
    p.column = c ? c->name : item.column;
    static const std::vector<CmpOp> ops = {CmpOp::Gt, CmpOp::Lt, CmpOp::Ge, CmpOp::Le};
    p.op = rng.pick(ops);
    return p;
  }
  bool can_member = x.col(item.column) != nullptr && corr_column != item.column;
  if (can_member && (!corr || rng.chance(0.6))) {
    p.kind = PredKind::Membership;
    p.column = item.column;
    p.negated = rng.chance(0.15);
  } else {
    p.kind = PredKind::Existence;
    p.negated = rng.chance(0.15);
  }
  return p;
}

Predicate outer_filter(const MTable& x) { return over_selective(x).front(); }

std::vector<Value> json_values(const nlohmann::json& j) {
  std::vector<Value> out;
  for (const auto& v : j) out.push_back(value_from_json(v));
  return out;
}

Predicate relax(const Predicate& p, const std::vector<Value>& witness) {
  Predicate q = p;
  if (p.kind == PredKind::Membership || p.kind == PredKind::Existence) {
    q.negated = !p.negated;
    return q;
  }
  if (p.kind == PredKind::AggregateCompare) {
    q.op = negate(p.op);
    return q;
  }
  std::vector<Value> vals;
  for (const auto& v : witness)
    if (!is_null(v)) vals.push_back(v);
  if (vals.empty()) {
    q.op = negate(p.op);
    return q;
  }
  auto lo = *std::min_element(vals.begin(), vals.end(), [](auto& a, auto& b) { return compare_values(a, b) < 0; });
  auto hi = *std::max_element(vals.begin(), vals.end(), [](auto& a, auto& b) { return compare_values(a, b) < 0; });
  bool numeric = is_numeric(lo);
  switch (p.op) {
    case CmpOp::Gt:
    case CmpOp::Ge:
      if (numeric) {
        auto lit = nice_round(lo, 1, false);
        if (std::holds_alternative<std::int64_t>(p.literal) && std::holds_alternative<double>(lit))
          lit = static_cast<std::int64_t>(std::floor(as_double(lit)));
        q.literal = lit;
        q.op = compare_values(lit, lo) < 0 ? CmpOp::Gt : CmpOp::Ge;
      } else {
        q.literal = lo;
        q.op = CmpOp::Ge;
      }
      break;
    case CmpOp::Lt:
    case CmpOp::Le:
      if (numeric) {
        auto lit = nice_round(hi, 1, true);
        q.literal = lit;
        q.op = compare_values(lit, hi) > 0 ? CmpOp::Lt : CmpOp::Le;
      } else {
        q.literal = hi;
        q.op = CmpOp::Le;
      }
      break;
    default:
      q.op = CmpOp::Eq;
      q.literal = vals.front();
      break;
  }
  return q;
}

std::string words(const std::string& ident) {
  std::string s = ident;
  if (s.rfind("nba_", 0) == 0) s = s.substr(4);
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

std::string op_words(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "is";
    case CmpOp::Ne: return "is not";
    case CmpOp::Lt: return "is less than";
    case CmpOp::Le: return "is at most";
    case CmpOp::Gt: return "is greater than";
    case CmpOp::Ge: return "is at least";
    case CmpOp::Like: return "matches";
    default: return "does not match";
  }
}

std::string compare_words(CmpOp op) {
  switch (op) {
    case CmpOp::Gt: return "more than";
    case CmpOp::Ge: return "at least";
    case CmpOp::Lt: return "less than";
    case CmpOp::Le: return "at most";
    case CmpOp::Eq: return "equal to";
    default: return "different from";
  }
}

std::string agg_words(AggFn f) {
  switch (f) {
    case AggFn::Avg: return "the average";
    case AggFn::Max: return "the highest";
    case AggFn::Min: return "the lowest";
    case AggFn::Sum: return "the total";
    case AggFn::Count: return "the number of";
    default: return "the";
  }
}

struct Verbalizer {
  const QueryGraph& g;

  std::string conditions(int b) const {
    std::string out;
    const auto& preds = g.blocks[b].predicates;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto& p = preds[i];
      if (i) out += p.connector == Connector::Or ? " or " : (i + 1 == preds.size() ? " and " : ", ");
      out += condition(b, p);
    }
    return out;
  }

  std::string subject(int b) const {
    const auto& blk = g.blocks[b];
    std::string cond = conditions(b);
    return words(blk.from_table) + " records" + (cond.empty() ? "" : " where " + cond);
  }

  std::string condition(int b, const Predicate& p) const {
    switch (p.kind) {
      case PredKind::Comparison:
        return words(p.column) + " " + op_words(p.op) + " " + canonical_text(p.literal);
      case PredKind::Membership: {
        const auto& in = g.blocks[p.child];
        std::string col = in.select_items.empty() ? p.column : in.select_items[0].column;
        return words(p.column) + (p.negated ? " is not among" : " is among") + " the " + words(col) +
               " values of " + subject(p.child);
      }
      case PredKind::Existence:
        return std::string(p.negated ? "there are no " : "there are ") + subject(p.child);
      case PredKind::AggregateCompare: {
        const auto& in = g.blocks[p.child];
        SelectItem it = in.select_items.empty() ? SelectItem{AggFn::Count, "*"} : in.select_items[0];
        std::string what = it.fn == AggFn::Count ? "records" : words(it.column);
        return words(p.column) + " is " + compare_words(p.op) + " " + agg_words(it.fn) + " " + what + " of " +
               subject(p.child);
      }
      case PredKind::CorrelationJoin: {
        int parent = g.parent_of(b);
        std::string outer = parent >= 0 ? words(g.blocks[parent].from_table) : "outer";
        return words(p.column) + " matches that of the " + outer + " record";
      }
    }
    return {};
  }

  std::string question() const {
    const auto& root = g.blocks[g.root];
    std::string cond = conditions(g.root);
    std::string tail = cond.empty() ? "" : " where " + cond;
    std::string table = words(root.from_table);
    std::string q;
    std::string group = root.group_by ? "For each " + words(*root.group_by) + ", " : "";
    const SelectItem* agg = nullptr;
    for (const auto& s : root.select_items)
      if (s.fn != AggFn::None) agg = &s;
    if (!agg) {
      std::string col = root.select_items.empty() ? "details" : words(root.select_items[0].column);
      q = group + "which " + col + " values appear in " + table + " records" + tail;
    } else if (agg->fn == AggFn::Count) {
      q = group + "how many " + table + " records are there" + tail;
    } else {
      q = group + "what is " + agg_words(agg->fn) + " " + words(agg->column) + " of " + table + " records" + tail;
    }
    if (root.having)
      q += ", keeping only groups whose " + (root.having->agg == AggFn::Count ? std::string("record count")
                                                                               : words(root.having->column)) +
           " " + op_words(root.having->op) + " " + canonical_text(root.having->literal);
    if (root.order_by)
      q += ", sorted by " + words(item_text(root.order_by->item)) +
           (root.order_by->desc ? " from highest to lowest" : " from lowest to highest");
    if (root.limit) q += ", showing only the first " + std::to_string(*root.limit);
    q[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(q[0])));
    return q + "?";
  }
};

bool vacuous_disjunction(const QueryGraph& g) {
  for (const auto& b : g.blocks) {
    std::map<std::string, int> ne;
    bool any_or = false;
    for (const auto& p : b.predicates) {
      if (p.kind == PredKind::Comparison && p.op == CmpOp::Ne) ++ne[p.column];
      any_or |= p.connector == Connector::Or;
    }
    if (!any_or) continue;
    for (const auto& [c, n] : ne)
      if (n >= 2) return true;
  }
  return false;
}

}  // namespace

struct MockProvider::Impl {
  std::uint64_t seed;
  FailurePlan plan;
  std::mutex mu;
  std::map<std::uint64_t, int> seen;
  std::vector<std::int64_t> rule_counts;
  std::int64_t injected = 0;
  std::map<std::uint64_t, std::shared_ptr<const MSchema>> schemas;

  Impl(std::uint64_t s, FailurePlan p) : seed(s), plan(std::move(p)), rule_counts(plan.rules.size(), 0) {}

  std::shared_ptr<const MSchema> schema(const Slots& slots) {
    auto text = slot(slots, "database");
    if (text.empty()) throw Error("mock: no database slot");
    auto h = fnv1a(text);
    auto it = schemas.find(h);
    if (it != schemas.end()) return it->second;
    auto s = std::make_shared<const MSchema>(parse_schema(text));
    schemas[h] = s;
    return s;
  }

  static bool in_stream(PromptKind k, const std::string& stream) {
    if (stream == "where") return k == PromptKind::WhereClause || k == PromptKind::OneShot;
    if (stream == "nested")
      return k == PromptKind::NestedN || k == PromptKind::NestedA || k == PromptKind::NestedJ ||
             k == PromptKind::NestedJA || k == PromptKind::OneShotNested;
    return false;
  }

  // Returns the index of the rule that fires for this event, if any.
  // Caller holds the mutex.
  std::optional<std::size_t> fire(PromptKind kind, bool repair, int attempt, bool sub_event = false) {
    std::optional<std::size_t> hit;
    for (std::size_t i = 0; i < plan.rules.size(); ++i) {
      const auto& r = plan.rules[i];
      if (sub_event != (r.action == FailureAction::OverSelective && kind == PromptKind::OneShotNested)) continue;
      if (r.kind ? *r.kind != kind : !in_stream(kind, r.stream)) continue;
      if (!r.kind && r.stream.empty()) continue;
      if (repair && !r.on_repair) continue;
      if (r.attempt != 0 && r.attempt != attempt) continue;
      std::int64_t n = rule_counts[i]++;
      bool on = n < r.first || (r.period > 0 && (n + 1) % r.period == 0) ||
                (r.rate > 0 && static_cast<double>(mix(seed ^ mix(i * 7919 + static_cast<std::uint64_t>(n))) >> 11) *
                                       0x1.0p-53 <
                                   r.rate);
      if (on && !hit) hit = i;
    }
    if (hit) ++injected;
    return hit;
  }

  std::string respond(PromptKind kind, const Slots& slots, Rng& rng, const FailureRule* fail);
};

MockProvider::MockProvider(std::uint64_t seed, FailurePlan plan)
    : impl_(std::make_unique<Impl>(seed, std::move(plan))) {}

MockProvider::~MockProvider() = default;

std::int64_t MockProvider::injected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->injected;
}

std::string MockProvider::complete(PromptKind kind, const std::string&, const Slots& slots, int attempt) {
  std::lock_guard lock(impl_->mu);
  std::uint64_t h = fnv1a(to_string(kind));
  for (const auto& [k, v] : slots) h = fnv1a(v, fnv1a(k, h));
  h = mix(h ^ mix(static_cast<std::uint64_t>(attempt)));
  int n = impl_->seen[h]++;
  Rng rng(mix(impl_->seed ^ h ^ mix(static_cast<std::uint64_t>(n) + 0x51ed)));
  bool repair = !slot(slots, "feedback").empty();
  auto rule = impl_->fire(kind, repair, attempt);
  const FailureRule* r = rule ? &impl_->plan.rules[*rule] : nullptr;
  if (r) {
    switch (r->action) {
      case FailureAction::Malformed: return "{\"" + required_keys(kind).front() + "\": \"unterminated";
      case FailureAction::FixedResponse: return r->response;
      default: break;
    }
  }
  auto out = impl_->respond(kind, slots, rng, r);
  if (r && r->action == FailureAction::ProseWrapped) return "Sure, here is what you asked for: " + out;
  return out;
}

std::string MockProvider::Impl::respond(PromptKind kind, const Slots& slots, Rng& rng, const FailureRule* fail) {
  using nlohmann::json;
  bool over = fail && fail->action == FailureAction::OverSelective;
  bool broken = fail && fail->action == FailureAction::InvalidSql;
  auto reply = [](const std::string& key, const json& v) { return json{{key, v}}.dump(); };

  switch (kind) {
    case PromptKind::FromClause: {
      auto s = schema(slots);
      auto purpose = slot(slots, "purpose");
      std::vector<const MTable*> cands;
      for (const auto& t : s->tables) {
        if (purpose == "inner_agg" && measure_cols(t).empty()) continue;
        if (purpose == "inner_plain" && t.keys.empty()) continue;
        cands.push_back(&t);
      }
      if (cands.empty())
        for (const auto& t : s->tables) cands.push_back(&t);
      return reply("from", "FROM " + rng.pick(cands)->name);
    }
    case PromptKind::WhereClause: {
      auto s = schema(slots);
      auto b = partial_block(slots);
      const auto& t = s->require(b.from_table);
      if (broken) return reply("where", "WHERE " + t.cols.front().name + " >> AND");
      std::vector<Predicate> preds;
      if (over) {
        preds = over_selective(t);
      } else {
        auto exec = parse_exec(slots);
        int count = rng.chance(0.6) ? 1 : 2;
        preds = make_where(rng, t, exec, count);
      }
      return reply("where", "WHERE " + where_text(t.name, preds));
    }
    case PromptKind::GroupBy: {
      auto s = schema(slots);
      auto b = partial_block(slots);
      return reply("group", "GROUP BY " + group_column(rng, s->require(b.from_table), b));
    }
    case PromptKind::Having: {
      auto b = partial_block(slots);
      auto exec = parse_exec(slots);
      std::int64_t k = 2;
      if (!slot(slots, "feedback").empty()) {
        k = 1;
      } else if (!exec.empty() && b.group_by) {
        std::map<std::string, int> counts;
        int best = 1;
        for (const auto& r : exec.rows)
          if (auto* v = exec.get(r, *b.group_by)) best = std::max(best, ++counts[canonical_text(*v)]);
        k = 1 + static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(best)));
      } else {
        k = 2 + static_cast<std::int64_t>(rng.index(3));
      }
      return reply("having", "HAVING COUNT(*) >= " + std::to_string(k));
    }
    case PromptKind::SelectPlain:
    case PromptKind::SelectAgg: {
      auto s = schema(slots);
      auto b = partial_block(slots);
      const auto& t = s->require(b.from_table);
      auto purpose = slot(slots, "purpose");
      if (kind == PromptKind::SelectPlain) return reply("select", "SELECT " + item_text(plain_column(rng, t, b, purpose)));
      return reply("select", "SELECT " + items_text(agg_items(rng, t, b, purpose)));
    }
    case PromptKind::OrderBy: {
      auto s = schema(slots);
      auto b = partial_block(slots);
      const auto& t = s->require(b.from_table);
      SelectItem item;
      for (const auto& it : b.select_items)
        if (it.fn != AggFn::None) item = it;
      if (item.column.empty()) {
        auto m = measure_cols(t);
        item = m.empty() ? (b.select_items.empty() ? SelectItem{AggFn::None, t.cols.front().name} : b.select_items[0])
                         : SelectItem{AggFn::None, rng.pick(m)->name};
      }
      return reply("order", "ORDER BY " + item_text(item) + (rng.chance(0.7) ? " DESC" : " ASC"));
    }
    case PromptKind::Limit: {
      static const std::vector<int> ks = {1, 3, 5, 10};
      return reply("limit", "LIMIT " + std::to_string(rng.pick(ks)));
    }
    case PromptKind::InnerBlockSelection: {
      auto cands = json::parse(slot(slots, "candidate_inner_query_blocks"));
      if (!cands.is_array() || cands.empty()) return reply("inner_query_block", 0);
      return reply("inner_query_block", static_cast<int>(rng.index(cands.size())));
    }
    case PromptKind::OuterFrom: {
      auto s = schema(slots);
      auto subs = json::parse(slot(slots, "subquery"));
      auto types = json::parse(slot(slots, "nesting_type"));
      std::vector<ChildReq> reqs;
      for (std::size_t i = 0; i < subs.size(); ++i) {
        auto g = parse_sql(subs[i].get<std::string>());
        const auto& root = g.blocks[g.root];
        reqs.push_back({nesting_type_from_string(types.at(i)), root.from_table,
                        root.select_items.empty() ? SelectItem{AggFn::None, "*"} : root.select_items[0]});
      }
      if (reqs.empty()) throw Error("mock: outer_from without a subquery");
      return reply("from", "FROM " + choose_outer(rng, *s, reqs).name);
    }
    case PromptKind::NestedN:
    case PromptKind::NestedA:
    case PromptKind::NestedJ:
    case PromptKind::NestedJA: {
      auto s = schema(slots);
      NestingType type = kind == PromptKind::NestedN   ? NestingType::N
                         : kind == PromptKind::NestedA ? NestingType::A
                         : kind == PromptKind::NestedJ ? NestingType::J
                                                       : NestingType::JA;
      auto where = slot(slots, "generated_where_clause");
      auto outer = parse_sql("SELECT * " + slot(slots, "generated_from_clause") + (where.empty() ? "" : " WHERE " + where));
      const auto& x = s->require(outer.blocks[0].from_table);
      auto inner = parse_sql(slot(slots, "selected_inner_query_block"));
      auto p = nested_predicate(rng, type, x, *s, inner);
      std::string op = outer.blocks[0].predicates.empty() ? "" : (rng.chance(0.1) ? "OR" : "AND");
      auto g = attach(outer, p, inner);
      auto text = render_predicate(g, 0, g.blocks[0].predicates.back());
      if (broken) text = text.substr(0, text.size() / 2);
      if (over) text += " AND " + render_predicate(g, 0, outer_filter(x));
      return json{{"nested_predicate", text}, {"logical_operator", op}}.dump();
    }
    case PromptKind::ProvenanceRefine: {
      auto g = parse_sql(slot(slots, "original_query"));
      auto report = json::parse(slot(slots, "provenance_report"));
      const auto& blk = report.at("blocking");
      auto witness = json_values(report.value("witness_values", json::array()));
      auto& root = g.blocks[g.root];
      if (blk.value("having", false)) {
        if (!root.having) throw Error("mock: report blames a missing HAVING");
        root.having = relax(*root.having, witness);
      } else {
        auto idx = blk.at("index").get<std::size_t>();
        if (idx >= root.predicates.size()) throw Error("mock: blamed predicate index out of range");
        root.predicates[idx] = relax(root.predicates[idx], witness);
      }
      return reply("corrected_query", render_sql(normalize(g)));
    }
    case PromptKind::NaturalnessEval: {
      QueryGraph g;
      try {
        g = parse_sql(slot(slots, "sql"));
      } catch (const ParseError&) {
        return json{{"relevance_score", 1}, {"specificity_clarity_of_intent_score", 1},
                    {"overall_naturalness_score", 1}, {"reason", "The query could not be read."}}
            .dump();
      }
      if (vacuous_disjunction(g))
        return json{{"relevance_score", 2},
                    {"specificity_clarity_of_intent_score", 1},
                    {"overall_naturalness_score", 1},
                    {"reason", "Two inequalities on one column joined by OR admit every row."}}
            .dump();
      int base = g.blocks.size() > 3 ? 3 : 4;
      int overall = base + (rng.chance(0.3) ? 1 : 0);
      return json{{"relevance_score", std::min(5, overall + 0)},
                  {"specificity_clarity_of_intent_score", base},
                  {"overall_naturalness_score", overall},
                  {"reason", "Filters and projection describe a concrete lookup."}}
          .dump();
    }
    case PromptKind::Verbalize: {
      QueryGraph g;
      auto ast = slot(slots, "ast");
      if (!ast.empty()) g = graph_from_json(json::parse(ast));
      else g = parse_sql(slot(slots, "sql"));
      return reply("question", Verbalizer{g}.question());
    }
    case PromptKind::OneShot: {
      auto s = schema(slots);
      auto clauses = json::parse(slot(slots, "clauses")).get<std::vector<std::string>>();
      auto has = [&](const std::string& c) { return std::find(clauses.begin(), clauses.end(), c) != clauses.end(); };
      // Schema-only drafting gravitates to the same few tables and columns.
      const double skew = 1.6;
      const auto& t = s->tables.at(rng.zipf(s->tables.size(), skew));
      QueryBlock b;
      b.from_table = t.name;
      if (broken) return reply("query", "SELECT FROM " + t.name + " WHERE");
      if (over) {
        b.predicates = over_selective(t);
      } else {
        auto cands = cols_where(t, [](const MCol& c) { return !id_like(c.name); });
        int count = rng.chance(0.7) ? 1 : 2;
        std::set<std::string> used;
        for (int i = 0; i < count && !cands.empty(); ++i) {
          const MCol& c = *cands.at(rng.zipf(cands.size(), skew));
          if (used.count(c.name) || t.samples.empty()) continue;
          used.insert(c.name);
          int idx = t.col_index(c.name);
          const Value& v = t.samples.at(rng.index(t.samples.size())).at(idx);
          if (is_null(v)) continue;
          Predicate p;
          p.column = c.name;
          p.op = c.numeric() ? (rng.chance(0.5) ? CmpOp::Ge : CmpOp::Le) : CmpOp::Eq;
          p.literal = v;
          p.connector = b.predicates.empty() ? Connector::None : Connector::And;
          b.predicates.push_back(p);
        }
        if (b.predicates.empty()) b.predicates = make_where(rng, t, {}, 1);
      }
      if (has("group_by")) b.group_by = group_column(rng, t, b);
      if (has("having")) {
        Predicate h;
        h.agg = AggFn::Count;
        h.column = "*";
        h.op = CmpOp::Ge;
        h.literal = std::int64_t{2};
        b.having = h;
      }
      if (has("select_agg")) {
        auto m = measure_cols(t);
        SelectItem agg = m.empty() || rng.chance(0.5) ? SelectItem{AggFn::Count, "*"}
                                                      : SelectItem{AggFn::Avg, m.at(rng.zipf(m.size(), skew))->name};
        if (b.group_by) b.select_items.push_back({AggFn::None, *b.group_by});
        b.select_items.push_back(agg);
      } else {
        auto text = cols_where(t, [](const MCol& c) { return c.textual(); });
        if (b.group_by) b.select_items.push_back({AggFn::None, *b.group_by});
        else if (!text.empty()) b.select_items.push_back({AggFn::None, text.at(rng.zipf(text.size(), skew))->name});
        else b.select_items.push_back({AggFn::None, t.cols.front().name});
      }
      if (has("order_by")) {
        SelectItem item = b.select_items.back();
        if (item.fn == AggFn::None) {
          auto m = measure_cols(t);
          if (!m.empty()) item = {AggFn::None, m.front()->name};
        }
        b.order_by = OrderBy{item, true};
      }
      if (has("limit")) b.limit = 5;
      return reply("query", render_sql(single_block(b)));
    }
    case PromptKind::OneShotNested: {
      auto s = schema(slots);
      auto shape = shape_from_json(json::parse(slot(slots, "shape")));
      auto types = json::parse(slot(slots, "nesting_types")).get<std::vector<std::string>>();
      auto leaves = json::parse(slot(slots, "leaf_blocks")).get<std::vector<std::string>>();
      auto root_clauses = json::parse(slot(slots, "root_clauses")).get<std::vector<std::string>>();
      auto has = [&](const std::string& c) {
        return std::find(root_clauses.begin(), root_clauses.end(), c) != root_clauses.end();
      };
      std::size_t n = shape.parents.size() + 1;
      if (types.size() != shape.parents.size()) throw Error("mock: nesting types do not match the shape");
      std::vector<std::vector<int>> kids(n);
      for (std::size_t v = 1; v < n; ++v) kids[shape.parents[v - 1]].push_back(static_cast<int>(v));
      std::vector<bool> used(leaves.size(), false);
      auto edge_type = [&](int v) { return nesting_type_from_string(types.at(v - 1)); };
      std::function<QueryGraph(int)> build = [&](int v) -> QueryGraph {
        bool want_agg = v > 0 && (edge_type(v) == NestingType::A || edge_type(v) == NestingType::JA);
        if (kids[v].empty()) {
          for (int pass = 0; pass < 2; ++pass)
            for (std::size_t i = 0; i < leaves.size(); ++i) {
              if (used[i]) continue;
              auto g = parse_sql(leaves[i]);
              if (pass == 0 && g.blocks[0].aggregates() != want_agg) continue;
              used[i] = true;
              return g;
            }
          throw Error("mock: not enough leaf blocks");
        }
        std::vector<QueryGraph> subs;
        std::vector<ChildReq> reqs;
        for (int c : kids[v]) {
          subs.push_back(build(c));
          const auto& r = subs.back().blocks[0];
          reqs.push_back({edge_type(c), r.from_table,
                          r.select_items.empty() ? SelectItem{AggFn::None, "*"} : r.select_items[0]});
        }
        const auto& x = choose_outer(rng, *s, reqs);
        QueryBlock ob;
        ob.from_table = x.name;
        QueryGraph g = single_block(ob);
        for (std::size_t i = 0; i < subs.size(); ++i) {
          auto p = nested_predicate(rng, edge_type(kids[v][i]), x, *s, subs[i]);
          g = attach(g, p, subs[i]);
          if (fire(PromptKind::OneShotNested, false, 1, true)) {
            auto f = outer_filter(x);
            f.connector = Connector::And;
            g.blocks[0].predicates.push_back(f);
          }
        }
        auto& root = g.blocks[0];
        if (v == 0) {
          if (has("group_by")) root.group_by = group_column(rng, x, root);
          if (has("having")) {
            Predicate h;
            h.agg = AggFn::Count;
            h.column = "*";
            h.op = CmpOp::Ge;
            h.literal = std::int64_t{1};
            root.having = h;
          }
          root.select_items = has("select_agg") ? agg_items(rng, x, root, "query")
                                                : std::vector<SelectItem>{plain_column(rng, x, root, "query")};
          if (has("order_by")) {
            SelectItem item = root.select_items.back();
            if (item.fn == AggFn::None) {
              auto m = measure_cols(x);
              if (!m.empty()) item = {AggFn::None, m.front()->name};
            }
            root.order_by = OrderBy{item, true};
          }
          if (has("limit")) root.limit = 5;
        } else if (want_agg) {
          root.select_items = agg_items(rng, x, root, "inner_agg");
        } else {
          root.select_items = {plain_column(rng, x, root, "inner_plain")};
        }
        return g;
      };
      auto g = build(0);
      auto sql = render_sql(g);
      if (broken) sql = sql.substr(0, sql.size() * 2 / 3);
      return reply("query", sql);
    }
  }
  throw Error("mock: unsupported prompt kind");
}

}  // namespace sparta
