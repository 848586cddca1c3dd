#include "sparta/sql_parser.hpp"

#include <cctype>

namespace sparta {

namespace {

enum class Tok { Ident, QuotedIdent, Number, String, Symbol, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t pos;
};

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<Token> tokenize(const std::string& s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = s[i];
    if (std::isspace(c)) {
      ++i;
    } else if (std::isalpha(c) || c == '_') {
      std::size_t j = i;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
      out.push_back({Tok::Ident, s.substr(i, j - i), i});
      i = j;
    } else if (std::isdigit(c) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i;
      while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
      if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
        if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
          j = k;
          while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
      }
      out.push_back({Tok::Number, s.substr(i, j - i), i});
      i = j;
    } else if (c == '\'' || c == '"' || c == '`') {
      char q = static_cast<char>(c);
      std::string text;
      std::size_t j = i + 1;
      bool closed = false;
      while (j < s.size()) {
        if (s[j] == q) {
          if (j + 1 < s.size() && s[j + 1] == q) {
            text += q;
            j += 2;
            continue;
          }
          closed = true;
          ++j;
          break;
        }
        text += s[j++];
      }
      if (!closed) throw ParseError("unterminated quote at offset " + std::to_string(i));
      out.push_back({q == '\'' ? Tok::String : Tok::QuotedIdent, text, i});
      i = j;
    } else {
      static const char* two[] = {"<>", "!=", "<=", ">="};
      std::string sym(1, static_cast<char>(c));
      for (const char* t : two)
        if (s.compare(i, 2, t) == 0) sym = t;
      if (sym.size() == 1 && std::string("(),.*=<>;-+").find(static_cast<char>(c)) == std::string::npos)
        throw ParseError(std::string("unexpected character '") + static_cast<char>(c) + "' at offset " +
                         std::to_string(i));
      out.push_back({Tok::Symbol, sym, i});
      i += sym.size();
    }
  }
  out.push_back({Tok::End, "", s.size()});
  return out;
}

const char* kReserved[] = {"SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "LIMIT",
                           "AND", "OR", "NOT", "IN", "EXISTS", "LIKE", "AS", "ASC", "DESC",
                           "DISTINCT", "UNION", "JOIN", "ON", "BETWEEN", "IS", "NULL"};

bool reserved(const std::string& w) {
  auto u = upper(w);
  for (const char* r : kReserved)
    if (u == r) return true;
  return false;
}

AggFn agg_keyword(const std::string& w) {
  auto u = upper(w);
  if (u == "COUNT") return AggFn::Count;
  if (u == "SUM") return AggFn::Sum;
  if (u == "AVG") return AggFn::Avg;
  if (u == "MIN") return AggFn::Min;
  if (u == "MAX") return AggFn::Max;
  return AggFn::None;
}

struct Scope {
  std::string table;
  std::string alias;
};

struct ColRef {
  std::string qualifier;
  std::string column;
};

class Parser {
 public:
  explicit Parser(const std::string& sql) : toks_(tokenize(sql)) {}

  QueryGraph run() {
    parse_query();
    if (peek_sym(";")) ++pos_;
    if (cur().kind != Tok::End) fail("unexpected trailing input");
    QueryGraph g;
    g.blocks = std::move(blocks_);
    validate(g);
    return normalize(std::move(g));
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<QueryBlock> blocks_;
  std::vector<Scope> scopes_;

  const Token& cur() const { return toks_[pos_]; }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " at offset " + std::to_string(cur().pos) +
                     (cur().kind == Tok::End ? " (end of input)" : " near '" + cur().text + "'"));
  }
  bool peek_kw(const char* kw, std::size_t ahead = 0) const {
    const auto& t = toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    return t.kind == Tok::Ident && upper(t.text) == kw;
  }
  bool peek_sym(const char* s, std::size_t ahead = 0) const {
    const auto& t = toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    return t.kind == Tok::Symbol && t.text == s;
  }
  bool accept_kw(const char* kw) {
    if (!peek_kw(kw)) return false;
    ++pos_;
    return true;
  }
  void expect_kw(const char* kw) {
    if (!accept_kw(kw)) fail(std::string("expected ") + kw);
  }
  void expect_sym(const char* s) {
    if (!peek_sym(s)) fail(std::string("expected '") + s + "'");
    ++pos_;
  }
  std::string ident() {
    const auto& t = cur();
    if (t.kind == Tok::QuotedIdent || (t.kind == Tok::Ident && !reserved(t.text))) {
      ++pos_;
      return t.text;
    }
    fail("expected identifier");
  }

  ColRef colref() {
    ColRef r;
    r.column = ident();
    if (peek_sym(".")) {
      ++pos_;
      r.qualifier = r.column;
      r.column = ident();
    }
    return r;
  }

  // 0 for the current block, 1 for its parent.
  int resolve(const ColRef& r) const {
    if (r.qualifier.empty()) return 0;
    auto q = upper(r.qualifier);
    for (int level = 0; level < static_cast<int>(scopes_.size()); ++level) {
      const auto& s = scopes_[scopes_.size() - 1 - level];
      if ((!s.alias.empty() && upper(s.alias) == q) || upper(s.table) == q) {
        if (level > 1) throw ParseError("reference to '" + r.qualifier + "' skips a nesting level");
        return level;
      }
    }
    throw ParseError("unknown table or alias '" + r.qualifier + "'");
  }

  std::string local(const ColRef& r) const {
    if (resolve(r) != 0) throw ParseError("'" + r.qualifier + "." + r.column + "' must refer to the current block");
    return r.column;
  }

  struct RawItem {
    AggFn fn = AggFn::None;
    ColRef col;
  };

  RawItem raw_item() {
    RawItem it;
    if (cur().kind == Tok::Ident && peek_sym("(", 1) && agg_keyword(cur().text) != AggFn::None) {
      it.fn = agg_keyword(cur().text);
      pos_ += 2;
      if (peek_kw("DISTINCT")) fail("DISTINCT is not supported");
      if (peek_sym("*")) {
        if (it.fn != AggFn::Count) fail("'*' is only allowed inside COUNT");
        ++pos_;
        it.col.column = "*";
      } else {
        it.col = colref();
      }
      expect_sym(")");
      return it;
    }
    it.col = colref();
    return it;
  }

  SelectItem item(const RawItem& r) const {
    if (r.col.column == "*") return {r.fn, "*"};
    return {r.fn, local(r.col)};
  }

  static bool cmp_op(const Token& t, CmpOp& op) {
    if (t.kind != Tok::Symbol) return false;
    if (t.text == "=") op = CmpOp::Eq;
    else if (t.text == "<>" || t.text == "!=") op = CmpOp::Ne;
    else if (t.text == "<") op = CmpOp::Lt;
    else if (t.text == "<=") op = CmpOp::Le;
    else if (t.text == ">") op = CmpOp::Gt;
    else if (t.text == ">=") op = CmpOp::Ge;
    else return false;
    return true;
  }

  bool at_literal() const {
    return cur().kind == Tok::Number || cur().kind == Tok::String ||
           ((peek_sym("-") || peek_sym("+")) && toks_[pos_ + 1].kind == Tok::Number);
  }

  Value literal() {
    bool neg = false;
    if (peek_sym("-") || peek_sym("+")) {
      neg = cur().text == "-";
      ++pos_;
    }
    const auto& t = cur();
    if (t.kind == Tok::String) {
      if (neg) fail("sign before a string");
      ++pos_;
      return t.text;
    }
    if (t.kind != Tok::Number) fail("expected a literal");
    ++pos_;
    try {
      if (t.text.find_first_of(".eE") != std::string::npos) {
        double d = std::stod(t.text);
        return neg ? -d : d;
      }
      auto v = static_cast<std::int64_t>(std::stoll(t.text));
      return neg ? -v : v;
    } catch (const std::exception&) {
      throw ParseError("invalid number '" + t.text + "'");
    }
  }

  int subquery() {
    expect_sym("(");
    if (!peek_kw("SELECT")) fail("expected a subquery");
    int child = parse_query();
    expect_sym(")");
    return child;
  }

  Predicate predicate() {
    Predicate p;
    if (peek_kw("NOT") && peek_kw("EXISTS", 1)) {
      pos_ += 2;
      p.kind = PredKind::Existence;
      p.negated = true;
      p.child = subquery();
      return p;
    }
    if (accept_kw("EXISTS")) {
      p.kind = PredKind::Existence;
      p.child = subquery();
      return p;
    }
    if (peek_sym("(")) fail("parenthesized conditions are not supported");
    if (cur().kind == Tok::Ident && agg_keyword(cur().text) != AggFn::None && peek_sym("(", 1))
      fail("aggregates are not allowed in WHERE");
    auto lhs = colref();
    if (peek_kw("NOT") && peek_kw("IN", 1)) {
      pos_ += 2;
      p.kind = PredKind::Membership;
      p.negated = true;
      p.column = local(lhs);
      p.child = subquery();
      return p;
    }
    if (accept_kw("IN")) {
      p.kind = PredKind::Membership;
      p.column = local(lhs);
      p.child = subquery();
      return p;
    }
    if (peek_kw("NOT") && peek_kw("LIKE", 1)) {
      pos_ += 2;
      p.op = CmpOp::NotLike;
      p.column = local(lhs);
      p.literal = literal();
      return p;
    }
    if (accept_kw("LIKE")) {
      p.op = CmpOp::Like;
      p.column = local(lhs);
      p.literal = literal();
      return p;
    }
    CmpOp op;
    if (!cmp_op(cur(), op)) fail("expected a comparison operator");
    ++pos_;
    p.op = op;
    if (peek_sym("(")) {
      p.kind = PredKind::AggregateCompare;
      p.column = local(lhs);
      p.child = subquery();
      return p;
    }
    if (at_literal()) {
      p.column = local(lhs);
      p.literal = literal();
      return p;
    }
    auto rhs = colref();
    int l = resolve(lhs), r = resolve(rhs);
    if (op != CmpOp::Eq || l == r)
      fail("column comparisons must be equality joins against the enclosing block");
    p.kind = PredKind::CorrelationJoin;
    p.op = CmpOp::Eq;
    p.outer_column = l == 1 ? lhs.column : rhs.column;
    p.column = l == 1 ? rhs.column : lhs.column;
    return p;
  }

  int parse_query() {
    expect_kw("SELECT");
    if (peek_kw("DISTINCT")) fail("DISTINCT is not supported");
    std::vector<RawItem> raw;
    if (peek_sym("*")) {
      ++pos_;
    } else {
      raw.push_back(raw_item());
      while (peek_sym(",")) {
        ++pos_;
        raw.push_back(raw_item());
      }
    }
    expect_kw("FROM");
    Scope scope;
    scope.table = ident();
    if (accept_kw("AS")) scope.alias = ident();
    else if (cur().kind == Tok::Ident && !reserved(cur().text)) scope.alias = ident();
    if (peek_sym(",") || peek_kw("JOIN")) fail("only single-table FROM clauses are supported");

    int idx = static_cast<int>(blocks_.size());
    blocks_.emplace_back();
    scopes_.push_back(scope);
    QueryBlock b;
    b.from_table = scope.table;
    for (const auto& r : raw) b.select_items.push_back(item(r));

    if (accept_kw("WHERE")) {
      b.predicates.push_back(predicate());
      while (peek_kw("AND") || peek_kw("OR")) {
        auto conn = accept_kw("AND") ? Connector::And : (++pos_, Connector::Or);
        auto p = predicate();
        p.connector = conn;
        b.predicates.push_back(std::move(p));
      }
    }
    if (accept_kw("GROUP")) {
      expect_kw("BY");
      b.group_by = local(colref());
      if (peek_sym(",")) fail("GROUP BY takes a single column");
    }
    if (accept_kw("HAVING")) {
      Predicate h;
      auto it = raw_item();
      if (it.fn == AggFn::None) fail("HAVING must compare an aggregate");
      h.agg = it.fn;
      h.column = it.col.column == "*" ? "*" : local(it.col);
      CmpOp op;
      if (!cmp_op(cur(), op)) fail("expected a comparison operator");
      ++pos_;
      h.op = op;
      h.literal = literal();
      b.having = h;
    }
    if (accept_kw("ORDER")) {
      expect_kw("BY");
      OrderBy o;
      o.item = item(raw_item());
      if (accept_kw("DESC")) o.desc = true;
      else accept_kw("ASC");
      if (peek_sym(",")) fail("ORDER BY takes a single key");
      b.order_by = o;
    }
    if (accept_kw("LIMIT")) {
      if (cur().kind != Tok::Number || cur().text.find_first_not_of("0123456789") != std::string::npos)
        fail("LIMIT expects a positive integer");
      b.limit = std::stoll(cur().text);
      ++pos_;
    }
    scopes_.pop_back();
    blocks_[idx] = std::move(b);
    return idx;
  }
};

}  // namespace

QueryGraph parse_sql(const std::string& sql) {
  try {
    return Parser(sql).run();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
}

std::string clause_body(const std::string& text, const std::string& keyword) {
  auto trim = [](std::string s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return std::string{};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  };
  auto s = trim(text);
  while (!s.empty() && s.back() == ';') s = trim(s.substr(0, s.size() - 1));
  // Match the keyword word by word so "GROUP   BY" is accepted.
  std::size_t pos = 0;
  std::size_t kpos = 0;
  auto kw = upper(keyword);
  while (kpos < kw.size()) {
    if (kw[kpos] == ' ') {
      if (pos >= s.size() || !std::isspace(static_cast<unsigned char>(s[pos]))) return s;
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
      ++kpos;
      continue;
    }
    if (pos >= s.size() || std::toupper(static_cast<unsigned char>(s[pos])) != kw[kpos]) return s;
    ++pos;
    ++kpos;
  }
  if (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '(') return s;
  return trim(s.substr(pos));
}

std::string assemble_clauses(const std::map<std::string, std::string>& clauses) {
  auto body = [&](const char* key, const char* keyword) -> std::string {
    auto it = clauses.find(key);
    if (it == clauses.end()) return "";
    return clause_body(it->second, keyword);
  };
  auto from = body("from", "FROM");
  if (from.empty()) throw ParseError("no FROM clause to assemble");
  auto select = body("select", "SELECT");
  std::string sql = "SELECT " + (select.empty() ? std::string("*") : select) + " FROM " + from;
  const std::pair<const char*, const char*> rest[] = {
      {"where", "WHERE"}, {"group", "GROUP BY"}, {"having", "HAVING"}, {"order", "ORDER BY"}, {"limit", "LIMIT"}};
  for (const auto& [key, keyword] : rest) {
    auto b = body(key, keyword);
    if (!b.empty()) sql += std::string(" ") + keyword + " " + b;
  }
  return sql;
}

}  // namespace sparta
