#include "sparta/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>

#include "sparta/executor.hpp"

namespace sparta {

namespace {

std::string quote_ident(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

SemType sem_type(const std::string& declared) {
  auto d = lower(declared);
  if (d.find("int") != std::string::npos) return SemType::Integer;
  if (d.find("date") != std::string::npos || d.find("time") != std::string::npos) return SemType::Date;
  if (d.find("real") != std::string::npos || d.find("floa") != std::string::npos ||
      d.find("doub") != std::string::npos || d.find("num") != std::string::npos ||
      d.find("dec") != std::string::npos)
    return SemType::Real;
  return SemType::Text;
}

SemType sem_type_from_string(const std::string& s) {
  if (s == "integer") return SemType::Integer;
  if (s == "real") return SemType::Real;
  if (s == "date") return SemType::Date;
  return SemType::Text;
}

std::string edge_label(const JoinEdge& e) {
  return e.left_table + "." + e.left_column + " = " + e.right_table + "." + e.right_column;
}

}  // namespace

std::string to_string(SemType t) {
  switch (t) {
    case SemType::Integer: return "integer";
    case SemType::Real: return "real";
    case SemType::Date: return "date";
    default: return "text";
  }
}

const ColumnInfo* TableInfo::column(const std::string& n) const {
  for (const auto& c : columns)
    if (c.name == n) return &c;
  return nullptr;
}

std::pair<std::string, std::string> JoinEdge::side(const std::string& table) const {
  if (left_table == table) return {left_column, right_table};
  return {right_column, left_table};
}

const TableInfo* Catalog::table(const std::string& name) const {
  for (const auto& t : tables)
    if (t.name == name) return &t;
  return nullptr;
}

const TableInfo& Catalog::require_table(const std::string& name) const {
  if (auto* t = table(name)) return *t;
  throw Error("unknown table '" + name + "'");
}

std::vector<JoinEdge> Catalog::edges_of(const std::string& t) const {
  std::vector<JoinEdge> out;
  for (const auto& e : join_edges)
    if (e.touches(t)) out.push_back(e);
  return out;
}

bool Catalog::joinable(const std::string& a, const std::string& b) const {
  for (const auto& e : join_edges)
    if ((e.left_table == a && e.right_table == b) || (e.left_table == b && e.right_table == a))
      return true;
  return false;
}

Catalog load_catalog(const std::string& db_path, std::size_t sample_k) {
  if (!std::filesystem::is_regular_file(db_path))
    throw Error("cannot read database file '" + db_path + "'");
  Database db(db_path);
  Catalog c;
  c.db_path = db_path;
  auto names = db.execute(
      "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name");
  if (names.rows.empty()) throw Error("zero tables in '" + db_path + "'");

  for (const auto& r : names.rows) {
    TableInfo t;
    t.name = std::get<std::string>(r[0]);
    auto q = quote_ident(t.name);
    for (const auto& col : db.execute("PRAGMA table_info(" + q + ")").rows) {
      ColumnInfo ci;
      ci.name = std::get<std::string>(col[1]);
      ci.type = sem_type(is_null(col[2]) ? "" : std::get<std::string>(col[2]));
      ci.primary_key = std::get<std::int64_t>(col[5]) != 0;
      auto cq = quote_ident(ci.name);
      auto stats = db.execute("SELECT MIN(" + cq + "), MAX(" + cq + "), COUNT(DISTINCT " + cq +
                              ") FROM " + q);
      ci.min = stats.rows[0][0];
      ci.max = stats.rows[0][1];
      ci.distinct = std::get<std::int64_t>(stats.rows[0][2]);
      t.columns.push_back(std::move(ci));
    }
    for (const auto& fk : db.execute("PRAGMA foreign_key_list(" + q + ")").rows) {
      ForeignKey f;
      f.ref_table = std::get<std::string>(fk[2]);
      f.column = std::get<std::string>(fk[3]);
      f.ref_column = is_null(fk[4]) ? "" : std::get<std::string>(fk[4]);
      t.foreign_keys.push_back(std::move(f));
    }
    t.row_count = std::get<std::int64_t>(db.execute("SELECT COUNT(*) FROM " + q).rows[0][0]);
    t.sample_rows = db.execute("SELECT * FROM " + q + " ORDER BY rowid LIMIT " + std::to_string(sample_k)).rows;
    c.source_names.insert(t.name);
    c.tables.push_back(std::move(t));
  }
  return c;
}

std::vector<JoinEdge> infer_join_edges(const Catalog& catalog, const std::vector<std::string>& key_hints) {
  Database db(catalog.db_path);
  std::set<std::string> hints;
  for (const auto& h : key_hints) hints.insert(lower(h));

  std::vector<JoinEdge> edges;
  for (const auto& t : catalog.tables) {
    for (const auto& fk : t.foreign_keys) {
      JoinEdge e{t.name, fk.column, fk.ref_table, fk.ref_column, JoinKind::PkFk};
      if (e.right_column.empty()) {
        // Implicit reference to the parent's primary key.
        if (auto* parent = catalog.table(fk.ref_table))
          for (const auto& col : parent->columns)
            if (col.primary_key) e.right_column = col.name;
      }
      if (!e.right_column.empty()) edges.push_back(std::move(e));
    }
  }
  for (std::size_t i = 0; i < catalog.tables.size(); ++i) {
    const auto& a = catalog.tables[i];
    for (std::size_t j = i + 1; j < catalog.tables.size(); ++j) {
      const auto& b = catalog.tables[j];
      for (const auto& ca : a.columns) {
        if (!hints.count(lower(ca.name))) continue;
        for (const auto& cb : b.columns) {
          if (lower(cb.name) != lower(ca.name)) continue;
          auto sql = "SELECT EXISTS(SELECT 1 FROM " + quote_ident(a.name) + " WHERE " +
                     quote_ident(ca.name) + " IN (SELECT " + quote_ident(cb.name) + " FROM " +
                     quote_ident(b.name) + "))";
          if (std::get<std::int64_t>(db.execute(sql).rows[0][0]) == 1)
            edges.push_back({a.name, ca.name, b.name, cb.name, JoinKind::SharedEntity});
        }
      }
    }
  }
  return edges;
}

Catalog designate_grounding(Catalog catalog, const std::set<std::string>& names) {
  for (const auto& n : names)
    if (!catalog.table(n)) throw Error("unknown table '" + n + "'");
  catalog.grounding_names = names;
  catalog.source_names.clear();
  for (const auto& t : catalog.tables)
    if (!names.count(t.name)) catalog.source_names.insert(t.name);
  catalog.joinability.clear();
  if (names.empty()) return catalog;

  Database db(catalog.db_path);
  for (const auto& g : names) {
    std::set<std::string> seen{g};
    std::deque<std::string> frontier{g};
    bool reaches_source = false;
    while (!frontier.empty() && !reaches_source) {
      auto cur = frontier.front();
      frontier.pop_front();
      for (const auto& e : catalog.edges_of(cur)) {
        auto other = e.side(cur).second;
        if (catalog.source_names.count(other)) reaches_source = true;
        if (seen.insert(other).second) frontier.push_back(other);
      }
    }
    if (!reaches_source)
      throw Error("grounding table '" + g + "' is not joined to any source table");

    JoinabilityEntry entry;
    entry.table = g;
    std::vector<std::string> conds;
    for (const auto& e : catalog.edges_of(g)) {
      auto [col, other] = e.side(g);
      if (!catalog.source_names.count(other)) continue;
      auto other_col = e.left_table == g ? e.right_column : e.left_column;
      entry.edges.push_back(edge_label(e));
      conds.push_back("EXISTS(SELECT 1 FROM " + quote_ident(other) + " AS s WHERE s." +
                      quote_ident(other_col) + " = g." + quote_ident(col) + ")");
    }
    entry.rows = catalog.require_table(g).row_count;
    if (!conds.empty()) {
      std::string where;
      for (std::size_t i = 0; i < conds.size(); ++i) where += (i ? " OR " : "") + conds[i];
      auto r = db.execute("SELECT COUNT(*) FROM " + quote_ident(g) + " AS g WHERE " + where);
      entry.joined_rows = std::get<std::int64_t>(r.rows[0][0]);
    }
    catalog.joinability.push_back(std::move(entry));
  }
  return catalog;
}

std::map<std::string, FactTemplate> templates_from_json(const nlohmann::json& j) {
  std::map<std::string, FactTemplate> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    FactTemplate t;
    t.table = it.key();
    t.pattern = it.value().at("pattern").get<std::string>();
    t.slot_order = it.value().at("slot_order").get<std::vector<std::string>>();
    out[t.table] = std::move(t);
  }
  return out;
}

std::map<std::string, FactTemplate> load_templates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read template manifest '" + path + "'");
  return templates_from_json(nlohmann::json::parse(in));
}

FactTemplate bind_template(FactTemplate t, const Catalog& c) {
  const auto& table = c.require_table(t.table);
  t.slot_types.clear();
  for (const auto& col : t.slot_order) {
    auto* ci = table.column(col);
    if (!ci) throw Error("template for '" + t.table + "' names unknown column '" + col + "'");
    t.slot_types.push_back(ci->type);
  }
  return t;
}

namespace {

const std::regex kSlot(R"(\{[A-Za-z_][A-Za-z0-9_]*\})");

// Literal text between slots; there is always one more segment than slots.
std::vector<std::string> segments(const FactTemplate& t) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (auto it = std::sregex_iterator(t.pattern.begin(), t.pattern.end(), kSlot);
       it != std::sregex_iterator(); ++it) {
    out.push_back(t.pattern.substr(pos, it->position() - pos));
    pos = it->position() + it->length();
  }
  out.push_back(t.pattern.substr(pos));
  if (out.size() != t.slot_order.size() + 1)
    throw Error("template for '" + t.table + "' has " + std::to_string(out.size() - 1) +
                " slots but " + std::to_string(t.slot_order.size()) + " columns");
  return out;
}

std::string regex_escape(const std::string& s) {
  static const std::string special = R"(\^$.|?*+()[]{})";
  std::string out;
  for (char c : s) {
    if (special.find(c) != std::string::npos) out += '\\';
    out += c;
  }
  return out;
}

Value convert(const std::string& text, SemType type) {
  try {
    std::size_t used = 0;
    if (type == SemType::Integer) {
      auto v = std::stoll(text, &used);
      if (used == text.size()) return static_cast<std::int64_t>(v);
    } else if (type == SemType::Real) {
      auto v = std::stod(text, &used);
      if (used == text.size()) return v;
    } else {
      return text;
    }
  } catch (const std::exception&) {
  }
  throw Error("slot value '" + text + "' is not a valid " + to_string(type));
}

}  // namespace

std::string render_passage(const Row& tuple, const FactTemplate& t) {
  auto segs = segments(t);
  if (tuple.size() != t.slot_order.size())
    throw Error("tuple arity " + std::to_string(tuple.size()) + " does not match " +
                std::to_string(t.slot_order.size()) + " template slots");
  std::string out = segs[0];
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    if (is_null(tuple[i])) throw Error("missing slot value for column '" + t.slot_order[i] + "'");
    out += to_text(tuple[i]);
    out += segs[i + 1];
  }
  return out;
}

Row extract_facts(const std::string& passage, const FactTemplate& t) {
  auto segs = segments(t);
  std::string re = regex_escape(segs[0]);
  for (std::size_t i = 1; i < segs.size(); ++i) re += "(.+?)" + regex_escape(segs[i]);
  std::smatch m;
  if (!std::regex_match(passage, m, std::regex(re)))
    throw Error("passage does not match the template for '" + t.table + "'");
  Row row;
  for (std::size_t i = 0; i < t.slot_order.size(); ++i) {
    auto type = i < t.slot_types.size() ? t.slot_types[i] : SemType::Text;
    row.push_back(convert(m[i + 1].str(), type));
  }
  if (render_passage(row, t) != passage)
    throw Error("passage is ambiguous under the template for '" + t.table + "'");
  return row;
}

PassageStats write_passages(const Catalog& c, const std::map<std::string, FactTemplate>& templates,
                            Database& db, const std::string& out_path) {
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write '" + out_path + "'");
  PassageStats stats;
  for (const auto& g : c.grounding_names) {
    auto it = templates.find(g);
    if (it == templates.end()) throw Error("no template for grounding table '" + g + "'");
    auto t = bind_template(it->second, c);
    std::string cols;
    for (const auto& col : t.slot_order) cols += ", " + quote_ident(col);
    auto rs = db.execute("SELECT rowid" + cols + " FROM " + quote_ident(g) + " ORDER BY rowid",
                         std::numeric_limits<std::size_t>::max());
    for (auto& row : rs.rows) {
      auto rowid = std::get<std::int64_t>(row[0]);
      Row tuple(row.begin() + 1, row.end());
      if (std::any_of(tuple.begin(), tuple.end(), [](const Value& v) { return is_null(v); })) {
        ++stats.skipped;
        continue;
      }
      nlohmann::json rec{{"table", g}, {"rowid", rowid}, {"passage", render_passage(tuple, t)}};
      out << rec.dump() << "\n";
      ++stats.emitted;
    }
  }
  return stats;
}

nlohmann::json to_json(const JoinEdge& e) {
  return {{"left", {e.left_table, e.left_column}},
          {"right", {e.right_table, e.right_column}},
          {"kind", e.kind == JoinKind::PkFk ? "pk_fk" : "shared_entity"}};
}

nlohmann::json to_json(const Catalog& c) {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : c.tables) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& col : t.columns)
      cols.push_back({{"name", col.name},
                      {"type", to_string(col.type)},
                      {"primary_key", col.primary_key},
                      {"min", to_json(col.min)},
                      {"max", to_json(col.max)},
                      {"distinct", col.distinct}});
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.sample_rows) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& v : r) row.push_back(to_json(v));
      rows.push_back(row);
    }
    nlohmann::json fks = nlohmann::json::array();
    for (const auto& f : t.foreign_keys)
      fks.push_back({{"column", f.column}, {"ref_table", f.ref_table}, {"ref_column", f.ref_column}});
    tables.push_back({{"name", t.name},
                      {"columns", cols},
                      {"row_count", t.row_count},
                      {"sample_rows", rows},
                      {"foreign_keys", fks}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : c.join_edges) edges.push_back(to_json(e));
  nlohmann::json joinability = nlohmann::json::array();
  for (const auto& j : c.joinability)
    joinability.push_back(
        {{"table", j.table}, {"rows", j.rows}, {"joined_rows", j.joined_rows}, {"edges", j.edges}});
  return {{"db_path", c.db_path},
          {"tables", tables},
          {"join_edges", edges},
          {"grounding", c.grounding_names},
          {"source", c.source_names},
          {"joinability", joinability}};
}

Catalog catalog_from_json(const nlohmann::json& j) {
  Catalog c;
  c.db_path = j.at("db_path").get<std::string>();
  for (const auto& jt : j.at("tables")) {
    TableInfo t;
    t.name = jt.at("name").get<std::string>();
    t.row_count = jt.at("row_count").get<std::int64_t>();
    for (const auto& jc : jt.at("columns")) {
      ColumnInfo ci;
      ci.name = jc.at("name").get<std::string>();
      ci.type = sem_type_from_string(jc.at("type").get<std::string>());
      ci.primary_key = jc.value("primary_key", false);
      ci.min = value_from_json(jc.at("min"));
      ci.max = value_from_json(jc.at("max"));
      ci.distinct = jc.value("distinct", std::int64_t{0});
      t.columns.push_back(std::move(ci));
    }
    for (const auto& jr : jt.at("sample_rows")) {
      Row r;
      for (const auto& v : jr) r.push_back(value_from_json(v));
      t.sample_rows.push_back(std::move(r));
    }
    for (const auto& jf : jt.value("foreign_keys", nlohmann::json::array()))
      t.foreign_keys.push_back({jf.at("column").get<std::string>(), jf.at("ref_table").get<std::string>(),
                                jf.at("ref_column").get<std::string>()});
    c.tables.push_back(std::move(t));
  }
  for (const auto& je : j.at("join_edges")) {
    JoinEdge e;
    e.left_table = je.at("left")[0].get<std::string>();
    e.left_column = je.at("left")[1].get<std::string>();
    e.right_table = je.at("right")[0].get<std::string>();
    e.right_column = je.at("right")[1].get<std::string>();
    e.kind = je.at("kind").get<std::string>() == "pk_fk" ? JoinKind::PkFk : JoinKind::SharedEntity;
    c.join_edges.push_back(std::move(e));
  }
  c.grounding_names = j.at("grounding").get<std::set<std::string>>();
  c.source_names = j.at("source").get<std::set<std::string>>();
  for (const auto& jj : j.value("joinability", nlohmann::json::array()))
    c.joinability.push_back({jj.at("table").get<std::string>(), jj.at("rows").get<std::int64_t>(),
                             jj.at("joined_rows").get<std::int64_t>(),
                             jj.at("edges").get<std::vector<std::string>>()});
  return c;
}

nlohmann::json schema_slot(const Catalog& c) {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : c.tables) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& col : t.columns)
      cols.push_back({{"name", col.name}, {"type", to_string(col.type)},
                      {"min", to_json(col.min)}, {"max", to_json(col.max)}, {"distinct", col.distinct}});
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.sample_rows) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& v : r) row.push_back(to_json(v));
      rows.push_back(row);
    }
    tables.push_back({{"table", t.name},
                      {"role", c.is_grounding(t.name) ? "grounding" : "source"},
                      {"columns", cols},
                      {"sample_rows", rows}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : c.join_edges)
    edges.push_back(e.left_table + "." + e.left_column + " = " + e.right_table + "." + e.right_column);
  return {{"tables", tables}, {"join_edges", edges}};
}

}  // namespace sparta
