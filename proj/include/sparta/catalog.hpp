#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparta/value.hpp"

namespace sparta {

class Database;

enum class SemType { Text, Integer, Real, Date };
std::string to_string(SemType t);

struct ColumnInfo {
  std::string name;
  SemType type = SemType::Text;
  bool primary_key = false;
  Value min;
  Value max;
  std::int64_t distinct = 0;
};

struct ForeignKey {
  std::string column;
  std::string ref_table;
  std::string ref_column;
};

struct TableInfo {
  std::string name;
  std::vector<ColumnInfo> columns;
  std::int64_t row_count = 0;
  std::vector<Row> sample_rows;
  std::vector<ForeignKey> foreign_keys;

  const ColumnInfo* column(const std::string& name) const;
};

enum class JoinKind { PkFk, SharedEntity };

struct JoinEdge {
  std::string left_table;
  std::string left_column;
  std::string right_table;
  std::string right_column;
  JoinKind kind = JoinKind::SharedEntity;

  bool touches(const std::string& table) const {
    return left_table == table || right_table == table;
  }
  /// Column of `table` used by this edge, and the table on the other end.
  std::pair<std::string, std::string> side(const std::string& table) const;
};

/// Joinability of one grounding table: how many of its rows reach a source
/// row along any of its edges.
struct JoinabilityEntry {
  std::string table;
  std::int64_t rows = 0;
  std::int64_t joined_rows = 0;
  std::vector<std::string> edges;
};

struct Catalog {
  std::string db_path;
  std::vector<TableInfo> tables;
  std::vector<JoinEdge> join_edges;
  std::set<std::string> grounding_names;
  std::set<std::string> source_names;
  std::vector<JoinabilityEntry> joinability;

  const TableInfo* table(const std::string& name) const;
  const TableInfo& require_table(const std::string& name) const;
  bool is_grounding(const std::string& name) const { return grounding_names.count(name) > 0; }
  std::vector<JoinEdge> edges_of(const std::string& table) const;
  bool joinable(const std::string& a, const std::string& b) const;
};

inline const std::vector<std::string> kDefaultKeyHints = {"player_name", "team_name"};

/// Reads every user table with up to `sample_k` sample rows. All tables
/// start out as source tables.
Catalog load_catalog(const std::string& db_path, std::size_t sample_k = 3);

/// Shared-entity edges for hinted columns (case-insensitive name match)
/// whose value sets intersect, plus declared foreign keys as pk_fk edges.
std::vector<JoinEdge> infer_join_edges(const Catalog& catalog,
                                       const std::vector<std::string>& key_hints = kDefaultKeyHints);

/// Records the source/grounding partition and attaches the joinability
/// report. Throws for unknown names and for grounding tables with no path
/// to a source table.
Catalog designate_grounding(Catalog catalog, const std::set<std::string>& names);

struct FactTemplate {
  std::string table;
  std::string pattern;
  std::vector<std::string> slot_order;
  std::vector<SemType> slot_types;  // filled by bind_template; empty means text
};

std::map<std::string, FactTemplate> load_templates(const std::string& path);
std::map<std::string, FactTemplate> templates_from_json(const nlohmann::json& j);
FactTemplate bind_template(FactTemplate t, const Catalog& c);

/// `tuple` holds the templated columns in slot order.
std::string render_passage(const Row& tuple, const FactTemplate& t);
Row extract_facts(const std::string& passage, const FactTemplate& t);

struct PassageStats {
  std::size_t emitted = 0;
  std::size_t skipped = 0;
};

/// Writes {table, rowid, passage} JSONL for every grounding row; rows with
/// NULL in a templated column are skipped and counted.
PassageStats write_passages(const Catalog& c, const std::map<std::string, FactTemplate>& templates,
                            Database& db, const std::string& out_path);

nlohmann::json to_json(const Catalog& c);
Catalog catalog_from_json(const nlohmann::json& j);
nlohmann::json to_json(const JoinEdge& e);

/// Compact schema description used as the `database` prompt slot.
nlohmann::json schema_slot(const Catalog& c);

}  // namespace sparta
