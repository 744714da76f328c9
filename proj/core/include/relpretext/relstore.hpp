#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "relpretext/rng.hpp"

namespace relpretext {

enum class ColumnType {
  Numeric,
  Categorical,
  Timestamp,
  Embedding,
  PrimaryKey,
  ForeignKey,
};

struct ColumnKind {
  ColumnType type = ColumnType::Numeric;
  int cardinality = 0;        // Categorical
  int dim = 0;                // Embedding
  std::string target_table;   // ForeignKey

  static ColumnKind numeric() { return {ColumnType::Numeric, 0, 0, {}}; }
  static ColumnKind categorical(int card) { return {ColumnType::Categorical, card, 0, {}}; }
  static ColumnKind timestamp() { return {ColumnType::Timestamp, 0, 0, {}}; }
  static ColumnKind embedding(int dim) { return {ColumnType::Embedding, 0, dim, {}}; }
  static ColumnKind primary_key() { return {ColumnType::PrimaryKey, 0, 0, {}}; }
  static ColumnKind foreign_key(std::string target) { return {ColumnType::ForeignKey, 0, 0, std::move(target)}; }
};

enum class TableClass { Fact, Dimension };

struct ColumnDef {
  std::string name;
  ColumnKind kind;
};

struct TableDef {
  std::string name;
  TableClass table_class = TableClass::Dimension;
  std::vector<ColumnDef> columns;
};

// Column-oriented storage; only the member matching the declared kind is
// populated. Missing cells are flagged, never silently zero.
struct Column {
  std::vector<double> numeric;         // Numeric
  std::vector<int64_t> timestamps;     // Timestamp
  std::vector<int32_t> codes;          // Categorical (index into labels)
  std::vector<std::string> labels;     // Categorical dictionary, first-seen order
  std::vector<std::string> keys;       // PrimaryKey / ForeignKey raw values
  std::vector<double> embedding;       // Embedding, row-major n x dim
  std::vector<uint8_t> missing;
};

struct Table {
  TableDef def;
  size_t row_count = 0;
  std::vector<Column> columns;  // parallel to def.columns
  int pk_col = -1;
  int ts_col = -1;
  std::unordered_map<std::string, uint32_t> pk_index;
  // Per key column (pk or fk): value -> rows holding it, in row order.
  std::unordered_map<std::string, std::unordered_map<std::string, std::vector<uint32_t>>> key_index;

  int column_index(const std::string& name) const;
  const Column& column(const std::string& name) const;
  bool is_fact() const { return def.table_class == TableClass::Fact; }
  int64_t timestamp_of(size_t row) const { return columns[ts_col].timestamps[row]; }
};

struct FkLink {
  std::string child_table;
  std::string fk_column;
  std::string parent_table;
};

struct RowRef {
  int table = -1;
  uint32_t row = 0;
  bool operator==(const RowRef& o) const { return table == o.table && row == o.row; }
  bool operator<(const RowRef& o) const {
    return table != o.table ? table < o.table : row < o.row;
  }
};

class RelationalStore {
 public:
  // Parses the JSON schema manifest plus one CSV per table, validates every
  // schema and referential-integrity invariant.
  static RelationalStore load(const std::string& manifest_path, const std::string& data_dir);

  // Builds from already-materialized tables (used by the loader and by test
  // fuzzers); runs the same validation.
  explicit RelationalStore(std::vector<Table> tables);

  const std::vector<Table>& tables() const { return tables_; }
  const Table& table(const std::string& name) const;
  const Table& table(int idx) const { return tables_[idx]; }
  int table_index(const std::string& name) const;
  bool has_table(const std::string& name) const;
  const std::vector<FkLink>& links() const { return links_; }

  // FNV-1a over schema and column contents; equal inputs hash equal.
  uint64_t digest() const;

 private:
  void validate();
  void build_indexes();

  std::vector<Table> tables_;
  std::unordered_map<std::string, int> table_idx_;
  std::vector<FkLink> links_;
};

inline constexpr int64_t kMinTimestamp = std::numeric_limits<int64_t>::min();

// Time-filtered read view: fact rows with timestamp > cutoff are invisible,
// dimension rows always visible.
class SnapshotView {
 public:
  SnapshotView(const RelationalStore& store, int64_t cutoff)
      : store_(&store), cutoff_(cutoff) {}

  int64_t cutoff() const { return cutoff_; }
  bool row_visible(const Table& t, size_t row) const {
    return !t.is_fact() || t.timestamp_of(row) <= cutoff_;
  }
  std::vector<uint32_t> visible_rows(const std::string& table) const;
  size_t visible_count(const std::string& table) const;

 private:
  const RelationalStore* store_;
  int64_t cutoff_;
};

SnapshotView snapshot(const RelationalStore& store, int64_t t);

// Sampleable empirical distribution of one column, missing cells excluded.
struct Marginal {
  ColumnType type = ColumnType::Numeric;
  int dim = 0;
  std::vector<double> numeric_values;
  std::vector<int32_t> cat_codes;
  const std::vector<std::string>* cat_labels = nullptr;
  std::vector<double> embedding_values;  // n x dim

  size_t size() const {
    switch (type) {
      case ColumnType::Categorical: return cat_codes.size();
      case ColumnType::Embedding: return embedding_values.size() / (dim ? dim : 1);
      default: return numeric_values.size();
    }
  }
  // Empirical P(code) for categorical columns.
  double frequency(int32_t code) const;
  size_t sample_index(Rng& rng) const { return static_cast<size_t>(rng.next_u64() % size()); }
};

Marginal column_marginal(const RelationalStore& store, const std::string& table,
                         const std::string& column);

}  // namespace relpretext
