#include "relpretext/relstore.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "relpretext/csv.hpp"
#include "relpretext/error.hpp"

namespace relpretext {

namespace {

using nlohmann::json;

double parse_number(const std::string& cell, const std::string& where) {
  double v = 0.0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    fail("CellParse", "bad numeric cell '" + cell + "' in " + where);
  return v;
}

int64_t parse_timestamp(const std::string& cell, const std::string& where) {
  int64_t v = 0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    fail("CellParse", "bad timestamp cell '" + cell + "' in " + where);
  return v;
}

std::vector<double> parse_embedding(const std::string& cell, int dim, const std::string& where) {
  std::vector<double> out;
  out.reserve(dim);
  size_t start = 0;
  while (start <= cell.size()) {
    size_t sep = cell.find(';', start);
    std::string part = cell.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
    out.push_back(parse_number(part, where));
    if (sep == std::string::npos) break;
    start = sep + 1;
  }
  if (static_cast<int>(out.size()) != dim)
    fail("CellParse", "embedding cell has " + std::to_string(out.size()) + " components, expected " +
                          std::to_string(dim) + " in " + where);
  return out;
}

ColumnKind parse_kind(const json& jcol, const std::string& table) {
  const std::string kind = jcol.value("kind", "");
  if (kind == "numeric") return ColumnKind::numeric();
  if (kind == "timestamp") return ColumnKind::timestamp();
  if (kind == "primary_key") return ColumnKind::primary_key();
  if (kind == "categorical") {
    int card = jcol.value("cardinality", 0);
    if (card < 1) fail("SchemaParse", "categorical cardinality must be >= 1 in table " + table);
    return ColumnKind::categorical(card);
  }
  if (kind == "embedding") {
    int dim = jcol.value("dim", 0);
    if (dim < 1) fail("SchemaParse", "embedding dim must be >= 1 in table " + table);
    return ColumnKind::embedding(dim);
  }
  if (kind == "foreign_key") {
    std::string target = jcol.value("target", "");
    if (target.empty()) fail("SchemaParse", "foreign_key without target in table " + table);
    return ColumnKind::foreign_key(target);
  }
  fail("SchemaParse", "unknown column kind '" + kind + "' in table " + table);
}

uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t fnv1a_str(uint64_t h, const std::string& s) { return fnv1a(h, s.data(), s.size()); }

}  // namespace

int Table::column_index(const std::string& name) const {
  for (size_t i = 0; i < def.columns.size(); ++i)
    if (def.columns[i].name == name) return static_cast<int>(i);
  return -1;
}

const Column& Table::column(const std::string& name) const {
  int idx = column_index(name);
  if (idx < 0) fail("UnknownColumn", "no column '" + name + "' in table " + def.name);
  return columns[idx];
}

RelationalStore RelationalStore::load(const std::string& manifest_path, const std::string& data_dir) {
  std::ifstream in(manifest_path);
  if (!in) fail("SchemaParse", "cannot open schema manifest: " + manifest_path);
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    fail("SchemaParse", std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.contains("tables") || !manifest["tables"].is_array())
    fail("SchemaParse", "manifest missing tables[]");

  std::vector<Table> tables;
  for (const auto& jt : manifest["tables"]) {
    Table t;
    t.def.name = jt.value("name", "");
    if (t.def.name.empty()) fail("SchemaParse", "table without a name in manifest");
    const std::string cls = jt.value("class", "");
    if (cls == "fact") t.def.table_class = TableClass::Fact;
    else if (cls == "dimension") t.def.table_class = TableClass::Dimension;
    else fail("SchemaParse", "table " + t.def.name + " has unknown class '" + cls + "'");
    if (!jt.contains("columns") || !jt["columns"].is_array())
      fail("SchemaParse", "table " + t.def.name + " missing columns[]");
    for (const auto& jc : jt["columns"]) {
      ColumnDef cd;
      cd.name = jc.value("name", "");
      if (cd.name.empty()) fail("SchemaParse", "column without a name in table " + t.def.name);
      cd.kind = parse_kind(jc, t.def.name);
      t.def.columns.push_back(std::move(cd));
    }

    const std::string csv_path = data_dir + "/" + t.def.name + ".csv";
    CsvTable csv = read_csv(csv_path);
    // Header must match declared columns, in order.
    if (csv.header.size() != t.def.columns.size())
      fail("MissingColumn", "table " + t.def.name + ": CSV has " + std::to_string(csv.header.size()) +
                                " columns, schema declares " + std::to_string(t.def.columns.size()));
    for (size_t c = 0; c < csv.header.size(); ++c)
      if (csv.header[c] != t.def.columns[c].name)
        fail("MissingColumn", "table " + t.def.name + ": CSV column '" + csv.header[c] +
                                  "' does not match declared '" + t.def.columns[c].name + "'");

    t.row_count = csv.rows.size();
    t.columns.resize(t.def.columns.size());
    for (size_t r = 0; r < csv.rows.size(); ++r) {
      const auto& row = csv.rows[r];
      if (row.size() != t.def.columns.size())
        fail("CellParse", "table " + t.def.name + " row " + std::to_string(r + 1) +
                              " has " + std::to_string(row.size()) + " cells");
      for (size_t c = 0; c < row.size(); ++c) {
        const std::string& cell = row[c];
        Column& col = t.columns[c];
        const ColumnKind& kind = t.def.columns[c].kind;
        const bool missing = cell.empty();
        col.missing.push_back(missing ? 1 : 0);
        const std::string where = t.def.name + "." + t.def.columns[c].name +
                                  " row " + std::to_string(r + 1);
        switch (kind.type) {
          case ColumnType::Numeric:
            col.numeric.push_back(missing ? 0.0 : parse_number(cell, where));
            break;
          case ColumnType::Timestamp:
            if (missing) fail("CellParse", "missing timestamp at " + where);
            col.timestamps.push_back(parse_timestamp(cell, where));
            break;
          case ColumnType::Categorical: {
            if (missing) {
              col.codes.push_back(-1);
            } else {
              auto it = std::find(col.labels.begin(), col.labels.end(), cell);
              int32_t code;
              if (it == col.labels.end()) {
                code = static_cast<int32_t>(col.labels.size());
                col.labels.push_back(cell);
                if (code >= kind.cardinality)
                  fail("CellParse", "categorical column exceeds declared cardinality " +
                                        std::to_string(kind.cardinality) + " at " + where);
              } else {
                code = static_cast<int32_t>(it - col.labels.begin());
              }
              col.codes.push_back(code);
            }
            break;
          }
          case ColumnType::Embedding: {
            std::vector<double> vec(kind.dim, 0.0);
            if (!missing) vec = parse_embedding(cell, kind.dim, where);
            col.embedding.insert(col.embedding.end(), vec.begin(), vec.end());
            break;
          }
          case ColumnType::PrimaryKey:
            if (missing) fail("CellParse", "missing primary key at " + where);
            col.keys.push_back(cell);
            break;
          case ColumnType::ForeignKey:
            col.keys.push_back(cell);
            break;
        }
      }
    }
    tables.push_back(std::move(t));
  }
  return RelationalStore(std::move(tables));
}

RelationalStore::RelationalStore(std::vector<Table> tables) : tables_(std::move(tables)) {
  for (size_t i = 0; i < tables_.size(); ++i) {
    if (table_idx_.count(tables_[i].def.name))
      fail("SchemaParse", "duplicate table name " + tables_[i].def.name);
    table_idx_[tables_[i].def.name] = static_cast<int>(i);
  }
  validate();
  build_indexes();
}

void RelationalStore::validate() {
  for (auto& t : tables_) {
    t.pk_col = -1;
    t.ts_col = -1;
    for (size_t c = 0; c < t.def.columns.size(); ++c) {
      const ColumnKind& kind = t.def.columns[c].kind;
      if (kind.type == ColumnType::PrimaryKey) {
        if (t.pk_col >= 0)
          fail("SchemaParse", "table " + t.def.name + " has more than one primary_key column");
        t.pk_col = static_cast<int>(c);
      }
      if (kind.type == ColumnType::Timestamp) {
        if (t.ts_col >= 0)
          fail("SchemaParse", "table " + t.def.name + " has more than one timestamp column");
        t.ts_col = static_cast<int>(c);
      }
      if (kind.type == ColumnType::ForeignKey && !table_idx_.count(kind.target_table))
        fail("SchemaParse", "table " + t.def.name + " FK column " + t.def.columns[c].name +
                                " targets unknown table " + kind.target_table);
    }
    if (t.pk_col < 0)
      fail("SchemaParse", "table " + t.def.name + " has no primary_key column");
    if (t.is_fact() && t.ts_col < 0)
      fail("FactWithoutTimestamp", "fact table " + t.def.name + " has no timestamp column");
    if (!t.is_fact() && t.ts_col >= 0)
      fail("SchemaParse", "dimension table " + t.def.name + " must not have a timestamp column");

    // PK uniqueness.
    t.pk_index.clear();
    const Column& pk = t.columns[t.pk_col];
    for (size_t r = 0; r < t.row_count; ++r) {
      auto [it, inserted] = t.pk_index.emplace(pk.keys[r], static_cast<uint32_t>(r));
      if (!inserted)
        fail("PkDuplicate", "table " + t.def.name + " duplicate primary key '" + pk.keys[r] + "'");
    }
  }

  // Referential integrity + link list, in table/column declaration order.
  links_.clear();
  for (const auto& t : tables_) {
    for (size_t c = 0; c < t.def.columns.size(); ++c) {
      const ColumnKind& kind = t.def.columns[c].kind;
      if (kind.type != ColumnType::ForeignKey) continue;
      const Table& parent = tables_[table_idx_.at(kind.target_table)];
      const Column& fk = t.columns[c];
      for (size_t r = 0; r < t.row_count; ++r) {
        if (fk.missing[r]) continue;
        if (!parent.pk_index.count(fk.keys[r]))
          fail("FkDangling", "table " + t.def.name + " column " + t.def.columns[c].name +
                                 " row " + std::to_string(r + 1) + " references missing " +
                                 kind.target_table + " key '" + fk.keys[r] + "'");
      }
      links_.push_back({t.def.name, t.def.columns[c].name, kind.target_table});
    }
  }
}

void RelationalStore::build_indexes() {
  for (auto& t : tables_) {
    t.key_index.clear();
    for (size_t c = 0; c < t.def.columns.size(); ++c) {
      const ColumnKind& kind = t.def.columns[c].kind;
      if (kind.type != ColumnType::PrimaryKey && kind.type != ColumnType::ForeignKey) continue;
      auto& index = t.key_index[t.def.columns[c].name];
      const Column& col = t.columns[c];
      for (size_t r = 0; r < t.row_count; ++r) {
        if (col.missing[r]) continue;
        index[col.keys[r]].push_back(static_cast<uint32_t>(r));
      }
    }
  }
}

const Table& RelationalStore::table(const std::string& name) const {
  auto it = table_idx_.find(name);
  if (it == table_idx_.end()) fail("UnknownTable", "no table named " + name);
  return tables_[it->second];
}

int RelationalStore::table_index(const std::string& name) const {
  auto it = table_idx_.find(name);
  if (it == table_idx_.end()) fail("UnknownTable", "no table named " + name);
  return it->second;
}

bool RelationalStore::has_table(const std::string& name) const {
  return table_idx_.count(name) > 0;
}

uint64_t RelationalStore::digest() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tables_) {
    h = fnv1a_str(h, t.def.name);
    h = fnv1a(h, &t.def.table_class, sizeof(t.def.table_class));
    for (size_t c = 0; c < t.def.columns.size(); ++c) {
      h = fnv1a_str(h, t.def.columns[c].name);
      const auto& kind = t.def.columns[c].kind;
      h = fnv1a(h, &kind.type, sizeof(kind.type));
      const Column& col = t.columns[c];
      h = fnv1a(h, col.numeric.data(), col.numeric.size() * sizeof(double));
      h = fnv1a(h, col.timestamps.data(), col.timestamps.size() * sizeof(int64_t));
      h = fnv1a(h, col.codes.data(), col.codes.size() * sizeof(int32_t));
      for (const auto& s : col.labels) h = fnv1a_str(h, s);
      for (const auto& s : col.keys) h = fnv1a_str(h, s);
      h = fnv1a(h, col.embedding.data(), col.embedding.size() * sizeof(double));
      h = fnv1a(h, col.missing.data(), col.missing.size());
    }
  }
  return h;
}

std::vector<uint32_t> SnapshotView::visible_rows(const std::string& table) const {
  const Table& t = store_->table(table);
  std::vector<uint32_t> rows;
  rows.reserve(t.row_count);
  for (size_t r = 0; r < t.row_count; ++r)
    if (row_visible(t, r)) rows.push_back(static_cast<uint32_t>(r));
  return rows;
}

size_t SnapshotView::visible_count(const std::string& table) const {
  const Table& t = store_->table(table);
  if (!t.is_fact()) return t.row_count;
  size_t n = 0;
  for (size_t r = 0; r < t.row_count; ++r)
    if (t.timestamp_of(r) <= cutoff_) ++n;
  return n;
}

SnapshotView snapshot(const RelationalStore& store, int64_t t) { return SnapshotView(store, t); }

double Marginal::frequency(int32_t code) const {
  if (type != ColumnType::Categorical || cat_codes.empty()) return 0.0;
  size_t n = 0;
  for (int32_t c : cat_codes)
    if (c == code) ++n;
  return static_cast<double>(n) / static_cast<double>(cat_codes.size());
}

Marginal column_marginal(const RelationalStore& store, const std::string& table,
                         const std::string& column) {
  const Table& t = store.table(table);
  int ci = t.column_index(column);
  if (ci < 0) fail("UnknownColumn", "no column '" + column + "' in table " + table);
  const ColumnKind& kind = t.def.columns[ci].kind;
  const Column& col = t.columns[ci];

  Marginal m;
  m.type = kind.type;
  m.dim = kind.dim;
  switch (kind.type) {
    case ColumnType::Numeric:
      for (size_t r = 0; r < t.row_count; ++r)
        if (!col.missing[r]) m.numeric_values.push_back(col.numeric[r]);
      break;
    case ColumnType::Categorical:
      m.cat_labels = &col.labels;
      for (size_t r = 0; r < t.row_count; ++r)
        if (!col.missing[r]) m.cat_codes.push_back(col.codes[r]);
      break;
    case ColumnType::Embedding:
      for (size_t r = 0; r < t.row_count; ++r)
        if (!col.missing[r])
          m.embedding_values.insert(m.embedding_values.end(),
                                    col.embedding.begin() + r * kind.dim,
                                    col.embedding.begin() + (r + 1) * kind.dim);
      break;
    default:
      fail("UnknownColumn", "column '" + column + "' is not numeric, categorical, or embedding");
  }
  if (m.size() == 0) fail("AllMissing", "column " + table + "." + column + " has no observed values");
  return m;
}

}  // namespace relpretext
