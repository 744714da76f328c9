#include "relpretext/labels.hpp"

#include <algorithm>

#include "relpretext/csv.hpp"
#include "relpretext/error.hpp"

namespace relpretext {

namespace {

struct ResolvedLink {
  const Table* fact;
  std::string fk_column;
};

ResolvedLink resolve_fact_link(const RelationalStore& store, const std::string& root,
                               const LabelSpec& spec) {
  if (!spec.fact_table.empty()) {
    const Table& fact = store.table(spec.fact_table);
    std::string fk = spec.fk_column;
    if (fk.empty()) {
      for (const auto& link : store.links())
        if (link.child_table == spec.fact_table && link.parent_table == root) fk = link.fk_column;
    }
    check(!fk.empty() && fact.column_index(fk) >= 0, "UnknownColumn",
          "no FK from " + spec.fact_table + " to " + root);
    return {&fact, fk};
  }
  const FkLink* found = nullptr;
  for (const auto& link : store.links()) {
    if (link.parent_table != root || !store.table(link.child_table).is_fact()) continue;
    check(found == nullptr, "UnknownColumn",
          "root " + root + " has several fact links; set fact_table explicitly");
    found = &link;
  }
  check(found != nullptr, "UnknownColumn", "root " + root + " has no fact link");
  return {&store.table(found->child_table), found->fk_column};
}

// Rows of `fact` joined to the entity with timestamp in (lo, hi].
std::vector<uint32_t> window_rows(const Table& fact, const std::string& fk_column,
                                  const std::string& key, int64_t lo, int64_t hi) {
  std::vector<uint32_t> out;
  auto idx_it = fact.key_index.at(fk_column).find(key);
  if (idx_it == fact.key_index.at(fk_column).end()) return out;
  for (uint32_t r : idx_it->second) {
    int64_t ts = fact.timestamp_of(r);
    if (ts > lo && ts <= hi) out.push_back(r);
  }
  return out;
}

double sum_column(const Table& fact, int col, const std::vector<uint32_t>& rows) {
  double s = 0.0;
  for (uint32_t r : rows)
    if (!fact.columns[col].missing[r]) s += fact.columns[col].numeric[r];
  return s;
}

}  // namespace

LabelKind label_kind_from_name(const std::string& name) {
  if (name == "churn") return LabelKind::Churn;
  if (name == "ltv") return LabelKind::Ltv;
  if (name == "sales_sum") return LabelKind::SalesSum;
  fail("UnknownColumn", "unknown label kind '" + name + "'");
}

const char* label_kind_name(LabelKind k) {
  switch (k) {
    case LabelKind::Churn: return "churn";
    case LabelKind::Ltv: return "ltv";
    case LabelKind::SalesSum: return "sales_sum";
  }
  return "?";
}

std::vector<TrainRow> make_labels(const RelationalStore& store, const std::string& root,
                                  const LabelSpec& spec, const std::vector<int64_t>& cutoffs) {
  check(spec.dt > 0, "UnknownColumn", "label window dt must be positive");
  const Table& root_table = store.table(root);
  ResolvedLink link = resolve_fact_link(store, root, spec);
  const Table& fact = *link.fact;

  int value_col = -1;
  if (spec.kind != LabelKind::Churn || spec.cohort.type == CohortFilter::Type::TopKSpending ||
      spec.cohort.type == CohortFilter::Type::LeastKSpending) {
    check(!spec.value_column.empty(), "UnknownColumn", "label spec needs a value_column");
    value_col = fact.column_index(spec.value_column);
    check(value_col >= 0 && fact.def.columns[value_col].kind.type == ColumnType::Numeric,
          "UnknownColumn", "value column " + spec.value_column + " is not numeric in " +
                               fact.def.name);
  }
  int cohort_col = value_col;
  if (!spec.cohort_column.empty()) {
    cohort_col = fact.column_index(spec.cohort_column);
    check(cohort_col >= 0, "UnknownColumn", "cohort column " + spec.cohort_column + " not in " +
                                                fact.def.name);
  }

  // First fact timestamp per entity: a labeled entity must exist at t_v.
  const Column& pk = root_table.columns[root_table.pk_col];
  std::vector<TrainRow> out;
  for (int64_t t_v : cutoffs) {
    // Candidate entities at this cutoff.
    struct Candidate {
      uint32_t row;
      double cohort_value;
      bool cohort_active;
    };
    std::vector<Candidate> candidates;
    for (size_t r = 0; r < root_table.row_count; ++r) {
      const std::string& key = pk.keys[r];
      auto idx_it = fact.key_index.at(link.fk_column).find(key);
      if (idx_it == fact.key_index.at(link.fk_column).end()) continue;
      int64_t first_ts = 0;
      bool any = false;
      for (uint32_t fr : idx_it->second) {
        int64_t ts = fact.timestamp_of(fr);
        if (!any || ts < first_ts) first_ts = ts;
        any = true;
      }
      if (!any || first_ts > t_v) continue;
      candidates.push_back({static_cast<uint32_t>(r), 0.0, false});
    }

    // Cohort filter over the previous period (t_v - dt, t_v].
    if (spec.cohort.type != CohortFilter::Type::None) {
      for (auto& cand : candidates) {
        const std::string& key = pk.keys[cand.row];
        auto prev = window_rows(fact, link.fk_column, key, t_v - spec.dt, t_v);
        cand.cohort_active = !prev.empty();
        if (spec.cohort.type == CohortFilter::Type::BadReviews) {
          // Entity kept only if it has previous-period rows and every scored
          // row is at or below the threshold.
          bool all_bad = !prev.empty();
          for (uint32_t fr : prev) {
            if (fact.columns[cohort_col].missing[fr]) continue;
            if (fact.columns[cohort_col].numeric[fr] > spec.cohort.threshold) all_bad = false;
          }
          cand.cohort_active = cand.cohort_active && all_bad;
        } else {
          cand.cohort_value = sum_column(fact, cohort_col, prev);
        }
      }
      if (spec.cohort.type == CohortFilter::Type::TopKSpending ||
          spec.cohort.type == CohortFilter::Type::LeastKSpending) {
        const bool top = spec.cohort.type == CohortFilter::Type::TopKSpending;
        std::stable_sort(candidates.begin(), candidates.end(),
                         [&](const Candidate& a, const Candidate& b) {
                           if (a.cohort_value != b.cohort_value)
                             return top ? a.cohort_value > b.cohort_value
                                        : a.cohort_value < b.cohort_value;
                           return pk.keys[a.row] < pk.keys[b.row];
                         });
        if (candidates.size() > static_cast<size_t>(spec.cohort.k))
          candidates.resize(spec.cohort.k);
        std::sort(candidates.begin(), candidates.end(),
                  [](const Candidate& a, const Candidate& b) { return a.row < b.row; });
      } else {
        candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                        [](const Candidate& c) { return !c.cohort_active; }),
                         candidates.end());
      }
    }

    for (const auto& cand : candidates) {
      const std::string& key = pk.keys[cand.row];
      auto next = window_rows(fact, link.fk_column, key, t_v, t_v + spec.dt);
      double label = 0.0;
      switch (spec.kind) {
        case LabelKind::Churn: label = next.empty() ? 1.0 : 0.0; break;
        case LabelKind::Ltv:
        case LabelKind::SalesSum: label = sum_column(fact, value_col, next); break;
      }
      out.push_back({key, t_v, label});
    }
  }

  // Deterministic (entity file order x cutoff) would interleave cutoffs; the
  // contract is (entity, cutoff), so re-sort by key order within the store.
  std::stable_sort(out.begin(), out.end(), [&](const TrainRow& a, const TrainRow& b) {
    uint32_t ra = root_table.pk_index.at(a.entity_key);
    uint32_t rb = root_table.pk_index.at(b.entity_key);
    if (ra != rb) return ra < rb;
    return a.cutoff < b.cutoff;
  });
  check(!out.empty(), "EmptyCohort", "label spec produced no rows");
  return out;
}

SplitRows temporal_split(const std::vector<TrainRow>& rows, int64_t val_cutoff,
                         int64_t test_cutoff) {
  check(val_cutoff < test_cutoff, "EmptyPartition", "val_cutoff must precede test_cutoff");
  SplitRows s;
  for (const auto& r : rows) {
    if (r.cutoff < val_cutoff) s.train.push_back(r);
    else if (r.cutoff < test_cutoff) s.val.push_back(r);
    else s.test.push_back(r);
  }
  s.empty_partition_warning = s.train.empty() || s.val.empty() || s.test.empty();
  return s;
}

void write_labels_csv(const std::string& path, const SplitRows& split) {
  CsvWriter w(path);
  w.write_row({"entity_key", "cutoff", "split", "label"});
  auto dump = [&](const std::vector<TrainRow>& rows, const char* name) {
    for (const auto& r : rows)
      w.write_row({r.entity_key, std::to_string(r.cutoff), name, format_double(r.label)});
  };
  dump(split.train, "train");
  dump(split.val, "val");
  dump(split.test, "test");
}

SplitRows read_labels_csv(const std::string& path) {
  CsvTable csv = read_csv(path);
  check(csv.header.size() == 4, "MissingArtifact", "labels file " + path + " is malformed");
  SplitRows s;
  for (const auto& row : csv.rows) {
    TrainRow r{row[0], std::stoll(row[1]), std::stod(row[3])};
    if (row[2] == "train") s.train.push_back(r);
    else if (row[2] == "val") s.val.push_back(r);
    else s.test.push_back(r);
  }
  return s;
}

}  // namespace relpretext
