#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relpretext/relstore.hpp"

namespace relpretext {

enum class LabelKind { Churn, Ltv, SalesSum };

LabelKind label_kind_from_name(const std::string& name);
const char* label_kind_name(LabelKind k);

struct CohortFilter {
  enum class Type { None, TopKSpending, LeastKSpending, BadReviews };
  Type type = Type::None;
  int k = 0;
  double threshold = 3.0;  // bad review: score <= threshold
};

struct LabelSpec {
  LabelKind kind = LabelKind::Churn;
  std::string value_column;   // summed for ltv/sales; spend for top/least cohorts
  int64_t dt = 0;
  CohortFilter cohort;
  std::string cohort_column;  // defaults to value_column when empty
  // Canonical 1-hop fact link; resolved automatically when left empty and the
  // root has exactly one fact link.
  std::string fact_table;
  std::string fk_column;
};

struct TrainRow {
  std::string entity_key;
  int64_t cutoff = 0;
  double label = 0.0;
};

// Labels each (entity, cutoff) from the next window (t_v, t_v+dt]. Entities
// appear only from their first fact entry onward; cohort filters are
// evaluated over the previous period (t_v-dt, t_v].
std::vector<TrainRow> make_labels(const RelationalStore& store, const std::string& root,
                                  const LabelSpec& spec, const std::vector<int64_t>& cutoffs);

struct SplitRows {
  std::vector<TrainRow> train, val, test;
  bool empty_partition_warning = false;
};

// train: t_v < val_cutoff; val: val_cutoff <= t_v < test_cutoff; test: t_v >= test_cutoff.
SplitRows temporal_split(const std::vector<TrainRow>& rows, int64_t val_cutoff,
                         int64_t test_cutoff);

void write_labels_csv(const std::string& path, const SplitRows& split);
SplitRows read_labels_csv(const std::string& path);

}  // namespace relpretext
