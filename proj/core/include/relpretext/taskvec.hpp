#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "relpretext/relstore.hpp"
#include "relpretext/schemagraph.hpp"

namespace relpretext {

struct PretrainRow {
  std::string entity_key;
  int64_t cutoff = 0;
};

enum class Aggregator { Count, Mean, Sum, Min, Max };

const char* aggregator_name(Aggregator a);
Aggregator aggregator_from_name(const std::string& name);

// One scalar slot of the task vector. Count slots have an empty column and
// component 0; embedding columns expand into dim scalar slots.
struct SlotDesc {
  std::string path_name;
  std::string column;
  Aggregator agg = Aggregator::Count;
  int component = 0;
};

struct TaskVectorLayout {
  std::vector<SlotDesc> slots;
  // Total vector width including the trailing null-indicator slot.
  size_t dim() const { return slots.size() + 1; }
};

// Raw (pre-normalization) compilation output. `absent` marks slots whose
// neighbor set (or column within it) had no observed values; their value is
// recorded 0. The null indicator is 1 exactly when every slot of the row is
// absent.
struct RawTaskMatrix {
  size_t rows = 0;
  size_t cols = 0;  // number of slots, excluding the null indicator
  std::vector<double> values;
  std::vector<uint8_t> absent;
  std::vector<uint8_t> null_indicator;

  double at(size_t r, size_t c) const { return values[r * cols + c]; }
  bool is_absent(size_t r, size_t c) const { return absent[r * cols + c] != 0; }
};

// Cross join of root entities x timestamp grid, minus rows whose cutoff
// precedes the entity's first fact entry; entities with no fact rows drop out.
std::vector<PretrainRow> build_pretrain_table(const RelationalStore& store,
                                              const std::string& root,
                                              const std::vector<int64_t>& grid);

// Causal next-window k-hop neighbor set for one path. Hop-1 fact rows must
// fall in (t_v, t_v+dt]; deeper timestamped rows must not postdate the row
// they were joined from (dimension rows pass the bound through unchanged).
std::vector<RowRef> neighbor_set(const RelationalStore& store, const JoinPath& path,
                                 const std::string& entity_key, int64_t t_v, int64_t dt);

std::pair<RawTaskMatrix, TaskVectorLayout> compile_task_vectors(
    const RelationalStore& store, const std::vector<JoinPath>& paths,
    const std::vector<Aggregator>& aggregators, const std::vector<PretrainRow>& rows,
    int64_t dt, int threads = 1);

struct NormalizationPlan {
  struct SlotTransform {
    bool use_log1p = false;
    double shift = 0.0;  // mean of (possibly log1p'd) present values
    double scale = 1.0;  // population std; 1 for zero-variance slots
  };
  std::vector<SlotTransform> slots;
};

// Normalized matrix; the trailing column is the untouched null indicator.
struct TaskMatrix {
  size_t rows = 0;
  size_t cols = 0;  // slots + 1
  std::vector<double> values;
  std::vector<uint8_t> group_null;  // per row: 1 = null group

  double at(size_t r, size_t c) const { return values[r * cols + c]; }
};

// Stats are fitted over present entries only, so absent slots (imputed 0)
// land exactly on the normalized mean. Count slots get log1p before z-scoring.
NormalizationPlan fit_normalization(const RawTaskMatrix& raw, const TaskVectorLayout& layout);
TaskMatrix apply_normalization(const NormalizationPlan& plan, const RawTaskMatrix& raw);
double normalize_value(const NormalizationPlan::SlotTransform& t, double raw);
double denormalize_value(const NormalizationPlan::SlotTransform& t, double normalized);

struct PcaResult {
  size_t in_dim = 0;
  size_t out_dim = 0;
  std::vector<double> basis;        // in_dim x out_dim, column-major components
  std::vector<double> eigenvalues;  // descending
  std::vector<double> mean;         // in_dim
  TaskMatrix compressed;            // rows x (out_dim + 1), indicator copied through
  double total_variance = 0.0;

  double captured_fraction(size_t component) const {
    return total_variance > 0 ? eigenvalues[component] / total_variance : 0.0;
  }
};

// Power iteration with deflation on the slot covariance (the null indicator
// column is excluded from the projection and re-appended).
PcaResult pca_compress(const TaskMatrix& matrix, size_t target_dim,
                       double tol = 1e-8, int max_iters = 10000);

void write_pretrain_table_csv(const std::string& path, const std::vector<PretrainRow>& rows,
                              const TaskMatrix& matrix);
void write_layout_json(const std::string& path, const TaskVectorLayout& layout,
                       const NormalizationPlan& plan, const PcaResult* pca);
// Reads back (rows, matrix) from pretrain_table.csv.
std::pair<std::vector<PretrainRow>, TaskMatrix> read_pretrain_table_csv(const std::string& path);

}  // namespace relpretext
