#pragma once

// Independent brute-force oracles. These deliberately re-implement the spec'd
// definitions with plain scans and direct summation, sharing no code with the
// engine paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "relpretext/relstore.hpp"
#include "relpretext/schemagraph.hpp"
#include "relpretext/taskvec.hpp"

namespace relpretext::testing {

// Exhaustive nested-loop traversal: every hop scans the whole target table,
// intermediate duplicates are kept, and only the final set is deduplicated.
inline std::vector<RowRef> oracle_neighbor_set(const RelationalStore& store, const JoinPath& path,
                                               const std::string& entity_key, int64_t t_v,
                                               int64_t dt) {
  struct Item {
    int table;
    uint32_t row;
    int64_t bound;
  };
  const Table& root = store.table(path.root_table);
  std::vector<Item> frontier{{store.table_index(path.root_table),
                              root.pk_index.at(entity_key), t_v + dt}};
  for (size_t h = 0; h < path.hops.size(); ++h) {
    const TraversalEdge& hop = path.hops[h];
    const Table& from = store.table(hop.from_table);
    const Table& to = store.table(hop.to_table);
    const int kf = from.column_index(hop.key_from);
    const int kt = to.column_index(hop.key_to);
    std::vector<Item> next;
    for (const auto& u : frontier) {
      if (from.columns[kf].missing[u.row]) continue;
      const std::string& key = from.columns[kf].keys[u.row];
      for (uint32_t w = 0; w < to.row_count; ++w) {
        if (to.columns[kt].missing[w] || to.columns[kt].keys[w] != key) continue;
        if (to.is_fact()) {
          int64_t ts = to.timestamp_of(w);
          if (h == 0) {
            if (ts <= t_v || ts > t_v + dt) continue;
          } else if (ts > u.bound) {
            continue;
          }
          next.push_back({store.table_index(hop.to_table), w, ts});
        } else {
          next.push_back({store.table_index(hop.to_table), w, u.bound});
        }
      }
    }
    frontier = std::move(next);
  }
  std::set<RowRef> dedup;
  for (const auto& f : frontier) dedup.insert({f.table, f.row});
  return {dedup.begin(), dedup.end()};
}

// Aggregates one slot straight off an oracle neighbor set (insertion-order
// loops, no sorting).
struct OracleSlot {
  double value = 0.0;
  bool absent = true;
};

inline OracleSlot oracle_aggregate(const RelationalStore& store, const std::vector<RowRef>& set,
                                   const SlotDesc& slot, const std::string& terminal_table) {
  OracleSlot out;
  if (slot.agg == Aggregator::Count) {
    if (!set.empty()) {
      out.value = static_cast<double>(set.size());
      out.absent = false;
    }
    return out;
  }
  const Table& term = store.table(terminal_table);
  const int ci = term.column_index(slot.column);
  const ColumnKind& kind = term.def.columns[ci].kind;
  const Column& col = term.columns[ci];
  std::vector<double> values;
  for (const auto& ref : set) {
    if (col.missing[ref.row]) continue;
    if (kind.type == ColumnType::Numeric) values.push_back(col.numeric[ref.row]);
    else values.push_back(col.embedding[ref.row * kind.dim + slot.component]);
  }
  if (values.empty()) return out;
  out.absent = false;
  switch (slot.agg) {
    case Aggregator::Sum:
    case Aggregator::Mean: {
      double s = 0.0;
      for (double v : values) s += v;
      out.value = slot.agg == Aggregator::Mean ? s / static_cast<double>(values.size()) : s;
      break;
    }
    case Aggregator::Min: out.value = *std::min_element(values.begin(), values.end()); break;
    case Aggregator::Max: out.value = *std::max_element(values.begin(), values.end()); break;
    default: break;
  }
  return out;
}

// Full raw task vector for one pretrain row, following the given layout.
inline std::vector<OracleSlot> oracle_task_vector(const RelationalStore& store,
                                                  const std::vector<JoinPath>& paths,
                                                  const TaskVectorLayout& layout,
                                                  const PretrainRow& row, int64_t dt) {
  std::vector<OracleSlot> slots;
  slots.reserve(layout.slots.size());
  for (const auto& slot : layout.slots) {
    const JoinPath* path = nullptr;
    for (const auto& p : paths)
      if (p.name == slot.path_name) path = &p;
    auto set = oracle_neighbor_set(store, *path, row.entity_key, row.cutoff, dt);
    slots.push_back(oracle_aggregate(store, set, slot, path->terminal_table()));
  }
  return slots;
}

// Temporal BFS with no fanout cap: the exact causal neighborhood.
inline std::set<RowRef> oracle_full_neighborhood(const RelationalStore& store, RowRef seed,
                                                 int64_t t_v, int hops) {
  std::set<RowRef> visited{seed};
  std::vector<RowRef> frontier{seed};
  for (int h = 0; h < hops; ++h) {
    std::vector<RowRef> next;
    for (const RowRef& u : frontier) {
      const Table& ut = store.table(u.table);
      for (const auto& link : store.links()) {
        if (link.child_table == ut.def.name) {
          int fk = ut.column_index(link.fk_column);
          if (ut.columns[fk].missing[u.row]) continue;
          const Table& parent = store.table(link.parent_table);
          for (uint32_t r = 0; r < parent.row_count; ++r) {
            if (parent.columns[parent.pk_col].keys[r] != ut.columns[fk].keys[u.row]) continue;
            if (parent.is_fact() && parent.timestamp_of(r) > t_v) continue;
            RowRef ref{store.table_index(link.parent_table), r};
            if (visited.insert(ref).second) next.push_back(ref);
          }
        }
        if (link.parent_table == ut.def.name) {
          const Table& child = store.table(link.child_table);
          int fk = child.column_index(link.fk_column);
          const std::string& key = ut.columns[ut.pk_col].keys[u.row];
          for (uint32_t r = 0; r < child.row_count; ++r) {
            if (child.columns[fk].missing[r] || child.columns[fk].keys[r] != key) continue;
            if (child.is_fact() && child.timestamp_of(r) > t_v) continue;
            RowRef ref{store.table_index(link.child_table), r};
            if (visited.insert(ref).second) next.push_back(ref);
          }
        }
      }
    }
    frontier = std::move(next);
  }
  return visited;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix; eigenvalues sorted
// descending.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, size_t d,
                                              int sweeps = 100) {
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (size_t i = 0; i < d; ++i)
      for (size_t j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
    if (off < 1e-24) break;
    for (size_t p = 0; p < d; ++p)
      for (size_t q = p + 1; q < d; ++q) {
        if (std::abs(a[p * d + q]) < 1e-300) continue;
        double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * a[p * d + q]);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (size_t k = 0; k < d; ++k) {
          double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (size_t k = 0; k < d; ++k) {
          double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(d);
  for (size_t i = 0; i < d; ++i) eig[i] = a[i * d + i];
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

// O(n^2) pair-count AUC with explicit 0.5 tie credit.
inline double oracle_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double u = 0.0;
  size_t n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++n_pos;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) u += 1.0;
      else if (scores[i] == scores[j]) u += 0.5;
    }
  }
  for (int l : labels)
    if (!l) ++n_neg;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// InfoNCE by unrolled definition on raw projections.
inline double oracle_infonce(const std::vector<std::vector<double>>& z1,
                             const std::vector<std::vector<double>>& z2, double tau) {
  const size_t n = z1.size();
  auto normalize = [](std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    double denom = std::sqrt(s) + 1e-12;
    for (auto& x : v) x /= denom;
    return v;
  };
  std::vector<std::vector<double>> a, b;
  for (const auto& v : z1) a.push_back(normalize(v));
  for (const auto& v : z2) b.push_back(normalize(v));
  auto sim = [&](size_t i, size_t j) {
    double dot = 0.0;
    for (size_t k = 0; k < a[i].size(); ++k) dot += a[i][k] * b[j][k];
    return dot / tau;
  };
  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double denom_fwd = 0.0, denom_bwd = 0.0;
    for (size_t j = 0; j < n; ++j) {
      denom_fwd += std::exp(sim(i, j));
      denom_bwd += std::exp(sim(j, i));
    }
    loss += -std::log(std::exp(sim(i, i)) / denom_fwd);
    loss += -std::log(std::exp(sim(i, i)) / denom_bwd);
  }
  return loss / (2.0 * static_cast<double>(n));
}

}  // namespace relpretext::testing
