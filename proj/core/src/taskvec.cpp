#include "relpretext/taskvec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "relpretext/csv.hpp"
#include "relpretext/error.hpp"

namespace relpretext {

namespace {
using nlohmann::json;

struct FrontierRow {
  uint32_t row;
  int64_t effective_ts;  // own ts for fact rows, inherited bound for dimension rows
};

std::string slot_column_name(const SlotDesc& s, const RelationalStore* store,
                             const std::vector<JoinPath>* paths) {
  std::string name = s.path_name;
  if (s.agg == Aggregator::Count) return name + ".count";
  name += "." + s.column + "." + aggregator_name(s.agg);
  if (store && paths) {
    for (const auto& p : *paths) {
      if (p.name != s.path_name) continue;
      const Table& t = store->table(p.terminal_table());
      int ci = t.column_index(s.column);
      if (ci >= 0 && t.def.columns[ci].kind.type == ColumnType::Embedding)
        name += "[" + std::to_string(s.component) + "]";
    }
  } else if (s.component > 0) {
    name += "[" + std::to_string(s.component) + "]";
  }
  return name;
}

}  // namespace

const char* aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::Count: return "count";
    case Aggregator::Mean: return "mean";
    case Aggregator::Sum: return "sum";
    case Aggregator::Min: return "min";
    case Aggregator::Max: return "max";
  }
  return "?";
}

Aggregator aggregator_from_name(const std::string& name) {
  if (name == "count") return Aggregator::Count;
  if (name == "mean") return Aggregator::Mean;
  if (name == "sum") return Aggregator::Sum;
  if (name == "min") return Aggregator::Min;
  if (name == "max") return Aggregator::Max;
  fail("AggregatorKindMismatch", "unknown aggregator '" + name + "'");
}

std::vector<PretrainRow> build_pretrain_table(const RelationalStore& store,
                                              const std::string& root,
                                              const std::vector<int64_t>& grid) {
  const Table& root_table = store.table(root);
  check(!grid.empty(), "NoFactLink", "timestamp grid is empty");
  for (size_t i = 1; i < grid.size(); ++i)
    check(grid[i] > grid[i - 1], "NoFactLink", "timestamp grid must be strictly increasing");

  // Fact tables holding an FK into the root.
  std::vector<const FkLink*> fact_links;
  for (const auto& link : store.links())
    if (link.parent_table == root && store.table(link.child_table).is_fact())
      fact_links.push_back(&link);
  check(!fact_links.empty(), "NoFactLink",
        "root table " + root + " is not linked from any fact table");

  std::vector<PretrainRow> rows;
  const Column& pk = root_table.columns[root_table.pk_col];
  for (size_t r = 0; r < root_table.row_count; ++r) {
    const std::string& key = pk.keys[r];
    int64_t first_ts = 0;
    bool any = false;
    for (const auto* link : fact_links) {
      const Table& fact = store.table(link->child_table);
      auto key_it = fact.key_index.at(link->fk_column).find(key);
      if (key_it == fact.key_index.at(link->fk_column).end()) continue;
      for (uint32_t fr : key_it->second) {
        int64_t ts = fact.timestamp_of(fr);
        if (!any || ts < first_ts) first_ts = ts;
        any = true;
      }
    }
    if (!any) continue;  // entity with zero fact rows contributes nothing
    for (int64_t t : grid)
      if (t >= first_ts) rows.push_back({key, t});
  }
  return rows;
}

std::vector<RowRef> neighbor_set(const RelationalStore& store, const JoinPath& path,
                                 const std::string& entity_key, int64_t t_v, int64_t dt) {
  check(dt > 0, "PathRootMismatch", "window length must be positive");
  check(!path.hops.empty(), "PathRootMismatch", "path has no hops");
  const Table& root = store.table(path.root_table);
  auto root_row_it = root.pk_index.find(entity_key);
  check(root_row_it != root.pk_index.end(), "PathRootMismatch",
        "entity '" + entity_key + "' not found in " + path.root_table);
  const int64_t window_hi = t_v + dt;

  std::vector<FrontierRow> frontier;
  int current_table = store.table_index(path.root_table);
  frontier.push_back({root_row_it->second, window_hi});

  for (size_t h = 0; h < path.hops.size(); ++h) {
    const TraversalEdge& hop = path.hops[h];
    check(store.table(current_table).def.name == hop.from_table, "PathRootMismatch",
          "path " + path.name + " hop " + std::to_string(h + 1) + " does not start at " +
              store.table(current_table).def.name);
    const Table& from = store.table(hop.from_table);
    const Table& to = store.table(hop.to_table);
    const int key_from_col = from.column_index(hop.key_from);
    check(key_from_col >= 0, "PathRootMismatch", "missing key column " + hop.key_from);
    const auto& to_index = to.key_index.at(hop.key_to);
    const bool to_is_fact = to.is_fact();

    std::vector<FrontierRow> next;
    for (const auto& u : frontier) {
      const Column& kc = from.columns[key_from_col];
      if (kc.missing[u.row]) continue;
      auto match_it = to_index.find(kc.keys[u.row]);
      if (match_it == to_index.end()) continue;
      for (uint32_t w : match_it->second) {
        if (to_is_fact) {
          int64_t ts = to.timestamp_of(w);
          if (h == 0) {
            // Hop-1 window: strictly after the cutoff, at most cutoff + dt.
            if (ts <= t_v || ts > window_hi) continue;
          } else {
            // Causality: never postdate the row this one was joined from.
            if (ts > u.effective_ts) continue;
          }
          next.push_back({w, ts});
        } else {
          next.push_back({w, u.effective_ts});
        }
      }
    }
    // Deduplicate, keeping the loosest bound for onward expansion.
    std::sort(next.begin(), next.end(), [](const FrontierRow& a, const FrontierRow& b) {
      return a.row != b.row ? a.row < b.row : a.effective_ts > b.effective_ts;
    });
    next.erase(std::unique(next.begin(), next.end(),
                           [](const FrontierRow& a, const FrontierRow& b) { return a.row == b.row; }),
               next.end());
    frontier = std::move(next);
    current_table = store.table_index(hop.to_table);
  }

  std::vector<RowRef> out;
  out.reserve(frontier.size());
  for (const auto& f : frontier) out.push_back({current_table, f.row});
  return out;
}

std::pair<RawTaskMatrix, TaskVectorLayout> compile_task_vectors(
    const RelationalStore& store, const std::vector<JoinPath>& paths,
    const std::vector<Aggregator>& aggregators, const std::vector<PretrainRow>& rows,
    int64_t dt, int threads) {
  check(!aggregators.empty(), "AggregatorKindMismatch", "no aggregators requested");
  for (const auto& p : paths)
    check(p.root_table == paths.front().root_table, "PathRootMismatch",
          "paths enumerated from different roots");

  TaskVectorLayout layout;
  for (const auto& p : paths) {
    const Table& term = store.table(p.terminal_table());
    for (Aggregator a : aggregators) {
      if (a == Aggregator::Count) {
        layout.slots.push_back({p.name, "", Aggregator::Count, 0});
        continue;
      }
      for (const auto& cd : term.def.columns) {
        if (cd.kind.type == ColumnType::Numeric) {
          layout.slots.push_back({p.name, cd.name, a, 0});
        } else if (cd.kind.type == ColumnType::Embedding) {
          for (int k = 0; k < cd.kind.dim; ++k)
            layout.slots.push_back({p.name, cd.name, a, k});
        }
      }
    }
  }

  RawTaskMatrix m;
  m.rows = rows.size();
  m.cols = layout.slots.size();
  m.values.assign(m.rows * m.cols, 0.0);
  m.absent.assign(m.rows * m.cols, 1);
  m.null_indicator.assign(m.rows, 0);

  auto compile_row = [&](size_t r) {
    const PretrainRow& row = rows[r];
    size_t slot = 0;
    for (const auto& p : paths) {
      std::vector<RowRef> set = neighbor_set(store, p, row.entity_key, row.cutoff, dt);
      std::sort(set.begin(), set.end());
      const Table& term = store.table(p.terminal_table());
      for (Aggregator a : aggregators) {
        if (a == Aggregator::Count) {
          if (!set.empty()) {
            m.values[r * m.cols + slot] = static_cast<double>(set.size());
            m.absent[r * m.cols + slot] = 0;
          }
          ++slot;
          continue;
        }
        for (size_t c = 0; c < term.def.columns.size(); ++c) {
          const ColumnKind& kind = term.def.columns[c].kind;
          if (kind.type == ColumnType::Numeric) {
            double acc = 0.0;
            size_t n = 0;
            const Column& col = term.columns[c];
            for (const auto& ref : set) {
              if (col.missing[ref.row]) continue;
              double v = col.numeric[ref.row];
              switch (a) {
                case Aggregator::Mean:
                case Aggregator::Sum: acc += v; break;
                case Aggregator::Min: acc = n == 0 ? v : std::min(acc, v); break;
                case Aggregator::Max: acc = n == 0 ? v : std::max(acc, v); break;
                default: fail("AggregatorKindMismatch", "count reached column loop");
              }
              ++n;
            }
            if (n > 0) {
              if (a == Aggregator::Mean) acc /= static_cast<double>(n);
              m.values[r * m.cols + slot] = acc;
              m.absent[r * m.cols + slot] = 0;
            }
            ++slot;
          } else if (kind.type == ColumnType::Embedding) {
            const Column& col = term.columns[c];
            for (int k = 0; k < kind.dim; ++k) {
              double acc = 0.0;
              size_t n = 0;
              for (const auto& ref : set) {
                if (col.missing[ref.row]) continue;
                double v = col.embedding[ref.row * kind.dim + k];
                switch (a) {
                  case Aggregator::Mean:
                  case Aggregator::Sum: acc += v; break;
                  case Aggregator::Min: acc = n == 0 ? v : std::min(acc, v); break;
                  case Aggregator::Max: acc = n == 0 ? v : std::max(acc, v); break;
                  default: fail("AggregatorKindMismatch", "count reached column loop");
                }
                ++n;
              }
              if (n > 0) {
                if (a == Aggregator::Mean) acc /= static_cast<double>(n);
                m.values[r * m.cols + slot] = acc;
                m.absent[r * m.cols + slot] = 0;
              }
              ++slot;
            }
          }
        }
      }
    }
    bool all_absent = true;
    for (size_t c = 0; c < m.cols; ++c)
      if (!m.absent[r * m.cols + c]) { all_absent = false; break; }
    m.null_indicator[r] = all_absent ? 1 : 0;
  };

  // Rows are independent and write disjoint ranges, so the result is
  // bit-identical for any worker count.
  if (threads <= 1 || rows.size() < 2) {
    for (size_t r = 0; r < rows.size(); ++r) compile_row(r);
  } else {
    size_t n_workers = std::min<size_t>(threads, rows.size());
    std::vector<std::thread> pool;
    for (size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w]() {
        for (size_t r = w; r < rows.size(); r += n_workers) compile_row(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  return {std::move(m), std::move(layout)};
}

double normalize_value(const NormalizationPlan::SlotTransform& t, double raw) {
  double v = t.use_log1p ? std::log1p(raw) : raw;
  return (v - t.shift) / t.scale;
}

double denormalize_value(const NormalizationPlan::SlotTransform& t, double normalized) {
  double v = normalized * t.scale + t.shift;
  return t.use_log1p ? std::expm1(v) : v;
}

NormalizationPlan fit_normalization(const RawTaskMatrix& raw, const TaskVectorLayout& layout) {
  check(raw.rows >= 2, "TooFewRows", "normalization needs at least 2 rows");
  check(raw.cols == layout.slots.size(), "TooFewRows", "matrix does not match layout");
  NormalizationPlan plan;
  plan.slots.resize(raw.cols);
  for (size_t c = 0; c < raw.cols; ++c) {
    auto& t = plan.slots[c];
    t.use_log1p = layout.slots[c].agg == Aggregator::Count;
    double sum = 0.0, sumsq = 0.0;
    size_t n = 0;
    for (size_t r = 0; r < raw.rows; ++r) {
      if (raw.is_absent(r, c)) continue;
      double v = t.use_log1p ? std::log1p(raw.at(r, c)) : raw.at(r, c);
      sum += v;
      sumsq += v * v;
      ++n;
    }
    if (n == 0) {
      t.shift = 0.0;
      t.scale = 1.0;
      continue;
    }
    double mean = sum / static_cast<double>(n);
    double var = sumsq / static_cast<double>(n) - mean * mean;
    double std = var > 0 ? std::sqrt(var) : 0.0;
    t.shift = mean;
    t.scale = std > 1e-12 ? std : 1.0;
  }
  return plan;
}

TaskMatrix apply_normalization(const NormalizationPlan& plan, const RawTaskMatrix& raw) {
  check(plan.slots.size() == raw.cols, "TooFewRows", "plan does not match matrix");
  TaskMatrix out;
  out.rows = raw.rows;
  out.cols = raw.cols + 1;
  out.values.assign(out.rows * out.cols, 0.0);
  out.group_null.assign(out.rows, 0);
  for (size_t r = 0; r < raw.rows; ++r) {
    for (size_t c = 0; c < raw.cols; ++c) {
      // Absent entries are imputed at the normalized mean, which is 0.
      out.values[r * out.cols + c] =
          raw.is_absent(r, c) ? 0.0 : normalize_value(plan.slots[c], raw.at(r, c));
    }
    out.values[r * out.cols + raw.cols] = raw.null_indicator[r] ? 1.0 : 0.0;
    out.group_null[r] = raw.null_indicator[r];
  }
  return out;
}

PcaResult pca_compress(const TaskMatrix& matrix, size_t target_dim, double tol, int max_iters) {
  const size_t d = matrix.cols - 1;  // exclude the null indicator
  check(target_dim >= 1 && target_dim <= d, "ConvergenceFailure",
        "target_dim must be in [1, slot count]");
  const size_t n = matrix.rows;
  check(n >= 2, "TooFewRows", "PCA needs at least 2 rows");

  PcaResult res;
  res.in_dim = d;
  res.out_dim = target_dim;
  res.mean.assign(d, 0.0);
  for (size_t r = 0; r < n; ++r)
    for (size_t c = 0; c < d; ++c) res.mean[c] += matrix.at(r, c);
  for (auto& v : res.mean) v /= static_cast<double>(n);

  // Population covariance of the centered slots.
  std::vector<double> cov(d * d, 0.0);
  for (size_t r = 0; r < n; ++r)
    for (size_t i = 0; i < d; ++i) {
      double xi = matrix.at(r, i) - res.mean[i];
      for (size_t j = 0; j < d; ++j)
        cov[i * d + j] += xi * (matrix.at(r, j) - res.mean[j]);
    }
  for (auto& v : cov) v /= static_cast<double>(n);
  for (size_t i = 0; i < d; ++i) res.total_variance += cov[i * d + i];

  auto matvec = [&](const std::vector<double>& v) {
    std::vector<double> out(d, 0.0);
    for (size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (size_t j = 0; j < d; ++j) acc += cov[i * d + j] * v[j];
      out[i] = acc;
    }
    return out;
  };
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };

  res.basis.assign(d * target_dim, 0.0);
  std::vector<std::vector<double>> comps;
  for (size_t k = 0; k < target_dim; ++k) {
    // Deterministic start, slightly tilted to break symmetric ties.
    std::vector<double> v(d);
    for (size_t i = 0; i < d; ++i) v[i] = 1.0 + 1e-3 * static_cast<double>(i + 1);
    for (const auto& c : comps) {
      double dot = 0.0;
      for (size_t i = 0; i < d; ++i) dot += v[i] * c[i];
      for (size_t i = 0; i < d; ++i) v[i] -= dot * c[i];
    }
    double nv = norm(v);
    if (nv < 1e-12) {
      // Start vector collapsed; pick a basis vector orthogonal to found comps.
      for (size_t e = 0; e < d; ++e) {
        std::fill(v.begin(), v.end(), 0.0);
        v[e] = 1.0;
        for (const auto& c : comps) {
          double dot = c[e];
          for (size_t i = 0; i < d; ++i) v[i] -= dot * c[i];
        }
        nv = norm(v);
        if (nv > 1e-6) break;
      }
    }
    for (auto& x : v) x /= nv;

    bool converged = false;
    for (int it = 0; it < max_iters; ++it) {
      std::vector<double> w = matvec(v);
      // Deflation by re-orthogonalization against the found components.
      for (const auto& c : comps) {
        double dot = 0.0;
        for (size_t i = 0; i < d; ++i) dot += w[i] * c[i];
        for (size_t i = 0; i < d; ++i) w[i] -= dot * c[i];
      }
      double nw = norm(w);
      if (nw < 1e-300) {
        // Null direction: eigenvalue 0, current v is as good as any.
        converged = true;
        break;
      }
      for (auto& x : w) x /= nw;
      double diff = 0.0;
      for (size_t i = 0; i < d; ++i) diff += (w[i] - v[i]) * (w[i] - v[i]);
      v = std::move(w);
      if (std::sqrt(diff) < tol) {
        converged = true;
        break;
      }
    }
    if (!converged)
      fail("ConvergenceFailure", "power iteration did not converge for component " +
                                     std::to_string(k + 1));

    std::vector<double> cv = matvec(v);
    double lambda = 0.0;
    for (size_t i = 0; i < d; ++i) lambda += v[i] * cv[i];
    if (lambda < 0 && lambda > -1e-12) lambda = 0.0;

    // Sign convention: largest-magnitude loading positive.
    size_t arg = 0;
    for (size_t i = 1; i < d; ++i)
      if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0)
      for (auto& x : v) x = -x;

    res.eigenvalues.push_back(lambda);
    for (size_t i = 0; i < d; ++i) res.basis[i * target_dim + k] = v[i];
    comps.push_back(v);
  }

  res.compressed.rows = n;
  res.compressed.cols = target_dim + 1;
  res.compressed.values.assign(n * (target_dim + 1), 0.0);
  res.compressed.group_null = matrix.group_null;
  for (size_t r = 0; r < n; ++r) {
    for (size_t k = 0; k < target_dim; ++k) {
      double acc = 0.0;
      for (size_t i = 0; i < d; ++i)
        acc += (matrix.at(r, i) - res.mean[i]) * res.basis[i * target_dim + k];
      res.compressed.values[r * (target_dim + 1) + k] = acc;
    }
    res.compressed.values[r * (target_dim + 1) + target_dim] = matrix.at(r, matrix.cols - 1);
  }
  return res;
}

void write_pretrain_table_csv(const std::string& path, const std::vector<PretrainRow>& rows,
                              const TaskMatrix& matrix) {
  check(rows.size() == matrix.rows, "FileWrite", "row list does not match matrix");
  CsvWriter w(path);
  std::vector<std::string> header = {"entity_key", "cutoff", "group_id"};
  for (size_t c = 0; c < matrix.cols; ++c) header.push_back("v" + std::to_string(c));
  w.write_row(header);
  for (size_t r = 0; r < rows.size(); ++r) {
    std::vector<std::string> fields = {rows[r].entity_key, std::to_string(rows[r].cutoff),
                                       matrix.group_null[r] ? "null" : "non_null"};
    for (size_t c = 0; c < matrix.cols; ++c) fields.push_back(format_double(matrix.at(r, c)));
    w.write_row(fields);
  }
}

std::pair<std::vector<PretrainRow>, TaskMatrix> read_pretrain_table_csv(const std::string& path) {
  CsvTable csv = read_csv(path);
  check(csv.header.size() >= 4, "MissingArtifact", "pretrain table " + path + " is malformed");
  std::vector<PretrainRow> rows;
  TaskMatrix m;
  m.rows = csv.rows.size();
  m.cols = csv.header.size() - 3;
  m.values.reserve(m.rows * m.cols);
  for (const auto& row : csv.rows) {
    rows.push_back({row[0], std::stoll(row[1])});
    m.group_null.push_back(row[2] == "null" ? 1 : 0);
    for (size_t c = 3; c < row.size(); ++c) m.values.push_back(std::stod(row[c]));
  }
  return {std::move(rows), std::move(m)};
}

void write_layout_json(const std::string& path, const TaskVectorLayout& layout,
                       const NormalizationPlan& plan, const PcaResult* pca) {
  json j;
  j["slots"] = json::array();
  for (const auto& s : layout.slots) {
    j["slots"].push_back({{"path", s.path_name},
                          {"column", s.column},
                          {"agg", aggregator_name(s.agg)},
                          {"component", s.component},
                          {"name", slot_column_name(s, nullptr, nullptr)}});
  }
  j["normalization"] = json::array();
  for (const auto& t : plan.slots)
    j["normalization"].push_back({{"log1p", t.use_log1p}, {"shift", t.shift}, {"scale", t.scale}});
  if (pca) {
    j["pca"] = {{"in_dim", pca->in_dim},
                {"out_dim", pca->out_dim},
                {"basis", pca->basis},
                {"eigenvalues", pca->eigenvalues},
                {"mean", pca->mean}};
  } else {
    j["pca"] = nullptr;
  }
  std::ofstream out(path);
  if (!out) fail("FileWrite", "cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace relpretext
