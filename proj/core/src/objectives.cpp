#include "relpretext/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "relpretext/error.hpp"

namespace relpretext {

std::vector<double> group_weights(const std::vector<int>& group_ids) {
  const size_t n = group_ids.size();
  check(n > 0, "BatchTooSmall", "empty batch");
  size_t n_null = 0;
  for (int g : group_ids) n_null += g ? 1 : 0;
  const size_t n_non = n - n_null;
  const int groups_present = (n_null > 0 ? 1 : 0) + (n_non > 0 ? 1 : 0);
  // w_g proportional to 1/freq(g), normalized so the batch mean weight is 1.
  std::vector<double> w(n, 1.0);
  if (groups_present < 2) return w;
  const double w_null = static_cast<double>(n) / (static_cast<double>(n_null) * groups_present);
  const double w_non = static_cast<double>(n) / (static_cast<double>(n_non) * groups_present);
  for (size_t i = 0; i < n; ++i) w[i] = group_ids[i] ? w_null : w_non;
  return w;
}

Var sce_loss(Tape& tape, Var pred, Var target, const std::vector<int>& group_ids, double alpha) {
  check(alpha >= 1.0, "NonFinite", "SCE exponent must be >= 1");
  const int n = pred.shape().rows;
  check(static_cast<int>(group_ids.size()) == n, "ShapeMismatch", "one group id per row");
  Var cos = tape.cosine_rows(pred, target);
  // relu clears the tiny negative residue FP leaves at cos == 1 exactly.
  Var err = tape.relu(tape.add_scalar(tape.scale(cos, -1.0), 1.0));
  Var powd = alpha == 1.0 ? err : tape.power(err, alpha);
  Var w = tape.constant({n, 1}, group_weights(group_ids));
  return tape.scale(tape.sum_all(tape.mul(powd, w)), 1.0 / static_cast<double>(n));
}

MarginalCache::MarginalCache(const RelationalStore& store) : store_(&store) {
  slot_.resize(store.tables().size());
  for (size_t t = 0; t < store.tables().size(); ++t) {
    const Table& table = store.table(static_cast<int>(t));
    slot_[t].assign(table.def.columns.size(), -1);
    for (size_t c = 0; c < table.def.columns.size(); ++c) {
      ColumnType type = table.def.columns[c].kind.type;
      if (type != ColumnType::Numeric && type != ColumnType::Categorical &&
          type != ColumnType::Embedding)
        continue;
      try {
        Marginal m = column_marginal(store, table.def.name, table.def.columns[c].name);
        slot_[t][c] = static_cast<int>(marginals_.size());
        marginals_.push_back(std::move(m));
      } catch (const Error& e) {
        if (e.code() != "AllMissing") throw;  // all-missing columns are simply unmaskable
      }
    }
  }
}

const Marginal& MarginalCache::get(int table, int col) const {
  int s = slot_[table][col];
  check(s >= 0, "AllMissing", "column has no observed values");
  return marginals_[s];
}

MaskPlan make_mask_plan(const Model& model, const SampledSubgraph& sg,
                        const MarginalCache& marginals, double mask_rate, Rng& rng) {
  MaskPlan plan;
  if (mask_rate <= 0.0) return plan;
  const RelationalStore& store = model.store();
  for (size_t pos = 0; pos < sg.tables.size(); ++pos) {
    const auto& nodes = sg.tables[pos];
    const Table& table = store.table(nodes.table);
    for (const auto& fc : model.feature_columns(nodes.table)) {
      if (fc.type == ColumnType::Timestamp) continue;  // time is structure, not content
      const Column& data = table.columns[fc.col];
      for (size_t i = 0; i < nodes.rows.size(); ++i) {
        uint32_t r = nodes.rows[i];
        if (data.missing[r]) continue;  // originally-missing cells are never masked
        if (rng.uniform() >= mask_rate) continue;
        const Marginal& m = marginals.get(nodes.table, fc.col);
        size_t pick = m.sample_index(rng);
        FeatureOverrides::Value v;
        switch (fc.type) {
          case ColumnType::Numeric: v.numeric = m.numeric_values[pick]; break;
          case ColumnType::Categorical: v.code = m.cat_codes[pick]; break;
          case ColumnType::Embedding:
            v.embedding.assign(m.embedding_values.begin() + pick * fc.width,
                               m.embedding_values.begin() + (pick + 1) * fc.width);
            break;
          default: continue;
        }
        plan.overrides.cells[FeatureOverrides::key(nodes.table, r, fc.col)] = std::move(v);
        plan.cells.push_back({nodes.table, r, fc.col, static_cast<int>(i), static_cast<int>(pos)});
      }
    }
  }
  return plan;
}

namespace {

// Per-column reconstruction terms for one subgraph table; each returned Var
// is a scalar mean over the counted cells.
struct ReconTerm {
  Var loss;
  int cells = 0;
};

ReconTerm recon_column_loss(const Model& model, Model::Bound& bound, const SampledSubgraph& sg,
                            int pos, const Model::FeatureColumn& fc, Var latents) {
  Tape& tape = *bound.tape;
  const auto& nodes = sg.tables[pos];
  const Table& table = model.store().table(nodes.table);
  const Column& data = table.columns[fc.col];
  const int n = static_cast<int>(nodes.rows.size());
  ReconTerm term;

  if (fc.type == ColumnType::Categorical) {
    std::vector<int> present;
    std::vector<int> targets;
    for (int i = 0; i < n; ++i) {
      uint32_t r = nodes.rows[i];
      if (data.missing[r]) continue;
      present.push_back(i);
      targets.push_back(data.codes[r]);
    }
    if (present.empty()) return term;
    Var logits = model.recon_head(bound, latents, nodes.table, fc.col);
    std::vector<double> sel(present.size() * static_cast<size_t>(n), 0.0);
    for (size_t k = 0; k < present.size(); ++k) sel[k * n + present[k]] = 1.0;
    Var picked = tape.matmul(tape.constant({static_cast<int>(present.size()), n}, std::move(sel)),
                             logits);
    term.loss = tape.softmax_cross_entropy(picked, targets);
    term.cells = static_cast<int>(present.size());
    return term;
  }

  // Numeric / embedding: masked mean of squared error over present cells.
  const int w = fc.type == ColumnType::Numeric ? 1 : fc.width;
  std::vector<double> target(static_cast<size_t>(n) * w, 0.0);
  std::vector<double> present(static_cast<size_t>(n) * w, 0.0);
  int count = 0;
  for (int i = 0; i < n; ++i) {
    uint32_t r = nodes.rows[i];
    if (data.missing[r]) continue;
    if (fc.type == ColumnType::Numeric) {
      target[i] = model.normalized_numeric(nodes.table, fc.col, r);
      present[i] = 1.0;
    } else {
      for (int k = 0; k < w; ++k) {
        target[static_cast<size_t>(i) * w + k] = data.embedding[static_cast<size_t>(r) * w + k];
        present[static_cast<size_t>(i) * w + k] = 1.0;
      }
    }
    ++count;
  }
  if (count == 0) return term;
  Var out = model.recon_head(bound, latents, nodes.table, fc.col);
  Var diff = tape.sub(out, tape.constant({n, w}, std::move(target)));
  Var sq = tape.mul(diff, diff);
  Var masked = tape.mul(sq, tape.constant({n, w}, std::move(present)));
  term.loss = tape.scale(tape.sum_all(masked), 1.0 / static_cast<double>(count * w));
  term.cells = count;
  return term;
}

}  // namespace

Var mae_recon_from_latents(const Model& model, Model::Bound& bound, const SampledSubgraph& sg,
                           const std::vector<Var>& latents) {
  Tape& tape = *bound.tape;
  Var total = tape.scalar_const(0.0);
  for (size_t pos = 0; pos < sg.tables.size(); ++pos) {
    for (const auto& fc : model.feature_columns(sg.tables[pos].table)) {
      if (fc.type == ColumnType::Timestamp) continue;
      ReconTerm term =
          recon_column_loss(model, bound, sg, static_cast<int>(pos), fc, latents[pos]);
      if (term.cells > 0) total = tape.add(total, term.loss);
    }
  }
  return total;
}

Var mae_loss(const Model& model, Model::Bound& bound, const SampledSubgraph& sg,
             const MaskPlan& mask) {
  std::vector<Var> latents = model.encode_tables(bound, sg, &mask.overrides);
  return mae_recon_from_latents(model, bound, sg, latents);
}

double masked_cell_recon_error(const Model& model, Model::Bound& bound,
                               const SampledSubgraph& sg, const MaskPlan& mask) {
  if (mask.cells.empty()) return 0.0;
  Tape& tape = *bound.tape;
  std::vector<Var> latents = model.encode_tables(bound, sg, &mask.overrides);
  const RelationalStore& store = model.store();

  double total = 0.0;
  size_t counted = 0;
  for (const auto& cell : mask.cells) {
    const Table& table = store.table(cell.table);
    const Column& data = table.columns[cell.col];
    const Model::FeatureColumn* fc = nullptr;
    for (const auto& f : model.feature_columns(cell.table))
      if (f.col == cell.col) fc = &f;
    if (!fc) continue;
    Var out_all = model.recon_head(bound, latents[cell.pos], cell.table, cell.col);
    Var out = tape.row(out_all, cell.local);
    if (fc->type == ColumnType::Categorical) {
      total += tape.softmax_cross_entropy(out, {data.codes[cell.row]}).scalar();
    } else if (fc->type == ColumnType::Numeric) {
      double t = model.normalized_numeric(cell.table, cell.col, cell.row);
      double d = out.value()[0] - t;
      total += d * d;
    } else {
      double acc = 0.0;
      for (int k = 0; k < fc->width; ++k) {
        double d = out.value()[k] - data.embedding[static_cast<size_t>(cell.row) * fc->width + k];
        acc += d * d;
      }
      total += acc / fc->width;
    }
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

Var infonce_loss(Tape& tape, Var z1, Var z2, double tau) {
  const int n = z1.shape().rows;
  check(n >= 2, "BatchTooSmall", "InfoNCE needs a batch of at least 2");
  check(tau > 0, "NonFinite", "temperature must be positive");
  Var a = tape.l2_normalize(z1);
  Var b = tape.l2_normalize(z2);
  Var sim = tape.scale(tape.matmul(a, tape.transpose(b)), 1.0 / tau);
  std::vector<int> diag(n);
  for (int i = 0; i < n; ++i) diag[i] = i;
  Var fwd = tape.softmax_cross_entropy(sim, diag);
  Var bwd = tape.softmax_cross_entropy(tape.transpose(sim), diag);
  return tape.scale(tape.add(fwd, bwd), 0.5);
}

Var combined_loss(Tape& tape, Var tve_term, Var ssl_term, double beta) {
  check(beta >= 0, "NonFinite", "beta must be >= 0");
  return tape.add(tve_term, tape.scale(ssl_term, beta));
}

}  // namespace relpretext
