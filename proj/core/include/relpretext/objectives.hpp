#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relpretext/model.hpp"
#include "relpretext/relstore.hpp"
#include "relpretext/rng.hpp"
#include "relpretext/tensor.hpp"

namespace relpretext {

struct LossWeights {
  double alpha = 2.0;  // SCE exponent, >= 1
  double beta = 0.1;   // combined-loss balance
  double tau = 0.2;    // InfoNCE temperature
};

// Per-row weights inversely proportional to group frequency, normalized to
// mean 1 over the batch. group_ids: 1 = null group, 0 = non-null.
std::vector<double> group_weights(const std::vector<int>& group_ids);

// Mean over rows of w_g * (1 - cos(pred_i, target_i))^alpha with
// eps-stabilized norms.
Var sce_loss(Tape& tape, Var pred, Var target, const std::vector<int>& group_ids, double alpha);

// Cell-level masking: Bernoulli(rate) over feature cells of the subgraph's
// nodes, replacements drawn from each column's marginal distribution.
// Originally-missing cells are never masked.
struct MaskedCell {
  int table = -1;
  uint32_t row = 0;
  int col = -1;
  int local = -1;  // node index within its subgraph table list
  int pos = -1;    // subgraph table position
};
struct MaskPlan {
  FeatureOverrides overrides;
  std::vector<MaskedCell> cells;
};

// Marginal cache so mask plans don't recompute column histograms per batch.
class MarginalCache {
 public:
  explicit MarginalCache(const RelationalStore& store);
  const Marginal& get(int table, int col) const;

 private:
  const RelationalStore* store_;
  std::vector<std::vector<int>> slot_;  // per (table, col) -> index or -1
  std::vector<Marginal> marginals_;
};

MaskPlan make_mask_plan(const Model& model, const SampledSubgraph& sg,
                        const MarginalCache& marginals, double mask_rate, Rng& rng);

// Full-feature reconstruction from masked inputs. Numeric and embedding
// cells use MSE on normalized values, categorical cells cross-entropy;
// originally-missing cells are skipped; per-table losses are summed.
Var mae_loss(const Model& model, Model::Bound& bound, const SampledSubgraph& sg,
             const MaskPlan& mask);

// Same reconstruction terms against latents the caller already encoded
// (combined objectives encode once and share).
Var mae_recon_from_latents(const Model& model, Model::Bound& bound, const SampledSubgraph& sg,
                           const std::vector<Var>& latents);

// Reconstruction error restricted to the masked cells (evaluation metric for
// the pre-training comparisons; same per-cell terms as mae_loss).
double masked_cell_recon_error(const Model& model, Model::Bound& bound,
                               const SampledSubgraph& sg, const MaskPlan& mask);

// Symmetric InfoNCE between the projected seed embeddings of the original
// and masked views. z1, z2: n x c (n >= 2).
Var infonce_loss(Tape& tape, Var z1, Var z2, double tau);

Var combined_loss(Tape& tape, Var tve_term, Var ssl_term, double beta);

}  // namespace relpretext
