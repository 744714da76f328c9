#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "relpretext/relstore.hpp"
#include "relpretext/rng.hpp"
#include "relpretext/tensor.hpp"

namespace relpretext {

struct EncoderConfig {
  int channels = 32;
  int gnn_layers = 2;
  std::vector<int> fanouts = {16, 8};
  int64_t dt = 7;  // timestamp age scale
  uint64_t seed = 0;

  void validate() const;
};

// Entity-graph subgraph rooted at one (entity, cutoff) seed. Node lists and
// edge groups are canonically sorted, so two samplings that discover the same
// rows in different orders produce identical structures.
struct SampledSubgraph {
  int64_t cutoff = 0;
  struct Nodes {
    int table = -1;                // store table index
    std::vector<uint32_t> rows;    // ascending
  };
  std::vector<Nodes> tables;
  struct EdgeGroup {
    int link = -1;                 // index into store.links()
    bool parent_to_child = false;  // message direction: src -> dst
    int src_pos = -1;              // index into `tables`
    int dst_pos = -1;
    std::vector<std::pair<int, int>> pairs;  // (src_local, dst_local), sorted unique
  };
  std::vector<EdgeGroup> edges;
  int seed_pos = -1;
  int seed_local = -1;

  size_t node_count() const {
    size_t n = 0;
    for (const auto& t : tables) n += t.rows.size();
    return n;
  }
};

// Feature-cell replacements (the masking augmentation). Keyed by
// (table, row, column).
struct FeatureOverrides {
  struct Value {
    double numeric = 0.0;
    int32_t code = -1;
    std::vector<double> embedding;
  };
  std::unordered_map<uint64_t, Value> cells;

  static uint64_t key(int table, uint32_t row, int col) {
    return (static_cast<uint64_t>(table) << 48) | (static_cast<uint64_t>(row) << 8) |
           static_cast<uint64_t>(col);
  }
  const Value* find(int table, uint32_t row, int col) const {
    auto it = cells.find(key(table, row, col));
    return it == cells.end() ? nullptr : &it->second;
  }
  bool empty() const { return cells.empty(); }
};

// Desk-scale RDL backbone: per-column encoders, per-table fusion MLP, typed
// message passing with mean aggregation, plus the task heads.
class Model {
 public:
  // layout_dim sizes the task-vector decoder head (>= 1).
  Model(const RelationalStore& store, EncoderConfig config, int layout_dim);

  const EncoderConfig& config() const { return config_; }
  const RelationalStore& store() const { return *store_; }
  int layout_dim() const { return layout_dim_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // True for parameters trained as part of the encoder (everything except
  // head.* entries).
  static bool is_backbone_param(const std::string& name);
  uint64_t backbone_checksum() const;

  // Replaces parameter values from a checkpoint; names and shapes must match
  // exactly. Momentum buffers reset to zero.
  void load_params(const ParamSet& checkpoint);
  // Width of the task-vector decoder recorded in a checkpoint.
  static int layout_dim_of(const ParamSet& checkpoint);

  SampledSubgraph sample_subgraph(const std::string& entity_key, int64_t t_v, Rng& rng) const;
  SampledSubgraph sample_subgraph(RowRef seed, int64_t t_v, Rng& rng) const;

  struct Bound {
    Tape* tape = nullptr;
    std::vector<Var> vars;  // parallel to params().entries()
    bool trainable = false;
  };
  Bound bind(Tape& tape, bool trainable = true) const;
  // Copies tape gradients back into a gradient accumulator (same layout).
  void accumulate_grads(const Bound& bound, ParamSet& grads) const;

  // Per-table node latents after all message-passing rounds; order matches
  // subgraph.tables.
  std::vector<Var> encode_tables(Bound& bound, const SampledSubgraph& sg,
                                 const FeatureOverrides* overrides = nullptr) const;
  // Seed-node embedding, 1 x channels.
  Var encode(Bound& bound, const SampledSubgraph& sg,
             const FeatureOverrides* overrides = nullptr) const;

  // head_id: "tve" | "down" | "ctr" | "probe" (affine alias of down).
  Var head_forward(Bound& bound, Var latent, const std::string& head_id) const;
  // Reconstruction head for one feature column; latents n x c.
  Var recon_head(Bound& bound, Var latents, int table, int col) const;

  struct FeatureColumn {
    int col = -1;
    ColumnType type = ColumnType::Numeric;
    int width = 1;       // embedding dim or categorical cardinality
    double mean = 0.0;   // numeric normalization
    double std = 1.0;
  };
  const std::vector<FeatureColumn>& feature_columns(int table) const {
    return features_[table];
  }
  double normalized_numeric(int table, int col, uint32_t row) const;

 private:
  Var param_var(Bound& bound, const std::string& name) const;
  void add_param(const std::string& name, Shape shape, Rng& unused);
  std::vector<Var> encode_columns(Bound& bound, const SampledSubgraph& sg, int pos,
                                  const FeatureOverrides* overrides) const;

  const RelationalStore* store_;
  EncoderConfig config_;
  int layout_dim_;
  ParamSet params_;
  std::unordered_map<std::string, int> param_index_;
  std::vector<std::vector<FeatureColumn>> features_;  // per table
};

}  // namespace relpretext
