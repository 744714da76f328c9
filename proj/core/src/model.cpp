#include "relpretext/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "relpretext/error.hpp"

namespace relpretext {

namespace {

uint64_t name_hash(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string link_param_stem(const FkLink& link, bool parent_to_child) {
  return link.child_table + "." + link.fk_column + (parent_to_child ? ".to_child" : ".to_parent");
}

}  // namespace

void EncoderConfig::validate() const {
  check(channels >= 4, "ShapeMismatch", "channels must be >= 4");
  check(gnn_layers >= 1, "ShapeMismatch", "need at least one GNN layer");
  check(static_cast<int>(fanouts.size()) == gnn_layers, "ShapeMismatch",
        "fanouts length must equal gnn_layers");
  check(dt > 0, "ShapeMismatch", "dt must be positive");
}

Model::Model(const RelationalStore& store, EncoderConfig config, int layout_dim)
    : store_(&store), config_(std::move(config)), layout_dim_(layout_dim) {
  config_.validate();
  check(layout_dim_ >= 1, "ShapeMismatch", "layout_dim must be >= 1");
  const int c = config_.channels;

  // Feature metadata, with per-column normalization from the full store.
  features_.resize(store.tables().size());
  for (size_t t = 0; t < store.tables().size(); ++t) {
    const Table& table = store.table(static_cast<int>(t));
    for (size_t col = 0; col < table.def.columns.size(); ++col) {
      const ColumnKind& kind = table.def.columns[col].kind;
      FeatureColumn fc;
      fc.col = static_cast<int>(col);
      fc.type = kind.type;
      switch (kind.type) {
        case ColumnType::Numeric: {
          double sum = 0.0, sumsq = 0.0;
          size_t n = 0;
          const Column& data = table.columns[col];
          for (size_t r = 0; r < table.row_count; ++r) {
            if (data.missing[r]) continue;
            sum += data.numeric[r];
            sumsq += data.numeric[r] * data.numeric[r];
            ++n;
          }
          if (n > 0) {
            fc.mean = sum / static_cast<double>(n);
            double var = sumsq / static_cast<double>(n) - fc.mean * fc.mean;
            fc.std = var > 1e-24 ? std::sqrt(var) : 1.0;
          }
          fc.width = 1;
          break;
        }
        case ColumnType::Timestamp: fc.width = 1; break;
        case ColumnType::Categorical: fc.width = kind.cardinality; break;
        case ColumnType::Embedding: fc.width = kind.dim; break;
        default: continue;  // keys carry structure, not features
      }
      features_[t].push_back(fc);
    }
  }

  // Parameters. Each is initialized from its own name-keyed stream so the
  // same (seed, name, shape) always produces the same values regardless of
  // head configuration.
  Rng unused(0);
  for (size_t t = 0; t < store.tables().size(); ++t) {
    const Table& table = store.table(static_cast<int>(t));
    const std::string tn = table.def.name;
    int fused_in = 0;
    for (const auto& fc : features_[t]) {
      const std::string cn = table.def.columns[fc.col].name;
      switch (fc.type) {
        case ColumnType::Numeric:
        case ColumnType::Timestamp:
          add_param("enc." + tn + "." + cn + ".w", {1, c}, unused);
          add_param("enc." + tn + "." + cn + ".b", {1, c}, unused);
          break;
        case ColumnType::Categorical:
          add_param("enc." + tn + "." + cn + ".emb", {fc.width, c}, unused);
          break;
        case ColumnType::Embedding:
          add_param("enc." + tn + "." + cn + ".proj.w", {fc.width, c}, unused);
          add_param("enc." + tn + "." + cn + ".proj.b", {1, c}, unused);
          break;
        default: break;
      }
      fused_in += c;
    }
    if (fused_in == 0) {
      add_param("enc." + tn + ".bias", {1, c}, unused);
      fused_in = c;
    }
    add_param("fuse." + tn + ".w1", {fused_in, c}, unused);
    add_param("fuse." + tn + ".b1", {1, c}, unused);
    add_param("fuse." + tn + ".w2", {c, c}, unused);
    add_param("fuse." + tn + ".b2", {1, c}, unused);
  }
  for (int l = 0; l < config_.gnn_layers; ++l) {
    const std::string ls = "gnn" + std::to_string(l);
    for (const auto& link : store.links()) {
      for (bool ptc : {false, true}) {
        add_param(ls + ".msg." + link_param_stem(link, ptc) + ".w", {c, c}, unused);
        add_param(ls + ".msg." + link_param_stem(link, ptc) + ".b", {1, c}, unused);
      }
    }
    add_param(ls + ".update.w1", {2 * c, c}, unused);
    add_param(ls + ".update.b1", {1, c}, unused);
    add_param(ls + ".update.w2", {c, c}, unused);
    add_param(ls + ".update.b2", {1, c}, unused);
  }
  // Heads.
  add_param("head.tve.w1", {c, c}, unused);
  add_param("head.tve.b1", {1, c}, unused);
  add_param("head.tve.w2", {c, layout_dim_}, unused);
  add_param("head.tve.b2", {1, layout_dim_}, unused);
  add_param("head.ctr.w1", {c, c}, unused);
  add_param("head.ctr.b1", {1, c}, unused);
  add_param("head.ctr.w2", {c, c}, unused);
  add_param("head.ctr.b2", {1, c}, unused);
  add_param("head.down.w", {c, 1}, unused);
  add_param("head.down.b", {1, 1}, unused);
  for (size_t t = 0; t < store.tables().size(); ++t) {
    const Table& table = store.table(static_cast<int>(t));
    for (const auto& fc : features_[t]) {
      if (fc.type == ColumnType::Timestamp) continue;  // not reconstructed
      const std::string stem =
          "head.recon." + table.def.name + "." + table.def.columns[fc.col].name;
      add_param(stem + ".w", {c, fc.width}, unused);
      add_param(stem + ".b", {1, fc.width}, unused);
    }
  }
}

void Model::add_param(const std::string& name, Shape shape, Rng&) {
  // Uniform +-sqrt(6 / (fan_in + fan_out)), biases zero.
  std::vector<double> init(shape.size(), 0.0);
  const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") ||
                       name.ends_with(".bias");
  if (!is_bias) {
    double limit = std::sqrt(6.0 / static_cast<double>(shape.rows + shape.cols));
    Rng rng(Rng::mix(config_.seed, name_hash(name)));
    for (auto& v : init) v = rng.uniform(-limit, limit);
  }
  int idx = params_.add(name, shape, std::move(init));
  param_index_[name] = idx;
}

bool Model::is_backbone_param(const std::string& name) { return !name.starts_with("head."); }

void Model::load_params(const ParamSet& checkpoint) {
  check(checkpoint.size() == params_.size(), "ShapeMismatch",
        "checkpoint has a different parameter count");
  for (auto& e : params_.entries()) {
    const auto& src = checkpoint.at(e.name);
    check(src.shape == e.shape, "ShapeMismatch", "checkpoint shape mismatch for " + e.name);
    e.value = src.value;
    std::fill(e.momentum.begin(), e.momentum.end(), 0.0);
  }
}

int Model::layout_dim_of(const ParamSet& checkpoint) {
  return checkpoint.at("head.tve.w2").shape.cols;
}

uint64_t Model::backbone_checksum() const {
  ParamSet backbone;
  for (const auto& e : params_.entries())
    if (is_backbone_param(e.name)) backbone.add(e.name, e.shape, e.value);
  return backbone.checksum();
}

SampledSubgraph Model::sample_subgraph(const std::string& entity_key, int64_t t_v,
                                       Rng& rng) const {
  // The seed table is whichever table's PK matches; callers always pass the
  // prediction root, so resolve from the first table containing the key.
  for (size_t t = 0; t < store_->tables().size(); ++t) {
    const Table& table = store_->table(static_cast<int>(t));
    auto it = table.pk_index.find(entity_key);
    if (it != table.pk_index.end() && !table.is_fact())
      return sample_subgraph(RowRef{static_cast<int>(t), it->second}, t_v, rng);
  }
  fail("UnknownRoot", "entity '" + entity_key + "' not found in any dimension table");
}

SampledSubgraph Model::sample_subgraph(RowRef seed, int64_t t_v, Rng& rng) const {
  struct EdgeRec {
    int link;
    bool parent_to_child;
    RowRef src, dst;
  };
  std::set<RowRef> visited{seed};
  std::vector<RowRef> frontier{seed};
  std::vector<EdgeRec> edges;

  const auto& links = store_->links();
  for (int hop = 0; hop < config_.gnn_layers; ++hop) {
    const uint32_t fanout = static_cast<uint32_t>(config_.fanouts[hop]);
    std::vector<RowRef> next;
    for (const RowRef& u : frontier) {
      const Table& ut = store_->table(u.table);
      // Candidate neighbors: FK parents of u plus children pointing at u,
      // fact rows only when they respect the cutoff.
      struct Cand {
        RowRef ref;
        int link;
        bool parent_to_child;  // direction of the message edge src->dst=u
      };
      std::vector<Cand> cands;
      for (size_t li = 0; li < links.size(); ++li) {
        const FkLink& link = links[li];
        if (link.child_table == ut.def.name) {
          int fk_col = ut.column_index(link.fk_column);
          const Column& fk = ut.columns[fk_col];
          if (!fk.missing[u.row]) {
            const Table& parent = store_->table(link.parent_table);
            auto pit = parent.pk_index.find(fk.keys[u.row]);
            if (pit != parent.pk_index.end()) {
              RowRef p{store_->table_index(link.parent_table), pit->second};
              if (!parent.is_fact() || parent.timestamp_of(p.row) <= t_v)
                cands.push_back({p, static_cast<int>(li), true});
            }
          }
        }
        if (link.parent_table == ut.def.name) {
          const Table& child = store_->table(link.child_table);
          const std::string& key = ut.columns[ut.pk_col].keys[u.row];
          auto cit = child.key_index.at(link.fk_column).find(key);
          if (cit != child.key_index.at(link.fk_column).end()) {
            int child_tab = store_->table_index(link.child_table);
            for (uint32_t crow : cit->second) {
              if (child.is_fact() && child.timestamp_of(crow) > t_v) continue;
              cands.push_back({RowRef{child_tab, crow}, static_cast<int>(li), false});
            }
          }
        }
      }
      std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (!(a.ref == b.ref)) return a.ref < b.ref;
        if (a.link != b.link) return a.link < b.link;
        return a.parent_to_child < b.parent_to_child;
      });
      std::vector<uint32_t> chosen;
      if (cands.size() <= fanout) {
        chosen.resize(cands.size());
        for (uint32_t i = 0; i < cands.size(); ++i) chosen[i] = i;
      } else {
        chosen = rng.sample_without_replacement(static_cast<uint32_t>(cands.size()), fanout);
        std::sort(chosen.begin(), chosen.end());
      }
      for (uint32_t ci : chosen) {
        const Cand& cand = cands[ci];
        edges.push_back({cand.link, cand.parent_to_child, cand.ref, u});
        if (visited.insert(cand.ref).second) next.push_back(cand.ref);
      }
    }
    std::sort(next.begin(), next.end());
    frontier = std::move(next);
  }

  // Canonical form: per-table sorted node lists, remapped sorted edge groups.
  SampledSubgraph sg;
  sg.cutoff = t_v;
  std::map<int, std::vector<uint32_t>> per_table;
  for (const RowRef& r : visited) per_table[r.table].push_back(r.row);
  std::map<int, int> table_pos;
  for (auto& [tab, rows] : per_table) {
    std::sort(rows.begin(), rows.end());
    table_pos[tab] = static_cast<int>(sg.tables.size());
    sg.tables.push_back({tab, rows});
  }
  auto local_of = [&](const RowRef& r) {
    const auto& rows = sg.tables[table_pos.at(r.table)].rows;
    return static_cast<int>(std::lower_bound(rows.begin(), rows.end(), r.row) - rows.begin());
  };
  std::map<std::pair<int, int>, std::set<std::pair<int, int>>> groups;
  for (const auto& e : edges)
    groups[{e.link, e.parent_to_child ? 1 : 0}].insert({local_of(e.src), local_of(e.dst)});
  for (const auto& [key, pairs] : groups) {
    SampledSubgraph::EdgeGroup g;
    g.link = key.first;
    g.parent_to_child = key.second == 1;
    const FkLink& link = links[g.link];
    int child_tab = store_->table_index(link.child_table);
    int parent_tab = store_->table_index(link.parent_table);
    g.src_pos = table_pos.at(g.parent_to_child ? parent_tab : child_tab);
    g.dst_pos = table_pos.at(g.parent_to_child ? child_tab : parent_tab);
    g.pairs.assign(pairs.begin(), pairs.end());
    sg.edges.push_back(std::move(g));
  }
  sg.seed_pos = table_pos.at(seed.table);
  sg.seed_local = local_of(seed);
  return sg;
}

Model::Bound Model::bind(Tape& tape, bool trainable) const {
  Bound b;
  b.tape = &tape;
  b.trainable = trainable;
  b.vars.reserve(params_.size());
  for (const auto& e : params_.entries())
    b.vars.push_back(tape.input(e.shape, e.value, trainable));
  return b;
}

void Model::accumulate_grads(const Bound& bound, ParamSet& grads) const {
  check(bound.vars.size() == params_.size(), "ShapeMismatch", "bound/model mismatch");
  for (size_t i = 0; i < bound.vars.size(); ++i) {
    const auto& g = bound.vars[i].grad();
    auto& acc = grads.at(static_cast<int>(i)).value;
    for (size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
  }
}

Var Model::param_var(Bound& bound, const std::string& name) const {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) fail("UnknownHead", "no parameter named " + name);
  return bound.vars[it->second];
}

std::vector<Var> Model::encode_columns(Bound& bound, const SampledSubgraph& sg, int pos,
                                       const FeatureOverrides* overrides) const {
  Tape& tape = *bound.tape;
  const auto& nodes = sg.tables[pos];
  const Table& table = store_->table(nodes.table);
  const int n = static_cast<int>(nodes.rows.size());
  const std::string& tn = table.def.name;

  std::vector<Var> encoded;
  for (const auto& fc : features_[nodes.table]) {
    const Column& data = table.columns[fc.col];
    const std::string cn = table.def.columns[fc.col].name;
    switch (fc.type) {
      case ColumnType::Numeric: {
        std::vector<double> v(n, 0.0);
        for (int i = 0; i < n; ++i) {
          uint32_t r = nodes.rows[i];
          const auto* ov = overrides ? overrides->find(nodes.table, r, fc.col) : nullptr;
          if (ov) v[i] = (ov->numeric - fc.mean) / fc.std;
          else if (!data.missing[r]) v[i] = (data.numeric[r] - fc.mean) / fc.std;
        }
        Var x = tape.constant({n, 1}, std::move(v));
        encoded.push_back(tape.add_row_bias(tape.matmul(x, param_var(bound, "enc." + tn + "." + cn + ".w")),
                                            param_var(bound, "enc." + tn + "." + cn + ".b")));
        break;
      }
      case ColumnType::Timestamp: {
        std::vector<double> v(n, 0.0);
        for (int i = 0; i < n; ++i) {
          double age = static_cast<double>(sg.cutoff - data.timestamps[nodes.rows[i]]) /
                       static_cast<double>(config_.dt);
          // Clamped age in dt units, log-compressed so one window of recency
          // moves the input as much as the tail does; raw [0,100] ages made
          // the loss surface too ill-conditioned to train.
          v[i] = std::log1p(std::clamp(age, 0.0, 100.0));
        }
        Var x = tape.constant({n, 1}, std::move(v));
        encoded.push_back(tape.add_row_bias(tape.matmul(x, param_var(bound, "enc." + tn + "." + cn + ".w")),
                                            param_var(bound, "enc." + tn + "." + cn + ".b")));
        break;
      }
      case ColumnType::Categorical: {
        // One-hot gather through a constant matrix; missing rows stay zero.
        std::vector<double> onehot(static_cast<size_t>(n) * fc.width, 0.0);
        for (int i = 0; i < n; ++i) {
          uint32_t r = nodes.rows[i];
          const auto* ov = overrides ? overrides->find(nodes.table, r, fc.col) : nullptr;
          int32_t code = ov ? ov->code : (data.missing[r] ? -1 : data.codes[r]);
          if (code >= 0 && code < fc.width) onehot[static_cast<size_t>(i) * fc.width + code] = 1.0;
        }
        Var x = tape.constant({n, fc.width}, std::move(onehot));
        encoded.push_back(tape.matmul(x, param_var(bound, "enc." + tn + "." + cn + ".emb")));
        break;
      }
      case ColumnType::Embedding: {
        std::vector<double> v(static_cast<size_t>(n) * fc.width, 0.0);
        for (int i = 0; i < n; ++i) {
          uint32_t r = nodes.rows[i];
          const auto* ov = overrides ? overrides->find(nodes.table, r, fc.col) : nullptr;
          if (ov) {
            std::copy(ov->embedding.begin(), ov->embedding.end(),
                      v.begin() + static_cast<size_t>(i) * fc.width);
          } else if (!data.missing[r]) {
            std::copy(data.embedding.begin() + static_cast<size_t>(r) * fc.width,
                      data.embedding.begin() + static_cast<size_t>(r + 1) * fc.width,
                      v.begin() + static_cast<size_t>(i) * fc.width);
          }
        }
        Var x = tape.constant({n, fc.width}, std::move(v));
        encoded.push_back(
            tape.add_row_bias(tape.matmul(x, param_var(bound, "enc." + tn + "." + cn + ".proj.w")),
                              param_var(bound, "enc." + tn + "." + cn + ".proj.b")));
        break;
      }
      default: break;
    }
  }
  return encoded;
}

std::vector<Var> Model::encode_tables(Bound& bound, const SampledSubgraph& sg,
                                      const FeatureOverrides* overrides) const {
  Tape& tape = *bound.tape;
  const int c = config_.channels;

  // Column encodings -> per-table fusion.
  std::vector<Var> h(sg.tables.size());
  for (size_t pos = 0; pos < sg.tables.size(); ++pos) {
    const Table& table = store_->table(sg.tables[pos].table);
    const std::string& tn = table.def.name;
    const int n = static_cast<int>(sg.tables[pos].rows.size());
    std::vector<Var> cols = encode_columns(bound, sg, static_cast<int>(pos), overrides);
    Var fused_in;
    if (cols.empty()) {
      std::vector<Var> rows(n, param_var(bound, "enc." + tn + ".bias"));
      fused_in = tape.stack_rows(rows);
    } else {
      fused_in = cols.size() == 1 ? cols[0] : tape.concat_cols(cols);
    }
    Var h1 = tape.relu(tape.add_row_bias(tape.matmul(fused_in, param_var(bound, "fuse." + tn + ".w1")),
                                         param_var(bound, "fuse." + tn + ".b1")));
    h[pos] = tape.add_row_bias(tape.matmul(h1, param_var(bound, "fuse." + tn + ".w2")),
                               param_var(bound, "fuse." + tn + ".b2"));
  }

  // Typed message passing with mean aggregation; empty neighborhoods leave
  // the zero message in place.
  const auto& links = store_->links();
  for (int l = 0; l < config_.gnn_layers; ++l) {
    const std::string ls = "gnn" + std::to_string(l);
    std::vector<Var> msg(sg.tables.size());
    for (size_t pos = 0; pos < sg.tables.size(); ++pos)
      msg[pos] = tape.zeros({static_cast<int>(sg.tables[pos].rows.size()), c});
    for (const auto& g : sg.edges) {
      const int n_src = static_cast<int>(sg.tables[g.src_pos].rows.size());
      const int n_dst = static_cast<int>(sg.tables[g.dst_pos].rows.size());
      std::vector<double> avg(static_cast<size_t>(n_dst) * n_src, 0.0);
      std::vector<int> deg(n_dst, 0);
      for (const auto& [s, d] : g.pairs) deg[d]++;
      for (const auto& [s, d] : g.pairs)
        avg[static_cast<size_t>(d) * n_src + s] = 1.0 / static_cast<double>(deg[d]);
      Var a = tape.constant({n_dst, n_src}, std::move(avg));
      const std::string stem = ls + ".msg." + link_param_stem(links[g.link], g.parent_to_child);
      Var m = tape.add_row_bias(tape.matmul(tape.matmul(a, h[g.src_pos]), param_var(bound, stem + ".w")),
                                param_var(bound, stem + ".b"));
      msg[g.dst_pos] = tape.add(msg[g.dst_pos], m);
    }
    for (size_t pos = 0; pos < sg.tables.size(); ++pos) {
      Var cat = tape.concat_cols({h[pos], msg[pos]});
      Var u1 = tape.relu(tape.add_row_bias(tape.matmul(cat, param_var(bound, ls + ".update.w1")),
                                           param_var(bound, ls + ".update.b1")));
      h[pos] = tape.add_row_bias(tape.matmul(u1, param_var(bound, ls + ".update.w2")),
                                 param_var(bound, ls + ".update.b2"));
    }
  }
  return h;
}

Var Model::encode(Bound& bound, const SampledSubgraph& sg,
                  const FeatureOverrides* overrides) const {
  std::vector<Var> h = encode_tables(bound, sg, overrides);
  return bound.tape->row(h[sg.seed_pos], sg.seed_local);
}

Var Model::head_forward(Bound& bound, Var latent, const std::string& head_id) const {
  Tape& tape = *bound.tape;
  if (head_id == "tve") {
    Var h1 = tape.relu(tape.add_row_bias(tape.matmul(latent, param_var(bound, "head.tve.w1")),
                                         param_var(bound, "head.tve.b1")));
    return tape.add_row_bias(tape.matmul(h1, param_var(bound, "head.tve.w2")),
                             param_var(bound, "head.tve.b2"));
  }
  if (head_id == "ctr") {
    Var h1 = tape.relu(tape.add_row_bias(tape.matmul(latent, param_var(bound, "head.ctr.w1")),
                                         param_var(bound, "head.ctr.b1")));
    return tape.add_row_bias(tape.matmul(h1, param_var(bound, "head.ctr.w2")),
                             param_var(bound, "head.ctr.b2"));
  }
  if (head_id == "down" || head_id == "probe") {
    // Strictly affine; the probing protocol depends on it.
    return tape.add_row_bias(tape.matmul(latent, param_var(bound, "head.down.w")),
                             param_var(bound, "head.down.b"));
  }
  fail("UnknownHead", "no head named " + head_id);
}

Var Model::recon_head(Bound& bound, Var latents, int table, int col) const {
  const Table& t = store_->table(table);
  const std::string stem = "head.recon." + t.def.name + "." + t.def.columns[col].name;
  return bound.tape->add_row_bias(bound.tape->matmul(latents, param_var(bound, stem + ".w")),
                                  param_var(bound, stem + ".b"));
}

double Model::normalized_numeric(int table, int col, uint32_t row) const {
  for (const auto& fc : features_[table]) {
    if (fc.col != col) continue;
    const Column& data = store_->table(table).columns[col];
    return (data.numeric[row] - fc.mean) / fc.std;
  }
  fail("UnknownColumn", "column is not a numeric feature");
}

}  // namespace relpretext
