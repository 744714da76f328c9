#include "relpretext/traineval.hpp"

#include <algorithm>
#include <cmath>

#include "relpretext/csv.hpp"
#include "relpretext/error.hpp"

namespace relpretext {

namespace {

constexpr uint64_t kEvalStream = 0xe7a1u;

void sgd_step(ParamSet& params, const Model::Bound& bound, double lr, double momentum) {
  for (size_t i = 0; i < params.size(); ++i) {
    auto& e = params.at(static_cast<int>(i));
    const auto& g = bound.vars[i].grad();
    for (size_t k = 0; k < e.value.size(); ++k) {
      e.momentum[k] = momentum * e.momentum[k] - lr * g[k];
      e.value[k] += e.momentum[k];
    }
  }
}

// Shuffled batch boundaries; a trailing singleton is merged into the previous
// batch so contrastive terms always see >= 2 rows.
std::vector<std::vector<uint32_t>> make_batches(size_t n, int batch_size, Rng& rng) {
  std::vector<uint32_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<uint32_t>(i);
  for (size_t i = n; i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<uint32_t>> batches;
  for (size_t at = 0; at < n; at += batch_size) {
    size_t end = std::min(n, at + static_cast<size_t>(batch_size));
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

bool objective_uses_tve(Objective o) {
  return o == Objective::Tve || o == Objective::MaeTve || o == Objective::CtrTve;
}
bool objective_uses_mae(Objective o) {
  return o == Objective::Mae || o == Objective::MaeTve;
}
bool objective_uses_ctr(Objective o) {
  return o == Objective::Ctr || o == Objective::CtrTve;
}

}  // namespace

Objective objective_from_name(const std::string& name) {
  if (name == "tve") return Objective::Tve;
  if (name == "mae") return Objective::Mae;
  if (name == "ctr") return Objective::Ctr;
  if (name == "mae+tve") return Objective::MaeTve;
  if (name == "ctr+tve") return Objective::CtrTve;
  if (name == "none") return Objective::None;
  fail("ConfigParse", "unknown objective '" + name + "'");
}

const char* objective_name(Objective o) {
  switch (o) {
    case Objective::Tve: return "tve";
    case Objective::Mae: return "mae";
    case Objective::Ctr: return "ctr";
    case Objective::MaeTve: return "mae+tve";
    case Objective::CtrTve: return "ctr+tve";
    case Objective::None: return "none";
  }
  return "?";
}

double LrSchedule::rate_at(int epoch, int total_epochs) const {
  const int drop_at = static_cast<int>(decay_at_frac * total_epochs);
  return epoch >= drop_at ? base * decay_factor : base;
}

void MetricsLog::write_csv(const std::string& path) const {
  CsvWriter w(path);
  w.write_row({"step", "loss_name", "value"});
  for (const auto& r : rows_)
    w.write_row({std::to_string(r.step), r.name, format_double(r.value)});
}

Var pretrain_batch_loss(const Model& model, Model::Bound& bound, const MarginalCache& marginals,
                        const RunConfig& cfg, const PretrainInputs& data,
                        const std::vector<uint32_t>& batch, uint64_t batch_seed,
                        std::map<std::string, double>* terms) {
  Tape& tape = *bound.tape;
  const Objective obj = cfg.objective;
  check(obj != Objective::None, "ConfigParse", "pre-training requires an objective");
  const size_t n = batch.size();

  std::vector<Var> seeds_masked, seeds_orig;
  std::vector<int> group_ids;
  std::vector<double> target_rows;
  Var mae_sum = tape.scalar_const(0.0);
  int mae_graphs = 0;

  for (size_t i = 0; i < n; ++i) {
    const uint32_t idx = batch[i];
    const PretrainRow& row = data.rows[idx];
    Rng rng(Rng::mix(batch_seed, idx));
    SampledSubgraph sg = model.sample_subgraph(row.entity_key, row.cutoff, rng);
    MaskPlan mask = make_mask_plan(model, sg, marginals, cfg.mask_rate, rng);

    std::vector<Var> latents_masked = model.encode_tables(bound, sg, &mask.overrides);
    Var seed_masked = tape.row(latents_masked[sg.seed_pos], sg.seed_local);
    seeds_masked.push_back(seed_masked);

    if (objective_uses_tve(obj)) {
      group_ids.push_back(data.targets.group_null[idx]);
      for (size_t c = 0; c < data.targets.cols; ++c)
        target_rows.push_back(data.targets.at(idx, c));
    }
    if (objective_uses_mae(obj)) {
      mae_sum = tape.add(mae_sum, mae_recon_from_latents(model, bound, sg, latents_masked));
      ++mae_graphs;
    }
    if (objective_uses_ctr(obj)) {
      seeds_orig.push_back(model.encode(bound, sg, nullptr));
    }
  }

  Var total = tape.scalar_const(0.0);
  Var tve_term, ssl_term;
  if (objective_uses_tve(obj)) {
    Var preds = model.head_forward(bound, tape.stack_rows(seeds_masked), "tve");
    Var targets = tape.constant({static_cast<int>(n), static_cast<int>(data.targets.cols)},
                                std::move(target_rows));
    tve_term = sce_loss(tape, preds, targets, group_ids, cfg.weights.alpha);
    if (terms) (*terms)["sce"] = tve_term.scalar();
  }
  if (objective_uses_mae(obj)) {
    ssl_term = tape.scale(mae_sum, 1.0 / static_cast<double>(std::max(mae_graphs, 1)));
    if (terms) (*terms)["mae"] = ssl_term.scalar();
  }
  if (objective_uses_ctr(obj)) {
    // Views: original features vs masked-augmented features of the same seed.
    Var z_masked = model.head_forward(bound, tape.stack_rows(seeds_masked), "ctr");
    Var z_orig = model.head_forward(bound, tape.stack_rows(seeds_orig), "ctr");
    ssl_term = infonce_loss(tape, z_orig, z_masked, cfg.weights.tau);
    if (terms) (*terms)["ctr"] = ssl_term.scalar();
  }

  switch (obj) {
    case Objective::Tve: total = tve_term; break;
    case Objective::Mae:
    case Objective::Ctr: total = ssl_term; break;
    case Objective::MaeTve:
    case Objective::CtrTve: total = combined_loss(tape, tve_term, ssl_term, cfg.weights.beta); break;
    case Objective::None: break;
  }
  if (terms) (*terms)["loss"] = total.scalar();
  return total;
}

ParamSet pretrain(const RelationalStore& store, const EncoderConfig& enc, const RunConfig& cfg,
                  const PretrainInputs& data, MetricsLog* log,
                  const std::function<void(int, const ParamSet&)>& epoch_cb) {
  check(!data.rows.empty(), "MissingArtifact", "pre-training table is empty");
  check(data.rows.size() == data.targets.rows, "ShapeMismatch",
        "pretrain rows do not match target matrix");
  EncoderConfig seeded = enc;
  seeded.seed = cfg.seed;
  Model model(store, seeded, static_cast<int>(data.targets.cols));
  MarginalCache marginals(store);

  int64_t step = 0;
  try {
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const double lr = cfg.lr.rate_at(epoch, cfg.epochs);
      Rng shuffle_rng(Rng::mix(cfg.seed, Rng::mix(0x5f7f, epoch)));
      auto batches = make_batches(data.rows.size(), cfg.batch_size, shuffle_rng);
      for (size_t b = 0; b < batches.size(); ++b) {
        Tape tape;
        Model::Bound bound = model.bind(tape, true);
        std::map<std::string, double> terms;
        uint64_t batch_seed = Rng::mix(cfg.seed, Rng::mix(epoch + 1, b));
        Var loss = pretrain_batch_loss(model, bound, marginals, cfg, data, batches[b],
                                       batch_seed, &terms);
        if (!std::isfinite(loss.scalar())) fail("DivergedLoss", "pre-training loss diverged");
        tape.backward(loss);
        sgd_step(model.params(), bound, lr, cfg.momentum);
        if (log)
          for (const auto& [name, value] : terms) log->append(step, name, value);
        ++step;
      }
      if (epoch_cb) epoch_cb(epoch, model.params());
    }
  } catch (const Error& e) {
    if (e.code() == "NonFinite") fail("DivergedLoss", e.what());
    throw;
  }
  return model.params();
}

namespace {

struct EvalSet {
  std::vector<double> scores;
  std::vector<int> labels01;
  std::vector<double> targets;
};

double eval_metric(const EvalSet& s, bool classification) {
  return classification ? auc(s.scores, s.labels01) : mae_metric(s.scores, s.targets);
}

bool better(double candidate, double best, bool classification) {
  return classification ? candidate > best : candidate < best;
}

// Deterministic per-row evaluation subgraphs, independent of epoch so the
// best-val trace is comparable across epochs.
EvalSet evaluate_rows(const Model& model, const std::vector<TrainRow>& rows, bool classification,
                      uint64_t stream) {
  EvalSet out;
  const size_t chunk = 128;
  for (size_t at = 0; at < rows.size(); at += chunk) {
    size_t end = std::min(rows.size(), at + chunk);
    Tape tape;
    Model::Bound bound = model.bind(tape, false);
    std::vector<Var> latents;
    for (size_t i = at; i < end; ++i) {
      Rng rng(Rng::mix(kEvalStream, Rng::mix(stream, i)));
      SampledSubgraph sg = model.sample_subgraph(rows[i].entity_key, rows[i].cutoff, rng);
      latents.push_back(model.encode(bound, sg, nullptr));
    }
    Var logits = model.head_forward(bound, tape.stack_rows(latents), "down");
    for (size_t i = at; i < end; ++i) {
      double z = logits.value()[i - at];
      out.scores.push_back(classification ? 1.0 / (1.0 + std::exp(-z)) : z);
      out.labels01.push_back(rows[i].label > 0.5 ? 1 : 0);
      out.targets.push_back(rows[i].label);
    }
  }
  return out;
}

}  // namespace

EvalReport finetune(const RelationalStore& store, const EncoderConfig& enc, const RunConfig& cfg,
                    const SplitRows& labels, bool classification, const ParamSet* init,
                    MetricsLog* log, ParamSet* final_params) {
  check(!labels.train.empty(), "EmptyPartition", "no training labels");
  EncoderConfig seeded = enc;
  seeded.seed = cfg.seed;
  Model model(store, seeded, init ? Model::layout_dim_of(*init) : 1);
  if (init) model.load_params(*init);

  EvalReport report;
  report.metric = classification ? "auc" : "mae";
  double best_val = classification ? -1.0 : std::numeric_limits<double>::infinity();

  auto evaluate_epoch = [&](int epoch) {
    EvalSet val = evaluate_rows(model, labels.val, classification, 1);
    EvalSet test = evaluate_rows(model, labels.test, classification, 2);
    double val_m = eval_metric(val, classification);
    double test_m = eval_metric(test, classification);
    if (log) {
      log->append(epoch, "val_" + report.metric, val_m);
      log->append(epoch, "test_" + report.metric, test_m);
    }
    if (better(val_m, best_val, classification)) {
      best_val = val_m;
      report.val = val_m;
      report.test = test_m;
      report.best_epoch = epoch;
      if (final_params) *final_params = model.params();
    }
  };

  try {
    if (cfg.epochs == 0) evaluate_epoch(0);
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const double lr = cfg.lr.rate_at(epoch, cfg.epochs);
      Rng shuffle_rng(Rng::mix(cfg.seed, Rng::mix(0x17e, epoch)));
      auto batches = make_batches(labels.train.size(), cfg.batch_size, shuffle_rng);
      for (size_t b = 0; b < batches.size(); ++b) {
        Tape tape;
        Model::Bound bound = model.bind(tape, true);
        std::vector<Var> latents;
        std::vector<double> targets;
        for (uint32_t idx : batches[b]) {
          const TrainRow& row = labels.train[idx];
          Rng rng(Rng::mix(cfg.seed, Rng::mix(Rng::mix(epoch + 1, b), idx)));
          SampledSubgraph sg = model.sample_subgraph(row.entity_key, row.cutoff, rng);
          latents.push_back(model.encode(bound, sg, nullptr));
          targets.push_back(row.label);
        }
        const int nb = static_cast<int>(latents.size());
        Var logits = model.head_forward(bound, tape.stack_rows(latents), "down");
        Var target = tape.constant({nb, 1}, std::move(targets));
        Var loss = classification
                       ? tape.bce_with_logits(logits, target)
                       : tape.scale(tape.sum_all(tape.abs(tape.sub(logits, target))), 1.0 / nb);
        if (!std::isfinite(loss.scalar())) fail("DivergedLoss", "fine-tuning loss diverged");
        tape.backward(loss);
        sgd_step(model.params(), bound, lr, cfg.momentum);
        if (log) log->append(step, "train_loss", loss.scalar());
        ++step;
      }
      evaluate_epoch(epoch);
    }
  } catch (const Error& e) {
    if (e.code() == "NonFinite") fail("DivergedLoss", e.what());
    throw;
  }
  return report;
}

EvalReport linear_probe(const RelationalStore& store, const EncoderConfig& enc,
                        const RunConfig& cfg, const SplitRows& labels, bool classification,
                        const ParamSet& checkpoint, MetricsLog* log) {
  EncoderConfig seeded = enc;
  seeded.seed = cfg.seed;
  Model model(store, seeded, Model::layout_dim_of(checkpoint));
  model.load_params(checkpoint);
  const uint64_t checksum_before = model.backbone_checksum();
  const int c = enc.channels;

  // The backbone is frozen, so latents are computed once per row.
  auto cache = [&](const std::vector<TrainRow>& rows, uint64_t stream) {
    std::vector<double> latents;
    latents.reserve(rows.size() * c);
    const size_t chunk = 128;
    for (size_t at = 0; at < rows.size(); at += chunk) {
      size_t end = std::min(rows.size(), at + chunk);
      Tape tape;
      Model::Bound bound = model.bind(tape, false);
      for (size_t i = at; i < end; ++i) {
        Rng rng(Rng::mix(kEvalStream, Rng::mix(stream, i)));
        SampledSubgraph sg = model.sample_subgraph(rows[i].entity_key, rows[i].cutoff, rng);
        Var z = model.encode(bound, sg, nullptr);
        latents.insert(latents.end(), z.value().begin(), z.value().end());
      }
    }
    return latents;
  };
  std::vector<double> train_z = cache(labels.train, 0);
  std::vector<double> val_z = cache(labels.val, 1);
  std::vector<double> test_z = cache(labels.test, 2);

  // Fresh affine head.
  ParamSet head;
  {
    Rng rng(Rng::mix(cfg.seed, 0x9ead));
    double limit = std::sqrt(6.0 / static_cast<double>(c + 1));
    std::vector<double> w(c);
    for (auto& v : w) v = rng.uniform(-limit, limit);
    head.add("probe.w", {c, 1}, std::move(w));
    head.add("probe.b", {1, 1}, {0.0});
  }

  auto head_scores = [&](const std::vector<double>& z, const std::vector<TrainRow>& rows) {
    EvalSet out;
    const auto& w = head.at("probe.w").value;
    const double b = head.at("probe.b").value[0];
    for (size_t i = 0; i < rows.size(); ++i) {
      double zd = b;
      for (int k = 0; k < c; ++k) zd += z[i * c + k] * w[k];
      out.scores.push_back(classification ? 1.0 / (1.0 + std::exp(-zd)) : zd);
      out.labels01.push_back(rows[i].label > 0.5 ? 1 : 0);
      out.targets.push_back(rows[i].label);
    }
    return out;
  };

  EvalReport report;
  report.metric = classification ? "auc" : "mae";
  double best_val = classification ? -1.0 : std::numeric_limits<double>::infinity();
  auto evaluate_epoch = [&](int epoch) {
    double val_m = eval_metric(head_scores(val_z, labels.val), classification);
    double test_m = eval_metric(head_scores(test_z, labels.test), classification);
    if (log) {
      log->append(epoch, "val_" + report.metric, val_m);
      log->append(epoch, "test_" + report.metric, test_m);
    }
    if (better(val_m, best_val, classification)) {
      best_val = val_m;
      report.val = val_m;
      report.test = test_m;
      report.best_epoch = epoch;
    }
  };

  if (cfg.epochs == 0) evaluate_epoch(0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr.rate_at(epoch, cfg.epochs);
    Rng shuffle_rng(Rng::mix(cfg.seed, Rng::mix(0x9e0b, epoch)));
    auto batches = make_batches(labels.train.size(), cfg.batch_size, shuffle_rng);
    for (const auto& batch : batches) {
      Tape tape;
      Var w = tape.input({c, 1}, head.at("probe.w").value, true);
      Var b = tape.input({1, 1}, head.at("probe.b").value, true);
      const int nb = static_cast<int>(batch.size());
      std::vector<double> x(static_cast<size_t>(nb) * c), y(nb);
      for (int i = 0; i < nb; ++i) {
        std::copy(train_z.begin() + static_cast<size_t>(batch[i]) * c,
                  train_z.begin() + static_cast<size_t>(batch[i] + 1) * c, x.begin() + i * c);
        y[i] = labels.train[batch[i]].label;
      }
      Var logits = tape.add_row_bias(tape.matmul(tape.constant({nb, c}, std::move(x)), w), b);
      Var target = tape.constant({nb, 1}, std::move(y));
      Var loss = classification
                     ? tape.bce_with_logits(logits, target)
                     : tape.scale(tape.sum_all(tape.abs(tape.sub(logits, target))), 1.0 / nb);
      tape.backward(loss);
      auto& we = head.at("probe.w");
      auto& be = head.at("probe.b");
      for (int k = 0; k < c; ++k) {
        we.momentum[k] = cfg.momentum * we.momentum[k] - lr * w.grad()[k];
        we.value[k] += we.momentum[k];
      }
      be.momentum[0] = cfg.momentum * be.momentum[0] - lr * b.grad()[0];
      be.value[0] += be.momentum[0];
    }
    evaluate_epoch(epoch);
  }

  check(model.backbone_checksum() == checksum_before, "BackboneDrift",
        "linear probe mutated backbone parameters");
  return report;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check(scores.size() == labels.size(), "ShapeMismatch", "scores/labels length mismatch");
  size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  check(n_pos > 0 && n_neg > 0, "SingleClass", "AUC needs both classes present");

  // Mann-Whitney U via average ranks; tie groups share credit 0.5.
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double mae_metric(const std::vector<double>& preds, const std::vector<double>& targets) {
  check(preds.size() == targets.size() && !preds.empty(), "ShapeMismatch",
        "preds/targets length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return s / static_cast<double>(preds.size());
}

Flakiness flakiness_report(const std::vector<EvalPoint>& points) {
  check(points.size() >= 2, "TooFewPoints", "flakiness needs at least 2 points");
  Flakiness f;
  for (const auto& p : points) {
    f.centroid_val += p.val;
    f.centroid_test += p.test;
  }
  f.centroid_val /= static_cast<double>(points.size());
  f.centroid_test /= static_cast<double>(points.size());
  for (const auto& p : points) {
    double dv = p.val - f.centroid_val;
    double dt = p.test - f.centroid_test;
    f.avg_distance += std::sqrt(dv * dv + dt * dt);
  }
  f.avg_distance /= static_cast<double>(points.size());
  return f;
}

}  // namespace relpretext
