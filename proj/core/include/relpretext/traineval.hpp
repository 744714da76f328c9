#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "relpretext/labels.hpp"
#include "relpretext/model.hpp"
#include "relpretext/objectives.hpp"
#include "relpretext/taskvec.hpp"
#include "relpretext/tensor.hpp"

namespace relpretext {

enum class Objective { Tve, Mae, Ctr, MaeTve, CtrTve, None };
Objective objective_from_name(const std::string& name);
const char* objective_name(Objective o);

struct LrSchedule {
  double base = 0.05;
  double decay_factor = 0.1;   // applied once, two-phase schedule
  double decay_at_frac = 0.6;  // fraction of total epochs before the drop
  double rate_at(int epoch, int total_epochs) const;
};

struct RunConfig {
  Objective objective = Objective::Tve;
  int epochs = 10;
  int batch_size = 64;
  LrSchedule lr;
  double momentum = 0.9;
  uint64_t seed = 1;
  int k_hop = 1;
  double mask_rate = 0.15;
  LossWeights weights;
};

// (step, loss_name, value) rows appended in execution order.
class MetricsLog {
 public:
  struct Row {
    int64_t step;
    std::string name;
    double value;
  };
  void append(int64_t step, const std::string& name, double value) {
    rows_.push_back({step, name, value});
  }
  const std::vector<Row>& rows() const { return rows_; }
  void write_csv(const std::string& path) const;

 private:
  std::vector<Row> rows_;
};

struct PretrainInputs {
  std::vector<PretrainRow> rows;
  TaskMatrix targets;  // normalized task vectors, layout width incl. indicator
};

// One mini-batch pre-training loss on an already-bound model; factored out so
// benchmarks and the relative-cost check time exactly what training runs.
Var pretrain_batch_loss(const Model& model, Model::Bound& bound, const MarginalCache& marginals,
                        const RunConfig& cfg, const PretrainInputs& data,
                        const std::vector<uint32_t>& batch, uint64_t batch_seed,
                        std::map<std::string, double>* terms);

// Momentum-SGD pre-training with the two-phase step decay. Deterministic per
// seed; the checkpoint callback fires after every epoch.
ParamSet pretrain(const RelationalStore& store, const EncoderConfig& enc, const RunConfig& cfg,
                  const PretrainInputs& data, MetricsLog* log,
                  const std::function<void(int, const ParamSet&)>& epoch_cb = nullptr);

struct EvalReport {
  std::string metric;  // "auc" or "mae"
  double val = 0.0;
  double test = 0.0;
  int best_epoch = -1;
};

// Trains backbone + downstream head; binary cross-entropy for classification,
// mean absolute error for regression. Reports val/test at the best-val epoch.
EvalReport finetune(const RelationalStore& store, const EncoderConfig& enc, const RunConfig& cfg,
                    const SplitRows& labels, bool classification, const ParamSet* init,
                    MetricsLog* log, ParamSet* final_params = nullptr);

// Freezes the backbone (latents are computed once from the checkpoint) and
// trains only the affine head. Fails with BackboneDrift if any backbone
// parameter changes.
EvalReport linear_probe(const RelationalStore& store, const EncoderConfig& enc,
                        const RunConfig& cfg, const SplitRows& labels, bool classification,
                        const ParamSet& checkpoint, MetricsLog* log);

// Mann-Whitney AUC with 0.5 credit for ties. Throws SingleClass unless both
// classes are present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);
double mae_metric(const std::vector<double>& preds, const std::vector<double>& targets);

struct EvalPoint {
  double val = 0.0;
  double test = 0.0;
};

struct Flakiness {
  double centroid_val = 0.0;
  double centroid_test = 0.0;
  double avg_distance = 0.0;
};

Flakiness flakiness_report(const std::vector<EvalPoint>& points);

}  // namespace relpretext
