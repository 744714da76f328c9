// relpretext: compile relational pretext tables, pre-train and evaluate the
// encoder, and numerically verify the information-theoretic checks.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <nlohmann/json.hpp>

#include "relpretext/config.hpp"
#include "relpretext/csv.hpp"
#include "relpretext/error.hpp"
#include "relpretext/infotheory.hpp"
#include "relpretext/labels.hpp"
#include "relpretext/model.hpp"
#include "relpretext/objectives.hpp"
#include "relpretext/relstore.hpp"
#include "relpretext/runs.hpp"
#include "relpretext/schemagraph.hpp"
#include "relpretext/synthetic.hpp"
#include "relpretext/taskvec.hpp"
#include "relpretext/traineval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relpretext;

namespace {

struct Context {
  Config cfg;
  RunDir run;
  int threads = 1;
};

RelationalStore load_store(const Config& cfg) {
  std::string schema = cfg.get_string("data.schema");
  std::string dir = cfg.get_string("data.dir");
  check(!schema.empty() && !dir.empty(), "ConfigParse",
        "[data] schema and dir must be set in the config");
  return RelationalStore::load(schema, dir);
}

EncoderConfig encoder_from_config(const Config& cfg) {
  EncoderConfig enc;
  enc.channels = static_cast<int>(cfg.get_int("model.channels", 32));
  enc.gnn_layers = static_cast<int>(cfg.get_int("model.gnn_layers", 2));
  auto fanouts = cfg.get_int_list("model.fanouts");
  if (!fanouts.empty()) {
    enc.fanouts.clear();
    for (int64_t f : fanouts) enc.fanouts.push_back(static_cast<int>(f));
    enc.gnn_layers = static_cast<int>(enc.fanouts.size());
  }
  enc.dt = cfg.get_int("compile.dt", 7);
  return enc;
}

RunConfig run_config_from(const Config& cfg, const std::string& section, uint64_t seed) {
  RunConfig rc;
  rc.objective = objective_from_name(cfg.get_string(section + ".objective", "tve"));
  rc.epochs = static_cast<int>(cfg.get_int(section + ".epochs", 10));
  rc.batch_size = static_cast<int>(cfg.get_int(section + ".batch_size", 64));
  rc.lr.base = cfg.get_double(section + ".lr", 0.05);
  rc.lr.decay_factor = cfg.get_double(section + ".lr_decay", 0.1);
  rc.lr.decay_at_frac = cfg.get_double(section + ".lr_decay_at", 0.6);
  rc.momentum = cfg.get_double(section + ".momentum", 0.9);
  rc.seed = seed;
  rc.k_hop = static_cast<int>(cfg.get_int("compile.k", 1));
  rc.mask_rate = cfg.get_double(section + ".mask_rate", 0.15);
  rc.weights.alpha = cfg.get_double(section + ".alpha", 2.0);
  rc.weights.beta = cfg.get_double(section + ".beta", 0.1);
  rc.weights.tau = cfg.get_double(section + ".tau", 0.2);
  return rc;
}

std::vector<int64_t> grid_from_config(const Config& cfg, const std::string& prefix,
                                      const RelationalStore& store, int64_t dt) {
  auto explicit_grid = cfg.get_int_list(prefix);
  if (!explicit_grid.empty()) return explicit_grid;
  int64_t start = cfg.get_int(prefix + "_start", -1);
  int64_t end = cfg.get_int(prefix + "_end", -1);
  int64_t step = cfg.get_int(prefix + "_step", dt);
  if (start < 0 || end < 0) {
    // Default: train-period cutoffs spaced by dt across the fact range.
    int64_t lo = 0, hi = 0;
    bool any = false;
    for (const auto& t : store.tables()) {
      if (!t.is_fact()) continue;
      for (size_t r = 0; r < t.row_count; ++r) {
        int64_t ts = t.timestamp_of(r);
        if (!any || ts < lo) lo = ts;
        if (!any || ts > hi) hi = ts;
        any = true;
      }
    }
    check(any, "NoFactLink", "store has no fact rows to derive a timestamp grid from");
    start = lo + dt;
    end = hi - dt;
  }
  std::vector<int64_t> grid;
  for (int64_t t = start; t <= end; t += step) grid.push_back(t);
  check(!grid.empty(), "ConfigParse", "derived timestamp grid is empty");
  return grid;
}

std::vector<uint64_t> seeds_from(const Config& cfg, const std::string& section,
                                 uint64_t fallback) {
  auto list = cfg.get_int_list(section + ".seeds");
  if (list.empty()) {
    int64_t one = cfg.get_int(section + ".seed", static_cast<int64_t>(fallback));
    return {static_cast<uint64_t>(one)};
  }
  std::vector<uint64_t> out;
  for (int64_t s : list) out.push_back(static_cast<uint64_t>(s));
  return out;
}

std::vector<JoinPath> enumerate_from_config(const Config& cfg, const RelationalStore& store) {
  TraversalGraph graph = build_traversal_graph(store);
  std::string root = cfg.get_string("data.root");
  check(!root.empty(), "ConfigParse", "[data] root must be set");
  int k = static_cast<int>(cfg.get_int("compile.k", 1));
  auto paths = enumerate_paths(graph, root, k);
  return filter_paths(std::move(paths), cfg.get_string_list("compile.paths_allow"));
}

std::vector<Aggregator> aggregators_from_config(const Config& cfg) {
  auto names = cfg.get_string_list("compile.aggregators");
  if (names.empty()) names = {"count", "mean", "sum"};
  std::vector<Aggregator> out;
  for (const auto& n : names) out.push_back(aggregator_from_name(n));
  return out;
}

// ---------------------------------------------------------------- stages ---

int cmd_ingest(Context& ctx) {
  RelationalStore store = load_store(ctx.cfg);
  std::string dir = ctx.run.create_stage("ingest");
  json summary;
  summary["digest"] = store.digest();
  summary["schema"] = ctx.cfg.get_string("data.schema");
  summary["data_dir"] = ctx.cfg.get_string("data.dir");
  summary["tables"] = json::array();
  for (const auto& t : store.tables())
    summary["tables"].push_back({{"name", t.def.name},
                                 {"class", t.is_fact() ? "fact" : "dimension"},
                                 {"rows", t.row_count}});
  std::ofstream(dir + "/store_summary.json") << summary.dump(2) << "\n";

  ManifestInfo info;
  info.config = ctx.cfg;
  info.inputs["schema"] = ctx.cfg.get_string("data.schema");
  info.artifacts = {"store_summary.json"};
  write_manifest(dir, info);
  std::cout << "ingested " << store.tables().size() << " tables, digest " << store.digest()
            << "\n";
  return 0;
}

int cmd_paths(Context& ctx, const std::string& root_flag, int k_flag) {
  if (!root_flag.empty()) ctx.cfg.set("data.root", root_flag);
  if (k_flag > 0) ctx.cfg.set("compile.k", std::to_string(k_flag));
  RelationalStore store = load_store(ctx.cfg);
  auto paths = enumerate_from_config(ctx.cfg, store);
  validate_paths(store, paths);
  std::cout << "name\thops\tjoin chain\n";
  for (const auto& p : paths)
    std::cout << p.name << "\t" << p.hop_count() << "\t" << p.describe() << "\n";
  return 0;
}

// Reads the store recorded by ingest, verifying the digest still matches.
RelationalStore store_from_ingest(Context& ctx) {
  std::string dir = ctx.run.require_stage("ingest");
  std::ifstream in(dir + "/store_summary.json");
  json summary = json::parse(in);
  RelationalStore store =
      RelationalStore::load(summary["schema"], summary["data_dir"]);
  check(store.digest() == summary["digest"].get<uint64_t>(), "MissingArtifact",
        "input data changed since ingest; re-run ingest in a fresh run");
  return store;
}

int cmd_compile(Context& ctx) {
  RelationalStore store = store_from_ingest(ctx);
  auto paths = enumerate_from_config(ctx.cfg, store);
  validate_paths(store, paths);
  check(!paths.empty(), "ConfigParse", "path enumeration is empty; check compile.k / allowlist");
  const int64_t dt = ctx.cfg.get_int("compile.dt", 7);
  auto grid = grid_from_config(ctx.cfg, "compile.grid", store, dt);
  auto rows = build_pretrain_table(store, ctx.cfg.get_string("data.root"), grid);
  auto aggs = aggregators_from_config(ctx.cfg);
  auto [raw, layout] = compile_task_vectors(store, paths, aggs, rows, dt, ctx.threads);
  NormalizationPlan plan = fit_normalization(raw, layout);
  TaskMatrix matrix = apply_normalization(plan, raw);

  std::string dir = ctx.run.create_stage("compile");
  int64_t pca_dim = ctx.cfg.get_int("compile.pca_dim", 0);
  if (pca_dim > 0) {
    PcaResult pca = pca_compress(matrix, static_cast<size_t>(pca_dim));
    write_pretrain_table_csv(dir + "/pretrain_table.csv", rows, pca.compressed);
    write_layout_json(dir + "/layout.json", layout, plan, &pca);
  } else {
    write_pretrain_table_csv(dir + "/pretrain_table.csv", rows, matrix);
    write_layout_json(dir + "/layout.json", layout, plan, nullptr);
  }

  ManifestInfo info;
  info.config = ctx.cfg;
  info.inputs["store_summary"] = ctx.run.stage_dir("ingest") + "/store_summary.json";
  info.artifacts = {"pretrain_table.csv", "layout.json"};
  write_manifest(dir, info);
  std::cout << "compiled " << rows.size() << " pretrain rows x " << matrix.cols
            << " slots over " << paths.size() << " paths\n";
  return 0;
}

int cmd_make_labels(Context& ctx) {
  RelationalStore store = store_from_ingest(ctx);
  LabelSpec spec;
  spec.kind = label_kind_from_name(ctx.cfg.get_string("labels.kind", "churn"));
  spec.value_column = ctx.cfg.get_string("labels.value_column");
  spec.dt = ctx.cfg.get_int("labels.dt", ctx.cfg.get_int("compile.dt", 7));
  spec.cohort_column = ctx.cfg.get_string("labels.cohort_column");
  spec.fact_table = ctx.cfg.get_string("labels.fact_table");
  spec.fk_column = ctx.cfg.get_string("labels.fk_column");
  std::string cohort = ctx.cfg.get_string("labels.cohort", "none");
  if (cohort == "top_k_spending") spec.cohort.type = CohortFilter::Type::TopKSpending;
  else if (cohort == "least_k_spending") spec.cohort.type = CohortFilter::Type::LeastKSpending;
  else if (cohort == "bad_reviews") spec.cohort.type = CohortFilter::Type::BadReviews;
  else check(cohort == "none", "ConfigParse", "unknown cohort filter '" + cohort + "'");
  spec.cohort.k = static_cast<int>(ctx.cfg.get_int("labels.cohort_k", 50));
  spec.cohort.threshold = ctx.cfg.get_double("labels.cohort_threshold", 3.0);

  auto cutoffs = grid_from_config(ctx.cfg, "labels.cutoffs", store, spec.dt);
  auto rows = make_labels(store, ctx.cfg.get_string("data.root"), spec, cutoffs);
  int64_t val_cutoff = ctx.cfg.get_int("labels.val_cutoff", cutoffs[cutoffs.size() * 3 / 5]);
  int64_t test_cutoff = ctx.cfg.get_int("labels.test_cutoff", cutoffs[cutoffs.size() * 4 / 5]);
  SplitRows split = temporal_split(rows, val_cutoff, test_cutoff);
  if (split.empty_partition_warning)
    std::cerr << "warning: EmptyPartition: a temporal split partition is empty\n";

  std::string task = ctx.cfg.get_string("labels.task", label_kind_name(spec.kind));
  std::string dir = ctx.run.create_stage("labels");
  write_labels_csv(dir + "/labels_" + task + ".csv", split);
  ManifestInfo info;
  info.config = ctx.cfg;
  info.inputs["store_summary"] = ctx.run.stage_dir("ingest") + "/store_summary.json";
  info.artifacts = {"labels_" + task + ".csv"};
  write_manifest(dir, info);
  std::cout << "labels_" << task << ".csv: train " << split.train.size() << ", val "
            << split.val.size() << ", test " << split.test.size() << "\n";
  return 0;
}

int cmd_pretrain(Context& ctx) {
  RelationalStore store = store_from_ingest(ctx);
  std::string compile_dir = ctx.run.require_stage("compile");
  auto [rows, matrix] = read_pretrain_table_csv(compile_dir + "/pretrain_table.csv");
  PretrainInputs data{std::move(rows), std::move(matrix)};

  uint64_t seed = seeds_from(ctx.cfg, "pretrain", 1)[0];
  RunConfig rc = run_config_from(ctx.cfg, "pretrain", seed);
  EncoderConfig enc = encoder_from_config(ctx.cfg);

  std::string dir = ctx.run.create_stage("pretrain");
  MetricsLog log;
  bool save_epochs = ctx.cfg.get_bool("pretrain.save_epoch_checkpoints", false);
  ParamSet final = pretrain(store, enc, rc, data, &log,
                            [&](int epoch, const ParamSet& params) {
                              if (save_epochs)
                                params.save(dir + "/checkpoint_epoch" + std::to_string(epoch) +
                                            ".bin");
                            });
  final.save(dir + "/checkpoint.bin");
  log.write_csv(dir + "/metrics.csv");

  ManifestInfo info;
  info.config = ctx.cfg;
  info.seeds = {seed};
  info.inputs["pretrain_table"] = compile_dir + "/pretrain_table.csv";
  info.artifacts = {"checkpoint.bin", "metrics.csv"};
  write_manifest(dir, info);
  std::cout << "pretrained objective=" << objective_name(rc.objective) << " epochs=" << rc.epochs
            << " seed=" << seed << "\n";
  return 0;
}

SplitRows labels_from_stage(Context& ctx, std::string* task_out) {
  std::string dir = ctx.run.require_stage("labels");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string name = entry.path().filename().string();
    if (name.rfind("labels_", 0) == 0 && name.ends_with(".csv")) {
      if (task_out) *task_out = name.substr(7, name.size() - 11);
      return read_labels_csv(entry.path().string());
    }
  }
  fail("MissingArtifact", "no labels_<task>.csv in " + dir + "; run `relpretext make-labels`");
}

int cmd_eval_stage(Context& ctx, const std::string& stage) {
  RelationalStore store = store_from_ingest(ctx);
  std::string task;
  SplitRows labels = labels_from_stage(ctx, &task);
  bool classification = ctx.cfg.get_string("labels.kind", "churn") == "churn";
  EncoderConfig enc = encoder_from_config(ctx.cfg);

  std::string init = ctx.cfg.get_string(stage + ".init", stage == "probe" ? "pretrain" : "fresh");
  ParamSet checkpoint;
  bool have_checkpoint = false;
  if (init == "pretrain") {
    std::string pdir = ctx.run.require_stage("pretrain");
    checkpoint = ParamSet::load(pdir + "/checkpoint.bin");
    have_checkpoint = true;
  } else {
    check(init == "fresh", "ConfigParse", stage + ".init must be 'pretrain' or 'fresh'");
  }

  std::string dir = ctx.run.create_stage(stage);
  MetricsLog log;
  std::vector<uint64_t> seeds = seeds_from(ctx.cfg, stage, 1);
  CsvWriter points(dir + "/eval_points.csv");
  points.write_row({"seed", "val", "test", "best_epoch"});
  std::vector<EvalPoint> eval_points;
  std::string metric_name;
  double sum_val = 0, sum_test = 0, sumsq_val = 0, sumsq_test = 0;

  for (uint64_t seed : seeds) {
    RunConfig rc = run_config_from(ctx.cfg, stage, seed);
    MetricsLog seed_log;
    EvalReport report;
    if (stage == "probe") {
      ParamSet backbone = checkpoint;
      if (!have_checkpoint) {
        // Random-init baseline arm: fresh backbone per seed.
        EncoderConfig fresh_enc = enc;
        fresh_enc.seed = seed;
        Model fresh(store, fresh_enc, 1);
        backbone = fresh.params();
      }
      report = linear_probe(store, enc, rc, labels, classification, backbone, &seed_log);
    } else {
      report = finetune(store, enc, rc, labels, classification,
                        have_checkpoint ? &checkpoint : nullptr, &seed_log);
    }
    metric_name = report.metric;
    for (const auto& row : seed_log.rows())
      log.append(row.step, "s" + std::to_string(seed) + "." + row.name, row.value);
    points.write_row({std::to_string(seed), format_double(report.val),
                      format_double(report.test), std::to_string(report.best_epoch)});
    eval_points.push_back({report.val, report.test});
    sum_val += report.val;
    sum_test += report.test;
    sumsq_val += report.val * report.val;
    sumsq_test += report.test * report.test;
  }
  points.close();
  log.write_csv(dir + "/metrics.csv");

  const double n = static_cast<double>(seeds.size());
  json eval;
  eval["metric"] = metric_name;
  eval["task"] = task;
  eval["n_seeds"] = seeds.size();
  eval["mean_val"] = sum_val / n;
  eval["mean_test"] = sum_test / n;
  eval["std_val"] = std::sqrt(std::max(0.0, sumsq_val / n - (sum_val / n) * (sum_val / n)));
  eval["std_test"] = std::sqrt(std::max(0.0, sumsq_test / n - (sum_test / n) * (sum_test / n)));
  if (eval_points.size() >= 2) {
    Flakiness f = flakiness_report(eval_points);
    eval["centroid"] = {f.centroid_val, f.centroid_test};
    eval["avg_centroid_distance"] = f.avg_distance;
  }
  std::ofstream(dir + "/eval.json") << eval.dump(2) << "\n";

  ManifestInfo info;
  info.config = ctx.cfg;
  info.seeds = seeds;
  info.inputs["labels"] = ctx.run.stage_dir("labels");
  info.artifacts = {"eval_points.csv", "metrics.csv", "eval.json"};
  write_manifest(dir, info);
  std::cout << stage << " " << metric_name << ": mean val " << eval["mean_val"]
            << ", mean test " << eval["mean_test"] << " over " << seeds.size() << " seed(s)\n";
  return 0;
}

int cmd_verify_info(Context& ctx, int trials, uint64_t seed) {
  std::string dir = ctx.run.create_stage("verify-info");
  auto results = verify_identities(trials, seed);
  results.push_back(verify_dpi(trials, seed));
  TheoremReport theorem = verify_theorem1(trials, seed);
  results.push_back(theorem.theorem);
  results.push_back(theorem.corollary);
  results.push_back(theorem.indep_equality);
  write_infotheory_report_csv(dir + "/infotheory_report.csv", results);

  ManifestInfo info;
  info.config = ctx.cfg;
  info.seeds = {seed};
  info.artifacts = {"infotheory_report.csv"};
  write_manifest(dir, info);

  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "pass" : "FAIL") << "  " << r.name << "  max violation "
              << format_double(r.max_violation) << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_report(Context& ctx) {
  std::string dir = ctx.run.create_stage("report");
  std::ofstream out(dir + "/report.md");
  out << "# relpretext run report\n\nrun: " << ctx.run.root << "\n\n";
  bool ok = true;

  auto stage_exists = [&](const std::string& s) {
    return fs::exists(ctx.run.stage_dir(s) + "/manifest.json");
  };

  if (stage_exists("ingest")) {
    json summary = json::parse(std::ifstream(ctx.run.stage_dir("ingest") + "/store_summary.json"));
    out << "## ingest\n\n| table | class | rows |\n|---|---|---|\n";
    for (const auto& t : summary["tables"])
      out << "| " << t["name"].get<std::string>() << " | " << t["class"].get<std::string>()
          << " | " << t["rows"] << " |\n";
    out << "\nstore digest: `" << summary["digest"] << "`\n\n";
  }
  if (stage_exists("compile")) {
    json layout = json::parse(std::ifstream(ctx.run.stage_dir("compile") + "/layout.json"));
    out << "## compile\n\n" << layout["slots"].size() << " task-vector slots";
    if (!layout["pca"].is_null()) out << ", PCA to " << layout["pca"]["out_dim"];
    out << "\n\n";
  }
  for (const std::string stage : {"finetune", "probe"}) {
    if (!stage_exists(stage)) continue;
    json eval = json::parse(std::ifstream(ctx.run.stage_dir(stage) + "/eval.json"));
    out << "## " << stage << "\n\n"
        << "metric: " << eval["metric"].get<std::string>() << ", task: "
        << eval["task"].get<std::string>() << "\n\n"
        << "mean val " << eval["mean_val"] << " (std " << eval["std_val"] << "), mean test "
        << eval["mean_test"] << " (std " << eval["std_test"] << ") over " << eval["n_seeds"]
        << " seed(s)\n\n";
    if (eval.contains("avg_centroid_distance"))
      out << "avg distance to centroid: " << eval["avg_centroid_distance"] << "\n\n";
  }
  if (stage_exists("verify-info")) {
    out << "## verify-info\n\n| check | trials | max violation | result |\n|---|---|---|---|\n";
    CsvTable t = read_csv(ctx.run.stage_dir("verify-info") + "/infotheory_report.csv");
    for (const auto& row : t.rows) {
      bool pass = row[3] == "1";
      ok = ok && pass;
      out << "| " << row[0] << " | " << row[1] << " | " << row[2] << " | "
          << (pass ? "pass" : "FAIL") << " |\n";
    }
    out << "\n";
  }
  out << (ok ? "**result: pass**\n" : "**result: FAIL**\n");

  ManifestInfo info;
  info.config = ctx.cfg;
  info.artifacts = {"report.md"};
  write_manifest(dir, info);
  std::cout << "wrote " << dir << "/report.md\n";
  return ok ? 0 : 1;
}

// End-to-end pipeline on the planted-signal synthetic RDB.
int cmd_demo(Context& ctx, bool quick) {
  const std::string data_dir = ctx.run.root + "/data";
  SyntheticSpec spec;
  if (quick) {
    spec.customers = 80;
    spec.products = 15;
    spec.weeks = 24;
  }
  spec.seed = static_cast<uint64_t>(ctx.cfg.get_int("demo.seed", 7));
  SyntheticSummary gen = generate_planted_rdb(spec, data_dir);
  std::cout << "generated synthetic rdb: " << gen.customers << " customers, " << gen.reviews
            << " reviews over " << spec.weeks << " weeks\n";

  const int w = spec.weeks;
  auto wk = [](int week) { return std::to_string(7 * week); };
  Config cfg = ctx.cfg;
  cfg.set("data.schema", data_dir + "/schema.json");
  cfg.set("data.dir", data_dir);
  cfg.set("data.root", "customer");
  cfg.set("compile.k", "1");
  cfg.set("compile.dt", "7");
  cfg.set("compile.grid_start", wk(2));
  cfg.set("compile.grid_end", wk(w - 7));
  cfg.set("compile.aggregators", "[\"count\", \"mean\", \"sum\"]");
  cfg.set("labels.task", "churn");
  cfg.set("labels.kind", "churn");
  cfg.set("labels.value_column", "amount");
  cfg.set("labels.dt", "7");
  cfg.set("labels.cutoffs_start", wk(w - 14));
  cfg.set("labels.cutoffs_end", wk(w - 2));
  cfg.set("labels.cutoffs_step", "7");
  cfg.set("labels.val_cutoff", wk(w - 6));
  cfg.set("labels.test_cutoff", wk(w - 4));
  cfg.set("model.channels", quick ? "16" : "32");
  cfg.set("model.fanouts", quick ? "[8, 4]" : "[16, 8]");
  cfg.set("pretrain.objective", "tve");
  cfg.set("pretrain.epochs", quick ? "2" : "6");
  cfg.set("pretrain.batch_size", quick ? "32" : "64");
  cfg.set("pretrain.lr", "0.05");
  cfg.set("pretrain.seed", "1");
  cfg.set("finetune.init", "pretrain");
  cfg.set("finetune.epochs", quick ? "2" : "4");
  cfg.set("finetune.batch_size", "64");
  cfg.set("finetune.lr", "0.02");
  cfg.set("finetune.seeds", "[1, 2]");
  cfg.set("probe.init", "pretrain");
  cfg.set("probe.epochs", quick ? "10" : "40");
  cfg.set("probe.batch_size", "64");
  cfg.set("probe.lr", "0.5");
  cfg.set("probe.seeds", "[1, 2]");

  Context demo{cfg, ctx.run, ctx.threads};
  cmd_ingest(demo);
  {
    RelationalStore store = load_store(cfg);
    auto paths = enumerate_from_config(cfg, store);
    std::cout << "enumerated " << paths.size() << " pretext path(s)\n";
  }
  cmd_compile(demo);
  cmd_make_labels(demo);
  cmd_pretrain(demo);
  cmd_eval_stage(demo, "finetune");
  cmd_eval_stage(demo, "probe");
  int vrc = cmd_verify_info(demo, quick ? 50 : 200,
                            static_cast<uint64_t>(cfg.get_int("demo.seed", 7)));

  // Demo health checks on top of the standard report.
  bool descent_ok = false;
  {
    CsvTable metrics = read_csv(ctx.run.stage_dir("pretrain") + "/metrics.csv");
    double first = -1, last = -1;
    for (const auto& row : metrics.rows) {
      if (row[1] != "sce") continue;
      if (first < 0) first = std::stod(row[2]);
      last = std::stod(row[2]);
    }
    descent_ok = first >= 0 && last < first;
  }
  int rrc = cmd_report(demo);
  {
    std::ofstream out(ctx.run.stage_dir("report") + "/report.md", std::ios::app);
    out << "\n## demo checks\n\n";
    out << "- pretraining SCE descent: " << (descent_ok ? "pass" : "FAIL") << "\n";
    out << "- info-theory checks: " << (vrc == 0 ? "pass" : "FAIL") << "\n";
  }
  std::cout << "demo " << ((descent_ok && vrc == 0 && rrc == 0) ? "passed" : "FAILED") << "\n";
  return (descent_ok && vrc == 0 && rrc == 0) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relational pretext pre-training toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags remain valid after the subcommand name

  std::string config_path = "relpretext.toml";
  std::string runs_dir = "runs";
  std::string run_name = "default";
  int threads = 1;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "config file (TOML-style)");
  app.add_option("--runs-dir", runs_dir, "root directory for run outputs");
  app.add_option("--run", run_name, "run name (outputs under <runs-dir>/<run>)");
  app.add_option("--threads", threads, "worker threads for compilation (default 1)");
  app.add_option("--set", overrides, "override config values, key=value")->take_all();

  auto* ingest = app.add_subcommand("ingest", "load and validate the relational store");
  auto* paths_cmd = app.add_subcommand("paths", "print the causal join-path enumeration");
  std::string root_flag;
  int k_flag = 0;
  paths_cmd->add_option("--root", root_flag, "root table");
  paths_cmd->add_option("--k", k_flag, "max hops");
  auto* compile = app.add_subcommand("compile", "compile the pre-training table");
  auto* make_labels = app.add_subcommand("make-labels", "build downstream label tables");
  auto* pretrain_cmd = app.add_subcommand("pretrain", "pre-train the encoder");
  auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune on downstream labels");
  auto* probe_cmd = app.add_subcommand("probe", "linear-probe a frozen checkpoint");
  auto* verify = app.add_subcommand("verify-info", "verify the information-theoretic checks");
  int trials = 1000;
  uint64_t vseed = 1;
  verify->add_option("--trials", trials, "trials per check");
  verify->add_option("--seed", vseed, "seed for the random joints");
  auto* report_cmd = app.add_subcommand("report", "aggregate run outputs into report.md");
  auto* demo = app.add_subcommand("demo", "run the full planted-signal pipeline end-to-end");
  bool quick = false;
  demo->add_flag("--quick", quick, "small fast demo");

  CLI11_PARSE(app, argc, argv);

  try {
    Context ctx;
    if (fs::exists(config_path)) ctx.cfg = Config::parse_file(config_path);
    else if (app.count("--config") > 0) fail("ConfigParse", "config file not found: " + config_path);
    for (const auto& kv : overrides) {
      size_t eq = kv.find('=');
      check(eq != std::string::npos, "ConfigParse", "--set expects key=value, got " + kv);
      ctx.cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    ctx.run.root = runs_dir + "/" + run_name;
    ctx.threads = threads;

    if (*ingest) return cmd_ingest(ctx);
    if (*paths_cmd) return cmd_paths(ctx, root_flag, k_flag);
    if (*compile) return cmd_compile(ctx);
    if (*make_labels) return cmd_make_labels(ctx);
    if (*pretrain_cmd) return cmd_pretrain(ctx);
    if (*finetune_cmd) return cmd_eval_stage(ctx, "finetune");
    if (*probe_cmd) return cmd_eval_stage(ctx, "probe");
    if (*verify) return cmd_verify_info(ctx, trials, vseed);
    if (*report_cmd) return cmd_report(ctx);
    if (*demo) return cmd_demo(ctx, quick);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
