#include "pedetect/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "pedetect/binary_io.hpp"
#include "pedetect/digest.hpp"
#include "pedetect/error.hpp"
#include "pedetect/features.hpp"
#include "pedetect/rng.hpp"
#include "pedetect/synth.hpp"
#include "pedetect/vote_pair.hpp"

#ifndef PEDETECT_VERSION
#define PEDETECT_VERSION "0.0.0"
#endif

namespace pedetect {

using nlohmann::json;
namespace fs = std::filesystem;

const char* tool_version() { return PEDETECT_VERSION; }

// ---------------------------------------------------------------------------
// Manifest

namespace {

json record_to_json(const ArtifactRecord& r) {
  return {{"path", r.path},       {"kind", r.kind},         {"hash", r.hash},
          {"parents", r.parents}, {"stage", r.stage},       {"stage_key", r.stage_key},
          {"params", r.params},   {"inputs", r.inputs},     {"outputs", r.outputs},
          {"tool_version", r.tool_version}};
}

ArtifactRecord record_from_json(const json& j) {
  ArtifactRecord r;
  r.path = j.at("path").get<std::string>();
  r.kind = j.at("kind").get<std::string>();
  r.hash = j.at("hash").get<std::string>();
  r.parents = j.at("parents").get<std::vector<std::string>>();
  r.stage = j.at("stage").get<std::string>();
  r.stage_key = j.at("stage_key").get<std::string>();
  r.params = j.at("params");
  r.inputs = j.at("inputs").get<std::vector<std::string>>();
  r.outputs = j.at("outputs").get<std::vector<std::string>>();
  r.tool_version = j.at("tool_version").get<std::string>();
  return r;
}

std::string read_text(const fs::path& p) {
  const auto bytes = read_file_bytes(p.string());
  return {bytes.begin(), bytes.end()};
}

}  // namespace

Manifest Manifest::load(const fs::path& file) {
  Manifest m;
  if (!fs::exists(file)) return m;
  try {
    const json j = json::parse(read_text(file));
    if (j.at("format") != "manifest") throw DataError("not a manifest");
    for (const auto& r : j.at("records")) m.records_.push_back(record_from_json(r));
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

void Manifest::save(const fs::path& file) const {
  json records = json::array();
  for (const auto& r : records_) records.push_back(record_to_json(r));
  const json j = {{"format", "manifest"}, {"version", 1}, {"records", records}};
  write_file_atomic(file.string(), j.dump(1) + "\n");
}

const ArtifactRecord* Manifest::find(const std::string& path) const {
  for (const auto& r : records_) {
    if (r.path == path) return &r;
  }
  return nullptr;
}

std::vector<const ArtifactRecord*> Manifest::by_stage_key(const std::string& key) const {
  std::vector<const ArtifactRecord*> out;
  for (const auto& r : records_) {
    if (r.stage_key == key) out.push_back(&r);
  }
  return out;
}

void Manifest::upsert(const std::vector<ArtifactRecord>& records) {
  std::set<std::string> paths;
  for (const auto& r : records) paths.insert(r.path);
  std::erase_if(records_, [&](const ArtifactRecord& r) { return paths.count(r.path) > 0; });
  records_.insert(records_.end(), records.begin(), records.end());
}

void Manifest::check_acyclic() const {
  // Edges run from a parent hash to the records consuming it. A record can
  // only be produced after its parents, so a cycle means a record lists its
  // own output (directly or transitively) as a parent.
  std::map<std::string, std::vector<std::string>> parents_of;
  for (const auto& r : records_) parents_of[r.hash] = r.parents;
  std::map<std::string, int> state;  // 1 visiting, 2 done
  std::function<void(const std::string&)> visit = [&](const std::string& h) {
    auto& s = state[h];
    if (s == 2) return;
    if (s == 1) throw ArtifactMismatch("manifest lineage contains a cycle at " + h);
    s = 1;
    const auto it = parents_of.find(h);
    if (it != parents_of.end()) {
      for (const auto& p : it->second) {
        if (p != h) visit(p);
      }
    }
    state[h] = 2;
  };
  for (const auto& r : records_) visit(r.hash);
}

// ---------------------------------------------------------------------------
// Artifact helpers

SplitPlan load_split_for(const DatasetStore& store, const std::string& path) {
  auto plan = split_plan_from_json(read_text(path));
  if (plan.assignment.size() != store.n_rows()) {
    throw ArtifactMismatch(path + ": split covers " + std::to_string(plan.assignment.size()) +
                           " rows but the dataset has " + std::to_string(store.n_rows()));
  }
  if (!plan.data_fingerprint.empty() && plan.data_fingerprint != store.fingerprint()) {
    throw ArtifactMismatch(path + ": split was made for a different dataset");
  }
  return plan;
}

ScalerParams load_scaler(const std::string& path) { return scaler_from_json(read_text(path)); }

Reducer load_reducer(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return decode_reducer(bytes);
}

DatasetStore partition_rows(const DatasetStore& store, const SplitPlan& plan, Partition p) {
  const auto rows = plan.rows_of(p);
  return store.take_rows(rows);
}

DatasetStore training_pool(const DatasetStore& store, const SplitPlan& plan) {
  auto rows = plan.rows_of(Partition::train_a);
  const auto b = plan.rows_of(Partition::train_b);
  rows.insert(rows.end(), b.begin(), b.end());
  std::sort(rows.begin(), rows.end());
  return store.take_rows(rows);
}

namespace {

std::vector<std::size_t> pool_rows(const SplitPlan& plan) {
  auto rows = plan.rows_of(Partition::train_a);
  const auto b = plan.rows_of(Partition::train_b);
  rows.insert(rows.end(), b.begin(), b.end());
  std::sort(rows.begin(), rows.end());
  return rows;
}

/// Store restricted to `rows`, with features replaced by reduced values.
DatasetStore reduced_store(const DatasetStore& store, const Matrix& scaled,
                           const std::vector<std::size_t>& rows, const Reducer& reducer) {
  DatasetStore out;
  out.features = reducer.apply(scaled.take_rows(rows));
  for (const auto r : rows) {
    out.labels.push_back(store.labels[r]);
    out.sha256.push_back(store.sha256[r]);
    out.source_tag.push_back(store.source_tag[r]);
  }
  return out;
}

void check_lineage(const ScalerParams& scaler, const Reducer& reducer, const std::string& reducer_path) {
  if (reducer.scaler_fingerprint != scaler.fingerprint()) {
    throw ArtifactMismatch(reducer_path + " was fitted on a different scaler (" +
                           reducer.scaler_fingerprint.substr(0, 12) + " vs " +
                           scaler.fingerprint().substr(0, 12) + ")");
  }
}

void write_text(const std::string& path, const std::string& text) { write_file_atomic(path, text); }

bool is_fvs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::string_view(magic, 4) == "FVS1";
}

// ---------------------------------------------------------------------------
// Stage implementations. Inputs are paths as recorded; outputs are absolute.

using StageFn = void (*)(Pipeline&, const json&, const std::vector<std::string>&,
                         const std::vector<std::string>&);

void need(const std::vector<std::string>& v, std::size_t n, const char* what) {
  if (v.size() < n) throw ConfigError(std::string("stage needs ") + what);
}

void stage_extract(Pipeline& pipe, const json& params, const std::vector<std::string>& in,
                   const std::vector<std::string>& out) {
  need(out, 1, "an output path");
  const int label = params.value("label", -1);
  if (label < -1 || label > 1) throw ConfigError("label must be -1, 0 or 1");
  const std::string source = params.value("source", std::string("unknown"));
  // With "label_csv", the first input is a "sha256,label" sidecar.
  const bool sidecar = params.value("label_csv", false);
  std::map<std::string, int> labels;
  if (sidecar) {
    need(in, 1, "a label CSV input");
    std::istringstream csv(read_text(pipe.resolve(in[0])));
    std::string line;
    std::size_t n = 0;
    while (std::getline(csv, line)) {
      ++n;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.rfind("sha256", 0) == 0) continue;
      const auto comma = line.find(',');
      if (comma != 64) throw DataError(in[0] + ":" + std::to_string(n) + ": expected sha256,label");
      const std::string value = line.substr(comma + 1);
      if (value != "-1" && value != "0" && value != "1") {
        throw DataError(in[0] + ":" + std::to_string(n) + ": label must be -1, 0 or 1");
      }
      std::string hex = line.substr(0, 64);
      std::transform(hex.begin(), hex.end(), hex.begin(), [](unsigned char c) { return std::tolower(c); });
      labels[hex] = std::stoi(value);
    }
  }
  std::string text;
  for (std::size_t i = sidecar ? 1 : 0; i < in.size(); ++i) {
    const auto bytes = read_file_bytes(pipe.resolve(in[i]).string());
    const auto id = sha256(bytes);
    int l = label;
    if (sidecar) {
      const auto it = labels.find(to_hex(id));
      if (it != labels.end()) l = it->second;
    }
    text += jsonl_record(id, l, vectorize(bytes).values(), source);
    text += '\n';
  }
  write_text(out[0], text);
}

void stage_build_dataset(Pipeline& pipe, const json& params, const std::vector<std::string>& in,
                         const std::vector<std::string>& out) {
  need(in, 1, "a JSONL input");
  need(out, 1, "an output path");
  const std::string source = params.value("source", std::string("unknown"));
  DatasetStore store;
  for (const auto& path : in) {
    auto part = read_jsonl_file(pipe.resolve(path).string(), source);
    for (std::size_t r = 0; r < part.n_rows(); ++r) {
      if (store.n_rows() > 0 && part.n_dims() != store.n_dims()) {
        throw DataError(path + ": feature length " + std::to_string(part.n_dims()) +
                        " differs from " + std::to_string(store.n_dims()));
      }
      store.append(part.features.row(r), part.labels[r], part.sha256[r], part.source_tag[r]);
    }
  }
  const auto bytes = encode_fvs(store);
  write_file_atomic(out[0], bytes);
}

void stage_unify(Pipeline& pipe, const json&, const std::vector<std::string>& in,
                 const std::vector<std::string>& out) {
  need(in, 1, "dataset inputs");
  need(out, 2, "dataset and report outputs");
  std::vector<DatasetStore> stores;
  for (const auto& path : in) stores.push_back(*pipe.load_store(path));
  const auto result = unify(stores, in);
  write_file_atomic(out[0], encode_fvs(result.store));
  const auto& r = result.report;
  const json report = {{"input_rows", r.input_rows},
                       {"output_rows", r.output_rows},
                       {"duplicates", r.duplicates},
                       {"label_conflicts", r.label_conflicts},
                       {"unlabeled_dropped", r.unlabeled_dropped},
                       {"inputs", in}};
  write_text(out[1], report.dump(2) + "\n");
}

void stage_split(Pipeline& pipe, const json& params, const std::vector<std::string>& in,
                 const std::vector<std::string>& out) {
  need(in, 1, "a dataset input");
  need(out, 1, "an output path");
  SplitParams sp;
  sp.seed = params.value("seed", std::uint64_t{0});
  sp.val_fraction = params.value("val_fraction", 0.1);
  sp.test_fraction = params.value("test_fraction", 0.1);
  sp.stratify = params.value("stratify", true);
  const auto store = pipe.load_store(in[0]);
  write_text(out[0], split_plan_to_json(split(*store, sp)));
}

void stage_fit_scalers(Pipeline& pipe, const json&, const std::vector<std::string>& in,
                       const std::vector<std::string>& out) {
  need(in, 2, "dataset and split inputs");
  need(out, 1, "an output path");
  const auto store = pipe.load_store(in[0]);
  const auto plan = load_split_for(*store, pipe.resolve(in[1]).string());
  write_text(out[0], scaler_to_json(fit_scaler(training_pool(*store, plan))));
}

XgbfsConfig xgbfs_config_from(const json& params) {
  XgbfsConfig cfg = default_xgbfs_config();
  if (params.contains("selector")) {
    cfg.hp = hyperparams_from_json(params.at("selector").at("hyperparams").dump());
    cfg.seed = params.at("selector").at("seed").get<std::uint64_t>();
  }
  return cfg;
}

void stage_fit_reduce(Pipeline& pipe, const json& params, const std::vector<std::string>& in,
                      const std::vector<std::string>& out) {
  need(in, 3, "dataset, split and scaler inputs");
  need(out, 1, "an output path");
  const auto method = reduction_from_string(params.at("method").get<std::string>());
  const auto dim = params.at("dim").get<std::size_t>();
  const auto store = pipe.load_store(in[0]);
  const auto plan = load_split_for(*store, pipe.resolve(in[1]).string());
  const auto scaler = load_scaler(pipe.resolve(in[2]).string());
  const auto rows = pool_rows(plan);
  if (scaler.fitted_on != store->take_rows(rows).fingerprint()) {
    throw ArtifactMismatch(in[2] + " was fitted on different training rows than " + in[1]);
  }
  const auto scaled = pipe.scaled(in[0], scaler);
  const Matrix x = scaled->take_rows(rows);
  std::vector<std::int8_t> y;
  for (const auto r : rows) y.push_back(store->labels[r]);

  Reducer reducer;
  reducer.method = method;
  reducer.scaler_fingerprint = scaler.fingerprint();
  reducer.fitted_on = store->take_rows(rows).fingerprint();
  const std::string key = reducer.scaler_fingerprint + "/" + reducer.fitted_on;
  if (method == ReductionMethod::pca) {
    reducer.params = pipe.pca(key, x, dim);
  } else {
    const auto cfg = xgbfs_config_from(params);
    reducer.params = mask_from_gains(pipe.xgbfs(key, x, y, cfg), dim);
  }
  write_file_atomic(out[0], encode_reducer(reducer));
}

void stage_train_pair(Pipeline& pipe, const json& params, const std::vector<std::string>& in,
                      const std::vector<std::string>& out) {
  need(in, 4, "dataset, split, scaler and reducer inputs");
  need(out, 2, "pair and tuner-log outputs");
  const auto estimator = estimator_from_string(params.at("estimator").get<std::string>());
  const auto seed = params.at("seed").get<std::uint64_t>();
  PairTrainParams tp;
  tp.budget.max_trials = params.at("max_trials").get<int>();
  tp.budget.max_seconds = params.value("max_seconds", 0.0);
  tp.seed_1 = mix_seed(seed, 1);
  tp.seed_2 = mix_seed(seed, 2);

  const auto store = pipe.load_store(in[0]);
  const auto plan = load_split_for(*store, pipe.resolve(in[1]).string());
  const auto scaler = load_scaler(pipe.resolve(in[2]).string());
  const auto reducer = load_reducer(pipe.resolve(in[3]).string());
  check_lineage(scaler, reducer, in[3]);
  if (reducer.fitted_on != store->take_rows(pool_rows(plan)).fingerprint()) {
    throw ArtifactMismatch(in[3] + " was fitted on different training rows than " + in[1]);
  }
  const auto scaled = pipe.scaled(in[0], scaler);
  const auto a = reduced_store(*store, *scaled, plan.rows_of(Partition::train_a), reducer);
  const auto b = reduced_store(*store, *scaled, plan.rows_of(Partition::train_b), reducer);
  const auto v = reduced_store(*store, *scaled, plan.rows_of(Partition::validation), reducer);

  auto result = train_pair(a, b, v, estimator, tp);
  result.model.reducer_fingerprint = reducer.fingerprint();
  result.model.scaler_fingerprint = scaler.fingerprint();
  write_file_atomic(out[0], encode_pair(result.model));

  json points = json::array();
  for (const auto& p : result.sweep.points) {
    points.push_back({{"w_tenths", p.w_tenths}, {"f1", p.f1}, {"threshold", p.threshold}});
  }
  const json log = {{"model_1", json::parse(trial_log_to_json(result.log_1))},
                    {"model_2", json::parse(trial_log_to_json(result.log_2))},
                    {"weight_sweep",
                     {{"w_tenths", result.sweep.w_tenths},
                      {"threshold", result.sweep.threshold},
                      {"f1", result.sweep.f1},
                      {"points", points}}}};
  write_text(out[1], log.dump(1) + "\n");
  // Wall-clock times are not reproducible, so they stay outside the artifacts.
  const json timing = {{"model_1", json::parse(trial_timing_to_json(result.log_1))},
                       {"model_2", json::parse(trial_timing_to_json(result.log_2))}};
  std::ofstream(out[1] + ".timing") << timing.dump(1) << "\n";
}

void stage_evaluate(Pipeline& pipe, const json& params, const std::vector<std::string>& in,
                    const std::vector<std::string>& out) {
  const std::string partition = params.value("partition", std::string("test"));
  const bool all = partition == "all";
  need(in, all ? 4 : 5, all ? "dataset, scaler, reducer and pair inputs"
                            : "dataset, split, scaler, reducer and pair inputs");
  need(out, 1, "an output path");
  const std::size_t o = all ? 0 : 1;
  const auto store = pipe.load_store(in[0]);
  const auto scaler = load_scaler(pipe.resolve(in[1 + o]).string());
  const auto reducer = load_reducer(pipe.resolve(in[2 + o]).string());
  const auto pm = decode_pair(read_file_bytes(pipe.resolve(in[3 + o]).string()));
  check_lineage(scaler, reducer, in[2 + o]);
  if (pm.scaler_fingerprint != scaler.fingerprint()) {
    throw ArtifactMismatch(in[3 + o] + " was trained under a different scaler than " + in[1 + o]);
  }
  if (pm.reducer_fingerprint != reducer.fingerprint()) {
    throw ArtifactMismatch(in[3 + o] + " was trained under a different reducer than " + in[2 + o]);
  }

  std::vector<std::size_t> rows;
  if (all) {
    rows.resize(store->n_rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  } else {
    const auto plan = load_split_for(*store, pipe.resolve(in[1]).string());
    rows = plan.rows_of(partition_from_string(partition));
  }
  const auto scaled = pipe.scaled(in[0], scaler);
  const auto data = reduced_store(*store, *scaled, rows, reducer);
  for (const auto l : data.labels) {
    if (l != 0 && l != 1) throw DataError("evaluation rows must be labeled 0 or 1");
  }
  const auto scores = predict_scores(pm, data.features);
  const std::string tag = params.value("tag", partition);
  write_text(out[0], report_to_json(make_report(scores, data.labels, pm.decision_threshold, tag)));
}

void stage_predict(Pipeline& pipe, const json&, const std::vector<std::string>& in,
                   const std::vector<std::string>& out) {
  need(in, 4, "scaler, reducer, pair and data inputs");
  need(out, 1, "an output path");
  const auto scaler = load_scaler(pipe.resolve(in[0]).string());
  const auto reducer = load_reducer(pipe.resolve(in[1]).string());
  const auto pm = decode_pair(read_file_bytes(pipe.resolve(in[2]).string()));
  check_lineage(scaler, reducer, in[1]);
  if (pm.scaler_fingerprint != scaler.fingerprint() ||
      pm.reducer_fingerprint != reducer.fingerprint()) {
    throw ArtifactMismatch(in[2] + " does not match the given scaler and reducer");
  }
  std::string csv = "sha256,score,verdict\n";
  char buf[64];
  const auto emit = [&](const Sha256& id, std::span<const float> features) {
    const auto v = predict(pm, reducer.apply_row(transform_row(features, scaler)));
    std::snprintf(buf, sizeof buf, ",%.17g,", v.score);
    csv += to_hex(id) + buf + (v.malicious ? "malicious" : "benign") + "\n";
  };
  for (std::size_t i = 3; i < in.size(); ++i) {
    const auto path = pipe.resolve(in[i]).string();
    if (is_fvs(path)) {
      const auto store = pipe.load_store(in[i]);
      for (std::size_t r = 0; r < store->n_rows(); ++r) emit(store->sha256[r], store->features.row(r));
    } else {
      const auto bytes = read_file_bytes(path);
      emit(sha256(bytes), vectorize(bytes).values());
    }
  }
  write_text(out[0], csv);
}

void stage_synth(Pipeline&, const json& params, const std::vector<std::string>&,
                 const std::vector<std::string>& out) {
  need(out, 2, "dataset and info outputs");
  SynthParams p;
  p.n_rows = params.value("n_rows", p.n_rows);
  p.n_dims = params.value("n_dims", p.n_dims);
  p.n_informative = params.value("n_informative", p.n_informative);
  p.n_dense_noise = params.value("n_dense_noise", p.n_dense_noise);
  p.n_sparse_noise = params.value("n_sparse_noise", p.n_sparse_noise);
  p.separation = params.value("separation", p.separation);
  p.outlier_rate = params.value("outlier_rate", p.outlier_rate);
  p.seed = params.value("seed", p.seed);
  const auto corpus = generate_synthetic(p);
  write_file_atomic(out[0], encode_fvs(corpus.store));
  write_text(out[1], json{{"planted", corpus.planted}, {"params", params}}.dump(1) + "\n");
}

void stage_shift(Pipeline& pipe, const json& params, const std::vector<std::string>& in,
                 const std::vector<std::string>& out) {
  need(in, 1, "a dataset input");
  need(out, 1, "an output path");
  const auto store = pipe.load_store(in[0]);
  const std::string partition = params.value("partition", std::string("all"));
  DatasetStore rows;
  if (partition == "all") {
    rows = *store;
  } else {
    need(in, 2, "dataset and split inputs");
    rows = partition_rows(*store, load_split_for(*store, pipe.resolve(in[1]).string()),
                          partition_from_string(partition));
  }
  ShiftParams sp;
  sp.seed = params.value("seed", sp.seed);
  sp.zero_fraction = params.value("zero_fraction", sp.zero_fraction);
  write_file_atomic(out[0], encode_fvs(apply_covariate_shift(rows, sp)));
}

void stage_sweep(Pipeline& pipe, const json& params, const std::vector<std::string>& in,
                 const std::vector<std::string>& out) {
  need(out, 1, "an output path");
  const auto& jobs = params.at("jobs");
  if (jobs.size() != in.size()) throw ConfigError("sweep: one report input per job expected");
  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < in.size(); ++i) {
    ReportRow row;
    row.reduction = jobs[i].at("reduction").get<std::string>();
    row.dim = jobs[i].at("dim").get<std::size_t>();
    row.estimator = jobs[i].at("estimator").get<std::string>();
    row.report = report_from_json(read_text(pipe.resolve(in[i])));
    rows.push_back(row);
  }
  write_text(out[0], report_csv(rows));
}

struct StageInfo {
  StageFn fn;
  std::vector<std::string> kinds;  // per output; the last repeats
};

const std::map<std::string, StageInfo>& registry() {
  static const std::map<std::string, StageInfo> r = {
      {"extract", {stage_extract, {"features-jsonl"}}},
      {"build-dataset", {stage_build_dataset, {"dataset"}}},
      {"unify", {stage_unify, {"dataset", "unify-report"}}},
      {"split", {stage_split, {"split"}}},
      {"fit-scalers", {stage_fit_scalers, {"scaler"}}},
      {"fit-reduce", {stage_fit_reduce, {"reducer"}}},
      {"train-pair", {stage_train_pair, {"pair", "tuner-log"}}},
      {"evaluate", {stage_evaluate, {"report"}}},
      {"predict", {stage_predict, {"scores"}}},
      {"synth", {stage_synth, {"dataset", "synth-info"}}},
      {"shift", {stage_shift, {"dataset"}}},
      {"sweep", {stage_sweep, {"report-csv"}}},
  };
  return r;
}

const StageInfo& stage_info(const std::string& name) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw ConfigError("unknown stage '" + name + "'");
  return it->second;
}

std::string kind_of(const StageInfo& info, std::size_t i) {
  return info.kinds[std::min(i, info.kinds.size() - 1)];
}

}  // namespace

std::vector<std::string> stage_names() {
  std::vector<std::string> out;
  for (const auto& [name, info] : registry()) out.push_back(name);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::Caches {
  struct HashEntry {
    std::uintmax_t size;
    fs::file_time_type mtime;
    std::string hash;
  };
  std::map<std::string, HashEntry> hashes;
  std::map<std::string, std::shared_ptr<const DatasetStore>> stores;  // by content hash
  std::string scaled_key;
  std::shared_ptr<const Matrix> scaled;
  std::map<std::string, PcaProjection> pca;
  std::map<std::string, std::vector<double>> gains;
};

Pipeline::Pipeline(fs::path workdir) : workdir_(std::move(workdir)), caches_(std::make_unique<Caches>()) {
  fs::create_directories(workdir_);
  manifest_ = Manifest::load(manifest_path());
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::resolve(const std::string& path) const {
  const fs::path p(path);
  return p.is_absolute() ? p : workdir_ / p;
}

std::string Pipeline::file_hash(const std::string& path) {
  const auto full = resolve(path);
  std::error_code ec;
  const auto size = fs::file_size(full, ec);
  if (ec) throw ConfigError("missing artifact: " + path);
  const auto mtime = fs::last_write_time(full);
  const auto key = full.string();
  const auto it = caches_->hashes.find(key);
  if (it != caches_->hashes.end() && it->second.size == size && it->second.mtime == mtime) {
    return it->second.hash;
  }
  const auto hash = sha256_hex(read_file_bytes(key));
  caches_->hashes[key] = {size, mtime, hash};
  return hash;
}

std::shared_ptr<const DatasetStore> Pipeline::load_store(const std::string& path) {
  const auto hash = file_hash(path);
  auto& slot = caches_->stores[hash];
  if (!slot) {
    if (caches_->stores.size() > 3) {
      caches_->stores.clear();
      return caches_->stores[hash] = std::make_shared<const DatasetStore>(load(resolve(path).string()));
    }
    slot = std::make_shared<const DatasetStore>(load(resolve(path).string()));
  }
  return slot;
}

std::shared_ptr<const Matrix> Pipeline::scaled(const std::string& store_path,
                                               const ScalerParams& scaler) {
  const auto key = file_hash(store_path) + "/" + scaler.fingerprint();
  if (caches_->scaled_key != key) {
    const auto store = load_store(store_path);
    caches_->scaled = std::make_shared<const Matrix>(transform(*store, scaler).values);
    caches_->scaled_key = key;
  }
  return caches_->scaled;
}

PcaProjection Pipeline::pca(const std::string& key, const Matrix& x, std::size_t k) {
  // All eigenpairs come out of one decomposition, so a narrower projection is
  // an exact prefix of a wider one.
  const auto it = caches_->pca.find(key);
  if (it != caches_->pca.end() && it->second.k() >= k) return truncate(it->second, k);
  const std::size_t wide = std::min(std::max<std::size_t>(k, 384), std::min(x.rows(), x.cols()));
  auto p = fit_pca(x, std::max(wide, k));
  caches_->pca[key] = p;
  return truncate(p, k);
}

const std::vector<double>& Pipeline::xgbfs(const std::string& key, const Matrix& x,
                                           std::span<const std::int8_t> y, const XgbfsConfig& cfg) {
  const auto full_key = key + "/" + hyperparams_to_json(cfg.hp) + "/" + std::to_string(cfg.seed);
  auto it = caches_->gains.find(full_key);
  if (it == caches_->gains.end()) it = caches_->gains.emplace(full_key, xgbfs_gains(x, y, cfg)).first;
  return it->second;
}

void Pipeline::log(const std::string& message) const {
  if (verbose_) std::cerr << "[pedetect] " << message << "\n";
}

StageOutcome Pipeline::run(const StageSpec& spec, bool force) {
  const auto& info = stage_info(spec.stage);
  (void)info;
  if (spec.outputs.empty()) throw ConfigError(spec.stage + ": no outputs given");
  std::vector<std::string> input_hashes;
  for (const auto& in : spec.inputs) {
    if (!fs::exists(resolve(in))) throw ConfigError(spec.stage + ": missing parent artifact " + in);
    input_hashes.push_back(file_hash(in));
  }
  json key_doc = {{"stage", spec.stage},
                  {"params", spec.params},
                  {"inputs", input_hashes},
                  {"outputs", spec.outputs},
                  {"tool_version", tool_version()}};
  const std::string key = sha256_hex(key_doc.dump());

  if (!force) {
    bool fresh = true;
    for (const auto& o : spec.outputs) {
      const auto* rec = manifest_.find(o);
      const auto full = resolve(o);
      if (fs::exists(full.string() + ".tmp")) {
        log(spec.stage + ": found partial write " + o + ".tmp, re-running");
        fresh = false;
        break;
      }
      if (!rec || rec->stage_key != key || !fs::exists(full) || file_hash(o) != rec->hash) {
        fresh = false;
        break;
      }
    }
    if (fresh) {
      log(spec.stage + ": up to date (" + spec.outputs.front() + ")");
      return {false, key};
    }
  }
  return execute(spec, input_hashes, key);
}

StageOutcome Pipeline::execute(const StageSpec& spec, const std::vector<std::string>& input_hashes,
                               const std::string& key) {
  const auto& info = stage_info(spec.stage);
  log(spec.stage + ": running -> " + spec.outputs.front());
  std::vector<std::string> abs_outputs;
  for (const auto& o : spec.outputs) abs_outputs.push_back(resolve(o).string());
  info.fn(*this, spec.params, spec.inputs, abs_outputs);

  std::vector<ArtifactRecord> records;
  for (std::size_t i = 0; i < spec.outputs.size(); ++i) {
    ArtifactRecord r;
    r.path = spec.outputs[i];
    r.kind = kind_of(info, i);
    r.hash = file_hash(spec.outputs[i]);
    r.parents = input_hashes;
    r.stage = spec.stage;
    r.stage_key = key;
    r.params = spec.params;
    r.inputs = spec.inputs;
    r.outputs = spec.outputs;
    r.tool_version = tool_version();
    records.push_back(std::move(r));
  }
  manifest_.upsert(records);
  manifest_.save(manifest_path());
  return {true, key};
}

ReplayResult Pipeline::replay(const std::string& output_path) {
  const auto* rec = manifest_.find(output_path);
  if (!rec) throw ConfigError("no manifest record for " + output_path);
  const ArtifactRecord record = *rec;
  for (std::size_t i = 0; i < record.inputs.size(); ++i) {
    if (file_hash(record.inputs[i]) != record.parents[i]) {
      throw ArtifactMismatch("input " + record.inputs[i] + " changed since " + output_path +
                             " was produced");
    }
  }
  const auto& info = stage_info(record.stage);
  const fs::path scratch = workdir_ / ".replay" / record.stage_key.substr(0, 16);
  fs::remove_all(scratch);
  fs::create_directories(scratch);
  std::vector<std::string> outs;
  for (std::size_t i = 0; i < record.outputs.size(); ++i) {
    outs.push_back((scratch / (std::to_string(i) + "-" + fs::path(record.outputs[i]).filename().string())).string());
  }
  log(record.stage + ": replaying " + output_path);
  info.fn(*this, record.params, record.inputs, outs);

  ReplayResult result;
  for (std::size_t i = 0; i < record.outputs.size(); ++i) {
    const auto* r = manifest_.find(record.outputs[i]);
    const auto fresh = sha256_hex(read_file_bytes(outs[i]));
    if (!r || r->hash != fresh) {
      result.identical = false;
      result.differing.push_back(record.outputs[i]);
    }
  }
  fs::remove_all(scratch);
  return result;
}

// ---------------------------------------------------------------------------
// Sweep

json sweep_params_to_json(const SweepParams& p) {
  json methods = json::array();
  for (auto m : p.methods) methods.push_back(std::string(to_string(m)));
  return {{"methods", methods},       {"dims", p.dims},
          {"estimators", p.estimators}, {"seed", p.seed},
          {"max_trials", p.max_trials}, {"max_seconds", p.max_seconds},
          {"out_dir", p.out_dir}};
}

std::string sweep_job_dir(const SweepParams& p, ReductionMethod m, std::size_t dim) {
  return (fs::path(p.out_dir) / (std::string(to_string(m)) + "-" + std::to_string(dim))).string();
}

std::vector<ReportRow> run_sweep(Pipeline& pipe, const std::string& data, const std::string& split,
                                 const std::string& scaler, const SweepParams& params, bool force) {
  for (const auto& e : params.estimators) estimator_from_string(e);
  if (params.methods.empty() || params.dims.empty() || params.estimators.empty()) {
    throw ConfigError("sweep needs at least one method, dimension and estimator");
  }
  std::vector<std::string> reports;
  json jobs = json::array();
  for (const auto method : params.methods) {
    for (const auto dim : params.dims) {
      const std::string dir = sweep_job_dir(params, method, dim);
      const std::string reducer = (fs::path(dir) / reducer_file_name(method)).string();
      json rp = {{"method", std::string(to_string(method))}, {"dim", dim}};
      if (method == ReductionMethod::xgbfs) {
        const auto cfg = default_xgbfs_config();
        rp["selector"] = {{"hyperparams", json::parse(hyperparams_to_json(cfg.hp))},
                          {"seed", cfg.seed}};
      }
      pipe.run({"fit-reduce", rp, {data, split, scaler}, {reducer}}, force);
      for (const auto& est : params.estimators) {
        const std::string job = (fs::path(dir) / est).string();
        const std::string pair = (fs::path(job) / "pair.bin").string();
        const std::string tuner = (fs::path(job) / "tuner.json").string();
        const std::string report = (fs::path(job) / "report.json").string();
        const json tp = {{"estimator", est},
                         {"seed", params.seed},
                         {"max_trials", params.max_trials},
                         {"max_seconds", params.max_seconds}};
        pipe.run({"train-pair", tp, {data, split, scaler, reducer}, {pair, tuner}}, force);
        pipe.run({"evaluate",
                  {{"partition", "test"}, {"tag", "test"}},
                  {data, split, scaler, reducer, pair},
                  {report}},
                 force);
        reports.push_back(report);
        jobs.push_back({{"reduction", method == ReductionMethod::pca ? "PCA" : "XGBFS"},
                        {"dim", dim},
                        {"estimator", est}});
      }
    }
  }
  const std::string csv = (fs::path(params.out_dir) / "report.csv").string();
  pipe.run({"sweep", {{"jobs", jobs}}, reports, {csv}}, force);

  std::vector<ReportRow> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    ReportRow row;
    row.reduction = jobs[i].at("reduction").get<std::string>();
    row.dim = jobs[i].at("dim").get<std::size_t>();
    row.estimator = jobs[i].at("estimator").get<std::string>();
    row.report = report_from_json(read_text(pipe.resolve(reports[i])));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pedetect
