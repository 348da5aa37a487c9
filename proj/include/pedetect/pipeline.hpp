#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pedetect/dataset.hpp"
#include "pedetect/dimred.hpp"
#include "pedetect/matrix.hpp"
#include "pedetect/metrics.hpp"
#include "pedetect/scaler.hpp"

namespace pedetect {

/// Version string recorded with every artifact.
const char* tool_version();

/// One produced file and how it was made.
struct ArtifactRecord {
  std::string path;  // relative to the work directory when inside it
  std::string kind;
  std::string hash;  // sha256 of the file bytes
  std::vector<std::string> parents;  // content hashes of the stage inputs
  std::string stage;
  std::string stage_key;
  nlohmann::json params;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string tool_version;
};

/// Ordered list of artifact records, persisted as manifest.json.
class Manifest {
 public:
  static Manifest load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  const std::vector<ArtifactRecord>& records() const { return records_; }
  const ArtifactRecord* find(const std::string& path) const;
  std::vector<const ArtifactRecord*> by_stage_key(const std::string& key) const;

  /// Replaces any records for the same output paths, then appends.
  void upsert(const std::vector<ArtifactRecord>& records);

  /// Throws ArtifactMismatch if parent links form a cycle.
  void check_acyclic() const;

 private:
  std::vector<ArtifactRecord> records_;
};

/// A stage invocation: name, parameters, input and output paths.
struct StageSpec {
  std::string stage;
  nlohmann::json params = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

struct StageOutcome {
  bool executed = false;
  std::string stage_key;
};

struct ReplayResult {
  bool identical = true;
  std::vector<std::string> differing;  // output paths whose bytes changed
};

/// Runs stages inside a work directory and keeps its manifest current.
///
/// Re-running a stage whose parameters, input hashes and outputs match the
/// manifest is a no-op unless forced. Outputs are written atomically; a
/// leftover "<output>.tmp" marks an interrupted run and forces re-execution.
class Pipeline {
 public:
  explicit Pipeline(std::filesystem::path workdir);
  ~Pipeline();

  const std::filesystem::path& workdir() const { return workdir_; }
  std::filesystem::path manifest_path() const { return workdir_ / "manifest.json"; }
  const Manifest& manifest() const { return manifest_; }

  StageOutcome run(const StageSpec& spec, bool force = false);

  /// Re-executes the stage that produced `output_path` from its manifest
  /// record into a scratch directory and compares the bytes.
  ReplayResult replay(const std::string& output_path);

  void set_verbose(bool v) { verbose_ = v; }

  // Shared, cached loaders (also used by stage implementations).
  std::filesystem::path resolve(const std::string& path) const;
  std::string file_hash(const std::string& path);
  std::shared_ptr<const DatasetStore> load_store(const std::string& path);
  /// The whole store scaled with `scaler` (cached per store and scaler).
  std::shared_ptr<const Matrix> scaled(const std::string& store_path, const ScalerParams& scaler);
  /// Widest PCA fitted so far for this key, or a fresh fit.
  PcaProjection pca(const std::string& key, const Matrix& x, std::size_t k);
  const std::vector<double>& xgbfs(const std::string& key, const Matrix& x,
                                   std::span<const std::int8_t> y, const XgbfsConfig& cfg);
  void log(const std::string& message) const;

 private:
  StageOutcome execute(const StageSpec& spec, const std::vector<std::string>& input_hashes,
                       const std::string& key);

  struct Caches;
  std::filesystem::path workdir_;
  Manifest manifest_;
  std::unique_ptr<Caches> caches_;
  bool verbose_ = true;
};

/// Stage names accepted by Pipeline::run.
std::vector<std::string> stage_names();

/// Convenience: reads a FVS1 store, split plan, scaler, reducer or pair,
/// checking that the split belongs to the store.
SplitPlan load_split_for(const DatasetStore& store, const std::string& path);
ScalerParams load_scaler(const std::string& path);
Reducer load_reducer(const std::string& path);

/// Rows of `store` in partition `p` (ascending).
DatasetStore partition_rows(const DatasetStore& store, const SplitPlan& plan, Partition p);

/// Training pool: both training partitions.
DatasetStore training_pool(const DatasetStore& store, const SplitPlan& plan);

struct SweepParams {
  std::vector<ReductionMethod> methods = {ReductionMethod::pca, ReductionMethod::xgbfs};
  std::vector<std::size_t> dims = {128, 256, 384};
  std::vector<std::string> estimators = {"lgbm", "xgb", "rf", "et"};
  std::uint64_t seed = 0;
  int max_trials = 30;
  double max_seconds = 0.0;
  std::string out_dir = "sweep";
};

nlohmann::json sweep_params_to_json(const SweepParams& p);

/// Paths the sweep writes for one job.
std::string sweep_job_dir(const SweepParams& p, ReductionMethod m, std::size_t dim);

/// Runs (or reuses) fit-reduce, train-pair and evaluate for every
/// method x dim x estimator job, then writes report.csv. Returns the rows in
/// job order.
std::vector<ReportRow> run_sweep(Pipeline& pipe, const std::string& data, const std::string& split,
                                 const std::string& scaler, const SweepParams& params,
                                 bool force = false);

}  // namespace pedetect
