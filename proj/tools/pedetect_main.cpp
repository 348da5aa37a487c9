#include <algorithm>
#include <filesystem>
#include <set>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pedetect/error.hpp"
#include "pedetect/forest.hpp"
#include "pedetect/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pedetect;

namespace {

struct Common {
  std::string workdir = ".";
  bool force = false;
  bool quiet = false;
};

/// Expands directories into their regular files, sorted by path.
std::vector<std::string> expand_inputs(const std::vector<std::string>& items, const fs::path& workdir) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    const fs::path p = fs::path(item).is_absolute() ? fs::path(item) : workdir / item;
    if (fs::is_directory(p)) {
      std::vector<std::string> files;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back((fs::path(item) / fs::relative(e.path(), p)).string());
      }
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else {
      out.push_back(item);
    }
  }
  return out;
}

void print_outcome(const StageSpec& spec, const StageOutcome& o) {
  std::cout << spec.stage << ": " << (o.executed ? "wrote" : "up to date");
  for (const auto& out : spec.outputs) std::cout << " " << out;
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Static PE malware detection pipeline"};
  app.set_config("--config", "", "Read options from a TOML/INI file (flags override it)");
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-C,--workdir", common.workdir, "Work directory holding artifacts and manifest.json");
  app.add_flag("--force", common.force, "Re-run stages even when the manifest says they are current");
  app.add_flag("-q,--quiet", common.quiet, "Only print results");

  StageSpec spec;
  bool sweep_mode = false;
  std::vector<std::string> replay_paths;
  bool replay_all = false;
  SweepParams sweep;
  std::string sweep_data, sweep_split, sweep_scaler;

  // extract
  auto* extract = app.add_subcommand("extract", "Featurize PE files into JSONL");
  std::vector<std::string> ex_inputs;
  int ex_label = -1;
  std::string ex_labels_csv, ex_source = "unknown", ex_out;
  extract->add_option("inputs", ex_inputs, "Files or directories")->required();
  extract->add_option("--label", ex_label, "Label for every file (-1, 0, 1)")->check(CLI::Range(-1, 1));
  extract->add_option("--labels", ex_labels_csv, "Sidecar CSV with sha256,label rows");
  extract->add_option("--source", ex_source, "Source tag");
  extract->add_option("-o,--output", ex_out, "Output JSONL")->required();

  // build-dataset
  auto* build = app.add_subcommand("build-dataset", "Convert JSONL records to a FVS1 dataset");
  std::vector<std::string> bd_inputs;
  std::string bd_source = "unknown", bd_out;
  build->add_option("inputs", bd_inputs, "JSONL files")->required();
  build->add_option("--source", bd_source, "Source tag for records without one");
  build->add_option("-o,--output", bd_out, "Output FVS1 file")->required();

  // unify
  auto* uni = app.add_subcommand("unify", "Concatenate and deduplicate datasets by sha256");
  std::vector<std::string> un_inputs;
  std::string un_out, un_report;
  uni->add_option("inputs", un_inputs, "FVS1 files, in priority order")->required();
  uni->add_option("-o,--output", un_out, "Output FVS1 file")->required();
  uni->add_option("--report", un_report, "Deduplication report (default <output>.report.json)");

  // split
  auto* spl = app.add_subcommand("split", "Assign rows to train_a/train_b/validation/test");
  std::string sp_data, sp_out;
  std::uint64_t sp_seed = 0;
  double sp_val = 0.1, sp_test = 0.1;
  bool sp_stratify = true;
  spl->add_option("--data", sp_data, "FVS1 dataset")->required();
  spl->add_option("--seed", sp_seed, "Split seed");
  spl->add_option("--val", sp_val, "Validation fraction")->check(CLI::Range(0.0, 1.0));
  spl->add_option("--test", sp_test, "Test fraction")->check(CLI::Range(0.0, 1.0));
  spl->add_flag("--stratify,!--no-stratify", sp_stratify, "Keep class proportions per partition");
  spl->add_option("-o,--output", sp_out, "Split plan JSON")->required();

  // fit-scalers
  auto* fsc = app.add_subcommand("fit-scalers", "Fit the robust + min-max scaler on the training pool");
  std::string fs_data, fs_split, fs_out;
  fsc->add_option("--data", fs_data)->required();
  fsc->add_option("--split", fs_split)->required();
  fsc->add_option("-o,--output", fs_out, "Scaler JSON")->required();

  // fit-reduce
  auto* fr = app.add_subcommand("fit-reduce", "Fit PCA or gain-based feature selection");
  std::string fr_data, fr_split, fr_scaler, fr_method = "xgbfs", fr_out;
  std::size_t fr_dim = 384;
  fr->add_option("--data", fr_data)->required();
  fr->add_option("--split", fr_split)->required();
  fr->add_option("--scaler", fr_scaler)->required();
  fr->add_option("--method", fr_method, "pca or xgbfs")->check(CLI::IsMember({"pca", "xgbfs"}));
  fr->add_option("--dim", fr_dim, "Output dimensionality");
  fr->add_option("-o,--output", fr_out, "Reducer file")->required();

  // train-pair
  auto* tp = app.add_subcommand("train-pair", "Tune and train two models and their fusion weight");
  std::string tp_data, tp_split, tp_scaler, tp_reducer, tp_est = "lgbm", tp_out, tp_log;
  std::uint64_t tp_seed = 0;
  int tp_trials = 30;
  double tp_seconds = 0.0;
  tp->add_option("--data", tp_data)->required();
  tp->add_option("--split", tp_split)->required();
  tp->add_option("--scaler", tp_scaler)->required();
  tp->add_option("--reducer", tp_reducer)->required();
  tp->add_option("--estimator", tp_est, "lgbm, xgb, rf or et")->check(CLI::IsMember({"lgbm", "xgb", "rf", "et"}));
  tp->add_option("--seed", tp_seed);
  tp->add_option("--max-trials", tp_trials)->check(CLI::PositiveNumber);
  tp->add_option("--max-seconds", tp_seconds, "Per-model tuning budget, 0 for none")->check(CLI::NonNegativeNumber);
  tp->add_option("-o,--output", tp_out, "Pair model file")->required();
  tp->add_option("--log", tp_log, "Tuner log (default <output dir>/tuner.json)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Run every reducer x dim x estimator job and write report.csv");
  std::vector<std::string> sw_methods = {"pca", "xgbfs"};
  sw->add_option("--data", sweep_data)->required();
  sw->add_option("--split", sweep_split)->required();
  sw->add_option("--scaler", sweep_scaler)->required();
  sw->add_option("--methods", sw_methods)->check(CLI::IsMember({"pca", "xgbfs"}));
  sw->add_option("--dims", sweep.dims);
  sw->add_option("--estimators", sweep.estimators)->check(CLI::IsMember({"lgbm", "xgb", "rf", "et"}));
  sw->add_option("--seed", sweep.seed);
  sw->add_option("--max-trials", sweep.max_trials)->check(CLI::PositiveNumber);
  sw->add_option("--max-seconds", sweep.max_seconds)->check(CLI::NonNegativeNumber);
  sw->add_option("--out-dir", sweep.out_dir);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a pair model on a labeled dataset");
  std::string ev_data, ev_split, ev_scaler, ev_reducer, ev_pair, ev_partition = "test", ev_tag, ev_out;
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--split", ev_split, "Split plan (not needed with --partition all)");
  ev->add_option("--scaler", ev_scaler)->required();
  ev->add_option("--reducer", ev_reducer)->required();
  ev->add_option("--pair", ev_pair)->required();
  ev->add_option("--partition", ev_partition, "test, validation, train_a, train_b or all");
  ev->add_option("--tag", ev_tag, "Dataset tag in the report");
  ev->add_option("-o,--output", ev_out, "Report JSON")->required();

  // predict
  auto* pr = app.add_subcommand("predict", "Score PE files or FVS1 datasets");
  std::vector<std::string> pr_inputs;
  std::string pr_scaler, pr_reducer, pr_pair, pr_out;
  pr->add_option("inputs", pr_inputs, "PE files, directories or FVS1 datasets")->required();
  pr->add_option("--scaler", pr_scaler)->required();
  pr->add_option("--reducer", pr_reducer)->required();
  pr->add_option("--pair", pr_pair)->required();
  pr->add_option("-o,--output", pr_out, "Scores CSV")->required();

  // synth
  auto* sy = app.add_subcommand("synth", "Generate the synthetic benchmark corpus");
  std::size_t sy_rows = 10000, sy_dims = 2381, sy_inf = 40, sy_dense = 900, sy_sparse = 300;
  std::uint64_t sy_seed = 0;
  std::string sy_out, sy_info;
  sy->add_option("--rows", sy_rows);
  sy->add_option("--dims", sy_dims);
  sy->add_option("--informative", sy_inf);
  sy->add_option("--dense-noise", sy_dense, "Gaussian noise columns");
  sy->add_option("--sparse-noise", sy_sparse, "Count-valued noise columns");
  sy->add_option("--seed", sy_seed);
  sy->add_option("-o,--output", sy_out, "Output FVS1 file")->required();
  sy->add_option("--info", sy_info, "Planted-column list (default <output>.info.json)");

  // shift
  auto* sh = app.add_subcommand("shift", "Apply a covariate shift to a dataset");
  std::string sh_data, sh_split, sh_partition = "all", sh_out;
  std::uint64_t sh_seed = 0;
  double sh_zero = 0.1;
  sh->add_option("--data", sh_data)->required();
  sh->add_option("--split", sh_split);
  sh->add_option("--partition", sh_partition, "Rows to shift (all or a partition name)");
  sh->add_option("--seed", sh_seed);
  sh->add_option("--zero-fraction", sh_zero)->check(CLI::Range(0.0, 1.0));
  sh->add_option("-o,--output", sh_out, "Output FVS1 file")->required();

  // replay
  auto* rp = app.add_subcommand("replay", "Re-run recorded stages and compare output bytes");
  rp->add_option("paths", replay_paths, "Artifact paths as recorded in the manifest");
  rp->add_flag("--all", replay_all, "Replay every recorded stage");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  try {
    Pipeline pipe(common.workdir);
    pipe.set_verbose(!common.quiet);
    const auto wd = pipe.workdir();

    if (*extract) {
      json params = {{"label", ex_label}, {"source", ex_source}};
      spec = {"extract", params, expand_inputs(ex_inputs, wd), {ex_out}};
      if (!ex_labels_csv.empty()) {
        spec.params["label_csv"] = true;
        spec.inputs.insert(spec.inputs.begin(), ex_labels_csv);
      }
    } else if (*build) {
      spec = {"build-dataset", {{"source", bd_source}}, bd_inputs, {bd_out}};
    } else if (*uni) {
      spec = {"unify", json::object(), un_inputs,
              {un_out, un_report.empty() ? un_out + ".report.json" : un_report}};
    } else if (*spl) {
      spec = {"split",
              {{"seed", sp_seed}, {"val_fraction", sp_val}, {"test_fraction", sp_test}, {"stratify", sp_stratify}},
              {sp_data},
              {sp_out}};
    } else if (*fsc) {
      spec = {"fit-scalers", json::object(), {fs_data, fs_split}, {fs_out}};
    } else if (*fr) {
      json params = {{"method", fr_method}, {"dim", fr_dim}};
      if (fr_method == "xgbfs") {
        const auto cfg = default_xgbfs_config();
        params["selector"] = {{"hyperparams", json::parse(hyperparams_to_json(cfg.hp))}, {"seed", cfg.seed}};
      }
      spec = {"fit-reduce", params, {fr_data, fr_split, fr_scaler}, {fr_out}};
    } else if (*tp) {
      const std::string log = tp_log.empty() ? (fs::path(tp_out).parent_path() / "tuner.json").string() : tp_log;
      spec = {"train-pair",
              {{"estimator", tp_est}, {"seed", tp_seed}, {"max_trials", tp_trials}, {"max_seconds", tp_seconds}},
              {tp_data, tp_split, tp_scaler, tp_reducer},
              {tp_out, log}};
    } else if (*sw) {
      sweep_mode = true;
      sweep.methods.clear();
      for (const auto& m : sw_methods) sweep.methods.push_back(reduction_from_string(m));
    } else if (*ev) {
      std::vector<std::string> inputs = {ev_data};
      if (ev_partition != "all") {
        if (ev_split.empty()) throw ConfigError("evaluate: --split is required unless --partition all");
        inputs.push_back(ev_split);
      }
      inputs.insert(inputs.end(), {ev_scaler, ev_reducer, ev_pair});
      spec = {"evaluate", {{"partition", ev_partition}, {"tag", ev_tag.empty() ? ev_partition : ev_tag}},
              inputs, {ev_out}};
    } else if (*pr) {
      std::vector<std::string> inputs = {pr_scaler, pr_reducer, pr_pair};
      const auto data = expand_inputs(pr_inputs, wd);
      inputs.insert(inputs.end(), data.begin(), data.end());
      spec = {"predict", json::object(), inputs, {pr_out}};
    } else if (*sy) {
      spec = {"synth",
              {{"n_rows", sy_rows},
               {"n_dims", sy_dims},
               {"n_informative", sy_inf},
               {"n_dense_noise", sy_dense},
               {"n_sparse_noise", sy_sparse},
               {"seed", sy_seed}},
              {},
              {sy_out, sy_info.empty() ? sy_out + ".info.json" : sy_info}};
    } else if (*sh) {
      std::vector<std::string> inputs = {sh_data};
      if (sh_partition != "all") {
        if (sh_split.empty()) throw ConfigError("shift: --split is required with --partition");
        inputs.push_back(sh_split);
      }
      spec = {"shift", {{"seed", sh_seed}, {"zero_fraction", sh_zero}, {"partition", sh_partition}}, inputs, {sh_out}};
    } else if (*rp) {
      std::vector<std::string> targets = replay_paths;
      if (replay_all) {
        std::set<std::string> seen;
        for (const auto& r : pipe.manifest().records()) {
          if (seen.insert(r.stage_key).second) targets.push_back(r.outputs.front());
        }
      }
      if (targets.empty()) throw ConfigError("replay: give artifact paths or --all");
      pipe.manifest().check_acyclic();
      bool ok = true;
      for (const auto& t : targets) {
        const auto res = pipe.replay(t);
        std::cout << (res.identical ? "identical " : "DIFFERS   ") << t << "\n";
        for (const auto& d : res.differing) std::cout << "  differs: " << d << "\n";
        ok = ok && res.identical;
      }
      return ok ? 0 : static_cast<int>(ExitCode::artifact_mismatch);
    }

    if (sweep_mode) {
      const auto rows = run_sweep(pipe, sweep_data, sweep_split, sweep_scaler, sweep, common.force);
      std::cout << report_csv(rows);
      return 0;
    }
    print_outcome(spec, pipe.run(spec, common.force));
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  }
}
