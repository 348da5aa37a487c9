#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pedetect/error.hpp"
#include "pedetect/pipeline.hpp"

using namespace pedetect;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("pedetect-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const nlohmann::json kSmallCorpus = {{"n_rows", 600},        {"n_dims", 60},          {"n_informative", 6},
                                     {"n_dense_noise", 20},  {"n_sparse_noise", 10}, {"seed", 4}};

void prepare(Pipeline& pipe) {
  pipe.run({"synth", kSmallCorpus, {}, {"data.fvs", "data.info.json"}});
  pipe.run({"split", {{"seed", 1}}, {"data.fvs"}, {"split.json"}});
  pipe.run({"fit-scalers", {}, {"data.fvs", "split.json"}, {"scaler.json"}});
}

int run_cli(const fs::path& workdir, const std::string& args) {
  const std::string cmd = std::string(PEDETECT_BIN) + " -q -C " + workdir.string() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("stages are idempotent and detect partial writes") {
  TempDir dir("idem");
  Pipeline pipe(dir.path);
  pipe.set_verbose(false);
  prepare(pipe);
  const auto before = slurp(dir.path / "split.json");
  CHECK_FALSE(pipe.run({"split", {{"seed", 1}}, {"data.fvs"}, {"split.json"}}).executed);
  CHECK(pipe.run({"split", {{"seed", 1}}, {"data.fvs"}, {"split.json"}}, true).executed);
  CHECK(slurp(dir.path / "split.json") == before);

  std::ofstream(dir.path / "split.json.tmp") << "half";
  CHECK(pipe.run({"split", {{"seed", 1}}, {"data.fvs"}, {"split.json"}}).executed);

  CHECK(pipe.run({"split", {{"seed", 2}}, {"data.fvs"}, {"split.json"}}).executed);
  CHECK(slurp(dir.path / "split.json") != before);

  CHECK_THROWS_AS(pipe.run({"split", {}, {"absent.fvs"}, {"s.json"}}), ConfigError);
  CHECK_THROWS_AS(pipe.run({"no-such-stage", {}, {}, {"x"}}), ConfigError);

  // A reloaded manifest remembers what is current.
  Pipeline again(dir.path);
  again.set_verbose(false);
  CHECK_FALSE(again.run({"split", {{"seed", 2}}, {"data.fvs"}, {"split.json"}}).executed);
  CHECK_NOTHROW(again.manifest().check_acyclic());
}

TEST_CASE("mixed lineage is rejected") {
  TempDir dir("lineage");
  Pipeline pipe(dir.path);
  pipe.set_verbose(false);
  prepare(pipe);
  pipe.run({"split", {{"seed", 9}}, {"data.fvs"}, {"split9.json"}});
  pipe.run({"fit-scalers", {}, {"data.fvs", "split9.json"}, {"scaler9.json"}});
  pipe.run({"fit-reduce", {{"method", "pca"}, {"dim", 8}}, {"data.fvs", "split.json", "scaler.json"}, {"r.bin"}});
  const nlohmann::json tp = {{"estimator", "rf"}, {"seed", 1}, {"max_trials", 1}};
  CHECK_THROWS_AS(pipe.run({"train-pair", tp, {"data.fvs", "split.json", "scaler9.json", "r.bin"},
                            {"p.bin", "t.json"}}),
                  ArtifactMismatch);
  CHECK_THROWS_AS(pipe.run({"fit-reduce", {{"method", "pca"}, {"dim", 8}},
                            {"data.fvs", "split.json", "scaler9.json"}, {"r9.bin"}}),
                  ArtifactMismatch);
}

TEST_CASE("small sweep end to end, then replay") {
  TempDir dir("sweep");
  Pipeline pipe(dir.path);
  pipe.set_verbose(false);
  prepare(pipe);
  SweepParams sp;
  sp.dims = {4, 8};
  sp.estimators = {"lgbm", "rf"};
  sp.max_trials = 1;
  sp.seed = 3;
  const auto rows = run_sweep(pipe, "data.fvs", "split.json", "scaler.json", sp);
  REQUIRE(rows.size() == 8);
  CHECK(rows.front().reduction == "PCA");
  CHECK(rows.back().reduction == "XGBFS");
  const auto csv = slurp(dir.path / "sweep" / "report.csv");
  CHECK(csv.rfind("red.,dim.,est.,F1,AUC,TPR@1%,TPR@0.1%\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);

  // Every evaluation traces back to exactly one scaler and one reducer.
  const auto& m = pipe.manifest();
  for (const auto& r : m.records()) {
    if (r.stage != "evaluate") continue;
    int scalers = 0, reducers = 0;
    for (const auto& in : r.inputs) {
      const auto* parent = m.find(in);
      REQUIRE(parent);
      scalers += parent->kind == "scaler";
      reducers += parent->kind == "reducer";
    }
    CHECK(scalers == 1);
    CHECK(reducers == 1);
  }

  for (const auto* path : {"split.json", "sweep/xgbfs-4/reducer.json", "sweep/pca-8/rf/pair.bin",
                           "sweep/pca-8/rf/report.json", "sweep/report.csv"}) {
    CAPTURE(path);
    CHECK(pipe.replay(path).identical);
  }

  const auto again = run_sweep(pipe, "data.fvs", "split.json", "scaler.json", sp);
  CHECK(again.size() == rows.size());
}

TEST_CASE("command-line exit codes") {
  TempDir dir("exit");
  const auto& w = dir.path;
  CHECK(run_cli(w, "synth --rows 400 --dims 40 --informative 5 --dense-noise 10 --sparse-noise 5 --seed 2 -o data.fvs") == 0);
  CHECK(run_cli(w, "split --data data.fvs --seed 1 -o split.json") == 0);
  CHECK(run_cli(w, "split --data data.fvs --seed 1 -o split.json") == 0);
  CHECK(run_cli(w, "fit-scalers --data data.fvs --split split.json -o scaler.json") == 0);
  CHECK(run_cli(w, "split --data missing.fvs -o s.json") == 2);
  CHECK(run_cli(w, "fit-reduce --data data.fvs --split split.json --scaler scaler.json --method bogus --dim 4 -o r.json") == 2);
  CHECK(run_cli(w, "no-such-command") == 2);

  std::ofstream(w / "junk.fvs") << "not a dataset";
  CHECK(run_cli(w, "split --data junk.fvs -o j.json") == 3);

  CHECK(run_cli(w, "split --data data.fvs --seed 5 -o split5.json") == 0);
  CHECK(run_cli(w, "fit-reduce --data data.fvs --split split5.json --scaler scaler.json --method pca --dim 4 -o r.bin") == 4);
  CHECK(run_cli(w, "replay --all") == 0);
}
