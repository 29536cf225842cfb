#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lrcoreset/pipeline.hpp"

using namespace lrcoreset;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig small_config(const fs::path& out) {
  PipelineConfig cfg;
  cfg.data.n = 2000;
  cfg.data.n_test = 200;
  cfg.size = 100;
  cfg.iterations = 400;
  cfg.grid_size = 20;
  cfg.seed = 7;
  cfg.output = out.string();
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lrcoreset_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("config JSON") {
  PipelineConfig cfg;
  cfg.method = "uniform";
  cfg.radius = 2.5;
  cfg.size = 300;
  cfg.mode = CenterMode::centers;
  cfg.data.synthetic = "binary10";
  cfg.seed = 123456789012345ULL;
  const PipelineConfig back = PipelineConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.radius == 2.5);
  CHECK(back.mode == CenterMode::centers);
  CHECK(back.seed == 123456789012345ULL);

  const PipelineConfig defaults = PipelineConfig::from_json(nlohmann::json::object());
  CHECK(defaults.k == 4);
  CHECK(defaults.a == 3.0);
  CHECK(defaults.prior_scale == 4.0);

  CHECK_THROWS_AS(PipelineConfig::from_json({{"kk", 3}}), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"data", {{"bogus", 1}}}}), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"k", "four"}}), std::invalid_argument);

  PipelineConfig bad;
  bad.eps = 0.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("eps"), std::invalid_argument);
  bad = PipelineConfig{};
  bad.iterations = 11;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("iterations"), std::invalid_argument);
  bad = PipelineConfig{};
  bad.method = "magic";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("git blob ids") {
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("phase errors") {
  try {
    in_phase("cluster", [] { throw std::invalid_argument("k must be positive"); });
    FAIL("expected a throw");
  } catch (const PhaseError& e) {
    CHECK(e.phase() == "cluster");
    CHECK(std::string(e.what()) == "cluster: k must be positive");
  }
  PipelineConfig cfg;
  cfg.data.synthetic = "nope";
  cfg.output = scratch("phase").string();
  CHECK_THROWS_AS(run_pipeline(cfg), PhaseError);
}

TEST_CASE("data loading") {
  PipelineConfig cfg;
  cfg.data.n = 500;
  cfg.data.n_test = 50;
  cfg.seed = 3;
  const Split a = load_data(cfg), b = load_data(cfg);
  CHECK(a.train.size() == 500);
  REQUIRE(a.test);
  CHECK(a.test->size() == 50);
  CHECK(a.train.x() == b.train.x());
  CHECK(load_training_source(cfg).x() == a.train.x());

  const fs::path dir = scratch("load");
  fs::create_directories(dir);
  write_svmlight(dir / "d.svm", a.train);
  cfg.data.source = "file";
  cfg.data.path = (dir / "d.svm").string();
  const Split f = load_data(cfg);
  CHECK(f.train.size() == 450);
  CHECK(f.test->size() == 50);
  fs::remove_all(dir);
}

TEST_CASE("pipeline run artifacts and determinism") {
  const fs::path dir = scratch("run");
  PipelineConfig cfg = small_config(dir / "a");
  const RunResult r = run_pipeline(cfg);
  for (const char* f : {"config.json", "coreset.csv", "coreset.json", "chain.csv", "diagnostics.json",
                        "reference_chain.csv", "metrics.json", "timings.json", "manifest.json"})
    CHECK_MESSAGE(fs::exists(dir / "a" / f), f);
  REQUIRE(r.metrics.mmd);
  REQUIRE(r.metrics.neg_test_ll);
  CHECK(*r.metrics.mmd >= 0.0);
  CHECK(*r.metrics.neg_test_ll > 0.0);
  CHECK(r.metrics.m == 100);
  CHECK(r.subset_size <= 100);
  CHECK(r.timings.construction_fraction() > 0.0);
  CHECK(r.timings.construction_fraction() < 1.0);

  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest.at("outputs").at("coreset.csv").get<std::string>() ==
        git_blob_sha1_file(dir / "a" / "coreset.csv"));
  const PipelineConfig stored = PipelineConfig::load(dir / "a" / "config.json");
  CHECK(stored.to_json() == cfg.to_json());

  cfg.output = (dir / "b").string();
  run_pipeline(cfg);
  CHECK(slurp(dir / "a" / "coreset.csv") == slurp(dir / "b" / "coreset.csv"));
  CHECK(slurp(dir / "a" / "chain.csv") == slurp(dir / "b" / "chain.csv"));
  CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));

  SUBCASE("uniform and full methods") {
    PipelineConfig u = small_config(dir / "u");
    u.method = "uniform";
    const RunResult ru = run_pipeline(u);
    CHECK(ru.subset_size == 100);
    PipelineConfig full = small_config(dir / "f");
    full.method = "full";
    full.reference = false;
    const RunResult rf = run_pipeline(full);
    CHECK(rf.subset_size == 2000);
    CHECK_FALSE(rf.metrics.mmd);
  }
  fs::remove_all(dir);
}

TEST_CASE("comparison and scaling tables") {
  PipelineConfig cfg = small_config("unused");
  cfg.workers = 2;
  const auto rows = run_comparison(cfg, {50, 100}, 2);
  CHECK(rows.size() == 8);
  for (const auto& r : rows) {
    CHECK((r.method == "coreset" || r.method == "uniform"));
    CHECK(r.mmd >= 0.0);
    CHECK(r.neg_test_ll > 0.0);
  }
  std::ostringstream csv;
  write_comparison_csv(csv, rows);
  CHECK(csv.str().rfind("method,M,seed,mmd,neg_test_ll\n", 0) == 0);
  cfg.workers = 1;
  const auto again = run_comparison(cfg, {50, 100}, 2);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(again[i].mmd == rows[i].mmd);

  const auto scaling = run_sensitivity_scaling(cfg, {500, 1000}, {1.0, 2.0}, {2, 4});
  CHECK(scaling.size() == 8);
  for (const auto& s : scaling) CHECK(s.mbar >= 1.0);
  std::ostringstream sc;
  write_scaling_csv(sc, scaling);
  CHECK(sc.str().rfind("N,R,k,mbar,score\n", 0) == 0);
  CHECK_THROWS_AS(run_sensitivity_scaling(cfg, {}, {1.0}, {2}), std::invalid_argument);
}
