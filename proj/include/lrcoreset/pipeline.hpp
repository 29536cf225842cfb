#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrcoreset/common.hpp"
#include "lrcoreset/coreset.hpp"
#include "lrcoreset/data.hpp"
#include "lrcoreset/evaluation.hpp"
#include "lrcoreset/inference.hpp"
#include "lrcoreset/sensitivity.hpp"

namespace lrcoreset {

struct DataConfig {
  std::string source = "synthetic";   // synthetic | file
  std::string synthetic = "binary5";  // binary5 | binary10 | mixture
  Index n = 10000;                    // training rows generated (synthetic)
  Index n_test = 1000;                // held-out rows
  std::string path;                   // file source (.csv or svmlight)
  std::optional<Index> dim;           // svmlight feature count override
};

struct PipelineConfig {
  DataConfig data;
  std::string method = "coreset";  // coreset | uniform | full
  Index k = 4;
  Index lloyd_iters = 10;
  Index subsample = 0;
  Index restarts = 10;
  double a = 3.0;
  std::optional<double> radius;
  CenterMode mode = CenterMode::exact;
  double eps = 0.1;
  double delta = 0.1;
  double c = 1.0;
  std::optional<Index> size;  // M override
  Index iterations = 10000;
  std::optional<double> step0;
  double prior_scale = 4.0;
  Index chains = 1;
  Index grid_size = 100;
  bool reference = true;                     // full-data reference chain for MMD
  std::optional<Index> reference_iterations; // defaults to iterations
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string output = "run";

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
};

/// Error raised inside a pipeline phase; what() is prefixed with the phase.
class PhaseError : public Error {
 public:
  PhaseError(std::string phase, const std::string& what) : Error(phase + ": " + what), phase_(std::move(phase)) {}
  const std::string& phase() const noexcept { return phase_; }

 private:
  std::string phase_;
};

/// Runs fn, rethrowing any exception as a PhaseError for `phase`.
template <typename Fn>
auto in_phase(const std::string& phase, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PhaseError&) {
    throw;
  } catch (const std::exception& e) {
    throw PhaseError(phase, e.what());
  }
}

/// Training and test data for a config. A file source is split at random
/// into n_test held-out rows and the rest; a synthetic source draws n
/// training rows and n_test independent test rows. Either way the rows depend
/// only on the root seed, so every method and replicate sees the same data.
Split load_data(const PipelineConfig& cfg);

/// The whole file, or the n synthetic training rows of load_data.
Dataset load_training_source(const PipelineConfig& cfg);

/// git's blob id: SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_sha1(const std::string& bytes);
std::string git_blob_sha1_file(const std::filesystem::path& path);

struct SubsetResult {
  Coreset coreset;
  std::optional<SensitivityProfile> profile;
  double cluster_seconds = 0.0;
  double sensitivity_seconds = 0.0;
  double sampling_seconds = 0.0;
  double construction_seconds() const { return cluster_seconds + sensitivity_seconds + sampling_seconds; }
};

/// The weighted subset a method feeds to the sampler: the sensitivity
/// coreset, a uniform subsample of the same size (`size` required), or the
/// full data with unit weights.
SubsetResult build_subset(const PipelineConfig& cfg, const Dataset& train, std::uint64_t seed);

MalaOptions mala_options(const PipelineConfig& cfg, std::optional<Index> iterations = std::nullopt);

/// Runs the chains and stacks their samples.
RowMatrix run_chains(const LogPosterior& lp, const MalaOptions& opts, std::uint64_t seed, Index chains, unsigned workers,
                     std::vector<PosteriorChain>* out = nullptr);

struct PhaseTimings {
  double ingest = 0.0;
  double cluster = 0.0;
  double sensitivity = 0.0;
  double build = 0.0;
  double sample = 0.0;
  double reference = 0.0;
  double eval = 0.0;

  double construction() const { return cluster + sensitivity + build; }
  /// construction / (construction + sampler time on the subset)
  double construction_fraction() const;
  nlohmann::json to_json() const;
};

struct RunResult {
  std::filesystem::path dir;
  MetricReport metrics;
  PhaseTimings timings;
  Index subset_size = 0;
};

/// ingest -> cluster -> sensitivity -> build -> sample -> eval. Writes
/// config.json, coreset.csv (+ .json), chain.csv, diagnostics.json,
/// metrics.json, timings.json and manifest.json into cfg.output.
RunResult run_pipeline(const PipelineConfig& cfg);

struct ComparisonRow {
  std::string method;
  Index m = 0;
  Index seed = 0;
  double mmd = 0.0;
  double neg_test_ll = 0.0;
};

/// {coreset, uniform} x sizes x replicate seeds against one full-data
/// reference chain. Replicates run on cfg.workers threads.
std::vector<ComparisonRow> run_comparison(const PipelineConfig& cfg, const std::vector<Index>& sizes, Index seeds);
void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);

struct ScalingRow {
  Index n = 0;
  double radius = 0.0;
  Index k = 0;
  double mbar = 0.0;
  double score = 0.0;
};

/// Mean sensitivity for every (N, R, k) cell on cfg's data source.
std::vector<ScalingRow> run_sensitivity_scaling(const PipelineConfig& cfg, const std::vector<Index>& n_grid,
                                                const std::vector<double>& r_grid, const std::vector<Index>& k_grid);
void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows);

}  // namespace lrcoreset
