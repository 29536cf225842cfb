#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lrcoreset/clustering.hpp"
#include "lrcoreset/common.hpp"
#include "lrcoreset/data.hpp"
#include "lrcoreset/sensitivity.hpp"

namespace lrcoreset {

struct CoresetMeta {
  std::string method = "coreset";
  double eps = 0.0;
  double delta = 0.0;
  double radius = 0.0;
  Index k = 0;
  double c = 1.0;
  Index target_size = 0;
  Index source_size = 0;
  double source_weight = 0.0;
  double mean_sensitivity = 0.0;
  int level = 0;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const CoresetMeta& meta);
CoresetMeta meta_from_json(const nlohmann::json& j);

/// Weighted subset of a dataset. May be empty (the identity for merge).
class Coreset {
 public:
  explicit Coreset(Index dim);
  Coreset(RowMatrix x, Vector y, Vector gamma, std::vector<Index> source, CoresetMeta meta);

  Index size() const noexcept { return x_.rows(); }
  Index dim() const noexcept { return x_.cols(); }
  bool empty() const noexcept { return size() == 0; }

  const RowMatrix& x() const noexcept { return x_; }
  const Vector& y() const noexcept { return y_; }
  const Vector& gamma() const noexcept { return gamma_; }
  const std::vector<Index>& source_index() const noexcept { return source_; }
  const CoresetMeta& meta() const noexcept { return meta_; }
  CoresetMeta& meta() noexcept { return meta_; }
  double total_weight() const { return gamma_.sum(); }

  /// Shifts the recorded source indices (used when blocks are concatenated).
  void offset_sources(Index offset);

  WeightedDataset as_weighted() const;

 private:
  RowMatrix x_;
  Vector y_;
  Vector gamma_;
  std::vector<Index> source_;
  CoresetMeta meta_;
};

/// ceil((c mbar / eps^2) ((D + 1) ln mbar + ln(1/delta))), at least 1.
Index coreset_size(double mbar, double eps, double delta, Index dim, double c = 1.0);

/// Vose alias table: O(N) build, O(1) categorical draws.
class AliasTable {
 public:
  explicit AliasTable(const Vector& probabilities);
  Index draw(Rng& rng) const;
  Index size() const noexcept { return static_cast<Index>(prob_.size()); }

 private:
  std::vector<double> prob_;
  std::vector<Index> alias_;
};

struct BuildOptions {
  double eps = 0.1;
  double delta = 0.1;
  double c = 1.0;
  std::optional<Index> size;  // overrides the size formula
};

/// Importance-sampling step: M categorical draws from p, one entry per
/// distinct drawn row, weight gamma_n = K_n w_n (sum m) / (M m_n).
Coreset sample_coreset(const WeightedDataset& ds, const SensitivityProfile& profile, Index m, Rng& rng);

/// Sensitivity bounds from the clustering, the coreset size, then sampling.
Coreset build_coreset(const WeightedDataset& ds, const Clustering& cl, const SensitivityOptions& sens,
                      const BuildOptions& opts, Rng& rng);

/// Union of two coresets; eps is the max of the two, source weight adds.
Coreset merge(const Coreset& a, const Coreset& b);

struct CompressOptions {
  Index k = 4;
  Index lloyd_iters = 10;
  Index subsample = 0;             // clustering seeding subsample (0 = default rule)
  double a = 3.0;                  // radius heuristic constant
  std::optional<double> radius;    // pins R instead of a / sqrt(I)
  double eps_prime = 0.1;
  double delta = 0.1;
  double c = 1.0;
  std::optional<Index> target_size;
  CenterMode mode = CenterMode::exact;
  unsigned workers = 1;
  Index restarts = 10;             // k-means++ restarts
};

/// Cluster (seeded on a subsample), pick R = a / sqrt(I) unless pinned, then
/// build with eps = opts.eps_prime and M = opts.target_size (or the formula).
Coreset cluster_and_build(const WeightedDataset& ds, const CompressOptions& opts, Rng& rng);

/// Re-coresets a coreset (reclustering its points). Returns the input
/// unchanged when it is already no larger than the target size.
Coreset compress(const Coreset& cs, const CompressOptions& opts, Rng& rng);

/// Composition of multiplicative errors, (1 + eps)(1 + eps') - 1.
double compose_eps(double eps, double eps_prime) noexcept;

/// Binary-counter merge/compress tree over a stream of blocks.
class StreamState {
 public:
  StreamState(CompressOptions opts, std::uint64_t root_seed);

  /// Builds the level-0 coreset of a block with the block's derived seed.
  Coreset build_block(const Dataset& block, Index block_index) const;

  void insert(const Dataset& block);
  /// Pushes an externally built level-0 coreset (e.g. from a worker).
  void push(Coreset level0);
  Coreset finalize();

  std::uint64_t block_seed(Index block_index) const noexcept;
  Index blocks() const noexcept { return blocks_; }
  std::size_t depth() const noexcept { return stack_.size(); }
  /// Largest stack size seen after an insert has finished its reductions.
  std::size_t max_depth() const noexcept { return max_depth_; }
  const std::vector<std::pair<int, Coreset>>& stack() const noexcept { return stack_; }
  const CompressOptions& options() const noexcept { return opts_; }

 private:
  Coreset compress_next(const Coreset& cs);

  CompressOptions opts_;
  std::uint64_t root_;
  std::vector<std::pair<int, Coreset>> stack_;
  Index blocks_ = 0;
  Index rows_ = 0;
  Index compressions_ = 0;
  std::size_t max_depth_ = 0;
};

/// Level-0 coresets built concurrently, then reduced in block order. Equal to
/// inserting the blocks one by one.
Coreset stream_blocks(const std::vector<Dataset>& blocks, const CompressOptions& opts, std::uint64_t root_seed,
                      unsigned workers = 1, std::size_t* max_depth = nullptr);

/// CSV with header gamma,label,f0,...,f{D-1}; meta goes to a JSON sidecar.
void write_coreset_csv(std::ostream& out, const Coreset& cs);
void write_coreset(const std::filesystem::path& csv_path, const Coreset& cs);
Coreset read_coreset(const std::filesystem::path& csv_path);

/// Weighted log-likelihood -sum gamma_n phi(Z_n . theta).
double log_likelihood(const Coreset& cs, const Vector& theta);

}  // namespace lrcoreset
