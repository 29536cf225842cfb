#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lrcoreset/common.hpp"

namespace lrcoreset {

/// Covariates X (N x D), labels Y in {-1, +1} and the label-multiplied rows
/// Z_n = Y_n X_n. Immutable after construction.
class Dataset {
 public:
  Dataset(RowMatrix x, Vector y);

  Index size() const noexcept { return x_.rows(); }
  Index dim() const noexcept { return x_.cols(); }

  const RowMatrix& x() const noexcept { return x_; }
  const Vector& y() const noexcept { return y_; }
  const RowMatrix& z() const noexcept { return z_; }

  Dataset subset(std::span<const Index> rows) const;
  double positive_fraction() const;

 private:
  RowMatrix x_;
  Vector y_;
  RowMatrix z_;
};

/// A dataset with strictly positive per-point weights. Unit weights recover
/// the plain dataset.
class WeightedDataset {
 public:
  explicit WeightedDataset(Dataset data);
  WeightedDataset(Dataset data, Vector weights);

  const Dataset& data() const noexcept { return data_; }
  const Vector& weights() const noexcept { return w_; }
  const RowMatrix& z() const noexcept { return data_.z(); }
  Index size() const noexcept { return data_.size(); }
  Index dim() const noexcept { return data_.dim(); }
  double total_weight() const noexcept { return total_; }
  bool unit_weights() const noexcept { return unit_; }

 private:
  Dataset data_;
  Vector w_;
  double total_;
  bool unit_;
};

enum class SyntheticKind { binary, mixture };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::binary;
  Index dim = 0;
  Vector p;           // Bernoulli feature probabilities (binary)
  Vector theta_true;  // generating coefficients (binary)
  Vector mu_neg;      // class means (mixture)
  Vector mu_pos;
  std::uint64_t seed = 0;

  static SyntheticSpec binary10();
  static SyntheticSpec binary5();
  static SyntheticSpec mixture10();
  static SyntheticSpec from_name(const std::string& name);
};

Dataset generate_binary(const SyntheticSpec& spec, Index n, Rng& rng);
Dataset generate_mixture(const SyntheticSpec& spec, Index n, Rng& rng);
/// Dispatches on spec.kind with an engine seeded from spec.seed.
Dataset generate(const SyntheticSpec& spec, Index n);

struct SvmlightOptions {
  std::optional<Index> dim;  // overrides the max-index inference
};

Dataset read_svmlight(std::istream& in, const SvmlightOptions& opts = {},
                      const std::string& source = "<stream>");
Dataset read_svmlight(const std::filesystem::path& path, const SvmlightOptions& opts = {});
void write_svmlight(std::ostream& out, const Dataset& ds);
void write_svmlight(const std::filesystem::path& path, const Dataset& ds);

using LabelColumn = std::variant<std::string, Index>;

Dataset read_csv(std::istream& in, const LabelColumn& label, const std::string& source = "<stream>");
Dataset read_csv(const std::filesystem::path& path, const LabelColumn& label);
void write_csv(std::ostream& out, const Dataset& ds);

/// Reads .csv (label column "label") or svmlight, by extension.
Dataset read_dataset(const std::filesystem::path& path, std::optional<Index> dim = std::nullopt);

struct Split {
  Dataset train;
  std::optional<Dataset> test;  // empty when n_test == 0
};

/// Uniformly random disjoint partition; both parts keep the input row order.
Split split(const Dataset& ds, Index n_test, Rng& rng);

/// Per-column affine map x -> (x - shift) / scale. Constant columns are left as is.
struct ColumnTransform {
  Vector shift;
  Vector scale;

  static ColumnTransform standardizer(const Dataset& ds);
  Dataset apply(const Dataset& ds) const;
};

}  // namespace lrcoreset
