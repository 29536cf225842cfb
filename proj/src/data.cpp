#include "lrcoreset/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

namespace lrcoreset {

namespace {

void check_finite(const RowMatrix& x, const Vector& y) {
  if (!x.allFinite()) throw std::invalid_argument("dataset: covariates must be finite");
  for (Index n = 0; n < y.size(); ++n)
    if (y[n] != 1.0 && y[n] != -1.0)
      throw std::invalid_argument("dataset: label at row " + std::to_string(n) + " is not +-1");
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

// {0, -1} -> -1 and {1, +1} -> +1; anything else is rejected.
std::optional<double> map_label(std::string_view s) {
  double v = 0.0;
  if (!parse_double(s, v)) return std::nullopt;
  if (v == 1.0) return 1.0;
  if (v == 0.0 || v == -1.0) return -1.0;
  return std::nullopt;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

Dataset::Dataset(RowMatrix x, Vector y) : x_(std::move(x)), y_(std::move(y)) {
  if (x_.rows() < 1 || x_.cols() < 1) throw std::invalid_argument("dataset: need N >= 1 and D >= 1");
  if (y_.size() != x_.rows()) throw std::invalid_argument("dataset: label count does not match rows");
  check_finite(x_, y_);
  z_ = y_.asDiagonal() * x_;
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  RowMatrix x(static_cast<Index>(rows.size()), dim());
  Vector y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = x_.row(rows[i]);
    y[static_cast<Index>(i)] = y_[rows[i]];
  }
  return Dataset(std::move(x), std::move(y));
}

double Dataset::positive_fraction() const {
  return static_cast<double>((y_.array() > 0.0).count()) / static_cast<double>(size());
}

WeightedDataset::WeightedDataset(Dataset data)
    : data_(std::move(data)), w_(Vector::Ones(data_.size())), total_(static_cast<double>(data_.size())), unit_(true) {}

WeightedDataset::WeightedDataset(Dataset data, Vector weights)
    : data_(std::move(data)), w_(std::move(weights)), total_(0.0), unit_(true) {
  if (w_.size() != data_.size()) throw std::invalid_argument("weighted dataset: weight count does not match rows");
  for (Index n = 0; n < w_.size(); ++n) {
    if (!(w_[n] > 0.0) || !std::isfinite(w_[n]))
      throw std::invalid_argument("weighted dataset: weights must be positive and finite");
    if (w_[n] != 1.0) unit_ = false;
    total_ += w_[n];
  }
}

// --- synthetic generators ---------------------------------------------------

SyntheticSpec SyntheticSpec::binary10() {
  SyntheticSpec s;
  s.kind = SyntheticKind::binary;
  s.dim = 10;
  s.p.resize(10);
  s.p << 1.0, 0.2, 0.3, 0.5, 0.01, 0.1, 0.2, 0.007, 0.005, 0.001;
  s.theta_true.resize(10);
  s.theta_true << -3.0, 1.2, -0.5, 0.8, 3.0, -1.0, -0.7, 4.0, 3.5, 4.5;
  return s;
}

SyntheticSpec SyntheticSpec::binary5() {
  SyntheticSpec s = binary10();
  s.dim = 5;
  s.p = Vector(s.p.head(5));
  s.theta_true = Vector(s.theta_true.head(5));
  return s;
}

SyntheticSpec SyntheticSpec::mixture10() {
  SyntheticSpec s;
  s.kind = SyntheticKind::mixture;
  s.dim = 10;
  s.mu_neg.resize(10);
  s.mu_neg << 0, 0, 0, 0, 0, 1, 1, 1, 1, 1;
  s.mu_pos.resize(10);
  s.mu_pos << 1, 1, 1, 1, 1, 0, 0, 0, 0, 0;
  return s;
}

SyntheticSpec SyntheticSpec::from_name(const std::string& name) {
  if (name == "binary5") return binary5();
  if (name == "binary10") return binary10();
  if (name == "mixture") return mixture10();
  throw std::invalid_argument("unknown synthetic dataset '" + name + "' (binary5 | binary10 | mixture)");
}

Dataset generate_binary(const SyntheticSpec& spec, Index n, Rng& rng) {
  if (spec.kind != SyntheticKind::binary) throw std::invalid_argument("generate_binary: spec is not binary");
  if (spec.p.size() != spec.dim || spec.theta_true.size() != spec.dim || spec.dim < 1)
    throw std::invalid_argument("generate_binary: p and theta must have length D");
  if ((spec.p.array() < 0.0).any() || (spec.p.array() > 1.0).any())
    throw std::invalid_argument("generate_binary: p entries must lie in [0, 1]");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RowMatrix x(n, spec.dim);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    double margin = 0.0;
    for (Index d = 0; d < spec.dim; ++d) {
      const double bit = unif(rng) < spec.p[d] ? 1.0 : 0.0;
      x(i, d) = bit;
      margin += bit * spec.theta_true[d];
    }
    const double prob_pos = 1.0 / (1.0 + std::exp(-margin));
    y[i] = unif(rng) < prob_pos ? 1.0 : -1.0;
  }
  return Dataset(std::move(x), std::move(y));
}

Dataset generate_mixture(const SyntheticSpec& spec, Index n, Rng& rng) {
  if (spec.kind != SyntheticKind::mixture) throw std::invalid_argument("generate_mixture: spec is not mixture");
  if (spec.mu_neg.size() != spec.dim || spec.mu_pos.size() != spec.dim || spec.dim < 1)
    throw std::invalid_argument("generate_mixture: both means must have length D");
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  RowMatrix x(n, spec.dim);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const bool pos = coin(rng);
    y[i] = pos ? 1.0 : -1.0;
    const Vector& mu = pos ? spec.mu_pos : spec.mu_neg;
    for (Index d = 0; d < spec.dim; ++d) x(i, d) = mu[d] + gauss(rng);
  }
  return Dataset(std::move(x), std::move(y));
}

Dataset generate(const SyntheticSpec& spec, Index n) {
  Rng rng(spec.seed);
  return spec.kind == SyntheticKind::binary ? generate_binary(spec, n, rng) : generate_mixture(spec, n, rng);
}

// --- svmlight ---------------------------------------------------------------

Dataset read_svmlight(std::istream& in, const SvmlightOptions& opts, const std::string& source) {
  struct Row {
    double label;
    std::vector<std::pair<Index, double>> entries;
  };
  std::vector<Row> rows;
  Index max_index = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    if (const auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    sv = trim(sv);
    if (sv.empty()) continue;

    Row row;
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string_view {
      while (pos < sv.size() && (sv[pos] == ' ' || sv[pos] == '\t')) ++pos;
      const std::size_t start = pos;
      while (pos < sv.size() && sv[pos] != ' ' && sv[pos] != '\t') ++pos;
      return sv.substr(start, pos - start);
    };
    const auto label_tok = next_token();
    const auto label = map_label(label_tok);
    if (!label) throw ParseError(source, lineno, "label '" + std::string(label_tok) + "' not in {-1, 0, 1, +1}");
    row.label = *label;
    for (auto tok = next_token(); !tok.empty(); tok = next_token()) {
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) throw ParseError(source, lineno, "expected idx:val, got '" + std::string(tok) + "'");
      const auto key = tok.substr(0, colon);
      if (key == "qid") continue;
      long long idx = 0;
      const auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
      double val = 0.0;
      if (ec != std::errc{} || p != key.data() + key.size() || idx < 1 || !parse_double(tok.substr(colon + 1), val) ||
          !std::isfinite(val))
        throw ParseError(source, lineno, "malformed feature '" + std::string(tok) + "'");
      row.entries.emplace_back(static_cast<Index>(idx), val);
      max_index = std::max<Index>(max_index, static_cast<Index>(idx));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(source + ": no rows");
  Index dim = max_index;
  if (opts.dim) {
    if (*opts.dim < max_index)
      throw Error(source + ": feature index " + std::to_string(max_index) + " exceeds requested dimension " +
                  std::to_string(*opts.dim));
    dim = *opts.dim;
  }
  if (dim < 1) throw Error(source + ": no features");
  RowMatrix x = RowMatrix::Zero(static_cast<Index>(rows.size()), dim);
  Vector y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y[static_cast<Index>(i)] = rows[i].label;
    for (const auto& [idx, val] : rows[i].entries) x(static_cast<Index>(i), idx - 1) = val;
  }
  return Dataset(std::move(x), std::move(y));
}

Dataset read_svmlight(const std::filesystem::path& path, const SvmlightOptions& opts) {
  auto in = open_in(path);
  return read_svmlight(in, opts, path.string());
}

void write_svmlight(std::ostream& out, const Dataset& ds) {
  for (Index n = 0; n < ds.size(); ++n) {
    out << (ds.y()[n] > 0 ? "+1" : "-1");
    for (Index d = 0; d < ds.dim(); ++d)
      if (ds.x()(n, d) != 0.0) out << ' ' << (d + 1) << ':' << format_double(ds.x()(n, d));
    out << '\n';
  }
}

void write_svmlight(const std::filesystem::path& path, const Dataset& ds) {
  auto out = open_out(path);
  write_svmlight(out, ds);
}

// --- csv --------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

Dataset read_csv(std::istream& in, const LabelColumn& label, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw Error(source + ": no header");
  const auto header = split_commas(line);
  const auto ncols = static_cast<Index>(header.size());
  Index label_col = -1;
  if (const auto* name = std::get_if<std::string>(&label)) {
    for (Index c = 0; c < ncols; ++c)
      if (header[static_cast<std::size_t>(c)] == *name) label_col = c;
    if (label_col < 0) throw Error(source + ": no column named '" + *name + "'");
  } else {
    label_col = std::get<Index>(label);
    if (label_col < 0 || label_col >= ncols) throw Error(source + ": label column index out of range");
  }
  if (ncols < 2) throw Error(source + ": need a label column and at least one feature column");

  std::vector<double> values;
  std::vector<double> labels;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (static_cast<Index>(cells.size()) != ncols)
      throw ParseError(source, lineno, "expected " + std::to_string(ncols) + " fields, got " + std::to_string(cells.size()));
    for (Index c = 0; c < ncols; ++c) {
      const auto cell = cells[static_cast<std::size_t>(c)];
      if (c == label_col) {
        const auto y = map_label(cell);
        if (!y) throw ParseError(source, lineno, "label '" + std::string(cell) + "' not in {-1, 0, 1, +1}");
        labels.push_back(*y);
      } else {
        double v = 0.0;
        if (!parse_double(cell, v) || !std::isfinite(v))
          throw ParseError(source, lineno, "bad number '" + std::string(cell) + "'");
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw Error(source + ": no rows");
  const auto n = static_cast<Index>(labels.size());
  RowMatrix x = Eigen::Map<RowMatrix>(values.data(), n, ncols - 1);
  Vector y = Eigen::Map<Vector>(labels.data(), n);
  return Dataset(std::move(x), std::move(y));
}

Dataset read_csv(const std::filesystem::path& path, const LabelColumn& label) {
  auto in = open_in(path);
  return read_csv(in, label, path.string());
}

void write_csv(std::ostream& out, const Dataset& ds) {
  out << "label";
  for (Index d = 0; d < ds.dim(); ++d) out << ",f" << d;
  out << '\n';
  for (Index n = 0; n < ds.size(); ++n) {
    out << (ds.y()[n] > 0 ? "1" : "-1");
    for (Index d = 0; d < ds.dim(); ++d) out << ',' << format_double(ds.x()(n, d));
    out << '\n';
  }
}

Dataset read_dataset(const std::filesystem::path& path, std::optional<Index> dim) {
  if (path.extension() == ".csv") {
    Dataset ds = read_csv(path, LabelColumn{std::string("label")});
    if (dim && *dim != ds.dim())
      throw Error(path.string() + ": has " + std::to_string(ds.dim()) + " features, expected " + std::to_string(*dim));
    return ds;
  }
  return read_svmlight(path, SvmlightOptions{dim});
}

// --- split / transform ------------------------------------------------------

Split split(const Dataset& ds, Index n_test, Rng& rng) {
  if (n_test < 0 || n_test >= ds.size())
    throw std::invalid_argument("split: need 0 <= n_test < N (got " + std::to_string(n_test) + ")");
  std::vector<Index> perm(static_cast<std::size_t>(ds.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  // Partial Fisher-Yates: the first n_test slots become the test rows.
  for (Index i = 0; i < n_test; ++i) {
    std::uniform_int_distribution<Index> pick(i, ds.size() - 1);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
  }
  std::vector<Index> test(perm.begin(), perm.begin() + n_test);
  std::vector<Index> train(perm.begin() + n_test, perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  Split out{ds.subset(train), std::nullopt};
  if (n_test > 0) out.test = ds.subset(test);
  return out;
}

ColumnTransform ColumnTransform::standardizer(const Dataset& ds) {
  ColumnTransform t;
  t.shift = ds.x().colwise().mean().transpose();
  t.scale = Vector::Ones(ds.dim());
  for (Index d = 0; d < ds.dim(); ++d) {
    const double var = (ds.x().col(d).array() - t.shift[d]).square().mean();
    if (var > 0.0) {
      t.scale[d] = std::sqrt(var);
    } else {
      t.shift[d] = 0.0;  // constant column (e.g. intercept) stays untouched
    }
  }
  return t;
}

Dataset ColumnTransform::apply(const Dataset& ds) const {
  if (shift.size() != ds.dim()) throw std::invalid_argument("column transform: dimension mismatch");
  RowMatrix x = (ds.x().rowwise() - shift.transpose()).array().rowwise() / scale.transpose().array();
  return Dataset(std::move(x), ds.y());
}

}  // namespace lrcoreset
