#include "lrcoreset/coreset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lrcoreset/parallel.hpp"

namespace lrcoreset {

nlohmann::json to_json(const CoresetMeta& m) {
  return {{"method", m.method},
          {"eps", m.eps},
          {"delta", m.delta},
          {"radius", m.radius},
          {"k", m.k},
          {"c", m.c},
          {"target_size", m.target_size},
          {"source_size", m.source_size},
          {"source_weight", m.source_weight},
          {"mean_sensitivity", m.mean_sensitivity},
          {"level", m.level},
          {"seed", m.seed}};
}

CoresetMeta meta_from_json(const nlohmann::json& j) {
  CoresetMeta m;
  m.method = j.value("method", m.method);
  m.eps = j.value("eps", m.eps);
  m.delta = j.value("delta", m.delta);
  m.radius = j.value("radius", m.radius);
  m.k = j.value("k", m.k);
  m.c = j.value("c", m.c);
  m.target_size = j.value("target_size", m.target_size);
  m.source_size = j.value("source_size", m.source_size);
  m.source_weight = j.value("source_weight", m.source_weight);
  m.mean_sensitivity = j.value("mean_sensitivity", m.mean_sensitivity);
  m.level = j.value("level", m.level);
  m.seed = j.value("seed", m.seed);
  return m;
}

// --- Coreset ----------------------------------------------------------------

Coreset::Coreset(Index dim) : x_(0, dim), y_(0), gamma_(0) {
  if (dim < 1) throw std::invalid_argument("coreset: dimension must be >= 1");
}

Coreset::Coreset(RowMatrix x, Vector y, Vector gamma, std::vector<Index> source, CoresetMeta meta)
    : x_(std::move(x)), y_(std::move(y)), gamma_(std::move(gamma)), source_(std::move(source)), meta_(std::move(meta)) {
  if (x_.cols() < 1) throw std::invalid_argument("coreset: dimension must be >= 1");
  if (y_.size() != x_.rows() || gamma_.size() != x_.rows() || static_cast<Index>(source_.size()) != x_.rows())
    throw std::invalid_argument("coreset: inconsistent lengths");
  for (Index i = 0; i < gamma_.size(); ++i)
    if (!(gamma_[i] > 0.0) || !std::isfinite(gamma_[i])) throw std::invalid_argument("coreset: weights must be positive");
}

void Coreset::offset_sources(Index offset) {
  for (auto& s : source_) s += offset;
}

WeightedDataset Coreset::as_weighted() const {
  if (empty()) throw std::logic_error("coreset: empty coreset is not a dataset");
  return WeightedDataset(Dataset(x_, y_), gamma_);
}

// --- size and sampling ------------------------------------------------------

Index coreset_size(double mbar, double eps, double delta, Index dim, double c) {
  if (!(mbar >= 1.0) || !std::isfinite(mbar)) throw std::invalid_argument("coreset_size: mean sensitivity must be >= 1");
  if (!(eps > 0.0)) throw std::invalid_argument("coreset_size: eps must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("coreset_size: delta must lie in (0, 1)");
  if (!(c > 0.0)) throw std::invalid_argument("coreset_size: c must be positive");
  if (dim < 1) throw std::invalid_argument("coreset_size: dimension must be >= 1");
  const double m = std::ceil(c * mbar / (eps * eps) *
                             (static_cast<double>(dim + 1) * std::log(mbar) + std::log(1.0 / delta)));
  if (!(m < 9.0e18)) throw std::invalid_argument("coreset_size: size overflows");
  return std::max<Index>(1, static_cast<Index>(m));
}

AliasTable::AliasTable(const Vector& p) : prob_(static_cast<std::size_t>(p.size())), alias_(static_cast<std::size_t>(p.size())) {
  const auto n = static_cast<std::size_t>(p.size());
  if (n == 0) throw std::invalid_argument("alias table: empty distribution");
  const double total = p.sum();
  if (!(total > 0.0) || (p.array() < 0.0).any()) throw std::invalid_argument("alias table: invalid probabilities");
  std::vector<double> scaled(n);
  std::vector<Index> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = p[static_cast<Index>(i)] * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<Index>(i));
  }
  while (!small.empty() && !large.empty()) {
    const Index s = small.back();
    small.pop_back();
    const Index l = large.back();
    prob_[static_cast<std::size_t>(s)] = scaled[static_cast<std::size_t>(s)];
    alias_[static_cast<std::size_t>(s)] = l;
    scaled[static_cast<std::size_t>(l)] -= 1.0 - scaled[static_cast<std::size_t>(s)];
    if (scaled[static_cast<std::size_t>(l)] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (const Index i : large) {
    prob_[static_cast<std::size_t>(i)] = 1.0;
    alias_[static_cast<std::size_t>(i)] = i;
  }
  for (const Index i : small) {  // leftovers from rounding
    prob_[static_cast<std::size_t>(i)] = 1.0;
    alias_[static_cast<std::size_t>(i)] = i;
  }
}

Index AliasTable::draw(Rng& rng) const {
  std::uniform_int_distribution<std::size_t> column(0, prob_.size() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const std::size_t i = column(rng);
  return coin(rng) < prob_[i] ? static_cast<Index>(i) : alias_[i];
}

Coreset sample_coreset(const WeightedDataset& ds, const SensitivityProfile& profile, Index m, Rng& rng) {
  if (m < 1) throw std::invalid_argument("sample_coreset: size must be >= 1");
  if (profile.bounds.size() != ds.size()) throw std::invalid_argument("sample_coreset: profile does not match dataset");
  const AliasTable table(profile.probabilities);
  std::vector<Index> counts(static_cast<std::size_t>(ds.size()), 0);
  for (Index draw = 0; draw < m; ++draw) ++counts[static_cast<std::size_t>(table.draw(rng))];

  std::vector<Index> rows;
  for (Index n = 0; n < ds.size(); ++n)
    if (counts[static_cast<std::size_t>(n)] > 0) rows.push_back(n);
  const auto size = static_cast<Index>(rows.size());
  RowMatrix x(size, ds.dim());
  Vector y(size);
  Vector gamma(size);
  const double md = static_cast<double>(m);
  for (Index i = 0; i < size; ++i) {
    const Index n = rows[static_cast<std::size_t>(i)];
    x.row(i) = ds.data().x().row(n);
    y[i] = ds.data().y()[n];
    gamma[i] = static_cast<double>(counts[static_cast<std::size_t>(n)]) * ds.weights()[n] * profile.total /
               (md * profile.bounds[n]);
  }
  CoresetMeta meta;
  meta.radius = profile.radius;
  meta.k = profile.k;
  meta.target_size = m;
  meta.source_size = ds.size();
  meta.source_weight = ds.total_weight();
  meta.mean_sensitivity = profile.mean;
  return Coreset(std::move(x), std::move(y), std::move(gamma), std::move(rows), meta);
}

Coreset build_coreset(const WeightedDataset& ds, const Clustering& cl, const SensitivityOptions& sens,
                      const BuildOptions& opts, Rng& rng) {
  if (opts.size && *opts.size < 1) throw std::invalid_argument("build_coreset: size override must be >= 1");
  const SensitivityProfile profile = sensitivity_bounds(ds, cl, sens);
  const Index m = opts.size ? *opts.size : coreset_size(profile.mean, opts.eps, opts.delta, ds.dim(), opts.c);
  Coreset cs = sample_coreset(ds, profile, m, rng);
  cs.meta().eps = opts.eps;
  cs.meta().delta = opts.delta;
  cs.meta().c = opts.c;
  return cs;
}

Coreset cluster_and_build(const WeightedDataset& ds, const CompressOptions& opts, Rng& rng) {
  ClusterOptions copts;
  copts.k = std::min(opts.k, ds.size());
  copts.lloyd_iters = opts.lloyd_iters;
  copts.subsample = opts.subsample;
  copts.restarts = opts.restarts;
  copts.workers = opts.workers;
  const Clustering cl = cluster(ds, copts, rng);
  SensitivityOptions sens;
  sens.radius = opts.radius ? *opts.radius : choose_radius(cl.score, opts.a);
  sens.mode = opts.mode;
  sens.workers = opts.workers;
  BuildOptions bopts{opts.eps_prime, opts.delta, opts.c, opts.target_size};
  return build_coreset(ds, cl, sens, bopts, rng);
}

// --- merge / compress -------------------------------------------------------

double compose_eps(double eps, double eps_prime) noexcept { return (1.0 + eps) * (1.0 + eps_prime) - 1.0; }

Coreset merge(const Coreset& a, const Coreset& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("merge: dimension mismatch (" + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  if (b.empty() && b.meta().source_weight == 0.0) return a;
  if (a.empty() && a.meta().source_weight == 0.0) return b;
  RowMatrix x(a.size() + b.size(), a.dim());
  x << a.x(), b.x();
  Vector y(a.size() + b.size());
  y << a.y(), b.y();
  Vector gamma(a.size() + b.size());
  gamma << a.gamma(), b.gamma();
  std::vector<Index> source = a.source_index();
  source.insert(source.end(), b.source_index().begin(), b.source_index().end());
  CoresetMeta meta = a.meta();
  meta.eps = std::max(a.meta().eps, b.meta().eps);
  meta.delta = std::max(a.meta().delta, b.meta().delta);
  meta.k = std::max(a.meta().k, b.meta().k);
  meta.target_size = std::max(a.meta().target_size, b.meta().target_size);
  meta.source_size = a.meta().source_size + b.meta().source_size;
  meta.source_weight = a.meta().source_weight + b.meta().source_weight;
  meta.level = std::max(a.meta().level, b.meta().level);
  return Coreset(std::move(x), std::move(y), std::move(gamma), std::move(source), meta);
}

Coreset compress(const Coreset& cs, const CompressOptions& opts, Rng& rng) {
  if (cs.empty()) throw std::invalid_argument("compress: empty coreset");
  if (opts.target_size && cs.size() <= *opts.target_size) return cs;

  const WeightedDataset ds = cs.as_weighted();
  ClusterOptions copts;
  copts.k = std::min(opts.k, ds.size());
  copts.lloyd_iters = opts.lloyd_iters;
  copts.subsample = opts.subsample;
  copts.restarts = opts.restarts;
  copts.workers = opts.workers;
  const Clustering cl = cluster(ds, copts, rng);
  SensitivityOptions sens;
  sens.radius = opts.radius ? *opts.radius : choose_radius(cl.score, opts.a);
  sens.mode = opts.mode;
  sens.workers = opts.workers;
  const SensitivityProfile profile = sensitivity_bounds(ds, cl, sens);
  const Index m = opts.target_size ? *opts.target_size
                                   : coreset_size(profile.mean, opts.eps_prime, opts.delta, ds.dim(), opts.c);
  if (cs.size() <= m) return cs;

  Coreset out = sample_coreset(ds, profile, m, rng);
  std::vector<Index> source(out.source_index().size());
  for (std::size_t i = 0; i < source.size(); ++i)
    source[i] = cs.source_index()[static_cast<std::size_t>(out.source_index()[i])];
  CoresetMeta meta = cs.meta();
  meta.eps = compose_eps(cs.meta().eps, opts.eps_prime);
  meta.delta = opts.delta;
  meta.c = opts.c;
  meta.radius = profile.radius;
  meta.k = profile.k;
  meta.target_size = m;
  meta.mean_sensitivity = profile.mean;
  return Coreset(out.x(), out.y(), out.gamma(), std::move(source), meta);
}

// --- streaming ---------------------------------------------------------------

StreamState::StreamState(CompressOptions opts, std::uint64_t root_seed) : opts_(std::move(opts)), root_(root_seed) {}

std::uint64_t StreamState::block_seed(Index block_index) const noexcept {
  return derive_seed(root_, static_cast<std::uint64_t>(block_index));
}

Coreset StreamState::build_block(const Dataset& block, Index block_index) const {
  Rng rng(block_seed(block_index));
  Coreset cs = cluster_and_build(WeightedDataset(block), opts_, rng);
  cs.meta().seed = block_seed(block_index);
  cs.meta().level = 0;
  return cs;
}

Coreset StreamState::compress_next(const Coreset& cs) {
  Rng rng(derive_seed(derive_seed(root_, "compress"), static_cast<std::uint64_t>(compressions_++)));
  return compress(cs, opts_, rng);
}

void StreamState::insert(const Dataset& block) { push(build_block(block, blocks_)); }

void StreamState::push(Coreset level0) {
  level0.offset_sources(rows_);
  rows_ += level0.meta().source_size;
  ++blocks_;
  stack_.emplace_back(0, std::move(level0));
  while (stack_.size() >= 2 && stack_[stack_.size() - 1].first == stack_[stack_.size() - 2].first) {
    auto [level, top] = std::move(stack_.back());
    stack_.pop_back();
    Coreset below = std::move(stack_.back().second);
    stack_.pop_back();
    Coreset next = compress_next(merge(below, top));
    next.meta().level = level + 1;
    stack_.emplace_back(level + 1, std::move(next));
  }
  max_depth_ = std::max(max_depth_, stack_.size());
}

Coreset StreamState::finalize() {
  if (stack_.empty()) throw std::logic_error("stream: no blocks inserted");
  if (stack_.size() == 1) return stack_.front().second;
  Coreset merged = stack_.front().second;
  int level = stack_.front().first;
  for (std::size_t i = 1; i < stack_.size(); ++i) merged = merge(merged, stack_[i].second);
  Coreset out = compress_next(merged);
  out.meta().level = out.size() < merged.size() ? level + 1 : level;
  return out;
}

Coreset stream_blocks(const std::vector<Dataset>& blocks, const CompressOptions& opts, std::uint64_t root_seed,
                      unsigned workers, std::size_t* max_depth) {
  StreamState state(opts, root_seed);
  std::vector<std::optional<Coreset>> built(blocks.size());
  parallel_tasks(blocks.size(), workers,
                 [&](std::size_t i) { built[i] = state.build_block(blocks[i], static_cast<Index>(i)); });
  for (auto& cs : built) state.push(std::move(*cs));
  if (max_depth) *max_depth = state.max_depth();
  return state.finalize();
}

// --- io -----------------------------------------------------------------------

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::filesystem::path sidecar(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void write_coreset_csv(std::ostream& out, const Coreset& cs) {
  out << "gamma,label";
  for (Index d = 0; d < cs.dim(); ++d) out << ",f" << d;
  out << '\n';
  for (Index i = 0; i < cs.size(); ++i) {
    out << fmt17(cs.gamma()[i]) << ',' << (cs.y()[i] > 0 ? "1" : "-1");
    for (Index d = 0; d < cs.dim(); ++d) out << ',' << fmt17(cs.x()(i, d));
    out << '\n';
  }
}

void write_coreset(const std::filesystem::path& csv_path, const Coreset& cs) {
  {
    std::ofstream out(csv_path);
    if (!out) throw Error("cannot write " + csv_path.string());
    write_coreset_csv(out, cs);
  }
  nlohmann::json j = to_json(cs.meta());
  j["size"] = cs.size();
  j["dim"] = cs.dim();
  j["source_index"] = cs.source_index();
  std::ofstream side(sidecar(csv_path));
  if (!side) throw Error("cannot write " + sidecar(csv_path).string());
  side << j.dump(2) << '\n';
}

Coreset read_coreset(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("gamma,label", 0) != 0)
    throw ParseError(csv_path.string(), 1, "expected header gamma,label,f0,...");
  const auto dim = static_cast<Index>(std::count(line.begin(), line.end(), ',')) - 1;
  if (dim < 1) throw ParseError(csv_path.string(), 1, "no feature columns");
  std::vector<double> gamma, labels, values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::size_t start = 0;
    while (start <= line.size()) {
      auto end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      double v = 0.0;
      const auto [p, ec] = std::from_chars(line.data() + start, line.data() + end, v);
      if (ec != std::errc{} || p != line.data() + end) throw ParseError(csv_path.string(), lineno, "bad number");
      cells.push_back(v);
      start = end + 1;
    }
    if (static_cast<Index>(cells.size()) != dim + 2) throw ParseError(csv_path.string(), lineno, "wrong field count");
    gamma.push_back(cells[0]);
    labels.push_back(cells[1] > 0 ? 1.0 : -1.0);
    values.insert(values.end(), cells.begin() + 2, cells.end());
  }
  const auto n = static_cast<Index>(gamma.size());
  CoresetMeta meta;
  std::vector<Index> source(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) source[static_cast<std::size_t>(i)] = i;
  if (std::ifstream side(sidecar(csv_path)); side) {
    const auto j = nlohmann::json::parse(side);
    meta = meta_from_json(j);
    if (j.contains("source_index") && j["source_index"].size() == static_cast<std::size_t>(n))
      source = j["source_index"].get<std::vector<Index>>();
  }
  if (n == 0) {
    Coreset empty(dim);
    empty.meta() = meta;
    return empty;
  }
  return Coreset(Eigen::Map<RowMatrix>(values.data(), n, dim), Eigen::Map<Vector>(labels.data(), n),
                 Eigen::Map<Vector>(gamma.data(), n), std::move(source), meta);
}

double log_likelihood(const Coreset& cs, const Vector& theta) {
  if (theta.size() != cs.dim()) throw std::invalid_argument("log_likelihood: theta has wrong length");
  double total = 0.0;
  for (Index i = 0; i < cs.size(); ++i) total -= cs.gamma()[i] * phi(cs.y()[i] * cs.x().row(i).dot(theta));
  return total;
}

}  // namespace lrcoreset
