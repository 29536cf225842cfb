#include "lrcoreset/pipeline.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "lrcoreset/clustering.hpp"
#include "lrcoreset/parallel.hpp"

namespace lrcoreset {

// --- config -----------------------------------------------------------------

namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + field + " " + what);
}

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null())
    out.reset();
  else
    out = j.at(key).get<T>();
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw std::invalid_argument("config: unknown key " + where + item.key());
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void PipelineConfig::validate() const {
  require(data.source == "synthetic" || data.source == "file", "data.source", "must be synthetic or file");
  if (data.source == "synthetic") {
    SyntheticSpec::from_name(data.synthetic);
    require(data.n >= 1, "data.n", "must be >= 1");
  } else {
    require(!data.path.empty(), "data.path", "is required for a file source");
  }
  require(data.n_test >= 0, "data.n_test", "must be >= 0");
  if (data.dim) require(*data.dim >= 1, "data.dim", "must be >= 1");
  require(method == "coreset" || method == "uniform" || method == "full", "method", "must be coreset, uniform or full");
  require(k >= 1, "k", "must be >= 1");
  require(lloyd_iters >= 0, "lloyd_iters", "must be >= 0");
  require(subsample >= 0, "subsample", "must be >= 0");
  require(restarts >= 1, "restarts", "must be >= 1");
  require(a > 0.0, "a", "must be positive");
  if (radius) require(*radius > 0.0, "radius", "must be positive");
  require(eps > 0.0, "eps", "must be positive");
  require(delta > 0.0 && delta < 1.0, "delta", "must lie in (0, 1)");
  require(c > 0.0, "c", "must be positive");
  if (size) require(*size >= 1, "size", "must be >= 1");
  require(method != "uniform" || size.has_value(), "size", "is required for the uniform method");
  require(iterations >= 2 && iterations % 2 == 0, "iterations", "must be even and >= 2");
  if (step0) require(*step0 > 0.0, "step0", "must be positive");
  require(prior_scale > 0.0, "prior_scale", "must be positive");
  require(chains >= 1, "chains", "must be >= 1");
  require(grid_size >= 1, "grid_size", "must be >= 1");
  if (reference_iterations)
    require(*reference_iterations >= 2 && *reference_iterations % 2 == 0, "reference_iterations",
            "must be even and >= 2");
  require(!output.empty(), "output", "must not be empty");
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"data",
           {{"source", data.source},
            {"synthetic", data.synthetic},
            {"n", data.n},
            {"n_test", data.n_test},
            {"path", data.path},
            {"dim", opt_json(data.dim)}}},
          {"method", method},
          {"k", k},
          {"lloyd_iters", lloyd_iters},
          {"subsample", subsample},
          {"restarts", restarts},
          {"a", a},
          {"radius", opt_json(radius)},
          {"mode", lrcoreset::to_string(mode)},
          {"eps", eps},
          {"delta", delta},
          {"c", c},
          {"size", opt_json(size)},
          {"iterations", iterations},
          {"step0", opt_json(step0)},
          {"prior_scale", prior_scale},
          {"chains", chains},
          {"grid_size", grid_size},
          {"reference", reference},
          {"reference_iterations", opt_json(reference_iterations)},
          {"seed", seed},
          {"workers", workers},
          {"output", output}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  reject_unknown(j,
                 {"data", "method", "k", "lloyd_iters", "subsample", "restarts", "a", "radius", "mode", "eps", "delta", "c", "size",
                  "iterations", "step0", "prior_scale", "chains", "grid_size", "reference", "reference_iterations",
                  "seed", "workers", "output"},
                 "");
  PipelineConfig cfg;
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      reject_unknown(d, {"source", "synthetic", "n", "n_test", "path", "dim"}, "data.");
      read(d, "source", cfg.data.source);
      read(d, "synthetic", cfg.data.synthetic);
      read(d, "n", cfg.data.n);
      read(d, "n_test", cfg.data.n_test);
      read(d, "path", cfg.data.path);
      read_opt(d, "dim", cfg.data.dim);
    }
    read(j, "method", cfg.method);
    read(j, "k", cfg.k);
    read(j, "lloyd_iters", cfg.lloyd_iters);
    read(j, "subsample", cfg.subsample);
    read(j, "restarts", cfg.restarts);
    read(j, "a", cfg.a);
    read_opt(j, "radius", cfg.radius);
    if (j.contains("mode")) cfg.mode = center_mode_from_string(j.at("mode").get<std::string>());
    read(j, "eps", cfg.eps);
    read(j, "delta", cfg.delta);
    read(j, "c", cfg.c);
    read_opt(j, "size", cfg.size);
    read(j, "iterations", cfg.iterations);
    read_opt(j, "step0", cfg.step0);
    read(j, "prior_scale", cfg.prior_scale);
    read(j, "chains", cfg.chains);
    read(j, "grid_size", cfg.grid_size);
    read(j, "reference", cfg.reference);
    read_opt(j, "reference_iterations", cfg.reference_iterations);
    read(j, "seed", cfg.seed);
    read(j, "workers", cfg.workers);
    read(j, "output", cfg.output);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return from_json(j);
}

// --- data and hashing -------------------------------------------------------

Split load_data(const PipelineConfig& cfg) {
  Rng split_rng(derive_seed(cfg.seed, "split"));
  if (cfg.data.source == "file") {
    const Dataset ds = read_dataset(cfg.data.path, cfg.data.dim);
    return split(ds, cfg.data.n_test, split_rng);
  }
  Split out{load_training_source(cfg), std::nullopt};
  if (cfg.data.n_test > 0) {
    SyntheticSpec spec = SyntheticSpec::from_name(cfg.data.synthetic);
    spec.seed = derive_seed(cfg.seed, "test");
    out.test = generate(spec, cfg.data.n_test);
  }
  return out;
}

Dataset load_training_source(const PipelineConfig& cfg) {
  if (cfg.data.source == "file") return read_dataset(cfg.data.path, cfg.data.dim);
  SyntheticSpec spec = SyntheticSpec::from_name(cfg.data.synthetic);
  spec.seed = derive_seed(cfg.seed, "data");
  return generate(spec, cfg.data.n);
}

std::string git_blob_sha1(const std::string& bytes) {
  const std::string blob = "blob " + std::to_string(bytes.size()) + '\0' + bytes;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) throw Error("SHA-1 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string git_blob_sha1_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_sha1(bytes);
}

// --- building blocks ----------------------------------------------------------

SubsetResult build_subset(const PipelineConfig& cfg, const Dataset& train, std::uint64_t seed) {
  Rng rng(seed);
  if (cfg.method == "full") {
    const Index n = train.size();
    std::vector<Index> all(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    CoresetMeta meta;
    meta.method = "full";
    meta.source_size = n;
    meta.source_weight = static_cast<double>(n);
    meta.seed = seed;
    return {Coreset(train.x(), train.y(), Vector::Ones(n), std::move(all), meta), std::nullopt};
  }
  if (cfg.method == "uniform") {
    SubsetResult out{Coreset(train.dim()), std::nullopt};
    const auto start = std::chrono::steady_clock::now();
    out.coreset = uniform_baseline(train, *cfg.size, rng);
    out.sampling_seconds = seconds_since(start);
    out.coreset.meta().seed = seed;
    return out;
  }
  SubsetResult out{Coreset(train.dim()), std::nullopt};
  const WeightedDataset ds(train);
  auto start = std::chrono::steady_clock::now();
  ClusterOptions copts;
  copts.k = std::min(cfg.k, train.size());
  copts.lloyd_iters = cfg.lloyd_iters;
  copts.subsample = cfg.subsample;
  copts.restarts = cfg.restarts;
  copts.workers = cfg.workers;
  const Clustering cl = in_phase("cluster", [&] { return cluster(ds, copts, rng); });
  out.cluster_seconds = seconds_since(start);

  start = std::chrono::steady_clock::now();
  SensitivityOptions sens;
  sens.mode = cfg.mode;
  sens.workers = cfg.workers;
  out.profile = in_phase("sensitivity", [&] {
    sens.radius = cfg.radius ? *cfg.radius : choose_radius(cl.score, cfg.a);
    return sensitivity_bounds(ds, cl, sens);
  });
  out.sensitivity_seconds = seconds_since(start);

  start = std::chrono::steady_clock::now();
  out.coreset = in_phase("build", [&] {
    const Index m = cfg.size ? *cfg.size : coreset_size(out.profile->mean, cfg.eps, cfg.delta, train.dim(), cfg.c);
    Coreset cs = sample_coreset(ds, *out.profile, m, rng);
    CoresetMeta& meta = cs.meta();
    meta.eps = cfg.eps;
    meta.delta = cfg.delta;
    meta.radius = sens.radius;
    meta.k = cl.k();
    meta.c = cfg.c;
    meta.seed = seed;
    return cs;
  });
  out.sampling_seconds = seconds_since(start);
  return out;
}

MalaOptions mala_options(const PipelineConfig& cfg, std::optional<Index> iterations) {
  MalaOptions opts;
  opts.iterations = iterations ? *iterations : cfg.iterations;
  opts.step0 = cfg.step0;
  return opts;
}

RowMatrix run_chains(const LogPosterior& lp, const MalaOptions& opts, std::uint64_t seed, Index chains, unsigned workers,
                     std::vector<PosteriorChain>* out) {
  std::vector<PosteriorChain> runs = mala_chains(lp, opts, seed, chains, workers);
  Index rows = 0;
  for (const auto& c : runs) rows += c.samples.rows();
  RowMatrix samples(rows, lp.dim());
  Index at = 0;
  for (const auto& c : runs) {
    samples.middleRows(at, c.samples.rows()) = c.samples;
    at += c.samples.rows();
  }
  if (out) *out = std::move(runs);
  return samples;
}

double PhaseTimings::construction_fraction() const {
  const double total = construction() + sample;
  return total > 0.0 ? construction() / total : 0.0;
}

nlohmann::json PhaseTimings::to_json() const {
  return {{"ingest", ingest},
          {"cluster", cluster},
          {"sensitivity", sensitivity},
          {"build", build},
          {"construction", construction()},
          {"sample", sample},
          {"reference", reference},
          {"eval", eval},
          {"construction_fraction", construction_fraction()}};
}

// --- pipeline ---------------------------------------------------------------

namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

RunResult run_pipeline(const PipelineConfig& cfg) {
  in_phase("config", [&] { cfg.validate(); });
  RunResult result;
  result.dir = cfg.output;
  in_phase("config", [&] {
    std::filesystem::create_directories(result.dir);
    write_json(result.dir / "config.json", cfg.to_json());
  });
  PhaseTimings& t = result.timings;

  auto start = std::chrono::steady_clock::now();
  const Split data = in_phase("ingest", [&] { return load_data(cfg); });
  t.ingest = seconds_since(start);

  const SubsetResult subset = build_subset(cfg, data.train, derive_seed(cfg.seed, "build"));
  t.cluster = subset.cluster_seconds;
  t.sensitivity = subset.sensitivity_seconds;
  t.build = subset.sampling_seconds;
  result.subset_size = subset.coreset.size();
  in_phase("build", [&] { write_coreset(result.dir / "coreset.csv", subset.coreset); });

  start = std::chrono::steady_clock::now();
  std::vector<PosteriorChain> chains;
  const RowMatrix samples = in_phase("sample", [&] {
    const LogPosterior lp(subset.coreset.as_weighted(), cfg.prior_scale);
    MalaOptions opts = mala_options(cfg);
    if (subset.coreset.meta().radius > 0.0) opts.ball_radius = subset.coreset.meta().radius;
    return run_chains(lp, opts, derive_seed(cfg.seed, "sample"), cfg.chains, cfg.workers, &chains);
  });
  t.sample = seconds_since(start);
  in_phase("sample", [&] {
    write_chain(result.dir / "chain.csv", samples);
    nlohmann::json diag = nlohmann::json::array();
    for (const auto& c : chains) diag.push_back(c.diagnostics());
    write_json(result.dir / "diagnostics.json", diag);
  });

  std::optional<RowMatrix> reference;
  if (cfg.reference) {
    start = std::chrono::steady_clock::now();
    reference = in_phase("reference", [&] {
      const LogPosterior lp(WeightedDataset(data.train), cfg.prior_scale);
      return run_chains(lp, mala_options(cfg, cfg.reference_iterations), derive_seed(cfg.seed, "reference"), 1,
                        cfg.workers);
    });
    t.reference = seconds_since(start);
    in_phase("reference", [&] { write_chain(result.dir / "reference_chain.csv", *reference); });
  }

  start = std::chrono::steady_clock::now();
  MetricReport& metrics = result.metrics;
  in_phase("eval", [&] {
    metrics.m = subset.coreset.meta().target_size > 0 ? subset.coreset.meta().target_size : subset.coreset.size();
    metrics.method = cfg.method;
    metrics.seed = cfg.seed;
    if (reference) metrics.mmd = chain_mmd(*reference, samples, 3, cfg.workers);
    if (data.test) metrics.neg_test_ll = neg_test_log_likelihood(samples, *data.test, cfg.workers);
    Rng grid_rng(derive_seed(cfg.seed, "eval"));
    const double radius = subset.coreset.meta().radius > 0.0 ? subset.coreset.meta().radius
                                                              : (cfg.radius ? *cfg.radius : 3.0);
    metrics.grid_rel_err_max = verify_epsilon_coreset(data.train, subset.coreset, radius, cfg.grid_size, grid_rng).max_rel_err;
    nlohmann::json j = metrics.to_json();
    if (subset.profile) j["sensitivity"] = summary_json(*subset.profile);
    std::vector<double> acc;
    for (const auto& c : chains) acc.push_back(c.acceptance_rate);
    j["acceptance_rate"] = acc;
    write_json(result.dir / "metrics.json", j);
  });
  t.eval = seconds_since(start);

  in_phase("eval", [&] {
    write_json(result.dir / "timings.json", t.to_json());
    nlohmann::json manifest;
    manifest["config_sha1"] = git_blob_sha1(cfg.to_json().dump());
    if (cfg.data.source == "file")
      manifest["inputs"] = {{{"path", cfg.data.path}, {"git_sha1", git_blob_sha1_file(cfg.data.path)}}};
    else
      manifest["inputs"] = nlohmann::json::array({{{"synthetic", cfg.data.synthetic},
                                                   {"seed", derive_seed(cfg.seed, "data")},
                                                   {"rows", cfg.data.n},
                                                   {"test_seed", derive_seed(cfg.seed, "test")},
                                                   {"test_rows", cfg.data.n_test}}});
    nlohmann::json files = nlohmann::json::object();
    for (const char* f : {"config.json", "coreset.csv", "chain.csv", "metrics.json"})
      files[f] = git_blob_sha1_file(result.dir / f);
    manifest["outputs"] = files;
    write_json(result.dir / "manifest.json", manifest);
  });
  return result;
}

// --- sweeps -----------------------------------------------------------------

std::vector<ComparisonRow> run_comparison(const PipelineConfig& cfg, const std::vector<Index>& sizes, Index seeds) {
  if (sizes.empty()) throw std::invalid_argument("run_comparison: empty size grid");
  if (seeds < 1) throw std::invalid_argument("run_comparison: need at least one seed");
  in_phase("config", [&] { cfg.validate(); });
  const Split data = in_phase("ingest", [&] { return load_data(cfg); });
  if (!data.test) throw PhaseError("ingest", "comparison needs a test set (data.n_test > 0)");
  const RowMatrix reference = in_phase("reference", [&] {
    const LogPosterior lp(WeightedDataset(data.train), cfg.prior_scale);
    return run_chains(lp, mala_options(cfg, cfg.reference_iterations), derive_seed(cfg.seed, "reference"), 1,
                      cfg.workers);
  });

  const std::vector<std::string> methods = {"coreset", "uniform"};
  std::vector<ComparisonRow> rows;
  for (const auto& method : methods)
    for (Index m : sizes)
      for (Index s = 0; s < seeds; ++s) rows.push_back({method, m, s, 0.0, 0.0});

  // Replicates run in parallel; each one is single-threaded.
  parallel_tasks(rows.size(), cfg.workers, [&](std::size_t i) {
    ComparisonRow& row = rows[i];
    PipelineConfig rc = cfg;
    rc.method = row.method;
    rc.size = row.m;
    rc.workers = 1;
    const std::uint64_t rep = derive_seed(derive_seed(cfg.seed, "replicate"), static_cast<std::uint64_t>(row.seed));
    const SubsetResult subset = build_subset(rc, data.train, derive_seed(rep, row.method));
    const RowMatrix samples = in_phase("sample", [&] {
      const LogPosterior lp(subset.coreset.as_weighted(), rc.prior_scale);
      return run_chains(lp, mala_options(rc), derive_seed(rep, "sample"), rc.chains, 1);
    });
    in_phase("eval", [&] {
      row.mmd = chain_mmd(reference, samples);
      row.neg_test_ll = neg_test_log_likelihood(samples, *data.test);
    });
  });
  return rows;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "method,M,seed,mmd,neg_test_ll\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.mmd, r.neg_test_ll);
    out << r.method << ',' << r.m << ',' << r.seed << ',' << buf << '\n';
  }
}

std::vector<ScalingRow> run_sensitivity_scaling(const PipelineConfig& cfg, const std::vector<Index>& n_grid,
                                                const std::vector<double>& r_grid, const std::vector<Index>& k_grid) {
  if (n_grid.empty() || r_grid.empty() || k_grid.empty()) throw std::invalid_argument("scaling: grids must be nonempty");
  for (double r : r_grid)
    if (!(r > 0.0)) throw std::invalid_argument("scaling: radii must be positive");
  const Index n_max = *std::max_element(n_grid.begin(), n_grid.end());
  const Dataset full = in_phase("ingest", [&] {
    PipelineConfig sized = cfg;
    sized.data.n = std::max(cfg.data.n, n_max);
    return load_training_source(sized);
  });
  std::vector<ScalingRow> rows;
  for (Index n : n_grid) {
    if (n < 1 || n > full.size()) throw PhaseError("ingest", "N = " + std::to_string(n) + " exceeds the data size");
    std::vector<Index> head(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) head[static_cast<std::size_t>(i)] = i;
    const WeightedDataset ds(full.subset(head));
    for (Index k : k_grid) {
      Rng rng(derive_seed(cfg.seed, "cluster"));
      ClusterOptions copts;
      copts.k = std::min(k, n);
      copts.lloyd_iters = cfg.lloyd_iters;
      copts.subsample = cfg.subsample;
      copts.restarts = cfg.restarts;
      copts.workers = cfg.workers;
      const Clustering cl = in_phase("cluster", [&] { return cluster(ds, copts, rng); });
      for (double r : r_grid) {
        SensitivityOptions sens;
        sens.radius = r;
        sens.mode = cfg.mode;
        sens.workers = cfg.workers;
        const auto profile = in_phase("sensitivity", [&] { return sensitivity_bounds(ds, cl, sens); });
        rows.push_back({n, r, k, profile.mean, cl.score});
      }
    }
  }
  return rows;
}

void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows) {
  out << "N,R,k,mbar,score\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%lld,%.17g,%.17g", r.radius, static_cast<long long>(r.k), r.mbar, r.score);
    out << r.n << ',' << buf << '\n';
  }
}

}  // namespace lrcoreset
