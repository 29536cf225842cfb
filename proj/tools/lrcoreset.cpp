// Command-line front end: one subcommand per pipeline stage plus the sweeps.

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lrcoreset/clustering.hpp"
#include "lrcoreset/coreset.hpp"
#include "lrcoreset/data.hpp"
#include "lrcoreset/evaluation.hpp"
#include "lrcoreset/inference.hpp"
#include "lrcoreset/pipeline.hpp"
#include "lrcoreset/sensitivity.hpp"

using namespace lrcoreset;

namespace {

// Flags are recorded while parsing and applied on top of --config afterwards,
// so a flag always wins over the file regardless of argument order.
class Overrides {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& desc,
                   std::function<void(PipelineConfig&, const T&)> set) {
    return app->add_option_function<T>(
        name, [this, set](const T& v) { fns_.push_back([set, v](PipelineConfig& c) { set(c, v); }); }, desc);
  }
  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& desc,
                    std::function<void(PipelineConfig&)> set) {
    return app->add_flag_callback(name, [this, set] { fns_.push_back(set); }, desc);
  }

  PipelineConfig resolve(const std::string& config_path) const {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);
    for (const auto& fn : fns_) fn(cfg);
    cfg.validate();
    return cfg;
  }

 private:
  std::vector<std::function<void(PipelineConfig&)>> fns_;
};

struct Command {
  CLI::App* app = nullptr;
  std::string config;
  Overrides over;
};

void data_flags(Command& c) {
  c.app->add_option("--config", c.config, "JSON config; flags override its values")->check(CLI::ExistingFile);
  c.over.add<std::string>(c.app, "--data", "dataset file (.csv with a label column, or svmlight)",
                          [](PipelineConfig& p, const std::string& v) {
                            p.data.source = "file";
                            p.data.path = v;
                          });
  c.over.add<std::string>(c.app, "--synthetic", "binary5 | binary10 | mixture", [](PipelineConfig& p, const std::string& v) {
    p.data.source = "synthetic";
    p.data.synthetic = v;
  });
  c.over.add<Index>(c.app, "--n", "synthetic training rows", [](PipelineConfig& p, const Index& v) { p.data.n = v; });
  c.over.add<Index>(c.app, "--dim", "svmlight feature count", [](PipelineConfig& p, const Index& v) { p.data.dim = v; });
  c.over.add<std::uint64_t>(c.app, "--seed", "root seed", [](PipelineConfig& p, const std::uint64_t& v) { p.seed = v; });
  c.over.add<unsigned>(c.app, "--workers", "worker threads (0 = all cores)",
                       [](PipelineConfig& p, const unsigned& v) { p.workers = v; });
}

void cluster_flags(Command& c) {
  c.over.add<Index>(c.app, "--k", "number of clusters", [](PipelineConfig& p, const Index& v) { p.k = v; });
  c.over.add<Index>(c.app, "--lloyd-iters", "Lloyd iterations after seeding",
                    [](PipelineConfig& p, const Index& v) { p.lloyd_iters = v; });
  c.over.add<Index>(c.app, "--subsample", "k-means++ seeding subsample size (0 = default rule)",
                    [](PipelineConfig& p, const Index& v) { p.subsample = v; });
  c.over.add<Index>(c.app, "--restarts", "k-means++ restarts; the lowest subsample objective is kept",
                    [](PipelineConfig& p, const Index& v) { p.restarts = v; });
}

void build_flags(Command& c) {
  cluster_flags(c);
  c.over.add<double>(c.app, "--R", "parameter-ball radius (default a / sqrt(I))",
                     [](PipelineConfig& p, const double& v) { p.radius = v; });
  c.over.add<double>(c.app, "--a", "radius constant", [](PipelineConfig& p, const double& v) { p.a = v; });
  c.over.add<double>(c.app, "--eps", "target error", [](PipelineConfig& p, const double& v) { p.eps = v; });
  c.over.add<double>(c.app, "--delta", "failure probability", [](PipelineConfig& p, const double& v) { p.delta = v; });
  c.over.add<double>(c.app, "--c", "size-formula constant", [](PipelineConfig& p, const double& v) { p.c = v; });
  c.over.add<Index>(c.app, "--size", "coreset size M (overrides the formula)",
                    [](PipelineConfig& p, const Index& v) { p.size = v; });
  c.over.add<std::string>(c.app, "--mode", "exact | centers",
                          [](PipelineConfig& p, const std::string& v) { p.mode = center_mode_from_string(v); });
}

void sample_flags(Command& c) {
  c.over.add<Index>(c.app, "--iters", "MALA iterations T (even)", [](PipelineConfig& p, const Index& v) { p.iterations = v; });
  c.over.add<double>(c.app, "--step0", "initial step size", [](PipelineConfig& p, const double& v) { p.step0 = v; });
  c.over.add<double>(c.app, "--prior-scale", "Gaussian prior scale",
                     [](PipelineConfig& p, const double& v) { p.prior_scale = v; });
  c.over.add<Index>(c.app, "--chains", "independent chains", [](PipelineConfig& p, const Index& v) { p.chains = v; });
}

void eval_flags(Command& c) {
  c.over.add<Index>(c.app, "--n-test", "held-out rows", [](PipelineConfig& p, const Index& v) { p.data.n_test = v; });
  c.over.add<Index>(c.app, "--grid-size", "random parameters in the epsilon-coreset check",
                    [](PipelineConfig& p, const Index& v) { p.grid_size = v; });
  c.over.add<Index>(c.app, "--reference-iters", "iterations of the full-data reference chain",
                    [](PipelineConfig& p, const Index& v) { p.reference_iterations = v; });
  c.over.flag(c.app, "--no-reference", "skip the full-data reference chain", [](PipelineConfig& p) { p.reference = false; });
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

CompressOptions compress_options(const PipelineConfig& cfg) {
  CompressOptions o;
  o.k = cfg.k;
  o.lloyd_iters = cfg.lloyd_iters;
  o.subsample = cfg.subsample;
  o.restarts = cfg.restarts;
  o.a = cfg.a;
  o.radius = cfg.radius;
  o.eps_prime = cfg.eps;
  o.delta = cfg.delta;
  o.c = cfg.c;
  o.target_size = cfg.size;
  o.mode = cfg.mode;
  o.workers = cfg.workers;
  return o;
}

std::filesystem::path sidecar_json(const std::string& csv) {
  std::filesystem::path p(csv);
  p.replace_extension(".json");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coresets for Bayesian logistic regression"};
  app.require_subcommand(1);

  // synth
  Command synth{app.add_subcommand("synth", "write a synthetic dataset")};
  std::string synth_out;
  data_flags(synth);
  synth.app->add_option("--out", synth_out, "output file (.csv or svmlight)")->required();

  // cluster
  Command clus{app.add_subcommand("cluster", "k-means++ seeding plus Lloyd on the Z rows")};
  std::string clus_out;
  data_flags(clus);
  cluster_flags(clus);
  clus.app->add_option("--out", clus_out, "clustering JSON (default stdout)");

  // build
  Command build{app.add_subcommand("build", "sensitivity-sampled coreset")};
  std::string build_out;
  data_flags(build);
  build_flags(build);
  build.app->add_option("--out", build_out, "coreset CSV (meta in a .json sidecar)")->required();

  // stream
  Command stream{app.add_subcommand("stream", "merge/compress tree over fixed-size blocks")};
  std::string stream_out;
  Index block_size = 0;
  data_flags(stream);
  build_flags(stream);
  stream.app->add_option("--block-size", block_size, "rows per block")->required()->check(CLI::PositiveNumber);
  stream.over.add<double>(stream.app, "--eps-prime", "per-level error", [](PipelineConfig& p, const double& v) { p.eps = v; });
  stream.app->add_option("--out", stream_out, "coreset CSV (meta in a .json sidecar)")->required();

  // sample
  Command samp{app.add_subcommand("sample", "adaptive MALA on a dataset or a stored coreset")};
  std::string samp_out, samp_coreset;
  data_flags(samp);
  sample_flags(samp);
  samp.app->add_option("--coreset", samp_coreset, "coreset CSV to sample from instead of the data")
      ->check(CLI::ExistingFile);
  samp.app->add_option("--out", samp_out, "chain CSV (diagnostics in a .json sidecar)")->required();

  // eval
  Command ev{app.add_subcommand("eval", "MMD and test log-likelihood of a chain")};
  std::string ev_ref, ev_chain, ev_test, ev_out, ev_method = "coreset";
  Index ev_m = 0;
  std::uint64_t ev_seed = 0;
  ev.app->add_option("--reference", ev_ref, "reference chain CSV")->check(CLI::ExistingFile);
  ev.app->add_option("--chain", ev_chain, "chain CSV to evaluate")->required()->check(CLI::ExistingFile);
  ev.app->add_option("--test", ev_test, "test dataset (.csv or svmlight)")->check(CLI::ExistingFile);
  ev.app->add_option("--method", ev_method, "label recorded in the report");
  ev.app->add_option("--M", ev_m, "subset size recorded in the report");
  ev.app->add_option("--seed", ev_seed, "seed recorded in the report");
  ev.app->add_option("--out", ev_out, "metrics JSON (default stdout)");

  // compare
  Command cmp{app.add_subcommand("compare", "coreset vs uniform subsampling over sizes and seeds")};
  std::vector<Index> cmp_sizes{100, 500, 1000};
  Index cmp_seeds = 20;
  std::string cmp_out;
  data_flags(cmp);
  build_flags(cmp);
  sample_flags(cmp);
  eval_flags(cmp);
  cmp.app->add_option("--sizes", cmp_sizes, "subset sizes M")->delimiter(',');
  cmp.app->add_option("--seeds", cmp_seeds, "replicates per (method, M)")->check(CLI::PositiveNumber);
  cmp.app->add_option("--out", cmp_out, "tidy CSV: method,M,seed,mmd,neg_test_ll")->required();

  // scaling
  Command sc{app.add_subcommand("scaling", "mean sensitivity over an (N, R, k) grid")};
  std::vector<Index> sc_n{1000, 10000, 100000}, sc_k{6};
  std::vector<double> sc_r{3.0};
  std::string sc_out;
  data_flags(sc);
  cluster_flags(sc);
  sc.over.add<std::string>(sc.app, "--mode", "exact | centers",
                           [](PipelineConfig& p, const std::string& v) { p.mode = center_mode_from_string(v); });
  sc.app->add_option("--N", sc_n, "dataset sizes")->delimiter(',');
  sc.app->add_option("--R", sc_r, "radii")->delimiter(',');
  sc.app->add_option("--ks", sc_k, "cluster counts")->delimiter(',');
  sc.app->add_option("--out", sc_out, "CSV: N,R,k,mbar,score")->required();

  // run
  Command run{app.add_subcommand("run", "ingest, cluster, sensitivity, build, sample, eval")};
  data_flags(run);
  build_flags(run);
  sample_flags(run);
  eval_flags(run);
  run.over.add<std::string>(run.app, "--method", "coreset | uniform | full",
                            [](PipelineConfig& p, const std::string& v) { p.method = v; });
  run.over.add<std::string>(run.app, "--out", "run directory", [](PipelineConfig& p, const std::string& v) { p.output = v; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth.app) {
      const PipelineConfig cfg = in_phase("config", [&] { return synth.over.resolve(synth.config); });
      const Dataset ds = in_phase("ingest", [&] { return load_training_source(cfg); });
      in_phase("write", [&] {
        std::ofstream out(synth_out);
        if (!out) throw Error("cannot write " + synth_out);
        if (std::filesystem::path(synth_out).extension() == ".csv")
          write_csv(out, ds);
        else
          write_svmlight(out, ds);
      });
    } else if (*clus.app) {
      const PipelineConfig cfg = in_phase("config", [&] { return clus.over.resolve(clus.config); });
      const WeightedDataset ds(in_phase("ingest", [&] { return load_training_source(cfg); }));
      const Clustering cl = in_phase("cluster", [&] {
        Rng rng(derive_seed(derive_seed(cfg.seed, "build"), "cluster"));
        ClusterOptions o{std::min(cfg.k, ds.size()), cfg.lloyd_iters, cfg.subsample, cfg.workers, cfg.restarts};
        return cluster(ds, o, rng);
      });
      nlohmann::json j = to_json(cl);
      j["radius"] = choose_radius(cl.score, cfg.a);
      in_phase("write", [&] { write_json_file(clus_out, j); });
    } else if (*build.app) {
      const PipelineConfig cfg = in_phase("config", [&] { return build.over.resolve(build.config); });
      const Dataset ds = in_phase("ingest", [&] { return load_training_source(cfg); });
      PipelineConfig bc = cfg;
      bc.method = "coreset";
      const SubsetResult res = build_subset(bc, ds, derive_seed(cfg.seed, "build"));
      in_phase("write", [&] {
        write_coreset(build_out, res.coreset);
        std::cout << summary_json(*res.profile).dump(2) << '\n';
      });
    } else if (*stream.app) {
      const PipelineConfig cfg = in_phase("config", [&] { return stream.over.resolve(stream.config); });
      const Dataset ds = in_phase("ingest", [&] { return load_training_source(cfg); });
      std::vector<Dataset> blocks;
      for (Index lo = 0; lo < ds.size(); lo += block_size) {
        std::vector<Index> rows;
        for (Index i = lo; i < std::min(ds.size(), lo + block_size); ++i) rows.push_back(i);
        blocks.push_back(ds.subset(rows));
      }
      std::size_t depth = 0;
      const Coreset cs = in_phase("stream", [&] {
        return stream_blocks(blocks, compress_options(cfg), derive_seed(cfg.seed, "stream"), cfg.workers, &depth);
      });
      in_phase("write", [&] {
        write_coreset(stream_out, cs);
        std::cout << nlohmann::json{{"blocks", blocks.size()}, {"size", cs.size()}, {"eps", cs.meta().eps},
                                    {"max_depth", depth}}
                         .dump(2)
                  << '\n';
      });
    } else if (*samp.app) {
      const PipelineConfig cfg = in_phase("config", [&] { return samp.over.resolve(samp.config); });
      const WeightedDataset ds = in_phase("ingest", [&] {
        if (!samp_coreset.empty()) return read_coreset(samp_coreset).as_weighted();
        return WeightedDataset(load_training_source(cfg));
      });
      std::vector<PosteriorChain> chains;
      const RowMatrix samples = in_phase("sample", [&] {
        const LogPosterior lp(ds, cfg.prior_scale);
        MalaOptions opts = mala_options(cfg);
        if (cfg.radius) opts.ball_radius = cfg.radius;
        return run_chains(lp, opts, derive_seed(cfg.seed, "sample"), cfg.chains, cfg.workers, &chains);
      });
      in_phase("write", [&] {
        write_chain(samp_out, samples);
        nlohmann::json diag = nlohmann::json::array();
        for (const auto& c : chains) diag.push_back(c.diagnostics());
        write_json_file(sidecar_json(samp_out).string(), diag);
      });
    } else if (*ev.app) {
      MetricReport report;
      report.method = ev_method;
      report.m = ev_m;
      report.seed = ev_seed;
      const RowMatrix chain = in_phase("ingest", [&] { return read_chain(ev_chain); });
      in_phase("eval", [&] {
        if (!ev_ref.empty()) report.mmd = chain_mmd(read_chain(ev_ref), chain);
        if (!ev_test.empty()) report.neg_test_ll = neg_test_log_likelihood(chain, read_dataset(ev_test));
      });
      in_phase("write", [&] { write_json_file(ev_out, report.to_json()); });
    } else if (*cmp.app) {
      const PipelineConfig cfg = in_phase("config", [&] { return cmp.over.resolve(cmp.config); });
      const auto rows = run_comparison(cfg, cmp_sizes, cmp_seeds);
      in_phase("write", [&] {
        std::ofstream out(cmp_out);
        if (!out) throw Error("cannot write " + cmp_out);
        write_comparison_csv(out, rows);
      });
    } else if (*sc.app) {
      const PipelineConfig cfg = in_phase("config", [&] { return sc.over.resolve(sc.config); });
      const auto rows = run_sensitivity_scaling(cfg, sc_n, sc_r, sc_k);
      in_phase("write", [&] {
        std::ofstream out(sc_out);
        if (!out) throw Error("cannot write " + sc_out);
        write_scaling_csv(out, rows);
      });
    } else if (*run.app) {
      const PipelineConfig cfg = in_phase("config", [&] { return run.over.resolve(run.config); });
      const RunResult res = run_pipeline(cfg);
      std::cout << nlohmann::json{{"dir", res.dir.string()},
                                  {"metrics", res.metrics.to_json()},
                                  {"timings", res.timings.to_json()}}
                       .dump(2)
                << '\n';
    }
  } catch (const PhaseError& e) {
    std::cerr << "lrcoreset: error in phase " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "lrcoreset: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
