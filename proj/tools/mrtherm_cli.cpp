// Command-line driver for the thermometry pipeline: ground-truth synthesis,
// sampling-pattern generation, full fusion experiments and report export.

#include <filesystem>
#include <iostream>
#include <omp.h>

#include <CLI11.hpp>

#include "mrtherm/experiment.hpp"
#include "mrtherm/io.hpp"
#include "mrtherm/rng.hpp"

namespace fs = std::filesystem;
using namespace mrtherm;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> methods;
  std::vector<int> lines;
  int threads = 0;
};

ExperimentConfig load_with_overrides(const CommonOpts& opts) {
  ExperimentConfig cfg = load_experiment_config(opts.config_path);
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.seed_set) cfg.master_seed = opts.seed;
  if (!opts.methods.empty()) cfg.methods = opts.methods;
  if (!opts.lines.empty()) {
    const PhaseGeometry geom =
        phase_geometry(cfg.phantom.grid.ndim(), cfg.phantom.grid.extents(), cfg.readout_axis);
    for (int n : opts.lines)
      if (n < 0 || n > geom.num_candidates())
        throw ValidationError("--lines: count " + std::to_string(n) + " outside [0, " +
                              std::to_string(geom.num_candidates()) + "]");
    cfg.line_counts = opts.lines;
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool need_config = true) {
  auto* c = cmd->add_option("--config", opts.config_path, "experiment config JSON");
  if (need_config) c->required();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", opts.seed, "master seed (overrides config)")
      ->each([&](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--methods", opts.methods, "sampling methods")->delimiter(',');
  cmd->add_option("--lines", opts.lines, "line counts to sweep")->delimiter(',');
  cmd->add_option("--threads", opts.threads, "OpenMP thread count (0 = runtime default)");
}

void print_summary(const std::vector<ExperimentRecord>& records) {
  for (const auto& r : records) {
    std::cout << r.method << " lines=" << r.lines << " seed=" << r.seed_index;
    if (r.error_tag.empty())
      std::cout << " rmse_c=" << format_double(r.error.rmse_c)
                << " max_err_c=" << format_double(r.error.max_abs_error_c)
                << " trace_post=" << format_double(r.posterior.cov.trace());
    else
      std::cout << " ERROR: " << r.error_tag;
    std::cout << "\n";
  }
}

int run_cmd(const CommonOpts& opts, bool single_cell) {
  ExperimentConfig cfg = load_with_overrides(opts);
  if (single_cell) {
    // `run` executes one cell: first method, first line count, one seed
    cfg.methods.resize(1);
    cfg.line_counts.resize(1);
    cfg.noise_realizations = 1;
  }
  auto records = run_experiment(cfg);
  print_summary(records);
  if (cfg.out_dir.empty())
    std::cout << "(no --out directory given; artifacts not written)\n";
  return 0;
}

int pattern_cmd(const CommonOpts& opts) {
  ExperimentConfig cfg = load_with_overrides(opts);
  if (cfg.out_dir.empty()) throw ValidationError("pattern: --out directory required");
  fs::create_directories(cfg.out_dir);

  SolverSettings settings;
  settings.dt_s = cfg.dt_s;
  settings.output_times_s = cfg.output_times_s;
  const QuadratureRule rule = prior_tensor_rule(cfg.phantom.prior, cfg.nodes_per_dim);
  const Ensemble ens =
      propagate_ensemble(cfg.phantom, rule, cfg.protocol, settings, cfg.fusion_time_s);
  const LineScores scores =
      line_scores(signal_variance_centered(ens), cfg.readout_axis);

  const int max_lines = *std::max_element(cfg.line_counts.begin(), cfg.line_counts.end());
  for (const std::string& method : cfg.methods) {
    for (int n : cfg.line_counts) {
      SamplingPattern pat;
      if (method == "maxvar") {
        pat = select_lines_maxvar(scores, n == 0 ? 0 : n, cfg.separation);
      } else if (method == "rectilinear") {
        pat = rectilinear_pattern(scores.geometry, n);
      } else {
        PoissonDiskParams params = cfg.poisson;
        params.seed = derive_seed(cfg.master_seed, SeedRole::PoissonDarts, n);
        pat = poisson_disk_pattern(scores.geometry, n, params);
      }
      validate_pattern(pat);
      const std::string path =
          (fs::path(cfg.out_dir) / (method + "_" + std::to_string(n) + ".csv")).string();
      write_pattern_csv(pat, path);
      std::cout << "wrote " << path << " (" << pat.count() << "/" << n << " lines, fraction "
                << format_double(static_cast<double>(pat.count()) /
                                 scores.geometry.num_candidates())
                << ")\n";
    }
  }
  (void)max_lines;
  return 0;
}

int forward_cmd(const CommonOpts& opts) {
  ExperimentConfig cfg = load_with_overrides(opts);
  if (cfg.out_dir.empty()) throw ValidationError("forward: --out directory required");
  fs::create_directories(cfg.out_dir);

  SolverSettings settings;
  settings.dt_s = cfg.dt_s;
  settings.output_times_s = cfg.output_times_s;

  const TemperatureHistory hist = solve_pennes(cfg.phantom, cfg.true_mu, settings);
  dump_history(hist, cfg.phantom.grid, (fs::path(cfg.out_dir) / "truth_temperature").string());

  const Field<double> u_ref(cfg.phantom.grid, cfg.phantom.boundary.initial_temperature_c);
  const ComplexImage img = complex_image(hist.at_time(cfg.fusion_time_s), u_ref,
                                         cfg.phantom.labels, cfg.phantom.tissues, cfg.protocol);
  const KSpaceSignal ks = kspace_forward(img, cfg.phantom.grid.voxel_volume());
  dump_kspace(ks, cfg.readout_axis, cfg.snr, 0,
              (fs::path(cfg.out_dir) / "truth_kspace").string());

  NoiseModel nm = make_noise_model(ks, cfg.snr, derive_seed(cfg.master_seed, SeedRole::TruthNoise, 0));
  dump_kspace(add_noise(ks, nm), cfg.readout_axis, cfg.snr, nm.seed,
              (fs::path(cfg.out_dir) / "truth_kspace_noisy_s0").string());

  std::cout << "wrote ground-truth temperature and k-space under " << cfg.out_dir << "\n";
  return 0;
}

int report_cmd(const CommonOpts& opts) {
  if (opts.out_dir.empty()) throw ValidationError("report: --out directory required");
  const auto records =
      read_records_jsonl((fs::path(opts.out_dir) / "records.jsonl").string());
  export_report(records, opts.out_dir);
  print_summary(records);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-based accelerated MR thermometry simulator"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto* run = app.add_subcommand("run", "run one experiment cell (first method/count)");
  add_common(run, opts);
  auto* sweep = app.add_subcommand("sweep", "run the full method x line-count x seed grid");
  add_common(sweep, opts);
  auto* pattern = app.add_subcommand("pattern", "generate sampling patterns only");
  add_common(pattern, opts);
  auto* forward = app.add_subcommand("forward", "synthesize ground-truth data only");
  add_common(forward, opts);
  auto* report = app.add_subcommand("report", "rebuild report files from records.jsonl");
  add_common(report, opts, /*need_config=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (opts.threads > 0) omp_set_num_threads(opts.threads);
    if (run->parsed()) return run_cmd(opts, /*single_cell=*/true);
    if (sweep->parsed()) return run_cmd(opts, /*single_cell=*/false);
    if (pattern->parsed()) return pattern_cmd(opts);
    if (forward->parsed()) return forward_cmd(opts);
    if (report->parsed()) return report_cmd(opts);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
