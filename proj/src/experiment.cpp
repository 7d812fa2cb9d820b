#include "mrtherm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "mrtherm/io.hpp"
#include "mrtherm/rng.hpp"

namespace mrtherm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

MrProtocol parse_protocol(const json& j) {
  MrProtocol p;
  p.flip_angle_rad = j.at("flip_angle_rad").get<double>();
  p.tr_s = j.at("tr_s").get<double>();
  p.te_s = j.at("te_s").get<double>();
  p.gamma_hz_per_t = j.value("gamma_hz_per_t", 42.58e6);
  p.alpha = j.value("alpha_ppm_per_c", -0.0102) * 1e-6;
  p.b0_t = j.value("b0_t", 1.5);
  p.m0 = j.value("m0", 1.0);
  p.delta_omega0_rad_per_s = j.value("delta_omega0_rad_per_s", 0.0);
  p.validate();
  return p;
}

std::vector<double> resolve_true_mu(const json& j, const UncertainParameterPrior& prior) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    const std::string prefix = "sample:";
    if (s.rfind(prefix, 0) != 0)
      throw ValidationError("true_mu_per_m: string form must be \"sample:<seed>\"");
    const std::uint64_t seed = std::stoull(s.substr(prefix.size()));
    SplitMix64 rng(derive_seed(seed, SeedRole::ParameterDraw, 0));
    std::vector<double> mu;
    for (std::size_t a = 0; a < prior.dim(); ++a)
      mu.push_back(rng.uniform(prior.lower_per_m[a], prior.upper_per_m[a]));
    return mu;
  }
  auto mu = j.get<std::vector<double>>();
  if (mu.size() != prior.dim())
    throw ValidationError("true_mu_per_m: expected " + std::to_string(prior.dim()) + " entries");
  return mu;
}

std::string csv_or_nan(double v, bool valid) { return valid ? format_double(v) : "nan"; }

} // namespace

ExperimentConfig parse_experiment_config(const json& j, const std::string& base_dir) {
  ExperimentConfig c;

  const json& jp = j.at("phantom");
  if (jp.is_string()) {
    fs::path p = jp.get<std::string>();
    if (p.is_relative()) p = fs::path(base_dir) / p;
    c.phantom = load_phantom(p.string());
  } else {
    c.phantom = build_phantom(jp);
  }

  c.protocol = parse_protocol(j.at("protocol"));
  c.true_mu = resolve_true_mu(j.at("true_mu_per_m"), c.phantom.prior);
  c.fusion_time_s = j.at("fusion_time_s").get<double>();
  if (!(c.fusion_time_s > 0)) throw ValidationError("fusion_time_s: must be > 0");

  c.output_times_s = j.value("output_times_s", std::vector<double>{});
  if (std::none_of(c.output_times_s.begin(), c.output_times_s.end(),
                   [&](double t) { return std::abs(t - c.fusion_time_s) <= 1e-9; }))
    c.output_times_s.push_back(c.fusion_time_s);
  std::sort(c.output_times_s.begin(), c.output_times_s.end());

  c.methods = j.value("methods", std::vector<std::string>{"maxvar", "rectilinear", "poisson"});
  for (const auto& m : c.methods)
    if (m != "maxvar" && m != "rectilinear" && m != "poisson")
      throw ValidationError("methods: unknown method '" + m + "'");

  c.line_counts = j.at("lines").get<std::vector<int>>();
  if (c.line_counts.empty()) throw ValidationError("lines: must not be empty");

  c.snr = j.value("snr", 50.0);
  if (!(c.snr > 0)) throw ValidationError("snr: must be > 0");
  c.master_seed = j.value("master_seed", std::uint64_t{0});
  c.noise_realizations = j.value("noise_realizations", 1);
  if (c.noise_realizations < 1) throw ValidationError("noise_realizations: must be >= 1");
  c.nodes_per_dim = j.value("nodes_per_dim", c.phantom.num_tissues() > 1 ? 3 : 15);
  c.readout_axis = j.value("readout_axis", c.phantom.grid.ndim() == 3 ? 2 : 0);
  c.separation = j.value("separation", 1);
  if (j.contains("poisson")) {
    c.poisson.r0 = j.at("poisson").value("r0", 1.0);
    c.poisson.beta = j.at("poisson").value("beta", 0.0);
  }
  c.dt_s = j.value("dt_s", 0.0);
  c.recon_std_nodes_per_dim = j.value("recon_std_nodes_per_dim", 0);

  if (j.contains("roi")) {
    IndexBox box;
    auto lo = j.at("roi").at("lo").get<std::vector<int>>();
    auto hi = j.at("roi").at("hi").get<std::vector<int>>();
    if (static_cast<int>(lo.size()) != c.phantom.grid.ndim() || lo.size() != hi.size())
      throw ValidationError("roi: lo/hi must match grid axis count");
    box.lo = {0, 0, 0};
    box.hi = {1, 1, 1};
    for (std::size_t a = 0; a < lo.size(); ++a) {
      box.lo[a] = lo[a];
      box.hi[a] = hi[a];
    }
    c.roi = box;
  }

  c.out_dir = j.value("out", "");

  // line counts validated against the phase raster
  const PhaseGeometry geom =
      phase_geometry(c.phantom.grid.ndim(), c.phantom.grid.extents(), c.readout_axis);
  for (int n : c.line_counts) {
    if (n < 0 || n > geom.num_candidates())
      throw ValidationError("lines: count " + std::to_string(n) + " outside [0, " +
                            std::to_string(geom.num_candidates()) + "]");
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("experiment config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("experiment config: " + std::string(e.what()));
  }
  return parse_experiment_config(j, fs::path(path).parent_path().string());
}

std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& config) {
  Eigen::setNbThreads(1); // matrix products stay deterministic across thread settings

  const Phantom& phantom = config.phantom;
  const bool writing = !config.out_dir.empty();
  if (writing) {
    fs::create_directories(config.out_dir);
    fs::create_directories(fs::path(config.out_dir) / "patterns");
  }

  SolverSettings settings;
  settings.dt_s = config.dt_s;
  settings.output_times_s = config.output_times_s;

  // ground truth: solve at the true parameters, image, transform, add noise
  const TemperatureHistory truth_hist = solve_pennes(phantom, config.true_mu, settings);
  const Field<double>& truth_u = truth_hist.at_time(config.fusion_time_s);
  const Field<double> u_ref(phantom.grid, phantom.boundary.initial_temperature_c);
  const ComplexImage truth_img =
      complex_image(truth_u, u_ref, phantom.labels, phantom.tissues, config.protocol);
  const KSpaceSignal truth_ks = kspace_forward(truth_img, phantom.grid.voxel_volume());

  const double sigma = make_noise_model(truth_ks, config.snr, 0).sigma;
  std::vector<KSpaceSignal> noisy;
  noisy.reserve(config.noise_realizations);
  for (int s = 0; s < config.noise_realizations; ++s) {
    NoiseModel nm;
    nm.snr = config.snr;
    nm.sigma = sigma;
    nm.seed = derive_seed(config.master_seed, SeedRole::TruthNoise, s);
    noisy.push_back(add_noise(truth_ks, nm));
  }

  // prior ensemble
  const QuadratureRule rule = prior_tensor_rule(phantom.prior, config.nodes_per_dim);
  const Ensemble ensemble =
      propagate_ensemble(phantom, rule, config.protocol, settings, config.fusion_time_s);
  const ParameterStats prior = prior_stats(rule);

  const Field<double> vmap = signal_variance_centered(ensemble);
  const LineScores scores = line_scores(vmap, config.readout_axis);
  const IndexBox region = config.roi ? *config.roi : IndexBox::full(phantom.grid);

  const int max_lines = *std::max_element(config.line_counts.begin(), config.line_counts.end());

  // prior-mean reconstruction is shared by every zero-line cell
  std::optional<ReconstructionResult> prior_recon;
  auto get_prior_recon = [&]() -> const ReconstructionResult& {
    if (!prior_recon) {
      prior_recon = reconstruct_temperature(phantom, prior, settings);
      prior_recon->provenance = "prior";
    }
    return *prior_recon;
  };

  std::vector<ExperimentRecord> records;

  for (const std::string& method : config.methods) {
    // patterns per line count; maxvar counts are prefixes of one greedy order
    std::map<int, SamplingPattern> patterns;
    std::optional<SamplingPattern> maxvar_full;
    if (method == "maxvar" && max_lines > 0)
      maxvar_full = select_lines_maxvar(scores, max_lines, config.separation);

    for (int n : config.line_counts) {
      if (method == "maxvar") {
        SamplingPattern p;
        if (n == 0) {
          p.method = "maxvar";
          p.geometry = scores.geometry;
          p.separation = config.separation;
        } else {
          p = *maxvar_full;
          p.lines.resize(n);
          p.requested = n;
        }
        patterns.emplace(n, std::move(p));
      } else if (method == "rectilinear") {
        patterns.emplace(n, rectilinear_pattern(scores.geometry, n));
      } else {
        PoissonDiskParams params = config.poisson;
        params.seed = derive_seed(config.master_seed, SeedRole::PoissonDarts, n);
        patterns.emplace(n, poisson_disk_pattern(scores.geometry, n, params));
      }
    }

    for (int n : config.line_counts) {
      const SamplingPattern& pattern = patterns.at(n);
      if (writing)
        write_pattern_csv(pattern, (fs::path(config.out_dir) / "patterns" /
                                    (method + "_" + std::to_string(n) + ".csv"))
                                       .string());

      // seed-independent fusion operators for this pattern
      std::optional<AnomalyMatrix> anom;
      std::optional<GainOperator> gain;
      std::string cell_error;
      if (pattern.count() > 0) {
        try {
          anom = build_anomalies(ensemble, pattern);
          const Eigen::MatrixXd cross = cross_covariance(ensemble, pattern);
          const Eigen::VectorXd r_diag =
              Eigen::VectorXd::Constant(anom->b.rows(), sigma * sigma);
          gain = kalman_gain(*anom, cross, r_diag);
        } catch (const std::exception& e) {
          cell_error = e.what();
        }
      }

      for (int s = 0; s < config.noise_realizations; ++s) {
        ExperimentRecord rec;
        rec.method = method;
        rec.lines = pattern.count();
        rec.seed_index = s;
        rec.prior = prior;
        rec.undersampling_fraction =
            static_cast<double>(pattern.count()) / scores.geometry.num_candidates();

        const auto t0 = std::chrono::steady_clock::now();
        try {
          if (!cell_error.empty()) throw NumericalError(cell_error);

          const ReconstructionResult* recon = nullptr;
          ReconstructionResult local;
          if (pattern.count() == 0) {
            rec.posterior = prior;
            recon = &get_prior_recon();
          } else {
            const Eigen::VectorXd z = restrict_to_pattern(noisy[s], pattern);
            UpdateResult upd =
                minimum_variance_update(prior, *gain, z, anom->mean_r, &phantom.prior);
            rec.posterior = upd.posterior;
            rec.clamped = upd.clamped;
            local = reconstruct_temperature(phantom, upd.posterior, settings);
            local.provenance = method + " lines=" + std::to_string(pattern.count()) +
                               " seed=" + std::to_string(s);
            recon = &local;
          }
          rec.error = error_metrics(recon->history.at_time(config.fusion_time_s), truth_u, region);

          if (writing && s == 0 && n == max_lines) {
            dump_history(recon->history, phantom.grid,
                         (fs::path(config.out_dir) / ("recon_" + method)).string());
            if (config.recon_std_nodes_per_dim >= 1) {
              const PosteriorTemperatureStats stats = posterior_temperature_stats(
                  phantom, rec.posterior, config.recon_std_nodes_per_dim, settings);
              dump_field(stats.std_dev, phantom.grid, config.fusion_time_s, "degC",
                         (fs::path(config.out_dir) / ("recon_" + method + "_std")).string());
            }
          }
        } catch (const std::exception& e) {
          rec.error_tag = e.what();
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        records.push_back(std::move(rec));
      }
    }
  }

  if (writing) {
    dump_history(truth_hist, phantom.grid, (fs::path(config.out_dir) / "truth_temperature").string());
    dump_kspace(truth_ks, config.readout_axis, config.snr, 0,
                (fs::path(config.out_dir) / "truth_kspace").string());
    dump_kspace(noisy[0], config.readout_axis, config.snr,
                derive_seed(config.master_seed, SeedRole::TruthNoise, 0),
                (fs::path(config.out_dir) / "truth_kspace_noisy_s0").string());

    std::ofstream ens_csv(fs::path(config.out_dir) / "ensemble.csv");
    ens_csv << "node";
    for (int a = 0; a < rule.dim(); ++a) ens_csv << ",mu" << a;
    ens_csv << ",weight\n";
    for (int q = 0; q < rule.count(); ++q) {
      ens_csv << q;
      for (int a = 0; a < rule.dim(); ++a) ens_csv << "," << format_double(rule.nodes[q][a]);
      ens_csv << "," << format_double(rule.weights[q]) << "\n";
    }

    write_records_jsonl(records, (fs::path(config.out_dir) / "records.jsonl").string());
    export_report(records, config.out_dir);
  }

  return records;
}

void export_report(const std::vector<ExperimentRecord>& records, const std::string& out_dir) {
  if (records.empty()) throw DomainError("export_report: no records");
  fs::create_directories(out_dir);

  std::ofstream report(fs::path(out_dir) / "report.csv");
  report << "method,lines,seed,status,rmse_c,max_abs_err_c,trace_sigma_post,undersampling_fraction\n";
  for (const auto& r : records) {
    const bool ok = r.error_tag.empty();
    report << r.method << "," << r.lines << "," << r.seed_index << ","
           << (ok ? "ok" : "error") << "," << csv_or_nan(r.error.rmse_c, ok) << ","
           << csv_or_nan(r.error.max_abs_error_c, ok) << ","
           << csv_or_nan(ok ? r.posterior.cov.trace() : 0.0, ok) << ","
           << format_double(r.undersampling_fraction) << "\n";
  }

  std::ofstream posteriors(fs::path(out_dir) / "posteriors.csv");
  posteriors << "method,lines,seed,param,prior_mean,prior_var,post_mean,post_var\n";
  for (const auto& r : records) {
    if (!r.error_tag.empty()) continue;
    for (Eigen::Index a = 0; a < r.posterior.mean.size(); ++a)
      posteriors << r.method << "," << r.lines << "," << r.seed_index << "," << a << ","
                 << format_double(r.prior.mean(a)) << "," << format_double(r.prior.cov(a, a))
                 << "," << format_double(r.posterior.mean(a)) << ","
                 << format_double(r.posterior.cov(a, a)) << "\n";
  }

  // wall-clock lives apart from the deterministic report
  std::ofstream timings(fs::path(out_dir) / "timings.csv");
  timings << "method,lines,seed,wall_ms\n";
  for (const auto& r : records)
    timings << r.method << "," << r.lines << "," << r.seed_index << ","
            << format_double(r.wall_ms) << "\n";

  std::ofstream summary(fs::path(out_dir) / "summary.txt");
  summary << "cells: " << records.size() << "\n";
  std::map<std::pair<std::string, int>, std::pair<double, int>> rmse_acc;
  for (const auto& r : records)
    if (r.error_tag.empty()) {
      auto& acc = rmse_acc[{r.method, r.lines}];
      acc.first += r.error.rmse_c;
      acc.second += 1;
    }
  for (const auto& [key, acc] : rmse_acc)
    summary << key.first << " lines=" << key.second
            << " mean_rmse_c=" << format_double(acc.first / acc.second)
            << " seeds=" << acc.second << "\n";
  int failed = 0;
  for (const auto& r : records)
    if (!r.error_tag.empty()) ++failed;
  summary << "failed_cells: " << failed << "\n";
}

namespace {

json stats_to_json(const ParameterStats& s) {
  json j;
  j["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
  std::vector<double> cov(s.cov.data(), s.cov.data() + s.cov.size());
  j["cov"] = cov;
  j["dim"] = s.mean.size();
  return j;
}

ParameterStats stats_from_json(const json& j) {
  ParameterStats s;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto cov = j.at("cov").get<std::vector<double>>();
  const int d = j.at("dim").get<int>();
  s.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
  s.cov = Eigen::Map<const Eigen::MatrixXd>(cov.data(), d, d);
  return s;
}

} // namespace

void write_records_jsonl(const std::vector<ExperimentRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("records: cannot open '" + path + "' for writing");
  for (const auto& r : records) {
    json j;
    j["method"] = r.method;
    j["lines"] = r.lines;
    j["seed"] = r.seed_index;
    j["prior"] = stats_to_json(r.prior);
    j["posterior"] = stats_to_json(r.posterior);
    j["rmse_c"] = r.error.rmse_c;
    j["max_abs_err_c"] = r.error.max_abs_error_c;
    j["undersampling_fraction"] = r.undersampling_fraction;
    j["wall_ms"] = r.wall_ms;
    j["clamped"] = r.clamped;
    j["error_tag"] = r.error_tag;
    out << j.dump() << "\n";
  }
}

std::vector<ExperimentRecord> read_records_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("records: cannot open '" + path + "'");
  std::vector<ExperimentRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ExperimentRecord r;
    r.method = j.at("method").get<std::string>();
    r.lines = j.at("lines").get<int>();
    r.seed_index = j.at("seed").get<int>();
    r.prior = stats_from_json(j.at("prior"));
    r.posterior = stats_from_json(j.at("posterior"));
    r.error.rmse_c = j.at("rmse_c").get<double>();
    r.error.max_abs_error_c = j.at("max_abs_err_c").get<double>();
    r.undersampling_fraction = j.at("undersampling_fraction").get<double>();
    r.wall_ms = j.at("wall_ms").get<double>();
    r.clamped = j.at("clamped").get<bool>();
    r.error_tag = j.at("error_tag").get<std::string>();
    records.push_back(std::move(r));
  }
  return records;
}

} // namespace mrtherm
