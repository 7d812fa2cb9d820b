#include "mrtherm/uq.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mrtherm {

QuadratureRule gauss_legendre(int n, double lo, double hi) {
  if (n < 1) throw ValidationError("gauss_legendre: node count must be >= 1");
  if (!(lo < hi)) throw ValidationError("gauss_legendre: lo must be < hi");

  // Newton iteration on the Legendre recurrence for nodes on [-1, 1].
  std::vector<double> x(n), w(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2 * j + 1) * z * p2 - j * p3) / (j + 1);
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    // standard weight halved: expectations against the uniform density
    w[i] = 1.0 / ((1.0 - z * z) * pp * pp);
    w[n - 1 - i] = w[i];
  }

  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  QuadratureRule rule;
  rule.nodes.reserve(n);
  rule.weights.reserve(n);
  const double mid = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  for (int i = 0; i < n; ++i) {
    rule.nodes.push_back({mid + half * x[i]});
    rule.weights.push_back(w[i] / wsum);
  }
  return rule;
}

QuadratureRule tensor_rule(const std::vector<QuadratureRule>& rules_1d) {
  const int d = static_cast<int>(rules_1d.size());
  if (d < 1 || d > 4)
    throw DomainError("tensor_rule: dimension " + std::to_string(d) + " outside [1, 4]");
  for (const auto& r : rules_1d)
    if (r.dim() != 1) throw ValidationError("tensor_rule: factors must be 1-D rules");

  QuadratureRule out;
  out.nodes = {{}};
  out.weights = {1.0};
  for (const auto& r : rules_1d) {
    std::vector<std::vector<double>> nodes;
    std::vector<double> weights;
    nodes.reserve(out.nodes.size() * r.nodes.size());
    weights.reserve(nodes.capacity());
    for (std::size_t i = 0; i < out.nodes.size(); ++i)
      for (std::size_t j = 0; j < r.nodes.size(); ++j) {
        auto node = out.nodes[i];
        node.push_back(r.nodes[j][0]);
        nodes.push_back(std::move(node));
        weights.push_back(out.weights[i] * r.weights[j]);
      }
    out.nodes = std::move(nodes);
    out.weights = std::move(weights);
  }
  return out;
}

QuadratureRule prior_tensor_rule(const UncertainParameterPrior& prior, int nodes_per_dim) {
  std::vector<QuadratureRule> rules;
  for (std::size_t i = 0; i < prior.dim(); ++i)
    rules.push_back(gauss_legendre(nodes_per_dim, prior.lower_per_m[i], prior.upper_per_m[i]));
  return tensor_rule(rules);
}

Ensemble propagate_ensemble(const Phantom& phantom, const QuadratureRule& rule,
                            const MrProtocol& protocol, const SolverSettings& settings,
                            double fusion_time_s) {
  if (rule.count() == 0) throw ValidationError("propagate_ensemble: empty rule");
  if (rule.dim() != phantom.num_tissues())
    throw ValidationError("propagate_ensemble: rule dimension " + std::to_string(rule.dim()) +
                          " != tissue count " + std::to_string(phantom.num_tissues()));

  SolverSettings member_settings = settings;
  member_settings.parallel = false; // parallelism lives at the member level
  auto times = settings.output_times_s;
  if (std::find_if(times.begin(), times.end(), [&](double t) {
        return std::abs(t - fusion_time_s) <= 1e-9;
      }) == times.end())
    times.push_back(fusion_time_s);
  std::sort(times.begin(), times.end());
  member_settings.output_times_s = times;

  Field<double> u_ref(phantom.grid, phantom.boundary.initial_temperature_c);
  const int count = rule.count();

  Ensemble ens;
  ens.rule = rule;
  ens.fusion_time_s = fusion_time_s;
  ens.histories.resize(count);
  ens.signals.resize(count);

  std::vector<std::string> failures(count);
#pragma omp parallel for schedule(dynamic)
  for (int q = 0; q < count; ++q) {
    try {
      TemperatureHistory hist = solve_pennes(phantom, rule.nodes[q], member_settings);
      const Field<double>& u = hist.at_time(fusion_time_s);
      ComplexImage img = complex_image(u, u_ref, phantom.labels, phantom.tissues, protocol);
      ens.signals[q] = kspace_forward(img, phantom.grid.voxel_volume());
      ens.histories[q] = std::move(hist);
    } catch (const std::exception& e) {
      failures[q] = e.what();
    }
  }
  for (int q = 0; q < count; ++q)
    if (!failures[q].empty())
      throw NumericalError("ensemble node " + std::to_string(q) + ": " + failures[q]);

  return ens;
}

namespace kernels {

namespace {

inline double mean_at(const std::vector<const double*>& members, const std::vector<double>& weights,
                      std::size_t v) {
  double acc = 0.0;
  for (std::size_t q = 0; q < members.size(); ++q) acc += weights[q] * members[q][v];
  return acc;
}

inline double central_at(const std::vector<const double*>& members,
                         const std::vector<double>& weights, const double* mean, int order,
                         std::size_t v) {
  double acc = 0.0;
  for (std::size_t q = 0; q < members.size(); ++q)
    acc += weights[q] * std::pow(members[q][v] - mean[v], order);
  return acc;
}

} // namespace

void weighted_mean_serial(const std::vector<const double*>& members,
                          const std::vector<double>& weights, std::size_t n, double* out) {
  for (std::size_t v = 0; v < n; ++v) out[v] = mean_at(members, weights, v);
}

void weighted_mean_parallel(const std::vector<const double*>& members,
                            const std::vector<double>& weights, std::size_t n, double* out) {
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(n); ++v)
    out[v] = mean_at(members, weights, v);
}

void weighted_central_serial(const std::vector<const double*>& members,
                             const std::vector<double>& weights, const double* mean, int order,
                             std::size_t n, double* out) {
  for (std::size_t v = 0; v < n; ++v) out[v] = central_at(members, weights, mean, order, v);
}

void weighted_central_parallel(const std::vector<const double*>& members,
                               const std::vector<double>& weights, const double* mean, int order,
                               std::size_t n, double* out) {
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(n); ++v)
    out[v] = central_at(members, weights, mean, order, v);
}

} // namespace kernels

MomentField temperature_moments(const Ensemble& ensemble, int order, int time_index) {
  if (order < 1) throw ValidationError("moments: order must be >= 1");
  const int nt = static_cast<int>(ensemble.histories.front().times_s.size());
  int ti = time_index;
  if (ti < 0) {
    ti = 0;
    for (int i = 0; i < nt; ++i)
      if (std::abs(ensemble.histories.front().times_s[i] - ensemble.fusion_time_s) <= 1e-9) ti = i;
  }
  if (ti >= nt) throw DomainError("moments: time index out of range");

  std::vector<const double*> members;
  members.reserve(ensemble.count());
  for (const auto& h : ensemble.histories) members.push_back(h.fields[ti].data());
  const std::size_t n = ensemble.histories.front().fields[ti].size();

  MomentField out;
  out.order = order;
  out.mean = Field<double>(ensemble.histories.front().fields[ti].ndim(),
                           ensemble.histories.front().fields[ti].extents());
  out.central = Field<double>(out.mean.ndim(), out.mean.extents());
  kernels::weighted_mean_parallel(members, ensemble.rule.weights, n, out.mean.data());
  if (order >= 2)
    kernels::weighted_central_parallel(members, ensemble.rule.weights, out.mean.data(), order, n,
                                       out.central.data());
  return out;
}

SignalMoments signal_moments(const Ensemble& ensemble, int order) {
  if (order < 1) throw ValidationError("moments: order must be >= 1");
  const auto& first = ensemble.signals.front();
  const std::size_t n = first.size();

  SignalMoments out;
  out.order = order;
  out.mean = Field<Complex>(first.ndim(), first.extents());
  out.central = Field<double>(first.ndim(), first.extents());

  const auto& w = ensemble.rule.weights;
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(n); ++v) {
    Complex mean(0.0, 0.0);
    for (int q = 0; q < ensemble.count(); ++q) mean += w[q] * ensemble.signals[q][v];
    out.mean[v] = mean;
    if (order >= 2) {
      double acc = 0.0;
      for (int q = 0; q < ensemble.count(); ++q)
        acc += w[q] * std::pow(std::abs(ensemble.signals[q][v] - mean), order);
      out.central[v] = acc;
    }
  }
  return out;
}

Field<double> signal_variance_centered(const Ensemble& ensemble) {
  return fftshift(signal_moments(ensemble, 2).central);
}

} // namespace mrtherm
