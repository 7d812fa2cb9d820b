#include "mrtherm/recon.hpp"

#include <cmath>

#include "mrtherm/uq.hpp"

namespace mrtherm {

ReconstructionResult reconstruct_temperature(const Phantom& phantom,
                                             const ParameterStats& posterior,
                                             const SolverSettings& settings) {
  const int d = phantom.num_tissues();
  if (posterior.mean.size() != d)
    throw ValidationError("reconstruct: posterior dimension does not match tissue count");
  std::vector<double> mu(d);
  for (int a = 0; a < d; ++a) {
    mu[a] = posterior.mean(a);
    if (mu[a] < phantom.prior.lower_per_m[a] || mu[a] > phantom.prior.upper_per_m[a])
      throw ValidationError("reconstruct: posterior mean outside prior support on component " +
                            std::to_string(a));
  }

  ReconstructionResult res;
  res.history = solve_pennes(phantom, mu, settings);
  res.mean = res.history.fields.back();
  res.posterior = posterior;
  return res;
}

ErrorReport error_metrics(const Field<double>& estimate, const Field<double>& truth,
                          const IndexBox& region) {
  if (!estimate.same_extents(truth)) throw ValidationError("error_metrics: extents mismatch");
  for (int a = 0; a < 3; ++a)
    if (region.lo[a] < 0 || region.hi[a] > estimate.extents()[a])
      throw DomainError("error_metrics: region exceeds field extents");
  if (region.count() == 0) throw DomainError("error_metrics: empty region");

  double sq_sum = 0.0;
  double max_abs = 0.0;
  for (int i = region.lo[0]; i < region.hi[0]; ++i)
    for (int j = region.lo[1]; j < region.hi[1]; ++j)
      for (int k = region.lo[2]; k < region.hi[2]; ++k) {
        const double e = estimate(i, j, k) - truth(i, j, k);
        sq_sum += e * e;
        max_abs = std::max(max_abs, std::abs(e));
      }

  ErrorReport r;
  r.rmse_c = std::sqrt(sq_sum / static_cast<double>(region.count()));
  r.max_abs_error_c = max_abs;
  r.region = region;
  return r;
}

PosteriorTemperatureStats posterior_temperature_stats(const Phantom& phantom,
                                                      const ParameterStats& posterior,
                                                      int nodes_per_dim,
                                                      const SolverSettings& settings) {
  if (nodes_per_dim < 1)
    throw ValidationError("posterior_temperature_stats: nodes_per_dim must be >= 1");
  const int d = phantom.num_tissues();

  // One Gaussian-weighted 1-D rule per parameter, then tensorized.
  std::vector<QuadratureRule> axes;
  for (int a = 0; a < d; ++a) {
    const double mean = posterior.mean(a);
    const double sd = std::sqrt(std::max(posterior.cov(a, a), 0.0));
    QuadratureRule r;
    if (sd == 0.0 || nodes_per_dim == 1) {
      r.nodes = {{mean}};
      r.weights = {1.0};
    } else {
      const double lo = std::max(mean - 3.0 * sd, phantom.prior.lower_per_m[a]);
      const double hi = std::min(mean + 3.0 * sd, phantom.prior.upper_per_m[a]);
      QuadratureRule gl = gauss_legendre(nodes_per_dim, lo, hi);
      double wsum = 0.0;
      for (int q = 0; q < gl.count(); ++q) {
        const double x = gl.nodes[q][0];
        const double density = std::exp(-0.5 * std::pow((x - mean) / sd, 2));
        r.nodes.push_back({x});
        r.weights.push_back(gl.weights[q] * density);
        wsum += r.weights.back();
      }
      for (auto& w : r.weights) w /= wsum;
    }
    axes.push_back(std::move(r));
  }
  QuadratureRule rule = tensor_rule(axes);

  const int count = rule.count();
  std::vector<TemperatureHistory> runs(count);
  std::vector<std::string> failures(count);
#pragma omp parallel for schedule(dynamic)
  for (int q = 0; q < count; ++q) {
    try {
      SolverSettings s = settings;
      s.parallel = false;
      runs[q] = solve_pennes(phantom, rule.nodes[q], s);
    } catch (const std::exception& e) {
      failures[q] = e.what();
    }
  }
  for (int q = 0; q < count; ++q)
    if (!failures[q].empty())
      throw NumericalError("posterior stats node " + std::to_string(q) + ": " + failures[q]);

  const Field<double>& ref = runs.front().fields.back();
  const std::size_t n = ref.size();
  std::vector<const double*> members;
  members.reserve(count);
  for (const auto& h : runs) members.push_back(h.fields.back().data());

  PosteriorTemperatureStats out;
  out.mean = Field<double>(ref.ndim(), ref.extents());
  out.std_dev = Field<double>(ref.ndim(), ref.extents());
  kernels::weighted_mean_parallel(members, rule.weights, n, out.mean.data());
  kernels::weighted_central_parallel(members, rule.weights, out.mean.data(), 2, n,
                                     out.std_dev.data());
  for (auto& v : out.std_dev.values()) v = std::sqrt(std::max(v, 0.0));
  return out;
}

} // namespace mrtherm
