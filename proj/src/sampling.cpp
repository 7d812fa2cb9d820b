#include "mrtherm/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "mrtherm/rng.hpp"

namespace mrtherm {

namespace {

double line_distance(const std::array<int, 2>& a, const std::array<int, 2>& b, int num_axes) {
  const double dx = a[0] - b[0];
  const double dy = num_axes == 2 ? a[1] - b[1] : 0.0;
  return std::sqrt(dx * dx + dy * dy);
}

} // namespace

PhaseGeometry phase_geometry(int ndim, const std::array<int, 3>& kgrid_extents, int readout_axis) {
  if (readout_axis < 0 || readout_axis >= ndim)
    throw ValidationError("phase_geometry: readout axis " + std::to_string(readout_axis) +
                          " out of range for " + std::to_string(ndim) + "-D k-space");
  PhaseGeometry g;
  g.readout_axis = readout_axis;
  for (int a = 0; a < ndim; ++a)
    if (a != readout_axis) g.phase_axes.push_back(a);
  g.num_axes = static_cast<int>(g.phase_axes.size());
  for (int i = 0; i < g.num_axes; ++i) g.extents[i] = kgrid_extents[g.phase_axes[i]];
  return g;
}

LineScores line_scores(const Field<double>& vmap_centered, int readout_axis) {
  LineScores out;
  out.geometry = phase_geometry(vmap_centered.ndim(), vmap_centered.extents(), readout_axis);
  out.scores.assign(out.geometry.num_candidates(), 0.0);

  const auto& ext = vmap_centered.extents();
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j)
      for (int k = 0; k < ext[2]; ++k) {
        const int idxs[3] = {i, j, k};
        std::array<int, 2> c{0, 0};
        for (int p = 0; p < out.geometry.num_axes; ++p) c[p] = idxs[out.geometry.phase_axes[p]];
        out.scores[out.geometry.flat(c)] += vmap_centered(i, j, k);
      }
  return out;
}

SamplingPattern select_lines_maxvar(const LineScores& scores, int n, int n_d) {
  if (n < 0) throw ValidationError("select_lines_maxvar: n must be >= 0");
  if (n_d < 1) throw ValidationError("select_lines_maxvar: separation must be >= 1");

  const int c = scores.geometry.num_candidates();
  std::vector<int> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores.scores[a] != scores.scores[b]) return scores.scores[a] > scores.scores[b];
    return a < b;
  });

  SamplingPattern pat;
  pat.method = "maxvar";
  pat.geometry = scores.geometry;
  pat.separation = n_d;
  pat.requested = n;

  for (int flat : order) {
    if (pat.count() == n) break;
    const auto cand = scores.geometry.coords(flat);
    bool blocked = false;
    for (const auto& sel : pat.lines)
      if (line_distance(cand, sel, scores.geometry.num_axes) < n_d) {
        blocked = true;
        break;
      }
    if (!blocked) pat.lines.push_back(cand);
  }

  if (pat.count() < n) {
    // finish the greedy walk to report what is achievable
    for (int flat : order) {
      const auto cand = scores.geometry.coords(flat);
      bool blocked = false;
      for (const auto& sel : pat.lines)
        if (line_distance(cand, sel, scores.geometry.num_axes) < n_d) {
          blocked = true;
          break;
        }
      if (!blocked) pat.lines.push_back(cand);
    }
    throw DomainError("select_lines_maxvar: " + std::to_string(n) +
                      " lines infeasible under separation " + std::to_string(n_d) +
                      "; achievable maximum is " + std::to_string(pat.count()));
  }
  return pat;
}

SamplingPattern rectilinear_pattern(const PhaseGeometry& geometry, int n) {
  const int c = geometry.num_candidates();
  if (n < 0 || n > c)
    throw ValidationError("rectilinear_pattern: n must be in [0, " + std::to_string(c) + "]");

  SamplingPattern pat;
  pat.method = "rectilinear";
  pat.geometry = geometry;
  pat.separation = 1;
  pat.requested = n;

  std::vector<int> seen;
  for (int i = 0; i < n; ++i) {
    const int idx = static_cast<int>(std::llround(static_cast<double>(i) * c / n));
    if (std::find(seen.begin(), seen.end(), idx) == seen.end()) {
      seen.push_back(idx);
      pat.lines.push_back(geometry.coords(idx));
    }
  }
  return pat;
}

SamplingPattern poisson_disk_pattern(const PhaseGeometry& geometry, int n,
                                     const PoissonDiskParams& params) {
  if (!(params.r0 > 0)) throw ValidationError("poisson_disk_pattern: r0 must be > 0");
  if (params.beta < 0) throw ValidationError("poisson_disk_pattern: beta must be >= 0");
  if (n < 0) throw ValidationError("poisson_disk_pattern: n must be >= 0");

  const int num_axes = geometry.num_axes;
  std::array<double, 2> center{geometry.extents[0] / 2.0, geometry.extents[1] / 2.0};
  // DC sits at extent/2 in the centered view
  center = {static_cast<double>(geometry.extents[0] / 2),
            static_cast<double>(geometry.extents[1] / 2)};
  double k_max = 0.0;
  for (int a = 0; a < num_axes; ++a) {
    const double reach = std::max(center[a], geometry.extents[a] - 1 - center[a]);
    k_max += reach * reach;
  }
  k_max = std::max(std::sqrt(k_max), 1.0);

  SplitMix64 rng(params.seed);
  std::vector<std::array<int, 2>> accepted;
  const long long budget =
      std::max<long long>(2000, static_cast<long long>(params.attempts_per_candidate) *
                                    geometry.num_candidates());
  for (long long attempt = 0; attempt < budget; ++attempt) {
    std::array<int, 2> dart{0, 0};
    for (int a = 0; a < num_axes; ++a) {
      const int v = static_cast<int>(std::llround(rng.uniform(0.0, geometry.extents[a] - 1.0)));
      dart[a] = std::clamp(v, 0, geometry.extents[a] - 1);
    }
    const double dist_center =
        std::sqrt(std::pow(dart[0] - center[0], 2) +
                  (num_axes == 2 ? std::pow(dart[1] - center[1], 2) : 0.0));
    const double r_local = params.r0 * (1.0 + params.beta * dist_center / k_max);
    bool ok = true;
    for (const auto& a : accepted)
      if (line_distance(dart, a, num_axes) < r_local) {
        ok = false;
        break;
      }
    if (ok) accepted.push_back(dart);
  }

  // keep the n darts closest to the center, ties toward lower flat index
  std::sort(accepted.begin(), accepted.end(), [&](const auto& a, const auto& b) {
    const double da = std::pow(a[0] - center[0], 2) + std::pow(a[1] - center[1], 2);
    const double db = std::pow(b[0] - center[0], 2) + std::pow(b[1] - center[1], 2);
    if (da != db) return da < db;
    return geometry.flat(a) < geometry.flat(b);
  });
  if (static_cast<int>(accepted.size()) > n) accepted.resize(n);

  SamplingPattern pat;
  pat.method = "poisson";
  pat.geometry = geometry;
  pat.separation = 1;
  pat.seed = params.seed;
  pat.requested = n;
  pat.lines = std::move(accepted);
  pat.best_effort = pat.count() < n;
  return pat;
}

void validate_pattern(const SamplingPattern& pattern) {
  for (const auto& line : pattern.lines)
    for (int a = 0; a < pattern.geometry.num_axes; ++a)
      if (line[a] < 0 || line[a] >= pattern.geometry.extents[a])
        throw ValidationError("pattern: line index out of range");
  for (std::size_t i = 0; i < pattern.lines.size(); ++i)
    for (std::size_t j = i + 1; j < pattern.lines.size(); ++j) {
      const double d =
          line_distance(pattern.lines[i], pattern.lines[j], pattern.geometry.num_axes);
      if (d == 0.0) throw ValidationError("pattern: duplicate line");
      if (d < pattern.separation)
        throw ValidationError("pattern: separation invariant violated (distance " +
                              std::to_string(d) + " < " + std::to_string(pattern.separation) + ")");
    }
}

void write_pattern_csv(const SamplingPattern& pattern, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("pattern csv: cannot open '" + path + "' for writing");
  out << "# method=" << pattern.method << " readout_axis=" << pattern.geometry.readout_axis
      << " separation=" << pattern.separation << " seed=" << pattern.seed
      << " requested=" << pattern.requested << " best_effort=" << (pattern.best_effort ? 1 : 0)
      << "\n";
  if (pattern.geometry.num_axes == 1)
    out << "line_index\n";
  else
    out << "phase_index_0,phase_index_1\n";
  for (const auto& line : pattern.lines) {
    out << line[0];
    if (pattern.geometry.num_axes == 2) out << "," << line[1];
    out << "\n";
  }
}

std::vector<double> mutual_information_reference(const QuadratureRule& mu_rule,
                                                 const std::vector<std::vector<Complex>>& forward,
                                                 double sigma, const MiBudget& budget) {
  if (mu_rule.dim() != 1)
    throw DomainError("mutual_information_reference: only 1-parameter priors supported");
  if (!(sigma > 0)) throw ValidationError("mutual_information_reference: sigma must be > 0");
  const int nk = static_cast<int>(forward.size());
  if (nk > budget.max_kpoints)
    throw DomainError("mutual_information_reference: " + std::to_string(nk) +
                      " k-points exceed budget of " + std::to_string(budget.max_kpoints));
  const int m = mu_rule.count();
  for (const auto& f : forward)
    if (static_cast<int>(f.size()) != m)
      throw ValidationError("mutual_information_reference: forward values per k must match rule");

  const long long evals = static_cast<long long>(nk) * m * m * budget.z_nodes_per_axis *
                          budget.z_nodes_per_axis;
  if (evals > budget.max_evals)
    throw DomainError("mutual_information_reference: evaluation budget exceeded");

  // 1-D Gaussian-weighted quadrature: GL nodes over +-W sigma, weights carry
  // the normal density and are renormalized so the measure integrates to 1.
  const double w_half = budget.z_halfwidth_sigmas * sigma;
  QuadratureRule gl = gauss_legendre(budget.z_nodes_per_axis, -w_half, w_half);
  std::vector<double> zt(gl.count()), zw(gl.count());
  double zw_sum = 0.0;
  for (int i = 0; i < gl.count(); ++i) {
    zt[i] = gl.nodes[i][0];
    zw[i] = gl.weights[i] * std::exp(-zt[i] * zt[i] / (2.0 * sigma * sigma));
    zw_sum += zw[i];
  }
  for (auto& w : zw) w /= zw_sum;

  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> mi(nk, 0.0);

#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < nk; ++k) {
    const auto& g = forward[k];
    std::vector<double> logw(m);
    for (int q = 0; q < m; ++q) logw[q] = std::log(mu_rule.weights[q]);

    double acc = 0.0;
    for (int q = 0; q < m; ++q) {
      // E_{z|mu_q}[ln p(z|mu_q)] is the (negated) differential entropy of the
      // 2-D Gaussian; only E_{z|mu_q}[ln p(z)] needs quadrature.
      double e_log_pz = 0.0;
      for (int i = 0; i < static_cast<int>(zt.size()); ++i)
        for (int j = 0; j < static_cast<int>(zt.size()); ++j) {
          const Complex z = g[q] + Complex(zt[i], zt[j]);
          double lse = -std::numeric_limits<double>::infinity();
          for (int l = 0; l < m; ++l) {
            const double d2 = std::norm(z - g[l]);
            const double e = logw[l] - d2 * inv_two_sigma2;
            if (e > lse) lse = e;
          }
          double s = 0.0;
          for (int l = 0; l < m; ++l) {
            const double d2 = std::norm(z - g[l]);
            s += std::exp(logw[l] - d2 * inv_two_sigma2 - lse);
          }
          e_log_pz += zw[i] * zw[j] * (lse + std::log(s));
        }
      // ln p(z) above omits the common -ln(2 pi sigma^2); it cancels against
      // the conditional entropy term, leaving KL_q = -1 - E[ln p~(z)] + ...
      acc += mu_rule.weights[q] * (-1.0 - e_log_pz);
    }
    mi[k] = acc;
  }
  return mi;
}

std::vector<double> mutual_information_reference(
    const UncertainParameterPrior& prior, const std::function<Complex(double, int)>& forward,
    int num_kpoints, double sigma, int mu_nodes, const MiBudget& budget) {
  if (prior.dim() != 1)
    throw DomainError("mutual_information_reference: only 1-parameter priors supported");
  QuadratureRule rule = gauss_legendre(mu_nodes, prior.lower_per_m[0], prior.upper_per_m[0]);
  std::vector<std::vector<Complex>> values(num_kpoints, std::vector<Complex>(rule.count()));
  for (int k = 0; k < num_kpoints; ++k)
    for (int q = 0; q < rule.count(); ++q) values[k][q] = forward(rule.nodes[q][0], k);
  return mutual_information_reference(rule, values, sigma, budget);
}

} // namespace mrtherm
