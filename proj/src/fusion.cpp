#include "mrtherm/fusion.hpp"

#include <cmath>

namespace mrtherm {

namespace {

/// Flat FFT-layout indices of one line's samples, ascending centered readout
/// index. Shared by restriction and scatter so the orderings always agree.
std::vector<std::size_t> line_sample_indices(const KSpaceSignal& signal,
                                             const SamplingPattern& pattern,
                                             const std::array<int, 2>& line) {
  const auto& ext = signal.extents();
  const PhaseGeometry& g = pattern.geometry;
  const int nr = ext[g.readout_axis];

  int idx[3] = {0, 0, 0};
  for (int p = 0; p < g.num_axes; ++p) {
    const int axis = g.phase_axes[p];
    if (line[p] < 0 || line[p] >= ext[axis])
      throw DomainError("restrict_to_pattern: line index " + std::to_string(line[p]) +
                        " out of range on axis " + std::to_string(axis));
    idx[axis] = from_centered(line[p], ext[axis]);
  }

  std::vector<std::size_t> flat(nr);
  for (int r = 0; r < nr; ++r) {
    idx[g.readout_axis] = from_centered(r, nr);
    flat[r] = signal.index(idx[0], idx[1], idx[2]);
  }
  return flat;
}

} // namespace

ParameterStats prior_stats(const QuadratureRule& rule) {
  const int d = rule.dim();
  ParameterStats s;
  s.mean = Eigen::VectorXd::Zero(d);
  s.cov = Eigen::MatrixXd::Zero(d, d);
  for (int q = 0; q < rule.count(); ++q)
    for (int a = 0; a < d; ++a) s.mean(a) += rule.weights[q] * rule.nodes[q][a];
  for (int q = 0; q < rule.count(); ++q) {
    Eigen::VectorXd dev(d);
    for (int a = 0; a < d; ++a) dev(a) = rule.nodes[q][a] - s.mean(a);
    s.cov += rule.weights[q] * dev * dev.transpose();
  }
  return s;
}

Eigen::VectorXd restrict_to_pattern(const KSpaceSignal& signal, const SamplingPattern& pattern) {
  const int nr = signal.extent(pattern.geometry.readout_axis);
  Eigen::VectorXd out(2 * static_cast<std::int64_t>(pattern.count()) * nr);
  std::int64_t pos = 0;
  for (const auto& line : pattern.lines) {
    const auto flat = line_sample_indices(signal, pattern, line);
    for (std::size_t f : flat) {
      out(pos++) = signal[f].real();
      out(pos++) = signal[f].imag();
    }
  }
  return out;
}

KSpaceSignal scatter_from_pattern(const Eigen::VectorXd& stacked, const SamplingPattern& pattern,
                                  int ndim, const std::array<int, 3>& extents) {
  KSpaceSignal out(ndim, extents);
  const int nr = extents[pattern.geometry.readout_axis];
  if (stacked.size() != 2 * static_cast<std::int64_t>(pattern.count()) * nr)
    throw DomainError("scatter_from_pattern: stacked length does not match pattern");
  std::int64_t pos = 0;
  for (const auto& line : pattern.lines) {
    const auto flat = line_sample_indices(out, pattern, line);
    for (std::size_t f : flat) {
      const double re = stacked(pos++);
      const double im = stacked(pos++);
      out[f] = Complex(re, im);
    }
  }
  return out;
}

MeasurementSet make_measurement_set(const KSpaceSignal& noisy_signal,
                                    const SamplingPattern& pattern, double sigma) {
  if (!(sigma > 0)) throw ValidationError("measurement set: sigma must be > 0");
  MeasurementSet m;
  m.pattern = pattern;
  m.z = restrict_to_pattern(noisy_signal, pattern);
  m.r_diag = Eigen::VectorXd::Constant(m.z.size(), sigma * sigma);
  return m;
}

AnomalyMatrix build_anomalies(const Ensemble& ensemble, const SamplingPattern& pattern) {
  const int count = ensemble.count();
  AnomalyMatrix a;
  if (pattern.count() == 0) {
    a.b.resize(0, count);
    a.mean_r.resize(0);
    return a;
  }

  Eigen::MatrixXd restricted(restrict_to_pattern(ensemble.signals[0], pattern).size(), count);
  for (int q = 0; q < count; ++q)
    restricted.col(q) = restrict_to_pattern(ensemble.signals[q], pattern);

  a.mean_r = Eigen::VectorXd::Zero(restricted.rows());
  for (int q = 0; q < count; ++q) a.mean_r += ensemble.rule.weights[q] * restricted.col(q);

  a.b.resize(restricted.rows(), count);
  for (int q = 0; q < count; ++q)
    a.b.col(q) = std::sqrt(ensemble.rule.weights[q]) * (restricted.col(q) - a.mean_r);
  return a;
}

Eigen::MatrixXd cross_covariance(const Ensemble& ensemble, const SamplingPattern& pattern) {
  const int d = ensemble.rule.dim();
  const int count = ensemble.count();

  Eigen::VectorXd mu_mean = Eigen::VectorXd::Zero(d);
  for (int q = 0; q < count; ++q)
    for (int a = 0; a < d; ++a) mu_mean(a) += ensemble.rule.weights[q] * ensemble.rule.nodes[q][a];

  const AnomalyMatrix anom = build_anomalies(ensemble, pattern);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d, anom.b.rows());
  for (int q = 0; q < count; ++q) {
    Eigen::VectorXd dev(d);
    for (int a = 0; a < d; ++a) dev(a) = ensemble.rule.nodes[q][a] - mu_mean(a);
    // b column already carries sqrt(w_q); multiply by the other sqrt(w_q)
    cross += std::sqrt(ensemble.rule.weights[q]) * dev * anom.b.col(q).transpose();
  }
  return cross;
}

GainOperator kalman_gain(const AnomalyMatrix& anomalies, const Eigen::MatrixXd& cross,
                         const Eigen::VectorXd& r_diag) {
  const auto n = anomalies.b.rows();
  const auto m = anomalies.b.cols();
  GainOperator g;
  if (n == 0) {
    g.k.resize(cross.rows(), 0);
    g.downdate = Eigen::MatrixXd::Zero(cross.rows(), cross.rows());
    return g;
  }
  if (r_diag.size() != n) throw ValidationError("kalman_gain: R size does not match anomalies");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(r_diag(i) > 0)) throw ValidationError("kalman_gain: R entries must be > 0");

  const Eigen::VectorXd r_inv = r_diag.cwiseInverse();
  const Eigen::MatrixXd rinv_b = r_inv.asDiagonal() * anomalies.b;          // 2n x M
  const Eigen::MatrixXd gram = Eigen::MatrixXd::Identity(m, m) + anomalies.b.transpose() * rinv_b;

  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw NumericalError("kalman_gain: inner system I + B^T R^-1 B is not positive definite");

  const Eigen::MatrixXd cross_rinv = cross * r_inv.asDiagonal(); // d x 2n
  const Eigen::MatrixXd inner = llt.solve((cross_rinv * anomalies.b).transpose()); // M x d
  g.k = cross_rinv - inner.transpose() * rinv_b.transpose();
  // K (Sigma_UU + R) K^T collapses to Sigma_mu_z K^T
  const Eigen::MatrixXd dd = cross * g.k.transpose();
  g.downdate = 0.5 * (dd + dd.transpose());
  return g;
}

UpdateResult minimum_variance_update(const ParameterStats& prior, const GainOperator& gain,
                                     const Eigen::VectorXd& z, const Eigen::VectorXd& predicted,
                                     const UncertainParameterPrior* support) {
  UpdateResult out;
  if (z.size() == 0) {
    out.posterior = prior; // zero observations: posterior is exactly the prior
    return out;
  }
  if (z.size() != predicted.size())
    throw ValidationError("minimum_variance_update: z and predicted sizes differ");
  if (gain.k.cols() != z.size())
    throw ValidationError("minimum_variance_update: gain does not match measurement size");

  out.posterior.mean = prior.mean + gain.k * (z - predicted);
  Eigen::MatrixXd cov = prior.cov - gain.downdate;
  out.posterior.cov = 0.5 * (cov + cov.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.posterior.cov);
  const double tol = 1e-8 * std::max(prior.cov.trace(), 0.0);
  if (es.eigenvalues().minCoeff() < -tol)
    throw NumericalError("minimum_variance_update: posterior covariance indefinite (min eig " +
                         std::to_string(es.eigenvalues().minCoeff()) + ")");

  if (support) {
    for (Eigen::Index a = 0; a < out.posterior.mean.size(); ++a) {
      const double lo = support->lower_per_m[a];
      const double hi = support->upper_per_m[a];
      if (out.posterior.mean(a) < lo) {
        out.posterior.mean(a) = lo;
        out.clamped = true;
      } else if (out.posterior.mean(a) > hi) {
        out.posterior.mean(a) = hi;
        out.clamped = true;
      }
    }
  }
  return out;
}

} // namespace mrtherm
