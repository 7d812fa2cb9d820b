#pragma once

#include <Eigen/Dense>
#include <optional>

#include "mrtherm/sampling.hpp"
#include "mrtherm/uq.hpp"

namespace mrtherm {

struct ParameterStats {
  Eigen::VectorXd mean; // d
  Eigen::MatrixXd cov;  // d x d, symmetric PSD
};

/// Quadrature mean and covariance of the parameter vector under the rule.
ParameterStats prior_stats(const QuadratureRule& rule);

/// Measurements on the selected lines, stacked as a real vector: lines in
/// pattern order, samples in ascending (centered) readout index, real part
/// before imaginary part of each sample.
struct MeasurementSet {
  SamplingPattern pattern;
  Eigen::VectorXd z;      // 2 * lines * samples_per_line
  Eigen::VectorXd r_diag; // per-component noise variance (sigma^2)
};

/// Extracts the stacked real vector for a pattern from an FFT-layout signal.
Eigen::VectorXd restrict_to_pattern(const KSpaceSignal& signal, const SamplingPattern& pattern);

/// Inverse of the restriction ordering: scatters a stacked vector back into a
/// zero-filled FFT-layout signal.
KSpaceSignal scatter_from_pattern(const Eigen::VectorXd& stacked, const SamplingPattern& pattern,
                                  int ndim, const std::array<int, 3>& extents);

MeasurementSet make_measurement_set(const KSpaceSignal& noisy_signal,
                                    const SamplingPattern& pattern, double sigma);

/// Columns b_q = sqrt(w_q) (r_q - r_mean) of the restricted signal ensemble;
/// B B^T is the signal covariance without ever materializing it.
struct AnomalyMatrix {
  Eigen::MatrixXd b;      // 2n x M
  Eigen::VectorXd mean_r; // restricted ensemble mean, 2n
};

AnomalyMatrix build_anomalies(const Ensemble& ensemble, const SamplingPattern& pattern);

/// Sigma_mu_z = sum_q w_q (mu_q - mu_mean)(r_q - r_mean)^T, d x 2n.
Eigen::MatrixXd cross_covariance(const Ensemble& ensemble, const SamplingPattern& pattern);

struct GainOperator {
  Eigen::MatrixXd k;        // d x 2n
  Eigen::MatrixXd downdate; // K (B B^T + R) K^T = Sigma_mu_z K^T, d x d
};

/// K = Sigma_mu_z (B B^T + R)^-1 through the low-rank identity
/// (B B^T + R)^-1 = R^-1 - R^-1 B (I + B^T R^-1 B)^-1 B^T R^-1 so only an
/// M x M system is ever factorized. Throws NumericalError if that inner
/// system cannot be solved.
GainOperator kalman_gain(const AnomalyMatrix& anomalies, const Eigen::MatrixXd& cross,
                         const Eigen::VectorXd& r_diag);

struct UpdateResult {
  ParameterStats posterior;
  bool clamped = false; // posterior mean hit the prior support bounds
};

/// mu+ = mu- + K (z - predicted); Sigma+ = Sigma- - Sigma_mu_z K^T,
/// symmetrized. With support bounds given, the posterior mean is clamped into
/// them and the flag records whether clamping occurred. Throws NumericalError
/// if Sigma+ is indefinite beyond -1e-8 * trace(Sigma-).
UpdateResult minimum_variance_update(const ParameterStats& prior, const GainOperator& gain,
                                     const Eigen::VectorXd& z, const Eigen::VectorXd& predicted,
                                     const UncertainParameterPrior* support = nullptr);

} // namespace mrtherm
