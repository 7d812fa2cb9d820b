#pragma once

#include <vector>

#include "mrtherm/bioheat.hpp"
#include "mrtherm/mrsignal.hpp"
#include "mrtherm/phantom.hpp"

namespace mrtherm {

/// Weighted nodes in parameter space; weights sum to 1 so that weighted sums
/// are expectations against the prior.
struct QuadratureRule {
  std::vector<std::vector<double>> nodes;
  std::vector<double> weights;

  int dim() const { return nodes.empty() ? 0 : static_cast<int>(nodes.front().size()); }
  int count() const { return static_cast<int>(nodes.size()); }
};

/// 1-D Gauss-Legendre rule mapped to [lo, hi], weights normalized to sum 1
/// (expectation against the uniform density on [lo, hi]). Exact for
/// polynomials up to degree 2n - 1.
QuadratureRule gauss_legendre(int n, double lo, double hi);

/// Tensor product of 1-D rules: cartesian nodes, product weights. Dimension
/// capped at 4.
QuadratureRule tensor_rule(const std::vector<QuadratureRule>& rules_1d);

/// GL rule per tissue over the prior box, tensorized.
QuadratureRule prior_tensor_rule(const UncertainParameterPrior& prior, int nodes_per_dim);

/// Per-node propagated model outputs: the temperature history and the k-space
/// signal at the fusion time. Members share the grid, time axis and weights.
struct Ensemble {
  QuadratureRule rule;
  double fusion_time_s = 0.0;
  std::vector<TemperatureHistory> histories;
  std::vector<KSpaceSignal> signals;

  int count() const { return rule.count(); }
};

/// Solves the Pennes system and evaluates the signal model at every node.
/// Nodes run in parallel; results are stored by node index so the outcome is
/// independent of execution order. Solver errors are rethrown annotated with
/// the node index.
Ensemble propagate_ensemble(const Phantom& phantom, const QuadratureRule& rule,
                            const MrProtocol& protocol, const SolverSettings& settings,
                            double fusion_time_s);

struct MomentField {
  Field<double> mean;
  Field<double> central; // zero field for order 1
  int order = 1;
};

struct SignalMoments {
  Field<Complex> mean;
  Field<double> central; // sum_q w_q |U_q - mean|^order, order >= 2
  int order = 1;
};

/// Weighted mean (order 1) or weighted central moment (order >= 2) of the
/// temperature ensemble at one stored time (default: fusion time snapshot).
MomentField temperature_moments(const Ensemble& ensemble, int order, int time_index = -1);

/// Same for the k-space ensemble; the central moment of a complex ensemble is
/// the scalar total moment sum_q w_q |U_q - mean|^order.
SignalMoments signal_moments(const Ensemble& ensemble, int order);

/// Ensemble variance of the signal in the centered k-space view; this is the
/// map line selection consumes.
Field<double> signal_variance_centered(const Ensemble& ensemble);

namespace kernels {

/// out[v] = sum_q w[q] members[q][v]; fixed summation order by member index,
/// identical in both variants.
void weighted_mean_serial(const std::vector<const double*>& members,
                          const std::vector<double>& weights, std::size_t n, double* out);
void weighted_mean_parallel(const std::vector<const double*>& members,
                            const std::vector<double>& weights, std::size_t n, double* out);

/// out[v] = sum_q w[q] (members[q][v] - mean[v])^order.
void weighted_central_serial(const std::vector<const double*>& members,
                             const std::vector<double>& weights, const double* mean, int order,
                             std::size_t n, double* out);
void weighted_central_parallel(const std::vector<const double*>& members,
                               const std::vector<double>& weights, const double* mean, int order,
                               std::size_t n, double* out);

} // namespace kernels

} // namespace mrtherm
