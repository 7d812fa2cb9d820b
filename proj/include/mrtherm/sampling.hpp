#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mrtherm/mrsignal.hpp"
#include "mrtherm/phantom.hpp"
#include "mrtherm/uq.hpp"

namespace mrtherm {

/// The phase-encode raster left after fixing the readout axis: one axis for
/// planar k-space, two for volumetric. All indices are centered-view indices
/// (DC at extent/2).
struct PhaseGeometry {
  int readout_axis = 0;
  std::vector<int> phase_axes;       // remaining axes, ascending
  std::array<int, 2> extents{1, 1};  // one entry per phase axis
  int num_axes = 1;

  int num_candidates() const { return extents[0] * extents[1]; }

  std::array<int, 2> coords(int flat) const {
    if (num_axes == 1) return {flat, 0};
    return {flat / extents[1], flat % extents[1]};
  }
  int flat(const std::array<int, 2>& c) const {
    return num_axes == 1 ? c[0] : c[0] * extents[1] + c[1];
  }
};

PhaseGeometry phase_geometry(int ndim, const std::array<int, 3>& kgrid_extents, int readout_axis);

/// Per-candidate-line variance score: the sum of the variance map over the
/// readout axis (lines are full readout sweeps).
struct LineScores {
  PhaseGeometry geometry;
  std::vector<double> scores; // row-major over geometry.extents
};

/// vmap must be the centered-view ensemble variance (signal_variance_centered).
LineScores line_scores(const Field<double>& vmap_centered, int readout_axis);

struct SamplingPattern {
  std::string method; // "maxvar" | "rectilinear" | "poisson"
  PhaseGeometry geometry;
  std::vector<std::array<int, 2>> lines; // centered phase-encode indices, selection order
  int separation = 1;                    // N_d
  std::uint64_t seed = 0;
  int requested = 0;
  bool best_effort = false; // poisson produced fewer than requested lines

  int count() const { return static_cast<int>(lines.size()); }
};

/// Greedy descending-score selection. A candidate within Euclidean distance
/// N_d (|i-j| on one phase axis) of any selected line is skipped; ties break
/// toward the lower flat index. Exact for N_d = 1, documented approximation
/// beyond. Throws DomainError naming the achievable maximum when N is
/// infeasible.
SamplingPattern select_lines_maxvar(const LineScores& scores, int n, int n_d = 1);

/// Evenly strided lines over the phase raster: round(i * C / N) for
/// i = 0..N-1, deduplicated, always starting at index 0.
SamplingPattern rectilinear_pattern(const PhaseGeometry& geometry, int n);

struct PoissonDiskParams {
  double r0 = 1.0;   // base exclusion radius, grid units
  double beta = 0.0; // density slope: r(k) = r0 (1 + beta |k - center| / k_max)
  std::uint64_t seed = 0;
  int attempts_per_candidate = 60;
};

/// Seeded variable-density dart throwing on the phase raster; darts snap to
/// the integer grid. If more than n darts survive, the n closest to the
/// k-space center are kept; if fewer, the pattern carries best_effort = true.
SamplingPattern poisson_disk_pattern(const PhaseGeometry& geometry, int n,
                                     const PoissonDiskParams& params);

/// Re-checks the pattern's own invariants (indices in range, no duplicates,
/// pairwise separation >= N_d). Throws ValidationError on violation.
void validate_pattern(const SamplingPattern& pattern);

/// CSV serialization: parameter comments, then one row per line.
void write_pattern_csv(const SamplingPattern& pattern, const std::string& path);

struct MiBudget {
  int z_nodes_per_axis = 24;
  double z_halfwidth_sigmas = 8.0;
  int max_kpoints = 64;
  long long max_evals = 1'000'000'000;
};

/// Reference mutual information I(mu; z) per k-point for a 1-parameter prior,
/// by nested quadrature: the outer rule discretizes p(mu), the inner 2-D
/// Gauss-Legendre grid integrates over the complex measurement. forward[k][q]
/// holds the model signal at k for the rule's q-th node. Returns nats.
std::vector<double> mutual_information_reference(const QuadratureRule& mu_rule,
                                                 const std::vector<std::vector<Complex>>& forward,
                                                 double sigma, const MiBudget& budget = {});

/// Convenience overload evaluating a scalar map mu -> U(mu, k) on a fresh
/// Gauss-Legendre discretization of the uniform prior.
std::vector<double> mutual_information_reference(
    const UncertainParameterPrior& prior, const std::function<Complex(double, int)>& forward,
    int num_kpoints, double sigma, int mu_nodes = 64, const MiBudget& budget = {});

} // namespace mrtherm
