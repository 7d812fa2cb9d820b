#pragma once

#include <optional>
#include <string>

#include "mrtherm/bioheat.hpp"
#include "mrtherm/fusion.hpp"

namespace mrtherm {

struct ReconstructionResult {
  TemperatureHistory history;          // refined-model solve at the posterior mean
  Field<double> mean;                  // snapshot at the final output time
  std::optional<Field<double>> std_dev;
  ParameterStats posterior;
  std::string provenance; // pattern method, line count, seeds
};

/// Single Pennes solve with the laser deposition evaluated at the posterior
/// mean attenuation. The posterior mean must lie inside the prior support.
ReconstructionResult reconstruct_temperature(const Phantom& phantom,
                                             const ParameterStats& posterior,
                                             const SolverSettings& settings);

struct ErrorReport {
  double rmse_c = 0.0;
  double max_abs_error_c = 0.0;
  IndexBox region;
};

/// RMSE and maximum absolute error over a voxel-index box.
ErrorReport error_metrics(const Field<double>& estimate, const Field<double>& truth,
                          const IndexBox& region);

struct PosteriorTemperatureStats {
  Field<double> mean;
  Field<double> std_dev;
};

/// Gaussian-approximation re-propagation: Gauss-Legendre nodes over
/// [mean - 3 std, mean + 3 std] per parameter (clipped to the prior support),
/// weighted by the discretized normal density, pushed through the solver.
/// Moments are taken at the final output time.
PosteriorTemperatureStats posterior_temperature_stats(const Phantom& phantom,
                                                      const ParameterStats& posterior,
                                                      int nodes_per_dim,
                                                      const SolverSettings& settings);

} // namespace mrtherm
