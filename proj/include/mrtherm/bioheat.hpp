#pragma once

#include <functional>
#include <vector>

#include "mrtherm/grid.hpp"
#include "mrtherm/phantom.hpp"

namespace mrtherm {

/// Extra volumetric source hook, W/m^3 as a function of position and time.
/// Used by manufactured-solution tests; the laser term is separate.
using SourceFn = std::function<double(double x, double y, double z, double t)>;

struct SolverSettings {
  double dt_s = 0.0; // <= 0 selects 0.9 x stable_timestep
  std::vector<double> output_times_s;
  double distance_clamp_m = 0.0; // effective clamp = max(h_min/2, this)
  bool enforce_stability = true;
  bool parallel = true; // OpenMP step kernel; serial reference otherwise
  SourceFn extra_source;
};

struct TemperatureHistory {
  std::vector<double> times_s;
  std::vector<Field<double>> fields; // one per output time

  const Field<double>& at_time(double t, double tol = 1e-9) const {
    for (std::size_t i = 0; i < times_s.size(); ++i)
      if (std::abs(times_s[i] - t) <= tol) return fields[i];
    throw DomainError("temperature history: no snapshot at t=" + std::to_string(t));
  }
};

/// Q_laser(x, t) = P(t) mu(x)^2 exp(-mu(x) r) / (4 pi r), r clamped below by
/// max(h_min/2, distance_clamp_m). Several fiber positions superpose with the
/// power split equally.
Field<double> laser_source(const Grid& grid, const LaserSpec& laser,
                           const Field<double>& mu_field, double t,
                           double distance_clamp_m = 0.0);

/// Largest dt for which the explicit update is a convex combination at every
/// non-Dirichlet node (positivity => L-infinity stability). Returns +inf when
/// the discrete operator has no constraint (Lambda = 0 and omega = 0).
double stable_timestep(const Phantom& phantom);

/// Explicit finite-difference solve of the Pennes system for one attenuation
/// realization. 5/7-point Laplacian, harmonic-mean face conductivities,
/// boundary kinds applied per face. Throws NumericalError if any |u| exceeds
/// 1e4 C (divergence guard).
TemperatureHistory solve_pennes(const Phantom& phantom, const std::vector<double>& mu,
                                const SolverSettings& settings);

namespace kernels {

/// Everything the step kernel needs, precomputed once per solve.
struct PennesWorkspace {
  Grid grid;
  std::array<double, 3> inv_h{0, 0, 0};
  std::array<double, 3> inv_h2{0, 0, 0};
  std::array<FaceBoundary, 6> faces;
  std::vector<double> lambda;     // per-voxel conductivity
  std::vector<double> inv_rho_c;  // 1 / (rho c)
  std::vector<double> omega_cb;   // omega * c_blood
  std::vector<double> u_arterial; // u_a
  std::vector<double> source_shape; // laser source at unit power, W/m^3/W
  std::vector<std::uint8_t> pinned; // Dirichlet-face nodes
  std::vector<double> pinned_value;
  SourceFn extra_source;
};

PennesWorkspace make_workspace(const Phantom& phantom, const Field<double>& mu_field,
                               const SolverSettings& settings);

/// One explicit Euler step: out = u + dt * rhs(u, t). `power` is P(t) at the
/// step start. The two variants compute identical arithmetic per voxel; the
/// parallel one distributes voxels across OpenMP threads.
void pennes_step_serial(const PennesWorkspace& ws, const double* u, double* out, double power,
                        double t, double dt);
void pennes_step_parallel(const PennesWorkspace& ws, const double* u, double* out, double power,
                          double t, double dt);

/// dt bound for the workspace's discrete operator (see stable_timestep).
double stable_timestep(const PennesWorkspace& ws);

} // namespace kernels

} // namespace mrtherm
