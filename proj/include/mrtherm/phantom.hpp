#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mrtherm/grid.hpp"

namespace mrtherm {

/// Thermal and perfusion constants for one tissue type. SI units,
/// temperatures in degrees C.
struct TissueProperties {
  std::string name;
  double conductivity_w_per_m_k = 0.0;       // Lambda
  double perfusion_kg_per_m3_s = 0.0;        // omega
  double density_kg_per_m3 = 0.0;            // rho
  double specific_heat_j_per_kg_k = 0.0;     // c
  double blood_specific_heat_j_per_kg_k = 0; // c_blood
  double arterial_temperature_c = 37.0;      // u_a
  // MR relaxation, consumed by the signal model.
  double t1_s = 1.0;
  double t2_star_s = 0.07;
  double t1_temp_slope_per_c = 0.0; // T1 = t1_s * (1 + slope * du)
};

/// Point photon source(s). Multiple positions superpose point sources with
/// the instantaneous power split equally among them.
struct LaserSpec {
  std::vector<std::array<double, 3>> positions_m;
  // Piecewise-constant schedule: power_at holds entries (t_start, watts),
  // sorted by t_start, value holds from t_start until the next entry.
  std::vector<std::pair<double, double>> schedule;
  double heating_duration_s = 0.0; // power forced to zero at and after this time

  double power_at(double t) const {
    if (t < 0.0 || (heating_duration_s > 0.0 && t >= heating_duration_s)) return 0.0;
    double p = 0.0;
    for (const auto& [start, watts] : schedule) {
      if (t + 1e-12 >= start) p = watts;
      else break;
    }
    return p;
  }
};

enum class BoundaryKind { Dirichlet, Neumann, Robin };

struct FaceBoundary {
  BoundaryKind kind = BoundaryKind::Dirichlet;
  double dirichlet_value_c = 37.0;    // u_D
  double neumann_flux_w_per_m2 = 0.0; // g_N, positive = heat leaving the domain
  double robin_coeff_w_per_m2_k = 0.0; // h
  double robin_ambient_c = 37.0;       // u_inf (= u_0)
};

/// One boundary condition per grid face. Face order: x_min, x_max, y_min,
/// y_max, z_min, z_max (first 2*ndim entries meaningful).
struct BoundarySpec {
  std::array<FaceBoundary, 6> faces;
  double initial_temperature_c = 37.0; // u_0
};

/// Uniform prior box for the attenuation vector, one interval per tissue.
struct UncertainParameterPrior {
  std::vector<double> lower_per_m;
  std::vector<double> upper_per_m;

  std::size_t dim() const { return lower_per_m.size(); }
};

struct Phantom {
  Grid grid;
  Field<std::uint8_t> labels; // tissue id per voxel, in [0, tissues.size())
  std::vector<TissueProperties> tissues;
  LaserSpec laser;
  BoundarySpec boundary;
  UncertainParameterPrior prior;

  int num_tissues() const { return static_cast<int>(tissues.size()); }
};

/// Builds and validates a Phantom from its JSON description. Throws
/// ValidationError naming the offending key on schema violations and
/// DomainError for label ids out of range.
Phantom build_phantom(const nlohmann::json& config);

/// Convenience: parse the file at `path` and build.
Phantom load_phantom(const std::string& path);

/// Assembles the per-voxel attenuation field for one realization of the
/// parameter vector: voxel value = mu[label(voxel)].
Field<double> realize_attenuation(const Field<std::uint8_t>& labels,
                                  const std::vector<double>& mu, int num_tissues);

} // namespace mrtherm
