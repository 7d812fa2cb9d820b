#include "mrtherm/bioheat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mrtherm {

namespace {

constexpr double kFourPi = 12.566370614359172953850573533118;
constexpr double kDivergenceLimitC = 1e4;

double harmonic(double a, double b) {
  if (a <= 0.0 || b <= 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

} // namespace

Field<double> laser_source(const Grid& grid, const LaserSpec& laser,
                           const Field<double>& mu_field, double t, double distance_clamp_m) {
  const double clamp = std::max(grid.min_spacing() * 0.5, distance_clamp_m);
  const double power = laser.power_at(t);
  const double split = 1.0 / static_cast<double>(laser.positions_m.size());
  Field<double> q(grid, 0.0);
  if (power == 0.0) return q;

  const auto& ext = grid.extents();
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j)
      for (int k = 0; k < ext[2]; ++k) {
        const double mu = mu_field(i, j, k);
        double acc = 0.0;
        for (const auto& pos : laser.positions_m) {
          const double dx = grid.position(0, i) - pos[0];
          const double dy = grid.position(1, j) - pos[1];
          const double dz = grid.ndim() == 3 ? grid.position(2, k) - pos[2] : 0.0;
          const double r = std::max(std::sqrt(dx * dx + dy * dy + dz * dz), clamp);
          acc += split * mu * mu * std::exp(-mu * r) / (kFourPi * r);
        }
        q(i, j, k) = power * acc;
      }
  return q;
}

namespace kernels {

PennesWorkspace make_workspace(const Phantom& phantom, const Field<double>& mu_field,
                               const SolverSettings& settings) {
  PennesWorkspace ws;
  ws.grid = phantom.grid;
  ws.faces = phantom.boundary.faces;
  ws.extra_source = settings.extra_source;
  const auto n = static_cast<std::size_t>(phantom.grid.num_voxels());
  ws.lambda.resize(n);
  ws.inv_rho_c.resize(n);
  ws.omega_cb.resize(n);
  ws.u_arterial.resize(n);
  ws.pinned.assign(n, 0);
  ws.pinned_value.assign(n, 0.0);

  for (int a = 0; a < phantom.grid.ndim(); ++a) {
    ws.inv_h[a] = 1.0 / phantom.grid.spacing(a);
    ws.inv_h2[a] = ws.inv_h[a] * ws.inv_h[a];
  }

  // Lambda(u, x) and omega(u, x) are constants per tissue here; this loop is
  // the single evaluation point if a temperature dependence is ever added.
  for (std::size_t v = 0; v < n; ++v) {
    const TissueProperties& tp = phantom.tissues[phantom.labels[v]];
    ws.lambda[v] = tp.conductivity_w_per_m_k;
    ws.inv_rho_c[v] = 1.0 / (tp.density_kg_per_m3 * tp.specific_heat_j_per_kg_k);
    ws.omega_cb[v] = tp.perfusion_kg_per_m3_s * tp.blood_specific_heat_j_per_kg_k;
    ws.u_arterial[v] = tp.arterial_temperature_c;
  }

  // A node on any Dirichlet face is pinned; the first matching face in axis
  // order decides the value at edges and corners.
  const auto& ext = phantom.grid.extents();
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j)
      for (int k = 0; k < ext[2]; ++k) {
        const int idxs[3] = {i, j, k};
        for (int a = 0; a < phantom.grid.ndim(); ++a) {
          for (int side = 0; side < 2; ++side) {
            if (idxs[a] != (side == 0 ? 0 : ext[a] - 1)) continue;
            const FaceBoundary& f = ws.faces[2 * a + side];
            if (f.kind != BoundaryKind::Dirichlet) continue;
            const std::size_t v = mu_field.index(i, j, k);
            if (!ws.pinned[v]) {
              ws.pinned[v] = 1;
              ws.pinned_value[v] = f.dirichlet_value_c;
            }
          }
        }
      }

  Field<double> shape =
      laser_source(phantom.grid, phantom.laser, mu_field, /*t=*/0.0, settings.distance_clamp_m);
  const double p0 = phantom.laser.power_at(0.0);
  if (p0 > 0.0) {
    for (auto& s : shape.values()) s /= p0;
  } else {
    // power off at t=0: rebuild the unit-power shape directly
    LaserSpec unit = phantom.laser;
    unit.schedule = {{0.0, 1.0}};
    unit.heating_duration_s = std::numeric_limits<double>::infinity();
    shape = laser_source(phantom.grid, unit, mu_field, 0.0, settings.distance_clamp_m);
  }
  ws.source_shape = std::move(shape.values());
  return ws;
}

namespace {

/// Per-voxel explicit update shared verbatim by the serial and parallel
/// kernels so the two stay bit-identical.
inline double update_voxel(const PennesWorkspace& ws, const double* u, double power, double t,
                           double dt, int i, int j, int k, std::size_t v) {
  if (ws.pinned[v]) return ws.pinned_value[v];

  const auto& ext = ws.grid.extents();
  const std::size_t stride[3] = {static_cast<std::size_t>(ext[1]) * ext[2],
                                 static_cast<std::size_t>(ext[2]), 1};
  const int idxs[3] = {i, j, k};
  const double ui = u[v];
  const double lam_i = ws.lambda[v];
  double acc = 0.0;

  for (int a = 0; a < ws.grid.ndim(); ++a) {
    const int pos = idxs[a];
    const std::size_t s = stride[a];
    // low side
    if (pos > 0) {
      const std::size_t nb = v - s;
      acc += harmonic(lam_i, ws.lambda[nb]) * (u[nb] - ui) * ws.inv_h2[a];
    } else {
      const FaceBoundary& f = ws.faces[2 * a + 0];
      const std::size_t inner = v + s;
      if (f.kind == BoundaryKind::Neumann) {
        acc += lam_i * (u[inner] - ui) * ws.inv_h2[a];
        acc -= 2.0 * f.neumann_flux_w_per_m2 * ws.inv_h[a];
      } else if (f.kind == BoundaryKind::Robin) {
        acc += lam_i * (u[inner] - ui) * ws.inv_h2[a];
        acc -= 2.0 * f.robin_coeff_w_per_m2_k * (ui - f.robin_ambient_c) * ws.inv_h[a];
      }
    }
    // high side
    if (pos < ext[a] - 1) {
      const std::size_t nb = v + s;
      acc += harmonic(lam_i, ws.lambda[nb]) * (u[nb] - ui) * ws.inv_h2[a];
    } else {
      const FaceBoundary& f = ws.faces[2 * a + 1];
      const std::size_t inner = v - s;
      if (f.kind == BoundaryKind::Neumann) {
        acc += lam_i * (u[inner] - ui) * ws.inv_h2[a];
        acc -= 2.0 * f.neumann_flux_w_per_m2 * ws.inv_h[a];
      } else if (f.kind == BoundaryKind::Robin) {
        acc += lam_i * (u[inner] - ui) * ws.inv_h2[a];
        acc -= 2.0 * f.robin_coeff_w_per_m2_k * (ui - f.robin_ambient_c) * ws.inv_h[a];
      }
    }
  }

  acc -= ws.omega_cb[v] * (ui - ws.u_arterial[v]);
  acc += power * ws.source_shape[v];
  if (ws.extra_source)
    acc += ws.extra_source(ws.grid.position(0, i), ws.grid.position(1, j),
                           ws.grid.ndim() == 3 ? ws.grid.position(2, k) : 0.0, t);

  return ui + dt * ws.inv_rho_c[v] * acc;
}

} // namespace

void pennes_step_serial(const PennesWorkspace& ws, const double* u, double* out, double power,
                        double t, double dt) {
  const auto& ext = ws.grid.extents();
  std::size_t v = 0;
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j)
      for (int k = 0; k < ext[2]; ++k, ++v) out[v] = update_voxel(ws, u, power, t, dt, i, j, k, v);
}

void pennes_step_parallel(const PennesWorkspace& ws, const double* u, double* out, double power,
                          double t, double dt) {
  const auto& ext = ws.grid.extents();
#pragma omp parallel for collapse(2) schedule(static)
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j) {
      std::size_t v = (static_cast<std::size_t>(i) * ext[1] + j) * ext[2];
      for (int k = 0; k < ext[2]; ++k, ++v) out[v] = update_voxel(ws, u, power, t, dt, i, j, k, v);
    }
}

double stable_timestep(const PennesWorkspace& ws) {
  const auto& ext = ws.grid.extents();
  double max_coeff_over_rho_c = 0.0;

  std::size_t v = 0;
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j)
      for (int k = 0; k < ext[2]; ++k, ++v) {
        if (ws.pinned[v]) continue;
        const int idxs[3] = {i, j, k};
        const std::size_t stride[3] = {static_cast<std::size_t>(ext[1]) * ext[2],
                                       static_cast<std::size_t>(ext[2]), 1};
        const double lam_i = ws.lambda[v];
        double coeff = ws.omega_cb[v];
        for (int a = 0; a < ws.grid.ndim(); ++a) {
          for (int side = 0; side < 2; ++side) {
            const bool at_face = idxs[a] == (side == 0 ? 0 : ext[a] - 1);
            if (!at_face) {
              const std::size_t nb = side == 0 ? v - stride[a] : v + stride[a];
              coeff += harmonic(lam_i, ws.lambda[nb]) * ws.inv_h2[a];
            } else {
              const FaceBoundary& f = ws.faces[2 * a + side];
              if (f.kind == BoundaryKind::Neumann) {
                coeff += lam_i * ws.inv_h2[a];
              } else if (f.kind == BoundaryKind::Robin) {
                coeff += lam_i * ws.inv_h2[a] + 2.0 * f.robin_coeff_w_per_m2_k * ws.inv_h[a];
              }
            }
          }
        }
        max_coeff_over_rho_c = std::max(max_coeff_over_rho_c, coeff * ws.inv_rho_c[v]);
      }

  if (max_coeff_over_rho_c == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / max_coeff_over_rho_c;
}

} // namespace kernels

double stable_timestep(const Phantom& phantom) {
  // mu does not enter the bound; any positive realization works.
  Field<double> mu_field =
      realize_attenuation(phantom.labels, std::vector<double>(phantom.num_tissues(), 1.0),
                          phantom.num_tissues());
  SolverSettings s;
  auto ws = kernels::make_workspace(phantom, mu_field, s);
  return kernels::stable_timestep(ws);
}

TemperatureHistory solve_pennes(const Phantom& phantom, const std::vector<double>& mu,
                                const SolverSettings& settings) {
  if (settings.output_times_s.empty())
    throw ValidationError("solver: output_times_s must not be empty");
  for (std::size_t i = 0; i < settings.output_times_s.size(); ++i) {
    if (settings.output_times_s[i] < 0.0)
      throw ValidationError("solver: output times must be >= 0");
    if (i > 0 && settings.output_times_s[i] <= settings.output_times_s[i - 1])
      throw ValidationError("solver: output times must be strictly increasing");
  }

  Field<double> mu_field = realize_attenuation(phantom.labels, mu, phantom.num_tissues());
  const auto ws = kernels::make_workspace(phantom, mu_field, settings);
  const double dt_stable = kernels::stable_timestep(ws);

  double dt = settings.dt_s;
  if (dt <= 0.0) {
    if (!std::isfinite(dt_stable))
      throw ValidationError("solver: operator has no stability constraint; dt_s must be set");
    dt = 0.9 * dt_stable;
  }
  if (settings.enforce_stability && dt > dt_stable * (1.0 + 1e-12))
    throw ValidationError("solver: dt_s " + std::to_string(dt) + " exceeds stable bound " +
                          std::to_string(dt_stable));

  const auto n = static_cast<std::size_t>(phantom.grid.num_voxels());
  std::vector<double> u(n, phantom.boundary.initial_temperature_c);
  std::vector<double> next(n, 0.0);

  auto step = settings.parallel ? kernels::pennes_step_parallel : kernels::pennes_step_serial;

  TemperatureHistory hist;
  double t = 0.0;
  for (double target : settings.output_times_s) {
    while (target - t > 1e-12 * std::max(1.0, target)) {
      const double step_dt = std::min(dt, target - t);
      step(ws, u.data(), next.data(), phantom.laser.power_at(t), t, step_dt);
      u.swap(next);
      t += step_dt;

      double umax = 0.0;
      for (double x : u) umax = std::max(umax, std::abs(x));
      if (!(umax <= kDivergenceLimitC))
        throw NumericalError("solver diverged: |u| reached " + std::to_string(umax) + " C at t=" +
                             std::to_string(t));
    }
    t = target;
    Field<double> snap(phantom.grid);
    std::copy(u.begin(), u.end(), snap.values().begin());
    hist.times_s.push_back(target);
    hist.fields.push_back(std::move(snap));
  }
  return hist;
}

} // namespace mrtherm
