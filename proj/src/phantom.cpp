#include "mrtherm/phantom.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

namespace mrtherm {

using nlohmann::json;

namespace {

const json& require_key(const json& j, const std::string& key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(ctx + ": missing required key '" + key + "'");
  return *it;
}

template <typename T>
T value_or(const json& j, const std::string& key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

std::vector<double> require_vec(const json& j, const std::string& key, const std::string& ctx,
                                std::size_t n) {
  auto v = require_key(j, key, ctx).get<std::vector<double>>();
  if (v.size() != n)
    throw ValidationError(ctx + "." + key + ": expected " + std::to_string(n) + " entries, got " +
                          std::to_string(v.size()));
  return v;
}

TissueProperties parse_tissue(const json& j, int idx) {
  const std::string ctx = "tissues[" + std::to_string(idx) + "]";
  TissueProperties t;
  t.name = value_or<std::string>(j, "name", "tissue" + std::to_string(idx));
  t.conductivity_w_per_m_k = require_key(j, "conductivity_w_per_m_k", ctx).get<double>();
  t.perfusion_kg_per_m3_s = require_key(j, "perfusion_kg_per_m3_s", ctx).get<double>();
  t.density_kg_per_m3 = require_key(j, "density_kg_per_m3", ctx).get<double>();
  t.specific_heat_j_per_kg_k = require_key(j, "specific_heat_j_per_kg_k", ctx).get<double>();
  t.blood_specific_heat_j_per_kg_k =
      require_key(j, "blood_specific_heat_j_per_kg_k", ctx).get<double>();
  t.arterial_temperature_c = value_or(j, "arterial_temperature_c", 37.0);
  t.t1_s = value_or(j, "t1_s", 1.0);
  t.t2_star_s = value_or(j, "t2_star_s", 0.07);
  t.t1_temp_slope_per_c = value_or(j, "t1_temp_slope_per_c", 0.0);

  if (t.conductivity_w_per_m_k < 0) throw ValidationError(ctx + ".conductivity_w_per_m_k: must be >= 0");
  if (t.perfusion_kg_per_m3_s < 0) throw ValidationError(ctx + ".perfusion_kg_per_m3_s: must be >= 0");
  if (!(t.density_kg_per_m3 > 0)) throw ValidationError(ctx + ".density_kg_per_m3: must be > 0");
  if (!(t.specific_heat_j_per_kg_k > 0))
    throw ValidationError(ctx + ".specific_heat_j_per_kg_k: must be > 0");
  if (t.blood_specific_heat_j_per_kg_k < 0)
    throw ValidationError(ctx + ".blood_specific_heat_j_per_kg_k: must be >= 0");
  if (!(t.t1_s > 0)) throw ValidationError(ctx + ".t1_s: must be > 0");
  if (!(t.t2_star_s > 0)) throw ValidationError(ctx + ".t2_star_s: must be > 0");
  return t;
}

Field<std::uint8_t> parse_labels(const json& j, const Grid& grid, int num_tissues) {
  Field<std::uint8_t> labels(grid, 0);
  const auto total = static_cast<std::size_t>(grid.num_voxels());

  auto check_label = [&](long long v) -> std::uint8_t {
    if (v < 0 || v >= num_tissues)
      throw DomainError("labels: tissue id " + std::to_string(v) + " out of range [0, " +
                        std::to_string(num_tissues) + ")");
    return static_cast<std::uint8_t>(v);
  };

  if (j.contains("inline")) {
    const auto& arr = j.at("inline");
    if (arr.size() != total)
      throw ValidationError("labels.inline: expected " + std::to_string(total) + " entries, got " +
                            std::to_string(arr.size()));
    for (std::size_t i = 0; i < total; ++i) labels[i] = check_label(arr[i].get<long long>());
    return labels;
  }

  if (j.contains("path")) {
    const std::string path = j.at("path").get<std::string>();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("labels.path: cannot open '" + path + "'");
    std::vector<std::uint8_t> raw(total);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(total));
    if (static_cast<std::size_t>(in.gcount()) != total)
      throw ValidationError("labels.path: '" + path + "' holds fewer than " +
                            std::to_string(total) + " bytes");
    for (std::size_t i = 0; i < total; ++i) labels[i] = check_label(raw[i]);
    return labels;
  }

  if (j.contains("fill")) {
    const std::uint8_t fill = check_label(j.at("fill").get<long long>());
    for (std::size_t i = 0; i < total; ++i) labels[i] = fill;
    // Optional overrides painted in order: voxel-index boxes, then spheres
    // in physical coordinates. This is the synthetic-segmentation path.
    if (j.contains("boxes")) {
      for (const auto& b : j.at("boxes")) {
        const std::uint8_t lab = check_label(require_key(b, "label", "labels.boxes").get<long long>());
        auto lo = require_key(b, "lo", "labels.boxes").get<std::vector<int>>();
        auto hi = require_key(b, "hi", "labels.boxes").get<std::vector<int>>();
        if (static_cast<int>(lo.size()) != grid.ndim() || static_cast<int>(hi.size()) != grid.ndim())
          throw ValidationError("labels.boxes: lo/hi must match grid axis count");
        lo.resize(3, 0);
        hi.resize(3, 1);
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::max(0, lo[a]);
          hi[a] = std::min(grid.extents()[a], hi[a]);
        }
        for (int i = lo[0]; i < hi[0]; ++i)
          for (int jj = lo[1]; jj < hi[1]; ++jj)
            for (int k = lo[2]; k < hi[2]; ++k) labels(i, jj, k) = lab;
      }
    }
    if (j.contains("spheres")) {
      for (const auto& s : j.at("spheres")) {
        const std::uint8_t lab = check_label(require_key(s, "label", "labels.spheres").get<long long>());
        auto c = require_key(s, "center_m", "labels.spheres").get<std::vector<double>>();
        if (static_cast<int>(c.size()) != grid.ndim())
          throw ValidationError("labels.spheres: center_m must match grid axis count");
        c.resize(3, 0.0);
        const double r = require_key(s, "radius_m", "labels.spheres").get<double>();
        for (int i = 0; i < grid.extents()[0]; ++i)
          for (int jj = 0; jj < grid.extents()[1]; ++jj)
            for (int k = 0; k < grid.extents()[2]; ++k) {
              const double dx = grid.position(0, i) - c[0];
              const double dy = grid.position(1, jj) - c[1];
              const double dz = grid.ndim() == 3 ? grid.position(2, k) - c[2] : 0.0;
              if (dx * dx + dy * dy + dz * dz <= r * r) labels(i, jj, k) = lab;
            }
      }
    }
    return labels;
  }

  throw ValidationError("labels: expected one of 'inline', 'path', or 'fill'");
}

FaceBoundary parse_face(const json& j, double u0, const std::string& ctx) {
  FaceBoundary f;
  const std::string kind = require_key(j, "kind", ctx).get<std::string>();
  if (kind == "dirichlet") {
    f.kind = BoundaryKind::Dirichlet;
    f.dirichlet_value_c = require_key(j, "value_c", ctx).get<double>();
  } else if (kind == "neumann") {
    f.kind = BoundaryKind::Neumann;
    f.neumann_flux_w_per_m2 = value_or(j, "flux_w_per_m2", 0.0);
  } else if (kind == "robin") {
    f.kind = BoundaryKind::Robin;
    f.robin_coeff_w_per_m2_k = require_key(j, "h_w_per_m2_k", ctx).get<double>();
    f.robin_ambient_c = value_or(j, "ambient_c", u0);
    if (f.robin_ambient_c != u0)
      throw ValidationError(ctx + ".ambient_c: robin ambient must equal the initial temperature");
  } else {
    throw ValidationError(ctx + ".kind: unknown boundary kind '" + kind + "'");
  }
  return f;
}

} // namespace

Phantom build_phantom(const json& config) {
  Phantom p;

  const json& jg = require_key(config, "grid", "config");
  auto dims = require_key(jg, "dims", "grid").get<std::vector<int>>();
  const std::size_t nd = dims.size();
  auto spacing = require_vec(jg, "spacing_m", "grid", nd);
  std::vector<double> origin(nd, 0.0);
  if (jg.contains("origin_m")) origin = require_vec(jg, "origin_m", "grid", nd);
  const auto cap = value_or<std::int64_t>(jg, "voxel_cap", Grid::kDefaultVoxelCap);
  p.grid = Grid(dims, spacing, origin, cap);

  const json& jt = require_key(config, "tissues", "config");
  if (!jt.is_array() || jt.empty()) throw ValidationError("tissues: must be a non-empty array");
  if (jt.size() > 255) throw ValidationError("tissues: at most 255 tissue types supported");
  for (std::size_t i = 0; i < jt.size(); ++i)
    p.tissues.push_back(parse_tissue(jt[i], static_cast<int>(i)));

  p.labels = parse_labels(require_key(config, "labels", "config"), p.grid, p.num_tissues());

  const json& jl = require_key(config, "laser", "config");
  if (jl.contains("positions_m")) {
    for (const auto& pos : jl.at("positions_m")) {
      auto v = pos.get<std::vector<double>>();
      if (static_cast<int>(v.size()) != p.grid.ndim())
        throw ValidationError("laser.positions_m: entries must match grid axis count");
      v.resize(3, 0.0);
      p.laser.positions_m.push_back({v[0], v[1], v[2]});
    }
  } else {
    auto v = require_key(jl, "position_m", "laser").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != p.grid.ndim())
      throw ValidationError("laser.position_m: must match grid axis count");
    v.resize(3, 0.0);
    p.laser.positions_m.push_back({v[0], v[1], v[2]});
  }
  if (p.laser.positions_m.empty()) throw ValidationError("laser.positions_m: must not be empty");
  for (const auto& pos : p.laser.positions_m)
    if (!p.grid.contains_point(pos))
      throw ValidationError("laser.position_m: fiber position lies outside the grid");

  p.laser.heating_duration_s = require_key(jl, "heating_duration_s", "laser").get<double>();
  if (jl.contains("schedule")) {
    for (const auto& e : jl.at("schedule")) {
      auto pair = e.get<std::vector<double>>();
      if (pair.size() != 2) throw ValidationError("laser.schedule: entries must be [t_start, watts]");
      p.laser.schedule.emplace_back(pair[0], pair[1]);
    }
  } else {
    p.laser.schedule.emplace_back(0.0, require_key(jl, "power_w", "laser").get<double>());
  }
  for (const auto& [t, w] : p.laser.schedule) {
    (void)t;
    if (w < 0) throw ValidationError("laser.schedule: power must be >= 0");
  }

  const json& jb = require_key(config, "boundary", "config");
  p.boundary.initial_temperature_c = require_key(jb, "initial_temperature_c", "boundary").get<double>();
  const double u0 = p.boundary.initial_temperature_c;
  FaceBoundary def;
  def.kind = BoundaryKind::Dirichlet;
  def.dirichlet_value_c = u0;
  if (jb.contains("default")) def = parse_face(jb.at("default"), u0, "boundary.default");
  for (auto& f : p.boundary.faces) f = def;
  if (jb.contains("faces")) {
    static const std::array<const char*, 6> names = {"x_min", "x_max", "y_min",
                                                     "y_max", "z_min", "z_max"};
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (jb.at("faces").contains(names[i]))
        p.boundary.faces[i] =
            parse_face(jb.at("faces").at(names[i]), u0, std::string("boundary.faces.") + names[i]);
    }
  }

  const json& jp = require_key(config, "prior", "config");
  if (!jp.is_array()) throw ValidationError("prior: must be an array");
  auto parse_interval = [](const json& e, const std::string& ctx) {
    const double lo = require_key(e, "lower_per_m", ctx).get<double>();
    const double hi = require_key(e, "upper_per_m", ctx).get<double>();
    if (!(lo > 0)) throw ValidationError(ctx + ".lower_per_m: bounds must be positive");
    if (!(lo < hi)) throw ValidationError(ctx + ": lower_per_m must be < upper_per_m");
    return std::make_pair(lo, hi);
  };
  if (jp.size() == 1 && p.num_tissues() > 1) {
    // single interval broadcast across tissues
    auto [lo, hi] = parse_interval(jp[0], "prior[0]");
    p.prior.lower_per_m.assign(p.num_tissues(), lo);
    p.prior.upper_per_m.assign(p.num_tissues(), hi);
  } else {
    if (jp.size() != static_cast<std::size_t>(p.num_tissues()))
      throw ValidationError("prior: expected one interval per tissue (" +
                            std::to_string(p.num_tissues()) + "), got " +
                            std::to_string(jp.size()));
    for (std::size_t i = 0; i < jp.size(); ++i) {
      auto [lo, hi] = parse_interval(jp[i], "prior[" + std::to_string(i) + "]");
      p.prior.lower_per_m.push_back(lo);
      p.prior.upper_per_m.push_back(hi);
    }
  }

  return p;
}

Phantom load_phantom(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("phantom config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("phantom config: " + std::string(e.what()));
  }
  return build_phantom(j);
}

Field<double> realize_attenuation(const Field<std::uint8_t>& labels,
                                  const std::vector<double>& mu, int num_tissues) {
  if (static_cast<int>(mu.size()) != num_tissues)
    throw DomainError("realize_attenuation: got " + std::to_string(mu.size()) +
                      " parameters for " + std::to_string(num_tissues) + " tissues");
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (!(mu[i] > 0))
      throw DomainError("realize_attenuation: mu[" + std::to_string(i) + "] must be > 0");

  Field<double> out(labels.ndim(), labels.extents());
  const std::size_t n = labels.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
    out[i] = mu[labels[i]];
  return out;
}

} // namespace mrtherm
