#include "mrtherm/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

namespace mrtherm {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

namespace {

void write_raw(const std::string& path, const double* data, std::size_t count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("dump: cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
}

json grid_sidecar(const Grid& grid) {
  json j;
  std::vector<int> dims;
  std::vector<double> spacing, origin;
  for (int a = 0; a < grid.ndim(); ++a) {
    dims.push_back(grid.extent(a));
    spacing.push_back(grid.spacing(a));
    origin.push_back(grid.origin(a));
  }
  j["dims"] = dims;
  j["spacing_m"] = spacing;
  j["origin_m"] = origin;
  j["layout"] = "row-major, last axis fastest";
  j["dtype"] = "float64 little-endian";
  return j;
}

void write_sidecar(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("dump: cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

} // namespace

void dump_field(const Field<double>& field, const Grid& grid, double time_s,
                const std::string& units, const std::string& base_path) {
  write_raw(base_path + ".f64", field.data(), field.size());
  json j = grid_sidecar(grid);
  j["times_s"] = std::vector<double>{time_s};
  j["units"] = units;
  write_sidecar(base_path + ".json", j);
}

void dump_history(const TemperatureHistory& history, const Grid& grid,
                  const std::string& base_path) {
  std::vector<double> all;
  for (const auto& f : history.fields) all.insert(all.end(), f.values().begin(), f.values().end());
  write_raw(base_path + ".f64", all.data(), all.size());
  json j = grid_sidecar(grid);
  j["times_s"] = history.times_s;
  j["units"] = "degC";
  write_sidecar(base_path + ".json", j);
}

void dump_kspace(const KSpaceSignal& signal, int readout_axis, double snr, std::uint64_t seed,
                 const std::string& base_path) {
  std::vector<double> interleaved;
  interleaved.reserve(signal.size() * 2);
  for (const auto& z : signal.values()) {
    interleaved.push_back(z.real());
    interleaved.push_back(z.imag());
  }
  write_raw(base_path + ".f64", interleaved.data(), interleaved.size());

  json j;
  std::vector<int> dims;
  for (int a = 0; a < signal.ndim(); ++a) dims.push_back(signal.extent(a));
  j["dims"] = dims;
  j["layout"] = "row-major, last axis fastest, interleaved real/imag";
  j["dtype"] = "float64 little-endian";
  j["zero_frequency"] = "index 0 per axis (FFT layout)";
  std::vector<std::string> roles;
  for (int a = 0; a < signal.ndim(); ++a)
    roles.push_back(a == readout_axis ? "readout" : "phase-encode");
  j["axis_roles"] = roles;
  j["snr"] = snr;
  j["seed"] = seed;
  write_sidecar(base_path + ".json", j);
}

Field<double> load_field(const std::string& base_path) {
  std::ifstream side(base_path + ".json");
  if (!side) throw ValidationError("load: cannot open '" + base_path + ".json'");
  json j;
  side >> j;
  auto dims = j.at("dims").get<std::vector<int>>();
  std::array<int, 3> ext{1, 1, 1};
  for (std::size_t a = 0; a < dims.size(); ++a) ext[a] = dims[a];
  Field<double> f(static_cast<int>(dims.size()), ext);

  std::ifstream raw(base_path + ".f64", std::ios::binary);
  if (!raw) throw ValidationError("load: cannot open '" + base_path + ".f64'");
  raw.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * 8));
  if (static_cast<std::size_t>(raw.gcount()) != f.size() * 8)
    throw ValidationError("load: '" + base_path + ".f64' is truncated");
  return f;
}

} // namespace mrtherm
