#pragma once

#include <string>
#include <vector>

#include "mrtherm/bioheat.hpp"
#include "mrtherm/mrsignal.hpp"

namespace mrtherm {

/// Shortest round-trippable decimal form of a double; the CSV/report writers
/// all go through this so reruns are byte-stable.
std::string format_double(double v);

/// Raw little-endian float64 dump (row-major) with a JSON sidecar carrying
/// dims, spacing, times and units. Writes <base>.f64 and <base>.json.
void dump_field(const Field<double>& field, const Grid& grid, double time_s,
                const std::string& units, const std::string& base_path);

void dump_history(const TemperatureHistory& history, const Grid& grid,
                  const std::string& base_path);

/// Interleaved real/imag little-endian float64, row-major, with a sidecar
/// naming dims, axis roles, SNR and seed. Writes <base>.f64 and <base>.json.
void dump_kspace(const KSpaceSignal& signal, int readout_axis, double snr, std::uint64_t seed,
                 const std::string& base_path);

/// Reads a field dumped by dump_field (verification convenience).
Field<double> load_field(const std::string& base_path);

} // namespace mrtherm
