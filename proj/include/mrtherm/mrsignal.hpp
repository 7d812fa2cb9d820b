#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "mrtherm/grid.hpp"
#include "mrtherm/phantom.hpp"

namespace mrtherm {

using Complex = std::complex<double>;
using ComplexImage = Field<Complex>;
using KSpaceSignal = Field<Complex>;

/// Steady-state gradient-echo acquisition parameters. Per-tissue relaxation
/// lives in TissueProperties; this struct holds the sequence scalars.
struct MrProtocol {
  double flip_angle_rad = 0.0;    // theta
  double tr_s = 0.0;              // repetition time
  double te_s = 0.0;              // echo time
  double gamma_hz_per_t = 42.58e6;
  double alpha = -0.0102e-6;      // PRF sensitivity, dimensionless (ppm * 1e-6)
  double b0_t = 1.5;
  double m0 = 1.0;                            // scalar equilibrium magnetization
  std::optional<Field<double>> m0_field;      // per-voxel override (baseline image)
  double delta_omega0_rad_per_s = 0.0;        // off-resonance
  std::optional<Field<double>> delta_omega0_field;

  void validate() const {
    if (!(tr_s > 0)) throw ValidationError("protocol.tr_s: must be > 0");
    if (!(te_s > 0)) throw ValidationError("protocol.te_s: must be > 0");
    if (!(flip_angle_rad > 0) || !(flip_angle_rad < 3.14159265358979323846))
      throw ValidationError("protocol.flip_angle_rad: must be in (0, pi)");
  }
};

/// Gaussian measurement noise; sigma applies independently to real and
/// imaginary parts of every sample.
struct NoiseModel {
  double snr = 0.0;
  std::uint64_t seed = 0;
  double sigma = 0.0;
};

/// sigma = |U(k=0)| / (snr * sqrt(2)), from the noiseless signal.
NoiseModel make_noise_model(const KSpaceSignal& noiseless, double snr, std::uint64_t seed);

/// Per-voxel T1 under the linear heating model T1 = T1_0 (1 + beta du).
Field<double> t1_field(const Field<std::uint8_t>& labels,
                       const std::vector<TissueProperties>& tissues, const Field<double>& du);

/// Spoiled-GRE transverse magnetization
/// M = M0 sin(theta) (1 - exp(-TR/T1)) / (1 - cos(theta) exp(-TR/T1)).
Field<double> magnetization(const MrProtocol& protocol, const Field<double>& t1);

/// Complex image: M(x) exp(-TE/T2*) exp(-i [2 pi gamma alpha B0 TE du + TE dw0]).
/// du = u - u_ref is the temperature change against the baseline.
ComplexImage complex_image(const Field<double>& u, const Field<double>& u_ref,
                           const Field<std::uint8_t>& labels,
                           const std::vector<TissueProperties>& tissues,
                           const MrProtocol& protocol);

/// Riemann-sum Fourier transform of the image: U(k) = voxvol * sum_x img(x)
/// exp(-2 pi i k.x/N), zero frequency at index 0. k indices are integer
/// cycles per field of view; use to_centered/from_centered for the centered
/// view. FFT-backed; any extents are supported.
KSpaceSignal kspace_forward(const ComplexImage& img, double voxel_volume);

/// Brute-force double-sum evaluation of the same discretization. Verification
/// path; capped at 2^12 voxels.
KSpaceSignal kspace_forward_oracle(const ComplexImage& img, double voxel_volume);

/// Adds seeded Gaussian noise of std sigma to real and imaginary parts.
KSpaceSignal add_noise(const KSpaceSignal& signal, const NoiseModel& noise);

/// Centered-view index maps. A centered index c in [0, n) corresponds to the
/// integer frequency c - n/2; from_centered maps it back to the FFT layout.
inline int from_centered(int c, int n) { return (c + n - n / 2) % n; }
inline int to_centered(int m, int n) { return (m + n / 2) % n; }

/// Reorders an FFT-layout field into the centered view (DC at extent/2).
template <typename T>
Field<T> fftshift(const Field<T>& f) {
  Field<T> out(f.ndim(), f.extents());
  const auto& ext = f.extents();
  for (int i = 0; i < ext[0]; ++i)
    for (int j = 0; j < ext[1]; ++j)
      for (int k = 0; k < ext[2]; ++k)
        out(i, j, k) = f(from_centered(i, ext[0]),
                         ext[1] > 1 ? from_centered(j, ext[1]) : j,
                         ext[2] > 1 ? from_centered(k, ext[2]) : k);
  return out;
}

} // namespace mrtherm
