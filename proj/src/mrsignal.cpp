#include "mrtherm/mrsignal.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include <fftw3.h>

#include "mrtherm/rng.hpp"

namespace mrtherm {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Process-wide cache of FFTW plans keyed by extents. Plans are created under
/// a mutex with FFTW_UNALIGNED so they can execute on arbitrary buffers;
/// execution itself is thread-safe.
class FftPlanCache {
public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  void forward(int ndim, const std::array<int, 3>& ext, const Complex* in, Complex* out) {
    fftw_plan plan = nullptr;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      const std::array<int, 4> key{ndim, ext[0], ext[1], ext[2]};
      auto it = plans_.find(key);
      if (it == plans_.end()) {
        std::vector<Complex> a(static_cast<std::size_t>(ext[0]) * ext[1] * ext[2]);
        std::vector<Complex> b(a.size());
        int n[3] = {ext[0], ext[1], ext[2]};
        plan = fftw_plan_dft(ndim, n, reinterpret_cast<fftw_complex*>(a.data()),
                             reinterpret_cast<fftw_complex*>(b.data()), FFTW_FORWARD,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, plan);
      } else {
        plan = it->second;
      }
    }
    // out-of-place c2c preserves its input
    fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }

private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }
  std::mutex mutex_;
  std::map<std::array<int, 4>, fftw_plan> plans_;
};

} // namespace

NoiseModel make_noise_model(const KSpaceSignal& noiseless, double snr, std::uint64_t seed) {
  if (!(snr > 0)) throw ValidationError("noise: snr must be > 0");
  NoiseModel m;
  m.snr = snr;
  m.seed = seed;
  m.sigma = std::abs(noiseless[0]) / (snr * std::sqrt(2.0));
  return m;
}

Field<double> t1_field(const Field<std::uint8_t>& labels,
                       const std::vector<TissueProperties>& tissues, const Field<double>& du) {
  if (!labels.same_extents(du)) throw ValidationError("t1_field: extents mismatch");
  Field<double> t1(labels.ndim(), labels.extents());
  for (std::size_t v = 0; v < t1.size(); ++v) {
    const TissueProperties& tp = tissues[labels[v]];
    t1[v] = tp.t1_s * (1.0 + tp.t1_temp_slope_per_c * du[v]);
  }
  return t1;
}

Field<double> magnetization(const MrProtocol& protocol, const Field<double>& t1) {
  const double s = std::sin(protocol.flip_angle_rad);
  const double c = std::cos(protocol.flip_angle_rad);
  Field<double> m(t1.ndim(), t1.extents());
  for (std::size_t v = 0; v < m.size(); ++v) {
    const double e = std::exp(-protocol.tr_s / t1[v]);
    const double m0 = protocol.m0_field ? (*protocol.m0_field)[v] : protocol.m0;
    m[v] = m0 * s * (1.0 - e) / (1.0 - c * e);
  }
  return m;
}

ComplexImage complex_image(const Field<double>& u, const Field<double>& u_ref,
                           const Field<std::uint8_t>& labels,
                           const std::vector<TissueProperties>& tissues,
                           const MrProtocol& protocol) {
  if (!u.same_extents(u_ref)) throw ValidationError("complex_image: u and u_ref extents differ");
  if (!u.same_extents(labels)) throw ValidationError("complex_image: labels extents differ");

  Field<double> du(u.ndim(), u.extents());
  for (std::size_t v = 0; v < du.size(); ++v) du[v] = u[v] - u_ref[v];

  const Field<double> t1 = t1_field(labels, tissues, du);
  const Field<double> m = magnetization(protocol, t1);

  const double phase_per_c =
      kTwoPi * protocol.gamma_hz_per_t * protocol.alpha * protocol.b0_t * protocol.te_s;

  ComplexImage img(u.ndim(), u.extents());
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(img.size()); ++v) {
    const TissueProperties& tp = tissues[labels[v]];
    const double dw0 = protocol.delta_omega0_field ? (*protocol.delta_omega0_field)[v]
                                                   : protocol.delta_omega0_rad_per_s;
    const double mag = m[v] * std::exp(-protocol.te_s / tp.t2_star_s);
    const double phase = phase_per_c * du[v] + protocol.te_s * dw0;
    img[v] = Complex(mag * std::cos(phase), -mag * std::sin(phase));
  }
  return img;
}

KSpaceSignal kspace_forward(const ComplexImage& img, double voxel_volume) {
  KSpaceSignal out(img.ndim(), img.extents());
  FftPlanCache::instance().forward(img.ndim(), img.extents(), img.data(), out.data());
  for (auto& z : out.values()) z *= voxel_volume;
  return out;
}

KSpaceSignal kspace_forward_oracle(const ComplexImage& img, double voxel_volume) {
  if (img.size() > (std::size_t{1} << 12))
    throw DomainError("kspace_forward_oracle: image exceeds 2^12 voxels");

  const auto& ext = img.extents();
  KSpaceSignal out(img.ndim(), img.extents());
  for (int ki = 0; ki < ext[0]; ++ki)
    for (int kj = 0; kj < ext[1]; ++kj)
      for (int kk = 0; kk < ext[2]; ++kk) {
        Complex acc(0.0, 0.0);
        for (int i = 0; i < ext[0]; ++i)
          for (int j = 0; j < ext[1]; ++j)
            for (int k = 0; k < ext[2]; ++k) {
              const double angle = kTwoPi * (static_cast<double>(ki) * i / ext[0] +
                                             static_cast<double>(kj) * j / ext[1] +
                                             static_cast<double>(kk) * k / ext[2]);
              acc += img(i, j, k) * Complex(std::cos(angle), -std::sin(angle));
            }
        out(ki, kj, kk) = acc * voxel_volume;
      }
  return out;
}

KSpaceSignal add_noise(const KSpaceSignal& signal, const NoiseModel& noise) {
  KSpaceSignal out = signal;
  if (noise.sigma == 0.0) return out;
  SplitMix64 rng(noise.seed);
  for (auto& z : out.values())
    z += Complex(noise.sigma * rng.gaussian(), noise.sigma * rng.gaussian());
  return out;
}

} // namespace mrtherm
