#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mrtherm/errors.hpp"

namespace mrtherm {

/// Uniform Cartesian grid, 2 or 3 axes. Node-centered: node i along axis a
/// sits at origin[a] + i * spacing[a]. Unused third axis is padded with
/// extent 1 / spacing 1 so indexing code can treat every grid as 3-D.
class Grid {
public:
  static constexpr std::int64_t kDefaultVoxelCap = std::int64_t{1} << 24;

  Grid() = default;

  Grid(std::vector<int> dims, std::vector<double> spacing, std::vector<double> origin,
       std::int64_t voxel_cap = kDefaultVoxelCap) {
    if (dims.size() != 2 && dims.size() != 3)
      throw ValidationError("grid: dims must have 2 or 3 axes, got " + std::to_string(dims.size()));
    if (spacing.size() != dims.size())
      throw ValidationError("grid: spacing must match dims axis count");
    if (origin.size() != dims.size())
      throw ValidationError("grid: origin must match dims axis count");
    ndim_ = static_cast<int>(dims.size());
    ext_ = {1, 1, 1};
    h_ = {1.0, 1.0, 1.0};
    origin_ = {0.0, 0.0, 0.0};
    std::int64_t total = 1;
    for (int a = 0; a < ndim_; ++a) {
      if (dims[a] < 2)
        throw ValidationError("grid: extent along axis " + std::to_string(a) + " must be >= 2");
      if (!(spacing[a] > 0.0))
        throw ValidationError("grid: spacing along axis " + std::to_string(a) + " must be > 0");
      ext_[a] = dims[a];
      h_[a] = spacing[a];
      origin_[a] = origin[a];
      total *= dims[a];
    }
    if (total > voxel_cap)
      throw ValidationError("grid: voxel count " + std::to_string(total) + " exceeds cap " +
                            std::to_string(voxel_cap));
  }

  int ndim() const { return ndim_; }
  int extent(int a) const { return ext_[a]; }
  double spacing(int a) const { return h_[a]; }
  double origin(int a) const { return origin_[a]; }
  const std::array<int, 3>& extents() const { return ext_; }

  std::int64_t num_voxels() const {
    return std::int64_t{ext_[0]} * ext_[1] * ext_[2];
  }

  double position(int a, int i) const { return origin_[a] + h_[a] * i; }

  double voxel_volume() const {
    double v = 1.0;
    for (int a = 0; a < ndim_; ++a) v *= h_[a];
    return v;
  }

  double min_spacing() const {
    double m = h_[0];
    for (int a = 1; a < ndim_; ++a) m = std::min(m, h_[a]);
    return m;
  }

  bool contains_point(const std::array<double, 3>& p) const {
    for (int a = 0; a < ndim_; ++a) {
      const double lo = origin_[a];
      const double hi = origin_[a] + h_[a] * (ext_[a] - 1);
      if (p[a] < lo || p[a] > hi) return false;
    }
    return true;
  }

  bool same_layout(const Grid& o) const {
    return ndim_ == o.ndim_ && ext_ == o.ext_;
  }

private:
  int ndim_ = 0;
  std::array<int, 3> ext_{1, 1, 1};
  std::array<double, 3> h_{1.0, 1.0, 1.0};
  std::array<double, 3> origin_{0.0, 0.0, 0.0};
};

/// Dense row-major array over a grid's extents (last axis fastest).
/// Also used for k-space arrays, which share the image extents.
template <typename T>
class Field {
public:
  Field() = default;

  explicit Field(const Grid& g, T init = T{})
      : ndim_(g.ndim()), ext_(g.extents()), data_(static_cast<std::size_t>(g.num_voxels()), init) {}

  Field(int ndim, const std::array<int, 3>& ext, T init = T{})
      : ndim_(ndim), ext_(ext),
        data_(static_cast<std::size_t>(ext[0]) * ext[1] * ext[2], init) {}

  int ndim() const { return ndim_; }
  int extent(int a) const { return ext_[a]; }
  const std::array<int, 3>& extents() const { return ext_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int i, int j, int k = 0) const {
    return (static_cast<std::size_t>(i) * ext_[1] + j) * ext_[2] + k;
  }

  T& operator()(int i, int j, int k = 0) { return data_[index(i, j, k)]; }
  const T& operator()(int i, int j, int k = 0) const { return data_[index(i, j, k)]; }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  template <typename U>
  bool same_extents(const Field<U>& o) const {
    return ndim_ == o.ndim() && ext_ == o.extents();
  }

  bool operator==(const Field& o) const {
    return ndim_ == o.ndim_ && ext_ == o.ext_ && data_ == o.data_;
  }

private:
  int ndim_ = 0;
  std::array<int, 3> ext_{1, 1, 1};
  std::vector<T> data_;
};

/// Axis-aligned voxel-index box, [lo, hi) per axis. Used for ROIs.
struct IndexBox {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};

  static IndexBox full(const Grid& g) {
    IndexBox b;
    b.lo = {0, 0, 0};
    b.hi = g.extents();
    return b;
  }

  std::int64_t count() const {
    std::int64_t n = 1;
    for (int a = 0; a < 3; ++a) n *= std::max(0, hi[a] - lo[a]);
    return n;
  }
};

} // namespace mrtherm
