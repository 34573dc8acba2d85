// SPDX-License-Identifier: Apache-2.0
//
// Ego-centered bird's-eye-view occupancy grids and their fusion across
// robots. Cells hold P(occupied); 0.5 is the unknown prior. The ego sits at
// the grid center facing "up": row 0 is the far-forward edge (+x) and
// column 0 the far-left edge (+y).
#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "covis/geometry.hpp"
#include "covis/pose_estimate.hpp"

namespace covis {

class BevGrid {
 public:
  static constexpr int kDefaultSize = 64;
  static constexpr double kDefaultExtent = 6.0;
  static constexpr float kUnknown = 0.5F;

  BevGrid() : BevGrid(kDefaultSize, kDefaultSize, kDefaultExtent / kDefaultSize) {}
  BevGrid(int rows, int cols, double resolution, float fill = kUnknown);

  static BevGrid square(int size = kDefaultSize, double extent = kDefaultExtent,
                        float fill = kUnknown) {
    return {size, size, extent / size, fill};
  }

  [[nodiscard]] int rows() const { return rows_; }
  [[nodiscard]] int cols() const { return cols_; }
  [[nodiscard]] double resolution() const { return resolution_; }
  [[nodiscard]] std::size_t size() const { return cells_.size(); }

  [[nodiscard]] float at(int r, int c) const { return cells_[index(r, c)]; }
  void set(int r, int c, float v) { cells_[index(r, c)] = v; }

  [[nodiscard]] std::span<const float> cells() const { return cells_; }
  [[nodiscard]] std::span<float> cells() { return cells_; }

  /// Ego-frame (x forward, y left) coordinates of a cell center.
  [[nodiscard]] std::pair<double, double> cell_center(int r, int c) const;
  /// Cell containing an ego-frame point; false when outside the footprint.
  [[nodiscard]] bool cell_of(double x, double y, int &r, int &c) const;

  [[nodiscard]] bool same_shape(const BevGrid &o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const BevGrid &, const BevGrid &) = default;

 private:
  [[nodiscard]] std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) +
           static_cast<std::size_t>(c);
  }

  int rows_;
  int cols_;
  double resolution_;
  std::vector<float> cells_;
};

/// Throws std::invalid_argument when the two grids differ in shape.
void require_same_shape(const BevGrid &a, const BevGrid &b);

/// Resamples `src` into the frame in which `rel` is the pose of src's ego.
/// Planar components only; nearest-neighbor lookup; unmapped cells = 0.5.
BevGrid transform_grid(const BevGrid &src, const Pose &rel);

struct FuseOptions {
  double gate_sigma = 1.0;   // neighbors with |sigma_p| above this are skipped
  float clamp_lo = 0.01F;
  float clamp_hi = 0.99F;
};

/// Log-odds fusion of the ego grid with neighbor grids placed by their
/// estimated relative pose (src = ego, dst = neighbor).
BevGrid fuse(const BevGrid &ego, std::span<const std::pair<BevGrid, PoseEstimate>> neighbors,
             const FuseOptions &opts = {});

struct CoverageGain {
  double dice_ego = 0.0;
  double dice_fused = 0.0;
};

CoverageGain coverage_gain(const BevGrid &truth, const BevGrid &ego_only, const BevGrid &fused,
                           double bin_threshold = 0.5);

/// 16-byte little-endian header (rows u32, cols u32, resolution f32,
/// reserved u32) followed by row-major float32 cells.
std::vector<std::uint8_t> serialize(const BevGrid &g);
BevGrid deserialize_bev(std::span<const std::uint8_t> bytes);

}  // namespace covis
