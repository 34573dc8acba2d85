// SPDX-License-Identifier: Apache-2.0
#include "covis/bev.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "covis/bytes.hpp"
#include "covis/metrics.hpp"

namespace covis {

BevGrid::BevGrid(int rows, int cols, double resolution, float fill)
    : rows_(rows), cols_(cols), resolution_(resolution) {
  if (rows <= 0 || cols <= 0 || !(resolution > 0.0) || !std::isfinite(resolution)) {
    throw std::invalid_argument("BevGrid: non-positive shape or resolution");
  }
  cells_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
}

std::pair<double, double> BevGrid::cell_center(int r, int c) const {
  return {(rows_ / 2.0 - r - 0.5) * resolution_, (cols_ / 2.0 - c - 0.5) * resolution_};
}

bool BevGrid::cell_of(double x, double y, int &r, int &c) const {
  const double fr = std::floor(rows_ / 2.0 - x / resolution_);
  const double fc = std::floor(cols_ / 2.0 - y / resolution_);
  if (!(fr >= 0.0 && fr < rows_ && fc >= 0.0 && fc < cols_)) return false;
  r = static_cast<int>(fr);
  c = static_cast<int>(fc);
  return true;
}

void require_same_shape(const BevGrid &a, const BevGrid &b) {
  if (!a.same_shape(b)) throw std::invalid_argument("BEV grids differ in shape");
}

BevGrid transform_grid(const BevGrid &src, const Pose &rel) {
  BevGrid out(src.rows(), src.cols(), src.resolution(), BevGrid::kUnknown);
  const double yaw = rel.rotation.yaw();
  const double cy = std::cos(yaw);
  const double sy = std::sin(yaw);
  const double tx = rel.position.x;
  const double ty = rel.position.y;
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) {
      const auto [x, y] = out.cell_center(r, c);
      // Inverse planar transform into the source ego frame.
      const double dx = x - tx;
      const double dy = y - ty;
      const double sx = cy * dx + sy * dy;
      const double syy = -sy * dx + cy * dy;
      int sr = 0;
      int sc = 0;
      if (src.cell_of(sx, syy, sr, sc)) out.set(r, c, src.at(sr, sc));
    }
  }
  return out;
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

BevGrid fuse(const BevGrid &ego, std::span<const std::pair<BevGrid, PoseEstimate>> neighbors,
             const FuseOptions &opts) {
  std::vector<BevGrid> placed;
  for (const auto &[grid, est] : neighbors) {
    require_same_shape(ego, grid);
    if (est.sigma_p_norm() > opts.gate_sigma) continue;
    placed.push_back(transform_grid(grid, est.pose()));
  }
  if (placed.empty()) return ego;

  BevGrid out = ego;
  auto clamp = [&](float p) { return std::clamp<double>(p, opts.clamp_lo, opts.clamp_hi); };
  std::vector<double> terms(placed.size() + 1);
  auto cells = out.cells();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    terms[0] = logit(clamp(ego.cells()[i]));
    for (std::size_t k = 0; k < placed.size(); ++k) {
      terms[k + 1] = logit(clamp(placed[k].cells()[i]));
    }
    // Fixed summation order keeps the result independent of neighbor order.
    std::sort(terms.begin(), terms.end());
    double l = 0.0;
    for (double t : terms) l += t;
    cells[i] = static_cast<float>(clamp(static_cast<float>(1.0 / (1.0 + std::exp(-l)))));
  }
  return out;
}

CoverageGain coverage_gain(const BevGrid &truth, const BevGrid &ego_only, const BevGrid &fused,
                           double bin_threshold) {
  return {dice_iou(truth, ego_only, bin_threshold).dice,
          dice_iou(truth, fused, bin_threshold).dice};
}

std::vector<std::uint8_t> serialize(const BevGrid &g) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + g.size() * 4);
  bytes::put_le(out, static_cast<std::uint32_t>(g.rows()));
  bytes::put_le(out, static_cast<std::uint32_t>(g.cols()));
  bytes::put_le(out, static_cast<float>(g.resolution()));
  bytes::put_le(out, std::uint32_t{0});
  for (float v : g.cells()) bytes::put_le(out, v);
  return out;
}

BevGrid deserialize_bev(std::span<const std::uint8_t> in) {
  if (in.size() < 16) throw std::invalid_argument("BEV blob shorter than header");
  const auto rows = bytes::get_le<std::uint32_t>(in, 0);
  const auto cols = bytes::get_le<std::uint32_t>(in, 4);
  const float res = bytes::get_f32(in, 8);
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) {
    throw std::invalid_argument("BEV blob has invalid shape");
  }
  if (in.size() != 16 + std::size_t{rows} * cols * 4) {
    throw std::invalid_argument("BEV blob size does not match header");
  }
  BevGrid g(static_cast<int>(rows), static_cast<int>(cols), res);
  auto cells = g.cells();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const float v = bytes::get_f32(in, 16 + 4 * i);
    if (!(v >= 0.0F && v <= 1.0F)) throw std::invalid_argument("BEV cell outside [0,1]");
    cells[i] = v;
  }
  return g;
}

}  // namespace covis
