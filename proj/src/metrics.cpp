// SPDX-License-Identifier: Apache-2.0
#include "covis/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace covis {

bool is_invisible(const EdgeRecord &rec) {
  return rot_geodesic_deg(rec.truth.rotation, UnitQuat::identity()) > rec.fov_deg;
}

YoudenResult youden_threshold(std::span<const LabeledScore> scores) {
  std::vector<LabeledScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto &a, const auto &b) { return a.uncertainty > b.uncertainty; });
  const auto pos = static_cast<std::int64_t>(
      std::count_if(sorted.begin(), sorted.end(), [](const auto &s) { return s.positive; }));
  const auto neg = static_cast<std::int64_t>(sorted.size()) - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("youden_threshold needs both positive and negative labels");
  }

  // J = (tp * neg - fp * pos) / (pos * neg); compare the integer numerators.
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t best_num = std::numeric_limits<std::int64_t>::min();
  double best_thr = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double thr = sorted[i].uncertainty;
    for (; i < sorted.size() && sorted[i].uncertainty == thr; ++i) {
      (sorted[i].positive ? tp : fp) += 1;
    }
    const std::int64_t num = tp * neg - fp * pos;
    // Descending sweep: ">=" keeps the lowest threshold among maximizers.
    if (num >= best_num) {
      best_num = num;
      best_thr = thr;
    }
  }
  return {best_thr, static_cast<double>(best_num) / static_cast<double>(pos * neg)};
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::All: return "all";
    case Category::Visible: return "visible";
    case Category::Invisible: return "invisible";
    case Category::InvisibleFiltered: return "invisible_filtered";
  }
  return "?";
}

double uncertainty_score(const PoseEstimate &est, UncertaintyScalar s) {
  if (s == UncertaintyScalar::MaxAxis) {
    return std::max({est.sigma_p.x, est.sigma_p.y, est.sigma_p.z});
  }
  return est.sigma_p_norm();
}

double lower_median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

std::array<CategoryReport, 4> category_report(std::span<const EdgeRecord> recs,
                                              double reject_threshold, UncertaintyScalar s) {
  if (recs.empty()) throw std::invalid_argument("category_report: empty input");
  std::array<std::vector<double>, 4> pos;
  std::array<std::vector<double>, 4> rot;
  auto add = [&](Category c, double p, double r) {
    pos[static_cast<std::size_t>(c)].push_back(p);
    rot[static_cast<std::size_t>(c)].push_back(r);
  };
  for (const auto &rec : recs) {
    const double p = pos_dist(rec.truth.position, rec.est.p_hat);
    const double r = rot_geodesic_deg(rec.truth.rotation, rec.est.q_hat);
    add(Category::All, p, r);
    if (is_invisible(rec)) {
      add(Category::Invisible, p, r);
      if (uncertainty_score(rec.est, s) < reject_threshold) add(Category::InvisibleFiltered, p, r);
    } else {
      add(Category::Visible, p, r);
    }
  }
  std::array<CategoryReport, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    out[k] = {static_cast<Category>(k), lower_median(pos[k]), lower_median(rot[k]), pos[k].size()};
  }
  return out;
}

std::optional<double> auc_error_deg(const EdgeRecord &rec) {
  const Vec3 &t = rec.truth.position;
  const Vec3 &e = rec.est.p_hat;
  if (t.norm() < kMinAucTranslation) return std::nullopt;
  // A zero estimated translation has no direction; count it as the worst case.
  const double trans = e.norm() == 0.0 ? 180.0 : rad2deg(std::atan2(cross(t, e).norm(), dot(t, e)));
  return std::max(rot_geodesic_deg(rec.truth.rotation, rec.est.q_hat), trans);
}

AucResult auc_at(std::span<const EdgeRecord> recs, std::span<const double> thresholds_deg) {
  AucResult out;
  std::vector<double> errors;
  errors.reserve(recs.size());
  for (const auto &rec : recs) {
    if (auto e = auc_error_deg(rec)) {
      errors.push_back(*e);
    } else {
      ++out.excluded;
    }
  }
  if (errors.empty()) throw std::invalid_argument("auc_at: no usable edges");
  std::sort(errors.begin(), errors.end());
  for (double t : thresholds_deg) {
    if (!(t > 0.0)) throw std::invalid_argument("auc_at: thresholds must be positive");
    // recall(x) is a step function; its integral over [0, t] is sum(t - e).
    double area = 0.0;
    for (double e : errors) {
      if (e >= t) break;
      area += t - e;
    }
    out.auc.push_back(area / (t * static_cast<double>(errors.size())));
  }
  return out;
}

DiceIou dice_iou(const BevGrid &truth, const BevGrid &pred, double bin_threshold) {
  require_same_shape(truth, pred);
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t both = 0;
  const auto t = truth.cells();
  const auto p = pred.cells();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool in_a = t[i] > bin_threshold;
    const bool in_b = p[i] > bin_threshold;
    a += in_a;
    b += in_b;
    both += in_a && in_b;
  }
  if (a + b == 0) return {1.0, 1.0};
  return {2.0 * static_cast<double>(both) / static_cast<double>(a + b),
          static_cast<double>(both) / static_cast<double>(a + b - both)};
}

MetricsReport evaluate(std::span<const EdgeRecord> recs,
                       std::span<const std::pair<BevGrid, BevGrid>> bev_pairs,
                       const MetricsConfig &cfg) {
  MetricsReport out;
  std::vector<LabeledScore> scores;
  scores.reserve(recs.size());
  bool any_pos = false;
  bool any_neg = false;
  for (const auto &rec : recs) {
    const bool positive = cfg.label == YoudenLabel::Invisible
                              ? is_invisible(rec)
                              : pos_dist(rec.truth.position, rec.est.p_hat) > cfg.error_cutoff_m;
    scores.push_back({uncertainty_score(rec.est, cfg.scalar), positive});
    (positive ? any_pos : any_neg) = true;
  }
  double reject = std::numeric_limits<double>::infinity();
  if (any_pos && any_neg) {
    out.youden = youden_threshold(scores);
    reject = out.youden->threshold;
  }
  out.categories = category_report(recs, reject, cfg.scalar);
  out.auc_thresholds_deg = cfg.auc_thresholds_deg;
  out.auc = auc_at(recs, cfg.auc_thresholds_deg);
  if (!bev_pairs.empty()) {
    DiceIou mean;
    for (const auto &[truth, pred] : bev_pairs) {
      const auto d = dice_iou(truth, pred, cfg.bin_threshold);
      mean.dice += d.dice;
      mean.iou += d.iou;
    }
    mean.dice /= static_cast<double>(bev_pairs.size());
    mean.iou /= static_cast<double>(bev_pairs.size());
    out.bev = mean;
  }
  return out;
}

void write_categories_csv(std::ostream &os, std::span<const CategoryReport> reports) {
  os << "category,count,median_pos_m,median_rot_deg\n";
  for (const auto &r : reports) {
    os << to_string(r.category) << ',' << r.count << ',' << r.median_pos << ',' << r.median_rot
       << '\n';
  }
}

void write_auc_csv(std::ostream &os, const MetricsReport &r) {
  os << "threshold,auc\n";
  for (std::size_t i = 0; i < r.auc.auc.size(); ++i) {
    os << r.auc_thresholds_deg[i] << ',' << r.auc.auc[i] << '\n';
  }
}

}  // namespace covis
