// SPDX-License-Identifier: Apache-2.0
//
// Evaluation of relative-pose estimates: visibility split, median error
// categories, uncertainty filtering by Youden's index, AUC over the max of
// rotation and translation-direction error, and BEV overlap scores.
#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "covis/bev.hpp"
#include "covis/geometry.hpp"
#include "covis/pose_estimate.hpp"

namespace covis {

struct EdgeRecord {
  Pose truth;  // relative pose of dst in src's frame
  PoseEstimate est;
  double fov_deg = 120.0;
};

/// True iff the truth relative rotation exceeds the camera field of view.
bool is_invisible(const EdgeRecord &rec);

struct LabeledScore {
  double uncertainty = 0.0;
  bool positive = false;
};

struct YoudenResult {
  double threshold = 0.0;  // reject iff uncertainty >= threshold
  double j = 0.0;          // TPR - FPR at the threshold
};

/// Threshold (one of the input scores) maximizing TPR - FPR under the rule
/// "uncertainty >= threshold => positive". Ties go to the lowest threshold.
/// Throws std::invalid_argument unless both classes are present.
YoudenResult youden_threshold(std::span<const LabeledScore> scores);

enum class Category { All, Visible, Invisible, InvisibleFiltered };

std::string_view to_string(Category c);

struct CategoryReport {
  Category category = Category::All;
  double median_pos = 0.0;  // meters
  double median_rot = 0.0;  // degrees
  std::size_t count = 0;
};

/// How the per-axis sigma_p collapses to one filtering score.
enum class UncertaintyScalar { Norm, MaxAxis };

double uncertainty_score(const PoseEstimate &est, UncertaintyScalar s = UncertaintyScalar::Norm);

/// Lower-middle median; 0 for an empty input.
double lower_median(std::vector<double> values);

/// All / Visible / Invisible / InvisibleFiltered, in that order. The filtered
/// set keeps invisible records whose uncertainty score is below the
/// threshold. Throws std::invalid_argument on empty input.
std::array<CategoryReport, 4> category_report(std::span<const EdgeRecord> recs,
                                              double reject_threshold,
                                              UncertaintyScalar s = UncertaintyScalar::Norm);

/// Edges whose truth translation is shorter than this are excluded from AUC.
inline constexpr double kMinAucTranslation = 1e-3;

/// Per-edge AUC error: max(rotation geodesic, translation direction angle),
/// degrees. Empty optional when the truth translation is too short.
std::optional<double> auc_error_deg(const EdgeRecord &rec);

struct AucResult {
  std::vector<double> auc;  // one per threshold, in [0, 1]
  std::size_t excluded = 0;
};

/// AUC of the recall curve over [0, t] for each threshold t, exact for the
/// step function. Throws std::invalid_argument if no edge is usable.
AucResult auc_at(std::span<const EdgeRecord> recs, std::span<const double> thresholds_deg);

struct DiceIou {
  double dice = 0.0;
  double iou = 0.0;
};

/// Overlap of the cells strictly above bin_threshold. Both empty => (1, 1).
DiceIou dice_iou(const BevGrid &truth, const BevGrid &pred, double bin_threshold = 0.5);

enum class YoudenLabel {
  LargeError,  // positive: position error above error_cutoff_m
  Invisible,   // positive: edge is invisible
};

struct MetricsConfig {
  YoudenLabel label = YoudenLabel::LargeError;
  double error_cutoff_m = 1.0;
  UncertaintyScalar scalar = UncertaintyScalar::Norm;
  std::vector<double> auc_thresholds_deg{20.0, 45.0, 90.0};
  double bin_threshold = 0.5;
};

struct MetricsReport {
  std::optional<YoudenResult> youden;  // empty when only one class exists
  std::array<CategoryReport, 4> categories{};
  std::vector<double> auc_thresholds_deg;
  AucResult auc;
  std::optional<DiceIou> bev;  // mean over grid pairs, when any were given
};

/// Runs the full pipeline. Without both Youden classes nothing is rejected.
MetricsReport evaluate(std::span<const EdgeRecord> recs,
                       std::span<const std::pair<BevGrid, BevGrid>> bev_pairs,
                       const MetricsConfig &cfg = {});

/// "category,count,median_pos_m,median_rot_deg" table.
void write_categories_csv(std::ostream &os, std::span<const CategoryReport> reports);
/// "threshold,auc" table.
void write_auc_csv(std::ostream &os, const MetricsReport &r);

}  // namespace covis
