// SPDX-License-Identifier: Apache-2.0
//
// JSONL and CSV formats. Every JSONL file starts with a header line
// {"schema": ...}; every CSV starts with a "# schema=..." comment line.
#pragma once

#include <iosfwd>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covis/metrics.hpp"
#include "covis/scenario.hpp"

namespace covis::io {

inline constexpr std::string_view kDatasetSchema = "covis.dataset/1";
inline constexpr std::string_view kRunLogSchema = "covis.runlog/1";
inline constexpr std::string_view kFormationSummarySchema = "covis.formation_summary/1";
inline constexpr std::string_view kMetricsSchema = "covis.metrics/1";
inline constexpr std::string_view kHomingSchema = "covis.homing/1";

using Json = nlohmann::ordered_json;

Json to_json(const Vec3 &v);
Json to_json(const UnitQuat &q);  // [w, x, y, z]
Json to_json(const Pose &p);      // {"p": [...], "q": [...]}
Json to_json(const PoseEstimate &e);

/// Throw std::invalid_argument on missing or malformed fields.
Vec3 vec3_from_json(const Json &j);
UnitQuat quat_from_json(const Json &j);
Pose pose_from_json(const Json &j);
PoseEstimate estimate_from_json(const Json &j);

std::string bev_to_b64(const BevGrid &g);
BevGrid bev_from_b64(std::string_view text);

void write_header(std::ostream &os, std::string_view schema);

Json group_to_json(const SampleGroup &g);
void write_dataset(std::ostream &os, std::span<const SampleGroup> groups);

Json tick_to_json(const TickRecord &r);
void write_runlog(std::ostream &os, const RunLog &log);
void write_formation_summary(std::ostream &os, std::span<const FollowerSummary> rows);
void write_homing_csv(std::ostream &os, const HomingResult &res);

/// Edges and BEV pairs gathered from dataset or runlog lines.
struct MetricsInput {
  std::vector<EdgeRecord> edges;
  std::vector<std::pair<BevGrid, BevGrid>> bev_pairs;  // (truth, prediction)
  std::size_t lines = 0;  // data lines, header excluded
  std::vector<std::pair<std::size_t, std::string>> malformed;  // (1-based line, reason)
};

/// Accepts both dataset and runlog records, one per line. Malformed lines
/// are collected rather than thrown.
MetricsInput read_metrics_input(std::istream &is, double fov_deg = 120.0);

void write_metrics_csv(std::ostream &os, const MetricsReport &report);

}  // namespace covis::io
