// SPDX-License-Identifier: Apache-2.0
//
// Flat key/value run configuration. Every key has a default (see
// defaults()); unknown keys and mistyped values are rejected.
#pragma once

#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "covis/metrics.hpp"
#include "covis/scenario.hpp"

namespace covis::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

/// The documented defaults, in presentation order.
const Json &defaults();

/// Defaults overlaid with `user`. Throws ConfigError on unknown keys or
/// type mismatches.
Json merge(const Json &user);

/// Reads and merges a JSON object file. Throws ConfigError when the file is
/// missing or unparsable.
Json load_file(const std::string &path);

// Builders; each throws ConfigError on values that fail validation.
net::NetWorld net_world(const Json &cfg);
EstimatorConfig estimator(const Json &cfg);
TrajectorySpec trajectory(const Json &cfg);
FormationConfig formation(const Json &cfg);
HomingConfig homing(const Json &cfg);
MetricsConfig metrics(const Json &cfg);
WorldOptions world_options(const Json &cfg);
SampleOptions sample_options(const Json &cfg);

}  // namespace covis::config
