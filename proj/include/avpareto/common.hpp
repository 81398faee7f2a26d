// Copyright 2026 The avpareto Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AVPARETO_COMMON_HPP
#define AVPARETO_COMMON_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace avpareto {

/// Sampling interval of every trajectory grid handled by the pipeline.
inline constexpr double kDefaultDt = 0.1;

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Error classes. The CLI maps each family onto a distinct exit code.

/// Input table or config does not match the expected layout (exit 2).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An agent's timesteps are not on a uniform grid (exit 2).
class GridError : public SchemaError {
 public:
  GridError(const std::string& agent_id, const std::string& what)
      : SchemaError("non-uniform time grid for agent '" + agent_id + "': " + what),
        agent_id_(agent_id) {}
  const std::string& agent_id() const noexcept { return agent_id_; }

 private:
  std::string agent_id_;
};

/// Invalid configuration value (exit 2).
class ConfigError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

/// Model fitting refused or failed.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class AgentType { av, car, truck, bus, pedestrian, cyclist, scooter, other };

AgentType parse_agent_type(std::string_view text);
std::string_view to_string(AgentType type);
inline constexpr int kAgentTypeCount = 8;

inline bool is_vehicle(AgentType t) {
  return t == AgentType::av || t == AgentType::car || t == AgentType::truck ||
         t == AgentType::bus;
}

/// Empirical quantile with linear interpolation between order statistics
/// (type 7, the numpy default). `q` is in [0, 1]. Input need not be sorted.
double quantile(std::vector<double> values, double q);

/// Median of a non-empty sample.
double median(std::vector<double> values);

/// Convert a finite double to text that parses back to the identical value.
std::string format_double(double value);

/// Like format_double, but NaN becomes an empty field.
std::string format_optional(double value);
std::string format_optional(const std::optional<double>& value);

}  // namespace avpareto

#endif  // AVPARETO_COMMON_HPP
