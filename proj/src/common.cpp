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

#include "avpareto/common.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>

namespace avpareto {

namespace {

constexpr std::array<std::string_view, kAgentTypeCount> kTypeNames = {
    "av", "car", "truck", "bus", "pedestrian", "cyclist", "scooter", "other"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

AgentType parse_agent_type(std::string_view text) {
  const std::string key = lower(text);
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (key == kTypeNames[i]) return static_cast<AgentType>(i);
  }
  // Common aliases found in trajectory releases.
  if (key == "automated" || key == "autonomous" || key == "cav") return AgentType::av;
  if (key == "passenger" || key == "passenger_car" || key == "vehicle") return AgentType::car;
  if (key == "bicycle" || key == "bike") return AgentType::cyclist;
  if (key == "ped") return AgentType::pedestrian;
  return AgentType::other;
}

std::string_view to_string(AgentType type) {
  return kTypeNames[static_cast<std::size_t>(type)];
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw std::runtime_error("double formatting failed");
  return std::string(buf.data(), end);
}

std::string format_optional(double value) {
  return std::isnan(value) ? std::string{} : format_double(value);
}

std::string format_optional(const std::optional<double>& value) {
  return value ? format_double(*value) : std::string{};
}

}  // namespace avpareto
