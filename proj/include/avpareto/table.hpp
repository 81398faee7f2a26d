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

#ifndef AVPARETO_TABLE_HPP
#define AVPARETO_TABLE_HPP

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace avpareto {

/// Comma-separated table with a header row. Cells are kept as text; typed
/// access goes through the helpers below.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
  /// Index of a header column; throws SchemaError naming the column.
  std::size_t require_column(std::string_view name) const;
};

Table read_table(const std::filesystem::path& path);
Table parse_table(std::istream& in, std::string_view source = "<stream>");

void write_table(const std::filesystem::path& path, const Table& table);
void write_table(std::ostream& out, const Table& table);

/// Parse a numeric cell. Empty, "nan" and "na" cells yield NaN; anything else
/// that is not a number throws SchemaError.
double parse_number(std::string_view cell);

bool parse_bool(std::string_view cell);

}  // namespace avpareto

#endif  // AVPARETO_TABLE_HPP
