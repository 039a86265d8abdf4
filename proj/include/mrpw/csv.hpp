// Copyright (C) 2026 the mrpweights authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef MRPW_CSV_HPP_
#define MRPW_CSV_HPP_

#include <string>
#include <vector>

namespace mrpw {

// Comma-separated, header row required, UTF-8, "." decimal point. Fields may
// be double-quoted; embedded quotes are doubled.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    // Column index by name, or -1.
    int col(const std::string& name) const;
    // Column index by name; throws SchemaError naming the column if missing.
    int require_col(const std::string& name, const std::string& table_name) const;
};

Table read_csv_string(const std::string& text);
Table read_csv_file(const std::string& path);

std::string csv_quote(const std::string& field);

// Shortest round-trip decimal representation; locale-free and deterministic,
// so repeated runs produce byte-identical files.
std::string fmt_double(double v);

// Parse a double; throws SchemaError with the given context on failure.
double parse_double(const std::string& text, const std::string& context);

}  // namespace mrpw

#endif  // MRPW_CSV_HPP_
