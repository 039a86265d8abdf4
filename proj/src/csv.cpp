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
#include "mrpw/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mrpw/errors.hpp"

namespace mrpw {

int Table::col(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

int Table::require_col(const std::string& name, const std::string& table_name) const {
    const int c = col(name);
    if (c < 0) throw SchemaError(table_name + ": missing column '" + name + "'");
    return c;
}

namespace {

std::vector<std::string> parse_line(const std::string& text, std::size_t& pos) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool done = false;
    while (!done) {
        if (pos >= text.size()) {
            done = true;
            break;
        }
        const char c = text[pos++];
        if (quoted) {
            if (c == '"') {
                if (pos < text.size() && text[pos] == '"') {
                    field.push_back('"');
                    ++pos;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            done = true;
        } else if (c == '\r') {
            if (pos < text.size() && text[pos] == '\n') ++pos;
            done = true;
        } else {
            field.push_back(c);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

}  // namespace

Table read_csv_string(const std::string& text) {
    Table t;
    std::size_t pos = 0;
    if (text.empty()) throw SchemaError("csv: empty input, header row required");
    t.columns = parse_line(text, pos);
    while (pos < text.size()) {
        // Skip a trailing blank line.
        if (text[pos] == '\n') {
            ++pos;
            continue;
        }
        auto row = parse_line(text, pos);
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() != t.columns.size()) {
            throw SchemaError("csv: row " + std::to_string(t.rows.size() + 1) + " has " +
                              std::to_string(row.size()) + " fields, header has " +
                              std::to_string(t.columns.size()));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

Table read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return read_csv_string(ss.str());
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& context) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    double out = 0.0;
    const auto res = std::from_chars(begin, end, out);
    if (res.ec != std::errc{} || res.ptr != end)
        throw SchemaError(context + ": cannot parse number '" + text + "'");
    return out;
}

}  // namespace mrpw
