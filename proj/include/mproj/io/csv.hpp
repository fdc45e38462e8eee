// Copyright 2026 The mproj Authors
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

#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mproj/core/error.hpp"

namespace mproj::io {

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s, const std::string& where)
{
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e) throw ConfigError(where + ": cannot parse number '" + s + "'");
    return v;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : os_(path), path_(path)
    {
        if (!os_) throw ConfigError("cannot open " + path + " for writing");
        row_text(header);
    }

    void row(std::initializer_list<double> values)
    {
        bool first = true;
        for (double v : values) {
            if (!first) os_ << ',';
            os_ << format_double(v);
            first = false;
        }
        os_ << '\n';
    }

    void row_text(const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
        os_ << '\n';
    }

    ~CsvWriter() = default;

    void close()
    {
        os_.close();
        if (!os_) throw NumericError("write failed for " + path_);
    }

private:
    std::ofstream os_;
    std::string path_;
};

/// Numeric CSV table with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError("csv: missing column '" + name + "'");
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable read_csv(const std::string& path)
{
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) throw ConfigError(path + ": empty csv");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split_csv_line(line);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": wrong number of columns");
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(parse_double(c, path + ":" + std::to_string(lineno)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace mproj::io
