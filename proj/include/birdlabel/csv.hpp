// Copyright 2026 The birdlabel Authors
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
#include <string>
#include <string_view>
#include <vector>

#include "birdlabel/error.hpp"

namespace birdlabel::csv {

/// Fixed-point rendering with `digits` decimals; locale independent.
inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
    std::string out(buf, res.ptr);
    if (out == "-0" || out.find_first_not_of("-0.") == std::string::npos) {
        // normalise negative zero
        if (!out.empty() && out[0] == '-') out.erase(0, 1);
    }
    return out;
}

/// Shortest round-trip representation.
inline std::string exact(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Quotes a field only when it contains a separator, quote or newline.
inline std::string field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += field(cells[i]);
    }
    return line;
}

/// Splits one CSV record (no embedded newlines).
inline std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

/// Writes header + rows with LF line endings.
inline void write_file(const std::string& path, const std::vector<std::string>& header,
                       const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << join(header) << '\n';
    for (const auto& r : rows) out << join(r) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace birdlabel::csv
