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

// Audacity label tracks. Each record is one line
//     start<TAB>end<TAB>label
// optionally followed by
//     \<TAB>f_low<TAB>f_high

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "birdlabel/csv.hpp"
#include "birdlabel/error.hpp"
#include "birdlabel/evaluation.hpp"
#include "birdlabel/segmentation.hpp"

namespace birdlabel {

struct AnnotationOptions {
    std::string signal_token = "signal";
    double full_band_low_hz = 0.0;
    double full_band_high_hz = 22050.0;  // used when a record has no frequency line
};

struct AnnotationSet {
    std::string annotator;
    std::map<std::string, std::vector<RoiBox>> boxes;  // keyed by source_id

    [[nodiscard]] std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [_, v] : boxes) n += v.size();
        return n;
    }
};

namespace detail {

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return out;
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& what) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && (*b == ' ')) ++b;
    while (e > b && (e[-1] == ' ')) --e;
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || ptr != e || b == e)
        throw FormatError("line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
    return v;
}

}  // namespace detail

/// Parses one label track. Labels other than the signal token become noise.
inline std::vector<RoiBox> parse_audacity_labels(std::istream& in, const std::string& source_id,
                                                 const AnnotationOptions& opts = {}) {
    std::vector<RoiBox> out;
    std::string raw;
    std::size_t line_no = 0;
    bool open = false;  // last box still awaiting an optional frequency line
    bool warned = false;
    auto close = [&] {
        if (open && !warned) {
            log::warn("annotations " + source_id + ": record without frequency line, using full band");
            warned = true;
        }
        open = false;
    };
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = detail::strip_cr(raw);
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto cols = detail::split_tabs(line);
        if (cols[0] == "\\") {
            if (!open) throw FormatError("line " + std::to_string(line_no) + ": frequency line without a record");
            if (cols.size() < 3) throw FormatError("line " + std::to_string(line_no) + ": expected 3 fields");
            auto& b = out.back();
            b.f_min = detail::parse_number(cols[1], line_no, "low frequency");
            b.f_max = detail::parse_number(cols[2], line_no, "high frequency");
            if (!(b.f_max > b.f_min))
                throw FormatError("line " + std::to_string(line_no) + ": high frequency not above low");
            open = false;
            continue;
        }
        close();
        if (cols.size() < 2) throw FormatError("line " + std::to_string(line_no) + ": expected start and end");
        RoiBox b;
        b.t_min = detail::parse_number(cols[0], line_no, "start time");
        b.t_max = detail::parse_number(cols[1], line_no, "end time");
        if (b.t_min < 0.0 || !(b.t_max > b.t_min))
            throw FormatError("line " + std::to_string(line_no) + ": invalid time interval");
        const std::string label = cols.size() >= 3 ? cols[2] : std::string{};
        b.truth_label = label == opts.signal_token ? Label::signal : Label::noise;
        b.f_min = opts.full_band_low_hz;
        b.f_max = opts.full_band_high_hz;
        b.source_id = source_id;
        out.push_back(std::move(b));
        open = true;
    }
    close();
    return out;
}

inline std::vector<RoiBox> read_audacity_labels(const std::filesystem::path& path, const std::string& source_id,
                                                const AnnotationOptions& opts = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open annotation file " + path.string());
    try {
        return parse_audacity_labels(in, source_id, opts);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

/// Writes boxes with their truth label (or "noise" if unset) and frequency line.
inline std::string format_audacity_labels(const std::vector<RoiBox>& boxes, const AnnotationOptions& opts = {}) {
    std::string s;
    for (const auto& b : boxes) {
        const std::string label = b.truth_label == Label::signal ? opts.signal_token : std::string("noise");
        s += csv::exact(b.t_min) + '\t' + csv::exact(b.t_max) + '\t' + label + '\n';
        s += "\\\t" + csv::exact(b.f_min) + '\t' + csv::exact(b.f_max) + '\n';
    }
    return s;
}

inline void write_audacity_labels(const std::filesystem::path& path, const std::vector<RoiBox>& boxes,
                                  const AnnotationOptions& opts = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write annotation file " + path.string());
    out << format_audacity_labels(boxes, opts);
    if (!out) throw IoError("write failed: " + path.string());
}

/// Per-ROI truth: signal iff the ROI overlaps an annotated signal box with IOU > threshold.
inline std::vector<Label> assign_truth(const std::vector<RoiBox>& rois, const std::vector<RoiBox>& annotated,
                                       double iou_threshold = 0.5) {
    std::vector<Label> truth(rois.size(), Label::noise);
    for (std::size_t i = 0; i < rois.size(); ++i)
        for (const auto& a : annotated)
            if (a.truth_label == Label::signal && iou(rois[i], a) > iou_threshold) {
                truth[i] = Label::signal;
                break;
            }
    return truth;
}

}  // namespace birdlabel
