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

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "birdlabel/audio_io.hpp"
#include "birdlabel/csv.hpp"
#include "birdlabel/error.hpp"
#include "birdlabel/spectrogram.hpp"

namespace birdlabel {

enum class Label { signal, noise };

inline std::string_view to_string(Label l) { return l == Label::signal ? "signal" : "noise"; }

struct RoiBox {
    double t_min = 0.0, t_max = 0.0;  // s
    double f_min = 0.0, f_max = 0.0;  // Hz
    std::string source_id;
    std::string species;
    std::string roi_id;
    std::optional<Label> truth_label;
    std::optional<Label> predicted_label;

    [[nodiscard]] double duration() const { return t_max - t_min; }
    [[nodiscard]] double bandwidth() const { return f_max - f_min; }
    [[nodiscard]] double area() const { return duration() * bandwidth(); }
};

struct SegmentationParams {
    int time_factor = 10;
    int freq_factor = 15;
    double t_high_db = 37.0;
    double t_low_db = 33.0;
    double merge_time_gap_s = 0.24;
    double merge_freq_gap_hz = 170.0;
    double min_duration_s = 0.36;
    BandpassSpec band{100.0, 18000.0, 15};
    StftParams stft{2048, 1024};
    int noise_smoothing_bands = 25;

    void validate() const {
        if (time_factor < 1 || freq_factor < 1) throw InvalidArgument("segmentation: factors must be >= 1");
        if (!(t_low_db < t_high_db)) throw InvalidArgument("segmentation: t_low must be < t_high");
        if (!(merge_time_gap_s > 0) || !(merge_freq_gap_hz > 0) || !(min_duration_s > 0))
            throw InvalidArgument("segmentation: gaps and min_duration must be positive");
        if (noise_smoothing_bands < 1) throw InvalidArgument("segmentation: smoothing bands must be >= 1");
    }
};

using BinaryMask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

constexpr int kNeighbours[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};

}  // namespace detail

/// Double-threshold binarisation: a pixel is kept when it is >= t_low and
/// 8-connected through such pixels to a pixel >= t_high.
inline BinaryMask hysteresis_binarize(const Spectrogram& spec, double t_high, double t_low) {
    if (spec.scale != Scale::decibel) throw InvalidArgument("hysteresis: spectrogram must be in dB");
    if (!(t_low < t_high)) throw InvalidArgument("hysteresis: t_low must be < t_high");
    const Eigen::Index rows = spec.n_freq(), cols = spec.n_time();
    BinaryMask mask = BinaryMask::Zero(rows, cols);
    std::deque<std::pair<Eigen::Index, Eigen::Index>> queue;
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            if (spec.values(r, c) >= t_high) {
                mask(r, c) = 1;
                queue.emplace_back(r, c);
            }
    while (!queue.empty()) {
        const auto [r, c] = queue.front();
        queue.pop_front();
        for (const auto& d : detail::kNeighbours) {
            const Eigen::Index nr = r + d[0], nc = c + d[1];
            if (nr < 0 || nc < 0 || nr >= rows || nc >= cols || mask(nr, nc)) continue;
            if (spec.values(nr, nc) >= t_low) {
                mask(nr, nc) = 1;
                queue.emplace_back(nr, nc);
            }
        }
    }
    return mask;
}

namespace detail {

/// Extent spanned by centres lo..hi; a single centre grows to one full cell.
inline std::pair<double, double> centre_extent(const std::vector<double>& axis, Eigen::Index lo, Eigen::Index hi) {
    const auto l = static_cast<std::size_t>(lo), h = static_cast<std::size_t>(hi);
    if (l != h) return {axis[l], axis[h]};
    double step = 1.0;
    if (axis.size() > 1) step = l + 1 < axis.size() ? axis[l + 1] - axis[l] : axis[l] - axis[l - 1];
    return {axis[l] - step / 2.0, axis[l] + step / 2.0};
}

}  // namespace detail

/// One box per 8-connected component, spanning the component's extreme
/// bin centres. Output is ordered by (t_min, f_min).
inline std::vector<RoiBox> boxes_from_mask(const BinaryMask& mask, const std::vector<double>& freq_axis,
                                           const std::vector<double>& time_axis) {
    const Eigen::Index rows = mask.rows(), cols = mask.cols();
    if (static_cast<std::size_t>(rows) != freq_axis.size() || static_cast<std::size_t>(cols) != time_axis.size())
        throw InvalidArgument("boxes_from_mask: mask and axes disagree");
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> seen = decltype(seen)::Zero(rows, cols);
    std::vector<RoiBox> boxes;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            if (!mask(r, c) || seen(r, c)) continue;
            Eigen::Index rmin = r, rmax = r, cmin = c, cmax = c;
            stack.assign(1, {r, c});
            seen(r, c) = 1;
            while (!stack.empty()) {
                const auto [pr, pc] = stack.back();
                stack.pop_back();
                rmin = std::min(rmin, pr);
                rmax = std::max(rmax, pr);
                cmin = std::min(cmin, pc);
                cmax = std::max(cmax, pc);
                for (const auto& d : detail::kNeighbours) {
                    const Eigen::Index nr = pr + d[0], nc = pc + d[1];
                    if (nr < 0 || nc < 0 || nr >= rows || nc >= cols) continue;
                    if (mask(nr, nc) && !seen(nr, nc)) {
                        seen(nr, nc) = 1;
                        stack.emplace_back(nr, nc);
                    }
                }
            }
            RoiBox box;
            std::tie(box.t_min, box.t_max) = detail::centre_extent(time_axis, cmin, cmax);
            std::tie(box.f_min, box.f_max) = detail::centre_extent(freq_axis, rmin, rmax);
            boxes.push_back(std::move(box));
        }
    }
    std::stable_sort(boxes.begin(), boxes.end(), [](const RoiBox& a, const RoiBox& b) {
        return a.t_min != b.t_min ? a.t_min < b.t_min : a.f_min < b.f_min;
    });
    return boxes;
}

/// Distance between nearest edges; zero when the intervals overlap.
inline double interval_gap(double a_lo, double a_hi, double b_lo, double b_hi) {
    return std::max(0.0, std::max(a_lo, b_lo) - std::min(a_hi, b_hi));
}

/// Merges any two boxes closer than both gaps into their union, repeated
/// until no pair qualifies. Result ordered by (t_min, f_min).
inline std::vector<RoiBox> merge_boxes(std::vector<RoiBox> boxes, double merge_time_gap, double merge_freq_gap) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < boxes.size() && !changed; ++i) {
            for (std::size_t j = i + 1; j < boxes.size(); ++j) {
                const RoiBox& a = boxes[i];
                const RoiBox& b = boxes[j];
                if (interval_gap(a.t_min, a.t_max, b.t_min, b.t_max) < merge_time_gap &&
                    interval_gap(a.f_min, a.f_max, b.f_min, b.f_max) < merge_freq_gap) {
                    RoiBox& m = boxes[i];
                    m.t_min = std::min(a.t_min, b.t_min);
                    m.t_max = std::max(a.t_max, b.t_max);
                    m.f_min = std::min(a.f_min, b.f_min);
                    m.f_max = std::max(a.f_max, b.f_max);
                    boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(j));
                    changed = true;
                    break;
                }
            }
        }
    }
    std::stable_sort(boxes.begin(), boxes.end(), [](const RoiBox& a, const RoiBox& b) {
        return a.t_min != b.t_min ? a.t_min < b.t_min : a.f_min < b.f_min;
    });
    return boxes;
}

/// Keeps boxes lasting at least min_duration (inclusive, 1e-9 s slack).
inline std::vector<RoiBox> filter_short(std::vector<RoiBox> boxes, double min_duration) {
    std::erase_if(boxes, [&](const RoiBox& b) { return b.duration() < min_duration - 1e-9; });
    return boxes;
}

/// Trims the clip to the box and band-passes it to the box's frequency range.
inline AudioClip extract_roi_audio(const AudioClip& clip, const RoiBox& box, int order = 15) {
    const double dur = clip.duration();
    if (box.t_min < -1e-9 || box.t_max > dur + 1e-9 || !(box.t_min < box.t_max))
        throw InvalidArgument("extract_roi_audio: box [" + std::to_string(box.t_min) + ", " +
                              std::to_string(box.t_max) + "] s outside clip of " + std::to_string(dur) + " s");
    if (!(box.f_min < box.f_max)) throw InvalidArgument("extract_roi_audio: empty frequency range");
    const double nyquist = clip.sample_rate / 2.0;
    BandpassSpec band{box.f_min, box.f_max, order};
    if (band.high_hz >= nyquist) {
        band.high_hz = 0.999 * nyquist;
        log::warn("extract_roi_audio: " + box.roi_id + " f_max clamped to 0.999*Nyquist");
    }
    if (band.low_hz <= 0.0) {
        band.low_hz = std::min(1.0, band.high_hz / 2.0);
        log::warn("extract_roi_audio: " + box.roi_id + " f_min raised above 0 Hz");
    }
    if (!(band.low_hz < band.high_hz)) throw InvalidArgument("extract_roi_audio: frequency range above Nyquist");
    const AudioClip cut = trim(clip, std::max(0.0, box.t_min), std::min(dur, box.t_max));
    return bandpass(cut, band);
}

/// Band-limited linear STFT of a recording: the parameter-independent first
/// half of segment_recording.
inline Spectrogram segmentation_spectrogram(const AudioClip& clip, const SegmentationParams& params) {
    BandpassSpec band = params.band;
    const double nyquist = clip.sample_rate / 2.0;
    if (band.high_hz >= nyquist) {
        band.high_hz = 0.999 * nyquist;
        log::warn("segmentation: band upper edge clamped to 0.999*Nyquist for " + clip.source_id);
    }
    return stft_magnitude(bandpass(clip, band), params.stft);
}

/// Downscale, subtract the smoothed noise profile and convert to dB.
inline Spectrogram denoised_db(const Spectrogram& linear, int time_factor, int freq_factor, int smoothing_bands) {
    const Spectrogram small = downscale(linear, time_factor, freq_factor);
    return subtract_noise_to_db(small, estimate_noise_profile(small, smoothing_bands));
}

/// Threshold, box, merge and filter a prepared dB spectrogram. Boxes are
/// clamped to [0, clip_duration] and to the segmentation band.
inline std::vector<RoiBox> boxes_from_db(const Spectrogram& db, const SegmentationParams& params,
                                         double clip_duration) {
    const BinaryMask mask = hysteresis_binarize(db, params.t_high_db, params.t_low_db);
    auto boxes = boxes_from_mask(mask, db.freq_axis, db.time_axis);
    boxes = merge_boxes(std::move(boxes), params.merge_time_gap_s, params.merge_freq_gap_hz);
    for (auto& b : boxes) {
        b.t_min = std::max(b.t_min, 0.0);
        b.t_max = std::min(b.t_max, clip_duration);
        b.f_min = std::max(b.f_min, params.band.low_hz);
        b.f_max = std::min(b.f_max, params.band.high_hz);
    }
    std::erase_if(boxes, [](const RoiBox& b) { return !(b.f_min < b.f_max) || !(b.t_min < b.t_max); });
    return filter_short(std::move(boxes), params.min_duration_s);
}

/// Full segmentation of one recording into time-frequency ROIs.
inline std::vector<RoiBox> segment_recording(const AudioClip& clip, const SegmentationParams& params) {
    params.validate();
    const Spectrogram linear = segmentation_spectrogram(clip, params);
    const Spectrogram db =
        denoised_db(linear, params.time_factor, params.freq_factor, params.noise_smoothing_bands);
    auto boxes = boxes_from_db(db, params, clip.duration());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        boxes[i].source_id = clip.source_id;
        boxes[i].roi_id = clip.source_id + "#" + std::to_string(i);
    }
    return boxes;
}

/// ROI manifest: roi_id, source_id, species, t_min_s, t_max_s, f_min_hz, f_max_hz.
inline void write_roi_manifest(const std::filesystem::path& path, const std::vector<RoiBox>& boxes) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(boxes.size());
    for (const auto& b : boxes)
        rows.push_back({b.roi_id, b.source_id, b.species, csv::fixed(b.t_min), csv::fixed(b.t_max),
                        csv::fixed(b.f_min, 3), csv::fixed(b.f_max, 3)});
    csv::write_file(path.string(), {"roi_id", "source_id", "species", "t_min_s", "t_max_s", "f_min_hz", "f_max_hz"},
                    rows);
}

}  // namespace birdlabel
