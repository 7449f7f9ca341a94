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
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "birdlabel/audio_io.hpp"
#include "birdlabel/csv.hpp"
#include "birdlabel/error.hpp"

namespace birdlabel {

enum class Scale { linear, decibel };

/// Magnitude grid, rows = frequency (ascending), columns = time (ascending).
struct Spectrogram {
    Eigen::MatrixXd values;
    std::vector<double> freq_axis;  // Hz, row centres
    std::vector<double> time_axis;  // s, column centres
    Scale scale = Scale::linear;

    [[nodiscard]] Eigen::Index n_freq() const { return values.rows(); }
    [[nodiscard]] Eigen::Index n_time() const { return values.cols(); }
    [[nodiscard]] bool empty() const { return values.size() == 0; }
    /// Spacing between the first two rows (or 0 for a single row).
    [[nodiscard]] double freq_step() const {
        return freq_axis.size() > 1 ? freq_axis[1] - freq_axis[0] : 0.0;
    }
    [[nodiscard]] double time_step() const {
        return time_axis.size() > 1 ? time_axis[1] - time_axis[0] : 0.0;
    }
};

struct StftParams {
    int window_size = 2048;
    int hop = 1024;
};

/// Periodic Hann window.
inline std::vector<double> hann_window(int n) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
    return w;
}

/// Number of full frames for `n` samples.
inline Eigen::Index stft_frame_count(std::size_t n, const StftParams& p) {
    if (n < static_cast<std::size_t>(p.window_size)) return 0;
    return static_cast<Eigen::Index>((n - static_cast<std::size_t>(p.window_size)) / p.hop + 1);
}

/// Hann-windowed STFT magnitude; frames start at multiples of hop and are
/// time-stamped at their centre.
inline Spectrogram stft_magnitude(const AudioClip& clip, const StftParams& params) {
    if (params.window_size <= 0 || params.hop <= 0 || params.hop > params.window_size)
        throw InvalidArgument("stft: need 0 < hop <= window_size");
    if (clip.sample_rate <= 0) throw InvalidArgument("stft: sample rate must be positive");
    const Eigen::Index frames = stft_frame_count(clip.samples.size(), params);
    if (frames == 0)
        throw InvalidArgument("stft: clip of " + std::to_string(clip.samples.size()) +
                              " samples is shorter than one window of " + std::to_string(params.window_size));
    const int n = params.window_size;
    const Eigen::Index bins = n / 2 + 1;
    const auto window = hann_window(n);

    Spectrogram spec;
    spec.values.resize(bins, frames);
    spec.freq_axis.resize(static_cast<std::size_t>(bins));
    for (Eigen::Index k = 0; k < bins; ++k) spec.freq_axis[k] = static_cast<double>(k) * clip.sample_rate / n;
    spec.time_axis.resize(static_cast<std::size_t>(frames));

    Eigen::FFT<double> fft;
    std::vector<double> frame(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> out;
    for (Eigen::Index f = 0; f < frames; ++f) {
        const std::size_t start = static_cast<std::size_t>(f) * params.hop;
        for (int i = 0; i < n; ++i) frame[i] = clip.samples[start + i] * window[i];
        fft.fwd(out, frame);
        for (Eigen::Index k = 0; k < bins; ++k) spec.values(k, f) = std::abs(out[static_cast<std::size_t>(k)]);
        spec.time_axis[f] = (static_cast<double>(start) + n / 2.0) / clip.sample_rate;
    }
    return spec;
}

namespace detail {

/// Averages consecutive groups of `factor` entries; the trailing group may be short.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks(Eigen::Index n, int factor) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    for (Eigen::Index s = 0; s < n; s += factor) out.emplace_back(s, std::min<Eigen::Index>(factor, n - s));
    return out;
}

}  // namespace detail

/// Block-mean downscaling of a linear spectrogram.
inline Spectrogram downscale(const Spectrogram& spec, int time_factor, int freq_factor) {
    if (time_factor <= 0 || freq_factor <= 0) throw InvalidArgument("downscale: factors must be positive");
    if (spec.scale != Scale::linear) throw InvalidArgument("downscale: spectrogram must be linear");
    const auto rb = detail::blocks(spec.n_freq(), freq_factor);
    const auto cb = detail::blocks(spec.n_time(), time_factor);
    Spectrogram out;
    out.scale = Scale::linear;
    out.values.resize(static_cast<Eigen::Index>(rb.size()), static_cast<Eigen::Index>(cb.size()));
    for (std::size_t r = 0; r < rb.size(); ++r)
        for (std::size_t c = 0; c < cb.size(); ++c)
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                spec.values.block(rb[r].first, cb[c].first, rb[r].second, cb[c].second).mean();
    auto centres = [](const std::vector<double>& axis, const auto& bl) {
        std::vector<double> c;
        c.reserve(bl.size());
        for (const auto& [s, len] : bl) {
            double sum = 0.0;
            for (Eigen::Index i = s; i < s + len; ++i) sum += axis[static_cast<std::size_t>(i)];
            c.push_back(sum / static_cast<double>(len));
        }
        return c;
    };
    out.freq_axis = centres(spec.freq_axis, rb);
    out.time_axis = centres(spec.time_axis, cb);
    return out;
}

struct NoiseProfile {
    std::vector<double> per_band_level;
    int smoothing_bands = 25;
};

/// Centred running mean, window truncated at the edges.
inline std::vector<double> running_mean(const std::vector<double>& v, int window) {
    if (window <= 0) throw InvalidArgument("running_mean: window must be positive");
    const auto n = static_cast<long>(v.size());
    const long before = (window - 1) / 2;
    const long after = window / 2;
    std::vector<double> prefix(v.size() + 1, 0.0);
    for (long i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + v[i];
    std::vector<double> out(v.size());
    for (long i = 0; i < n; ++i) {
        const long lo = std::max(0L, i - before);
        const long hi = std::min(n - 1, i + after);
        out[i] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
    }
    return out;
}

/// Stationary noise estimate: per-row time mean, smoothed across rows.
inline NoiseProfile estimate_noise_profile(const Spectrogram& spec, int smoothing_bands = 25) {
    if (spec.empty()) throw InvalidArgument("noise profile: empty spectrogram");
    if (spec.scale != Scale::linear) throw InvalidArgument("noise profile: spectrogram must be linear");
    std::vector<double> raw(static_cast<std::size_t>(spec.n_freq()));
    for (Eigen::Index r = 0; r < spec.n_freq(); ++r) raw[r] = spec.values.row(r).mean();
    return {running_mean(raw, smoothing_bands), smoothing_bands};
}

inline constexpr double kDbEpsilon = 1e-10;
inline constexpr double kDbFloor = -200.0;

/// Subtracts the profile in the linear domain and expresses what remains in
/// dB relative to the band's own background level:
///   20*log10(max(x - p, 0) / p + eps), clamped below at floor_db.
/// A band whose profile is zero carries no signal and maps to the floor.
inline Spectrogram subtract_noise_to_db(const Spectrogram& spec, const NoiseProfile& profile,
                                       double floor_db = kDbFloor) {
    if (spec.scale != Scale::linear) throw InvalidArgument("subtract_noise_to_db: spectrogram must be linear");
    if (static_cast<Eigen::Index>(profile.per_band_level.size()) != spec.n_freq())
        throw InvalidArgument("subtract_noise_to_db: profile length " +
                              std::to_string(profile.per_band_level.size()) + " != " +
                              std::to_string(spec.n_freq()) + " rows");
    Spectrogram out = spec;
    out.scale = Scale::decibel;
    for (Eigen::Index r = 0; r < spec.n_freq(); ++r) {
        const double p = profile.per_band_level[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < spec.n_time(); ++c) {
            const double excess = std::max(spec.values(r, c) - p, 0.0);
            const double ratio = p > 0.0 ? excess / p : 0.0;
            out.values(r, c) = std::max(20.0 * std::log10(ratio + kDbEpsilon), floor_db);
        }
    }
    return out;
}

/// Dense CSV dump: first column is the row frequency, header carries times.
inline void write_spectrogram_csv(const std::string& path, const Spectrogram& spec) {
    std::vector<std::string> header{"freq_hz"};
    for (double t : spec.time_axis) header.push_back(csv::exact(t));
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(spec.n_freq()));
    for (Eigen::Index r = 0; r < spec.n_freq(); ++r) {
        std::vector<std::string> row{csv::exact(spec.freq_axis[static_cast<std::size_t>(r)])};
        for (Eigen::Index c = 0; c < spec.n_time(); ++c) row.push_back(csv::exact(spec.values(r, c)));
        rows.push_back(std::move(row));
    }
    csv::write_file(path, header, rows);
}

}  // namespace birdlabel
