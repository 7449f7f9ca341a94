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

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "birdlabel/audio_io.hpp"
#include "birdlabel/csv.hpp"
#include "birdlabel/error.hpp"
#include "birdlabel/spectrogram.hpp"

namespace birdlabel {

inline constexpr std::size_t kWaveletCount = 48;
inline constexpr std::size_t kFeatureCount = 49;

struct FeatureParams {
    int sample_rate = 24000;
    int window_size = 512;
    int hop = 256;
    double band_low_hz = 250.0;
    double band_high_hz = 11000.0;
    int bandpass_order = 15;
    int n_scales = 6;
    /// Gabor wavelength, in pixels, at the finest scale.
    double base_wavelength = 4.0;
};

/// Stripe direction the kernel responds to, on a (frequency up, time right) image.
enum class Orientation { horizontal, vertical, diagonal45, diagonal135 };
enum class Phase { even, odd };

inline std::string_view to_string(Orientation o) {
    switch (o) {
        case Orientation::horizontal: return "horizontal";
        case Orientation::vertical: return "vertical";
        case Orientation::diagonal45: return "diag45";
        case Orientation::diagonal135: return "diag135";
    }
    return "?";
}

struct GaborKernel {
    Eigen::MatrixXd weights;  // rows = frequency offset, cols = time offset
    int scale = 0;            // pyramid level the kernel is applied at
    Orientation orientation = Orientation::horizontal;
    Phase phase = Phase::even;
    /// Wavelength measured on the full-resolution grid: base * 2^scale.
    double effective_wavelength = 0.0;
};

/// 48 kernels ordered scale-major, then orientation, then phase; the
/// coefficient index of (s, o, p) is s*8 + o*2 + p.
struct GaborBank {
    std::vector<GaborKernel> kernels;
    int n_scales = 0;
};

namespace detail {

constexpr Orientation kOrientations[4] = {Orientation::horizontal, Orientation::vertical, Orientation::diagonal45,
                                          Orientation::diagonal135};

/// Unit carrier direction (row, col) for each stripe orientation. Rows grow
/// with frequency, so an up-sweep is a 45 degree stripe.
inline std::pair<double, double> carrier_direction(Orientation o) {
    const double h = std::numbers::sqrt2 / 2.0;
    switch (o) {
        case Orientation::horizontal: return {1.0, 0.0};
        case Orientation::vertical: return {0.0, 1.0};
        case Orientation::diagonal45: return {h, -h};
        case Orientation::diagonal135: return {h, h};
    }
    return {1.0, 0.0};
}

inline Eigen::MatrixXd gabor_kernel(double wavelength, Orientation o, Phase p) {
    // one-octave bandwidth
    const double sigma = 0.56 * wavelength;
    const int half = static_cast<int>(std::ceil(2.5 * sigma));
    const auto [dr, dc] = carrier_direction(o);
    Eigen::MatrixXd k(2 * half + 1, 2 * half + 1);
    for (int u = -half; u <= half; ++u) {
        for (int v = -half; v <= half; ++v) {
            const double env = std::exp(-(u * u + v * v) / (2.0 * sigma * sigma));
            const double arg = 2.0 * std::numbers::pi * (u * dr + v * dc) / wavelength;
            k(u + half, v + half) = env * (p == Phase::even ? std::cos(arg) : std::sin(arg));
        }
    }
    k.array() -= k.mean();
    k /= k.norm();
    return k;
}

}  // namespace detail

inline GaborBank build_gabor_bank(const FeatureParams& params = {}) {
    if (params.n_scales < 1) throw InvalidArgument("gabor bank: need at least one scale");
    GaborBank bank;
    bank.n_scales = params.n_scales;
    for (int s = 0; s < params.n_scales; ++s) {
        for (Orientation o : detail::kOrientations) {
            for (Phase p : {Phase::even, Phase::odd}) {
                GaborKernel k;
                k.weights = detail::gabor_kernel(params.base_wavelength, o, p);
                k.scale = s;
                k.orientation = o;
                k.phase = p;
                k.effective_wavelength = params.base_wavelength * std::pow(2.0, s);
                bank.kernels.push_back(std::move(k));
            }
        }
    }
    return bank;
}

/// Resample to the feature rate, band-pass, STFT, and keep the rows whose
/// centre lies inside the feature band.
inline Spectrogram roi_feature_spectrogram(const AudioClip& roi_audio, const FeatureParams& params) {
    const AudioClip clip = resample(roi_audio, params.sample_rate);
    if (clip.samples.size() < static_cast<std::size_t>(params.window_size))
        throw InvalidArgument("feature spectrogram: ROI " + roi_audio.source_id + " shorter than one " +
                              std::to_string(params.window_size) + "-sample window");
    const AudioClip filtered =
        bandpass(clip, BandpassSpec{params.band_low_hz, params.band_high_hz, params.bandpass_order});
    const Spectrogram full = stft_magnitude(filtered, StftParams{params.window_size, params.hop});
    Eigen::Index first = 0, last = full.n_freq();
    while (first < last && full.freq_axis[static_cast<std::size_t>(first)] < params.band_low_hz) ++first;
    while (last > first && full.freq_axis[static_cast<std::size_t>(last - 1)] > params.band_high_hz) --last;
    Spectrogram out;
    out.scale = Scale::linear;
    out.values = full.values.middleRows(first, last - first);
    out.freq_axis.assign(full.freq_axis.begin() + first, full.freq_axis.begin() + last);
    out.time_axis = full.time_axis;
    return out;
}

namespace detail {

/// Halves both dimensions by 2x2 block means (odd edges averaged over what exists).
inline Eigen::MatrixXd halve(const Eigen::MatrixXd& m) {
    const Eigen::Index rows = (m.rows() + 1) / 2, cols = (m.cols() + 1) / 2;
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            const Eigen::Index h = std::min<Eigen::Index>(2, m.rows() - 2 * r);
            const Eigen::Index w = std::min<Eigen::Index>(2, m.cols() - 2 * c);
            out(r, c) = m.block(2 * r, 2 * c, h, w).mean();
        }
    return out;
}

/// Half-sample symmetric index folding; valid for any offset.
inline Eigen::Index fold(Eigen::Index i, Eigen::Index n) {
    const Eigen::Index period = 2 * n;
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - 1 - i;
}

/// Reflect-pads each dimension that is smaller than the kernel up to the kernel size.
inline Eigen::MatrixXd pad_to(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
    const Eigen::Index out_r = std::max(m.rows(), rows), out_c = std::max(m.cols(), cols);
    if (out_r == m.rows() && out_c == m.cols()) return m;
    const Eigen::Index off_r = (out_r - m.rows()) / 2, off_c = (out_c - m.cols()) / 2;
    Eigen::MatrixXd out(out_r, out_c);
    for (Eigen::Index r = 0; r < out_r; ++r)
        for (Eigen::Index c = 0; c < out_c; ++c)
            out(r, c) = m(fold(r - off_r, m.rows()), fold(c - off_c, m.cols()));
    return out;
}

/// Mean absolute value of the valid-region 2-D convolution.
inline double mean_abs_response(const Eigen::MatrixXd& image, const Eigen::MatrixXd& kernel) {
    const Eigen::MatrixXd img = pad_to(image, kernel.rows(), kernel.cols());
    const Eigen::MatrixXd flipped = kernel.reverse();
    const Eigen::Index out_r = img.rows() - kernel.rows() + 1, out_c = img.cols() - kernel.cols() + 1;
    double acc = 0.0;
    for (Eigen::Index c = 0; c < out_c; ++c)
        for (Eigen::Index r = 0; r < out_r; ++r)
            acc += std::abs(img.block(r, c, kernel.rows(), kernel.cols()).cwiseProduct(flipped).sum());
    return acc / static_cast<double>(out_r * out_c);
}

}  // namespace detail

/// One mean-|response| coefficient per kernel on the max-normalised grid.
inline std::array<double, kWaveletCount> wavelet_features(const Spectrogram& spec, const GaborBank& bank) {
    if (spec.scale != Scale::linear) throw InvalidArgument("wavelet features: spectrogram must be linear");
    if (spec.empty()) throw InvalidArgument("wavelet features: empty spectrogram");
    if (bank.kernels.size() != kWaveletCount)
        throw InvalidArgument("wavelet features: bank must hold 48 kernels");
    std::array<double, kWaveletCount> out{};
    const double peak = spec.values.maxCoeff();
    if (!(peak > 0.0)) return out;

    std::vector<Eigen::MatrixXd> pyramid{spec.values / peak};
    for (int s = 1; s < bank.n_scales; ++s) pyramid.push_back(detail::halve(pyramid.back()));
    for (std::size_t i = 0; i < bank.kernels.size(); ++i) {
        const auto& k = bank.kernels[i];
        out[i] = detail::mean_abs_response(pyramid[static_cast<std::size_t>(k.scale)], k.weights);
    }
    return out;
}

/// Energy-weighted mean frequency of the time-averaged spectrum.
inline double spectral_centroid(const Spectrogram& spec) {
    if (spec.empty()) throw InvalidArgument("spectral centroid: empty spectrogram");
    const Eigen::VectorXd energy = spec.values.rowwise().mean();
    const double total = energy.sum();
    if (!(total > 0.0)) throw InvalidArgument("spectral centroid: spectrogram has no energy");
    double weighted = 0.0;
    for (Eigen::Index r = 0; r < energy.size(); ++r) weighted += spec.freq_axis[static_cast<std::size_t>(r)] * energy(r);
    return weighted / total;
}

struct FeatureVector {
    std::string roi_id;
    std::array<double, kWaveletCount> wavelet{};
    double centroid_hz = 0.0;

    [[nodiscard]] std::array<double, kFeatureCount> flatten() const {
        std::array<double, kFeatureCount> v{};
        std::copy(wavelet.begin(), wavelet.end(), v.begin());
        v[kWaveletCount] = centroid_hz;
        return v;
    }
};

inline FeatureVector featurize(const AudioClip& roi_audio, const FeatureParams& params, const GaborBank& bank) {
    const Spectrogram spec = roi_feature_spectrogram(roi_audio, params);
    FeatureVector fv;
    fv.roi_id = roi_audio.source_id;
    fv.wavelet = wavelet_features(spec, bank);
    fv.centroid_hz = spectral_centroid(spec);
    return fv;
}

/// Feature table: roi_id, w00..w47, centroid_hz.
inline void write_feature_table(const std::filesystem::path& path, const std::vector<FeatureVector>& features) {
    std::vector<std::string> header{"roi_id"};
    for (std::size_t i = 0; i < kWaveletCount; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "w%02zu", i);
        header.emplace_back(buf);
    }
    header.emplace_back("centroid_hz");
    std::vector<std::vector<std::string>> rows;
    rows.reserve(features.size());
    for (const auto& f : features) {
        std::vector<std::string> row{f.roi_id};
        for (double w : f.wavelet) row.push_back(csv::exact(w));
        row.push_back(csv::exact(f.centroid_hz));
        rows.push_back(std::move(row));
    }
    csv::write_file(path.string(), header, rows);
}

}  // namespace birdlabel
