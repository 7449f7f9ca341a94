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

// Signal generators and independent measurement helpers shared by the tests.

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "birdlabel/audio_io.hpp"

namespace testing_support {

using birdlabel::AudioClip;

inline AudioClip tone(double hz, double seconds, int rate, double amplitude = 0.5, double phase = 0.0) {
    AudioClip c;
    c.sample_rate = rate;
    c.source_id = "tone";
    c.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
    for (std::size_t i = 0; i < c.samples.size(); ++i)
        c.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate + phase);
    return c;
}

inline AudioClip white_noise(double seconds, int rate, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sigma);
    AudioClip c;
    c.sample_rate = rate;
    c.source_id = "noise";
    c.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
    for (auto& v : c.samples) v = g(rng);
    return c;
}

inline double rms(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

/// |DFT|^2 of the Hann-windowed signal, one-sided. The window keeps the
/// wrap-around discontinuity of a non-periodic clip out of the low bins.
inline std::vector<double> periodogram(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = x[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, w);
    std::vector<double> p(x.size() / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(spec[k]);
    return p;
}

/// Mean periodogram power in [lo, hi] Hz.
inline double band_power(const std::vector<double>& x, int rate, double lo, double hi) {
    const auto p = periodogram(x);
    const double df = static_cast<double>(rate) / static_cast<double>(x.size());
    double s = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double f = static_cast<double>(k) * df;
        if (f >= lo && f <= hi) {
            s += p[k];
            ++n;
        }
    }
    return n ? s / n : 0.0;
}

/// Frequency of the largest DFT bin.
inline double peak_frequency(const std::vector<double>& x, int rate) {
    const auto p = periodogram(x);
    std::size_t best = 1;
    for (std::size_t k = 1; k < p.size(); ++k)
        if (p[k] > p[best]) best = k;
    return static_cast<double>(best) * rate / static_cast<double>(x.size());
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("birdlabel_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Collects log lines while in scope.
class CaptureLog {
public:
    CaptureLog() : text_(std::make_shared<std::string>()) {
        birdlabel::log::set_sink([t = text_](birdlabel::log::Level, const std::string& m) { *t += m + "\n"; });
    }
    ~CaptureLog() { birdlabel::log::set_sink({}); }
    CaptureLog(const CaptureLog&) = delete;
    CaptureLog& operator=(const CaptureLog&) = delete;
    [[nodiscard]] std::string text() const { return *text_; }

private:
    std::shared_ptr<std::string> text_;
};

}  // namespace testing_support
