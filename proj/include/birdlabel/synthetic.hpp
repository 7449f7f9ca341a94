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

// Synthetic bird-like recordings with known event geometry: tonal chirp
// families (one per pseudo-species), broadband bursts and a white-noise floor.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "birdlabel/annotations.hpp"
#include "birdlabel/audio_io.hpp"
#include "birdlabel/error.hpp"
#include "birdlabel/segmentation.hpp"

namespace birdlabel::synth {

/// Instantaneous frequency f(t) = start + (end - start) t/d + fm_depth sin(2 pi fm_rate t),
/// plus optional integer harmonics at decreasing amplitude.
struct ChirpFamily {
    double f_start_hz = 2000.0;
    double f_end_hz = 4000.0;
    double fm_depth_hz = 0.0;
    double fm_rate_hz = 0.0;
    int harmonics = 1;
    double min_duration_s = 0.6;
    double max_duration_s = 1.2;
    /// Relative jitter applied to both frequency endpoints per event.
    double freq_jitter = 0.04;
};

enum class EventKind { chirp, burst };

struct Event {
    EventKind kind = EventKind::chirp;
    double t_start = 0.0;
    double duration = 0.0;
    // chirp
    ChirpFamily shape;
    // burst
    double f_low_hz = 0.0;
    double f_high_hz = 0.0;
    bool is_target = true;

    /// Ground-truth box: time support by frequency range actually swept.
    [[nodiscard]] RoiBox box() const;
};

inline double instantaneous_frequency(const ChirpFamily& c, double t, double duration) {
    return c.f_start_hz + (c.f_end_hz - c.f_start_hz) * t / duration +
           c.fm_depth_hz * std::sin(2.0 * std::numbers::pi * c.fm_rate_hz * t);
}

inline RoiBox Event::box() const {
    RoiBox b;
    b.t_min = t_start;
    b.t_max = t_start + duration;
    if (kind == EventKind::burst) {
        b.f_min = f_low_hz;
        b.f_max = f_high_hz;
    } else {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        constexpr int kSteps = 2000;
        for (int i = 0; i <= kSteps; ++i) {
            const double f = instantaneous_frequency(shape, duration * i / kSteps, duration);
            lo = std::min(lo, f);
            hi = std::max(hi, f);
        }
        b.f_min = lo;
        b.f_max = hi * shape.harmonics;
    }
    b.truth_label = is_target ? Label::signal : Label::noise;
    return b;
}

namespace detail {

inline constexpr double kRampSeconds = 0.02;

inline double ramp(double t, double duration) {
    const double r = std::min({1.0, t / kRampSeconds, (duration - t) / kRampSeconds});
    return r <= 0.0 ? 0.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * r);
}

}  // namespace detail

/// Adds one event to `x`. `rms` is the event's RMS over its support.
inline void render(std::vector<double>& x, int sample_rate, const Event& e, double rms, std::mt19937_64& rng) {
    const auto n0 = static_cast<std::size_t>(std::llround(e.t_start * sample_rate));
    const auto len = static_cast<std::size_t>(std::llround(e.duration * sample_rate));
    if (n0 + len > x.size()) throw InvalidArgument("synth: event exceeds recording");
    if (e.kind == EventKind::chirp) {
        const int h = std::max(1, e.shape.harmonics);
        double norm = 0.0;
        for (int k = 1; k <= h; ++k) norm += 1.0 / (k * k);
        const double amp = rms * std::sqrt(2.0 / norm);
        double phase = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            const double f = instantaneous_frequency(e.shape, t, e.duration);
            phase += 2.0 * std::numbers::pi * f / sample_rate;
            double v = 0.0;
            for (int k = 1; k <= h; ++k) v += std::sin(k * phase) / k;
            x[n0 + i] += amp * detail::ramp(t, e.duration) * v;
        }
    } else {
        std::normal_distribution<double> g(0.0, 1.0);
        AudioClip noise{std::vector<double>(len), sample_rate, "burst"};
        for (auto& v : noise.samples) v = g(rng);
        noise = bandpass(noise, BandpassSpec{e.f_low_hz, e.f_high_hz, 8});
        double ss = 0.0;
        for (double v : noise.samples) ss += v * v;
        const double scale = rms / std::sqrt(ss / static_cast<double>(len));
        for (std::size_t i = 0; i < len; ++i) {
            const double t = static_cast<double>(i) / sample_rate;
            x[n0 + i] += scale * detail::ramp(t, e.duration) * noise.samples[i];
        }
    }
}

struct RecordingSpec {
    double duration_s = 20.0;
    int sample_rate = 44100;
    double noise_rms = 0.005;
    double snr_db = 30.0;  // event RMS over noise RMS
    double min_gap_s = 1.0;
    double margin_s = 0.5;
};

struct Recording {
    AudioClip clip;
    std::vector<Event> events;

    [[nodiscard]] std::vector<RoiBox> truth_boxes() const {
        std::vector<RoiBox> out;
        for (const auto& e : events) {
            auto b = e.box();
            b.source_id = clip.source_id;
            out.push_back(b);
        }
        return out;
    }
};

/// Lays events out in time with at least min_gap_s between them, in the given
/// order, with the leftover slack spread at random. Event durations must be set.
inline void place_in_time(std::vector<Event>& events, const RecordingSpec& spec, std::mt19937_64& rng) {
    double busy = 0.0;
    for (const auto& e : events) busy += e.duration;
    const double gaps = events.empty() ? 0.0 : spec.min_gap_s * static_cast<double>(events.size() - 1);
    const double slack = spec.duration_s - 2.0 * spec.margin_s - busy - gaps;
    if (slack < 0.0) throw InvalidArgument("synth: events do not fit in the recording");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> w(events.size() + 1);
    double sum = 0.0;
    for (auto& v : w) sum += (v = u(rng));
    double t = spec.margin_s;
    for (std::size_t i = 0; i < events.size(); ++i) {
        t += slack * w[i] / sum;
        events[i].t_start = t;
        t += events[i].duration + spec.min_gap_s;
    }
}

/// Renders the events over a white-noise floor.
inline Recording render_recording(std::vector<Event> events, const RecordingSpec& spec, std::string source_id,
                                  std::mt19937_64& rng) {
    Recording rec;
    rec.clip.sample_rate = spec.sample_rate;
    rec.clip.source_id = std::move(source_id);
    rec.clip.samples.resize(static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate)));
    std::normal_distribution<double> g(0.0, spec.noise_rms);
    for (auto& v : rec.clip.samples) v = g(rng);
    const double rms = spec.noise_rms * std::pow(10.0, spec.snr_db / 20.0);
    for (const auto& e : events) render(rec.clip.samples, spec.sample_rate, e, rms, rng);
    for (auto& v : rec.clip.samples) v = std::clamp(v, -1.0, 1.0);
    rec.events = std::move(events);
    return rec;
}

inline Event draw_chirp(const ChirpFamily& family, bool target, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Event e;
    e.kind = EventKind::chirp;
    e.is_target = target;
    e.shape = family;
    const double j = 1.0 + family.freq_jitter * (2.0 * u(rng) - 1.0);
    e.shape.f_start_hz *= j;
    e.shape.f_end_hz *= j;
    e.duration = family.min_duration_s + (family.max_duration_s - family.min_duration_s) * u(rng);
    return e;
}

inline Event draw_burst(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Event e;
    e.kind = EventKind::burst;
    e.is_target = false;
    e.f_low_hz = 500.0 + 2500.0 * u(rng);
    e.f_high_hz = e.f_low_hz + 3000.0 + 7000.0 * u(rng);
    e.duration = 0.4 + 0.6 * u(rng);
    return e;
}

/// Ten distinct chirp families.
inline std::vector<ChirpFamily> default_families() {
    return {
        {2000, 4000, 0, 0, 1, 0.6, 1.0, 0.04},    // up-sweep
        {6000, 3500, 0, 0, 1, 0.6, 1.0, 0.04},    // down-sweep
        {5000, 5000, 300, 8, 1, 0.7, 1.3, 0.04},  // trill
        {7000, 9500, 0, 0, 1, 0.5, 0.8, 0.04},    // high up-sweep
        {1500, 1800, 0, 0, 1, 0.8, 1.4, 0.04},    // slow whistle
        {9000, 7000, 0, 0, 1, 0.5, 0.7, 0.04},    // high down-sweep
        {3000, 3000, 400, 2, 1, 0.8, 1.2, 0.04},  // slow warble
        {1000, 2500, 0, 0, 1, 0.6, 1.0, 0.04},    // low up-sweep
        {8000, 8000, 200, 15, 1, 0.6, 1.0, 0.04}, // fast trill
        {5500, 7500, 0, 0, 1, 0.6, 1.0, 0.04},    // mid up-sweep
    };
}

struct CorpusSpec {
    std::size_t n_species = 10;
    std::size_t files_per_species = 20;
    int targets_per_file = 3;
    /// Distractors per file are drawn uniformly from [min, max].
    int min_distractors = 1;
    int max_distractors = 2;
    /// Probability that a distractor is a burst rather than another species' chirp.
    double burst_fraction = 0.5;
    RecordingSpec recording;
    std::uint64_t seed = 1;
};

struct CorpusFile {
    std::string species;
    std::string stem;
    Recording recording;
};

inline std::string species_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "species_%02zu", i);
    return buf;
}

/// Deterministic corpus: every file holds targets of its species plus
/// distractors, shuffled in time.
inline std::vector<CorpusFile> make_corpus(const CorpusSpec& spec,
                                           const std::vector<ChirpFamily>& families = default_families()) {
    if (spec.n_species == 0 || spec.n_species > families.size())
        throw InvalidArgument("synth: n_species must be in [1, " + std::to_string(families.size()) + "]");
    if (spec.min_distractors < 0 || spec.max_distractors < spec.min_distractors)
        throw InvalidArgument("synth: bad distractor range");
    std::vector<CorpusFile> out;
    for (std::size_t s = 0; s < spec.n_species; ++s) {
        for (std::size_t f = 0; f < spec.files_per_species; ++f) {
            std::mt19937_64 rng(spec.seed * 1000003ULL + s * 1009ULL + f);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            std::uniform_int_distribution<int> n_noise(spec.min_distractors, spec.max_distractors);
            std::vector<Event> events;
            for (int i = 0; i < spec.targets_per_file; ++i) events.push_back(draw_chirp(families[s], true, rng));
            const int k = n_noise(rng);
            for (int i = 0; i < k; ++i) {
                if (spec.n_species == 1 || u(rng) < spec.burst_fraction) {
                    events.push_back(draw_burst(rng));
                } else {
                    std::size_t other = std::uniform_int_distribution<std::size_t>(0, spec.n_species - 2)(rng);
                    if (other >= s) ++other;
                    events.push_back(draw_chirp(families[other], false, rng));
                }
            }
            std::shuffle(events.begin(), events.end(), rng);
            place_in_time(events, spec.recording, rng);
            CorpusFile file;
            file.species = species_name(s);
            char stem[64];
            std::snprintf(stem, sizeof stem, "%s_%03zu", file.species.c_str(), f);
            file.stem = stem;
            file.recording = render_recording(std::move(events), spec.recording, file.species + "/" + file.stem + ".wav", rng);
            out.push_back(std::move(file));
        }
    }
    return out;
}

/// Recording with k isolated chirps lasting 0.5-1.5 s, each sweeping 500-2000 Hz
/// somewhere in 1-11 kHz, frequency ranges pairwise at least 500 Hz apart.
inline Recording isolated_chirps(int k, std::uint64_t seed, const RecordingSpec& spec = {}) {
    if (k < 1) throw InvalidArgument("synth: need at least one chirp");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Event> events;
    std::vector<std::pair<double, double>> ranges;
    for (int attempts = 0; static_cast<int>(events.size()) < k; ++attempts) {
        if (attempts % 200 == 199) {  // painted into a corner, start over
            events.clear();
            ranges.clear();
        }
        const double lo = 1000.0 + 8000.0 * u(rng);
        const double hi = lo + 500.0 + 1500.0 * u(rng);
        const bool up = u(rng) < 0.5;
        const bool clash = std::any_of(ranges.begin(), ranges.end(), [&](const auto& r) {
            return interval_gap(lo, hi, r.first, r.second) < 500.0;
        });
        if (clash) continue;
        ChirpFamily f{up ? lo : hi, up ? hi : lo, 0, 0, 1, 0.5, 1.5, 0.0};
        events.push_back(draw_chirp(f, true, rng));
        ranges.emplace_back(lo, hi);
    }
    place_in_time(events, spec, rng);
    return render_recording(std::move(events), spec, "chirps_" + std::to_string(seed), rng);
}

/// Writes <dir>/<species>/<stem>.wav plus an Audacity label file next to it.
inline void write_corpus(const std::filesystem::path& dir, const std::vector<CorpusFile>& corpus,
                         WavEncoding encoding = WavEncoding::float32) {
    for (const auto& f : corpus) {
        const auto sub = dir / f.species;
        std::filesystem::create_directories(sub);
        write_wav(sub / (f.stem + ".wav"), f.recording.clip, encoding);
        write_audacity_labels(sub / (f.stem + ".txt"), f.recording.truth_boxes());
    }
}

}  // namespace birdlabel::synth
