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

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "birdlabel/error.hpp"

namespace birdlabel {

/// Mono sample buffer. Samples are nominally in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;
    /// Origin file, with "@<offset>s" appended by trim().
    std::string source_id;

    [[nodiscard]] std::size_t size() const { return samples.size(); }
    [[nodiscard]] double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

struct BandpassSpec {
    double low_hz = 100.0;
    double high_hz = 18000.0;
    int order = 15;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline bool looks_like_mp3(const std::vector<unsigned char>& b) {
    if (b.size() >= 3 && b[0] == 'I' && b[1] == 'D' && b[2] == '3') return true;
    return b.size() >= 2 && b[0] == 0xFF && (b[1] & 0xE0) == 0xE0;
}

}  // namespace detail

/// Decodes a RIFF/WAVE byte buffer: integer PCM (8/16/24/32 bit) or 32/64-bit
/// float, any channel count. Channels are averaged into one.
inline AudioClip decode_wav(const std::vector<unsigned char>& bytes, const std::string& source_id) {
    using detail::read_u16;
    using detail::read_u32;
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        if (detail::looks_like_mp3(bytes))
            throw FormatError(source_id +
                              ": mp3 input is not supported; convert to PCM WAV first "
                              "(e.g. ffmpeg -i in.mp3 -ar 44100 out.wav)");
        throw FormatError(source_id +
                          ": not a RIFF/WAVE file; convert to PCM WAV before processing");
    }
    int format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t len = read_u32(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = bytes.size() - body;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (len < 16 || avail < 16) throw FormatError(source_id + ": truncated fmt chunk");
            format = read_u16(chunk + 8);
            channels = read_u16(chunk + 10);
            rate = read_u32(chunk + 12);
            bits = read_u16(chunk + 22);
            if (format == 0xFFFE && len >= 40 && avail >= 40) format = read_u16(chunk + 32);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_size = std::min<std::size_t>(len, avail);
        }
        pos = body + len + (len & 1u);
    }
    if (format == 0 || data == nullptr) throw FormatError(source_id + ": missing fmt or data chunk");
    const bool is_float = format == 3;
    if (!(format == 1 || is_float))
        throw FormatError(source_id + ": unsupported WAV codec " + std::to_string(format) +
                          "; convert to PCM WAV first");
    if (channels <= 0 || rate == 0) throw FormatError(source_id + ": invalid fmt header");
    if (is_float ? (bits != 32 && bits != 64) : (bits != 8 && bits != 16 && bits != 24 && bits != 32))
        throw FormatError(source_id + ": unsupported bit depth " + std::to_string(bits));

    const std::size_t bytes_per_sample = static_cast<std::size_t>(bits / 8);
    const std::size_t frame = bytes_per_sample * static_cast<std::size_t>(channels);
    const std::size_t frames = data_size / frame;
    if (frames == 0) throw FormatError(source_id + ": zero-length audio");

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.source_id = source_id;
    clip.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            const unsigned char* p = data + i * frame + static_cast<std::size_t>(c) * bytes_per_sample;
            double v = 0.0;
            if (is_float) {
                if (bits == 32) {
                    float f;
                    std::memcpy(&f, p, 4);
                    v = f;
                } else {
                    double d;
                    std::memcpy(&d, p, 8);
                    v = d;
                }
            } else {
                switch (bits) {
                    case 8: v = (static_cast<int>(p[0]) - 128) / 128.0; break;
                    case 16: v = static_cast<std::int16_t>(read_u16(p)) / 32768.0; break;
                    case 24: {
                        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
                        if (s & 0x800000) s |= ~0xFFFFFF;
                        v = s / 8388608.0;
                        break;
                    }
                    default: v = static_cast<std::int32_t>(read_u32(p)) / 2147483648.0; break;
                }
            }
            acc += v;
        }
        clip.samples[i] = std::clamp(acc / channels, -1.0, 1.0);
    }
    return clip;
}

/// Reads a WAV file without resampling.
inline AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open audio file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_wav(bytes, path.string());
}

enum class WavEncoding { pcm16, float32 };

/// Encodes interleaved channel data as a canonical 44-byte-header WAV.
inline std::vector<unsigned char> encode_wav(const std::vector<std::vector<double>>& channels, int sample_rate,
                                             WavEncoding enc = WavEncoding::pcm16) {
    if (channels.empty() || sample_rate <= 0) throw InvalidArgument("encode_wav: no channels or bad rate");
    const std::size_t frames = channels.front().size();
    for (const auto& ch : channels)
        if (ch.size() != frames) throw InvalidArgument("encode_wav: channel length mismatch");
    const std::uint16_t n_ch = static_cast<std::uint16_t>(channels.size());
    const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : 32;
    const std::uint32_t block = n_ch * bits / 8;
    const std::uint32_t data_len = static_cast<std::uint32_t>(frames * block);
    std::vector<unsigned char> out;
    out.reserve(44 + data_len);
    auto put = [&](const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        out.insert(out.end(), c, c + n);
    };
    auto u32 = [&](std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        put(b, 4);
    };
    auto u16 = [&](std::uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        put(b, 2);
    };
    put("RIFF", 4);
    u32(36 + data_len);
    put("WAVE", 4);
    put("fmt ", 4);
    u32(16);
    u16(enc == WavEncoding::pcm16 ? 1 : 3);
    u16(n_ch);
    u32(static_cast<std::uint32_t>(sample_rate));
    u32(static_cast<std::uint32_t>(sample_rate) * block);
    u16(static_cast<std::uint16_t>(block));
    u16(bits);
    put("data", 4);
    u32(data_len);
    for (std::size_t i = 0; i < frames; ++i) {
        for (const auto& ch : channels) {
            const double v = std::clamp(ch[i], -1.0, 1.0);
            if (enc == WavEncoding::pcm16) {
                const auto s = static_cast<std::int16_t>(std::clamp(std::lround(v * 32768.0), -32768L, 32767L));
                u16(static_cast<std::uint16_t>(s));
            } else {
                const float f = static_cast<float>(v);
                put(&f, 4);
            }
        }
    }
    return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip,
                      WavEncoding enc = WavEncoding::pcm16) {
    const auto bytes = encode_wav({clip.samples}, clip.sample_rate, enc);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Resampling

namespace detail {

inline double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double q = x * x / 4.0;
    for (int k = 1; k < 200; ++k) {
        term *= q / (static_cast<double>(k) * k);
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum;
}

inline double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

}  // namespace detail

/// Kaiser-windowed sinc resampler for rational rate ratios.
///
/// The kernel spans `zero_crossings` lobes of the anti-alias sinc on each
/// side; beta = 7.857 gives roughly 80 dB stop-band attenuation. The cutoff
/// is pulled in so the transition band ends at the lower Nyquist frequency.
class Resampler {
public:
    Resampler(int in_rate, int out_rate, int zero_crossings = 64, double beta = 7.857)
        : in_rate_(in_rate), out_rate_(out_rate) {
        if (in_rate <= 0 || out_rate <= 0) throw InvalidArgument("resample: rates must be positive");
        const long g = std::gcd(in_rate, out_rate);
        up_ = out_rate / g;
        down_ = in_rate / g;
        // transition width relative to the cutoff for a Kaiser window of this length
        const double transition = (80.0 - 7.95) / (14.36 * 2.0 * zero_crossings);
        cutoff_ = std::min(1.0, static_cast<double>(out_rate) / in_rate) * (1.0 - transition);
        half_ = static_cast<int>(std::ceil(zero_crossings / cutoff_));
        beta_ = beta;
        if (up_ <= 4096) {
            table_.resize(static_cast<std::size_t>(up_) * (2 * half_));
            for (long p = 0; p < up_; ++p) fill_taps(static_cast<double>(p) / up_, &table_[p * 2 * half_]);
        }
    }

    [[nodiscard]] std::vector<double> operator()(const std::vector<double>& x) const {
        if (up_ == down_) return x;
        const std::size_t n_in = x.size();
        const auto n_out = static_cast<std::size_t>(
            (static_cast<long double>(n_in) * out_rate_ + in_rate_ / 2) / in_rate_);
        std::vector<double> y(n_out);
        std::vector<double> scratch(table_.empty() ? 2 * half_ : 0);
        const long n = static_cast<long>(n_in);
        for (std::size_t m = 0; m < n_out; ++m) {
            const long long num = static_cast<long long>(m) * down_;
            const long base = static_cast<long>(num / up_);
            const long phase = static_cast<long>(num % up_);
            const double* taps;
            if (!table_.empty()) {
                taps = &table_[phase * 2 * half_];
            } else {
                fill_taps(static_cast<double>(phase) / up_, scratch.data());
                taps = scratch.data();
            }
            // taps[j] weights input sample base - half_ + 1 + j
            double acc = 0.0;
            const long first = base - half_ + 1;
            const long j0 = std::max(0L, -first);
            const long j1 = std::min(2L * half_, n - first);
            for (long j = j0; j < j1; ++j) acc += taps[j] * x[static_cast<std::size_t>(first + j)];
            y[m] = acc;
        }
        return y;
    }

private:
    void fill_taps(double frac, double* taps) const {
        // output time is base + frac; tap j sits at base - half_ + 1 + j
        const double width = static_cast<double>(half_);
        const double norm = detail::bessel_i0(beta_);
        double sum = 0.0;
        for (int j = 0; j < 2 * half_; ++j) {
            const double t = frac - static_cast<double>(j - half_ + 1);
            const double r = t / width;
            double w = 0.0;
            if (std::abs(r) < 1.0) w = detail::bessel_i0(beta_ * std::sqrt(1.0 - r * r)) / norm;
            taps[j] = cutoff_ * detail::sinc(cutoff_ * t) * w;
            sum += taps[j];
        }
        for (int j = 0; j < 2 * half_; ++j) taps[j] /= sum;
    }

    int in_rate_, out_rate_;
    long up_ = 1, down_ = 1;
    int half_ = 1;
    double cutoff_ = 1.0, beta_ = 8.0;
    std::vector<double> table_;
};

inline AudioClip resample(const AudioClip& clip, int target_rate) {
    if (clip.sample_rate == target_rate) return clip;
    AudioClip out;
    out.sample_rate = target_rate;
    out.source_id = clip.source_id;
    out.samples = Resampler(clip.sample_rate, target_rate)(clip.samples);
    return out;
}

/// Loads a WAV file as a mono clip at `target_rate`.
inline AudioClip load_audio(const std::filesystem::path& path, int target_rate) {
    if (target_rate <= 0) throw InvalidArgument("load_audio: target rate must be positive");
    if (!std::filesystem::exists(path)) throw IoError("audio file does not exist: " + path.string());
    AudioClip clip = resample(read_wav(path), target_rate);
    if (clip.samples.empty()) throw FormatError(path.string() + ": zero-length audio");
    for (auto& s : clip.samples) s = std::clamp(s, -1.0, 1.0);
    return clip;
}

// ---------------------------------------------------------------------------
// Butterworth band-pass as second-order sections

/// One biquad; a0 is implicitly 1.
struct Biquad {
    double b0, b1, b2, a1, a2;
};

using SosFilter = std::vector<Biquad>;

/// Designs a digital Butterworth band-pass of prototype order `spec.order`
/// (2*order poles) via bilinear transform with pre-warping, returned as
/// cascaded biquads. Gain is normalised to 1 at the geometric centre.
inline SosFilter design_butter_bandpass(const BandpassSpec& spec, int sample_rate) {
    using cd = std::complex<double>;
    const double nyquist = sample_rate / 2.0;
    if (spec.order < 1) throw InvalidArgument("bandpass: order must be positive");
    if (!(spec.low_hz > 0.0)) throw InvalidArgument("bandpass: low_hz must be > 0");
    if (!(spec.low_hz < spec.high_hz)) throw InvalidArgument("bandpass: low_hz must be < high_hz");
    if (!(spec.high_hz < nyquist)) throw InvalidArgument("bandpass: high_hz must be below Nyquist");

    const int n = spec.order;
    const double fs2 = 2.0 * sample_rate;
    const double w_lo = fs2 * std::tan(std::numbers::pi * spec.low_hz / sample_rate);
    const double w_hi = fs2 * std::tan(std::numbers::pi * spec.high_hz / sample_rate);
    const double bw = w_hi - w_lo;
    const double w0 = std::sqrt(w_lo * w_hi);

    std::vector<cd> poles;
    poles.reserve(2 * n);
    for (int m = -n + 1; m < n; m += 2) {
        const cd proto = -std::exp(cd(0.0, std::numbers::pi * m / (2.0 * n)));
        const cd half = proto * bw / 2.0;
        const cd root = std::sqrt(half * half - w0 * w0);
        for (const cd s : {half + root, half - root}) poles.push_back((fs2 + s) / (fs2 - s));
    }

    // Conjugate pairs, with real poles paired together. Each section takes the
    // zeros nearest its poles: z = +1 for the low-frequency side, z = -1 for the
    // high side, one of each when the pair straddles the centre. This keeps every
    // section's gain near 1 across the passband.
    auto side = [&](cd p) {
        const double s_mag = std::abs(fs2 * (p - 1.0) / (p + 1.0));
        if (std::abs(s_mag - w0) <= 1e-9 * w0) return 0;
        return s_mag < w0 ? -1 : 1;
    };
    std::vector<cd> upper, reals;
    for (const cd& p : poles) {
        if (std::abs(p) >= 1.0) throw Error("bandpass: unstable design (pole on/outside unit circle)");
        if (std::abs(p.imag()) <= 1e-12 * std::max(1.0, std::abs(p)))
            reals.push_back(cd(p.real(), 0.0));
        else if (p.imag() > 0)
            upper.push_back(p);
    }
    std::sort(reals.begin(), reals.end(), [](cd a, cd b) { return a.real() < b.real(); });
    if (reals.size() % 2 != 0 || upper.size() + reals.size() / 2 != static_cast<std::size_t>(n))
        throw Error("bandpass: numerically unstable design (pole pairing failed)");

    auto zeros_for = [](int s) -> std::array<double, 3> {
        if (s < 0) return {1.0, -2.0, 1.0};
        if (s > 0) return {1.0, 2.0, 1.0};
        return {1.0, 0.0, -1.0};
    };
    SosFilter sos;
    sos.reserve(n);
    int balance = 0;  // zeros at +1 minus zeros at -1
    for (const cd& p : upper) {
        const int sd = side(p);
        const auto b = zeros_for(sd);
        balance -= 2 * sd;
        sos.push_back({b[0], b[1], b[2], -2.0 * p.real(), std::norm(p)});
    }
    for (std::size_t i = 0; i < reals.size(); i += 2) {
        const double p1 = reals[i].real(), p2 = reals[i + 1].real();
        const int sd = side(reals[i]) + side(reals[i + 1]);
        const int sgn = (sd > 0) - (sd < 0);
        const auto b = zeros_for(sgn);
        balance -= 2 * sgn;
        sos.push_back({b[0], b[1], b[2], -(p1 + p2), p1 * p2});
    }
    if (balance != 0) throw Error("bandpass: numerically unstable design (zero pairing failed)");
    // poles nearest the unit circle last
    std::sort(sos.begin(), sos.end(), [](const Biquad& a, const Biquad& b) { return a.a2 < b.a2; });

    // unit gain per section at the centre frequency
    const double centre = 2.0 * std::atan(w0 / fs2);
    const cd zi = std::exp(cd(0.0, -centre)), zi2 = zi * zi;
    for (auto& s : sos) {
        const double g = std::abs((s.b0 + s.b1 * zi + s.b2 * zi2) / (1.0 + s.a1 * zi + s.a2 * zi2));
        s.b0 /= g;
        s.b1 /= g;
        s.b2 /= g;
    }
    return sos;
}

/// Magnitude response of a cascade at `hz`.
inline double sos_gain(const SosFilter& sos, double hz, int sample_rate) {
    using cd = std::complex<double>;
    const cd zi = std::exp(cd(0.0, -2.0 * std::numbers::pi * hz / sample_rate));
    cd h = 1.0;
    for (const auto& s : sos) h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
    return std::abs(h);
}

namespace detail {

/// Steady-state initial conditions of each section for a unit step.
inline std::vector<std::array<double, 2>> sos_step_state(const SosFilter& sos) {
    std::vector<std::array<double, 2>> zi(sos.size());
    double scale = 1.0;
    for (std::size_t i = 0; i < sos.size(); ++i) {
        const auto& s = sos[i];
        // solve [[1+a1, -1], [a2, 1]] z = [b1 - a1 b0, b2 - a2 b0]
        const double r0 = s.b1 - s.a1 * s.b0;
        const double r1 = s.b2 - s.a2 * s.b0;
        const double det = (1.0 + s.a1) + s.a2;
        double z0 = 0.0, z1 = 0.0;
        if (std::abs(det) > 1e-300) {
            z0 = (r0 + r1) / det;
            z1 = r1 - s.a2 * z0;
        }
        zi[i] = {z0 * scale, z1 * scale};
        scale *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    }
    return zi;
}

inline void sos_run(const SosFilter& sos, std::vector<double>& x, const std::vector<std::array<double, 2>>& zi,
                    double init) {
    for (std::size_t k = 0; k < sos.size(); ++k) {
        const auto& s = sos[k];
        double z0 = zi[k][0] * init, z1 = zi[k][1] * init;
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z0;
            z0 = s.b1 * in - s.a1 * out + z1;
            z1 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

}  // namespace detail

/// Zero-phase (forward-backward) filtering with odd-extension padding and
/// steady-state initial conditions.
inline std::vector<double> sosfiltfilt(const SosFilter& sos, const std::vector<double>& x) {
    if (x.empty()) return {};
    const std::size_t n = x.size();
    const std::size_t pad = std::min<std::size_t>(3 * (2 * sos.size() + 1), n - 1);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

    const auto zi = detail::sos_step_state(sos);
    detail::sos_run(sos, ext, zi, ext.front());
    std::reverse(ext.begin(), ext.end());
    detail::sos_run(sos, ext, zi, ext.front());
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

/// Zero-phase Butterworth band-pass; length preserved.
inline AudioClip bandpass(const AudioClip& clip, const BandpassSpec& spec) {
    const SosFilter sos = design_butter_bandpass(spec, clip.sample_rate);
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.source_id = clip.source_id;
    out.samples = sosfiltfilt(sos, clip.samples);
    return out;
}

/// Samples in [floor(t_start*rate), ceil(t_end*rate)).
inline AudioClip trim(const AudioClip& clip, double t_start, double t_end) {
    const double dur = clip.duration();
    constexpr double slack = 1e-9;
    if (!(t_start >= 0.0) || !(t_start < t_end) || t_end > dur + slack)
        throw InvalidArgument("trim: bounds [" + std::to_string(t_start) + ", " + std::to_string(t_end) +
                              ") outside clip of " + std::to_string(dur) + " s");
    const double rate = clip.sample_rate;
    // snap values within rounding noise of an integer sample index
    auto snap = [](double v) {
        const double r = std::round(v);
        return std::abs(v - r) < 1e-6 ? r : v;
    };
    const auto first = static_cast<std::size_t>(std::floor(snap(t_start * rate)));
    const auto last = std::min(clip.samples.size(), static_cast<std::size_t>(std::ceil(snap(t_end * rate))));
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(first),
                       clip.samples.begin() + static_cast<std::ptrdiff_t>(last));
    // accumulate offsets so nested trims stay traceable to the original file
    std::string base = clip.source_id;
    double offset = static_cast<double>(first) / rate;
    if (const auto at = base.rfind('@'); at != std::string::npos && base.back() == 's') {
        try {
            offset += std::stod(base.substr(at + 1, base.size() - at - 2));
            base.resize(at);
        } catch (const std::exception&) {
        }
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "@%.6fs", offset);
    out.source_id = base + buf;
    return out;
}

}  // namespace birdlabel
