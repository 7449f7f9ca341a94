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


#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "birdlabel/audio_io.hpp"
#include "support.hpp"

using namespace birdlabel;
using namespace testing_support;

namespace {

// Canonical header + raw little-endian payload, built independently of encode_wav.
std::vector<unsigned char> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                     std::uint16_t bits, const std::vector<unsigned char>& payload) {
    std::vector<unsigned char> b;
    auto put32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
    };
    auto put16 = [&](std::uint16_t v) {
        b.push_back(static_cast<unsigned char>(v));
        b.push_back(static_cast<unsigned char>(v >> 8));
    };
    auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
    tag("RIFF");
    put32(static_cast<std::uint32_t>(36 + payload.size()));
    tag("WAVE");
    tag("fmt ");
    put32(16);
    put16(format);
    put16(channels);
    put32(rate);
    put32(rate * channels * bits / 8);
    put16(static_cast<std::uint16_t>(channels * bits / 8));
    put16(bits);
    tag("data");
    put32(static_cast<std::uint32_t>(payload.size()));
    b.insert(b.end(), payload.begin(), payload.end());
    return b;
}

// Analog Butterworth band-pass magnitude at the pre-warped frequency.
double butterworth_bandpass_gain(double hz, double lo, double hi, int order, int fs) {
    auto warp = [&](double f) { return 2.0 * fs * std::tan(std::numbers::pi * f / fs); };
    const double w = warp(hz), wl = warp(lo), wh = warp(hi);
    const double w0sq = wl * wh, bw = wh - wl;
    const double q = (w * w - w0sq) / (w * bw);
    return 1.0 / std::sqrt(1.0 + std::pow(q * q, order));
}

double impulse_response_gain(const SosFilter& sos, double hz, int fs, std::size_t n = 1 << 18) {
    std::vector<double> x(n, 0.0);
    x[0] = 1.0;
    detail::sos_run(sos, x, std::vector<std::array<double, 2>>(sos.size(), {0.0, 0.0}), 0.0);
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * hz * i / fs);
    return std::abs(acc);
}

}  // namespace

TEST(Wav, Pcm16RoundTrip) {
    const auto c = tone(440.0, 0.1, 8000, 0.5);
    const auto back = decode_wav(encode_wav({c.samples}, 8000, WavEncoding::pcm16), "x");
    ASSERT_EQ(back.size(), c.size());
    EXPECT_EQ(back.sample_rate, 8000);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(back.samples[i], c.samples[i], 0.5 / 32768 + 1e-12);
}

TEST(Wav, Float32RoundTrip) {
    const auto c = tone(440.0, 0.1, 8000, 0.5);
    const auto back = decode_wav(encode_wav({c.samples}, 8000, WavEncoding::float32), "x");
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(back.samples[i], c.samples[i], 1e-7);
}

TEST(Wav, StereoIsAveraged) {
    const std::vector<double> l(100, 0.25), r(100, -0.75);
    const auto c = decode_wav(encode_wav({l, r}, 16000, WavEncoding::float32), "x");
    ASSERT_EQ(c.size(), 100u);
    for (double v : c.samples) EXPECT_DOUBLE_EQ(v, -0.25);
}

TEST(Wav, Pcm24Decodes) {
    // 0x400000 = +0.5, 0xC00000 = -0.5 full scale
    const std::vector<unsigned char> payload{0x00, 0x00, 0x40, 0x00, 0x00, 0xC0, 0x00, 0x00, 0x00};
    const auto c = decode_wav(wav_bytes(1, 1, 22050, 24, payload), "x");
    ASSERT_EQ(c.size(), 3u);
    EXPECT_DOUBLE_EQ(c.samples[0], 0.5);
    EXPECT_DOUBLE_EQ(c.samples[1], -0.5);
    EXPECT_DOUBLE_EQ(c.samples[2], 0.0);
}

TEST(Wav, Pcm32Decodes) {
    const std::vector<unsigned char> payload{0x00, 0x00, 0x00, 0x40, 0x00, 0x00, 0x00, 0xC0};
    const auto c = decode_wav(wav_bytes(1, 1, 22050, 32, payload), "x");
    ASSERT_EQ(c.size(), 2u);
    EXPECT_DOUBLE_EQ(c.samples[0], 0.5);
    EXPECT_DOUBLE_EQ(c.samples[1], -0.5);
}

TEST(Wav, RejectsMp3WithConversionHint) {
    std::vector<unsigned char> mp3{'I', 'D', '3', 4, 0, 0, 0, 0, 0, 0};
    mp3.resize(64, 0);
    try {
        decode_wav(mp3, "song.mp3");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("WAV"), std::string::npos);
    }
}

TEST(Wav, RejectsZeroLength) {
    EXPECT_THROW(decode_wav(wav_bytes(1, 1, 8000, 16, {}), "x"), FormatError);
}

TEST(Wav, RejectsGarbage) {
    EXPECT_THROW(decode_wav(std::vector<unsigned char>(100, 7), "x"), FormatError);
}

TEST(LoadAudio, MissingFile) {
    EXPECT_THROW(load_audio("/nonexistent/file.wav", 44100), IoError);
}

TEST(LoadAudio, StereoAt48kBecomesMonoAt44k) {
    const auto dir = scratch_dir("load48k");
    const auto l = tone(440.0, 2.0, 48000, 0.3), r = tone(660.0, 2.0, 48000, 0.3);
    std::ofstream f(dir / "s.wav", std::ios::binary);
    const auto bytes = encode_wav({l.samples, r.samples}, 48000, WavEncoding::pcm16);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    f.close();
    const auto c = load_audio(dir / "s.wav", 44100);
    EXPECT_EQ(c.size(), 88200u);
    EXPECT_EQ(c.sample_rate, 44100);
}

TEST(Resample, IdentityIsExact) {
    const auto c = tone(440.0, 1.0, 44100);
    EXPECT_EQ(resample(c, 44100).samples, c.samples);
}

TEST(Resample, UpsamplingKeepsTonePeak) {
    const auto c = tone(440.0, 1.0, 22050);
    const auto r = resample(c, 44100);
    ASSERT_EQ(r.size(), 44100u);
    EXPECT_NEAR(peak_frequency(r.samples, 44100), 440.0, 1.0);
}

TEST(Resample, DurationPreservedWithinOneSample) {
    for (const auto& [in, out] : std::vector<std::pair<int, int>>{{48000, 44100}, {44100, 24000}, {16000, 44100},
                                                                  {22050, 24000}}) {
        const auto c = white_noise(1.37, in, 0.1, 3);
        const auto r = resample(c, out);
        EXPECT_LE(std::abs(r.duration() - c.duration()), 1.0 / out) << in << " -> " << out;
    }
}

TEST(Resample, StopBandAtLeast60dB) {
    // 15 kHz lies far above the 11.025 kHz output Nyquist
    const auto c = tone(15000.0, 1.0, 44100, 0.5);
    const auto r = resample(c, 22050);
    const std::vector<double> mid(r.samples.begin() + 2000, r.samples.end() - 2000);
    EXPECT_LT(rms(mid) / rms(c.samples), 1e-3);
}

TEST(Resample, PassBandPreservesAmplitude) {
    const auto c = tone(3000.0, 1.0, 44100, 0.5);
    const auto r = resample(c, 24000);
    const std::vector<double> mid(r.samples.begin() + 2000, r.samples.end() - 2000);
    EXPECT_NEAR(rms(mid), 0.5 / std::sqrt(2.0), 0.005);
}

TEST(Bandpass, MatchesAnalogPrototype) {
    const auto sos = design_butter_bandpass({100.0, 18000.0, 15}, 44100);
    for (double f : {50.0, 80.0, 100.0, 150.0, 1000.0, 10000.0, 18000.0, 19000.0}) {
        const double want = butterworth_bandpass_gain(f, 100.0, 18000.0, 15, 44100);
        EXPECT_NEAR(sos_gain(sos, f, 44100), want, 1e-6 + 1e-6 * want) << f;
    }
}

TEST(Bandpass, RealisedResponseMatchesDesign) {
    // guards against cascades whose intermediate gains lose precision
    for (const BandpassSpec spec : {BandpassSpec{100.0, 18000.0, 15}, BandpassSpec{2000.0, 2300.0, 15},
                                    BandpassSpec{250.0, 11000.0, 15}}) {
        const int fs = spec.high_hz > 12000 ? 44100 : 24000;
        const auto sos = design_butter_bandpass(spec, fs);
        for (double f : {spec.low_hz * 0.5, spec.low_hz, std::sqrt(spec.low_hz * spec.high_hz), spec.high_hz}) {
            const double want = butterworth_bandpass_gain(f, spec.low_hz, spec.high_hz, spec.order, fs);
            EXPECT_NEAR(impulse_response_gain(sos, f, fs), want, 1e-4 + 1e-4 * want) << spec.low_hz << " " << f;
        }
    }
}

TEST(Bandpass, LowFrequencyAttenuatedOnWhiteNoise) {
    const auto c = white_noise(10.0, 44100, 0.1, 11);
    const auto y = bandpass(c, {100.0, 18000.0, 15});
    const double p50 = band_power(y.samples, 44100, 45.0, 55.0);
    const double p1k = band_power(y.samples, 44100, 950.0, 1050.0);
    EXPECT_GE(10.0 * std::log10(p1k / p50), 20.0);
}

TEST(Bandpass, PassBandToneKeepsRms) {
    const auto c = tone(1000.0, 1.0, 44100, 0.5);
    const auto y = bandpass(c, {100.0, 18000.0, 15});
    EXPECT_NEAR(rms(y.samples) / rms(c.samples), 1.0, 0.01);
    EXPECT_EQ(y.size(), c.size());
}

TEST(Bandpass, KillsDc) {
    AudioClip c{std::vector<double>(44100, 0.5), 44100, "dc"};
    const auto y = bandpass(c, {100.0, 18000.0, 15});
    EXPECT_LT(rms(y.samples), 0.01 * rms(c.samples));
}

TEST(Bandpass, IsLinear) {
    const auto c = white_noise(0.5, 44100, 0.1, 5);
    const auto y = bandpass(c, {100.0, 18000.0, 15});
    for (double a : {2.0, 0.5, -3.0}) {
        AudioClip s = c;
        for (auto& v : s.samples) v *= a;
        const auto ys = bandpass(s, {100.0, 18000.0, 15});
        for (std::size_t i = 0; i < y.size(); ++i)
            EXPECT_NEAR(ys.samples[i], a * y.samples[i], 1e-6 * std::abs(a) * (std::abs(y.samples[i]) + 1e-3));
    }
}

TEST(Bandpass, ZeroPhase) {
    // a symmetric pulse stays symmetric about its centre
    AudioClip c{std::vector<double>(4001, 0.0), 44100, "p"};
    c.samples[2000] = 1.0;
    const auto y = bandpass(c, {500.0, 5000.0, 4});
    for (int k = 1; k < 500; ++k) EXPECT_NEAR(y.samples[2000 + k], y.samples[2000 - k], 1e-9);
}

TEST(Bandpass, RejectsBadSpecs) {
    const auto c = tone(1000.0, 0.1, 44100);
    EXPECT_THROW(bandpass(c, {100.0, 22050.0, 15}), InvalidArgument);
    EXPECT_THROW(bandpass(c, {500.0, 400.0, 15}), InvalidArgument);
    EXPECT_THROW(bandpass(c, {0.0, 400.0, 15}), InvalidArgument);
    EXPECT_THROW(bandpass(c, {100.0, 400.0, 0}), InvalidArgument);
}

TEST(Trim, WholeClipIsIdentity) {
    const auto c = white_noise(20.0, 8000, 0.1, 1);
    EXPECT_EQ(trim(c, 0.0, 20.0).samples, c.samples);
}

TEST(Trim, OneSecond) {
    const auto c = white_noise(3.0, 44100, 0.1, 1);
    const auto t = trim(c, 1.0, 2.0);
    ASSERT_EQ(t.size(), 44100u);
    EXPECT_EQ(t.samples.front(), c.samples[44100]);
}

TEST(Trim, ComposesWithNestedBounds) {
    const auto c = white_noise(5.0, 44100, 0.1, 2);
    const auto twice = trim(trim(c, 1.0, 4.0), 0.5, 2.0);
    const auto once = trim(c, 1.5, 3.0);
    EXPECT_EQ(twice.samples, once.samples);
    EXPECT_EQ(twice.source_id, once.source_id);
}

TEST(Trim, RecordsOffset) {
    AudioClip c = white_noise(3.0, 1000, 0.1, 2);
    c.source_id = "a.wav";
    EXPECT_EQ(trim(c, 1.25, 2.0).source_id, "a.wav@1.250000s");
}

TEST(Trim, RejectsBadBounds) {
    const auto c = white_noise(1.0, 1000, 0.1, 2);
    EXPECT_THROW(trim(c, 0.5, 0.5), InvalidArgument);
    EXPECT_THROW(trim(c, 0.6, 0.5), InvalidArgument);
    EXPECT_THROW(trim(c, -0.1, 0.5), InvalidArgument);
    EXPECT_THROW(trim(c, 0.1, 1.5), InvalidArgument);
}
