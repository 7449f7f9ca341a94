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

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "birdlabel/clustering.hpp"
#include "birdlabel/error.hpp"
#include "birdlabel/evaluation.hpp"
#include "birdlabel/features.hpp"
#include "birdlabel/query_filter.hpp"
#include "birdlabel/segmentation.hpp"

namespace birdlabel {

inline constexpr int kConfigSchemaVersion = 1;

struct IoConfig {
    std::string input_dir = "data";
    std::string output_dir = "out";
    std::string annotations_dir;  // empty: <input_dir>/<species>/<stem>.txt
    bool export_roi_wavs = false;
    int sample_rate = 44100;
    /// When positive, analyse only this many seconds from the first ROI onset.
    double excerpt_s = 0.0;
    std::string signal_token = "signal";
    double truth_iou = 0.5;
};

struct FetchConfig {
    std::vector<std::string> species;
    QueryFilter filter;  // species field is filled per entry of `species`
    std::string endpoint;  // empty: environment, then the public API
    bool download = false;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    SegmentationParams segmentation;
    FeatureParams features;
    ClassifyOptions clustering;
    IoConfig io;
    FetchConfig fetch;
    GridSearchSpace tune;

    void validate() const {
        segmentation.validate();
        if (features.sample_rate <= 0 || features.window_size < 2 || features.hop < 1 || features.n_scales < 1)
            throw InvalidArgument("features: invalid STFT or scale settings");
        if (!(clustering.minpts_fraction > 0.0) || clustering.minpts_fraction > 1.0)
            throw InvalidArgument("clustering: minpts_fraction must be in (0, 1]");
        if (io.sample_rate <= 0) throw InvalidArgument("io: sample_rate must be positive");
        if (io.excerpt_s < 0.0) throw InvalidArgument("io: excerpt_s must be >= 0");
        fetch.filter.validate();
    }
};

namespace detail {

using Json = nlohmann::ordered_json;

/// Binds JSON keys of one section to fields, both directions.
class Section {
public:
    template <class T>
    Section& bind(std::string key, T& ref) {
        keys_.push_back(key);
        readers_.push_back([&ref, key](const Json& v) { read_value(v, ref, key); });
        writers_.push_back([&ref] { return Json(ref); });
        return *this;
    }

    void read(const Json& j, const std::string& name) const {
        if (!j.is_object()) throw FormatError("config: section '" + name + "' must be an object");
        for (const auto& [k, v] : j.items()) {
            const auto it = std::find(keys_.begin(), keys_.end(), k);
            if (it == keys_.end()) throw FormatError("config: unknown key '" + name + "." + k + "'");
            try {
                readers_[static_cast<std::size_t>(it - keys_.begin())](v);
            } catch (const FormatError& e) {
                throw FormatError("config: " + name + "." + e.what());
            }
        }
    }

    [[nodiscard]] Json write() const {
        Json j = Json::object();
        for (std::size_t i = 0; i < keys_.size(); ++i) j[keys_[i]] = writers_[i]();
        return j;
    }

private:
    template <class T>
    static void read_value(const Json& v, T& out, const std::string& key) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw FormatError(key + ": expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw FormatError(key + ": expected an integer");
            if constexpr (std::is_unsigned_v<T>)
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                    throw FormatError(key + ": must be non-negative");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw FormatError(key + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw FormatError(key + ": expected a string");
        } else {
            if (!v.is_array()) throw FormatError(key + ": expected an array");
            for (const auto& e : v)
                if (!e.is_string()) throw FormatError(key + ": expected an array of strings");
        }
        out = v.get<T>();
    }

    std::vector<std::string> keys_;
    std::vector<std::function<void(const Json&)>> readers_;
    std::vector<std::function<Json()>> writers_;
};

struct Sections {
    Section segmentation, features, clustering, io, fetch, tune;
};

inline Sections bind_sections(PipelineConfig& c) {
    Sections s;
    auto& g = c.segmentation;
    s.segmentation.bind("time_factor", g.time_factor)
        .bind("freq_factor", g.freq_factor)
        .bind("t_high_db", g.t_high_db)
        .bind("t_low_db", g.t_low_db)
        .bind("merge_time_gap_s", g.merge_time_gap_s)
        .bind("merge_freq_gap_hz", g.merge_freq_gap_hz)
        .bind("min_duration_s", g.min_duration_s)
        .bind("band_low_hz", g.band.low_hz)
        .bind("band_high_hz", g.band.high_hz)
        .bind("band_order", g.band.order)
        .bind("window_size", g.stft.window_size)
        .bind("hop", g.stft.hop)
        .bind("noise_smoothing_bands", g.noise_smoothing_bands);
    auto& f = c.features;
    s.features.bind("sample_rate", f.sample_rate)
        .bind("window_size", f.window_size)
        .bind("hop", f.hop)
        .bind("band_low_hz", f.band_low_hz)
        .bind("band_high_hz", f.band_high_hz)
        .bind("bandpass_order", f.bandpass_order)
        .bind("n_scales", f.n_scales)
        .bind("base_wavelength", f.base_wavelength);
    auto& k = c.clustering;
    s.clustering.bind("minpts_fraction", k.minpts_fraction)
        .bind("kneedle_sensitivity", k.kneedle_sensitivity)
        .bind("min_rois", k.min_rois);
    auto& io = c.io;
    s.io.bind("input_dir", io.input_dir)
        .bind("output_dir", io.output_dir)
        .bind("annotations_dir", io.annotations_dir)
        .bind("export_roi_wavs", io.export_roi_wavs)
        .bind("sample_rate", io.sample_rate)
        .bind("excerpt_s", io.excerpt_s)
        .bind("signal_token", io.signal_token)
        .bind("truth_iou", io.truth_iou);
    auto& q = c.fetch;
    s.fetch.bind("species", q.species)
        .bind("sound_type", q.filter.sound_type)
        .bind("qualities", q.filter.qualities)
        .bind("min_duration_s", q.filter.min_duration_s)
        .bind("max_duration_s", q.filter.max_duration_s)
        .bind("max_results", q.filter.max_results)
        .bind("sample_size", q.filter.sample_size)
        .bind("endpoint", q.endpoint)
        .bind("download", q.download);
    auto& t = c.tune;
    s.tune.bind("time_min", t.time_min)
        .bind("time_max", t.time_max)
        .bind("time_step", t.time_step)
        .bind("freq_min", t.freq_min)
        .bind("freq_max", t.freq_max)
        .bind("freq_step", t.freq_step)
        .bind("high_min", t.high_min)
        .bind("high_max", t.high_max)
        .bind("high_step", t.high_step)
        .bind("low_min", t.low_min)
        .bind("low_max", t.low_max)
        .bind("low_step", t.low_step);
    return s;
}

}  // namespace detail

/// Parses a config document. Missing keys keep their defaults; unknown keys
/// and a missing or different schema_version are errors.
inline PipelineConfig parse_config(const std::string& text) {
    detail::Json j;
    try {
        j = detail::Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw FormatError("config: top level must be an object");
    if (!j.contains("schema_version")) throw FormatError("config: schema_version is required");
    if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kConfigSchemaVersion)
        throw FormatError("config: unsupported schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");

    PipelineConfig c;
    const auto s = detail::bind_sections(c);
    for (const auto& [k, v] : j.items()) {
        if (k == "schema_version") continue;
        if (k == "seed") {
            if (!v.is_number_unsigned()) throw FormatError("config: seed must be a non-negative integer");
            c.seed = v.get<std::uint64_t>();
        } else if (k == "segmentation") s.segmentation.read(v, k);
        else if (k == "features") s.features.read(v, k);
        else if (k == "clustering") s.clustering.read(v, k);
        else if (k == "io") s.io.read(v, k);
        else if (k == "fetch") s.fetch.read(v, k);
        else if (k == "tune") s.tune.read(v, k);
        else throw FormatError("config: unknown key '" + k + "'");
    }
    c.fetch.filter.random_seed = c.seed;
    c.validate();
    return c;
}

inline std::string config_to_string(const PipelineConfig& config) {
    PipelineConfig c = config;
    const auto s = detail::bind_sections(c);
    detail::Json j;
    j["schema_version"] = kConfigSchemaVersion;
    j["seed"] = c.seed;
    j["segmentation"] = s.segmentation.write();
    j["features"] = s.features.write();
    j["clustering"] = s.clustering.write();
    j["io"] = s.io.write();
    j["fetch"] = s.fetch.write();
    j["tune"] = s.tune.write();
    return j.dump(2) + "\n";
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void save_config(const std::filesystem::path& path, const PipelineConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write config " + path.string());
    out << config_to_string(config);
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace birdlabel
