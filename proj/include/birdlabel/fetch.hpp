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

// Metadata client for Xeno-Canto style recording APIs. Include this header
// only from targets linked against birdlabel_fetch (cpp-httplib + OpenSSL).

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "birdlabel/csv.hpp"
#include "birdlabel/error.hpp"
#include "birdlabel/query_filter.hpp"

namespace birdlabel {

inline constexpr const char* kDefaultApiBase = "https://xeno-canto.org/api/2/recordings";
inline constexpr const char* kApiBaseEnv = "BIRDLABEL_XC_API";
inline constexpr const char* kApiKeyEnv = "BIRDLABEL_XC_KEY";

struct RecordingRecord {
    std::string id;
    std::string genus;
    std::string epithet;
    std::string type;
    std::string quality;
    double length_s = 0.0;
    std::string file_url;

    [[nodiscard]] std::string scientific_name() const { return genus + " " + epithet; }
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

using HttpGet = std::function<HttpResponse(const std::string& url)>;

struct RetryPolicy {
    int attempts = 4;
    std::chrono::milliseconds base_delay{500};
};

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string trim_ws(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline std::string percent_encode(const std::string& s) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

inline std::string json_string(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    return it->dump();
}

/// Splits "scheme://host[:port]" from "/path?query".
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("not an absolute URL: " + url);
    const auto path = url.find('/', scheme_end + 3);
    if (path == std::string::npos) return {url, "/"};
    return {url.substr(0, path), url.substr(path)};
}

inline std::string read_file_url(const std::string& url) {
    const std::filesystem::path p = url.substr(std::string("file://").size());
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// "m:ss" or "h:mm:ss" to seconds.
inline double parse_length(const std::string& text) {
    double total = 0.0;
    int parts = 0;
    std::size_t start = 0;
    for (;;) {
        const auto colon = text.find(':', start);
        const std::string piece = detail::trim_ws(text.substr(start, colon - start));
        if (piece.empty() || piece.find_first_not_of("0123456789.") != std::string::npos)
            throw FormatError("bad recording length '" + text + "'");
        total = total * 60.0 + std::stod(piece);
        ++parts;
        if (colon == std::string::npos) break;
        start = colon + 1;
    }
    if (parts > 3) throw FormatError("bad recording length '" + text + "'");
    return total;
}

/// Parses one page. Records whose length cannot be read are dropped.
inline std::vector<RecordingRecord> parse_recordings_page(const std::string& body, int* num_pages = nullptr) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("malformed API response: ") + e.what());
    }
    if (!j.is_object() || !j.contains("recordings") || !j["recordings"].is_array())
        throw FormatError("malformed API response: no recordings array");
    if (num_pages) {
        *num_pages = 1;
        if (const auto it = j.find("numPages"); it != j.end()) {
            if (it->is_number_integer()) *num_pages = it->get<int>();
            else if (it->is_string()) *num_pages = std::stoi(it->get<std::string>());
        }
    }
    std::vector<RecordingRecord> out;
    for (const auto& r : j["recordings"]) {
        if (!r.is_object()) throw FormatError("malformed API response: recording is not an object");
        RecordingRecord rec;
        rec.id = detail::json_string(r, "id");
        rec.genus = detail::json_string(r, "gen");
        rec.epithet = detail::json_string(r, "sp");
        rec.type = detail::json_string(r, "type");
        rec.quality = detail::json_string(r, "q");
        rec.file_url = detail::json_string(r, "file");
        if (rec.id.empty()) throw FormatError("malformed API response: recording without id");
        try {
            rec.length_s = parse_length(detail::json_string(r, "length"));
        } catch (const FormatError& e) {
            log::write(log::Level::debug, "recording " + rec.id + ": " + e.what());
            continue;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

/// True when `type` lists the wanted sound type among its comma-separated tags.
inline bool has_sound_type(const std::string& type, const std::string& wanted) {
    const std::string w = detail::lower(detail::trim_ws(wanted));
    std::size_t start = 0;
    for (;;) {
        const auto comma = type.find(',', start);
        if (detail::lower(detail::trim_ws(type.substr(start, comma - start))) == w) return true;
        if (comma == std::string::npos) return false;
        start = comma + 1;
    }
}

inline bool passes(const RecordingRecord& r, const QueryFilter& f) {
    if (!has_sound_type(r.type, f.sound_type)) return false;
    if (std::find(f.qualities.begin(), f.qualities.end(), r.quality) == f.qualities.end()) return false;
    return r.length_s >= f.min_duration_s && r.length_s <= f.max_duration_s;
}

/// Uniform integer in [0, bound) by rejection; stable across standard libraries.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
    if (bound == 0) throw InvalidArgument("bounded_draw: zero bound");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        const std::uint64_t x = rng();
        if (x < limit) return x % bound;
    }
}

/// Seeded partial Fisher-Yates: the first k elements of a random permutation.
template <class T>
std::vector<T> seeded_sample(std::vector<T> items, std::size_t k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    k = std::min(k, items.size());
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(bounded_draw(rng, items.size() - i));
        std::swap(items[i], items[j]);
    }
    items.resize(k);
    return items;
}

/// Filters records (keeping the first max_results that pass) and draws the sample.
inline std::vector<RecordingRecord> select_recordings(const std::vector<RecordingRecord>& records,
                                                      const QueryFilter& filter) {
    filter.validate();
    std::vector<RecordingRecord> kept;
    for (const auto& r : records) {
        if (kept.size() >= filter.max_results) break;
        if (passes(r, filter)) kept.push_back(r);
    }
    if (kept.size() < filter.sample_size)
        log::warn("fetch " + filter.species + ": only " + std::to_string(kept.size()) +
                  " recordings pass the filters, wanted " + std::to_string(filter.sample_size));
    return seeded_sample(std::move(kept), filter.sample_size, filter.random_seed);
}

/// Plain GET through cpp-httplib; file:// URLs are read from disk.
inline HttpResponse http_get(const std::string& url) {
    if (url.rfind("file://", 0) == 0) return {200, detail::read_file_url(url)};
    const auto [origin, path] = detail::split_url(url);
    httplib::Client cli(origin);
    cli.set_follow_location(true);
    cli.set_connection_timeout(10);
    cli.set_read_timeout(60);
    auto res = cli.Get(path);
    if (!res) throw IoError("GET " + url + " failed: " + httplib::to_string(res.error()));
    return {res->status, std::move(res->body)};
}

/// Retries transport errors, 429 and 5xx with exponential backoff.
inline std::string get_with_retry(const HttpGet& get, const std::string& url, const RetryPolicy& policy = {}) {
    std::string last;
    for (int attempt = 0; attempt < std::max(1, policy.attempts); ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(policy.base_delay * (1 << (attempt - 1)));
        try {
            auto res = get(url);
            if (res.status >= 200 && res.status < 300) return std::move(res.body);
            last = "HTTP " + std::to_string(res.status);
            if (res.status != 429 && res.status < 500) break;
        } catch (const IoError& e) {
            last = e.what();
        }
        log::warn("GET " + url + ": " + last + " (attempt " + std::to_string(attempt + 1) + ")");
    }
    throw IoError("GET " + url + " failed: " + last);
}

/// Base URL: explicit argument, else the environment, else the public API.
inline std::string resolve_endpoint(const std::string& configured = {}) {
    if (!configured.empty()) return configured;
    if (const char* env = std::getenv(kApiBaseEnv); env && *env) return env;
    return kDefaultApiBase;
}

inline std::string page_url(const std::string& endpoint, const std::string& species, int page) {
    if (endpoint.rfind("file://", 0) == 0) return endpoint;
    std::string url = endpoint + (endpoint.find('?') == std::string::npos ? "?" : "&");
    url += "query=" + detail::percent_encode(species) + "&page=" + std::to_string(page);
    if (const char* key = std::getenv(kApiKeyEnv); key && *key) url += "&key=" + detail::percent_encode(key);
    return url;
}

/// Pages through the API until max_results records pass the filter, then samples.
inline std::vector<RecordingRecord> fetch_metadata(const QueryFilter& filter, const std::string& endpoint,
                                                   const HttpGet& get = http_get, const RetryPolicy& retry = {}) {
    filter.validate();
    if (filter.species.empty()) throw InvalidArgument("fetch: species is empty");
    std::vector<RecordingRecord> all;
    std::size_t passing = 0;
    int pages = 1;
    for (int page = 1; page <= pages && passing < filter.max_results; ++page) {
        const auto body = get_with_retry(get, page_url(endpoint, filter.species, page), retry);
        int n_pages = 1;
        auto recs = parse_recordings_page(body, &n_pages);
        if (endpoint.rfind("file://", 0) != 0) pages = n_pages;
        for (auto& r : recs) {
            if (passes(r, filter)) ++passing;
            all.push_back(std::move(r));
        }
    }
    return select_recordings(all, filter);
}

/// Downloads each record's audio to dir/<id>.<ext>; returns the written paths.
inline std::vector<std::filesystem::path> download_recordings(const std::vector<RecordingRecord>& records,
                                                              const std::filesystem::path& dir,
                                                              const HttpGet& get = http_get,
                                                              const RetryPolicy& retry = {},
                                                              const std::string& extension = ".mp3") {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> out;
    for (const auto& r : records) {
        if (r.file_url.empty()) {
            log::warn("recording " + r.id + " has no file URL");
            continue;
        }
        std::string url = r.file_url;
        if (url.rfind("//", 0) == 0) url = "https:" + url;
        const auto path = dir / (r.id + extension);
        const auto body = get_with_retry(get, url, retry);
        std::ofstream f(path, std::ios::binary);
        f.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!f) throw IoError("cannot write " + path.string());
        out.push_back(path);
    }
    return out;
}

/// species,id,type,quality,length_s,file_url,seed
inline void write_fetch_manifest(const std::filesystem::path& path,
                                 const std::vector<std::pair<QueryFilter, std::vector<RecordingRecord>>>& picks) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [filter, recs] : picks)
        for (const auto& r : recs)
            rows.push_back({filter.species, r.id, r.type, r.quality, csv::fixed(r.length_s, 1), r.file_url,
                            std::to_string(filter.random_seed)});
    csv::write_file(path.string(), {"species", "id", "type", "quality", "length_s", "file_url", "seed"}, rows);
}

}  // namespace birdlabel
