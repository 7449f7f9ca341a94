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

#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

// Eigen before httplib: <resolv.h> defines a _res macro that clashes with Eigen.
#include "support.hpp"
#include "birdlabel/fetch.hpp"

using namespace birdlabel;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = BIRDLABEL_FIXTURES;

std::string fixture(const std::string& name) {
    std::ifstream in(kFixtures / name, std::ios::binary);
    if (!in) throw std::runtime_error("missing fixture " + name);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<RecordingRecord> all_fixture_records() {
    auto a = parse_recordings_page(fixture("xc_page1.json"));
    const auto b = parse_recordings_page(fixture("xc_page2.json"));
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

QueryFilter blackbird(std::uint64_t seed = 42) {
    QueryFilter f;
    f.species = "Turdus merula";
    f.random_seed = seed;
    return f;
}

std::vector<std::string> ids(const std::vector<RecordingRecord>& recs) {
    std::vector<std::string> out;
    for (const auto& r : recs) out.push_back(r.id);
    return out;
}

// Replays the recorded pages on 127.0.0.1. The first `fail_first` requests get a 503.
class FixtureServer {
public:
    explicit FixtureServer(int fail_first = 0) : fail_first_(fail_first) {
        server_.Get("/api/2/recordings", [this](const httplib::Request& req, httplib::Response& res) {
            queries_.push_back(req.get_param_value("query"));
            if (requests_++ < fail_first_) {
                res.status = 503;
                return;
            }
            const std::string page = req.has_param("page") ? req.get_param_value("page") : "1";
            if (page != "1" && page != "2") {
                res.status = 404;
                return;
            }
            res.set_content(fixture("xc_page" + page + ".json"), "application/json");
        });
        server_.Get("/broken", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("{\"recordings\": 3}", "application/json");
        });
        server_.Get(R"(/audio/(\d+))", [](const httplib::Request& req, httplib::Response& res) {
            res.set_content("audio-" + std::string(req.matches[1]), "audio/mpeg");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FixtureServer() {
        server_.stop();
        thread_.join();
    }

    [[nodiscard]] std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
    [[nodiscard]] int requests() const { return requests_; }
    [[nodiscard]] const std::vector<std::string>& queries() const { return queries_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    int fail_first_;
    std::atomic<int> requests_{0};
    std::vector<std::string> queries_;
};

const RetryPolicy kFastRetry{4, std::chrono::milliseconds(5)};

}  // namespace

TEST(ParseLength, MinutesAndHours) {
    EXPECT_EQ(parse_length("0:20"), 20.0);
    EXPECT_EQ(parse_length("3:00"), 180.0);
    EXPECT_EQ(parse_length("1:02:03"), 3723.0);
    EXPECT_EQ(parse_length("45"), 45.0);
    EXPECT_THROW(parse_length(""), FormatError);
    EXPECT_THROW(parse_length("1:x"), FormatError);
    EXPECT_THROW(parse_length("1:2:3:4"), FormatError);
}

TEST(ParsePage, FixtureFields) {
    int pages = 0;
    const auto recs = parse_recordings_page(fixture("xc_page1.json"), &pages);
    EXPECT_EQ(pages, 2);
    ASSERT_EQ(recs.size(), 100u);
    EXPECT_EQ(recs[0].id, "500000");
    EXPECT_EQ(recs[0].scientific_name(), "Turdus merula");
    EXPECT_EQ(recs[0].length_s, 20.0);  // boundary record
    EXPECT_EQ(recs[0].file_url, "https://xeno-canto.org/500000/download");
}

TEST(ParsePage, MalformedResponses) {
    EXPECT_THROW(parse_recordings_page("not json"), FormatError);
    EXPECT_THROW(parse_recordings_page("{\"recordings\": 3}"), FormatError);
    EXPECT_THROW(parse_recordings_page("{\"recordings\": [{\"gen\": \"A\"}]}"), FormatError);
    // unreadable length: record dropped, page kept
    const auto recs = parse_recordings_page(R"({"recordings": [{"id": 7, "length": "?"}, {"id": 8, "length": "0:30"}]})");
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].id, "8");
}

TEST(Filter, SoundTypeTags) {
    EXPECT_TRUE(has_sound_type("song", "song"));
    EXPECT_TRUE(has_sound_type("call, Song", "song"));
    EXPECT_FALSE(has_sound_type("flight call, songbird", "song"));
    EXPECT_FALSE(has_sound_type("call", "song"));
    EXPECT_FALSE(has_sound_type("", "song"));
}

TEST(Filter, FixtureHas120Passing) {
    const auto recs = all_fixture_records();
    ASSERT_EQ(recs.size(), 150u);
    const auto f = blackbird();
    EXPECT_EQ(std::count_if(recs.begin(), recs.end(), [&](const auto& r) { return passes(r, f); }), 120);
}

TEST(Filter, DurationBoundsInclusive) {
    RecordingRecord r{"1", "G", "s", "song", "A", 20.0, ""};
    const auto f = blackbird();
    EXPECT_TRUE(passes(r, f));
    r.length_s = 180.0;
    EXPECT_TRUE(passes(r, f));
    r.length_s = 19.9;
    EXPECT_FALSE(passes(r, f));
    r.length_s = 180.1;
    EXPECT_FALSE(passes(r, f));
    r.length_s = 60.0;
    r.quality = "C";
    EXPECT_FALSE(passes(r, f));
}

TEST(SeededSample, PartialPermutation) {
    std::vector<int> items(50);
    std::iota(items.begin(), items.end(), 0);
    const auto a = seeded_sample(items, 10, 3);
    EXPECT_EQ(a, seeded_sample(items, 10, 3));
    EXPECT_NE(a, seeded_sample(items, 10, 4));
    EXPECT_EQ(std::set<int>(a.begin(), a.end()).size(), 10u);
    EXPECT_EQ(seeded_sample(items, 80, 3).size(), 50u);
    // k = n is a permutation
    auto all = seeded_sample(items, 50, 9);
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, items);
}

TEST(SeededSample, RoughlyUniform) {
    std::vector<int> items(10);
    std::iota(items.begin(), items.end(), 0);
    std::vector<int> first(10, 0);
    for (std::uint64_t s = 0; s < 5000; ++s) ++first[static_cast<std::size_t>(seeded_sample(items, 3, s)[0])];
    for (int c : first) EXPECT_NEAR(c, 500, 100);
}

TEST(SelectRecordings, TwentyFromFixtureReproducible) {
    const auto recs = all_fixture_records();
    const auto f = blackbird(42);
    const auto a = select_recordings(recs, f);
    ASSERT_EQ(a.size(), 20u);
    EXPECT_EQ(ids(a), ids(select_recordings(recs, f)));
    EXPECT_NE(ids(a), ids(select_recordings(recs, blackbird(43))));
    std::set<std::string> seen;
    for (const auto& r : a) {
        EXPECT_TRUE(passes(r, f));
        EXPECT_NE(r.quality, "C");
        EXPECT_TRUE(seen.insert(r.id).second);
    }
}

TEST(SelectRecordings, FrozenSampleForSeed42) {
    // regression value: mt19937_64(42), partial Fisher-Yates over the first 100 passing records
    const std::vector<std::string> expected = {"500008", "500096", "500125", "500019", "500067", "500021", "500059",
                                               "500005", "500017", "500039", "500041", "500111", "500104", "500095",
                                               "500120", "500056", "500101", "500036", "500103", "500075"};
    EXPECT_EQ(ids(select_recordings(all_fixture_records(), blackbird(42))), expected);
}

TEST(SelectRecordings, DrawsOnlyFromFirstMaxResults) {
    const auto recs = all_fixture_records();
    auto f = blackbird(1);
    f.max_results = 30;
    f.sample_size = 30;
    std::vector<std::string> first30;
    for (const auto& r : recs)
        if (first30.size() < 30 && passes(r, f)) first30.push_back(r.id);
    auto got = ids(select_recordings(recs, f));
    std::sort(got.begin(), got.end());
    std::sort(first30.begin(), first30.end());
    EXPECT_EQ(got, first30);
}

TEST(SelectRecordings, ShortfallReturnsAllWithWarning) {
    const auto recs = parse_recordings_page(fixture("xc_few.json"));
    testing_support::CaptureLog log;
    const auto got = select_recordings(recs, blackbird());
    EXPECT_EQ(got.size(), 5u);
    EXPECT_NE(log.text().find("only 5 recordings"), std::string::npos);
}

TEST(SelectRecordings, QualityFilterHonoured) {
    const auto recs = all_fixture_records();
    auto f = blackbird();
    f.qualities = {"C"};
    f.max_results = 100;
    f.sample_size = 5;
    for (const auto& r : select_recordings(recs, f)) EXPECT_EQ(r.quality, "C");
    f.qualities = {"A"};
    for (const auto& r : select_recordings(recs, f)) EXPECT_EQ(r.quality, "A");
}

TEST(FetchMetadata, FileEndpoint) {
    const auto url = "file://" + (kFixtures / "xc_few.json").string();
    const auto got = fetch_metadata(blackbird(), url);
    EXPECT_EQ(got.size(), 5u);
}

TEST(FetchMetadata, LocalServerPagesAndMatchesOffline) {
    FixtureServer server;
    const auto f = blackbird(42);
    const auto online = fetch_metadata(f, server.base() + "/api/2/recordings", http_get, kFastRetry);
    EXPECT_EQ(ids(online), ids(select_recordings(all_fixture_records(), f)));
    EXPECT_EQ(server.requests(), 2);
    EXPECT_EQ(server.queries().front(), "Turdus merula");
}

TEST(FetchMetadata, StopsPagingAtMaxResults) {
    FixtureServer server;
    auto f = blackbird();
    f.max_results = 50;
    f.sample_size = 10;
    fetch_metadata(f, server.base() + "/api/2/recordings", http_get, kFastRetry);
    EXPECT_EQ(server.requests(), 1);
}

TEST(FetchMetadata, RetriesServerErrors) {
    FixtureServer server(2);
    const auto got = fetch_metadata(blackbird(), server.base() + "/api/2/recordings", http_get, kFastRetry);
    EXPECT_EQ(got.size(), 20u);
    EXPECT_EQ(server.requests(), 4);
}

TEST(FetchMetadata, GivesUpAfterRetries) {
    FixtureServer server(100);
    EXPECT_THROW(fetch_metadata(blackbird(), server.base() + "/api/2/recordings", http_get, kFastRetry), IoError);
    EXPECT_EQ(server.requests(), 4);
}

TEST(FetchMetadata, ClientErrorsAreNotRetried) {
    int calls = 0;
    const HttpGet get = [&](const std::string&) {
        ++calls;
        return HttpResponse{404, ""};
    };
    EXPECT_THROW(get_with_retry(get, "http://x/y", kFastRetry), IoError);
    EXPECT_EQ(calls, 1);
}

TEST(FetchMetadata, UnreachableHostFails) {
    // port 1 on loopback refuses connections
    EXPECT_THROW(fetch_metadata(blackbird(), "http://127.0.0.1:1/api", http_get, RetryPolicy{2, std::chrono::milliseconds(1)}),
                 IoError);
}

TEST(FetchMetadata, MalformedResponse) {
    FixtureServer server;
    EXPECT_THROW(fetch_metadata(blackbird(), server.base() + "/broken", http_get, kFastRetry), FormatError);
}

TEST(Endpoint, ResolutionOrder) {
    ::unsetenv(kApiBaseEnv);
    EXPECT_EQ(resolve_endpoint(), kDefaultApiBase);
    ::setenv(kApiBaseEnv, "http://127.0.0.1:9/api", 1);
    EXPECT_EQ(resolve_endpoint(), "http://127.0.0.1:9/api");
    EXPECT_EQ(resolve_endpoint("file:///tmp/x.json"), "file:///tmp/x.json");
    ::unsetenv(kApiBaseEnv);
}

TEST(Endpoint, PageUrlEncodesQuery) {
    ::unsetenv(kApiKeyEnv);
    EXPECT_EQ(page_url("http://h/api", "Turdus merula", 2), "http://h/api?query=Turdus%20merula&page=2");
    EXPECT_EQ(page_url("http://h/api?x=1", "A b", 1), "http://h/api?x=1&query=A%20b&page=1");
}

TEST(Download, WritesFilesAndManifest) {
    FixtureServer server;
    std::vector<RecordingRecord> recs{{"11", "G", "s", "song", "A", 30, server.base() + "/audio/11"},
                                      {"12", "G", "s", "song", "B", 40, ""}};
    const auto dir = testing_support::scratch_dir("download");
    testing_support::CaptureLog log;
    const auto paths = download_recordings(recs, dir / "audio", http_get, kFastRetry);
    ASSERT_EQ(paths.size(), 1u);
    std::ifstream in(paths[0]);
    std::string body;
    std::getline(in, body);
    EXPECT_EQ(body, "audio-11");
    EXPECT_NE(log.text().find("no file URL"), std::string::npos);

    auto f = blackbird(42);
    write_fetch_manifest(dir / "fetch_manifest.csv", {{f, recs}});
    std::ifstream m(dir / "fetch_manifest.csv");
    std::string header, row;
    std::getline(m, header);
    std::getline(m, row);
    EXPECT_EQ(header, "species,id,type,quality,length_s,file_url,seed");
    EXPECT_EQ(row, "Turdus merula,11,song,A,30.0," + server.base() + "/audio/11,42");
}
