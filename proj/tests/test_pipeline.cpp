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

#include <fstream>
#include <set>
#include <sstream>

#include "birdlabel/pipeline.hpp"
#include "birdlabel/synthetic.hpp"
#include "support.hpp"

using namespace birdlabel;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) rows.push_back(csv::split(line));
    return rows;
}

PipelineConfig synthetic_config(const fs::path& input) {
    PipelineConfig c;
    c.segmentation.time_factor = 6;
    c.segmentation.freq_factor = 4;
    c.segmentation.t_high_db = 25.0;
    c.segmentation.t_low_db = 20.0;
    c.io.input_dir = input.string();
    return c;
}

// 3 species x 5 files, written once per test binary.
const fs::path& corpus_dir() {
    static const fs::path dir = [] {
        const auto d = testing_support::scratch_dir("pipeline_corpus");
        synth::CorpusSpec spec;
        spec.n_species = 3;
        spec.files_per_species = 5;
        spec.seed = 5;
        synth::write_corpus(d, synth::make_corpus(spec));
        return d;
    }();
    return dir;
}

}  // namespace

TEST(DiscoverCorpus, SortedWavFilesOnly) {
    const auto dir = testing_support::scratch_dir("discover");
    fs::create_directories(dir / "b");
    fs::create_directories(dir / "a");
    for (const char* f : {"b/2.wav", "b/1.WAV", "a/z.wav", "a/notes.txt"}) std::ofstream(dir / f) << "x";
    std::ofstream(dir / "loose.wav") << "x";
    const auto files = discover_corpus(dir);
    ASSERT_EQ(files.size(), 3u);
    EXPECT_EQ(files[0].source_id, "a/z.wav");
    EXPECT_EQ(files[1].source_id, "b/1.WAV");
    EXPECT_EQ(files[2].species, "b");
    EXPECT_THROW(discover_corpus(dir / "missing"), IoError);
}

TEST(RunLabel, EveryRoiLabelledAndDeterministic) {
    const auto config = synthetic_config(corpus_dir());
    const auto out1 = testing_support::scratch_dir("label_a");
    const auto out2 = testing_support::scratch_dir("label_b");
    std::ostringstream s1, s2;
    ASSERT_EQ(run_label(config, out1, 1, s1), 0);
    ASSERT_EQ(run_label(config, out2, 3, s2), 0);
    for (const char* f : {"manifest.csv", "cluster_report.csv", "features.csv"})
        EXPECT_EQ(slurp(out1 / f), slurp(out2 / f)) << f;
    EXPECT_EQ(s1.str(), s2.str());

    const auto rows = read_rows(out1 / "manifest.csv");
    ASSERT_GT(rows.size(), 10u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"roi_id", "source_id", "species", "t_min_s", "t_max_s", "f_min_hz",
                                                 "f_max_hz", "predicted_label", "cluster_id"}));
    std::set<std::string> ids, species;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        ASSERT_EQ(rows[i].size(), 9u);
        EXPECT_TRUE(rows[i][7] == "signal" || rows[i][7] == "noise");
        EXPECT_TRUE(ids.insert(rows[i][0]).second) << "duplicate " << rows[i][0];
        species.insert(rows[i][2]);
    }
    EXPECT_EQ(species.size(), 3u);
    const auto report = read_rows(out1 / "cluster_report.csv");
    EXPECT_EQ(report.size(), rows.size());
    EXPECT_EQ(report[0], (std::vector<std::string>{"roi_id", "species", "cluster_id", "predicted_label", "eps_used",
                                                   "min_pts_used"}));
    // one summary line per species
    const auto summary = s1.str();
    EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 3);
}

TEST(RunLabel, UnreadableFileIsConfined) {
    const auto dir = testing_support::scratch_dir("label_broken");
    fs::copy(corpus_dir(), dir, fs::copy_options::recursive);
    std::ofstream(dir / "species_01" / "species_01_000.wav") << "not a wav file";
    const auto out = testing_support::scratch_dir("label_broken_out");
    std::ostringstream s;
    EXPECT_EQ(run_label(synthetic_config(dir), out, 1, s), 0);
    const auto rows = read_rows(out / "manifest.csv");
    std::set<std::string> sources;
    for (std::size_t i = 1; i < rows.size(); ++i) sources.insert(rows[i][1]);
    EXPECT_FALSE(sources.count("species_01/species_01_000.wav"));
    EXPECT_TRUE(sources.count("species_01/species_01_001.wav"));
    EXPECT_TRUE(sources.count("species_00/species_00_000.wav"));
}

TEST(RunLabel, FailsOnlyWhenEverySpeciesFails) {
    const auto dir = testing_support::scratch_dir("label_allbad");
    fs::create_directories(dir / "x");
    std::ofstream(dir / "x" / "a.wav") << "junk";
    std::ostringstream s;
    EXPECT_EQ(run_label(synthetic_config(dir), testing_support::scratch_dir("label_allbad_out"), 1, s), 1);
    EXPECT_NE(s.str().find("FAILED"), std::string::npos);
}

TEST(RunLabel, RoiWavExport) {
    auto config = synthetic_config(corpus_dir());
    config.io.export_roi_wavs = true;
    const auto out = testing_support::scratch_dir("label_wavs");
    std::ostringstream s;
    ASSERT_EQ(run_label(config, out, 1, s), 0);
    const auto rows = read_rows(out / "manifest.csv");
    const auto& first = rows.at(1);
    const auto wav = out / "rois" / first[2] / (first[0] + ".wav");
    ASSERT_TRUE(fs::exists(wav));
    const auto clip = load_audio(wav, 44100);
    EXPECT_NEAR(clip.duration(), std::stod(first[4]) - std::stod(first[3]), 2.0 / 44100);
}

TEST(LabelSpecies, TooFewRoisAllNoiseWithDiagnostic) {
    const auto rec = synth::isolated_chirps(2, 3);
    SpeciesInput in{"lonely", {rec.clip}};
    const auto r = label_species(in, synthetic_config("."));
    ASSERT_EQ(r.rois.size(), 2u);
    for (const auto& b : r.rois) EXPECT_EQ(b.predicted_label, Label::noise);
    EXPECT_FALSE(r.diagnostics.empty());
}

TEST(Excerpt, BoxesStayInFullClipTime) {
    const auto rec = synth::isolated_chirps(4, 21);
    auto config = synthetic_config(".");
    const auto full = detail::segment_with_excerpt(rec.clip, config);
    config.io.excerpt_s = 8.0;
    const auto part = detail::segment_with_excerpt(rec.clip, config);
    ASSERT_FALSE(part.empty());
    ASSERT_FALSE(full.empty());
    EXPECT_NEAR(part.front().t_min, full.front().t_min, 0.3);
    for (const auto& b : part) EXPECT_LE(b.t_min, full.front().t_min + 8.0);
    EXPECT_LE(part.size(), full.size());
}

TEST(EvaluateResults, PerfectAndDegeneratePredictions) {
    SpeciesResult r;
    r.species = "s";
    RoiBox a;
    a.t_min = 1;
    a.t_max = 2;
    a.f_min = 1000;
    a.f_max = 2000;
    a.source_id = "s/f.wav";
    RoiBox b = a;
    b.t_min = 5;
    b.t_max = 6;
    r.rois = {a, b};
    r.cluster_ids = {0, -1};
    RoiBox ann = a;
    ann.truth_label = Label::signal;
    const AnnotationIndex index{{"s/f.wav", {ann}}};

    r.rois[0].predicted_label = Label::signal;
    r.rois[1].predicted_label = Label::noise;
    const auto perfect = evaluate_results({r}, index);
    ASSERT_TRUE(perfect.report);
    EXPECT_EQ(perfect.report->species[0].final_noise, 0.0);
    EXPECT_EQ(perfect.report->species[0].initial_noise, 0.5);
    EXPECT_EQ(perfect.truth[0], (std::vector<Label>{Label::signal, Label::noise}));

    r.rois[0].predicted_label = Label::noise;
    const auto none = evaluate_results({r}, index);
    EXPECT_EQ(none.report->species[0].recall, 0.0);
    EXPECT_TRUE(none.report->species[0].precision_undefined);

    const auto unannotated = evaluate_results({r}, {});
    EXPECT_FALSE(unannotated.report);
    EXPECT_FALSE(unannotated.diagnostics.empty());
}

TEST(RunEval, WritesReportsFromSidecarAnnotations) {
    const auto out = testing_support::scratch_dir("eval_out");
    std::ostringstream s;
    ASSERT_EQ(run_eval(synthetic_config(corpus_dir()), out, 2, s), 0);
    for (const char* f : {"report.csv", "noise_plot.csv", "summary.json", "eval_rois.csv", "manifest.csv"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    const auto rows = read_rows(out / "report.csv");
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"species", "initial_noise_pct", "final_noise_pct", "precision",
                                                 "recall", "f1"}));
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_NEAR(std::stod(rows[i][2]) / 100.0 + std::stod(rows[i][3]), 1.0, 1e-4);
    EXPECT_NE(s.str().find("macro precision"), std::string::npos);
}

TEST(RunTune, WritesTableAndTunedConfig) {
    auto config = synthetic_config(corpus_dir());
    config.tune = GridSearchSpace{6, 8, 2, 4, 4, 1, 22, 25, 3, 19, 19, 1};
    const auto out = testing_support::scratch_dir("tune_out");
    std::ostringstream s;
    ASSERT_EQ(run_tune(config, out, 2, s), 0);
    const auto rows = read_rows(out / "grid_scores.csv");
    EXPECT_EQ(rows.size(), 5u);  // header + 2 x 1 x 2 x 1
    const auto tuned = load_config(out / "tuned_config.json");
    EXPECT_TRUE(tuned.segmentation.time_factor == 6 || tuned.segmentation.time_factor == 8);
    EXPECT_EQ(tuned.io.input_dir, config.io.input_dir);
    EXPECT_NE(s.str().find("best:"), std::string::npos);
}
