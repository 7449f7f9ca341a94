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


#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "birdlabel.hpp"
#include "birdlabel/fetch.hpp"

namespace fs = std::filesystem;
using namespace birdlabel;

namespace {

struct CommonOptions {
    std::string config;
    std::string out;
    unsigned jobs = 0;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required = true) {
    auto* c = cmd->add_option("--config", o.config, "Pipeline config (JSON)");
    if (config_required) c->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output directory (overrides io.output_dir)");
    cmd->add_option("--jobs", o.jobs, "Worker threads (0 = hardware concurrency)");
    cmd->add_option("--seed", o.seed, "Random seed (overrides config seed)");
    cmd->add_flag("-v,--verbose", o.verbose, "Log progress at info level");
}

PipelineConfig resolve(const CommonOptions& o) {
    PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
    if (o.seed) {
        c.seed = *o.seed;
        c.fetch.filter.random_seed = *o.seed;
    }
    if (!o.out.empty()) c.io.output_dir = o.out;
    return c;
}

unsigned jobs_of(const CommonOptions& o) {
    return o.jobs ? o.jobs : std::max(1u, std::thread::hardware_concurrency());
}

int do_fetch(const CommonOptions& o) {
    const auto config = resolve(o);
    const auto endpoint = resolve_endpoint(config.fetch.endpoint);
    if (config.fetch.species.empty()) throw InvalidArgument("fetch.species is empty");
    std::vector<std::pair<QueryFilter, std::vector<RecordingRecord>>> picks;
    int failures = 0;
    for (const auto& sp : config.fetch.species) {
        QueryFilter f = config.fetch.filter;
        f.species = sp;
        try {
            auto recs = fetch_metadata(f, endpoint);
            std::cout << sp << ": " << recs.size() << " recordings selected\n";
            if (config.fetch.download) {
                std::string dir = sp;
                std::replace(dir.begin(), dir.end(), ' ', '_');
                download_recordings(recs, fs::path(config.io.output_dir) / "audio" / dir);
            }
            picks.emplace_back(f, std::move(recs));
        } catch (const std::exception& e) {
            log::error(sp + ": " + e.what());
            ++failures;
        }
    }
    fs::create_directories(config.io.output_dir);
    write_fetch_manifest(fs::path(config.io.output_dir) / "fetch_manifest.csv", picks);
    return failures == static_cast<int>(config.fetch.species.size()) ? 1 : 0;
}

int do_synth(const CommonOptions& o, synth::CorpusSpec spec) {
    const auto config = resolve(o);
    spec.seed = config.seed;
    const auto corpus = synth::make_corpus(spec);
    synth::write_corpus(config.io.output_dir, corpus);
    std::cout << "wrote " << corpus.size() << " recordings to " << config.io.output_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"birdlabel: strong labels for weakly labelled bird recordings"};
    app.require_subcommand(1);
    CommonOptions opts;
    auto* fetch = app.add_subcommand("fetch", "Query the recording API and draw a seeded sample per species");
    auto* label = app.add_subcommand("label", "Segment, featurize and cluster every species in io.input_dir");
    auto* eval = app.add_subcommand("eval", "Label, then score the ROIs against annotations");
    auto* tune = app.add_subcommand("tune", "Grid-search segmentation parameters against annotations");
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic annotated corpus");
    for (auto* c : {fetch, label, eval, tune}) add_common(c, opts);
    add_common(synth_cmd, opts, false);
    synth::CorpusSpec spec;
    synth_cmd->add_option("--species", spec.n_species, "Number of pseudo-species (1-10)");
    synth_cmd->add_option("--files", spec.files_per_species, "Recordings per species");

    CLI11_PARSE(app, argc, argv);
    log::set_level(opts.verbose ? log::Level::info : log::Level::warning);
    try {
        const unsigned jobs = jobs_of(opts);
        if (*fetch) return do_fetch(opts);
        if (*synth_cmd) return do_synth(opts, spec);
        const auto config = resolve(opts);
        if (*label) return run_label(config, config.io.output_dir, jobs);
        if (*eval) return run_eval(config, config.io.output_dir, jobs);
        if (*tune) return run_tune(config, config.io.output_dir, jobs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
