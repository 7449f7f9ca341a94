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

// End-to-end labelling: segment every recording of a species, featurize the
// ROIs, cluster them, and write manifests and reports.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "birdlabel/annotations.hpp"
#include "birdlabel/audio_io.hpp"
#include "birdlabel/clustering.hpp"
#include "birdlabel/config.hpp"
#include "birdlabel/csv.hpp"
#include "birdlabel/error.hpp"
#include "birdlabel/evaluation.hpp"
#include "birdlabel/features.hpp"
#include "birdlabel/parallel.hpp"
#include "birdlabel/segmentation.hpp"

namespace birdlabel {

namespace fs = std::filesystem;

struct RecordingFile {
    std::string species;
    fs::path path;
    std::string source_id;  // "<species>/<file name>"
};

/// <input_dir>/<species>/*.wav, sorted by species then file name.
inline std::vector<RecordingFile> discover_corpus(const fs::path& input_dir) {
    if (!fs::is_directory(input_dir)) throw IoError("input directory not found: " + input_dir.string());
    std::vector<RecordingFile> out;
    for (const auto& sp : fs::directory_iterator(input_dir)) {
        if (!sp.is_directory()) continue;
        for (const auto& f : fs::directory_iterator(sp.path())) {
            if (!f.is_regular_file()) continue;
            auto ext = f.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (ext != ".wav") continue;
            const std::string species = sp.path().filename().string();
            out.push_back({species, f.path(), species + "/" + f.path().filename().string()});
        }
    }
    std::sort(out.begin(), out.end(), [](const RecordingFile& a, const RecordingFile& b) {
        return std::tie(a.species, a.source_id) < std::tie(b.species, b.source_id);
    });
    return out;
}

struct SpeciesInput {
    std::string species;
    std::vector<AudioClip> clips;  // source_id of each clip names its file
};

struct SpeciesResult {
    std::string species;
    std::vector<RoiBox> rois;   // every ROI carries a predicted label
    std::vector<int> cluster_ids;
    std::vector<FeatureVector> features;  // featurized ROIs only
    SpeciesClassification classification;
    std::vector<std::string> diagnostics;
    bool failed = false;
};

namespace detail {

inline std::string file_stem(const std::string& source_id) {
    return fs::path(source_id).stem().string();
}

inline std::string roi_id(const std::string& species, const std::string& source_id, std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return species + "_" + file_stem(source_id) + "_" + buf;
}

/// Segments, optionally restricted to an excerpt starting at the first ROI
/// onset. Returned box times are relative to the full clip.
inline std::vector<RoiBox> segment_with_excerpt(const AudioClip& clip, const PipelineConfig& config) {
    auto boxes = segment_recording(clip, config.segmentation);
    if (config.io.excerpt_s <= 0.0 || boxes.empty()) return boxes;
    double onset = boxes.front().t_min;
    for (const auto& b : boxes) onset = std::min(onset, b.t_min);
    const double end = std::min(clip.duration(), onset + config.io.excerpt_s);
    if (end - onset >= clip.duration() - 1e-9) return boxes;
    const AudioClip part = trim(clip, onset, end);
    const double offset = static_cast<double>(static_cast<std::size_t>(std::floor(onset * clip.sample_rate + 1e-6))) /
                          clip.sample_rate;
    boxes = segment_recording(part, config.segmentation);
    for (auto& b : boxes) {
        b.t_min = std::min(b.t_min + offset, clip.duration());
        b.t_max = std::min(b.t_max + offset, clip.duration());
    }
    return boxes;
}

}  // namespace detail

/// Labels one species. Errors in one recording or ROI are recorded as
/// diagnostics; the rest is processed.
inline SpeciesResult label_species(const SpeciesInput& input, const PipelineConfig& config, unsigned jobs = 1) {
    SpeciesResult result;
    result.species = input.species;

    std::vector<std::vector<RoiBox>> per_clip(input.clips.size());
    std::vector<std::string> clip_errors(input.clips.size());
    parallel_for(input.clips.size(), jobs, [&](std::size_t i) {
        try {
            per_clip[i] = detail::segment_with_excerpt(input.clips[i], config);
        } catch (const std::exception& e) {
            clip_errors[i] = input.clips[i].source_id + ": segmentation failed: " + e.what();
        }
    });

    std::vector<std::size_t> owner;  // clip index of each ROI
    for (std::size_t c = 0; c < per_clip.size(); ++c) {
        if (!clip_errors[c].empty()) result.diagnostics.push_back(clip_errors[c]);
        for (std::size_t i = 0; i < per_clip[c].size(); ++i) {
            RoiBox b = per_clip[c][i];
            b.source_id = input.clips[c].source_id;
            b.species = input.species;
            b.roi_id = detail::roi_id(input.species, b.source_id, i);
            result.rois.push_back(std::move(b));
            owner.push_back(c);
        }
    }

    const GaborBank bank = build_gabor_bank(config.features);
    std::vector<std::optional<FeatureVector>> feats(result.rois.size());
    std::vector<std::string> roi_errors(result.rois.size());
    parallel_for(result.rois.size(), jobs, [&](std::size_t i) {
        try {
            const auto audio = extract_roi_audio(input.clips[owner[i]], result.rois[i], config.segmentation.band.order);
            auto fv = featurize(audio, config.features, bank);
            fv.roi_id = result.rois[i].roi_id;
            feats[i] = std::move(fv);
        } catch (const std::exception& e) {
            roi_errors[i] = result.rois[i].roi_id + ": featurization failed: " + e.what();
        }
    });

    std::vector<std::size_t> featurized;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        if (feats[i]) {
            featurized.push_back(i);
            result.features.push_back(*feats[i]);
        } else {
            result.diagnostics.push_back(roi_errors[i]);
        }
    }

    result.classification = classify_species(result.features, config.clustering);
    if (!result.classification.diagnostic.empty())
        result.diagnostics.push_back(input.species + ": " + result.classification.diagnostic);
    result.cluster_ids.assign(result.rois.size(), kOutlier);
    for (auto& b : result.rois) b.predicted_label = Label::noise;
    for (std::size_t j = 0; j < featurized.size(); ++j) {
        const std::size_t i = featurized[j];
        result.rois[i].predicted_label = result.classification.labels[j];
        result.cluster_ids[i] = result.classification.clusters.labels[j];
    }
    return result;
}

/// roi_id, source_id, species, t_min_s, t_max_s, f_min_hz, f_max_hz, predicted_label, cluster_id
inline void write_label_manifest(const fs::path& path, const std::vector<SpeciesResult>& results) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : results)
        for (std::size_t i = 0; i < r.rois.size(); ++i) {
            const auto& b = r.rois[i];
            rows.push_back({b.roi_id, b.source_id, b.species, csv::fixed(b.t_min), csv::fixed(b.t_max),
                            csv::fixed(b.f_min, 3), csv::fixed(b.f_max, 3),
                            std::string(to_string(b.predicted_label.value_or(Label::noise))),
                            std::to_string(r.cluster_ids[i])});
        }
    csv::write_file(path.string(),
                    {"roi_id", "source_id", "species", "t_min_s", "t_max_s", "f_min_hz", "f_max_hz",
                     "predicted_label", "cluster_id"},
                    rows);
}

/// roi_id, species, cluster_id, predicted_label, eps_used, min_pts_used
inline void write_cluster_report(const fs::path& path, const std::vector<SpeciesResult>& results) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : results)
        for (std::size_t i = 0; i < r.rois.size(); ++i)
            rows.push_back({r.rois[i].roi_id, r.species, std::to_string(r.cluster_ids[i]),
                            std::string(to_string(r.rois[i].predicted_label.value_or(Label::noise))),
                            csv::exact(r.classification.eps), std::to_string(r.classification.min_pts)});
    csv::write_file(path.string(),
                    {"roi_id", "species", "cluster_id", "predicted_label", "eps_used", "min_pts_used"}, rows);
}

inline std::string summary_line(const SpeciesResult& r) {
    std::size_t n_signal = 0;
    for (const auto& b : r.rois) n_signal += b.predicted_label == Label::signal;
    return r.species + ": " + std::to_string(r.rois.size()) + " ROIs, " + std::to_string(n_signal) + " signal, " +
           std::to_string(r.rois.size() - n_signal) + " noise, " +
           std::to_string(r.classification.clusters.n_clusters) + " clusters, eps=" +
           csv::fixed(r.classification.eps, 4) + ", min_pts=" + std::to_string(r.classification.min_pts);
}

/// Loads every species group of the corpus; unreadable files become diagnostics.
struct LoadedCorpus {
    std::vector<SpeciesInput> species;
    std::map<std::string, std::vector<std::string>> diagnostics;
};

inline LoadedCorpus load_corpus(const std::vector<RecordingFile>& files, int sample_rate, unsigned jobs = 1) {
    std::vector<std::optional<AudioClip>> clips(files.size());
    std::vector<std::string> errors(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        try {
            AudioClip c = load_audio(files[i].path, sample_rate);
            c.source_id = files[i].source_id;
            clips[i] = std::move(c);
        } catch (const std::exception& e) {
            errors[i] = files[i].source_id + ": skipped: " + e.what();
        }
    });
    LoadedCorpus out;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (out.species.empty() || out.species.back().species != files[i].species)
            out.species.push_back({files[i].species, {}});
        if (clips[i]) out.species.back().clips.push_back(std::move(*clips[i]));
        else out.diagnostics[files[i].species].push_back(errors[i]);
    }
    return out;
}

struct LabelRun {
    std::vector<SpeciesResult> results;
    std::size_t failed_species = 0;
};

/// Labels every species; a species whose stages throw is marked failed.
inline LabelRun label_corpus(const LoadedCorpus& corpus, const PipelineConfig& config, unsigned jobs,
                             std::ostream* summary = nullptr) {
    LabelRun run;
    for (const auto& sp : corpus.species) {
        SpeciesResult r;
        try {
            if (sp.clips.empty()) throw IoError("no readable recordings");
            r = label_species(sp, config, jobs);
        } catch (const std::exception& e) {
            r = SpeciesResult{};
            r.species = sp.species;
            r.failed = true;
            r.diagnostics.push_back(sp.species + ": failed: " + e.what());
        }
        if (const auto it = corpus.diagnostics.find(sp.species); it != corpus.diagnostics.end())
            r.diagnostics.insert(r.diagnostics.begin(), it->second.begin(), it->second.end());
        for (const auto& d : r.diagnostics) log::warn(d);
        if (r.failed) ++run.failed_species;
        if (summary) *summary << (r.failed ? r.species + ": FAILED" : summary_line(r)) << '\n';
        run.results.push_back(std::move(r));
    }
    return run;
}

/// Writes manifest.csv, cluster_report.csv, features.csv and optional ROI WAVs.
inline void write_label_outputs(const fs::path& out_dir, const LabelRun& run, const LoadedCorpus& corpus,
                                bool export_roi_wavs, int band_order) {
    fs::create_directories(out_dir);
    write_label_manifest(out_dir / "manifest.csv", run.results);
    write_cluster_report(out_dir / "cluster_report.csv", run.results);
    std::vector<FeatureVector> all;
    for (const auto& r : run.results) all.insert(all.end(), r.features.begin(), r.features.end());
    write_feature_table(out_dir / "features.csv", all);
    if (!export_roi_wavs) return;
    for (const auto& r : run.results) {
        const auto sp = std::find_if(corpus.species.begin(), corpus.species.end(),
                                     [&](const SpeciesInput& s) { return s.species == r.species; });
        if (sp == corpus.species.end()) continue;
        const auto dir = out_dir / "rois" / r.species;
        fs::create_directories(dir);
        for (const auto& b : r.rois) {
            const auto clip = std::find_if(sp->clips.begin(), sp->clips.end(),
                                           [&](const AudioClip& c) { return c.source_id == b.source_id; });
            if (clip == sp->clips.end()) continue;
            try {
                write_wav(dir / (b.roi_id + ".wav"), extract_roi_audio(*clip, b, band_order), WavEncoding::float32);
            } catch (const std::exception& e) {
                log::warn(b.roi_id + ": ROI audio not written: " + e.what());
            }
        }
    }
}

/// `label` subcommand. Returns the process exit code.
inline int run_label(const PipelineConfig& config, const fs::path& out_dir, unsigned jobs,
                     std::ostream& summary = std::cout) {
    const auto files = discover_corpus(config.io.input_dir);
    if (files.empty()) throw IoError("no WAV recordings under " + config.io.input_dir);
    const auto corpus = load_corpus(files, config.io.sample_rate, jobs);
    const auto run = label_corpus(corpus, config, jobs, &summary);
    write_label_outputs(out_dir, run, corpus, config.io.export_roi_wavs, config.segmentation.band.order);
    return run.failed_species == run.results.size() ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Evaluation against annotations

using AnnotationIndex = std::map<std::string, std::vector<RoiBox>>;  // by source_id

inline fs::path annotation_path(const PipelineConfig& config, const RecordingFile& f) {
    const fs::path base = config.io.annotations_dir.empty() ? fs::path(config.io.input_dir) : fs::path(config.io.annotations_dir);
    return base / f.species / (f.path.stem().string() + ".txt");
}

inline AnnotationIndex load_annotations(const PipelineConfig& config, const std::vector<RecordingFile>& files,
                                        std::vector<std::string>* diagnostics = nullptr) {
    AnnotationIndex index;
    AnnotationOptions opts;
    opts.signal_token = config.io.signal_token;
    opts.full_band_low_hz = config.segmentation.band.low_hz;
    opts.full_band_high_hz = config.segmentation.band.high_hz;
    for (const auto& f : files) {
        const auto p = annotation_path(config, f);
        if (!fs::exists(p)) {
            if (diagnostics) diagnostics->push_back(f.source_id + ": no annotation file " + p.string());
            continue;
        }
        try {
            index[f.source_id] = read_audacity_labels(p, f.source_id, opts);
        } catch (const std::exception& e) {
            if (diagnostics) diagnostics->push_back(f.source_id + ": " + e.what());
        }
    }
    return index;
}

struct EvalOutcome {
    std::optional<EvalReport> report;
    std::vector<std::vector<Label>> truth;  // per species result, aligned with rois; empty if unannotated
    std::vector<std::string> diagnostics;
};

/// Truth per ROI by IOU with annotated signal boxes; ROIs of files without
/// annotations are left out of the counts.
inline EvalOutcome evaluate_results(const std::vector<SpeciesResult>& results, const AnnotationIndex& annotations,
                                    double truth_iou = 0.5) {
    EvalOutcome out;
    std::vector<SpeciesMetrics> rows;
    for (const auto& r : results) {
        std::vector<Label> truth(r.rois.size(), Label::noise);
        std::vector<Label> pred_used, truth_used;
        bool any_overlap = false;
        for (std::size_t i = 0; i < r.rois.size(); ++i) {
            const auto it = annotations.find(r.rois[i].source_id);
            if (it == annotations.end()) continue;
            truth[i] = assign_truth({r.rois[i]}, it->second, truth_iou).front();
            for (const auto& a : it->second) any_overlap = any_overlap || iou(r.rois[i], a) > 0.0;
            pred_used.push_back(r.rois[i].predicted_label.value_or(Label::noise));
            truth_used.push_back(truth[i]);
        }
        out.truth.push_back(truth);
        if (r.failed || pred_used.empty()) {
            out.diagnostics.push_back(r.species + ": no annotated ROIs; excluded from the report");
            continue;
        }
        if (!any_overlap) out.diagnostics.push_back(r.species + ": no ROI overlaps any annotation");
        const auto counts = confusion(pred_used, truth_used);
        rows.push_back(species_metrics(counts, counts.tn + counts.fp, pred_used.size(), r.species));
    }
    if (!rows.empty()) out.report = macro_report(std::move(rows));
    return out;
}

inline void write_eval_outputs(const fs::path& out_dir, const EvalOutcome& outcome,
                               const std::vector<SpeciesResult>& results) {
    fs::create_directories(out_dir);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t s = 0; s < results.size(); ++s)
        for (std::size_t i = 0; i < results[s].rois.size(); ++i) {
            const auto& b = results[s].rois[i];
            rows.push_back({b.roi_id, b.source_id, b.species, csv::fixed(b.t_min), csv::fixed(b.t_max),
                            csv::fixed(b.f_min, 3), csv::fixed(b.f_max, 3),
                            std::string(to_string(b.predicted_label.value_or(Label::noise))),
                            std::string(to_string(outcome.truth[s][i]))});
        }
    csv::write_file((out_dir / "eval_rois.csv").string(),
                    {"roi_id", "source_id", "species", "t_min_s", "t_max_s", "f_min_hz", "f_max_hz",
                     "predicted_label", "truth_label"},
                    rows);
    nlohmann::ordered_json j = outcome.report ? to_json(*outcome.report) : nlohmann::ordered_json::object();
    j["diagnostics"] = outcome.diagnostics;
    std::ofstream(out_dir / "summary.json", std::ios::binary) << j.dump(2) << '\n';
    if (!outcome.report) return;
    write_species_report(out_dir / "report.csv", *outcome.report);
    write_noise_plot_data(out_dir / "noise_plot.csv", *outcome.report);
}

/// `eval` subcommand: label, then score against annotations.
inline int run_eval(const PipelineConfig& config, const fs::path& out_dir, unsigned jobs,
                    std::ostream& summary = std::cout) {
    const auto files = discover_corpus(config.io.input_dir);
    if (files.empty()) throw IoError("no WAV recordings under " + config.io.input_dir);
    const auto corpus = load_corpus(files, config.io.sample_rate, jobs);
    const auto run = label_corpus(corpus, config, jobs, &summary);
    write_label_outputs(out_dir, run, corpus, config.io.export_roi_wavs, config.segmentation.band.order);
    std::vector<std::string> diags;
    const auto annotations = load_annotations(config, files, &diags);
    auto outcome = evaluate_results(run.results, annotations, config.io.truth_iou);
    outcome.diagnostics.insert(outcome.diagnostics.begin(), diags.begin(), diags.end());
    for (const auto& d : outcome.diagnostics) log::warn(d);
    write_eval_outputs(out_dir, outcome, run.results);
    if (!outcome.report) {
        summary << "no species could be evaluated\n";
        return 1;
    }
    const auto& r = *outcome.report;
    summary << "macro precision " << csv::fixed(r.macro_precision, 4) << ", recall " << csv::fixed(r.macro_recall, 4)
            << ", F1 " << csv::fixed(r.macro_f1, 4) << "; median noise " << csv::fixed(100 * r.median_initial_noise, 1)
            << "% -> " << csv::fixed(100 * r.median_final_noise, 1) << "%\n";
    return 0;
}

/// Annotated recordings for the grid search; files without annotations are skipped.
inline std::vector<AnnotatedRecording> load_annotated_corpus(const PipelineConfig& config, unsigned jobs,
                                                             std::vector<std::string>* diagnostics = nullptr) {
    const auto files = discover_corpus(config.io.input_dir);
    const auto annotations = load_annotations(config, files, diagnostics);
    std::vector<RecordingFile> used;
    for (const auto& f : files)
        if (const auto it = annotations.find(f.source_id); it != annotations.end() && !it->second.empty())
            used.push_back(f);
    const auto corpus = load_corpus(used, config.io.sample_rate, jobs);
    std::vector<AnnotatedRecording> out;
    for (const auto& sp : corpus.species)
        for (const auto& c : sp.clips) out.push_back({sp.species, c, annotations.at(c.source_id)});
    if (diagnostics)
        for (const auto& [_, v] : corpus.diagnostics) diagnostics->insert(diagnostics->end(), v.begin(), v.end());
    return out;
}

/// `tune` subcommand: grid search, then write grid_scores.csv and tuned_config.json.
inline int run_tune(const PipelineConfig& config, const fs::path& out_dir, unsigned jobs,
                    std::ostream& summary = std::cout) {
    std::vector<std::string> diags;
    const auto files = load_annotated_corpus(config, jobs, &diags);
    for (const auto& d : diags) log::warn(d);
    if (files.empty()) throw InvalidArgument("tune: no annotated recordings under " + config.io.input_dir);
    const auto result = grid_search(files, config.tune, config.segmentation, jobs);
    fs::create_directories(out_dir);
    write_grid_table(out_dir / "grid_scores.csv", result);
    PipelineConfig tuned = config;
    tuned.segmentation = result.best;
    save_config(out_dir / "tuned_config.json", tuned);
    const auto& c = result.best_score.combination;
    summary << "best: time " << c.time_factor << ", freq " << c.freq_factor << ", t_high " << csv::fixed(c.t_high_db, 1)
            << " dB, t_low " << csv::fixed(c.t_low_db, 1) << " dB, median IOU " << csv::fixed(result.best_score.score, 4)
            << " over " << result.table.size() << " combinations\n";
    return 0;
}

}  // namespace birdlabel
