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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "birdlabel/clustering.hpp"
#include "birdlabel/csv.hpp"
#include "birdlabel/error.hpp"
#include "birdlabel/parallel.hpp"
#include "birdlabel/segmentation.hpp"

namespace birdlabel {

/// Area overlap ratio in s*Hz.
inline double iou(const RoiBox& a, const RoiBox& b) {
    const double iw = std::min(a.t_max, b.t_max) - std::max(a.t_min, b.t_min);
    const double ih = std::min(a.f_max, b.f_max) - std::max(a.f_min, b.f_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// Median with the mean of the two middle values for even counts.
inline double median(std::vector<double> v) {
    if (v.empty()) throw InvalidArgument("median of empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return (lo + hi) / 2.0;
}

/// Greedy one-to-one matching by descending IOU; returns, per manual box,
/// the index of its automatic partner or -1.
inline std::vector<int> match_boxes(const std::vector<RoiBox>& manual, const std::vector<RoiBox>& automatic) {
    struct Pair {
        double score;
        std::size_t m, a;
    };
    std::vector<Pair> pairs;
    for (std::size_t m = 0; m < manual.size(); ++m)
        for (std::size_t a = 0; a < automatic.size(); ++a)
            if (const double s = iou(manual[m], automatic[a]); s > 0.0) pairs.push_back({s, m, a});
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
        return std::tie(y.score, x.m, x.a) < std::tie(x.score, y.m, y.a);
    });
    std::vector<int> partner(manual.size(), -1);
    std::vector<bool> used(automatic.size(), false);
    for (const auto& p : pairs) {
        if (partner[p.m] >= 0 || used[p.a]) continue;
        partner[p.m] = static_cast<int>(p.a);
        used[p.a] = true;
    }
    return partner;
}

/// Median IOU over manual boxes; an unmatched manual box scores 0.
inline double score_file(const std::vector<RoiBox>& manual, const std::vector<RoiBox>& automatic) {
    if (manual.empty()) throw InvalidArgument("score_file: no manual boxes");
    const auto partner = match_boxes(manual, automatic);
    std::vector<double> scores(manual.size(), 0.0);
    for (std::size_t m = 0; m < manual.size(); ++m)
        if (partner[m] >= 0) scores[m] = iou(manual[m], automatic[static_cast<std::size_t>(partner[m])]);
    return median(std::move(scores));
}

// ---------------------------------------------------------------------------
// Grid search over the four segmentation parameters

struct GridCombination {
    int time_factor = 10;
    int freq_factor = 15;
    double t_high_db = 37.0;
    double t_low_db = 33.0;

    auto operator<=>(const GridCombination&) const = default;
};

struct GridSearchSpace {
    int time_min = 6, time_max = 18, time_step = 2;
    int freq_min = 4, freq_max = 30, freq_step = 2;
    double high_min = 10.0, high_max = 40.0, high_step = 3.0;
    double low_min = 7.0, low_max = 37.0, low_step = 3.0;

    /// Every combination with t_low < t_high, in lexicographic order.
    [[nodiscard]] std::vector<GridCombination> combinations() const {
        if (time_step < 1 || freq_step < 1 || !(high_step > 0) || !(low_step > 0))
            throw InvalidArgument("grid space: steps must be positive");
        auto range = [](double lo, double hi, double step) {
            std::vector<double> v;
            for (int i = 0;; ++i) {
                const double x = lo + i * step;
                if (x > hi + 1e-9) break;
                v.push_back(x);
            }
            return v;
        };
        std::vector<GridCombination> out;
        for (int t = time_min; t <= time_max; t += time_step)
            for (int f = freq_min; f <= freq_max; f += freq_step)
                for (double h : range(high_min, high_max, high_step))
                    for (double l : range(low_min, low_max, low_step))
                        if (l < h) out.push_back({t, f, h, l});
        return out;
    }
};

struct AnnotatedRecording {
    std::string species;
    AudioClip clip;
    std::vector<RoiBox> manual;
};

struct GridScore {
    GridCombination combination;
    double score = 0.0;  // median over species of per-species medians
    std::map<std::string, double> per_species;
};

struct GridSearchResult {
    SegmentationParams best;
    GridScore best_score;
    std::vector<GridScore> table;
};

inline SegmentationParams apply(SegmentationParams base, const GridCombination& c) {
    base.time_factor = c.time_factor;
    base.freq_factor = c.freq_factor;
    base.t_high_db = c.t_high_db;
    base.t_low_db = c.t_low_db;
    return base;
}

/// Scores every combination: median IOU per file, median over a species'
/// files, then median across species. Ties go to the smallest combination.
inline GridSearchResult grid_search(const std::vector<AnnotatedRecording>& files, const GridSearchSpace& space,
                                    const SegmentationParams& base = {}, unsigned jobs = 1) {
    if (files.empty()) throw InvalidArgument("grid_search: no annotated files");
    const auto combos = space.combinations();
    if (combos.empty()) throw InvalidArgument("grid_search: search space is empty after t_low < t_high filtering");

    // per file, per combination; the STFT and each (time, freq) dB grid are shared
    std::vector<std::vector<double>> file_scores(files.size(), std::vector<double>(combos.size(), 0.0));
    parallel_for(files.size(), jobs, [&](std::size_t fi) {
        const auto& rec = files[fi];
        if (rec.manual.empty()) throw InvalidArgument("grid_search: file " + rec.clip.source_id + " has no boxes");
        const Spectrogram linear = segmentation_spectrogram(rec.clip, base);
        std::size_t i = 0;
        while (i < combos.size()) {
            const auto& c = combos[i];
            const Spectrogram db = denoised_db(linear, c.time_factor, c.freq_factor, base.noise_smoothing_bands);
            for (; i < combos.size() && combos[i].time_factor == c.time_factor &&
                   combos[i].freq_factor == c.freq_factor;
                 ++i) {
                const auto boxes = boxes_from_db(db, apply(base, combos[i]), rec.clip.duration());
                file_scores[fi][i] = score_file(rec.manual, boxes);
            }
        }
    });

    std::map<std::string, std::vector<std::size_t>> by_species;
    for (std::size_t fi = 0; fi < files.size(); ++fi) by_species[files[fi].species].push_back(fi);

    GridSearchResult result;
    result.table.reserve(combos.size());
    std::size_t best = 0;
    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
        GridScore row;
        row.combination = combos[ci];
        std::vector<double> species_medians;
        for (const auto& [sp, idx] : by_species) {
            std::vector<double> v;
            for (std::size_t fi : idx) v.push_back(file_scores[fi][ci]);
            const double m = median(std::move(v));
            row.per_species[sp] = m;
            species_medians.push_back(m);
        }
        row.score = median(std::move(species_medians));
        result.table.push_back(std::move(row));
        if (result.table[ci].score > result.table[best].score) best = ci;
    }
    result.best_score = result.table[best];
    result.best = apply(base, combos[best]);
    return result;
}

inline void write_grid_table(const std::filesystem::path& path, const GridSearchResult& result) {
    std::vector<std::string> header{"time_factor", "freq_factor", "t_high_db", "t_low_db", "median_iou"};
    std::vector<std::string> species;
    if (!result.table.empty())
        for (const auto& [sp, _] : result.table.front().per_species) species.push_back(sp);
    for (const auto& sp : species) header.push_back("iou_" + sp);
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : result.table) {
        std::vector<std::string> row{std::to_string(r.combination.time_factor),
                                     std::to_string(r.combination.freq_factor), csv::fixed(r.combination.t_high_db, 3),
                                     csv::fixed(r.combination.t_low_db, 3), csv::fixed(r.score)};
        for (const auto& sp : species) row.push_back(csv::fixed(r.per_species.at(sp)));
        rows.push_back(std::move(row));
    }
    csv::write_file(path.string(), header, rows);
}

// ---------------------------------------------------------------------------
// Confusion metrics

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    [[nodiscard]] std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Signal is the positive class.
inline ConfusionCounts confusion(const std::vector<Label>& predicted, const std::vector<Label>& truth) {
    if (predicted.size() != truth.size()) throw InvalidArgument("confusion: label lists differ in length");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] == Label::signal, t = truth[i] == Label::signal;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

struct SpeciesMetrics {
    std::string species;
    std::size_t n_total = 0;
    double initial_noise = 0.0;
    double final_noise = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_undefined = false;  // tp + fp == 0
    bool recall_undefined = false;     // tp + fn == 0
    ConfusionCounts counts;
};

inline SpeciesMetrics species_metrics(const ConfusionCounts& counts, std::size_t n_truth_noise, std::size_t n_total,
                                      std::string species = {}) {
    if (n_total == 0) throw InvalidArgument("species_metrics: no ROIs");
    SpeciesMetrics m;
    m.species = std::move(species);
    m.n_total = n_total;
    m.counts = counts;
    m.initial_noise = static_cast<double>(n_truth_noise) / static_cast<double>(n_total);
    const std::size_t predicted_pos = counts.tp + counts.fp;
    const std::size_t actual_pos = counts.tp + counts.fn;
    m.precision_undefined = predicted_pos == 0;
    m.recall_undefined = actual_pos == 0;
    m.precision = m.precision_undefined ? 0.0 : static_cast<double>(counts.tp) / static_cast<double>(predicted_pos);
    m.recall = m.recall_undefined ? 0.0 : static_cast<double>(counts.tp) / static_cast<double>(actual_pos);
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.final_noise = 1.0 - m.precision;
    return m;
}

struct EvalReport {
    std::vector<SpeciesMetrics> species;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double median_initial_noise = 0.0;
    double median_final_noise = 0.0;
};

/// Unweighted means of precision/recall/F1, medians of the noise rates.
inline EvalReport macro_report(std::vector<SpeciesMetrics> rows) {
    if (rows.empty()) throw InvalidArgument("macro_report: no species");
    EvalReport r;
    const double n = static_cast<double>(rows.size());
    std::vector<double> initial, final_;
    for (const auto& m : rows) {
        r.macro_precision += m.precision;
        r.macro_recall += m.recall;
        r.macro_f1 += m.f1;
        initial.push_back(m.initial_noise);
        final_.push_back(m.final_noise);
    }
    r.macro_precision /= n;
    r.macro_recall /= n;
    r.macro_f1 /= n;
    r.median_initial_noise = median(std::move(initial));
    r.median_final_noise = median(std::move(final_));
    r.species = std::move(rows);
    return r;
}

/// Per-species table: species, initial_noise_pct, final_noise_pct, precision, recall, f1.
inline void write_species_report(const std::filesystem::path& path, const EvalReport& report) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : report.species)
        rows.push_back({m.species, csv::fixed(100.0 * m.initial_noise, 2), csv::fixed(100.0 * m.final_noise, 2),
                        csv::fixed(m.precision, 4), csv::fixed(m.recall, 4), csv::fixed(m.f1, 4)});
    csv::write_file(path.string(), {"species", "initial_noise_pct", "final_noise_pct", "precision", "recall", "f1"},
                    rows);
}

/// Initial vs final noise per species, for scatter/box plots.
inline void write_noise_plot_data(const std::filesystem::path& path, const EvalReport& report) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& m : report.species)
        rows.push_back({m.species, csv::fixed(100.0 * m.initial_noise, 2), csv::fixed(100.0 * m.final_noise, 2)});
    csv::write_file(path.string(), {"species", "initial_noise_pct", "final_noise_pct"}, rows);
}

inline nlohmann::ordered_json to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["macro"] = {{"macro_precision", report.macro_precision},
                  {"macro_recall", report.macro_recall},
                  {"macro_f1", report.macro_f1},
                  {"median_initial_noise_pct", 100.0 * report.median_initial_noise},
                  {"median_final_noise_pct", 100.0 * report.median_final_noise}};
    auto& rows = j["species"] = nlohmann::ordered_json::array();
    for (const auto& m : report.species)
        rows.push_back({{"species", m.species},
                        {"n_rois", m.n_total},
                        {"tp", m.counts.tp},
                        {"fp", m.counts.fp},
                        {"tn", m.counts.tn},
                        {"fn", m.counts.fn},
                        {"initial_noise_pct", 100.0 * m.initial_noise},
                        {"final_noise_pct", 100.0 * m.final_noise},
                        {"precision", m.precision},
                        {"recall", m.recall},
                        {"f1", m.f1},
                        {"precision_undefined", m.precision_undefined},
                        {"recall_undefined", m.recall_undefined}});
    return j;
}

// ---------------------------------------------------------------------------
// MinPts sweep

struct LabelledSpeciesSet {
    std::string species;
    std::vector<FeatureVector> features;
    std::vector<Label> truth;
};

struct SweepRow {
    double percentage = 0.0;
    double macro_precision = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double best_percentage = 0.0;
};

/// Macro precision of classify_species for each MinPts percentage.
inline SweepResult minpts_sweep(const std::vector<LabelledSpeciesSet>& sets, const std::vector<double>& percentages,
                                ClassifyOptions base = {}) {
    if (sets.empty() || percentages.empty()) throw InvalidArgument("minpts_sweep: empty input");
    SweepResult out;
    for (double pct : percentages) {
        base.minpts_fraction = pct / 100.0;
        std::vector<SpeciesMetrics> rows;
        for (const auto& s : sets) {
            if (s.truth.size() != s.features.size())
                throw InvalidArgument("minpts_sweep: truth labels misaligned for " + s.species);
            if (s.features.empty()) continue;
            const auto cls = classify_species(s.features, base);
            const auto counts = confusion(cls.labels, s.truth);
            rows.push_back(species_metrics(counts, counts.tn + counts.fp, s.features.size(), s.species));
        }
        if (rows.empty()) throw InvalidArgument("minpts_sweep: all species sets are empty");
        out.rows.push_back({pct, macro_report(std::move(rows)).macro_precision});
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.rows.size(); ++i)
        if (out.rows[i].macro_precision > out.rows[best].macro_precision) best = i;
    out.best_percentage = out.rows[best].percentage;
    return out;
}

/// 1%, 2%, ..., 50%.
inline std::vector<double> default_sweep_percentages() {
    std::vector<double> v;
    for (int p = 1; p <= 50; ++p) v.push_back(p);
    return v;
}

}  // namespace birdlabel
