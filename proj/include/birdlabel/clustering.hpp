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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "birdlabel/error.hpp"
#include "birdlabel/features.hpp"
#include "birdlabel/segmentation.hpp"

namespace birdlabel {

/// Points are rows.
using PointMatrix = Eigen::MatrixXd;

struct Standardized {
    PointMatrix points;
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd stddev;  // population standard deviation
};

/// Z-scores every column; zero-variance columns become 0.
inline Standardized standardize(const PointMatrix& x) {
    if (x.rows() < 2) throw InvalidArgument("standardize: need at least 2 points");
    Standardized s;
    s.mean = x.colwise().mean();
    const PointMatrix centred = x.rowwise() - s.mean;
    s.stddev = (centred.array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
    s.points = centred;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        // relative test so constant columns of large magnitude still count as constant
        const double scale = std::max(1.0, s.mean.cwiseAbs()(c));
        if (s.stddev(c) > 1e-12 * scale)
            s.points.col(c) /= s.stddev(c);
        else
            s.points.col(c).setZero();
    }
    return s;
}

inline PointMatrix feature_matrix(const std::vector<FeatureVector>& features) {
    PointMatrix x(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(kFeatureCount));
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto v = features[i].flatten();
        for (std::size_t j = 0; j < kFeatureCount; ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
    }
    return x;
}

inline Eigen::MatrixXd pairwise_distances(const PointMatrix& p) {
    const Eigen::Index n = p.rows();
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (p.row(i) - p.row(j)).norm();
    }
    return d;
}

/// Mean distance of each point to its k nearest neighbours (self excluded),
/// sorted ascending.
inline std::vector<double> kdist_curve(const PointMatrix& points, int k) {
    const Eigen::Index n = points.rows();
    if (k < 1 || k >= n) throw InvalidArgument("kdist: need 1 <= k < number of points");
    const Eigen::MatrixXd d = pairwise_distances(points);
    std::vector<double> curve(static_cast<std::size_t>(n));
    std::vector<double> row;
    for (Eigen::Index i = 0; i < n; ++i) {
        row.clear();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) row.push_back(d(i, j));
        std::partial_sort(row.begin(), row.begin() + k, row.end());
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += row[static_cast<std::size_t>(j)];
        curve[static_cast<std::size_t>(i)] = sum / k;
    }
    std::sort(curve.begin(), curve.end());
    return curve;
}

/// Shape of an increasing curve. A K-dist graph is convex: flat, then steep.
enum class CurveShape { convex, concave };

struct Knee {
    std::size_t index = 0;
    double value = 0.0;
    /// True when no knee was found and the 90th-percentile point was used.
    bool fallback = false;
};

/// Kneedle knee detection on an increasing curve sampled at unit spacing.
///
/// x and y are normalised to [0, 1] and the difference curve is formed
/// (x - y for convex, y - x for concave). The knee is the first index of its
/// maximum, accepted once the difference later drops below
/// max - sensitivity * mean(dx). Otherwise the 90th-percentile point is
/// returned and flagged.
inline Knee find_knee(std::span<const double> curve, double sensitivity = 1.0,
                      CurveShape shape = CurveShape::convex) {
    const std::size_t n = curve.size();
    if (n < 3) throw InvalidArgument("find_knee: need at least 3 points");
    auto fallback = [&] {
        const auto idx = static_cast<std::size_t>(std::lround(0.9 * static_cast<double>(n - 1)));
        return Knee{idx, curve[idx], true};
    };
    const auto [lo_it, hi_it] = std::minmax_element(curve.begin(), curve.end());
    const double lo = *lo_it, range = *hi_it - *lo_it;
    if (!(range > 0.0)) return fallback();

    const double dx = 1.0 / static_cast<double>(n - 1);
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double xn = static_cast<double>(i) * dx;
        const double yn = (curve[i] - lo) / range;
        diff[i] = shape == CurveShape::convex ? xn - yn : yn - xn;
    }
    const auto best = static_cast<std::size_t>(std::max_element(diff.begin(), diff.end()) - diff.begin());
    constexpr double tiny = 1e-12;
    if (!(diff[best] > tiny)) return fallback();
    const double threshold = diff[best] - sensitivity * dx;
    for (std::size_t j = best + 1; j < n; ++j)
        if (diff[j] < threshold) return Knee{best, curve[best], false};
    return fallback();
}

struct DbscanParams {
    double eps = 0.5;
    int min_pts = 5;
};

inline constexpr int kOutlier = -1;

struct ClusterAssignment {
    std::vector<int> labels;  // -1 = outlier, else 0..n_clusters-1
    std::vector<bool> core;
    int n_clusters = 0;

    [[nodiscard]] std::vector<std::size_t> cluster_sizes() const {
        std::vector<std::size_t> sizes(static_cast<std::size_t>(n_clusters), 0);
        for (int l : labels)
            if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
        return sizes;
    }
};

/// Classic DBSCAN with closed, self-inclusive eps-neighbourhoods. Points are
/// visited in input order, so a border point reachable from several clusters
/// joins the one whose first core appears earliest.
inline ClusterAssignment dbscan(const PointMatrix& points, const DbscanParams& params) {
    if (!(params.eps >= 0.0)) throw InvalidArgument("dbscan: eps must be non-negative");
    if (params.min_pts < 1) throw InvalidArgument("dbscan: min_pts must be >= 1");
    const auto n = static_cast<std::size_t>(points.rows());
    const Eigen::MatrixXd d = pairwise_distances(points);
    std::vector<std::vector<std::size_t>> neighbours(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) <= params.eps)
                neighbours[i].push_back(j);

    ClusterAssignment out;
    out.labels.assign(n, kOutlier);
    out.core.assign(n, false);
    for (std::size_t i = 0; i < n; ++i)
        out.core[i] = neighbours[i].size() >= static_cast<std::size_t>(params.min_pts);

    std::vector<bool> assigned(n, false);
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i] || !out.core[i]) continue;
        const int id = out.n_clusters++;
        assigned[i] = true;
        out.labels[i] = id;
        queue.assign(1, i);
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            for (std::size_t q : neighbours[p]) {
                if (assigned[q]) continue;
                assigned[q] = true;
                out.labels[q] = id;
                if (out.core[q]) queue.push_back(q);
            }
        }
    }
    return out;
}

struct ClassifyOptions {
    double minpts_fraction = 0.10;
    double kneedle_sensitivity = 1.0;
    std::size_t min_rois = 10;
};

struct SpeciesClassification {
    std::vector<Label> labels;
    ClusterAssignment clusters;
    double eps = 0.0;
    int min_pts = 0;
    int signal_cluster = -1;
    bool knee_fallback = false;
    /// Empty on the normal path.
    std::string diagnostic;
};

inline int min_pts_for(std::size_t n, double fraction) {
    return std::max(2, static_cast<int>(std::lround(fraction * static_cast<double>(n))));
}

/// Signal/noise split of one species' ROIs: the largest DBSCAN cluster in
/// z-scored feature space is signal, everything else is noise.
inline SpeciesClassification classify_species(const std::vector<FeatureVector>& features,
                                              const ClassifyOptions& options = {}) {
    if (!(options.minpts_fraction > 0.0)) throw InvalidArgument("classify: minpts fraction must be positive");
    const std::size_t n = features.size();
    SpeciesClassification result;
    result.labels.assign(n, Label::noise);
    result.clusters.labels.assign(n, kOutlier);
    result.clusters.core.assign(n, false);
    if (n < std::max<std::size_t>(options.min_rois, 2)) {
        result.diagnostic = "too few ROIs (" + std::to_string(n) + " < " + std::to_string(options.min_rois) +
                            "); all labelled noise";
        return result;
    }
    const PointMatrix z = standardize(feature_matrix(features)).points;
    result.min_pts = min_pts_for(n, options.minpts_fraction);
    const int k = std::min(result.min_pts, static_cast<int>(n) - 1);
    const auto curve = kdist_curve(z, k);
    const Knee knee = find_knee(curve, options.kneedle_sensitivity, CurveShape::convex);
    result.knee_fallback = knee.fallback;
    result.eps = std::max(knee.value, 1e-12);
    result.clusters = dbscan(z, DbscanParams{result.eps, result.min_pts});
    if (result.clusters.n_clusters == 0) {
        result.diagnostic = "no cluster found; all labelled noise";
        return result;
    }
    const auto sizes = result.clusters.cluster_sizes();
    result.signal_cluster = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    for (std::size_t i = 0; i < n; ++i)
        result.labels[i] = result.clusters.labels[i] == result.signal_cluster ? Label::signal : Label::noise;
    if (knee.fallback) result.diagnostic = "no knee in K-dist graph; eps from 90th percentile";
    return result;
}

/// Seam for alternative per-species ROI classifiers.
class RoiClassifier {
public:
    virtual ~RoiClassifier() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual SpeciesClassification classify(const std::vector<FeatureVector>& features) const = 0;
};

class DbscanClassifier final : public RoiClassifier {
public:
    explicit DbscanClassifier(ClassifyOptions options = {}) : options_(options) {}
    [[nodiscard]] std::string name() const override { return "dbscan"; }
    [[nodiscard]] SpeciesClassification classify(const std::vector<FeatureVector>& features) const override {
        return classify_species(features, options_);
    }
    [[nodiscard]] const ClassifyOptions& options() const { return options_; }

private:
    ClassifyOptions options_;
};

}  // namespace birdlabel
