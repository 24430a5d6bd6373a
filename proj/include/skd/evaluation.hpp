#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "skd/detector.hpp"
#include "skd/errors.hpp"
#include "skd/geometry.hpp"
#include "skd/kdtree.hpp"
#include "skd/random.hpp"

namespace skd {

// registration counts as successful below these deviations from ground truth
constexpr double kSuccessRteMeters = 2.0;
constexpr double kSuccessRreDegrees = 5.0;

inline bool registration_success(double rte_m, double rre_deg) {
    return rte_m < kSuccessRteMeters && rre_deg < kSuccessRreDegrees;
}

struct TransformError {
    double rte_m = 0.0;
    double rre_deg = 0.0;
};

// Relative errors of an estimate against ground truth, measured on the
// residual transform truth^-1 * estimated.
inline TransformError rte_rre(const RigidTransform& estimated, const RigidTransform& truth) {
    const RigidTransform delta = compose(invert(truth), estimated);
    TransformError err;
    err.rte_m = delta.translation.norm();
    const double c = std::clamp((delta.rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
    err.rre_deg = std::acos(c) * 180.0 / M_PI;
    return err;
}

// ---------------------------------------------------------------------------
// matching score
// ---------------------------------------------------------------------------

struct MatchingScoreCurve {
    std::vector<double> distances;
    std::vector<double> precision;
    int n_evaluated = 0;
    int n_ignored_no_overlap = 0;
};

/// 0 m to 1 m in 0.05 m steps (21 values).
inline std::vector<double> default_distance_grid() {
    std::vector<double> grid;
    grid.reserve(21);
    for (int i = 0; i <= 20; ++i) grid.push_back(static_cast<double>(i) * 0.05);
    return grid;
}

// Precision of descriptor matching over detected keypoints: project the A
// keypoints through the ground truth, drop the ones with no cloud-B point
// within overlap_radius, match the rest one-directionally by descriptor
// nearest neighbor into the B keypoints, and count a match correct at
// distance d when the matched keypoint lies within d of the projection.
inline MatchingScoreCurve matching_score(const PointCloud& cloud_a, const KeypointSet& kp_a,
                                         const Eigen::MatrixXd& desc_a, const PointCloud& cloud_b,
                                         const KeypointSet& kp_b, const Eigen::MatrixXd& desc_b,
                                         const RigidTransform& truth, double overlap_radius,
                                         const std::vector<double>& grid) {
    if (kp_a.empty() || kp_b.empty()) throw EmptyKeypointSet("matching_score: empty keypoint set");
    if (desc_a.rows() != kp_a.size() || desc_b.rows() != kp_b.size())
        throw ShapeMismatch("matching_score: descriptors not row-aligned with keypoints");
    if (grid.empty() || !std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument("matching_score: distance grid must be ascending and non-empty");

    const NeighborIndex index_b(cloud_b);
    std::vector<double> match_errors;
    MatchingScoreCurve curve;
    curve.distances = grid;
    for (int i = 0; i < kp_a.size(); ++i) {
        const Point3 projected = truth(cloud_a[kp_a.indices[static_cast<std::size_t>(i)]]);
        const auto [nn_idx, nn_dist] = index_b.nearest(projected);
        (void)nn_idx;
        if (nn_dist > overlap_radius) {
            ++curve.n_ignored_no_overlap;
            continue;
        }
        const int match = detail::descriptor_nn(desc_a.row(i), desc_b);
        const Point3 matched_pos = cloud_b[kp_b.indices[static_cast<std::size_t>(match)]];
        match_errors.push_back(distance(projected, matched_pos));
        ++curve.n_evaluated;
    }

    curve.precision.resize(grid.size(), 0.0);
    if (curve.n_evaluated > 0) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
            int correct = 0;
            for (double e : match_errors)
                if (e <= grid[g]) ++correct;
            curve.precision[g] = static_cast<double>(correct) / static_cast<double>(curve.n_evaluated);
        }
    }
    return curve;
}

// ---------------------------------------------------------------------------
// repeatability
// ---------------------------------------------------------------------------

struct RepeatabilityResult {
    double repeatability = 0.0;
    int K = 0;
    double epsilon = 0.0;
};

// Fraction of A keypoints whose ground-truth projection lands within epsilon
// of any B keypoint; directional, normalized by |kp_a|.
inline RepeatabilityResult repeatability(const PointCloud& cloud_a, const KeypointSet& kp_a,
                                         const PointCloud& cloud_b, const KeypointSet& kp_b,
                                         const RigidTransform& truth, double epsilon) {
    if (kp_a.empty() || kp_b.empty()) throw EmptyKeypointSet("repeatability: empty keypoint set");
    std::vector<Point3> positions_b;
    positions_b.reserve(kp_b.indices.size());
    for (int idx : kp_b.indices) positions_b.push_back(cloud_b[idx]);

    int matched = 0;
    for (int idx : kp_a.indices) {
        const Point3 projected = truth(cloud_a[idx]);
        double best = std::numeric_limits<double>::infinity();
        for (const Point3& q : positions_b) best = std::min(best, distance(projected, q));
        if (best <= epsilon) ++matched;
    }
    RepeatabilityResult out;
    out.K = kp_a.size();
    out.epsilon = epsilon;
    out.repeatability = static_cast<double>(matched) / static_cast<double>(kp_a.size());
    return out;
}

// ---------------------------------------------------------------------------
// RANSAC registration
// ---------------------------------------------------------------------------

struct RansacParams {
    double inlier_threshold = 0.5;  // meters
    double confidence = 0.99;
    int max_iterations = 10000;
    std::uint64_t seed = 0;
};

struct RegistrationResult {
    RigidTransform estimated;
    double rte = std::numeric_limits<double>::infinity();
    double rre = std::numeric_limits<double>::infinity();
    bool success = false;
    int iterations = 0;
    double inlier_ratio = 0.0;
    int putative_matches = 0;
};

// Hypothesis count for the adaptive stop: enough samples that an all-inlier
// triple is seen with the requested confidence at inlier fraction w.
inline int ransac_required_iterations(double inlier_fraction, double confidence) {
    if (confidence >= 1.0) return std::numeric_limits<int>::max();
    if (inlier_fraction <= 0.0) return std::numeric_limits<int>::max();
    const double w3 = inlier_fraction * inlier_fraction * inlier_fraction;
    if (w3 >= 1.0) return 1;
    const double denom = std::log(1.0 - w3);
    const double num = std::log(1.0 - confidence);
    const double req = std::ceil(num / denom);
    if (req >= static_cast<double>(std::numeric_limits<int>::max())) return std::numeric_limits<int>::max();
    return std::max(1, static_cast<int>(req));
}

/// Mutual descriptor nearest-neighbor pairs (row indices into each matrix).
inline std::vector<std::pair<int, int>> mutual_matches(const Eigen::MatrixXd& desc_a,
                                                       const Eigen::MatrixXd& desc_b) {
    std::vector<std::pair<int, int>> matches;
    if (desc_a.rows() == 0 || desc_b.rows() == 0) return matches;
    std::vector<int> a_to_b(static_cast<std::size_t>(desc_a.rows()));
    for (Eigen::Index i = 0; i < desc_a.rows(); ++i)
        a_to_b[static_cast<std::size_t>(i)] = detail::descriptor_nn(desc_a.row(i), desc_b);
    std::vector<int> b_to_a(static_cast<std::size_t>(desc_b.rows()));
    for (Eigen::Index j = 0; j < desc_b.rows(); ++j)
        b_to_a[static_cast<std::size_t>(j)] = detail::descriptor_nn(desc_b.row(j), desc_a);
    for (Eigen::Index i = 0; i < desc_a.rows(); ++i) {
        const int j = a_to_b[static_cast<std::size_t>(i)];
        if (b_to_a[static_cast<std::size_t>(j)] == static_cast<int>(i))
            matches.emplace_back(static_cast<int>(i), j);
    }
    return matches;
}

inline RegistrationResult ransac_register(const PointCloud& cloud_a, const KeypointSet& kp_a,
                                          const Eigen::MatrixXd& desc_a, const PointCloud& cloud_b,
                                          const KeypointSet& kp_b, const Eigen::MatrixXd& desc_b,
                                          const RigidTransform& truth, const RansacParams& params) {
    if (kp_a.size() < 3 || kp_b.size() < 3)
        throw TooFewMatches("ransac_register: need at least 3 keypoints per side");
    if (desc_a.rows() != kp_a.size() || desc_b.rows() != kp_b.size())
        throw ShapeMismatch("ransac_register: descriptors not row-aligned with keypoints");

    const auto matches = mutual_matches(desc_a, desc_b);
    const int n_matches = static_cast<int>(matches.size());
    if (n_matches < 3) throw TooFewMatches("ransac_register: fewer than 3 putative matches");

    std::vector<Point3> src(static_cast<std::size_t>(n_matches)), dst(static_cast<std::size_t>(n_matches));
    for (int m = 0; m < n_matches; ++m) {
        src[static_cast<std::size_t>(m)] = cloud_a[kp_a.indices[static_cast<std::size_t>(matches[static_cast<std::size_t>(m)].first)]];
        dst[static_cast<std::size_t>(m)] = cloud_b[kp_b.indices[static_cast<std::size_t>(matches[static_cast<std::size_t>(m)].second)]];
    }

    Rng rng(params.seed);
    RegistrationResult result;
    result.putative_matches = n_matches;
    RigidTransform best_model;
    int best_inliers = 0;
    bool have_model = false;
    int required = params.max_iterations;

    auto count_inliers = [&](const RigidTransform& t) {
        int count = 0;
        for (int m = 0; m < n_matches; ++m)
            if (distance(t(src[static_cast<std::size_t>(m)]), dst[static_cast<std::size_t>(m)]) <=
                params.inlier_threshold)
                ++count;
        return count;
    };

    while (result.iterations < params.max_iterations && result.iterations < required) {
        ++result.iterations;
        const std::vector<int> pick = rng.sample_without_replacement(n_matches, 3);
        std::vector<Point3> s3, d3;
        for (int m : pick) {
            s3.push_back(src[static_cast<std::size_t>(m)]);
            d3.push_back(dst[static_cast<std::size_t>(m)]);
        }
        RigidTransform hypothesis;
        try {
            hypothesis = umeyama_fit(s3, d3);
        } catch (const DegenerateConfiguration&) {
            continue;
        }
        const int inliers = count_inliers(hypothesis);
        if (inliers > best_inliers) {
            best_inliers = inliers;
            best_model = hypothesis;
            have_model = true;
            const double w = static_cast<double>(best_inliers) / static_cast<double>(n_matches);
            required = std::min(params.max_iterations, ransac_required_iterations(w, params.confidence));
        }
    }

    if (have_model) {
        // refine on the consensus set of the best hypothesis
        std::vector<Point3> in_src, in_dst;
        for (int m = 0; m < n_matches; ++m) {
            if (distance(best_model(src[static_cast<std::size_t>(m)]), dst[static_cast<std::size_t>(m)]) <=
                params.inlier_threshold) {
                in_src.push_back(src[static_cast<std::size_t>(m)]);
                in_dst.push_back(dst[static_cast<std::size_t>(m)]);
            }
        }
        result.estimated = best_model;
        if (in_src.size() >= 3) {
            try {
                result.estimated = umeyama_fit(in_src, in_dst);
            } catch (const DegenerateConfiguration&) {
                // keep the sample fit
            }
        }
        result.inlier_ratio = static_cast<double>(best_inliers) / static_cast<double>(n_matches);
    }

    const TransformError err = rte_rre(result.estimated, truth);
    result.rte = err.rte_m;
    result.rre = err.rre_deg;
    result.success = registration_success(result.rte, result.rre);
    return result;
}

// ---------------------------------------------------------------------------
// aggregation
// ---------------------------------------------------------------------------

struct RegistrationSummary {
    int count = 0;
    int success_count = 0;
    double success_rate = 0.0;
    // RTE/RRE statistics cover successful registrations only
    double rte_mean = std::numeric_limits<double>::quiet_NaN();
    double rte_std = std::numeric_limits<double>::quiet_NaN();
    double rre_mean = std::numeric_limits<double>::quiet_NaN();
    double rre_std = std::numeric_limits<double>::quiet_NaN();
    double mean_iterations = 0.0;
    double mean_inlier_ratio = 0.0;
};

inline RegistrationSummary aggregate_registration(const std::vector<RegistrationResult>& results) {
    if (results.empty()) throw EmptyInput("aggregate_registration: no results");
    RegistrationSummary s;
    s.count = static_cast<int>(results.size());
    double iter_sum = 0.0, ratio_sum = 0.0, rte_sum = 0.0, rre_sum = 0.0;
    for (const RegistrationResult& r : results) {
        iter_sum += static_cast<double>(r.iterations);
        ratio_sum += r.inlier_ratio;
        if (r.success) {
            ++s.success_count;
            rte_sum += r.rte;
            rre_sum += r.rre;
        }
    }
    s.success_rate = static_cast<double>(s.success_count) / static_cast<double>(s.count);
    s.mean_iterations = iter_sum / static_cast<double>(s.count);
    s.mean_inlier_ratio = ratio_sum / static_cast<double>(s.count);
    if (s.success_count > 0) {
        s.rte_mean = rte_sum / static_cast<double>(s.success_count);
        s.rre_mean = rre_sum / static_cast<double>(s.success_count);
        double rte_var = 0.0, rre_var = 0.0;
        for (const RegistrationResult& r : results) {
            if (!r.success) continue;
            rte_var += (r.rte - s.rte_mean) * (r.rte - s.rte_mean);
            rre_var += (r.rre - s.rre_mean) * (r.rre - s.rre_mean);
        }
        s.rte_std = std::sqrt(rte_var / static_cast<double>(s.success_count));
        s.rre_std = std::sqrt(rre_var / static_cast<double>(s.success_count));
    }
    return s;
}

}  // namespace skd
