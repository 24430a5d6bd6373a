#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "skd/descriptor.hpp"
#include "skd/detector.hpp"
#include "skd/errors.hpp"
#include "skd/geometry.hpp"
#include "skd/random.hpp"

namespace skd {

// Maximum-entropy (Kapur) threshold over a histogram. The returned index t
// splits bins into background [0, t) and foreground [t, B); among splits
// where both sides carry mass, t maximizes the summed class entropies, ties
// to the lowest index. If all mass sits in one bin there is no split and
// that bin's index is returned.
inline int kapur_threshold(const std::vector<std::int64_t>& histogram) {
    const int bins = static_cast<int>(histogram.size());
    if (bins < 2) throw EmptyHistogram("kapur_threshold: need at least 2 bins");
    std::int64_t total = 0;
    int nonzero = 0, last_nonzero = -1;
    for (int i = 0; i < bins; ++i) {
        if (histogram[static_cast<std::size_t>(i)] < 0)
            throw EmptyHistogram("kapur_threshold: negative count");
        if (histogram[static_cast<std::size_t>(i)] > 0) {
            ++nonzero;
            last_nonzero = i;
        }
        total += histogram[static_cast<std::size_t>(i)];
    }
    if (total <= 0) throw EmptyHistogram("kapur_threshold: empty histogram");
    if (nonzero == 1) return last_nonzero;

    const double n = static_cast<double>(total);
    int best_t = -1;
    double best_entropy = -std::numeric_limits<double>::infinity();
    for (int t = 1; t < bins; ++t) {
        std::int64_t back = 0;
        for (int i = 0; i < t; ++i) back += histogram[static_cast<std::size_t>(i)];
        const std::int64_t fore = total - back;
        if (back == 0 || fore == 0) continue;
        const double pb = static_cast<double>(back) / n;
        const double pf = static_cast<double>(fore) / n;
        double hb = 0.0, hf = 0.0;
        for (int i = 0; i < bins; ++i) {
            if (histogram[static_cast<std::size_t>(i)] == 0) continue;
            const double p = static_cast<double>(histogram[static_cast<std::size_t>(i)]) / n;
            if (i < t)
                hb -= (p / pb) * std::log(p / pb);
            else
                hf -= (p / pf) * std::log(p / pf);
        }
        if (hb + hf > best_entropy) {
            best_entropy = hb + hf;
            best_t = t;
        }
    }
    return best_t;
}

// 3D adaptation of the gradient-response detector: score every point by its
// input-gradient magnitude, binarize with the Kapur threshold, then greedy
// non-maximum suppression in 3D space. All-zero gradients select nothing.
inline KeypointSet elf3d_detect(const InputGradient& grads, const PointCloud& cloud, double nms_radius,
                                int bins) {
    const int n = cloud.size();
    if (grads.values.rows() != n) throw ShapeMismatch("elf3d_detect: gradient rows do not match cloud");
    if (bins < 2) throw EmptyHistogram("elf3d_detect: need at least 2 histogram bins");

    Eigen::VectorXd score(n);
    for (int i = 0; i < n; ++i) score(i) = grads.values.row(i).norm();
    const double smax = score.maxCoeff();
    KeypointSet out;
    if (smax <= 0.0) return out;  // degenerate: nothing salient
    const double smin = score.minCoeff();
    const double width = (smax - smin) / static_cast<double>(bins);

    auto bin_of = [&](double s) {
        if (width <= 0.0) return 0;
        return std::min(bins - 1, static_cast<int>((s - smin) / width));
    };
    std::vector<std::int64_t> histogram(static_cast<std::size_t>(bins), 0);
    for (int i = 0; i < n; ++i) ++histogram[static_cast<std::size_t>(bin_of(score(i)))];
    const int threshold_bin = kapur_threshold(histogram);

    std::vector<int> survivors;
    for (int i = 0; i < n; ++i)
        if (bin_of(score(i)) >= threshold_bin) survivors.push_back(i);
    std::sort(survivors.begin(), survivors.end(), [&](int a, int b) {
        return score(a) > score(b) || (score(a) == score(b) && a < b);
    });

    for (int idx : survivors) {
        bool suppressed = false;
        for (int kept : out.indices) {
            if (distance(cloud[idx], cloud[kept]) <= nms_radius) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            out.indices.push_back(idx);
            out.scores.push_back(score(idx));
        }
    }
    return out;
}

/// Control baseline: K distinct uniformly drawn indices, deterministic per seed.
inline KeypointSet random_detect(const PointCloud& cloud, int K, std::uint64_t seed) {
    const int n = cloud.size();
    if (K < 1) throw std::invalid_argument("random_detect: K must be >= 1");
    if (K > n) throw KTooLarge("random_detect: K=" + std::to_string(K) + " exceeds N=" + std::to_string(n));
    Rng rng(seed);
    KeypointSet out;
    out.indices = rng.sample_without_replacement(n, K);
    out.scores.assign(static_cast<std::size_t>(K), 1.0);
    return out;
}

}  // namespace skd
