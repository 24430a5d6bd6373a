#pragma once

#include <Eigen/Dense>

#include "skd/descriptor.hpp"
#include "skd/errors.hpp"
#include "skd/geometry.hpp"

namespace skd {

/// Per-point saliency vectors S(P), one 3-vector per point.
struct SaliencyField {
    Eigen::MatrixXd values;  // N x 3
};

/// Per-point scalar saliency score s_i. `normalized` marks scores that have
/// been brought to zero mean / unit variance within the cloud.
struct SaliencyScore {
    Eigen::VectorXd values;
    bool normalized = false;
};

// S row i = (sum of activation row i) * gradient row i. The activation sum
// collapses the D_l-wide activation vector to one scalar weight per point so
// the product lands back in input space (N x 3).
inline SaliencyField initial_saliency(const LayerActivations& acts, const InputGradient& grads) {
    if (acts.values.rows() != grads.values.rows())
        throw ShapeMismatch("initial_saliency: activation and gradient row counts differ");
    if (grads.values.cols() != 3) throw ShapeMismatch("initial_saliency: gradient must be N x 3");
    Eigen::VectorXd weight = acts.values.rowwise().sum();
    SaliencyField field;
    field.values = grads.values.array().colwise() * weight.array();
    return field;
}

// s_i = -( sum_j S_ij * (x_ij - m_j) ) * r_i, with m the coordinate-wise
// median of the cloud and r_i the distance of point i to m.
inline SaliencyScore saliency_score(const SaliencyField& field, const PointCloud& cloud) {
    if (field.values.rows() != cloud.size())
        throw ShapeMismatch("saliency_score: field rows do not match cloud size");
    const Point3 m = median_center(cloud);
    SaliencyScore score;
    score.values.resize(cloud.size());
    for (int i = 0; i < cloud.size(); ++i) {
        const Point3 offset = cloud[i] - m;
        const double r = std::sqrt(offset.x * offset.x + offset.y * offset.y + offset.z * offset.z);
        const double dot =
            field.values(i, 0) * offset.x + field.values(i, 1) * offset.y + field.values(i, 2) * offset.z;
        score.values(i) = -dot * r;
    }
    score.normalized = false;
    return score;
}

// Zero mean, unit population variance within the cloud. Constant scores have
// no spread to normalize; they map to the all-zero vector so downstream
// top-K selection stays total.
inline SaliencyScore normalize_scores(const SaliencyScore& s) {
    const Eigen::Index n = s.values.size();
    SaliencyScore out;
    out.normalized = true;
    if (n == 0) {
        out.values.resize(0);
        return out;
    }
    const double mean = s.values.mean();
    const double variance = (s.values.array() - mean).square().sum() / static_cast<double>(n);
    const double stddev = std::sqrt(variance);
    if (stddev < 1e-12) {
        out.values = Eigen::VectorXd::Zero(n);
        return out;
    }
    out.values = (s.values.array() - mean) / stddev;
    return out;
}

}  // namespace skd
