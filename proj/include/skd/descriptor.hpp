#pragma once

#include <Eigen/Dense>
#include <vector>

#include "skd/errors.hpp"
#include "skd/geometry.hpp"
#include "skd/kdtree.hpp"
#include "skd/random.hpp"

namespace skd {

/// Per-point activations of one descriptor stage (row i = point i).
struct LayerActivations {
    int layer = 0;
    Eigen::MatrixXd values;  // N x D_layer
};

/// Gradient of the summed stage activations with respect to every input
/// coordinate (row i = d(sum of activations)/d point i).
struct InputGradient {
    int layer = 0;
    Eigen::MatrixXd values;  // N x 3
};

// Small differentiable per-point descriptor. Four stages:
//   1. per-point affine(3->16) + tanh on median-centered coordinates
//   2. neighborhood stage: the k nearest neighbors (self included) are
//      centered on the query point, passed through a shared affine(3->16)
//      + tanh, max-pooled coordinate-wise, and concatenated with stage 1
//   3. affine(32->16) + tanh
//   4. affine(16->8), linear
// Every stage consumes coordinate differences only, so all activations are
// translation invariant. Gradients are exact reverse-mode, including the
// median-centering path.
struct DescriptorModel {
    int k = 8;
    Eigen::MatrixXd w1, w2, w3, w4;
    Eigen::VectorXd b1, b2, b3, b4;

    static constexpr int layer_count = 4;

    int feature_dim() const { return static_cast<int>(w4.rows()); }

    int layer_dim(int layer) const {
        switch (layer) {
            case 1: return static_cast<int>(w1.rows());
            case 2: return static_cast<int>(w1.rows() + w2.rows());
            case 3: return static_cast<int>(w3.rows());
            case 4: return static_cast<int>(w4.rows());
            default: throw BadLayerIndex("layer must be in [1, 4]");
        }
    }

    static DescriptorModel zeros(int k = 8) {
        DescriptorModel m;
        m.k = k;
        m.w1 = Eigen::MatrixXd::Zero(16, 3);
        m.b1 = Eigen::VectorXd::Zero(16);
        m.w2 = Eigen::MatrixXd::Zero(16, 3);
        m.b2 = Eigen::VectorXd::Zero(16);
        m.w3 = Eigen::MatrixXd::Zero(16, 32);
        m.b3 = Eigen::VectorXd::Zero(16);
        m.w4 = Eigen::MatrixXd::Zero(8, 16);
        m.b4 = Eigen::VectorXd::Zero(8);
        return m;
    }

    static DescriptorModel seeded(std::uint64_t seed, int k = 8) {
        DescriptorModel m = zeros(k);
        Rng rng(seed);
        auto fill = [&rng](Eigen::MatrixXd& w, Eigen::VectorXd& b) {
            double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.normal(0.0, scale);
            for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = rng.normal(0.0, 0.1);
        };
        fill(m.w1, m.b1);
        fill(m.w2, m.b2);
        fill(m.w3, m.b3);
        fill(m.w4, m.b4);
        return m;
    }
};

namespace detail {

// Everything the backward pass needs from a forward evaluation.
struct DescriptorForward {
    int upto = 0;
    MedianSelection median;
    Eigen::MatrixXd x1;                   // N x 3, median-centered coordinates
    Eigen::MatrixXd h1;                   // N x 16
    std::vector<std::vector<int>> neigh;  // per point, k source indices
    Eigen::MatrixXd pooled;               // N x 16, max-pooled tanh values
    Eigen::MatrixXi argmax;               // N x 16, source index of the max
    Eigen::MatrixXd h2;                   // N x 32
    Eigen::MatrixXd h3;                   // N x 16
    Eigen::MatrixXd h4;                   // N x 8
};

inline DescriptorForward descriptor_forward(const DescriptorModel& model, const PointCloud& cloud, int upto) {
    if (upto < 1 || upto > DescriptorModel::layer_count)
        throw BadLayerIndex("layer must be in [1, " + std::to_string(DescriptorModel::layer_count) + "]");
    const int n = cloud.size();
    if (n < 1) throw EmptyCloud("descriptor forward on empty cloud");

    DescriptorForward f;
    f.upto = upto;
    f.median = median_center_selection(cloud);

    f.x1.resize(n, 3);
    for (int i = 0; i < n; ++i) f.x1.row(i) = (cloud[i] - f.median.center).vec();
    f.h1 = ((f.x1 * model.w1.transpose()).rowwise() + model.b1.transpose()).array().tanh();
    if (upto == 1) return f;

    if (n < model.k) throw CloudTooSmall("descriptor needs at least k points, got " + std::to_string(n));
    NeighborIndex index(cloud);
    const int h2dim = static_cast<int>(model.w2.rows());
    f.neigh.resize(static_cast<std::size_t>(n));
    f.pooled.resize(n, h2dim);
    f.argmax.resize(n, h2dim);
    for (int i = 0; i < n; ++i) {
        auto nb = index.knn(cloud[i], model.k);
        auto& sources = f.neigh[static_cast<std::size_t>(i)];
        sources.reserve(nb.size());
        bool first = true;
        for (const auto& [src, dist] : nb) {
            (void)dist;
            sources.push_back(src);
            Eigen::Vector3d u = (cloud[src] - cloud[i]).vec();
            Eigen::VectorXd c = (model.w2 * u + model.b2).array().tanh();
            for (int d = 0; d < h2dim; ++d) {
                // coordinate-wise max; ties go to the lowest source index
                if (first || c(d) > f.pooled(i, d) || (c(d) == f.pooled(i, d) && src < f.argmax(i, d))) {
                    f.pooled(i, d) = c(d);
                    f.argmax(i, d) = src;
                }
            }
            first = false;
        }
    }
    f.h2.resize(n, f.h1.cols() + h2dim);
    f.h2 << f.h1, f.pooled;
    if (upto == 2) return f;

    f.h3 = ((f.h2 * model.w3.transpose()).rowwise() + model.b3.transpose()).array().tanh();
    if (upto == 3) return f;

    f.h4 = (f.h3 * model.w4.transpose()).rowwise() + model.b4.transpose();
    return f;
}

}  // namespace detail

inline LayerActivations layer_activations(const DescriptorModel& model, const PointCloud& cloud, int layer) {
    detail::DescriptorForward f = detail::descriptor_forward(model, cloud, layer);
    LayerActivations out;
    out.layer = layer;
    switch (layer) {
        case 1: out.values = std::move(f.h1); break;
        case 2: out.values = std::move(f.h2); break;
        case 3: out.values = std::move(f.h3); break;
        default: out.values = std::move(f.h4); break;
    }
    return out;
}

/// Final per-point features (stage 4 output), N x 8.
inline Eigen::MatrixXd describe(const DescriptorModel& model, const PointCloud& cloud) {
    return detail::descriptor_forward(model, cloud, DescriptorModel::layer_count).h4;
}

inline InputGradient input_gradient(const DescriptorModel& model, const PointCloud& cloud, int layer) {
    detail::DescriptorForward f = detail::descriptor_forward(model, cloud, layer);
    const int n = cloud.size();
    Eigen::MatrixXd dpoints = Eigen::MatrixXd::Zero(n, 3);

    Eigen::MatrixXd dh1, dpooled;
    if (layer >= 3) {
        Eigen::MatrixXd dh3;
        if (layer == 4) {
            Eigen::MatrixXd dh4 = Eigen::MatrixXd::Ones(n, model.w4.rows());
            dh3 = dh4 * model.w4;
        } else {
            dh3 = Eigen::MatrixXd::Ones(n, model.w3.rows());
        }
        Eigen::MatrixXd dz3 = dh3.cwiseProduct((1.0 - f.h3.array().square()).matrix());
        Eigen::MatrixXd dh2 = dz3 * model.w3;
        dh1 = dh2.leftCols(f.h1.cols());
        dpooled = dh2.rightCols(f.pooled.cols());
    } else if (layer == 2) {
        dh1 = Eigen::MatrixXd::Ones(n, f.h1.cols());
        dpooled = Eigen::MatrixXd::Ones(n, f.pooled.cols());
    } else {
        dh1 = Eigen::MatrixXd::Ones(n, f.h1.cols());
    }

    if (layer >= 2) {
        // neighborhood stage: candidate = tanh(w2 (p_src - p_i) + b2),
        // only the argmax neighbor of each channel receives gradient
        const int h2dim = static_cast<int>(f.pooled.cols());
        for (int i = 0; i < n; ++i) {
            for (int d = 0; d < h2dim; ++d) {
                int src = f.argmax(i, d);
                double g = dpooled(i, d) * (1.0 - f.pooled(i, d) * f.pooled(i, d));
                Eigen::RowVector3d du = g * model.w2.row(d);
                dpoints.row(src) += du;
                dpoints.row(i) -= du;
            }
        }
    }

    // per-point stage through the median centering: x1 = p - median(cloud)
    Eigen::MatrixXd dz1 = dh1.cwiseProduct((1.0 - f.h1.array().square()).matrix());
    Eigen::MatrixXd dx1 = dz1 * model.w1;
    dpoints += dx1;
    Eigen::RowVector3d column_total = dx1.colwise().sum();
    for (int j = 0; j < 3; ++j) {
        for (int slot = 0; slot < 2; ++slot) {
            int idx = f.median.index[static_cast<std::size_t>(j)][static_cast<std::size_t>(slot)];
            double w = f.median.weight[static_cast<std::size_t>(j)][static_cast<std::size_t>(slot)];
            if (idx >= 0 && w != 0.0) dpoints(idx, j) -= w * column_total(j);
        }
    }

    InputGradient out;
    out.layer = layer;
    out.values = std::move(dpoints);
    return out;
}

}  // namespace skd
