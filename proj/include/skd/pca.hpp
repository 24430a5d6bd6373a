#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "skd/errors.hpp"

namespace skd {

// Orthonormal linear reduction of descriptor features. The basis keeps the
// smallest number of leading principal directions whose eigenvalue mass
// reaches the target fraction. Basis signs are fixed so the largest-magnitude
// component of each column is positive, which makes projections reproducible.
struct PcaProjection {
    Eigen::VectorXd mean;         // D
    Eigen::MatrixXd basis;        // D x M, orthonormal columns
    Eigen::VectorXd eigenvalues;  // M, descending
    double explained_fraction = 0.0;

    int input_dim() const { return static_cast<int>(mean.size()); }
    int output_dim() const { return static_cast<int>(basis.cols()); }
};

inline PcaProjection fit_pca(const Eigen::MatrixXd& features, double target_fraction) {
    if (!(target_fraction > 0.0) || target_fraction > 1.0)
        throw std::invalid_argument("fit_pca: target_fraction must be in (0, 1]");
    const Eigen::Index n = features.rows();
    const Eigen::Index dim = features.cols();
    if (n < 2) throw DegenerateCovariance("fit_pca: need at least 2 rows");

    Eigen::VectorXd mean = features.colwise().mean();
    Eigen::MatrixXd centered = features.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw DegenerateCovariance("fit_pca: eigendecomposition failed");

    // ascending from Eigen; flip to descending and clamp round-off negatives
    Eigen::VectorXd evals(dim);
    Eigen::MatrixXd evecs(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        evals(i) = std::max(0.0, solver.eigenvalues()(dim - 1 - i));
        evecs.col(i) = solver.eigenvectors().col(dim - 1 - i);
    }

    double total = evals.sum();
    double scale = features.squaredNorm() / static_cast<double>(n);
    // identical rows leave only summation round-off in the covariance
    if (total <= 1e-20 * std::max(1.0, scale))
        throw DegenerateCovariance("fit_pca: covariance has no variance (identical rows)");

    PcaProjection p;
    p.mean = std::move(mean);
    int m = 0;
    double cumulative = 0.0;
    while (m < dim) {
        cumulative += evals(m);
        ++m;
        p.explained_fraction = cumulative / total;
        if (p.explained_fraction >= target_fraction) break;
    }
    p.basis = evecs.leftCols(m);
    p.eigenvalues = evals.head(m);

    for (Eigen::Index c = 0; c < p.basis.cols(); ++c) {
        Eigen::Index largest = 0;
        for (Eigen::Index r = 1; r < p.basis.rows(); ++r)
            if (std::abs(p.basis(r, c)) > std::abs(p.basis(largest, c))) largest = r;
        if (p.basis(largest, c) < 0.0) p.basis.col(c) = -p.basis.col(c);
    }
    return p;
}

inline Eigen::MatrixXd project_pca(const PcaProjection& p, const Eigen::MatrixXd& features) {
    if (features.cols() != p.mean.size())
        throw DimensionMismatch("project_pca: features have " + std::to_string(features.cols()) +
                                " columns, projection expects " + std::to_string(p.mean.size()));
    return (features.rowwise() - p.mean.transpose()) * p.basis;
}

inline Eigen::MatrixXd reconstruct_pca(const PcaProjection& p, const Eigen::MatrixXd& projected) {
    if (projected.cols() != p.basis.cols())
        throw DimensionMismatch("reconstruct_pca: projected width does not match basis");
    return (projected * p.basis.transpose()).rowwise() + p.mean.transpose();
}

}  // namespace skd
