#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "skd/errors.hpp"

namespace skd {

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double operator[](int j) const { return j == 0 ? x : (j == 1 ? y : z); }
    double& operator[](int j) { return j == 0 ? x : (j == 1 ? y : z); }

    Eigen::Vector3d vec() const { return {x, y, z}; }
    static Point3 of(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

    bool is_finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Point3 operator*(double s, const Point3& p) { return {s * p.x, s * p.y, s * p.z}; }
inline bool operator==(const Point3& a, const Point3& b) { return a.x == b.x && a.y == b.y && a.z == b.z; }

inline double squared_distance(const Point3& a, const Point3& b) {
    double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

inline double distance(const Point3& a, const Point3& b) { return std::sqrt(squared_distance(a, b)); }

// Ordered list of points; index identity is meaningful across operations.
struct PointCloud {
    std::vector<Point3> points;

    PointCloud() = default;
    explicit PointCloud(std::vector<Point3> pts) : points(std::move(pts)) {}

    int size() const { return static_cast<int>(points.size()); }
    bool empty() const { return points.empty(); }
    const Point3& operator[](int i) const { return points[static_cast<std::size_t>(i)]; }
    Point3& operator[](int i) { return points[static_cast<std::size_t>(i)]; }

    // N x 3 coordinate matrix (row i = point i)
    Eigen::MatrixXd matrix() const {
        Eigen::MatrixXd m(size(), 3);
        for (int i = 0; i < size(); ++i) m.row(i) = points[static_cast<std::size_t>(i)].vec();
        return m;
    }
};

struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static RigidTransform identity() { return {}; }

    Point3 operator()(const Point3& p) const { return Point3::of(rotation * p.vec() + translation); }

    // orthonormal with det +1 within tol
    bool is_rigid(double tol = 1e-9) const {
        Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
        return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
    }
};

// a then b is compose(b, a): x -> b(a(x))
inline RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
    RigidTransform r;
    r.rotation = outer.rotation * inner.rotation;
    r.translation = outer.rotation * inner.translation + outer.translation;
    return r;
}

inline RigidTransform invert(const RigidTransform& t) {
    RigidTransform r;
    r.rotation = t.rotation.transpose();
    r.translation = -(t.rotation.transpose() * t.translation);
    return r;
}

inline PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const Point3& p : cloud.points) out.points.push_back(t(p));
    return out;
}

// Coordinate-wise median and, per coordinate, which input point(s) it came
// from. The selection is what the descriptor gradient needs to backpropagate
// through the centering step: weight 1 on the middle element for odd N,
// 0.5 on each of the two middle elements for even N.
struct MedianSelection {
    Point3 center;
    std::array<std::array<int, 2>, 3> index{};     // second slot -1 when unused
    std::array<std::array<double, 2>, 3> weight{};
};

inline MedianSelection median_center_selection(const PointCloud& cloud) {
    const int n = cloud.size();
    if (n < 1) throw EmptyCloud("median_center requires at least one point");
    MedianSelection sel;
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int j = 0; j < 3; ++j) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double va = cloud[a][j], vb = cloud[b][j];
            return va < vb || (va == vb && a < b);
        });
        if (n % 2 == 1) {
            int mid = order[static_cast<std::size_t>(n / 2)];
            sel.center[j] = cloud[mid][j];
            sel.index[static_cast<std::size_t>(j)] = {mid, -1};
            sel.weight[static_cast<std::size_t>(j)] = {1.0, 0.0};
        } else {
            int lo = order[static_cast<std::size_t>(n / 2 - 1)];
            int hi = order[static_cast<std::size_t>(n / 2)];
            sel.center[j] = 0.5 * (cloud[lo][j] + cloud[hi][j]);
            sel.index[static_cast<std::size_t>(j)] = {lo, hi};
            sel.weight[static_cast<std::size_t>(j)] = {0.5, 0.5};
        }
    }
    return sel;
}

inline Point3 median_center(const PointCloud& cloud) { return median_center_selection(cloud).center; }

inline std::vector<double> radial_distances(const PointCloud& cloud, const Point3& center) {
    std::vector<double> r;
    r.reserve(cloud.points.size());
    for (const Point3& p : cloud.points) r.push_back(distance(p, center));
    return r;
}

// Least-squares rigid fit (Kabsch/Umeyama without scale): minimizes
// sum ||R*src_i + t - dst_i||^2, reflection corrected to det(R) = +1.
inline RigidTransform umeyama_fit(const std::vector<Point3>& src, const std::vector<Point3>& dst) {
    if (src.size() != dst.size())
        throw ShapeMismatch("umeyama_fit: src and dst sizes differ");
    const int n = static_cast<int>(src.size());
    if (n < 3) throw DegenerateConfiguration("umeyama_fit: need at least 3 correspondences");

    Eigen::Vector3d cs = Eigen::Vector3d::Zero(), cd = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
        cs += src[static_cast<std::size_t>(i)].vec();
        cd += dst[static_cast<std::size_t>(i)].vec();
    }
    cs /= n;
    cd /= n;

    Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
    for (int i = 0; i < n; ++i)
        cross += (src[static_cast<std::size_t>(i)].vec() - cs) * (dst[static_cast<std::size_t>(i)].vec() - cd).transpose();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d& sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv(1) <= sv(0) * 1e-12)
        throw DegenerateConfiguration("umeyama_fit: rank-deficient cross-covariance (collinear or coincident points)");

    Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
    Eigen::Vector3d d = Eigen::Vector3d::Ones();
    if ((v * u.transpose()).determinant() < 0.0) d(2) = -1.0;

    RigidTransform out;
    out.rotation = v * d.asDiagonal() * u.transpose();
    out.translation = cd - out.rotation * cs;
    return out;
}

}  // namespace skd
