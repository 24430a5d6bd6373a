#pragma once

#include <cmath>
#include <vector>

#include "skd/geometry.hpp"
#include "skd/random.hpp"

namespace skd::testing {

inline PointCloud random_cloud(Rng& rng, int n, double extent = 10.0) {
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cloud.points.push_back(
            {rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)});
    return cloud;
}

// coordinates quantized to multiples of 1/1024: exactly representable, so
// translations by other dyadics stay bit-exact through subtraction
inline PointCloud dyadic_cloud(Rng& rng, int n, double extent = 8.0) {
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Point3 p;
        for (int j = 0; j < 3; ++j)
            p[j] = std::round(rng.uniform(-extent, extent) * 1024.0) / 1024.0;
        cloud.points.push_back(p);
    }
    return cloud;
}

// grid-quantized cloud where exact distance ties are common
inline PointCloud grid_cloud(Rng& rng, int n, int cells = 4) {
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cloud.points.push_back({static_cast<double>(rng.uniform_int(-cells, cells)),
                                static_cast<double>(rng.uniform_int(-cells, cells)),
                                static_cast<double>(rng.uniform_int(-cells, cells))});
    return cloud;
}

inline RigidTransform random_transform(Rng& rng, double max_angle_rad = M_PI, double max_translation = 5.0) {
    Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
    while (axis.norm() < 1e-6) axis = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(rng.uniform(0.0, max_angle_rad), axis).toRotationMatrix();
    t.translation = Eigen::Vector3d(rng.uniform(-max_translation, max_translation),
                                    rng.uniform(-max_translation, max_translation),
                                    rng.uniform(-max_translation, max_translation));
    return t;
}

inline RigidTransform rotation_z(double degrees) {
    RigidTransform t;
    const double rad = degrees * M_PI / 180.0;
    t.rotation << std::cos(rad), -std::sin(rad), 0.0, std::sin(rad), std::cos(rad), 0.0, 0.0, 0.0, 1.0;
    return t;
}

}  // namespace skd::testing
