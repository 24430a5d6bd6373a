#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "skd/detector.hpp"
#include "skd/geometry.hpp"
#include "skd/random.hpp"

namespace skd {

// Desk-scale stand-in for LIDAR scenes: ground patches, walls, boxes and
// poles expose the flat regions, edges and corners that matter for keypoint
// selection, at runtimes of seconds.
struct SceneConfig {
    std::uint64_t seed = 1;
    int planes = 2;
    int boxes = 2;
    int poles = 2;
    int points_per_primitive = 200;
    double noise_sigma = 0.02;       // meters
    double max_rotation_deg = 10.0;  // pair transform bound
    double max_translation_m = 2.0;  // pair transform bound
    double extent_m = 30.0;          // primitives are placed within this footprint
};

namespace detail {

inline void validate(const SceneConfig& cfg) {
    if (cfg.planes < 0 || cfg.boxes < 0 || cfg.poles < 0)
        throw std::invalid_argument("SceneConfig: primitive counts must be >= 0");
    if (cfg.planes + cfg.boxes + cfg.poles < 1)
        throw std::invalid_argument("SceneConfig: need at least one primitive");
    if (cfg.points_per_primitive < 1)
        throw std::invalid_argument("SceneConfig: points_per_primitive must be >= 1");
    if (cfg.noise_sigma < 0.0) throw std::invalid_argument("SceneConfig: noise_sigma must be >= 0");
    if (cfg.max_rotation_deg < 0.0 || cfg.max_translation_m < 0.0)
        throw std::invalid_argument("SceneConfig: transform bounds must be >= 0");
    if (cfg.extent_m <= 0.0) throw std::invalid_argument("SceneConfig: extent must be positive");
}

inline Eigen::Vector3d random_unit(Rng& rng) {
    while (true) {
        Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
        const double norm = v.norm();
        if (norm > 1e-6) return v / norm;
    }
}

inline Point3 rotate_yaw(const Point3& p, double yaw) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * p.x - s * p.y, s * p.x + c * p.y, p.z};
}

inline void sample_plane(Rng& rng, const SceneConfig& cfg, bool ground, std::vector<Point3>& out) {
    const double half = cfg.extent_m / 2.0;
    const double cx = rng.uniform(-half, half);
    const double cy = rng.uniform(-half, half);
    const double yaw = rng.uniform(0.0, 2.0 * M_PI);
    if (ground) {
        const double w = rng.uniform(5.0, 9.0), h = rng.uniform(5.0, 9.0);
        for (int i = 0; i < cfg.points_per_primitive; ++i) {
            Point3 local{rng.uniform(-w / 2, w / 2), rng.uniform(-h / 2, h / 2), 0.0};
            out.push_back(rotate_yaw(local, yaw) + Point3{cx, cy, 0.0});
        }
    } else {
        const double w = rng.uniform(3.0, 6.0), h = rng.uniform(2.0, 3.5);
        for (int i = 0; i < cfg.points_per_primitive; ++i) {
            Point3 local{rng.uniform(-w / 2, w / 2), 0.0, rng.uniform(0.0, h)};
            out.push_back(rotate_yaw(local, yaw) + Point3{cx, cy, 0.0});
        }
    }
}

inline void sample_box(Rng& rng, const SceneConfig& cfg, std::vector<Point3>& out) {
    const double half = cfg.extent_m / 2.0;
    const double cx = rng.uniform(-half, half);
    const double cy = rng.uniform(-half, half);
    const double yaw = rng.uniform(0.0, 2.0 * M_PI);
    const double sx = rng.uniform(0.6, 2.5), sy = rng.uniform(0.6, 2.5), sz = rng.uniform(0.6, 2.5);
    // face areas decide where samples land so density stays uniform
    const double area_xy = sx * sy, area_xz = sx * sz, area_yz = sy * sz;
    const double total = 2.0 * (area_xy + area_xz + area_yz);
    for (int i = 0; i < cfg.points_per_primitive; ++i) {
        const double pick = rng.uniform(0.0, total);
        double u = rng.uniform(-0.5, 0.5), v = rng.uniform(-0.5, 0.5);
        Point3 local;
        if (pick < 2.0 * area_xy) {
            local = {u * sx, v * sy, pick < area_xy ? -sz / 2 : sz / 2};
        } else if (pick < 2.0 * (area_xy + area_xz)) {
            local = {u * sx, pick < 2.0 * area_xy + area_xz ? -sy / 2 : sy / 2, v * sz};
        } else {
            local = {pick < total - area_yz ? -sx / 2 : sx / 2, u * sy, v * sz};
        }
        local.z += sz / 2;  // rest the box on the ground
        out.push_back(rotate_yaw(local, yaw) + Point3{cx, cy, 0.0});
    }
}

inline void sample_pole(Rng& rng, const SceneConfig& cfg, std::vector<Point3>& out) {
    const double half = cfg.extent_m / 2.0;
    const double cx = rng.uniform(-half, half);
    const double cy = rng.uniform(-half, half);
    const double radius = rng.uniform(0.08, 0.2);
    const double height = rng.uniform(2.0, 4.0);
    for (int i = 0; i < cfg.points_per_primitive; ++i) {
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        out.push_back({cx + radius * std::cos(theta), cy + radius * std::sin(theta), rng.uniform(0.0, height)});
    }
}

}  // namespace detail

/// Noise-free base geometry of the scene; the same Rng drives both pair sides.
inline PointCloud gen_scene(const SceneConfig& cfg, Rng& rng) {
    detail::validate(cfg);
    std::vector<Point3> base;
    base.reserve(static_cast<std::size_t>((cfg.planes + cfg.boxes + cfg.poles) * cfg.points_per_primitive));
    for (int i = 0; i < cfg.planes; ++i) detail::sample_plane(rng, cfg, i % 2 == 0, base);
    for (int i = 0; i < cfg.boxes; ++i) detail::sample_box(rng, cfg, base);
    for (int i = 0; i < cfg.poles; ++i) detail::sample_pole(rng, cfg, base);
    return PointCloud(std::move(base));
}

// Deterministic synthetic pair: one base scene, two independent noise
// realizations, the second side moved by a random rigid transform within the
// configured bounds. The returned truth maps the cloud_k frame to cloud_l.
inline TrainingPair gen_synthetic_pair(const SceneConfig& cfg) {
    detail::validate(cfg);
    Rng rng(cfg.seed);
    const PointCloud base = gen_scene(cfg, rng);
    const int n = base.size();

    PointCloud side_k = base, side_l = base;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) side_k[i][j] += rng.normal(0.0, cfg.noise_sigma);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) side_l[i][j] += rng.normal(0.0, cfg.noise_sigma);

    RigidTransform truth;
    const double angle = rng.uniform(0.0, cfg.max_rotation_deg * M_PI / 180.0);
    const Eigen::Vector3d axis = detail::random_unit(rng);
    truth.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    truth.translation = rng.uniform(0.0, cfg.max_translation_m) * detail::random_unit(rng);

    TrainingPair pair;
    pair.cloud_k = std::move(side_k);
    pair.cloud_l = apply_transform(side_l, truth);
    pair.truth = truth;
    return pair;
}

}  // namespace skd
