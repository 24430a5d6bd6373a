#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "skd/kdtree.hpp"
#include "skd/random.hpp"

using namespace skd;
using skd::testing::grid_cloud;
using skd::testing::random_cloud;

namespace {

// brute-force oracle with the same (distance, index) tie rule
std::pair<int, double> brute_nearest(const PointCloud& cloud, const Point3& q) {
    int best = 0;
    double best_d2 = squared_distance(cloud[0], q);
    for (int i = 1; i < cloud.size(); ++i) {
        const double d2 = squared_distance(cloud[i], q);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return {best, std::sqrt(best_d2)};
}

std::vector<std::pair<int, double>> brute_knn(const PointCloud& cloud, const Point3& q, int k) {
    std::vector<std::pair<double, int>> all;
    for (int i = 0; i < cloud.size(); ++i) all.emplace_back(squared_distance(cloud[i], q), i);
    std::sort(all.begin(), all.end());
    std::vector<std::pair<int, double>> out;
    for (int i = 0; i < k; ++i) out.emplace_back(all[static_cast<std::size_t>(i)].second,
                                                 std::sqrt(all[static_cast<std::size_t>(i)].first));
    return out;
}

std::vector<int> brute_radius(const PointCloud& cloud, const Point3& q, double r) {
    std::vector<int> out;
    for (int i = 0; i < cloud.size(); ++i)
        if (squared_distance(cloud[i], q) <= r * r) out.push_back(i);
    return out;
}

}  // namespace

TEST_CASE("single-point index answers every query with that point") {
    const PointCloud cloud(std::vector<Point3>{{1, 2, 3}});
    const NeighborIndex index = build_index(cloud);
    const auto [idx, dist] = nearest(index, {100, 0, 0});
    CHECK(idx == 0);
    CHECK(dist == Catch::Approx(distance({1, 2, 3}, {100, 0, 0})));
}

TEST_CASE("three collinear points: middle query returns the middle index") {
    const PointCloud cloud(std::vector<Point3>{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
    const NeighborIndex index = build_index(cloud);
    CHECK(nearest(index, {1.1, 0, 0}).first == 1);
}

TEST_CASE("nearest matches brute force on random clouds up to N=500") {
    Rng rng(21);
    for (int n : {1, 2, 3, 5, 8, 17, 50, 200, 500}) {
        const PointCloud cloud = random_cloud(rng, n);
        const NeighborIndex index(cloud);
        for (int trial = 0; trial < 50; ++trial) {
            const Point3 q{rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)};
            const auto expect = brute_nearest(cloud, q);
            const auto got = index.nearest(q);
            REQUIRE(got.first == expect.first);
            REQUIRE(got.second == expect.second);
        }
    }
}

TEST_CASE("tie rule: equal distances resolve to the lowest index") {
    // symmetric pair around the query
    const PointCloud cloud(std::vector<Point3>{{2, 0, 0}, {-2, 0, 0}, {0, 5, 0}});
    const NeighborIndex index(cloud);
    CHECK(index.nearest({0, 0, 0}).first == 0);

    // grid clouds produce many exact ties
    Rng rng(22);
    for (int trial = 0; trial < 30; ++trial) {
        const PointCloud grid = grid_cloud(rng, 120);
        const NeighborIndex gi(grid);
        for (int q = 0; q < 25; ++q) {
            const Point3 query{static_cast<double>(rng.uniform_int(-4, 4)),
                               static_cast<double>(rng.uniform_int(-4, 4)),
                               static_cast<double>(rng.uniform_int(-4, 4))};
            REQUIRE(gi.nearest(query) == brute_nearest(grid, query));
        }
    }
}

TEST_CASE("knn matches brute force including ties") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const PointCloud cloud = trial % 2 == 0 ? random_cloud(rng, 150) : grid_cloud(rng, 150);
        const NeighborIndex index(cloud);
        for (int q = 0; q < 10; ++q) {
            const Point3 query{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
            const int k = rng.uniform_int(1, 20);
            const auto expect = brute_knn(cloud, query, k);
            const auto got = index.knn(query, k);
            REQUIRE(got.size() == expect.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                REQUIRE(got[i].first == expect[i].first);
                REQUIRE(got[i].second == expect[i].second);
            }
        }
    }
    const PointCloud small(std::vector<Point3>{{0, 0, 0}});
    CHECK_THROWS_AS(NeighborIndex(small).knn({0, 0, 0}, 2), KTooLarge);
}

TEST_CASE("radius query is inclusive and matches brute force") {
    Rng rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        const PointCloud cloud = trial % 2 == 0 ? random_cloud(rng, 200) : grid_cloud(rng, 200);
        const NeighborIndex index(cloud);
        for (int q = 0; q < 10; ++q) {
            const Point3 query{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
            const double r = rng.uniform(0.0, 6.0);
            REQUIRE(index.radius(query, r) == brute_radius(cloud, query, r));
        }
    }

    // boundary is inclusive: integer distances hit it exactly
    const PointCloud line(std::vector<Point3>{{0, 0, 0}, {3, 0, 0}, {4, 0, 0}, {5, 0, 0}});
    const NeighborIndex li(line);
    CHECK(li.radius({0, 0, 0}, 4.0) == std::vector<int>{0, 1, 2});
    CHECK(li.radius({0, 0, 0}, -1.0).empty());
}

TEST_CASE("coincident points do not break construction") {
    const PointCloud cloud(std::vector<Point3>(40, Point3{1, 1, 1}));
    const NeighborIndex index(cloud);
    CHECK(index.nearest({0, 0, 0}).first == 0);
    CHECK(index.radius({1, 1, 1}, 0.0).size() == 40);
    CHECK_THROWS_AS(NeighborIndex(PointCloud{}), EmptyCloud);
}
