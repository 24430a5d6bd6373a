#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "skd/baselines.hpp"

using namespace skd;
using skd::testing::random_cloud;

namespace {

// independent exhaustive oracle using the log-sum form of the class entropies
int kapur_oracle(const std::vector<std::int64_t>& hist) {
    const int bins = static_cast<int>(hist.size());
    std::int64_t total = 0;
    for (std::int64_t h : hist) total += h;
    int nonzero = 0, last = -1;
    for (int i = 0; i < bins; ++i)
        if (hist[static_cast<std::size_t>(i)] > 0) {
            ++nonzero;
            last = i;
        }
    if (nonzero == 1) return last;

    int best_t = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int t = 1; t < bins; ++t) {
        double pb = 0.0, pf = 0.0, sb = 0.0, sf = 0.0;
        for (int i = 0; i < bins; ++i) {
            if (hist[static_cast<std::size_t>(i)] == 0) continue;
            const double p = static_cast<double>(hist[static_cast<std::size_t>(i)]) / static_cast<double>(total);
            if (i < t) {
                pb += p;
                sb -= p * std::log(p);
            } else {
                pf += p;
                sf -= p * std::log(p);
            }
        }
        if (pb <= 0.0 || pf <= 0.0) continue;
        const double entropy = std::log(pb * pf) + sb / pb + sf / pf;
        if (entropy > best) {
            best = entropy;
            best_t = t;
        }
    }
    return best_t;
}

}  // namespace

TEST_CASE("kapur_threshold") {
    SECTION("two separated masses split at the lowest tied index") {
        CHECK(kapur_threshold({100, 0, 0, 100}) == 1);
    }

    SECTION("a single nonzero bin returns that bin") {
        CHECK(kapur_threshold({0, 0, 7, 0}) == 2);
        CHECK(kapur_threshold({5, 0, 0, 0}) == 0);
    }

    SECTION("matches the exhaustive-search oracle on seeded 32-bin histograms") {
        Rng rng(91);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<std::int64_t> hist(32, 0);
            // bimodal-ish counts with empty stretches
            for (int i = 0; i < 32; ++i) {
                const double u = rng.uniform();
                if (u < 0.3)
                    hist[static_cast<std::size_t>(i)] = rng.uniform_int(0, 40);
                else if (u < 0.5)
                    hist[static_cast<std::size_t>(i)] = rng.uniform_int(50, 200);
            }
            std::int64_t total = 0;
            for (std::int64_t h : hist) total += h;
            if (total == 0) hist[5] = 3;
            REQUIRE(kapur_threshold(hist) == kapur_oracle(hist));
        }
    }

    SECTION("degenerate histograms are rejected") {
        CHECK_THROWS_AS(kapur_threshold({}), EmptyHistogram);
        CHECK_THROWS_AS(kapur_threshold({4}), EmptyHistogram);
        CHECK_THROWS_AS(kapur_threshold({0, 0, 0}), EmptyHistogram);
    }
}

TEST_CASE("elf3d_detect") {
    Rng rng(92);
    const PointCloud cloud = random_cloud(rng, 50, 5.0);

    SECTION("all-zero gradients select nothing") {
        const InputGradient zeros{4, Eigen::MatrixXd::Zero(50, 3)};
        CHECK(elf3d_detect(zeros, cloud, 0.5, 16).empty());
    }

    SECTION("one dominant gradient magnitude is the lone keypoint") {
        Eigen::MatrixXd g = Eigen::MatrixXd::Constant(50, 3, 0.01 / std::sqrt(3.0));
        g.row(17) << 10.0, 0.0, 0.0;
        const KeypointSet kp = elf3d_detect({4, g}, cloud, 0.01, 16);
        REQUIRE(kp.indices == std::vector<int>{17});
        CHECK(kp.scores[0] == Catch::Approx(10.0));
    }

    SECTION("the weaker of two close high scores is suppressed") {
        PointCloud two(std::vector<Point3>{{0, 0, 0}, {0.1, 0, 0}, {10, 0, 0}, {20, 0, 0}});
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4, 3);
        g(0, 0) = 9.0;
        g(1, 0) = 8.0;   // within 0.1 m of the stronger point
        g(2, 0) = 0.05;  // background mass so the threshold has two classes
        g(3, 0) = 0.05;
        const KeypointSet kp = elf3d_detect({4, g}, two, 0.5, 8);
        REQUIRE(kp.indices == std::vector<int>{0});
    }

    SECTION("no two selected points lie within the suppression radius") {
        for (int trial = 0; trial < 10; ++trial) {
            const PointCloud c = random_cloud(rng, 120, 6.0);
            Eigen::MatrixXd g(120, 3);
            for (int i = 0; i < 120; ++i)
                for (int j = 0; j < 3; ++j) g(i, j) = rng.uniform(-1, 1);
            const double radius = rng.uniform(0.5, 2.0);
            const KeypointSet kp = elf3d_detect({4, g}, c, radius, 16);
            for (std::size_t a = 0; a < kp.indices.size(); ++a)
                for (std::size_t b = a + 1; b < kp.indices.size(); ++b)
                    REQUIRE(distance(c[kp.indices[a]], c[kp.indices[b]]) > radius);
        }
    }

    SECTION("scores stay sorted non-increasing") {
        Eigen::MatrixXd g(50, 3);
        for (int i = 0; i < 50; ++i)
            for (int j = 0; j < 3; ++j) g(i, j) = rng.uniform(-2, 2);
        const KeypointSet kp = elf3d_detect({4, g}, cloud, 0.3, 16);
        for (std::size_t i = 1; i < kp.scores.size(); ++i) REQUIRE(kp.scores[i] <= kp.scores[i - 1]);
    }
}

TEST_CASE("random_detect") {
    Rng rng(93);
    const PointCloud cloud = random_cloud(rng, 8);

    SECTION("K = N returns every index") {
        KeypointSet kp = random_detect(cloud, 8, 5);
        std::sort(kp.indices.begin(), kp.indices.end());
        CHECK(kp.indices == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
    }

    SECTION("the same seed reproduces the same selection") {
        const KeypointSet a = random_detect(cloud, 3, 1234);
        const KeypointSet b = random_detect(cloud, 3, 1234);
        CHECK(a.indices == b.indices);
        const KeypointSet c = random_detect(cloud, 3, 1235);
        CHECK(a.indices != c.indices);
    }

    SECTION("selection frequencies are uniform within 3 sigma over 10000 draws") {
        std::map<int, int> counts;
        const int draws = 10000, K = 2;
        for (int d = 0; d < draws; ++d) {
            const KeypointSet kp = random_detect(cloud, K, 50000 + static_cast<std::uint64_t>(d));
            for (int idx : kp.indices) ++counts[idx];
        }
        const double expected = static_cast<double>(draws) * K / 8.0;
        const double sigma = std::sqrt(draws * (K / 8.0) * (1.0 - K / 8.0));
        for (int i = 0; i < 8; ++i)
            CHECK(std::abs(counts[i] - expected) <= 3.0 * sigma);
    }

    SECTION("K out of range is rejected") {
        CHECK_THROWS_AS(random_detect(cloud, 9, 1), KTooLarge);
        CHECK_THROWS_AS(random_detect(cloud, 0, 1), std::invalid_argument);
    }
}
