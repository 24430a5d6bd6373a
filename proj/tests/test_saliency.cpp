#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "skd/saliency.hpp"

using namespace skd;
using skd::testing::random_cloud;

namespace {

LayerActivations make_acts(const Eigen::MatrixXd& values) { return {2, values}; }
InputGradient make_grads(const Eigen::MatrixXd& values) { return {2, values}; }

// independent evaluation of the score formula: sort-based median, plain loops
Eigen::VectorXd score_oracle(const Eigen::MatrixXd& field, const PointCloud& cloud) {
    const int n = cloud.size();
    double median[3];
    for (int j = 0; j < 3; ++j) {
        std::vector<double> values;
        for (const Point3& p : cloud.points) values.push_back(p[j]);
        std::sort(values.begin(), values.end());
        median[j] = n % 2 == 1 ? values[static_cast<std::size_t>(n / 2)]
                               : 0.5 * (values[static_cast<std::size_t>(n / 2 - 1)] +
                                        values[static_cast<std::size_t>(n / 2)]);
    }
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) {
        double dot = 0.0, r2 = 0.0;
        for (int j = 0; j < 3; ++j) {
            const double offset = cloud[i][j] - median[j];
            dot += field(i, j) * offset;
            r2 += offset * offset;
        }
        s(i) = -dot * std::sqrt(r2);
    }
    return s;
}

}  // namespace

TEST_CASE("initial_saliency") {
    SECTION("zero gradients give a zero field") {
        Eigen::MatrixXd acts = Eigen::MatrixXd::Random(5, 16);
        const SaliencyField field = initial_saliency(make_acts(acts), make_grads(Eigen::MatrixXd::Zero(5, 3)));
        CHECK(field.values.cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("activation sum 2 with gradient (0.5, 0, 0) gives row (1, 0, 0)") {
        Eigen::MatrixXd acts(1, 4);
        acts << 0.5, 0.5, 0.5, 0.5;  // row sum 2
        Eigen::MatrixXd grads(1, 3);
        grads << 0.5, 0.0, 0.0;
        const SaliencyField field = initial_saliency(make_acts(acts), make_grads(grads));
        CHECK(field.values(0, 0) == 1.0);
        CHECK(field.values(0, 1) == 0.0);
        CHECK(field.values(0, 2) == 0.0);
    }

    SECTION("matches the elementwise product oracle on seeded input") {
        Rng rng(51);
        Eigen::MatrixXd acts(12, 8), grads(12, 3);
        for (int i = 0; i < 12; ++i) {
            for (int j = 0; j < 8; ++j) acts(i, j) = rng.uniform(-1, 1);
            for (int j = 0; j < 3; ++j) grads(i, j) = rng.uniform(-1, 1);
        }
        const SaliencyField field = initial_saliency(make_acts(acts), make_grads(grads));
        for (int i = 0; i < 12; ++i) {
            double a = 0.0;
            for (int j = 0; j < 8; ++j) a += acts(i, j);
            for (int j = 0; j < 3; ++j)
                CHECK(field.values(i, j) == Catch::Approx(a * grads(i, j)).margin(1e-15));
        }
    }

    SECTION("row mismatch is rejected") {
        CHECK_THROWS_AS(
            initial_saliency(make_acts(Eigen::MatrixXd::Zero(4, 8)), make_grads(Eigen::MatrixXd::Zero(5, 3))),
            ShapeMismatch);
        CHECK_THROWS_AS(
            initial_saliency(make_acts(Eigen::MatrixXd::Zero(4, 8)), make_grads(Eigen::MatrixXd::Zero(4, 2))),
            ShapeMismatch);
    }
}

TEST_CASE("saliency_score") {
    SECTION("coincident points have zero radius and zero score") {
        const PointCloud cloud(std::vector<Point3>(6, Point3{2, 2, 2}));
        SaliencyField field{Eigen::MatrixXd::Random(6, 3)};
        const SaliencyScore s = saliency_score(field, cloud);
        CHECK(s.values.cwiseAbs().maxCoeff() == 0.0);
        CHECK_FALSE(s.normalized);
    }

    SECTION("hand-evaluated three-point line") {
        const PointCloud cloud(std::vector<Point3>{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
        SaliencyField field{Eigen::MatrixXd::Ones(3, 3)};
        const SaliencyScore s = saliency_score(field, cloud);
        CHECK(s.values(0) == Catch::Approx(1.0).margin(1e-15));
        CHECK(s.values(1) == 0.0);
        CHECK(s.values(2) == Catch::Approx(-1.0).margin(1e-15));
    }

    SECTION("matches the brute-force formula oracle on 100 seeded instances") {
        Rng rng(52);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = rng.uniform_int(2, 64);
            const PointCloud cloud = random_cloud(rng, n);
            Eigen::MatrixXd field(n, 3);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < 3; ++j) field(i, j) = rng.uniform(-2, 2);
            const SaliencyScore s = saliency_score(SaliencyField{field}, cloud);
            const Eigen::VectorXd expect = score_oracle(field, cloud);
            for (int i = 0; i < n; ++i)
                REQUIRE_THAT(s.values(i), Catch::Matchers::WithinAbs(expect(i), 1e-12));
        }
    }

    SECTION("row mismatch is rejected") {
        const PointCloud cloud(std::vector<Point3>{{0, 0, 0}, {1, 0, 0}});
        CHECK_THROWS_AS(saliency_score(SaliencyField{Eigen::MatrixXd::Zero(3, 3)}, cloud), ShapeMismatch);
    }
}

TEST_CASE("normalize_scores") {
    SECTION("(1, 2, 3) normalizes against the population deviation") {
        SaliencyScore raw;
        raw.values.resize(3);
        raw.values << 1.0, 2.0, 3.0;
        const SaliencyScore n = normalize_scores(raw);
        const double expected = 1.0 / std::sqrt(2.0 / 3.0);  // direct mean/std computation
        CHECK(n.normalized);
        CHECK(n.values(0) == Catch::Approx(-expected).margin(1e-12));
        CHECK(n.values(1) == Catch::Approx(0.0).margin(1e-12));
        CHECK(n.values(2) == Catch::Approx(expected).margin(1e-12));
    }

    SECTION("constant input maps to zeros") {
        SaliencyScore raw;
        raw.values = Eigen::VectorXd::Constant(9, 4.2);
        const SaliencyScore n = normalize_scores(raw);
        CHECK(n.normalized);
        CHECK(n.values.cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("normalization is idempotent") {
        Rng rng(53);
        SaliencyScore raw;
        raw.values.resize(40);
        for (int i = 0; i < 40; ++i) raw.values(i) = rng.uniform(-5, 5);
        const SaliencyScore once = normalize_scores(raw);
        const SaliencyScore twice = normalize_scores(once);
        CHECK((twice.values - once.values).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("mean and population variance contracts hold on seeded inputs") {
        Rng rng(54);
        for (int trial = 0; trial < 50; ++trial) {
            SaliencyScore raw;
            const int n = rng.uniform_int(2, 128);
            raw.values.resize(n);
            for (int i = 0; i < n; ++i) raw.values(i) = rng.uniform(-10, 10);
            const SaliencyScore norm = normalize_scores(raw);
            const double mean = norm.values.mean();
            const double var = (norm.values.array() - mean).square().sum() / n;
            CHECK(std::abs(mean) < 1e-9);
            CHECK(std::abs(var - 1.0) < 1e-9);
        }
    }

    SECTION("normalization preserves the score ordering") {
        Rng rng(55);
        SaliencyScore raw;
        raw.values.resize(60);
        for (int i = 0; i < 60; ++i) raw.values(i) = rng.uniform(-3, 3);
        const SaliencyScore norm = normalize_scores(raw);
        std::vector<int> order_raw(60), order_norm(60);
        std::iota(order_raw.begin(), order_raw.end(), 0);
        order_norm = order_raw;
        auto by = [](const Eigen::VectorXd& v) {
            return [&v](int a, int b) { return v(a) > v(b) || (v(a) == v(b) && a < b); };
        };
        std::sort(order_raw.begin(), order_raw.end(), by(raw.values));
        std::sort(order_norm.begin(), order_norm.end(), by(norm.values));
        CHECK(order_raw == order_norm);
    }
}

TEST_CASE("zero gradients give zero scores through the whole chain") {
    Rng rng(56);
    const PointCloud cloud = random_cloud(rng, 30);
    const SaliencyField field =
        initial_saliency(make_acts(Eigen::MatrixXd::Random(30, 8)), make_grads(Eigen::MatrixXd::Zero(30, 3)));
    const SaliencyScore raw = saliency_score(field, cloud);
    CHECK(raw.values.cwiseAbs().maxCoeff() == 0.0);
    const SaliencyScore norm = normalize_scores(raw);
    CHECK(norm.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(norm.normalized);
}

TEST_CASE("scaling the cloud by a power of two scales raw scores by its square exactly") {
    Rng rng(57);
    const PointCloud cloud = random_cloud(rng, 25);
    Eigen::MatrixXd field(25, 3);
    for (int i = 0; i < 25; ++i)
        for (int j = 0; j < 3; ++j) field(i, j) = rng.uniform(-1, 1);

    const SaliencyScore base = saliency_score(SaliencyField{field}, cloud);
    for (double alpha : {2.0, 0.5, 4.0}) {
        PointCloud scaled = cloud;
        for (Point3& p : scaled.points) p = alpha * p;
        const SaliencyScore s = saliency_score(SaliencyField{field}, scaled);
        // held-fixed field, power-of-two alpha: every step scales exactly
        for (int i = 0; i < 25; ++i) CHECK(s.values(i) == alpha * alpha * base.values(i));
    }

    // generic scale factors hold to rounding error
    const double alpha = 1.7;
    PointCloud scaled = cloud;
    for (Point3& p : scaled.points) p = alpha * p;
    const SaliencyScore s = saliency_score(SaliencyField{field}, scaled);
    for (int i = 0; i < 25; ++i)
        CHECK(s.values(i) == Catch::Approx(alpha * alpha * base.values(i)).margin(1e-10));
}

TEST_CASE("translation invariance of the full descriptor-to-score chain") {
    Rng rng(58);
    const DescriptorModel model = DescriptorModel::seeded(4);
    for (int trial = 0; trial < 5; ++trial) {
        const PointCloud cloud = skd::testing::dyadic_cloud(rng, 20);
        const Point3 t{std::round(rng.uniform(-32, 32) * 1024.0) / 1024.0,
                       std::round(rng.uniform(-32, 32) * 1024.0) / 1024.0,
                       std::round(rng.uniform(-32, 32) * 1024.0) / 1024.0};
        PointCloud moved = cloud;
        for (Point3& p : moved.points) p = p + t;

        auto chain = [&](const PointCloud& c) {
            const LayerActivations acts = layer_activations(model, c, 4);
            const InputGradient grads = input_gradient(model, c, 4);
            return saliency_score(initial_saliency(acts, grads), c);
        };
        const SaliencyScore a = chain(cloud);
        const SaliencyScore b = chain(moved);
        CHECK(a.values == b.values);
    }
}
