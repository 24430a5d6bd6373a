#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "skd/descriptor.hpp"
#include "skd/errors.hpp"
#include "skd/geometry.hpp"
#include "skd/kdtree.hpp"
#include "skd/pca.hpp"
#include "skd/random.hpp"
#include "skd/saliency.hpp"

namespace skd {

/// Selected point indices with their scores, scores non-increasing.
struct KeypointSet {
    std::vector<int> indices;
    std::vector<double> scores;

    int size() const { return static_cast<int>(indices.size()); }
    bool empty() const { return indices.empty(); }
};

struct TrainingPair {
    PointCloud cloud_k;
    PointCloud cloud_l;
    RigidTransform truth;  // maps the cloud_k frame into the cloud_l frame
};

// ---------------------------------------------------------------------------
// context encoder: centered k-NN neighborhoods -> shared MLP -> max pool -> 2
// ---------------------------------------------------------------------------

struct ContextEncoder {
    int k = 8;
    Eigen::MatrixXd w1;  // hidden x 3
    Eigen::VectorXd b1;  // hidden
    Eigen::MatrixXd w2;  // 2 x hidden
    Eigen::VectorXd b2;  // 2

    int hidden_dim() const { return static_cast<int>(w1.rows()); }

    static ContextEncoder zeros(int k = 8, int hidden = 8) {
        ContextEncoder e;
        e.k = k;
        e.w1 = Eigen::MatrixXd::Zero(hidden, 3);
        e.b1 = Eigen::VectorXd::Zero(hidden);
        e.w2 = Eigen::MatrixXd::Zero(2, hidden);
        e.b2 = Eigen::VectorXd::Zero(2);
        return e;
    }

    static ContextEncoder seeded(std::uint64_t seed, int k = 8, int hidden = 8) {
        ContextEncoder e = zeros(k, hidden);
        Rng rng(seed);
        auto fill = [&rng](Eigen::MatrixXd& w, Eigen::VectorXd& b) {
            double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.normal(0.0, scale);
            for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = rng.normal(0.0, 0.1);
        };
        fill(e.w1, e.b1);
        fill(e.w2, e.b2);
        return e;
    }
};

// Fixed neighborhood geometry of one cloud: per point the k nearest sources
// (self included) and their query-centered offsets. Shared by every encoder
// evaluation during training, where only weights change.
struct EncoderNeighborhoods {
    std::vector<std::vector<int>> sources;       // N x k
    std::vector<Eigen::Matrix3Xd> offsets;       // N entries, 3 x k each

    int size() const { return static_cast<int>(sources.size()); }
};

inline EncoderNeighborhoods encoder_neighborhoods(const PointCloud& cloud, int k) {
    const int n = cloud.size();
    if (n < k) throw CloudTooSmall("context encoder needs at least k points, got " + std::to_string(n));
    NeighborIndex index(cloud);
    EncoderNeighborhoods nb;
    nb.sources.resize(static_cast<std::size_t>(n));
    nb.offsets.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto found = index.knn(cloud[i], k);
        auto& srcs = nb.sources[static_cast<std::size_t>(i)];
        auto& offs = nb.offsets[static_cast<std::size_t>(i)];
        srcs.reserve(found.size());
        offs.resize(3, k);
        for (int j = 0; j < k; ++j) {
            srcs.push_back(found[static_cast<std::size_t>(j)].first);
            offs.col(j) = (cloud[found[static_cast<std::size_t>(j)].first] - cloud[i]).vec();
        }
    }
    return nb;
}

struct ContextForward {
    Eigen::MatrixXd ctx;     // N x 2
    Eigen::MatrixXd pooled;  // N x hidden, tanh values at the max
    Eigen::MatrixXi argmax;  // N x hidden, neighbor slot of the max
};

inline ContextForward context_forward(const ContextEncoder& enc, const EncoderNeighborhoods& nb) {
    const int n = nb.size();
    const int hidden = enc.hidden_dim();
    ContextForward f;
    f.pooled.resize(n, hidden);
    f.argmax.resize(n, hidden);
    for (int i = 0; i < n; ++i) {
        const auto& srcs = nb.sources[static_cast<std::size_t>(i)];
        const auto& offs = nb.offsets[static_cast<std::size_t>(i)];
        const int k = static_cast<int>(srcs.size());
        Eigen::MatrixXd cand = ((enc.w1 * offs).colwise() + enc.b1).array().tanh();  // hidden x k
        for (int d = 0; d < hidden; ++d) {
            int best = 0;
            for (int j = 1; j < k; ++j) {
                if (cand(d, j) > cand(d, best) ||
                    (cand(d, j) == cand(d, best) && srcs[static_cast<std::size_t>(j)] < srcs[static_cast<std::size_t>(best)]))
                    best = j;
            }
            f.pooled(i, d) = cand(d, best);
            f.argmax(i, d) = best;
        }
    }
    f.ctx = (f.pooled * enc.w2.transpose()).rowwise() + enc.b2.transpose();
    return f;
}

/// Per-point 2-d context features; translation invariant by construction.
inline Eigen::MatrixXd context_features(const ContextEncoder& enc, const PointCloud& cloud) {
    return context_forward(enc, encoder_neighborhoods(cloud, enc.k)).ctx;
}

struct ContextGradients {
    Eigen::MatrixXd dw1;
    Eigen::VectorXd db1;
    Eigen::MatrixXd dw2;
    Eigen::VectorXd db2;

    static ContextGradients zeros_like(const ContextEncoder& e) {
        return {Eigen::MatrixXd::Zero(e.w1.rows(), e.w1.cols()), Eigen::VectorXd::Zero(e.b1.size()),
                Eigen::MatrixXd::Zero(e.w2.rows(), e.w2.cols()), Eigen::VectorXd::Zero(e.b2.size())};
    }
};

inline void accumulate_context_gradients(const ContextEncoder& enc, const EncoderNeighborhoods& nb,
                                         const ContextForward& fwd, const Eigen::MatrixXd& dctx,
                                         ContextGradients& grads) {
    const int n = nb.size();
    const int hidden = enc.hidden_dim();
    grads.dw2 += dctx.transpose() * fwd.pooled;
    grads.db2 += dctx.colwise().sum();
    Eigen::MatrixXd dpooled = dctx * enc.w2;  // N x hidden
    for (int i = 0; i < n; ++i) {
        const auto& offs = nb.offsets[static_cast<std::size_t>(i)];
        for (int d = 0; d < hidden; ++d) {
            const int j = fwd.argmax(i, d);
            const double t = fwd.pooled(i, d);
            const double g = dpooled(i, d) * (1.0 - t * t);
            grads.dw1.row(d) += g * offs.col(j).transpose();
            grads.db1(d) += g;
        }
    }
}

// ---------------------------------------------------------------------------
// keypoint head: two dense layers over [s | pca | ctx] -> 2 logits
// ---------------------------------------------------------------------------

struct KeypointHead {
    Eigen::MatrixXd w1;  // hidden x input
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // 2 x hidden
    Eigen::VectorXd b2;

    int input_dim() const { return static_cast<int>(w1.cols()); }
    int hidden_dim() const { return static_cast<int>(w1.rows()); }

    static KeypointHead zeros(int input_dim, int hidden = 16) {
        KeypointHead h;
        h.w1 = Eigen::MatrixXd::Zero(hidden, input_dim);
        h.b1 = Eigen::VectorXd::Zero(hidden);
        h.w2 = Eigen::MatrixXd::Zero(2, hidden);
        h.b2 = Eigen::VectorXd::Zero(2);
        return h;
    }

    static KeypointHead seeded(std::uint64_t seed, int input_dim, int hidden = 16) {
        KeypointHead h = zeros(input_dim, hidden);
        Rng rng(seed);
        auto fill = [&rng](Eigen::MatrixXd& w, Eigen::VectorXd& b) {
            double scale = 1.0 / std::sqrt(static_cast<double>(w.cols()));
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.normal(0.0, scale);
            for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = rng.normal(0.0, 0.1);
        };
        fill(h.w1, h.b1);
        fill(h.w2, h.b2);
        return h;
    }
};

/// Concatenates [saliency | pca features | context] row-wise.
inline Eigen::MatrixXd assemble_input(const SaliencyScore& s, const Eigen::MatrixXd& pca_feats,
                                      const Eigen::MatrixXd& ctx) {
    if (!s.normalized) throw UnnormalizedSaliency("assemble_input requires normalized saliency scores");
    const Eigen::Index n = s.values.size();
    if (pca_feats.rows() != n || ctx.rows() != n)
        throw ShapeMismatch("assemble_input: row counts differ");
    if (ctx.cols() != 2) throw ShapeMismatch("assemble_input: context features must have 2 columns");
    Eigen::MatrixXd out(n, 1 + pca_feats.cols() + ctx.cols());
    out.col(0) = s.values;
    out.middleCols(1, pca_feats.cols()) = pca_feats;
    out.rightCols(ctx.cols()) = ctx;
    return out;
}

struct HeadForward {
    Eigen::MatrixXd hidden;       // N x hidden (tanh)
    Eigen::MatrixXd logits;       // N x 2
    Eigen::VectorXd probability;  // N, softmax mass of the keypoint class (column 1)
};

inline HeadForward head_forward(const KeypointHead& head, const Eigen::MatrixXd& input) {
    if (input.cols() != head.input_dim())
        throw ShapeMismatch("head_forward: input has " + std::to_string(input.cols()) +
                            " columns, head expects " + std::to_string(head.input_dim()));
    HeadForward f;
    f.hidden = ((input * head.w1.transpose()).rowwise() + head.b1.transpose()).array().tanh();
    f.logits = (f.hidden * head.w2.transpose()).rowwise() + head.b2.transpose();
    f.probability.resize(input.rows());
    for (Eigen::Index i = 0; i < input.rows(); ++i) {
        const double m = std::max(f.logits(i, 0), f.logits(i, 1));
        const double e0 = std::exp(f.logits(i, 0) - m);
        const double e1 = std::exp(f.logits(i, 1) - m);
        f.probability(i) = e1 / (e0 + e1);
    }
    return f;
}

// ---------------------------------------------------------------------------
// correspondence labels and balanced loss
// ---------------------------------------------------------------------------

// Directional labels for one cloud: a point is positive when its
// descriptor-space nearest neighbor in the other cloud is geometrically
// correct within the radius, after ground-truth alignment.
struct LabelSet {
    std::vector<bool> positive;
    std::vector<int> matched;  // descriptor NN index into the other cloud
};

struct CorrespondenceLabels {
    LabelSet k;
    LabelSet l;

    int positives() const {
        auto count = [](const LabelSet& s) {
            return static_cast<int>(std::count(s.positive.begin(), s.positive.end(), true));
        };
        return count(k) + count(l);
    }
    int total() const { return static_cast<int>(k.positive.size() + l.positive.size()); }
    int negatives() const { return total() - positives(); }
};

namespace detail {

// row index in `haystack` nearest to `query` in descriptor space, lowest
// index on ties
inline int descriptor_nn(const Eigen::RowVectorXd& query, const Eigen::MatrixXd& haystack) {
    int best = 0;
    double best_d2 = (haystack.row(0) - query).squaredNorm();
    for (Eigen::Index j = 1; j < haystack.rows(); ++j) {
        const double d2 = (haystack.row(j) - query).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(j);
        }
    }
    return best;
}

inline LabelSet label_one_direction(const PointCloud& from, const Eigen::MatrixXd& desc_from,
                                    const PointCloud& to, const Eigen::MatrixXd& desc_to,
                                    const RigidTransform& from_to_to, double radius) {
    LabelSet out;
    out.positive.resize(static_cast<std::size_t>(from.size()));
    out.matched.resize(static_cast<std::size_t>(from.size()));
    for (int i = 0; i < from.size(); ++i) {
        const int match = descriptor_nn(desc_from.row(i), desc_to);
        const Point3 projected = from_to_to(from[i]);
        out.matched[static_cast<std::size_t>(i)] = match;
        out.positive[static_cast<std::size_t>(i)] = distance(projected, to[match]) <= radius;
    }
    return out;
}

}  // namespace detail

inline CorrespondenceLabels label_correspondences(const TrainingPair& pair, const Eigen::MatrixXd& desc_k,
                                                  const Eigen::MatrixXd& desc_l, double radius) {
    if (pair.cloud_k.empty() || pair.cloud_l.empty()) throw EmptyCloud("label_correspondences: empty cloud");
    if (desc_k.rows() != pair.cloud_k.size() || desc_l.rows() != pair.cloud_l.size())
        throw ShapeMismatch("label_correspondences: descriptors not row-aligned with clouds");
    CorrespondenceLabels labels;
    labels.k = detail::label_one_direction(pair.cloud_k, desc_k, pair.cloud_l, desc_l, pair.truth, radius);
    labels.l = detail::label_one_direction(pair.cloud_l, desc_l, pair.cloud_k, desc_k, invert(pair.truth), radius);
    return labels;
}

struct BalancedLoss {
    double loss = 0.0;
    Eigen::MatrixXd dlogits;  // N x 2
    double weight_positive = 1.0;
    double weight_negative = 1.0;
};

// Mean softmax cross entropy with the positive class weighted by the
// negative-to-positive count ratio.
inline BalancedLoss balanced_loss(const Eigen::MatrixXd& logits, const std::vector<bool>& positive,
                                  int pos_count, int neg_count) {
    const Eigen::Index n = logits.rows();
    if (static_cast<Eigen::Index>(positive.size()) != n)
        throw ShapeMismatch("balanced_loss: labels not row-aligned with logits");
    if (pos_count < 0 || neg_count < 0 || pos_count + neg_count != static_cast<int>(n))
        throw ShapeMismatch("balanced_loss: class counts do not sum to N");
    BalancedLoss out;
    out.weight_positive = static_cast<double>(neg_count) / static_cast<double>(std::max(pos_count, 1));
    out.weight_negative = 1.0;
    out.dlogits = Eigen::MatrixXd::Zero(n, 2);
    if (n == 0) return out;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool pos = positive[static_cast<std::size_t>(i)];
        const double w = pos ? out.weight_positive : out.weight_negative;
        const double m = std::max(logits(i, 0), logits(i, 1));
        const double e0 = std::exp(logits(i, 0) - m);
        const double e1 = std::exp(logits(i, 1) - m);
        const double z = e0 + e1;
        const double log_true = logits(i, pos ? 1 : 0) - (m + std::log(z));
        total += -w * log_true;
        const double p0 = e0 / z;
        const double p1 = e1 / z;
        out.dlogits(i, 0) = w * (p0 - (pos ? 0.0 : 1.0));
        out.dlogits(i, 1) = w * (p1 - (pos ? 1.0 : 0.0));
    }
    out.loss = total / static_cast<double>(n);
    out.dlogits /= static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// top-K selection
// ---------------------------------------------------------------------------

/// K highest-scored indices, ties broken by lower index; no suppression.
inline KeypointSet top_k_by_score(const Eigen::VectorXd& scores, int K) {
    const int n = static_cast<int>(scores.size());
    if (K < 1) throw std::invalid_argument("top_k_by_score: K must be >= 1");
    if (K > n) throw KTooLarge("top_k_by_score: K=" + std::to_string(K) + " exceeds N=" + std::to_string(n));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return scores(a) > scores(b) || (scores(a) == scores(b) && a < b);
    });
    KeypointSet out;
    out.indices.assign(order.begin(), order.begin() + K);
    out.scores.reserve(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) out.scores.push_back(scores(out.indices[static_cast<std::size_t>(i)]));
    return out;
}

// ---------------------------------------------------------------------------
// full detector bundle
// ---------------------------------------------------------------------------

struct SkdDetector {
    DescriptorModel descriptor;
    PcaProjection pca;
    ContextEncoder encoder;
    KeypointHead head;
    int saliency_layer = 4;
};

/// Keypoint probability of every point under the full pipeline.
inline Eigen::VectorXd keypoint_probabilities(const SkdDetector& det, const PointCloud& cloud) {
    const Eigen::MatrixXd features = describe(det.descriptor, cloud);
    const LayerActivations acts = layer_activations(det.descriptor, cloud, det.saliency_layer);
    const InputGradient grads = input_gradient(det.descriptor, cloud, det.saliency_layer);
    const SaliencyScore score = normalize_scores(saliency_score(initial_saliency(acts, grads), cloud));
    const Eigen::MatrixXd pca_feats = project_pca(det.pca, features);
    const Eigen::MatrixXd ctx = context_features(det.encoder, cloud);
    return head_forward(det.head, assemble_input(score, pca_feats, ctx)).probability;
}

inline KeypointSet detect_topk(const SkdDetector& det, const PointCloud& cloud, int K) {
    return top_k_by_score(keypoint_probabilities(det, cloud), K);
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 200;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double match_radius = 0.5;  // tau, meters
    int pretrain_epochs = 0;
    double pretrain_learning_rate = 0.02;
};

// Frozen per-pair tensors: everything that does not change while the head
// and encoder train. Saliency and PCA features come from the frozen
// descriptor exactly as they do at inference.
struct PairBatch {
    EncoderNeighborhoods nbhd_k, nbhd_l;
    Eigen::MatrixXd frozen_k, frozen_l;  // N x (1 + M): [saliency | pca]
    std::vector<bool> positive;          // stacked: cloud_k rows then cloud_l rows
    int pos_count = 0, neg_count = 0;
};

inline PairBatch make_pair_batch(const SkdDetector& det, const TrainingPair& pair, double match_radius) {
    PairBatch batch;
    batch.nbhd_k = encoder_neighborhoods(pair.cloud_k, det.encoder.k);
    batch.nbhd_l = encoder_neighborhoods(pair.cloud_l, det.encoder.k);

    auto frozen_block = [&](const PointCloud& cloud, const Eigen::MatrixXd& features) {
        const LayerActivations acts = layer_activations(det.descriptor, cloud, det.saliency_layer);
        const InputGradient grads = input_gradient(det.descriptor, cloud, det.saliency_layer);
        const SaliencyScore score = normalize_scores(saliency_score(initial_saliency(acts, grads), cloud));
        const Eigen::MatrixXd pca_feats = project_pca(det.pca, features);
        Eigen::MatrixXd block(cloud.size(), 1 + pca_feats.cols());
        block.col(0) = score.values;
        block.rightCols(pca_feats.cols()) = pca_feats;
        return block;
    };
    const Eigen::MatrixXd desc_k = describe(det.descriptor, pair.cloud_k);
    const Eigen::MatrixXd desc_l = describe(det.descriptor, pair.cloud_l);
    batch.frozen_k = frozen_block(pair.cloud_k, desc_k);
    batch.frozen_l = frozen_block(pair.cloud_l, desc_l);

    const CorrespondenceLabels labels = label_correspondences(pair, desc_k, desc_l, match_radius);
    batch.positive.reserve(labels.k.positive.size() + labels.l.positive.size());
    batch.positive.insert(batch.positive.end(), labels.k.positive.begin(), labels.k.positive.end());
    batch.positive.insert(batch.positive.end(), labels.l.positive.begin(), labels.l.positive.end());
    batch.pos_count = labels.positives();
    batch.neg_count = labels.negatives();
    return batch;
}

struct HeadGradients {
    Eigen::MatrixXd dw1;
    Eigen::VectorXd db1;
    Eigen::MatrixXd dw2;
    Eigen::VectorXd db2;

    static HeadGradients zeros_like(const KeypointHead& h) {
        return {Eigen::MatrixXd::Zero(h.w1.rows(), h.w1.cols()), Eigen::VectorXd::Zero(h.b1.size()),
                Eigen::MatrixXd::Zero(h.w2.rows(), h.w2.cols()), Eigen::VectorXd::Zero(h.b2.size())};
    }
};

struct DetectorStep {
    double loss = 0.0;
    HeadGradients head;
    ContextGradients encoder;
};

// One full-batch loss + gradient evaluation on a pair. The head is
// differentiated everywhere; the encoder receives gradient through the
// context columns of the assembled input.
inline DetectorStep detector_loss_gradients(const KeypointHead& head, const ContextEncoder& encoder,
                                            const PairBatch& batch) {
    const int n_k = batch.nbhd_k.size();
    const int n_l = batch.nbhd_l.size();
    const ContextForward ctx_k = context_forward(encoder, batch.nbhd_k);
    const ContextForward ctx_l = context_forward(encoder, batch.nbhd_l);

    Eigen::MatrixXd input(n_k + n_l, batch.frozen_k.cols() + 2);
    input.topRows(n_k) << batch.frozen_k, ctx_k.ctx;
    input.bottomRows(n_l) << batch.frozen_l, ctx_l.ctx;

    const HeadForward fwd = head_forward(head, input);
    const BalancedLoss bl = balanced_loss(fwd.logits, batch.positive, batch.pos_count, batch.neg_count);

    DetectorStep step;
    step.loss = bl.loss;
    step.head = HeadGradients::zeros_like(head);
    step.encoder = ContextGradients::zeros_like(encoder);

    step.head.dw2 = bl.dlogits.transpose() * fwd.hidden;
    step.head.db2 = bl.dlogits.colwise().sum();
    const Eigen::MatrixXd dhidden = bl.dlogits * head.w2;
    const Eigen::MatrixXd dz1 = dhidden.cwiseProduct((1.0 - fwd.hidden.array().square()).matrix());
    step.head.dw1 = dz1.transpose() * input;
    step.head.db1 = dz1.colwise().sum();
    const Eigen::MatrixXd dinput = dz1 * head.w1;

    const Eigen::MatrixXd dctx = dinput.rightCols(2);
    accumulate_context_gradients(encoder, batch.nbhd_k, ctx_k, dctx.topRows(n_k), step.encoder);
    accumulate_context_gradients(encoder, batch.nbhd_l, ctx_l, dctx.bottomRows(n_l), step.encoder);
    return step;
}

namespace detail {

struct Momentum {
    ContextGradients enc;
    HeadGradients head;
};

inline void apply_update(KeypointHead& head, ContextEncoder& enc, const DetectorStep& step, Momentum& vel,
                         double lr, double mu) {
    auto roll = [&](Eigen::MatrixXd& v, const Eigen::MatrixXd& g, Eigen::MatrixXd& w) {
        v = mu * v - lr * g;
        w += v;
    };
    auto roll_v = [&](Eigen::VectorXd& v, const Eigen::VectorXd& g, Eigen::VectorXd& w) {
        v = mu * v - lr * g;
        w += v;
    };
    roll(vel.head.dw1, step.head.dw1, head.w1);
    roll_v(vel.head.db1, step.head.db1, head.b1);
    roll(vel.head.dw2, step.head.dw2, head.w2);
    roll_v(vel.head.db2, step.head.db2, head.b2);
    roll(vel.enc.dw1, step.encoder.dw1, enc.w1);
    roll_v(vel.enc.db1, step.encoder.db1, enc.b1);
    roll(vel.enc.dw2, step.encoder.dw2, enc.w2);
    roll_v(vel.enc.db2, step.encoder.db2, enc.b2);
}

// planarity (l2-l3)/l1 and sphericity l3/l1 of the centroid-centered
// neighborhood scatter; the encoder pretraining regression target
inline Eigen::MatrixXd geometric_targets(const EncoderNeighborhoods& nb) {
    Eigen::MatrixXd targets(nb.size(), 2);
    for (int i = 0; i < nb.size(); ++i) {
        const Eigen::Matrix3Xd& offs = nb.offsets[static_cast<std::size_t>(i)];
        const Eigen::Vector3d centroid = offs.rowwise().mean();
        const Eigen::Matrix3Xd centered = offs.colwise() - centroid;
        const Eigen::Matrix3d scatter = centered * centered.transpose() / static_cast<double>(offs.cols());
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(scatter);
        const double l3 = std::max(0.0, solver.eigenvalues()(0));
        const double l2 = std::max(0.0, solver.eigenvalues()(1));
        const double l1 = std::max(solver.eigenvalues()(2), 1e-12);
        targets(i, 0) = (l2 - l3) / l1;
        targets(i, 1) = l3 / l1;
    }
    return targets;
}

}  // namespace detail

// Encoder warm-up on a local-shape regression before end-to-end training.
// Returns the per-epoch mean squared error trace.
inline std::vector<double> pretrain_encoder(ContextEncoder& enc, const std::vector<PairBatch>& batches,
                                            int epochs, double lr, double mu = 0.9) {
    std::vector<const EncoderNeighborhoods*> sets;
    for (const PairBatch& b : batches) {
        sets.push_back(&b.nbhd_k);
        sets.push_back(&b.nbhd_l);
    }
    std::vector<Eigen::MatrixXd> targets;
    targets.reserve(sets.size());
    for (const auto* nb : sets) targets.push_back(detail::geometric_targets(*nb));

    ContextGradients vel = ContextGradients::zeros_like(enc);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(epochs));
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t s = 0; s < sets.size(); ++s) {
            const ContextForward fwd = context_forward(enc, *sets[s]);
            const Eigen::MatrixXd diff = fwd.ctx - targets[s];
            const double count = static_cast<double>(diff.rows());
            epoch_loss += diff.squaredNorm() / count;
            ContextGradients grads = ContextGradients::zeros_like(enc);
            accumulate_context_gradients(enc, *sets[s], fwd, (2.0 / count) * diff, grads);
            vel.dw1 = mu * vel.dw1 - lr * grads.dw1;
            enc.w1 += vel.dw1;
            vel.db1 = mu * vel.db1 - lr * grads.db1;
            enc.b1 += vel.db1;
            vel.dw2 = mu * vel.dw2 - lr * grads.dw2;
            enc.w2 += vel.dw2;
            vel.db2 = mu * vel.db2 - lr * grads.db2;
            enc.b2 += vel.db2;
        }
        trace.push_back(epoch_loss / static_cast<double>(sets.size()));
    }
    return trace;
}

// End-to-end training of head + encoder on precomputed pair batches:
// full-batch momentum gradient descent, one step per pair per epoch.
// Deterministic: no randomness beyond the caller's seeded initialization.
inline std::vector<double> train(KeypointHead& head, ContextEncoder& encoder,
                                 const std::vector<PairBatch>& batches, const TrainConfig& cfg) {
    if (batches.empty()) throw EmptyInput("train: no training pairs");
    if (cfg.pretrain_epochs > 0)
        pretrain_encoder(encoder, batches, cfg.pretrain_epochs, cfg.pretrain_learning_rate, cfg.momentum);
    detail::Momentum vel{ContextGradients::zeros_like(encoder), HeadGradients::zeros_like(head)};
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (const PairBatch& batch : batches) {
            const DetectorStep step = detector_loss_gradients(head, encoder, batch);
            epoch_loss += step.loss;
            detail::apply_update(head, encoder, step, vel, cfg.learning_rate, cfg.momentum);
        }
        trace.push_back(epoch_loss / static_cast<double>(batches.size()));
    }
    return trace;
}

/// Convenience wrapper operating on raw training pairs with the detector's
/// frozen descriptor and PCA.
inline std::vector<double> train_detector(SkdDetector& det, const std::vector<TrainingPair>& pairs,
                                          const TrainConfig& cfg) {
    std::vector<PairBatch> batches;
    batches.reserve(pairs.size());
    for (const TrainingPair& pair : pairs) batches.push_back(make_pair_batch(det, pair, cfg.match_radius));
    return train(det.head, det.encoder, batches, cfg);
}

}  // namespace skd
