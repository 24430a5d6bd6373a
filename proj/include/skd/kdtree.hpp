#pragma once

#include <algorithm>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "skd/errors.hpp"
#include "skd/geometry.hpp"

namespace skd {

// Exact k-d tree over one cloud. Queries answer in source-cloud indices and
// break distance ties by the lowest index, so results are reproducible.
class NeighborIndex {
public:
    explicit NeighborIndex(const PointCloud& cloud) : points_(cloud.points) {
        if (points_.empty()) throw EmptyCloud("NeighborIndex over empty cloud");
        order_.resize(points_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
        nodes_.reserve(2 * points_.size() / kLeafSize + 2);
        root_ = build(0, static_cast<int>(points_.size()));
    }

    int size() const { return static_cast<int>(points_.size()); }
    const Point3& point(int i) const { return points_[static_cast<std::size_t>(i)]; }

    // globally nearest point; ties broken by lowest index
    std::pair<int, double> nearest(const Point3& q) const {
        Best best{-1, std::numeric_limits<double>::infinity()};
        search_nearest(root_, q, best);
        return {best.index, std::sqrt(best.d2)};
    }

    // k nearest ordered by (distance, index); requires 1 <= k <= size()
    std::vector<std::pair<int, double>> knn(const Point3& q, int k) const {
        if (k < 1 || k > size()) throw KTooLarge("knn: k out of range");
        // max-heap keyed by (d2, index) so the current worst is on top
        std::priority_queue<Cand, std::vector<Cand>, CandLess> heap;
        search_knn(root_, q, k, heap);
        std::vector<std::pair<int, double>> out(static_cast<std::size_t>(k));
        for (int i = k - 1; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = {heap.top().index, std::sqrt(heap.top().d2)};
            heap.pop();
        }
        return out;
    }

    // all indices with distance <= radius, ascending index
    std::vector<int> radius(const Point3& q, double r) const {
        std::vector<int> out;
        if (r < 0.0) return out;
        search_radius(root_, q, r * r, out);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    static constexpr int kLeafSize = 16;

    struct Node {
        int begin = 0, end = 0;    // leaf: range in order_
        int axis = -1;             // -1 marks a leaf
        double split = 0.0;
        int left = -1, right = -1;
    };

    struct Best {
        int index;
        double d2;
    };

    struct Cand {
        double d2;
        int index;
    };
    struct CandLess {  // "less" for the heap: worse candidates compare greater
        bool operator()(const Cand& a, const Cand& b) const {
            return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index);
        }
    };

    int build(int begin, int end) {
        Node node;
        node.begin = begin;
        node.end = end;
        if (end - begin > kLeafSize) {
            // split the widest axis at the median
            Point3 lo = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(begin)])];
            Point3 hi = lo;
            for (int i = begin + 1; i < end; ++i) {
                const Point3& p = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])];
                for (int j = 0; j < 3; ++j) {
                    lo[j] = std::min(lo[j], p[j]);
                    hi[j] = std::max(hi[j], p[j]);
                }
            }
            int axis = 0;
            double spread = hi[0] - lo[0];
            for (int j = 1; j < 3; ++j)
                if (hi[j] - lo[j] > spread) {
                    spread = hi[j] - lo[j];
                    axis = j;
                }
            if (spread > 0.0) {
                int mid = begin + (end - begin) / 2;
                std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                                 [&](int a, int b) {
                                     double va = points_[static_cast<std::size_t>(a)][axis];
                                     double vb = points_[static_cast<std::size_t>(b)][axis];
                                     return va < vb || (va == vb && a < b);
                                 });
                node.axis = axis;
                node.split = points_[static_cast<std::size_t>(order_[static_cast<std::size_t>(mid)])][axis];
                nodes_.push_back(node);
                int self = static_cast<int>(nodes_.size()) - 1;
                int left = build(begin, mid);
                int right = build(mid, end);
                nodes_[static_cast<std::size_t>(self)].left = left;
                nodes_[static_cast<std::size_t>(self)].right = right;
                return self;
            }
            // all points coincide: keep as one leaf
        }
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }

    void scan_leaf(const Node& node, const Point3& q, Best& best) const {
        for (int i = node.begin; i < node.end; ++i) {
            int idx = order_[static_cast<std::size_t>(i)];
            double d2 = squared_distance(points_[static_cast<std::size_t>(idx)], q);
            if (d2 < best.d2 || (d2 == best.d2 && idx < best.index)) best = {idx, d2};
        }
    }

    void search_nearest(int ni, const Point3& q, Best& best) const {
        const Node& node = nodes_[static_cast<std::size_t>(ni)];
        if (node.axis < 0) {
            scan_leaf(node, q, best);
            return;
        }
        double diff = q[node.axis] - node.split;
        int near = diff < 0.0 ? node.left : node.right;
        int far = diff < 0.0 ? node.right : node.left;
        search_nearest(near, q, best);
        // ties must still visit the far side: an equally distant point there
        // can carry a lower index
        if (diff * diff <= best.d2) search_nearest(far, q, best);
    }

    template <typename Heap>
    void push_candidate(Heap& heap, int k, const Cand& c) const {
        if (static_cast<int>(heap.size()) < k) {
            heap.push(c);
        } else if (CandLess{}(c, heap.top())) {
            heap.pop();
            heap.push(c);
        }
    }

    template <typename Heap>
    void search_knn(int ni, const Point3& q, int k, Heap& heap) const {
        const Node& node = nodes_[static_cast<std::size_t>(ni)];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                int idx = order_[static_cast<std::size_t>(i)];
                push_candidate(heap, k, Cand{squared_distance(points_[static_cast<std::size_t>(idx)], q), idx});
            }
            return;
        }
        double diff = q[node.axis] - node.split;
        int near = diff < 0.0 ? node.left : node.right;
        int far = diff < 0.0 ? node.right : node.left;
        search_knn(near, q, k, heap);
        if (static_cast<int>(heap.size()) < k || diff * diff <= heap.top().d2) search_knn(far, q, k, heap);
    }

    void search_radius(int ni, const Point3& q, double r2, std::vector<int>& out) const {
        const Node& node = nodes_[static_cast<std::size_t>(ni)];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                int idx = order_[static_cast<std::size_t>(i)];
                if (squared_distance(points_[static_cast<std::size_t>(idx)], q) <= r2) out.push_back(idx);
            }
            return;
        }
        double diff = q[node.axis] - node.split;
        int near = diff < 0.0 ? node.left : node.right;
        int far = diff < 0.0 ? node.right : node.left;
        search_radius(near, q, r2, out);
        if (diff * diff <= r2) search_radius(far, q, r2, out);
    }

    std::vector<Point3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

inline NeighborIndex build_index(const PointCloud& cloud) { return NeighborIndex(cloud); }

inline std::pair<int, double> nearest(const NeighborIndex& index, const Point3& q) { return index.nearest(q); }

}  // namespace skd
