#pragma once

// Exact k-nearest-neighbor search. Kd-tree results are defined to equal a
// linear scan ordered by (squared distance, index) — candidates at exactly
// the current worst distance are still visited (pruning is strict), so the
// lowest-index tie rule holds exactly.

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ltm/core.hpp"
#include "ltm/parallel.hpp"

namespace ltm {

class KdTree {
  public:
    explicit KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
        order_.resize(points_.size());
        for (size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int32_t>(i);
        nodes_.reserve(points_.size() * 2 / kLeafSize + 2);
        if (!points_.empty()) build(0, static_cast<int32_t>(points_.size()));
    }

    int64_t size() const { return static_cast<int64_t>(points_.size()); }

    // k nearest to q, ascending (d2, index). idx/d2 are overwritten.
    void query(const Vec3& q, int k, std::vector<int32_t>& idx, std::vector<float>& d2) const {
        if (k < 1 || k > size())
            throw std::runtime_error("knn: k must be in [1, " + std::to_string(size()) + "]");
        Search s;
        s.k = k;
        s.heap.reserve(k);
        search(0, q, s);
        std::sort(s.heap.begin(), s.heap.end());
        idx.resize(k);
        d2.resize(k);
        for (int i = 0; i < k; ++i) {
            d2[i] = s.heap[i].first;
            idx[i] = s.heap[i].second;
        }
    }

  private:
    static constexpr int kLeafSize = 8;

    struct Node {
        float split = 0;
        int32_t axis = -1;   // -1: leaf
        int32_t left = -1;   // child node or begin (leaf)
        int32_t right = -1;  // child node or end (leaf)
    };

    using Entry = std::pair<float, int32_t>;  // (d2, index), lexicographic order

    struct Search {
        int k = 0;
        std::vector<Entry> heap;  // max-heap on Entry
    };

    int32_t build(int32_t begin, int32_t end) {
        int32_t id = static_cast<int32_t>(nodes_.size());
        nodes_.emplace_back();
        if (end - begin <= kLeafSize) {
            // Deterministic leaf membership regardless of partition history.
            std::sort(order_.begin() + begin, order_.begin() + end);
            nodes_[id].axis = -1;
            nodes_[id].left = begin;
            nodes_[id].right = end;
            return id;
        }
        AABB box;
        for (int32_t i = begin; i < end; ++i) box.grow(points_[order_[i]]);
        int axis = box.longest_axis();
        int32_t mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](int32_t a, int32_t b) {
                             float pa = points_[a][axis], pb = points_[b][axis];
                             return pa < pb || (pa == pb && a < b);
                         });
        float split = points_[order_[mid]][axis];
        int32_t left = build(begin, mid);
        int32_t right = build(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void offer(Search& s, float d2, int32_t index) const {
        Entry e{d2, index};
        if (static_cast<int>(s.heap.size()) < s.k) {
            s.heap.push_back(e);
            std::push_heap(s.heap.begin(), s.heap.end());
        } else if (e < s.heap.front()) {
            std::pop_heap(s.heap.begin(), s.heap.end());
            s.heap.back() = e;
            std::push_heap(s.heap.begin(), s.heap.end());
        }
    }

    void search(int32_t node_id, const Vec3& q, Search& s) const {
        const Node& nd = nodes_[node_id];
        if (nd.axis < 0) {
            for (int32_t i = nd.left; i < nd.right; ++i) {
                int32_t pi = order_[i];
                offer(s, length_squared(points_[pi] - q), pi);
            }
            return;
        }
        float delta = q[nd.axis] - nd.split;
        int32_t near = delta < 0 ? nd.left : nd.right;
        int32_t far = delta < 0 ? nd.right : nd.left;
        search(near, q, s);
        // Strict comparison: equal-distance candidates in the far half must
        // still be visited so index tie-breaking stays exact.
        if (static_cast<int>(s.heap.size()) < s.k || delta * delta <= s.heap.front().first)
            search(far, q, s);
    }

    std::vector<Vec3> points_;
    std::vector<int32_t> order_;
    std::vector<Node> nodes_;
};

struct KnnResult {
    std::vector<int32_t> indices;    // queries x k, row-major
    std::vector<float> distances;    // Euclidean (not squared)
    int k = 0;
};

inline KnnResult knn(std::span<const Vec3> targets, std::span<const Vec3> queries, int k) {
    if (k < 1 || k > static_cast<int64_t>(targets.size()))
        throw std::runtime_error("knn: k=" + std::to_string(k) + " exceeds target count " +
                                 std::to_string(targets.size()));
    KdTree tree(targets);
    KnnResult out;
    out.k = k;
    out.indices.resize(queries.size() * static_cast<size_t>(k));
    out.distances.resize(queries.size() * static_cast<size_t>(k));
    parallel_for_ranges(static_cast<int64_t>(queries.size()), [&](int64_t lo, int64_t hi) {
        std::vector<int32_t> idx;
        std::vector<float> d2;
        for (int64_t qi = lo; qi < hi; ++qi) {
            tree.query(queries[qi], k, idx, d2);
            for (int i = 0; i < k; ++i) {
                out.indices[qi * k + i] = idx[i];
                out.distances[qi * k + i] = std::sqrt(d2[i]);
            }
        }
    });
    return out;
}

}  // namespace ltm
