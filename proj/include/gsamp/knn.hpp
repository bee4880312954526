#pragma once

#include "gsamp/error.hpp"
#include "gsamp/graph.hpp"
#include "gsamp/parallel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

namespace gsamp {

/// Row-major point set, one point per row.
using PointSet = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Neighbor {
    double dist2 = 0.0;
    Index index = 0;

    friend bool operator<(const Neighbor& a, const Neighbor& b)
    {
        return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    }
};

/// Static kd-tree over a point set for exact nearest-neighbor queries.
/// Ties in distance are broken by the smaller point index.
class KdTree {
public:
    explicit KdTree(const PointSet& points, Index leaf_size = 16) : pts_(points), leaf_size_(leaf_size)
    {
        order_.resize(static_cast<std::size_t>(pts_.rows()));
        std::iota(order_.begin(), order_.end(), Index{0});
        if (pts_.rows() > 0) {
            nodes_.reserve(static_cast<std::size_t>(2 * pts_.rows() / leaf_size_ + 2));
            build(0, pts_.rows());
        }
    }

    Index size() const noexcept { return pts_.rows(); }

    /// The k nearest points to point `query`, excluding `query` itself, in
    /// (distance, index) order.
    std::vector<Neighbor> nearest_excluding(Index query, Index k) const
    {
        std::priority_queue<Neighbor> heap;
        search(0, pts_.row(query), query, k, heap);
        std::vector<Neighbor> out(heap.size());
        for (auto it = out.rbegin(); it != out.rend(); ++it) {
            *it = heap.top();
            heap.pop();
        }
        return out;
    }

private:
    struct Node {
        Index begin = 0;
        Index end = 0;
        int axis = -1; ///< -1 marks a leaf
        double split = 0.0;
        Index left = -1;
        Index right = -1;
    };

    Index build(Index begin, Index end)
    {
        const auto id = static_cast<Index>(nodes_.size());
        nodes_.push_back(Node{begin, end});
        if (end - begin <= leaf_size_) {
            return id;
        }
        // split on the axis of largest spread
        const Index dims = pts_.cols();
        int best_axis = 0;
        double best_spread = -1.0;
        for (Index d = 0; d < dims; ++d) {
            double lo = pts_(order_[begin], d);
            double hi = lo;
            for (Index r = begin + 1; r < end; ++r) {
                lo = std::min(lo, pts_(order_[r], d));
                hi = std::max(hi, pts_(order_[r], d));
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                best_axis = static_cast<int>(d);
            }
        }
        if (best_spread <= 0.0) {
            return id; // all points coincide
        }
        const Index mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](Index a, Index b) {
            return pts_(a, best_axis) < pts_(b, best_axis);
        });
        const double split = pts_(order_[mid], best_axis);
        const Index left = build(begin, mid);
        const Index right = build(mid, end);
        auto& node = nodes_[static_cast<std::size_t>(id)];
        node.axis = best_axis;
        node.split = split;
        node.left = left;
        node.right = right;
        return id;
    }

    template <class Row>
    void search(Index node_id, const Row& q, Index self, Index k, std::priority_queue<Neighbor>& heap) const
    {
        const Node& node = nodes_[static_cast<std::size_t>(node_id)];
        if (node.axis < 0) {
            for (Index r = node.begin; r < node.end; ++r) {
                const Index p = order_[r];
                if (p == self) {
                    continue;
                }
                const Neighbor cand{(pts_.row(p) - q).squaredNorm(), p};
                if (static_cast<Index>(heap.size()) < k) {
                    heap.push(cand);
                } else if (cand < heap.top()) {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const Index near = diff < 0.0 ? node.left : node.right;
        const Index far = diff < 0.0 ? node.right : node.left;
        search(near, q, self, k, heap);
        if (static_cast<Index>(heap.size()) < k || diff * diff <= heap.top().dist2) {
            search(far, q, self, k, heap);
        }
    }

    const PointSet& pts_;
    Index leaf_size_;
    std::vector<Index> order_;
    std::vector<Node> nodes_;
};

/// Percentile with linear interpolation between closest ranks.
inline double percentile(std::vector<double> values, double pct)
{
    if (values.empty()) {
        throw DomainError("percentile: empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Floor on the Gaussian kernel width when all neighbor distances vanish.
inline constexpr double knn_sigma_floor = 1e-9;

struct KnnGraphInfo {
    double sigma = 0.0;
    Index directed_edges = 0;
};

/// k-nearest-neighbor graph with weights exp(-d^2 / sigma^2), sigma being
/// the given percentile of all neighbor distances, symmetrized by averaging.
inline SparseGraph knn_graph(const PointSet& features, Index k_nn = 9, double sigma_percentile = 25.0,
                             KnnGraphInfo* info = nullptr, unsigned threads = 0)
{
    const Index n = features.rows();
    if (n < k_nn + 1) {
        throw DomainError("knn_graph: need at least k_nn + 1 points");
    }
    const KdTree tree(features);
    std::vector<std::vector<Neighbor>> nbrs(static_cast<std::size_t>(n));
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t i) { nbrs[i] = tree.nearest_excluding(static_cast<Index>(i), k_nn); },
        threads);

    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n * k_nn));
    for (const auto& row : nbrs) {
        for (const auto& nb : row) {
            dists.push_back(std::sqrt(nb.dist2));
        }
    }
    const double sigma = std::max(percentile(dists, sigma_percentile), knn_sigma_floor);
    std::vector<Edge> directed;
    directed.reserve(dists.size());
    for (Index i = 0; i < n; ++i) {
        for (const auto& nb : nbrs[static_cast<std::size_t>(i)]) {
            const double w = std::exp(-nb.dist2 / (sigma * sigma));
            if (w > 0.0) {
                directed.push_back({i, nb.index, w});
            }
        }
    }
    if (info) {
        info->sigma = sigma;
        info->directed_edges = static_cast<Index>(directed.size());
    }
    return SparseGraph::from_directed(n, directed);
}

} // namespace gsamp
