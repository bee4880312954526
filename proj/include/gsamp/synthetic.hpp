#pragma once

#include "gsamp/error.hpp"
#include "gsamp/graph.hpp"
#include "gsamp/knn.hpp"
#include "gsamp/partition.hpp"
#include "gsamp/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace gsamp {

/// Graph together with planar node coordinates (n x 2).
struct SpatialGraph {
    SparseGraph graph;
    PointSet coords;
};

/// Path 1 - 2 - ... - n with unit weights.
inline SparseGraph path_graph(Index n)
{
    std::vector<Edge> e;
    for (Index i = 0; i + 1 < n; ++i) {
        e.push_back({i, i + 1, 1.0});
    }
    return SparseGraph(n, e);
}

/// rows x cols 4-connected lattice, node index r * cols + c.
inline SpatialGraph grid_graph(Index rows, Index cols)
{
    SpatialGraph out;
    std::vector<Edge> e;
    out.coords.resize(rows * cols, 2);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            const Index i = r * cols + c;
            out.coords(i, 0) = static_cast<double>(c);
            out.coords(i, 1) = static_cast<double>(r);
            if (c + 1 < cols) {
                e.push_back({i, i + 1, 1.0});
            }
            if (r + 1 < rows) {
                e.push_back({i, i + cols, 1.0});
            }
        }
    }
    out.graph = SparseGraph(rows * cols, e);
    return out;
}

/// Connected-component label of every node, numbered in order of first node.
inline std::vector<Index> connected_components(const SparseGraph& g, Index* count = nullptr)
{
    const Index n = g.size();
    std::vector<Index> label(static_cast<std::size_t>(n), -1);
    Index next = 0;
    std::vector<Index> stack;
    for (Index s = 0; s < n; ++s) {
        if (label[s] >= 0) {
            continue;
        }
        label[s] = next;
        stack.push_back(s);
        while (!stack.empty()) {
            const Index v = stack.back();
            stack.pop_back();
            for (Index p = g.row_ptr()[v]; p < g.row_ptr()[v + 1]; ++p) {
                const Index u = g.col_index()[p];
                if (label[u] < 0) {
                    label[u] = next;
                    stack.push_back(u);
                }
            }
        }
        ++next;
    }
    if (count) {
        *count = next;
    }
    return label;
}

namespace detail {

/// k-nearest-neighbor graph over planar points with Gaussian weights. The
/// width is the mean neighbor distance, or with `local_width` the product of
/// the two endpoints' distances to their farthest neighbor.
inline SparseGraph sensor_graph(const PointSet& coords, Index k_nn, bool local_width = false)
{
    const Index n = coords.rows();
    const KdTree tree(coords);
    std::vector<std::vector<Neighbor>> nbrs(static_cast<std::size_t>(n));
    double mean = 0.0;
    for (Index i = 0; i < n; ++i) {
        nbrs[i] = tree.nearest_excluding(i, k_nn);
        for (const auto& nb : nbrs[i]) {
            mean += std::sqrt(nb.dist2);
        }
    }
    mean /= static_cast<double>(n * k_nn);
    std::vector<double> sigma(static_cast<std::size_t>(n), mean);
    if (local_width) {
        for (Index i = 0; i < n; ++i) {
            double far2 = 0.0;
            for (const auto& nb : nbrs[i]) {
                far2 = std::max(far2, nb.dist2);
            }
            sigma[i] = far2 > 0.0 ? std::sqrt(far2) : mean;
        }
    }
    std::vector<Edge> directed;
    for (Index i = 0; i < n; ++i) {
        for (const auto& nb : nbrs[i]) {
            directed.push_back({i, nb.index, std::exp(-nb.dist2 / (sigma[i] * sigma[nb.index]))});
        }
    }
    return SparseGraph::from_directed(n, directed);
}

/// Draws points with `place` and joins them into a sensor graph, redrawing
/// (deterministically) until the graph is connected.
template <class PlaceFn>
SpatialGraph connected_sensor_graph(Index n, std::uint64_t seed, Index k_nn, bool local_width, const char* what,
                                    PlaceFn&& place)
{
    if (n < k_nn + 1) {
        throw DomainError(std::string(what) + ": need more nodes than neighbors");
    }
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
        Rng rng(derive_seed(seed, {attempt}));
        SpatialGraph out;
        out.coords.resize(n, 2);
        for (Index i = 0; i < n; ++i) {
            place(i, rng, out.coords(i, 0), out.coords(i, 1));
        }
        out.graph = sensor_graph(out.coords, k_nn, local_width);
        Index comps = 0;
        connected_components(out.graph, &comps);
        if (comps == 1) {
            return out;
        }
    }
    throw NumericalError(std::string(what) + ": no connected instance found");
}

} // namespace detail

/// Random geometric sensor network: n points uniform in the unit square,
/// each joined to its k nearest neighbors with Gaussian weights whose width
/// is the mean neighbor distance. Redrawn (deterministically) until connected.
inline SpatialGraph random_sensor_graph(Index n, std::uint64_t seed, Index k_nn = 6)
{
    return detail::connected_sensor_graph(n, seed, k_nn, false, "random_sensor_graph",
                                          [](Index, Rng& rng, double& x, double& y) {
                                              x = uniform01(rng);
                                              y = uniform01(rng);
                                          });
}

/// Sensor network with uneven density: a `dense_fraction` of the nodes fall
/// in the square [0.1, 0.4]^2, the rest uniformly in the unit square. Edge
/// widths adapt to the local density so sparse regions stay well coupled.
/// Grid cells over such a layout have very unequal local coherences.
inline SpatialGraph clustered_sensor_graph(Index n, std::uint64_t seed, double dense_fraction = 0.85,
                                           Index k_nn = 6)
{
    if (!(dense_fraction >= 0.0 && dense_fraction <= 1.0)) {
        throw DomainError("clustered_sensor_graph: dense fraction must lie in [0, 1]");
    }
    const auto dense = static_cast<Index>(std::round(dense_fraction * static_cast<double>(n)));
    return detail::connected_sensor_graph(n, seed, k_nn, true, "clustered_sensor_graph",
                                          [dense](Index i, Rng& rng, double& x, double& y) {
                                              if (i < dense) {
                                                  x = 0.1 + 0.3 * uniform01(rng);
                                                  y = 0.1 + 0.3 * uniform01(rng);
                                              } else {
                                                  x = uniform01(rng);
                                                  y = uniform01(rng);
                                              }
                                          });
}

/// Planted-partition graph: blocks of the given sizes, unit-weight edges
/// with probability p_in inside a block and p_out across blocks.
inline SparseGraph community_graph(const std::vector<Index>& sizes, double p_in, double p_out, std::uint64_t seed,
                                   std::vector<Index>* block_of = nullptr)
{
    std::vector<Index> block;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
        block.insert(block.end(), static_cast<std::size_t>(sizes[b]), static_cast<Index>(b));
    }
    const auto n = static_cast<Index>(block.size());
    Rng rng(seed);
    std::vector<Edge> e;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            const double p = block[i] == block[j] ? p_in : p_out;
            if (uniform01(rng) < p) {
                e.push_back({i, j, 1.0});
            }
        }
    }
    if (block_of) {
        *block_of = block;
    }
    return SparseGraph(n, e);
}

/// Strict partition from an axis-aligned cells_x x cells_y grid over the
/// bounding box of the coordinates. Empty cells are dropped and the rest
/// numbered in row-major cell order.
inline GroupPartition spatial_grid_partition(const PointSet& coords, Index cells_x, Index cells_y)
{
    if (cells_x < 1 || cells_y < 1) {
        throw DomainError("spatial_grid_partition: need at least one cell per axis");
    }
    const Index n = coords.rows();
    const double x0 = coords.col(0).minCoeff();
    const double x1 = coords.col(0).maxCoeff();
    const double y0 = coords.col(1).minCoeff();
    const double y1 = coords.col(1).maxCoeff();
    auto cell = [](double v, double lo, double hi, Index cells) {
        if (!(hi > lo)) {
            return Index{0};
        }
        const auto c = static_cast<Index>(std::floor((v - lo) / (hi - lo) * static_cast<double>(cells)));
        return std::clamp(c, Index{0}, cells - 1);
    };
    std::vector<Index> raw(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        raw[i] = cell(coords(i, 1), y0, y1, cells_y) * cells_x + cell(coords(i, 0), x0, x1, cells_x);
    }
    std::map<Index, Index> renumber;
    for (Index r : raw) {
        renumber.emplace(r, 0);
    }
    Index next = 0;
    for (auto& [key, val] : renumber) {
        val = next++;
    }
    for (auto& r : raw) {
        r = renumber[r];
    }
    return GroupPartition::from_labels(raw);
}

} // namespace gsamp
