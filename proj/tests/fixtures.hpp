#pragma once

#include "gsamp/graph.hpp"
#include "gsamp/partition.hpp"
#include "gsamp/random.hpp"
#include "gsamp/synthetic.hpp"

#include <memory>
#include <sstream>

namespace fixtures {

inline std::shared_ptr<const gsamp::SparseGraph> p4()
{
    return std::make_shared<const gsamp::SparseGraph>(gsamp::path_graph(4));
}

inline gsamp::Laplacian p4_laplacian()
{
    return gsamp::build_laplacian(p4(), gsamp::LaplacianVariant::combinatorial);
}

/// Groups {1,2}, {3,4}.
inline gsamp::GroupPartition p4_halves()
{
    return gsamp::GroupPartition::from_labels({0, 0, 1, 1});
}

/// Random connected graph: a ring plus random chords with random weights.
inline std::shared_ptr<const gsamp::SparseGraph> random_graph(gsamp::Index n, std::uint64_t seed)
{
    gsamp::Rng rng(seed);
    std::vector<gsamp::Edge> e;
    for (gsamp::Index i = 0; i < n; ++i) {
        e.push_back({i, (i + 1) % n, 0.5 + gsamp::uniform01(rng)});
    }
    for (gsamp::Index c = 0; c < 2 * n; ++c) {
        const auto i = static_cast<gsamp::Index>(gsamp::uniform01(rng) * n);
        const auto j = static_cast<gsamp::Index>(gsamp::uniform01(rng) * n);
        e.push_back({i, j, gsamp::uniform01(rng)});
    }
    return std::make_shared<const gsamp::SparseGraph>(n, e);
}

/// Random strict partition into at most `groups` nonempty groups.
inline gsamp::GroupPartition random_partition(gsamp::Index n, gsamp::Index groups, std::uint64_t seed)
{
    gsamp::Rng rng(seed);
    std::vector<gsamp::Index> lab(static_cast<std::size_t>(n));
    for (gsamp::Index i = 0; i < n; ++i) {
        lab[i] = i < groups ? i : static_cast<gsamp::Index>(gsamp::uniform01(rng) * groups);
    }
    return gsamp::GroupPartition::from_labels(lab);
}

/// Random overlapping partition: every node in 1..3 random groups.
inline gsamp::GroupPartition random_overlapping(gsamp::Index n, gsamp::Index groups, std::uint64_t seed)
{
    gsamp::Rng rng(seed);
    std::vector<std::vector<gsamp::Index>> gon(static_cast<std::size_t>(n));
    for (gsamp::Index i = 0; i < n; ++i) {
        if (i < groups) {
            gon[i].push_back(i);
        }
        const int extra = 1 + static_cast<int>(gsamp::uniform01(rng) * 3);
        for (int c = 0; c < extra; ++c) {
            gon[i].push_back(static_cast<gsamp::Index>(gsamp::uniform01(rng) * groups));
        }
    }
    return gsamp::GroupPartition(groups, gon);
}

inline gsamp::SparseGraph graph_from_text(const std::string& text)
{
    std::istringstream in(text);
    return gsamp::load_graph(in, gsamp::GraphFormat::edge_list);
}

} // namespace fixtures
