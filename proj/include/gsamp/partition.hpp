#pragma once

#include "gsamp/error.hpp"
#include "gsamp/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace gsamp {

/// Assignment of nodes to N groups. Groups may overlap; a node that belongs
/// to beta_i groups is weighted by beta_i^{-1/2} in every restriction, so the
/// restrictions always form a tight frame.
class GroupPartition {
public:
    GroupPartition() = default;

    /// `groups_of_node[i]` lists the 0-based groups of node i.
    GroupPartition(Index n_groups, const std::vector<std::vector<Index>>& groups_of_node)
        : members_(static_cast<std::size_t>(n_groups))
    {
        const auto n = static_cast<Index>(groups_of_node.size());
        beta_.resize(n);
        scale_.resize(n);
        for (Index i = 0; i < n; ++i) {
            std::vector<Index> gs = groups_of_node[i];
            std::sort(gs.begin(), gs.end());
            gs.erase(std::unique(gs.begin(), gs.end()), gs.end());
            if (gs.empty()) {
                throw ValidationError("node " + std::to_string(i + 1) + " belongs to no group");
            }
            for (Index g : gs) {
                if (g < 0 || g >= n_groups) {
                    throw IndexError("group id " + std::to_string(g + 1) + " out of range for node " +
                                     std::to_string(i + 1));
                }
                members_[g].push_back(i);
            }
            beta_[i] = static_cast<int>(gs.size());
            scale_[i] = 1.0 / std::sqrt(static_cast<double>(gs.size()));
            strict_ = strict_ && gs.size() == 1;
        }
        for (Index g = 0; g < n_groups; ++g) {
            if (members_[g].empty()) {
                throw ValidationError("group " + std::to_string(g + 1) + " is empty");
            }
        }
    }

    /// Strict partition from one 0-based label per node.
    static GroupPartition from_labels(const std::vector<Index>& labels)
    {
        Index n_groups = 0;
        std::vector<std::vector<Index>> gon(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            gon[i] = {labels[i]};
            n_groups = std::max(n_groups, labels[i] + 1);
        }
        return GroupPartition(n_groups, gon);
    }

    Index node_count() const noexcept { return static_cast<Index>(beta_.size()); }
    Index group_count() const noexcept { return static_cast<Index>(members_.size()); }
    bool is_strict() const noexcept { return strict_; }

    const std::vector<Index>& members(Index group) const
    {
        check_group(group);
        return members_[group];
    }
    Index group_size(Index group) const { return static_cast<Index>(members(group).size()); }
    int beta(Index node) const { return beta_[node]; }
    /// beta_i^{-1/2} for every node.
    const Eigen::VectorXd& node_scale() const noexcept { return scale_; }

    /// Group of each node; only meaningful for strict partitions.
    std::vector<Index> labels() const
    {
        require_strict("labels");
        std::vector<Index> out(static_cast<std::size_t>(node_count()));
        for (Index g = 0; g < group_count(); ++g) {
            for (Index i : members_[g]) {
                out[i] = g;
            }
        }
        return out;
    }

    void check_group(Index group) const
    {
        if (group < 0 || group >= group_count()) {
            throw IndexError("group index " + std::to_string(group + 1) + " out of range 1.." +
                             std::to_string(group_count()));
        }
    }

    void require_strict(const char* what) const
    {
        if (!strict_) {
            throw UnsupportedError(std::string(what) + " requires non-overlapping groups");
        }
    }

private:
    std::vector<std::vector<Index>> members_;
    std::vector<int> beta_;
    Eigen::VectorXd scale_;
    bool strict_ = true;
};

/// N^(l) x: entries of x on group l in ascending node order, beta-scaled.
inline Eigen::VectorXd restrict_to_group(const Eigen::VectorXd& x, const GroupPartition& part, Index group)
{
    if (x.size() != part.node_count()) {
        throw ShapeError("restrict: signal length mismatch");
    }
    const auto& mem = part.members(group);
    Eigen::VectorXd out(static_cast<Index>(mem.size()));
    const auto& sc = part.node_scale();
    for (std::size_t r = 0; r < mem.size(); ++r) {
        out[static_cast<Index>(r)] = sc[mem[r]] * x[mem[r]];
    }
    return out;
}

/// (N^(l))^T v: zero-extends a group signal to the whole graph.
inline Eigen::VectorXd extend_from_group(const Eigen::VectorXd& v, const GroupPartition& part, Index group)
{
    const auto& mem = part.members(group);
    if (v.size() != static_cast<Index>(mem.size())) {
        throw ShapeError("extend: group signal length mismatch");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(part.node_count());
    const auto& sc = part.node_scale();
    for (std::size_t r = 0; r < mem.size(); ++r) {
        out[mem[r]] = sc[mem[r]] * v[static_cast<Index>(r)];
    }
    return out;
}

/// A x: per-group sums scaled by |N_l|^{-1/2}.
inline Eigen::VectorXd group_average(const Eigen::VectorXd& x, const GroupPartition& part)
{
    part.require_strict("group_average");
    if (x.size() != part.node_count()) {
        throw ShapeError("group_average: signal length mismatch");
    }
    Eigen::VectorXd out(part.group_count());
    for (Index g = 0; g < part.group_count(); ++g) {
        const auto& mem = part.members(g);
        double acc = 0.0;
        for (Index i : mem) {
            acc += x[i];
        }
        out[g] = acc / std::sqrt(static_cast<double>(mem.size()));
    }
    return out;
}

/// A^T z: replicates z_l / |N_l|^{1/2} over group l.
inline Eigen::VectorXd lift(const Eigen::VectorXd& z, const GroupPartition& part)
{
    part.require_strict("lift");
    if (z.size() != part.group_count()) {
        throw ShapeError("lift: reduced signal length mismatch");
    }
    Eigen::VectorXd out(part.node_count());
    for (Index g = 0; g < part.group_count(); ++g) {
        const auto& mem = part.members(g);
        const double v = z[g] / std::sqrt(static_cast<double>(mem.size()));
        for (Index i : mem) {
            out[i] = v;
        }
    }
    return out;
}

/// ||A^T A x - x|| / ||x||.
inline double piecewise_deviation(const Eigen::VectorXd& x, const GroupPartition& part)
{
    const double nx = x.norm();
    if (!(nx > 0.0)) {
        throw DomainError("piecewise_deviation: zero signal");
    }
    return (lift(group_average(x, part), part) - x).norm() / nx;
}

/// Reads n lines, line i holding the 1-based group id(s) of node i,
/// comma-separated when a node belongs to several groups.
inline GroupPartition load_partition(std::istream& in)
{
    std::vector<std::vector<Index>> gon;
    Index n_groups = 0;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') {
            continue;
        }
        std::vector<Index> gs;
        std::stringstream ss(t);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = detail::trim(tok);
            std::size_t used = 0;
            long long g = 0;
            try {
                g = std::stoll(tok, &used);
            } catch (const std::exception&) {
                throw ParseError("bad group id '" + tok + "'", lineno);
            }
            if (used != tok.size() || g < 1) {
                throw ParseError("bad group id '" + tok + "'", lineno);
            }
            gs.push_back(static_cast<Index>(g - 1));
            n_groups = std::max<Index>(n_groups, static_cast<Index>(g));
        }
        gon.push_back(std::move(gs));
    }
    return GroupPartition(n_groups, gon);
}

inline GroupPartition load_partition(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open partition file '" + path + "'");
    }
    return load_partition(in);
}

inline void save_partition(std::ostream& out, const GroupPartition& part)
{
    std::vector<std::vector<Index>> gon(static_cast<std::size_t>(part.node_count()));
    for (Index g = 0; g < part.group_count(); ++g) {
        for (Index i : part.members(g)) {
            gon[i].push_back(g);
        }
    }
    for (const auto& gs : gon) {
        for (std::size_t r = 0; r < gs.size(); ++r) {
            out << (r ? "," : "") << gs[r] + 1;
        }
        out << "\n";
    }
}

} // namespace gsamp
