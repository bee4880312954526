#pragma once

#include "gsamp/error.hpp"
#include "gsamp/partition.hpp"
#include "gsamp/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace gsamp {

enum class Provenance { uniform, p_star, q_star, p_bar, q_bar, custom };

inline std::string to_string(Provenance p)
{
    switch (p) {
    case Provenance::uniform: return "uniform";
    case Provenance::p_star: return "p_star";
    case Provenance::q_star: return "q_star";
    case Provenance::p_bar: return "p_bar";
    case Provenance::q_bar: return "q_bar";
    case Provenance::custom: return "custom";
    }
    return "custom";
}

inline Provenance provenance_from_string(const std::string& s)
{
    if (s == "uniform") return Provenance::uniform;
    if (s == "p_star") return Provenance::p_star;
    if (s == "q_star") return Provenance::q_star;
    if (s == "p_bar") return Provenance::p_bar;
    if (s == "q_bar") return Provenance::q_bar;
    if (s == "custom") return Provenance::custom;
    throw ValidationError("unknown distribution '" + s + "'");
}

/// Strictly positive probability vector over the N groups.
class SamplingDistribution {
public:
    SamplingDistribution() = default;

    SamplingDistribution(Eigen::VectorXd probs, Provenance provenance = Provenance::custom)
        : probs_(std::move(probs)), provenance_(provenance)
    {
        if (probs_.size() == 0) {
            throw ValidationError("empty distribution");
        }
        for (Index l = 0; l < probs_.size(); ++l) {
            if (!(probs_[l] > 0.0) || !std::isfinite(probs_[l])) {
                throw ValidationError("distribution entry " + std::to_string(l + 1) + " is not strictly positive");
            }
        }
        if (std::abs(probs_.sum() - 1.0) > 1e-12 * static_cast<double>(probs_.size())) {
            throw ValidationError("distribution does not sum to 1");
        }
    }

    /// Normalizes nonnegative weights; entries below `floor` are raised to it first.
    static SamplingDistribution normalized(const Eigen::VectorXd& weights, Provenance provenance,
                                           double floor = 0.0)
    {
        Eigen::VectorXd w = weights.cwiseMax(floor);
        const double total = w.sum();
        if (!(total > 0.0) || !std::isfinite(total)) {
            throw DomainError("cannot normalize a distribution with zero total mass");
        }
        return SamplingDistribution(w / total, provenance);
    }

    static SamplingDistribution uniform(Index n_groups)
    {
        return SamplingDistribution(Eigen::VectorXd::Constant(n_groups, 1.0 / static_cast<double>(n_groups)),
                                    Provenance::uniform);
    }

    Index size() const noexcept { return probs_.size(); }
    double operator[](Index l) const { return probs_[l]; }
    const Eigen::VectorXd& probs() const noexcept { return probs_; }
    Provenance provenance() const noexcept { return provenance_; }

    /// Groups whose power iteration hit its cap (p_bar only).
    int unconverged_groups = 0;

private:
    Eigen::VectorXd probs_;
    Provenance provenance_ = Provenance::custom;
};

inline double total_variation(const SamplingDistribution& a, const SamplingDistribution& b)
{
    if (a.size() != b.size()) {
        throw ShapeError("total_variation: size mismatch");
    }
    return 0.5 * (a.probs() - b.probs()).cwiseAbs().sum();
}

/// "group_id,probability" CSV with a header line.
inline std::string distribution_to_csv(const SamplingDistribution& d)
{
    std::ostringstream out;
    out << "group_id,probability\n" << std::setprecision(17);
    for (Index l = 0; l < d.size(); ++l) {
        out << l + 1 << ',' << d[l] << '\n';
    }
    return out.str();
}

inline SamplingDistribution distribution_from_csv(std::istream& in, Provenance provenance = Provenance::custom)
{
    std::vector<double> probs;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t.rfind("group_id", 0) == 0) {
            continue;
        }
        const auto comma = t.find(',');
        if (comma == std::string::npos) {
            throw ParseError("expected 'group_id,probability'", lineno);
        }
        long long id = 0;
        double p = 0.0;
        try {
            id = std::stoll(t.substr(0, comma));
            p = std::stod(t.substr(comma + 1));
        } catch (const std::exception&) {
            throw ParseError("expected 'group_id,probability'", lineno);
        }
        if (id != static_cast<long long>(probs.size()) + 1) {
            throw ParseError("group ids must be consecutive from 1", lineno);
        }
        probs.push_back(p);
    }
    return SamplingDistribution(Eigen::Map<Eigen::VectorXd>(probs.data(), static_cast<Index>(probs.size())),
                                provenance);
}

/// Ordered multiset of s group indices (0-based) drawn i.i.d. from `dist`.
struct SampleDraw {
    std::vector<Index> omega;
    SamplingDistribution dist;

    Index s() const noexcept { return static_cast<Index>(omega.size()); }

    /// Total number of sampled nodes, sum of the drawn group sizes.
    Index m(const GroupPartition& part) const
    {
        Index total = 0;
        for (Index g : omega) {
            total += part.group_size(g);
        }
        return total;
    }

    /// Number of times each group was drawn.
    std::vector<Index> multiplicity(Index n_groups) const
    {
        std::vector<Index> c(static_cast<std::size_t>(n_groups), 0);
        for (Index g : omega) {
            ++c[g];
        }
        return c;
    }
};

/// Draws s groups independently, with replacement, from `dist`.
inline SampleDraw draw_groups(const SamplingDistribution& dist, Index s, std::uint64_t seed)
{
    if (s < 0) {
        throw DomainError("draw_groups: negative draw count");
    }
    std::vector<double> cdf(static_cast<std::size_t>(dist.size()));
    std::partial_sum(dist.probs().begin(), dist.probs().end(), cdf.begin());
    Rng rng(seed);
    SampleDraw draw{{}, dist};
    draw.omega.reserve(static_cast<std::size_t>(s));
    for (Index j = 0; j < s; ++j) {
        const double u = uniform01(rng) * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) {
            --it;
        }
        draw.omega.push_back(static_cast<Index>(it - cdf.begin()));
    }
    return draw;
}

/// Matrix-free realization of the sampling operators attached to a draw:
///   M  (m x n)  stacks N^(omega_1), ..., N^(omega_s)
///   P  (m x m)  block diagonal, p_{omega_j}^{-1/2} on block j
///   At (s x m)  sums block j scaled by |N_{omega_j}|^{-1/2}
///   Mt (s x N)  selects entry omega_j of a reduced signal
///   Pt (s x s)  diagonal p_{omega_j}^{-1/2}
/// Rows of M follow draw order, then ascending node order within a group.
class SampleOperators {
public:
    SampleOperators(std::shared_ptr<const GroupPartition> part, SampleDraw draw)
        : part_(std::move(part)), draw_(std::move(draw))
    {
        if (draw_.dist.size() != part_->group_count()) {
            throw ShapeError("distribution size does not match the group count");
        }
        offsets_.reserve(draw_.omega.size() + 1);
        offsets_.push_back(0);
        for (Index g : draw_.omega) {
            part_->check_group(g);
            offsets_.push_back(offsets_.back() + part_->group_size(g));
        }
    }

    SampleOperators(const GroupPartition& part, SampleDraw draw)
        : SampleOperators(std::make_shared<const GroupPartition>(part), std::move(draw))
    {
    }

    const GroupPartition& partition() const noexcept { return *part_; }
    const SampleDraw& draw() const noexcept { return draw_; }
    Index n() const noexcept { return part_->node_count(); }
    Index m() const noexcept { return offsets_.back(); }
    Index s() const noexcept { return draw_.s(); }
    Index group_count() const noexcept { return part_->group_count(); }
    /// Row offset of block j in M; block j spans [offset(j), offset(j+1)).
    Index offset(Index j) const { return offsets_[static_cast<std::size_t>(j)]; }

    Eigen::VectorXd M(const Eigen::VectorXd& x) const
    {
        check(x, n(), "M");
        Eigen::VectorXd y(m());
        const auto& sc = part_->node_scale();
        for (Index j = 0; j < s(); ++j) {
            const auto& mem = part_->members(draw_.omega[j]);
            for (std::size_t r = 0; r < mem.size(); ++r) {
                y[offset(j) + static_cast<Index>(r)] = sc[mem[r]] * x[mem[r]];
            }
        }
        return y;
    }

    Eigen::VectorXd Mt(const Eigen::VectorXd& y) const
    {
        check(y, m(), "M^T");
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n());
        const auto& sc = part_->node_scale();
        for (Index j = 0; j < s(); ++j) {
            const auto& mem = part_->members(draw_.omega[j]);
            for (std::size_t r = 0; r < mem.size(); ++r) {
                x[mem[r]] += sc[mem[r]] * y[offset(j) + static_cast<Index>(r)];
            }
        }
        return x;
    }

    /// P is diagonal, hence self-adjoint.
    Eigen::VectorXd P(const Eigen::VectorXd& y) const
    {
        check(y, m(), "P");
        Eigen::VectorXd out(m());
        for (Index j = 0; j < s(); ++j) {
            const double w = 1.0 / std::sqrt(draw_.dist[draw_.omega[j]]);
            out.segment(offset(j), offset(j + 1) - offset(j)) = w * y.segment(offset(j), offset(j + 1) - offset(j));
        }
        return out;
    }

    Eigen::VectorXd PM(const Eigen::VectorXd& x) const { return P(M(x)); }

    Eigen::VectorXd Atilde(const Eigen::VectorXd& y) const
    {
        check(y, m(), "A~");
        Eigen::VectorXd out(s());
        for (Index j = 0; j < s(); ++j) {
            const Index len = offset(j + 1) - offset(j);
            out[j] = y.segment(offset(j), len).sum() / std::sqrt(static_cast<double>(len));
        }
        return out;
    }

    Eigen::VectorXd Atilde_t(const Eigen::VectorXd& v) const
    {
        check(v, s(), "A~^T");
        Eigen::VectorXd out(m());
        for (Index j = 0; j < s(); ++j) {
            const Index len = offset(j + 1) - offset(j);
            out.segment(offset(j), len).setConstant(v[j] / std::sqrt(static_cast<double>(len)));
        }
        return out;
    }

    Eigen::VectorXd Mtilde(const Eigen::VectorXd& z) const
    {
        check(z, group_count(), "M~");
        Eigen::VectorXd out(s());
        for (Index j = 0; j < s(); ++j) {
            out[j] = z[draw_.omega[j]];
        }
        return out;
    }

    Eigen::VectorXd Mtilde_t(const Eigen::VectorXd& v) const
    {
        check(v, s(), "M~^T");
        Eigen::VectorXd out = Eigen::VectorXd::Zero(group_count());
        for (Index j = 0; j < s(); ++j) {
            out[draw_.omega[j]] += v[j];
        }
        return out;
    }

    Eigen::VectorXd Ptilde(const Eigen::VectorXd& v) const
    {
        check(v, s(), "P~");
        Eigen::VectorXd out(s());
        for (Index j = 0; j < s(); ++j) {
            out[j] = v[j] / std::sqrt(draw_.dist[draw_.omega[j]]);
        }
        return out;
    }

    /// Upper bound on ||PM||_2: max over drawn groups of sqrt(multiplicity / p_l).
    /// Exact for non-overlapping groups.
    double pm_norm_bound() const
    {
        const auto mult = draw_.multiplicity(group_count());
        double best = 0.0;
        for (Index l = 0; l < group_count(); ++l) {
            if (mult[l] > 0) {
                best = std::max(best, std::sqrt(static_cast<double>(mult[l]) / draw_.dist[l]));
            }
        }
        return best;
    }

private:
    static void check(const Eigen::VectorXd& v, Index expected, const char* op)
    {
        if (v.size() != expected) {
            throw ShapeError(std::string("sample operator ") + op + ": expected length " +
                             std::to_string(expected) + ", got " + std::to_string(v.size()));
        }
    }

    std::shared_ptr<const GroupPartition> part_;
    SampleDraw draw_;
    std::vector<Index> offsets_;
};

} // namespace gsamp
