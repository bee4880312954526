#pragma once

#include "gsamp/coherence.hpp"
#include "gsamp/error.hpp"
#include "gsamp/parallel.hpp"
#include "gsamp/partition.hpp"
#include "gsamp/random.hpp"
#include "gsamp/sampling.hpp"
#include "gsamp/spectral.hpp"

#include <Eigen/Dense>

#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gsamp {

namespace detail {

inline double smallest_eigenvalue(const Eigen::MatrixXd& sym)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
}

inline double rip_from_gram(const Eigen::MatrixXd& x, double s)
{
    if (!(s > 0.0)) {
        return 1.0;
    }
    return std::clamp(1.0 - smallest_eigenvalue(x) / s, 0.0, 1.0);
}

} // namespace detail

/// delta_k = 1 - lambda_min(U_k^T M^T P^2 M U_k) / s, formed through the
/// sampling operators. Values below zero (energy gain on every direction)
/// are reported as 0, the tightest admissible constant.
inline double lower_rip_constant(const SpectralBasis& basis, const SampleOperators& ops)
{
    if (basis.n() != ops.n()) {
        throw ShapeError("lower_rip_constant: basis and sampling operators disagree on n");
    }
    if (ops.s() == 0) {
        return 1.0;
    }
    Eigen::MatrixXd pmu(ops.m(), basis.k);
    for (Index c = 0; c < basis.k; ++c) {
        pmu.col(c) = ops.PM(basis.vectors.col(c));
    }
    return detail::rip_from_gram(pmu.transpose() * pmu, static_cast<double>(ops.s()));
}

/// Per-group k x k Gram matrices (N^(l) U_k)^T (N^(l) U_k).
inline std::vector<Eigen::MatrixXd> group_grams(const SpectralBasis& basis, const GroupPartition& part)
{
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(part.group_count()));
    for (Index l = 0; l < part.group_count(); ++l) {
        const Eigen::MatrixXd b = restrict_rows(basis.vectors, part, l);
        out[static_cast<std::size_t>(l)] = b.transpose() * b;
    }
    return out;
}

/// Same quantity as lower_rip_constant, from precomputed group Grams.
inline double lower_rip_constant(const std::vector<Eigen::MatrixXd>& grams, const SampleDraw& draw, Index k)
{
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(k, k);
    for (Index g : draw.omega) {
        x += grams[static_cast<std::size_t>(g)] / draw.dist[g];
    }
    return detail::rip_from_gram(x, static_cast<double>(draw.s()));
}

struct RipCurve {
    std::vector<Index> s_grid;
    std::vector<double> probs;
    int trials = 0;
    double threshold = 0.0;
    Provenance provenance = Provenance::custom;
    std::uint64_t seed = 0;

    /// First s whose probability reaches `level`, if any.
    std::optional<Index> first_reaching(double level) const
    {
        for (std::size_t i = 0; i < s_grid.size(); ++i) {
            if (probs[i] >= level) {
                return s_grid[i];
            }
        }
        return std::nullopt;
    }
};

/// Supplies the distribution used in trial t; lets estimated distributions
/// be re-estimated on every trial.
using DistributionSource = std::function<SamplingDistribution(int trial)>;

/// For each s, the fraction of `trials` independent draws whose lower RIP
/// constant is below `threshold`. Trial randomness is keyed on (seed, s, t).
inline RipCurve rip_curve(const SpectralBasis& basis, const GroupPartition& part, const DistributionSource& source,
                          Provenance provenance, const std::vector<Index>& s_grid, int trials, double threshold,
                          std::uint64_t seed, unsigned threads = 0)
{
    if (trials < 1) {
        throw DomainError("rip_curve: need at least one trial");
    }
    const auto grams = group_grams(basis, part);
    std::vector<SamplingDistribution> dists;
    dists.reserve(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        dists.push_back(source(t));
    }
    RipCurve curve;
    curve.s_grid = s_grid;
    curve.trials = trials;
    curve.threshold = threshold;
    curve.provenance = provenance;
    curve.seed = seed;
    curve.probs.assign(s_grid.size(), 0.0);
    for (std::size_t si = 0; si < s_grid.size(); ++si) {
        const Index s = s_grid[si];
        if (s <= 0) {
            continue;
        }
        std::vector<char> ok(static_cast<std::size_t>(trials), 0);
        parallel_for(
            static_cast<std::size_t>(trials),
            [&](std::size_t t) {
                const auto draw = draw_groups(dists[t], s, derive_seed(seed, {static_cast<std::uint64_t>(s), t}));
                ok[t] = lower_rip_constant(grams, draw, basis.k) < threshold ? 1 : 0;
            },
            threads);
        curve.probs[si] = static_cast<double>(std::count(ok.begin(), ok.end(), 1)) / trials;
    }
    return curve;
}

/// Fixed-distribution convenience overload.
inline RipCurve rip_curve(const SpectralBasis& basis, const GroupPartition& part, const SamplingDistribution& dist,
                          const std::vector<Index>& s_grid, int trials, double threshold, std::uint64_t seed,
                          unsigned threads = 0)
{
    return rip_curve(
        basis, part, [&dist](int) { return dist; }, dist.provenance(), s_grid, trials, threshold, seed, threads);
}

/// Graph-level entry: computes the exact basis, and re-estimates p-bar or
/// q-bar once per trial when the distribution is of that provenance.
/// lambda_k is estimated once and shared by all trials.
inline RipCurve rip_curve(const Laplacian& lap, const GroupPartition& part, const SamplingDistribution& dist, Index k,
                          const std::vector<Index>& s_grid, int trials, double threshold, std::uint64_t seed,
                          EstimatorOptions est = {}, unsigned threads = 0)
{
    const auto basis = dense_spectrum(lap, k);
    const auto prov = dist.provenance();
    if (prov != Provenance::p_bar && prov != Provenance::q_bar) {
        return rip_curve(basis, part, dist, s_grid, trials, threshold, seed, threads);
    }
    if (!(est.lambda_max > 0.0)) {
        est.lambda_max = estimate_lambda_max(lap);
    }
    if (!(est.lambda_k > 0.0)) {
        const int r = est.probes > 0 ? est.probes : default_probe_count(lap.size());
        est.lambda_k =
            estimate_lambda_k(lap, k, est.order, r, est.max_bisect, derive_seed(seed, {0x1a4b}), est.lambda_max).value;
    }
    auto source = [&](int t) {
        const auto ts = derive_seed(seed, {0xe57, static_cast<std::uint64_t>(t)});
        return prov == Provenance::p_bar ? estimate_p_bar(lap, part, k, ts, est) : estimate_q_bar(lap, part, k, ts, est);
    };
    return rip_curve(basis, part, source, prov, s_grid, trials, threshold, seed, threads);
}

inline std::string rip_curve_csv(const RipCurve& c)
{
    std::ostringstream out;
    out << "s,probability,trials,threshold\n" << std::setprecision(17);
    for (std::size_t i = 0; i < c.s_grid.size(); ++i) {
        out << c.s_grid[i] << ',' << c.probs[i] << ',' << c.trials << ',' << c.threshold << '\n';
    }
    return out.str();
}

/// Spectral deviation || mean_t G_{omega_t} / p_{omega_t} - I ||_2 over
/// single-group draws; its expectation is exactly the identity.
inline double expectation_check(const GroupPartition& part, const SamplingDistribution& dist,
                                const SpectralBasis& basis, int trials, std::uint64_t seed)
{
    if (trials < 1) {
        throw DomainError("expectation_check: need at least one trial");
    }
    const auto grams = group_grams(basis, part);
    const auto draw = draw_groups(dist, trials, seed);
    std::vector<Index> count = draw.multiplicity(part.group_count());
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(basis.k, basis.k);
    for (Index l = 0; l < part.group_count(); ++l) {
        if (count[l] > 0) {
            mean += (static_cast<double>(count[l]) / dist[l]) * grams[static_cast<std::size_t>(l)];
        }
    }
    mean /= static_cast<double>(trials);
    mean -= Eigen::MatrixXd::Identity(basis.k, basis.k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mean, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace gsamp
