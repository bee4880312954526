#pragma once

#include "gsamp/chebyshev.hpp"
#include "gsamp/eigcount.hpp"
#include "gsamp/error.hpp"
#include "gsamp/parallel.hpp"
#include "gsamp/partition.hpp"
#include "gsamp/sampling.hpp"
#include "gsamp/spectral.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>

namespace gsamp {

enum class CoherenceFlavor { spectral, frobenius };

inline std::string to_string(CoherenceFlavor f)
{
    return f == CoherenceFlavor::spectral ? "spectral" : "frobenius";
}

/// Per-group local coherences c_l = ||N^(l) U_k||^2 in the spectral or
/// Frobenius norm.
struct CoherenceProfile {
    CoherenceFlavor flavor = CoherenceFlavor::spectral;
    Eigen::VectorXd values;
    Index k = 0;
    bool exact = true;

    Index size() const noexcept { return values.size(); }
};

/// Rows of U_k on group l, beta-scaled (N^(l) U_k).
inline Eigen::MatrixXd restrict_rows(const Eigen::MatrixXd& u, const GroupPartition& part, Index group)
{
    const auto& mem = part.members(group);
    const auto& sc = part.node_scale();
    Eigen::MatrixXd out(static_cast<Index>(mem.size()), u.cols());
    for (std::size_t r = 0; r < mem.size(); ++r) {
        out.row(static_cast<Index>(r)) = sc[mem[r]] * u.row(mem[r]);
    }
    return out;
}

/// Exact local coherences from an orthonormal basis. The spectral flavor is
/// the largest eigenvalue of the Gram matrix of N^(l) U_k.
inline CoherenceProfile local_coherence_exact(const SpectralBasis& basis, const GroupPartition& part,
                                              CoherenceFlavor flavor)
{
    if (basis.n() != part.node_count()) {
        throw ShapeError("local_coherence_exact: basis and partition disagree on n");
    }
    CoherenceProfile prof;
    prof.flavor = flavor;
    prof.k = basis.k;
    prof.exact = true;
    prof.values.resize(part.group_count());
    for (Index l = 0; l < part.group_count(); ++l) {
        const Eigen::MatrixXd b = restrict_rows(basis.vectors, part, l);
        if (flavor == CoherenceFlavor::frobenius) {
            prof.values[l] = b.squaredNorm();
            continue;
        }
        const Eigen::MatrixXd gram = b.rows() < b.cols() ? Eigen::MatrixXd(b * b.transpose())
                                                         : Eigen::MatrixXd(b.transpose() * b);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
        prof.values[l] = std::max(0.0, es.eigenvalues()[gram.rows() - 1]);
    }
    return prof;
}

/// p_l = c_l / sum c. Spectral profiles give p*, Frobenius profiles q*.
inline SamplingDistribution optimal_distribution(const CoherenceProfile& profile)
{
    const double total = profile.values.sum();
    if (!(total > 0.0)) {
        throw DomainError("optimal_distribution: degenerate profile with zero total mass");
    }
    for (Index l = 0; l < profile.size(); ++l) {
        if (!(profile.values[l] > 0.0)) {
            throw DomainError("optimal_distribution: group " + std::to_string(l + 1) +
                              " has zero coherence, the optimal distribution would not be strictly positive");
        }
    }
    Provenance prov = profile.flavor == CoherenceFlavor::spectral ? Provenance::p_star : Provenance::q_star;
    if (!profile.exact) {
        prov = profile.flavor == CoherenceFlavor::spectral ? Provenance::p_bar : Provenance::q_bar;
    }
    return SamplingDistribution(profile.values / total, prov);
}

/// max_l c_l / p_l: nu_p^2 for spectral profiles, nu-bar_p^2 for Frobenius ones.
inline double coherence(const SamplingDistribution& dist, const CoherenceProfile& profile)
{
    if (dist.size() != profile.size()) {
        throw ShapeError("coherence: distribution and profile sizes differ");
    }
    return (profile.values.array() / dist.probs().array()).maxCoeff();
}

/// Smallest s with s >= (3 / delta^2) nu^2 log(2k / xi).
inline Index sample_bound(double delta, double xi, double nu_sq, Index k)
{
    if (!(delta > 0.0 && delta < 1.0) || !(xi > 0.0 && xi < 1.0)) {
        throw DomainError("sample_bound: delta and xi must lie in (0, 1)");
    }
    if (k < 1 || !(nu_sq > 0.0)) {
        throw DomainError("sample_bound: need k >= 1 and nu^2 > 0");
    }
    const double bound = 3.0 / (delta * delta) * nu_sq * std::log(2.0 * static_cast<double>(k) / xi);
    // guard against bound being an exact integer that rounding pushed up
    const double c = std::ceil(bound - 1e-9 * bound);
    return static_cast<Index>(std::max(1.0, c));
}

struct EstimatorOptions {
    int order = 50;
    int power_iters = 50;
    double power_tol = 1e-6;
    int probes = 0;          ///< R; 0 selects 2 * ceil(log2 n)
    double lambda_k = 0.0;   ///< cutoff; estimated by bisection when <= 0
    double lambda_max = 0.0; ///< estimated by power iteration when <= 0
    int max_bisect = 30;
    unsigned threads = 0;
};

/// Floor applied to estimated coherences before normalization.
inline constexpr double coherence_floor = 1e-12;

namespace detail {

struct ResolvedFilter {
    PolynomialFilter filter;
    double lambda_k;
};

inline ResolvedFilter resolve_lowpass(const Laplacian& lap, Index k, const EstimatorOptions& opt, std::uint64_t seed)
{
    const double lmax = opt.lambda_max > 0.0 ? opt.lambda_max : estimate_lambda_max(lap);
    double lk = opt.lambda_k;
    if (!(lk > 0.0)) {
        const int r = opt.probes > 0 ? opt.probes : default_probe_count(lap.size());
        lk = estimate_lambda_k(lap, k, opt.order, r, opt.max_bisect, derive_seed(seed, {0xb15ec7}), lmax).value;
    }
    lk = std::clamp(lk, 1e-12 * lmax, lmax * (1.0 - 1e-12));
    return {lowpass_filter(lk, lmax, opt.order, true), lk};
}

} // namespace detail

/// Per-group lambda_max(N^(l) r(L) N^(l)^T) by power iteration on
/// zero-extend -> filter -> restrict.
inline CoherenceProfile estimate_spectral_profile(const Laplacian& lap, const GroupPartition& part,
                                                  const PolynomialFilter& filter, Index k, int power_iters,
                                                  double tol, std::uint64_t seed, unsigned threads = 0,
                                                  int* unconverged = nullptr)
{
    CoherenceProfile prof;
    prof.flavor = CoherenceFlavor::spectral;
    prof.k = k;
    prof.exact = false;
    prof.values.resize(part.group_count());
    std::vector<char> converged(static_cast<std::size_t>(part.group_count()), 1);
    parallel_for(
        static_cast<std::size_t>(part.group_count()),
        [&](std::size_t gi) {
            const auto l = static_cast<Index>(gi);
            Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(l)}));
            Eigen::VectorXd start = standard_normal(part.group_size(l), rng);
            auto op = [&](const Eigen::VectorXd& v) {
                return restrict_to_group(apply_filter(lap, filter, extend_from_group(v, part, l)), part, l);
            };
            const auto res = power_iteration(op, start, power_iters, tol);
            prof.values[l] = res.eigenvalue;
            converged[gi] = res.converged ? 1 : 0;
        },
        threads);
    if (unconverged) {
        *unconverged = static_cast<int>(std::count(converged.begin(), converged.end(), 0));
    }
    return prof;
}

/// Per-group sum of per-node estimates (1/R) sum_j (r(L) g_j)_i^2, beta-weighted.
inline CoherenceProfile estimate_frobenius_profile(const Laplacian& lap, const GroupPartition& part,
                                                   const PolynomialFilter& filter, Index k, int probes,
                                                   std::uint64_t seed)
{
    Rng rng(seed);
    const Eigen::MatrixXd g = standard_normal(lap.size(), probes, rng);
    const Eigen::MatrixXd f = apply_filter(lap, filter, g);
    const Eigen::VectorXd per_node = f.rowwise().squaredNorm() / static_cast<double>(probes);
    CoherenceProfile prof;
    prof.flavor = CoherenceFlavor::frobenius;
    prof.k = k;
    prof.exact = false;
    prof.values = Eigen::VectorXd::Zero(part.group_count());
    const auto& sc = part.node_scale();
    for (Index l = 0; l < part.group_count(); ++l) {
        for (Index i : part.members(l)) {
            prof.values[l] += sc[i] * sc[i] * per_node[i];
        }
    }
    return prof;
}

/// Scalable estimate p-bar of p*, without forming U_k.
inline SamplingDistribution estimate_p_bar(const Laplacian& lap, const GroupPartition& part, Index k,
                                           std::uint64_t seed, EstimatorOptions opt = {})
{
    if (part.node_count() != lap.size()) {
        throw ShapeError("estimate_p_bar: partition and graph disagree on n");
    }
    if (part.group_count() == 1) {
        return SamplingDistribution(Eigen::VectorXd::Ones(1), Provenance::p_bar);
    }
    const auto lp = detail::resolve_lowpass(lap, k, opt, seed);
    int unconverged = 0;
    const auto prof = estimate_spectral_profile(lap, part, lp.filter, k, opt.power_iters, opt.power_tol,
                                                derive_seed(seed, {0x9b4}), opt.threads, &unconverged);
    auto dist = SamplingDistribution::normalized(prof.values, Provenance::p_bar, coherence_floor);
    dist.unconverged_groups = unconverged;
    return dist;
}

/// Scalable estimate q-bar of q*: exactly R filterings regardless of N.
inline SamplingDistribution estimate_q_bar(const Laplacian& lap, const GroupPartition& part, Index k,
                                           std::uint64_t seed, EstimatorOptions opt = {})
{
    if (part.node_count() != lap.size()) {
        throw ShapeError("estimate_q_bar: partition and graph disagree on n");
    }
    const int r = opt.probes > 0 ? opt.probes : default_probe_count(lap.size());
    const auto lp = detail::resolve_lowpass(lap, k, opt, seed);
    const auto prof = estimate_frobenius_profile(lap, part, lp.filter, k, r, derive_seed(seed, {0x9ba}));
    return SamplingDistribution::normalized(prof.values, Provenance::q_bar, coherence_floor);
}

/// "group_id,value,flavor" CSV with a header line.
inline std::string profile_to_csv(const CoherenceProfile& p)
{
    std::ostringstream out;
    out << "group_id,value,flavor\n" << std::setprecision(17);
    for (Index l = 0; l < p.size(); ++l) {
        out << l + 1 << ',' << p.values[l] << ',' << to_string(p.flavor) << '\n';
    }
    return out.str();
}

} // namespace gsamp
