#pragma once

#include "gsamp/chebyshev.hpp"
#include "gsamp/graph.hpp"
#include "gsamp/random.hpp"
#include "gsamp/spectral.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>

namespace gsamp {

/// Default probe count 2 * ceil(log2 n).
inline int default_probe_count(Index n)
{
    if (n <= 2) {
        return 2;
    }
    return 2 * static_cast<int>(std::ceil(std::log2(static_cast<double>(n))));
}

namespace detail {

inline double filtered_energy(const Laplacian& lap, const Eigen::MatrixXd& probes, double lambda_bar,
                              double lambda_max, int order, bool jackson)
{
    const double r = static_cast<double>(probes.cols());
    if (lambda_bar < 0.0) {
        return 0.0;
    }
    if (lambda_bar >= lambda_max) {
        return probes.squaredNorm() / r;
    }
    const double cutoff = std::max(lambda_bar, 1e-12 * lambda_max);
    const auto f = lowpass_filter(cutoff, lambda_max, order, jackson);
    return apply_filter(lap, f, probes).squaredNorm() / r;
}

} // namespace detail

struct EigcountOptions {
    int order = 50;
    bool jackson = true;
    /// Upper spectral estimate; computed by power iteration when <= 0.
    double lambda_max = 0.0;
};

/// Estimates #{i : lambda_i <= lambda_bar} as the mean filtered energy
/// (1/R) sum_j ||r(L) g_j||^2 of R standard-normal probes.
inline double estimate_eigcount(const Laplacian& lap, double lambda_bar, int probes, std::uint64_t seed,
                                EigcountOptions opt = {})
{
    if (probes < 1) {
        throw DomainError("estimate_eigcount: need at least one probe signal");
    }
    const double lmax = opt.lambda_max > 0.0 ? opt.lambda_max : estimate_lambda_max(lap);
    if (!(lmax > 0.0)) {
        // zero operator: every eigenvalue is 0
        return lambda_bar >= 0.0 ? static_cast<double>(lap.size()) : 0.0;
    }
    Rng rng(seed);
    const Eigen::MatrixXd g = standard_normal(lap.size(), probes, rng);
    return detail::filtered_energy(lap, g, lambda_bar, lmax, opt.order, opt.jackson);
}

struct LambdaKEstimate {
    double value = 0.0;
    double count = 0.0; ///< eigcount estimate at `value`
    int iterations = 0;
    double lambda_max = 0.0;
};

/// Bisection on the cutoff until the estimated eigenvalue count is within
/// 0.5 of k. The same probe block is reused at every step.
inline LambdaKEstimate estimate_lambda_k(const Laplacian& lap, Index k, int order, int probes, int max_bisect,
                                         std::uint64_t seed, double lambda_max = 0.0)
{
    const Index n = lap.size();
    if (k < 1 || k > n) {
        throw DomainError("estimate_lambda_k: k must lie in 1..n");
    }
    if (probes < 1) {
        throw DomainError("estimate_lambda_k: need at least one probe signal");
    }
    LambdaKEstimate est;
    est.lambda_max = lambda_max > 0.0 ? lambda_max : estimate_lambda_max(lap);
    if (!(est.lambda_max > 0.0)) {
        return est;
    }
    if (k == n) {
        // every eigenvalue lies below the spectral upper estimate
        est.value = est.lambda_max;
        est.count = static_cast<double>(n);
        return est;
    }
    Rng rng(seed);
    const Eigen::MatrixXd g = standard_normal(n, probes, rng);
    const double target = static_cast<double>(k);

    double lo = 0.0;
    double hi = est.lambda_max;
    for (int it = 1; it <= max_bisect; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double c = detail::filtered_energy(lap, g, mid, est.lambda_max, order, true);
        est.iterations = it;
        est.value = mid;
        est.count = c;
        if (std::abs(c - target) < 0.5) {
            return est;
        }
        if (c > target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    est.value = 0.5 * (lo + hi);
    return est;
}

} // namespace gsamp
