#pragma once

#include "gsamp/error.hpp"
#include "gsamp/graph.hpp"
#include "gsamp/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace gsamp {

/// First k eigenpairs of a Laplacian, ascending, with the whole spectrum kept
/// for bound evaluation (lambda_{k+1}, lambda_n).
struct SpectralBasis {
    Index k = 0;
    Eigen::VectorXd lambdas;     ///< lambda_1..lambda_k
    Eigen::MatrixXd vectors;     ///< U_k, n x k, orthonormal columns
    Eigen::VectorXd all_lambdas; ///< full spectrum lambda_1..lambda_n

    Index n() const noexcept { return vectors.rows(); }
    double lambda(Index i) const { return all_lambdas[i - 1]; } ///< 1-based
    double lambda_max() const { return all_lambdas[all_lambdas.size() - 1]; }
};

/// Largest n accepted by dense_spectrum.
inline constexpr Index dense_spectrum_limit = 5000;

namespace detail {

inline void fix_signs(Eigen::MatrixXd& u)
{
    for (Index c = 0; c < u.cols(); ++c) {
        for (Index r = 0; r < u.rows(); ++r) {
            if (std::abs(u(r, c)) > 1e-12) {
                if (u(r, c) < 0.0) {
                    u.col(c) *= -1.0;
                }
                break;
            }
        }
    }
}

} // namespace detail

/// Dense symmetric eigendecomposition of the materialized Laplacian. Each
/// eigenvector is signed so that its first nonzero coordinate is positive.
inline SpectralBasis dense_spectrum(const Laplacian& lap, Index k)
{
    const Index n = lap.size();
    if (n > dense_spectrum_limit) {
        throw SizeError("dense_spectrum: n = " + std::to_string(n) + " exceeds the dense limit " +
                        std::to_string(dense_spectrum_limit));
    }
    if (k < 1 || k > n) {
        throw DomainError("dense_spectrum: k must lie in 1..n");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap.to_dense());
    if (es.info() != Eigen::Success) {
        throw NumericalError("dense_spectrum: eigensolver failed");
    }
    SpectralBasis b;
    b.k = k;
    b.all_lambdas = es.eigenvalues();
    b.lambdas = b.all_lambdas.head(k);
    b.vectors = es.eigenvectors().leftCols(k);
    detail::fix_signs(b.vectors);
    return b;
}

struct PowerResult {
    double eigenvalue = 0.0;
    Eigen::VectorXd vector;
    int iterations = 0;
    bool converged = false;
};

/// Power iteration for the dominant eigenvalue of a symmetric operator.
/// Stops when the Rayleigh quotient changes by less than tol (relative).
template <class ApplyFn>
PowerResult power_iteration(ApplyFn&& apply, Eigen::VectorXd start, int max_iter, double tol)
{
    PowerResult res;
    double nrm = start.norm();
    if (!(nrm > 0.0)) {
        res.vector = start;
        res.converged = true;
        return res;
    }
    Eigen::VectorXd v = start / nrm;
    double prev = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd w = apply(v);
        const double rq = v.dot(w);
        res.iterations = it;
        res.eigenvalue = rq;
        nrm = w.norm();
        if (!(nrm > 0.0)) {
            // v lies in the null space
            res.vector = v;
            res.converged = true;
            return res;
        }
        if (!std::isfinite(nrm)) {
            throw NumericalError("power_iteration: non-finite iterate");
        }
        if (it > 1 && std::abs(rq - prev) <= tol * std::abs(rq)) {
            res.vector = w / nrm;
            res.converged = true;
            return res;
        }
        prev = rq;
        v = w / nrm;
    }
    res.vector = v;
    return res;
}

/// Inflation applied to the power-iteration estimate of lambda_max.
inline constexpr double lambda_max_inflation = 1.01;

/// Upper estimate of the largest Laplacian eigenvalue. The Rayleigh quotient
/// approaches lambda_n from below, so it is inflated by 1%.
template <SymmetricOperator Op>
double estimate_lambda_max(const Op& op, int iters = 500, double tol = 1e-9, std::uint64_t seed = 0x5eed)
{
    if (op.size() == 0) {
        return 0.0;
    }
    Rng rng(seed);
    Eigen::VectorXd start = standard_normal(op.size(), rng);
    auto res = power_iteration([&](const Eigen::VectorXd& v) { return op.apply(v); }, start, iters, tol);
    return std::max(0.0, res.eigenvalue) * lambda_max_inflation;
}

} // namespace gsamp
