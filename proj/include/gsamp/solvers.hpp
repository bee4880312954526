#pragma once

#include "gsamp/error.hpp"
#include "gsamp/random.hpp"
#include "gsamp/spectral.hpp"

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <vector>

namespace gsamp {

struct CgResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double residual = 0.0; ///< ||b - Ax|| / ||b||
    bool capped = false;
};

/// Conjugate gradient for a symmetric positive (semi-)definite operator,
/// optionally Jacobi-preconditioned by the entrywise inverse `inv_diag`.
/// A zero right-hand side returns the zero vector without iterating.
template <class ApplyFn>
CgResult conjugate_gradient(ApplyFn&& apply, const Eigen::VectorXd& b, double tol, int max_iter,
                            std::optional<Eigen::VectorXd> x0 = std::nullopt,
                            const Eigen::VectorXd* inv_diag = nullptr)
{
    CgResult res;
    const double bnorm = b.norm();
    if (!std::isfinite(bnorm)) {
        throw NumericalError("conjugate_gradient: non-finite right-hand side");
    }
    if (bnorm == 0.0) {
        res.x = Eigen::VectorXd::Zero(b.size());
        return res;
    }
    res.x = x0 ? *x0 : Eigen::VectorXd::Zero(b.size());
    if (res.x.size() != b.size() || (inv_diag && inv_diag->size() != b.size())) {
        throw ShapeError("conjugate_gradient: initial guess or preconditioner has the wrong length");
    }
    auto precondition = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
        return inv_diag ? Eigen::VectorXd(inv_diag->cwiseProduct(r)) : r;
    };
    Eigen::VectorXd r = b - apply(res.x);
    Eigen::VectorXd z = precondition(r);
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    res.residual = r.norm() / bnorm;
    while (res.residual > tol) {
        if (res.iterations >= max_iter) {
            res.capped = true;
            break;
        }
        const Eigen::VectorXd ap = apply(p);
        const double pap = p.dot(ap);
        if (!std::isfinite(pap)) {
            throw NumericalError("conjugate_gradient: breakdown with non-finite curvature");
        }
        if (pap <= 0.0) {
            // direction in the null space of a semidefinite system: no further progress possible
            res.capped = true;
            break;
        }
        const double alpha = rz / pap;
        res.x += alpha * p;
        r -= alpha * ap;
        z = precondition(r);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
        ++res.iterations;
        res.residual = r.norm() / bnorm;
        if (!std::isfinite(res.residual)) {
            throw NumericalError("conjugate_gradient: non-finite residual");
        }
    }
    // report the true residual rather than the recursively updated one
    res.residual = (b - apply(res.x)).norm() / bnorm;
    return res;
}

/// Entrywise inverse of a positive diagonal; nonpositive entries map to 1.
inline Eigen::VectorXd safe_inverse_diagonal(const Eigen::VectorXd& d)
{
    return d.unaryExpr([](double v) { return v > 0.0 ? 1.0 / v : 1.0; });
}

struct ProjectedResult {
    Eigen::VectorXd x;
    int iterations = 0;
    int restarts = 0;
    double residual = 0.0; ///< free-coordinate gradient norm relative to lipschitz * ||x||
    bool capped = false;
    std::vector<double> objective; ///< x^T Q x after every accepted step
};

/// Minimizes x^T Q x subject to x[fixed[i]] = values[i] by accelerated
/// projected gradient with step 1/lipschitz and a momentum restart whenever
/// the objective increases. `fixed` must be free of duplicates.
template <class ApplyFn>
ProjectedResult projected_quadratic_descent(ApplyFn&& apply, Eigen::Index n, const std::vector<Eigen::Index>& fixed,
                                            const Eigen::VectorXd& values, double lipschitz, double tol,
                                            int max_iter, std::optional<Eigen::VectorXd> x0 = std::nullopt)
{
    if (static_cast<Eigen::Index>(fixed.size()) != values.size()) {
        throw ShapeError("projected_quadratic_descent: index and value counts differ");
    }
    std::vector<char> is_fixed(static_cast<std::size_t>(n), 0);
    for (auto i : fixed) {
        if (i < 0 || i >= n) {
            throw IndexError("projected_quadratic_descent: constrained index out of range");
        }
        is_fixed[static_cast<std::size_t>(i)] = 1;
    }
    auto project = [&](Eigen::VectorXd& v) {
        for (std::size_t c = 0; c < fixed.size(); ++c) {
            v[fixed[c]] = values[static_cast<Eigen::Index>(c)];
        }
    };
    auto free_grad_norm = [&](const Eigen::VectorXd& qx) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!is_fixed[static_cast<std::size_t>(i)]) {
                acc += qx[i] * qx[i];
            }
        }
        return std::sqrt(acc);
    };

    ProjectedResult res;
    res.x = x0 ? *x0 : Eigen::VectorXd::Zero(n);
    if (res.x.size() != n) {
        throw ShapeError("projected_quadratic_descent: initial guess has the wrong length");
    }
    project(res.x);
    Eigen::VectorXd qx = apply(res.x);
    double f = res.x.dot(qx);
    res.objective.push_back(f);

    auto converged = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& q) {
        const double scale = lipschitz * x.norm();
        const double g = free_grad_norm(q);
        res.residual = scale > 0.0 ? g / scale : g;
        return res.residual <= tol;
    };
    if (static_cast<Eigen::Index>(fixed.size()) == n || !(lipschitz > 0.0) || converged(res.x, qx)) {
        res.residual = static_cast<Eigen::Index>(fixed.size()) == n ? 0.0 : res.residual;
        return res;
    }

    Eigen::VectorXd y = res.x;
    Eigen::VectorXd qy = qx;
    double t = 1.0;
    const double step = 1.0 / lipschitz;
    while (true) {
        if (res.iterations >= max_iter) {
            res.capped = true;
            break;
        }
        ++res.iterations;
        // gradient of x^T Q x is 2Qx; the 1/2 is folded into the step
        Eigen::VectorXd x_new = y - step * qy;
        project(x_new);
        Eigen::VectorXd qx_new = apply(x_new);
        const double f_new = x_new.dot(qx_new);
        if (!std::isfinite(f_new)) {
            throw NumericalError("projected_quadratic_descent: non-finite objective");
        }
        if (f_new > f && t > 1.0) {
            // momentum overshoot: restart from the last accepted iterate
            ++res.restarts;
            t = 1.0;
            y = res.x;
            qy = qx;
            continue;
        }
        const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double beta = (t - 1.0) / t_new;
        y = x_new + beta * (x_new - res.x);
        qy = (1.0 + beta) * qx_new - beta * qx;
        t = t_new;
        res.x = std::move(x_new);
        qx = std::move(qx_new);
        f = f_new;
        res.objective.push_back(f);
        if (converged(res.x, qx)) {
            break;
        }
    }
    return res;
}

/// Upper estimate of the largest eigenvalue of a PSD operator given as a callable.
template <class ApplyFn>
double operator_norm_estimate(ApplyFn&& apply, Eigen::Index n, std::uint64_t seed = 0x5eed)
{
    if (n == 0) {
        return 0.0;
    }
    Rng rng(seed);
    const auto res = power_iteration(apply, standard_normal(n, rng), 500, 1e-9);
    return std::max(0.0, res.eigenvalue) * lambda_max_inflation;
}

} // namespace gsamp
