#pragma once

#include "gsamp/error.hpp"
#include "gsamp/graph.hpp"
#include "gsamp/partition.hpp"
#include "gsamp/sampling.hpp"
#include "gsamp/solvers.hpp"
#include "gsamp/spectral.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace gsamp {

/// Regularizing polynomial g(t) = sum_i alpha_i t^i, required to be
/// nonnegative and nondecreasing on the spectrum.
class SmoothnessFilter {
public:
    SmoothnessFilter() : alpha_{0.0, 1.0} {}
    explicit SmoothnessFilter(std::vector<double> alpha) : alpha_(std::move(alpha))
    {
        if (alpha_.empty()) {
            throw DomainError("SmoothnessFilter: empty coefficient list");
        }
    }

    /// g(t) = t.
    static SmoothnessFilter identity() { return SmoothnessFilter({0.0, 1.0}); }

    int degree() const noexcept { return static_cast<int>(alpha_.size()) - 1; }
    const std::vector<double>& coeffs() const noexcept { return alpha_; }

    double operator()(double t) const
    {
        double acc = 0.0;
        for (auto it = alpha_.rbegin(); it != alpha_.rend(); ++it) {
            acc = acc * t + *it;
        }
        return acc;
    }

    /// g(L) x by Horner's rule, d applications of L.
    template <SymmetricOperator Op>
    Eigen::VectorXd apply(const Op& op, const Eigen::VectorXd& x) const
    {
        Eigen::VectorXd acc = alpha_.back() * x;
        for (int i = degree() - 1; i >= 0; --i) {
            acc = op.apply(acc);
            acc += alpha_[static_cast<std::size_t>(i)] * x;
        }
        return acc;
    }

    /// Checks nonnegativity and monotonicity on a 1000-point grid of [0, lambda_max].
    bool is_admissible(double lambda_max, int points = 1000) const
    {
        double prev = (*this)(0.0);
        if (prev < -1e-12) {
            return false;
        }
        for (int i = 1; i < points; ++i) {
            const double v = (*this)(lambda_max * i / (points - 1));
            if (v < -1e-12 || v < prev - 1e-12 * std::max(1.0, std::abs(prev))) {
                return false;
            }
            prev = v;
        }
        return true;
    }

private:
    std::vector<double> alpha_;
};

struct DecodeResult {
    Eigen::VectorXd estimate;        ///< node-domain estimate (lifted for reduced decoders)
    std::optional<Eigen::VectorXd> reduced; ///< reduced-domain solution, when applicable
    int iterations = 0;
    double residual = 0.0;
    double gamma = 0.0; ///< 0 for the constrained decoders
    bool capped = false;
    double millis = 0.0;
    std::string method;
    std::vector<double> objective; ///< objective trace, constrained decoders only
};

namespace detail {

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double millis() const
    {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

inline Eigen::VectorXd scale_by_p(const SampleOperators& ops, const Eigen::VectorXd& y)
{
    return ops.P(ops.P(y));
}

} // namespace detail

struct SolverOptions {
    double tol = 1e-8;
    int max_iter = 2000;
    std::optional<Eigen::VectorXd> initial;
    bool jacobi = true; ///< diagonal preconditioning
};

/// argmin_z ||P(Mz - y)||^2 + gamma z^T g(L) z via CG on the normal equations.
inline DecodeResult full_decode(const Laplacian& lap, const SmoothnessFilter& g, const SampleOperators& ops,
                                const Eigen::VectorXd& y, double gamma, const SolverOptions& opt = {})
{
    if (!(gamma > 0.0)) {
        throw DomainError("full_decode: gamma must be positive");
    }
    if (y.size() != ops.m() || lap.size() != ops.n()) {
        throw ShapeError("full_decode: measurement or graph size does not match the sampling operators");
    }
    detail::Stopwatch sw;
    auto normal = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        return ops.Mt(detail::scale_by_p(ops, ops.M(z))) + gamma * g.apply(lap, z);
    };
    const Eigen::VectorXd rhs = ops.Mt(detail::scale_by_p(ops, y));
    // diagonal of M^T P^2 M plus gamma g(diag L), a cheap positive surrogate
    const Eigen::VectorXd diag =
        ops.Mt(detail::scale_by_p(ops, Eigen::VectorXd::Ones(ops.m()))) +
        gamma * lap.diagonal().unaryExpr([&g](double d) { return g(d); });
    const Eigen::VectorXd inv = safe_inverse_diagonal(diag);
    auto cg = conjugate_gradient(normal, rhs, opt.tol, opt.max_iter, opt.initial, opt.jacobi ? &inv : nullptr);
    DecodeResult res;
    res.estimate = std::move(cg.x);
    res.iterations = cg.iterations;
    res.residual = cg.residual;
    res.capped = cg.capped;
    res.gamma = gamma;
    res.method = "full";
    res.millis = sw.millis();
    return res;
}

/// Objective ||P(Mz - y)||^2 + gamma z^T g(L) z.
inline double full_objective(const Laplacian& lap, const SmoothnessFilter& g, const SampleOperators& ops,
                             const Eigen::VectorXd& y, double gamma, const Eigen::VectorXd& z)
{
    return ops.P(ops.M(z) - y).squaredNorm() + gamma * z.dot(g.apply(lap, z));
}

/// Largest group count for which the reduced Laplacian is materialized.
inline constexpr Index reduced_laplacian_limit = 10000;

/// L~ = A g(L) A^T as a sparse symmetric N x N matrix. Column l is obtained
/// by filtering the lifted indicator of group l and averaging back.
inline Eigen::SparseMatrix<double> build_reduced_laplacian(const Laplacian& lap, const GroupPartition& part,
                                                           const SmoothnessFilter& g)
{
    part.require_strict("build_reduced_laplacian");
    const Index big_n = part.group_count();
    if (big_n > reduced_laplacian_limit) {
        throw SizeError("build_reduced_laplacian: N exceeds the materialization limit");
    }
    if (lap.size() != part.node_count()) {
        throw ShapeError("build_reduced_laplacian: partition and graph disagree on n");
    }
    Eigen::MatrixXd dense(big_n, big_n);
    for (Index l = 0; l < big_n; ++l) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(big_n);
        e[l] = 1.0;
        dense.col(l) = group_average(g.apply(lap, lift(e, part)), part);
    }
    dense = 0.5 * (dense + dense.transpose()).eval();
    Eigen::SparseMatrix<double> out = dense.sparseView(0.0, 0.0);
    out.makeCompressed();
    return out;
}

/// argmin ||P~(M~ z - y~)||^2 + gamma z^T L~ z in dimension N, lifted by A^T.
inline DecodeResult fast_decode(const Eigen::SparseMatrix<double>& lt, const SampleOperators& ops,
                                const Eigen::VectorXd& y_tilde, double gamma, const SolverOptions& opt = {})
{
    if (!(gamma > 0.0)) {
        throw DomainError("fast_decode: gamma must be positive");
    }
    if (y_tilde.size() != ops.s() || lt.rows() != ops.group_count() || lt.cols() != ops.group_count()) {
        throw ShapeError("fast_decode: reduced sizes do not match the sampling operators");
    }
    detail::Stopwatch sw;
    auto normal = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        return ops.Mtilde_t(ops.Ptilde(ops.Ptilde(ops.Mtilde(z)))) + gamma * (lt * z);
    };
    const Eigen::VectorXd rhs = ops.Mtilde_t(ops.Ptilde(ops.Ptilde(y_tilde)));
    const Eigen::VectorXd diag =
        ops.Mtilde_t(ops.Ptilde(ops.Ptilde(Eigen::VectorXd::Ones(ops.s())))) + gamma * Eigen::VectorXd(lt.diagonal());
    const Eigen::VectorXd inv = safe_inverse_diagonal(diag);
    auto cg = conjugate_gradient(normal, rhs, opt.tol, opt.max_iter, opt.initial, opt.jacobi ? &inv : nullptr);
    DecodeResult res;
    res.estimate = lift(cg.x, ops.partition());
    res.reduced = std::move(cg.x);
    res.iterations = cg.iterations;
    res.residual = cg.residual;
    res.capped = cg.capped;
    res.gamma = gamma;
    res.method = "fast";
    res.millis = sw.millis();
    return res;
}

enum class DuplicatePolicy {
    strict, ///< average duplicates that agree to 1e-9, reject any larger disagreement
    average ///< always average duplicates
};

struct ConstrainedOptions {
    double tol = 1e-10;
    int max_iter = 5000;
    DuplicatePolicy duplicates = DuplicatePolicy::strict;
    std::optional<Eigen::VectorXd> initial;
    double lipschitz = 0.0; ///< estimated by power iteration when <= 0
};

/// Collapses repeated constraints on the same coordinate into one.
inline std::pair<std::vector<Index>, Eigen::VectorXd> deduplicate_constraints(const std::vector<Index>& index,
                                                                              const Eigen::VectorXd& values,
                                                                              DuplicatePolicy policy)
{
    if (static_cast<Index>(index.size()) != values.size()) {
        throw ShapeError("deduplicate_constraints: index and value counts differ");
    }
    std::map<Index, std::vector<double>> groups;
    for (std::size_t c = 0; c < index.size(); ++c) {
        groups[index[c]].push_back(values[static_cast<Index>(c)]);
    }
    std::vector<Index> out_idx;
    Eigen::VectorXd out_val(static_cast<Index>(groups.size()));
    Index r = 0;
    for (const auto& [i, vs] : groups) {
        const auto [lo, hi] = std::minmax_element(vs.begin(), vs.end());
        if (policy == DuplicatePolicy::strict && *hi - *lo > 1e-9) {
            throw InfeasibleError("coordinate " + std::to_string(i + 1) +
                                  " carries contradictory measurements under the equality constraint");
        }
        double sum = 0.0;
        for (double v : vs) {
            sum += v;
        }
        out_idx.push_back(i);
        out_val[r++] = sum / static_cast<double>(vs.size());
    }
    return {std::move(out_idx), std::move(out_val)};
}

/// Minimizes z^T Q z subject to z[index] = values for a symmetric PSD
/// operator Q given as a callable.
template <class ApplyFn>
DecodeResult constrained_minimize(ApplyFn&& q, Index n, const std::vector<Index>& index,
                                  const Eigen::VectorXd& values, const ConstrainedOptions& opt = {})
{
    detail::Stopwatch sw;
    auto [idx, vals] = deduplicate_constraints(index, values, opt.duplicates);
    const double lip = opt.lipschitz > 0.0 ? opt.lipschitz : operator_norm_estimate(q, n);
    auto pr = projected_quadratic_descent(q, n, idx, vals, lip, opt.tol, opt.max_iter, opt.initial);
    DecodeResult res;
    res.estimate = std::move(pr.x);
    res.iterations = pr.iterations;
    res.residual = pr.residual;
    res.capped = pr.capped;
    res.objective = std::move(pr.objective);
    res.method = "constrained";
    res.millis = sw.millis();
    return res;
}

/// gamma -> 0 limit of the fast decoder: min z~^T L~ z~ s.t. M~ z~ = y~, lifted by A^T.
inline DecodeResult constrained_decode_reduced(const Eigen::SparseMatrix<double>& lt, const SampleOperators& ops,
                                               const Eigen::VectorXd& y_tilde, const ConstrainedOptions& opt = {})
{
    if (y_tilde.size() != ops.s()) {
        throw ShapeError("constrained_decode_reduced: one value per draw is required");
    }
    auto q = [&lt](const Eigen::VectorXd& z) -> Eigen::VectorXd { return lt * z; };
    auto res = constrained_minimize(q, lt.rows(), ops.draw().omega, y_tilde, opt);
    res.reduced = res.estimate;
    res.estimate = lift(*res.reduced, ops.partition());
    res.method = "fast-constrained";
    return res;
}

/// gamma -> 0 limit of the full decoder: min z^T g(L) z s.t. Mz = y.
inline DecodeResult constrained_decode_full(const Laplacian& lap, const SmoothnessFilter& g,
                                            const SampleOperators& ops, const Eigen::VectorXd& y,
                                            const ConstrainedOptions& opt = {})
{
    if (y.size() != ops.m()) {
        throw ShapeError("constrained_decode_full: one value per sampled row is required");
    }
    const auto& part = ops.partition();
    const auto& sc = part.node_scale();
    std::vector<Index> index;
    Eigen::VectorXd values(ops.m());
    index.reserve(static_cast<std::size_t>(ops.m()));
    for (Index j = 0; j < ops.s(); ++j) {
        const auto& mem = part.members(ops.draw().omega[j]);
        for (std::size_t r = 0; r < mem.size(); ++r) {
            const Index row = ops.offset(j) + static_cast<Index>(r);
            index.push_back(mem[r]);
            values[row] = y[row] / sc[mem[r]];
        }
    }
    auto q = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd { return g.apply(lap, z); };
    auto res = constrained_minimize(q, lap.size(), index, values, opt);
    res.method = "full-constrained";
    return res;
}

struct Projections {
    Eigen::VectorXd alpha; ///< U_k U_k^T xhat
    Eigen::VectorXd beta;  ///< xhat - alpha
};

inline Projections split_projections(const Eigen::VectorXd& xhat, const SpectralBasis& basis)
{
    if (xhat.size() != basis.n()) {
        throw ShapeError("split_projections: signal length does not match the basis");
    }
    Projections p;
    p.alpha = basis.vectors * (basis.vectors.transpose() * xhat);
    p.beta = xhat - p.alpha;
    return p;
}

struct ErrorBoundParams {
    double s = 0.0;
    double delta = 0.0;
    double gamma = 0.0;
    double g_lambda_k = 0.0;
    double g_lambda_k1 = 0.0;
    double g_lambda_n = 0.0;
    double m_max = 0.0;
    double epsilon = 0.0;
    double x_norm = 0.0;
    double noise_norm = 0.0; ///< ||P~ n~||
};

struct ErrorBounds {
    double alpha = 0.0; ///< bound on ||alpha* - x||
    double beta = 0.0;  ///< bound on ||beta*||
};

/// Error bounds for the lifted fast-decoder solution split into its in-band
/// and out-of-band parts.
inline ErrorBounds decoder_error_bounds(const ErrorBoundParams& p)
{
    if (!(p.g_lambda_k1 > 0.0)) {
        throw DomainError("decoder_error_bounds: g(lambda_{k+1}) must be positive");
    }
    if (!(p.delta > 0.0 && p.delta < 1.0) || !(p.gamma > 0.0) || !(p.s > 0.0)) {
        throw DomainError("decoder_error_bounds: need delta in (0,1), gamma > 0 and s > 0");
    }
    const double gk = std::max(0.0, p.g_lambda_k);
    const double gk1 = p.g_lambda_k1;
    const double gn = std::max(0.0, p.g_lambda_n);
    const double root_gk1 = std::sqrt(p.gamma * gk1);

    ErrorBounds b;
    const double noise_term = (2.0 + p.m_max / root_gk1) * p.noise_norm;
    const double band_term = (p.m_max * std::sqrt(gk / gk1) + std::sqrt(p.gamma * gk)) * p.x_norm;
    const double model_term =
        p.epsilon * (2.0 * p.m_max + p.m_max * std::sqrt(gn / gk1) + std::sqrt(p.gamma * gn)) * p.x_norm;
    b.alpha = (noise_term + band_term + model_term) / std::sqrt(p.s * (1.0 - p.delta));
    b.beta = p.noise_norm / root_gk1 + std::sqrt(gk / gk1) * p.x_norm + p.epsilon * std::sqrt(gn / gk1) * p.x_norm;
    return b;
}

/// Estimate as CSV, one "node,value" row per node (1-based).
inline std::string decode_result_csv(const DecodeResult& r)
{
    std::ostringstream out;
    out << "node,value\n" << std::setprecision(17);
    for (Index i = 0; i < r.estimate.size(); ++i) {
        out << i + 1 << ',' << r.estimate[i] << '\n';
    }
    return out.str();
}

/// Plain "key value" metadata sidecar.
inline std::string decode_result_metadata(const DecodeResult& r)
{
    std::ostringstream out;
    out << std::setprecision(17);
    out << "method " << r.method << '\n';
    out << "iterations " << r.iterations << '\n';
    out << "residual " << r.residual << '\n';
    out << "gamma " << r.gamma << '\n';
    out << "capped " << (r.capped ? 1 : 0) << '\n';
    out << "time_ms " << r.millis << '\n';
    return out.str();
}

} // namespace gsamp
