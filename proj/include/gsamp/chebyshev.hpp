#pragma once

#include "gsamp/error.hpp"
#include "gsamp/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace gsamp {

/// Polynomial r(t) = sum_j c_j T_j(2t / lambda_max - 1) on [0, lambda_max].
struct PolynomialFilter {
    std::vector<double> coeffs;
    double lambda_max = 0.0;
    bool damped = false;
    std::string target;

    int order() const noexcept { return static_cast<int>(coeffs.size()) - 1; }

    /// Evaluates r(t) with the same three-term recurrence used on operators.
    double operator()(double t) const;

    /// Direct summation of c_j cos(j arccos x), valid for t in [0, lambda_max].
    double evaluate_direct(double t) const
    {
        const double x = std::clamp(2.0 * t / lambda_max - 1.0, -1.0, 1.0);
        const double theta = std::acos(x);
        double acc = 0.0;
        for (std::size_t j = 0; j < coeffs.size(); ++j) {
            acc += coeffs[j] * std::cos(static_cast<double>(j) * theta);
        }
        return acc;
    }
};

/// Three-term Chebyshev recurrence on T_j(S) x, where S = (2/lambda_max) L - I
/// and `apply` realizes L. V is any vector-space type (a scalar, a vector or
/// a block of signals).
template <class V, class ApplyFn>
V chebyshev_recurrence(const std::vector<double>& coeffs, double lambda_max, const V& x, ApplyFn&& apply)
{
    if (coeffs.empty()) {
        return V(x * 0.0);
    }
    V result = V(coeffs[0] * x);
    if (coeffs.size() == 1) {
        return result;
    }
    if (!(lambda_max > 0.0)) {
        throw DomainError("Chebyshev filter: lambda_max must be positive");
    }
    const double a = 2.0 / lambda_max;
    V t_prev = x;
    V t_cur = V(a * apply(x) - x);
    result = V(result + coeffs[1] * t_cur);
    for (std::size_t j = 2; j < coeffs.size(); ++j) {
        V t_next = V(2.0 * (a * apply(t_cur) - t_cur) - t_prev);
        result = V(result + coeffs[j] * t_next);
        t_prev = std::move(t_cur);
        t_cur = std::move(t_next);
    }
    return result;
}

inline double PolynomialFilter::operator()(double t) const
{
    return chebyshev_recurrence(coeffs, lambda_max, 1.0, [t](double v) { return t * v; });
}

/// Jackson kernel damping factors g_0..g_d.
inline std::vector<double> jackson_damping(int order)
{
    const double alpha = std::numbers::pi / (order + 2);
    std::vector<double> g(static_cast<std::size_t>(order) + 1);
    for (int j = 0; j <= order; ++j) {
        g[j] = ((1.0 - static_cast<double>(j) / (order + 2)) * std::sin(alpha) * std::cos(j * alpha) +
                std::cos(alpha) * std::sin(j * alpha) / (order + 2)) /
               std::sin(alpha);
    }
    return g;
}

/// Chebyshev (optionally Jackson-damped) expansion of the ideal low-pass
/// filter that is 1 on [0, lambda_c] and 0 on (lambda_c, lambda_max].
inline PolynomialFilter lowpass_filter(double lambda_c, double lambda_max, int order, bool jackson = true)
{
    if (order < 1) {
        throw DomainError("lowpass_filter: order must be at least 1");
    }
    if (!(lambda_c > 0.0) || !(lambda_c < lambda_max)) {
        throw DomainError("lowpass_filter: cutoff must lie in (0, lambda_max)");
    }
    const double b = 2.0 * lambda_c / lambda_max - 1.0;
    const double theta = std::acos(b);
    PolynomialFilter f;
    f.lambda_max = lambda_max;
    f.damped = jackson;
    f.coeffs.resize(static_cast<std::size_t>(order) + 1);
    f.coeffs[0] = (std::numbers::pi - theta) / std::numbers::pi;
    for (int j = 1; j <= order; ++j) {
        f.coeffs[j] = -2.0 * std::sin(j * theta) / (j * std::numbers::pi);
    }
    if (jackson) {
        const auto g = jackson_damping(order);
        for (int j = 0; j <= order; ++j) {
            f.coeffs[j] *= g[j];
        }
    }
    std::ostringstream tgt;
    tgt << std::setprecision(17) << "lowpass:" << lambda_c;
    f.target = tgt.str();
    return f;
}

/// r(L) x.
template <SymmetricOperator Op>
Eigen::VectorXd apply_filter(const Op& op, const PolynomialFilter& f, const Eigen::VectorXd& x)
{
    if (x.size() != op.size()) {
        throw ShapeError("apply_filter: signal length mismatch");
    }
    return chebyshev_recurrence(f.coeffs, f.lambda_max, x,
                                [&op](const Eigen::VectorXd& v) -> Eigen::VectorXd { return op.apply(v); });
}

/// r(L) X for a block of signals, one per column.
inline Eigen::MatrixXd apply_filter(const Laplacian& lap, const PolynomialFilter& f, const Eigen::MatrixXd& x)
{
    if (x.rows() != lap.size()) {
        throw ShapeError("apply_filter: signal length mismatch");
    }
    return chebyshev_recurrence(f.coeffs, f.lambda_max, x,
                                [&lap](const Eigen::MatrixXd& v) -> Eigen::MatrixXd { return lap.apply(v); });
}

/// Small text record: "chebyshev-filter", lambda_max, damped, target, coefficients.
inline std::string serialize(const PolynomialFilter& f)
{
    std::ostringstream out;
    out << std::setprecision(17);
    out << "chebyshev-filter 1\n";
    out << "lambda_max " << f.lambda_max << "\n";
    out << "damped " << (f.damped ? 1 : 0) << "\n";
    out << "target " << (f.target.empty() ? "-" : f.target) << "\n";
    out << "coeffs " << f.coeffs.size();
    for (double c : f.coeffs) {
        out << ' ' << c;
    }
    out << "\n";
    return out.str();
}

inline PolynomialFilter deserialize_filter(const std::string& text)
{
    std::istringstream in(text);
    std::string key;
    int version = 0;
    PolynomialFilter f;
    int damped = 0;
    std::size_t count = 0;
    if (!(in >> key >> version) || key != "chebyshev-filter" || version != 1) {
        throw ParseError("not a chebyshev-filter record");
    }
    if (!(in >> key >> f.lambda_max) || key != "lambda_max") throw ParseError("missing lambda_max");
    if (!(in >> key >> damped) || key != "damped") throw ParseError("missing damped");
    if (!(in >> key >> f.target) || key != "target") throw ParseError("missing target");
    if (!(in >> key >> count) || key != "coeffs") throw ParseError("missing coeffs");
    f.damped = damped != 0;
    if (f.target == "-") {
        f.target.clear();
    }
    f.coeffs.resize(count);
    for (auto& c : f.coeffs) {
        if (!(in >> c)) {
            throw ParseError("truncated coefficient list");
        }
    }
    return f;
}

} // namespace gsamp
