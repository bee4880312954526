#include "fixtures.hpp"

#include "gsamp/chebyshev.hpp"
#include "gsamp/eigcount.hpp"
#include "gsamp/spectral.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gsamp;

namespace {

// Path graph P4 spectrum 2 - 2cos(pi j / 4), frozen from an independent
// dense eigensolve.
constexpr double p4_lambda[] = {0.0, 0.5857864376269050, 2.0, 3.414213562373095};

Eigen::MatrixXd oracle_filter_matrix(const SpectralBasis& full, const PolynomialFilter& f)
{
    Eigen::VectorXd r(full.all_lambdas.size());
    for (Index i = 0; i < r.size(); ++i) {
        r[i] = f(full.all_lambdas[i]);
    }
    return full.vectors * r.asDiagonal() * full.vectors.transpose();
}

} // namespace

TEST(DenseSpectrum, P4Eigenvalues)
{
    const auto b = dense_spectrum(fixtures::p4_laplacian(), 4);
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(b.all_lambdas[i], p4_lambda[i], 1e-12);
    }
}

TEST(DenseSpectrum, P4FirstEigenvectorIsPositiveConstant)
{
    const auto b = dense_spectrum(fixtures::p4_laplacian(), 2);
    ASSERT_EQ(b.vectors.cols(), 2);
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(b.vectors(i, 0), 0.5, 1e-12);
    }
    EXPECT_NEAR(b.lambdas[1], p4_lambda[1], 1e-12);
}

TEST(DenseSpectrum, FullBasisOrthogonalAndEigen)
{
    const auto lap = build_laplacian(fixtures::random_graph(50, 6), LaplacianVariant::combinatorial);
    const auto b = dense_spectrum(lap, 50);
    EXPECT_LT((b.vectors.transpose() * b.vectors - Eigen::MatrixXd::Identity(50, 50)).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::MatrixXd lu = lap.to_dense() * b.vectors;
    EXPECT_LT((lu - b.vectors * b.lambdas.asDiagonal()).norm(), 1e-8 * b.lambda_max());
    EXPECT_NEAR(b.lambdas[0], 0.0, 1e-10);
}

TEST(DenseSpectrum, SignConvention)
{
    const auto lap = build_laplacian(fixtures::random_graph(20, 1), LaplacianVariant::normalized);
    const auto b = dense_spectrum(lap, 20);
    for (Index c = 0; c < 20; ++c) {
        for (Index r = 0; r < 20; ++r) {
            if (std::abs(b.vectors(r, c)) > 1e-12) {
                EXPECT_GT(b.vectors(r, c), 0.0);
                break;
            }
        }
    }
}

TEST(DenseSpectrum, Guards)
{
    EXPECT_THROW(dense_spectrum(fixtures::p4_laplacian(), 5), DomainError);
    const auto big = std::make_shared<const SparseGraph>(path_graph(dense_spectrum_limit + 1));
    EXPECT_THROW(dense_spectrum(build_laplacian(big, LaplacianVariant::combinatorial), 1), SizeError);
}

TEST(LambdaMax, P4UpperEstimate)
{
    const double l = estimate_lambda_max(fixtures::p4_laplacian());
    EXPECT_GE(l, p4_lambda[3]);
    EXPECT_LE(l, 3.45);
}

TEST(LambdaMax, NormalizedAndEmpty)
{
    const auto lap = build_laplacian(fixtures::random_graph(100, 3), LaplacianVariant::normalized);
    EXPECT_LE(estimate_lambda_max(lap), 2.02);
    const auto iso = std::make_shared<const SparseGraph>(fixtures::graph_from_text("# n=6\n"));
    EXPECT_EQ(estimate_lambda_max(build_laplacian(iso, LaplacianVariant::combinatorial)), 0.0);
}

TEST(LowpassFilter, PassAndStopBands)
{
    const auto f = lowpass_filter(1.0, 3.45, 50);
    EXPECT_GE(f(0.0), 0.9);
    EXPECT_LE(f(0.0), 1.1);
    EXPECT_GE(f(3.45), -0.1);
    EXPECT_LE(f(3.45), 0.1);
    EXPECT_EQ(f.order(), 50);
    EXPECT_TRUE(f.damped);
}

TEST(LowpassFilter, RecurrenceMatchesDirectSum)
{
    for (bool jackson : {true, false}) {
        const auto f = lowpass_filter(0.7, 2.5, 40, jackson);
        for (int i = 0; i <= 200; ++i) {
            const double t = 2.5 * i / 200.0;
            EXPECT_NEAR(f(t), f.evaluate_direct(t), 1e-12);
        }
    }
}

TEST(LowpassFilter, DampedOvershootBounded)
{
    for (double cut : {0.1, 0.5, 1.0, 2.0, 3.3}) {
        const auto f = lowpass_filter(cut, 3.45, 50);
        for (int i = 0; i < 1000; ++i) {
            const double v = f(3.45 * i / 999.0);
            EXPECT_GE(v, -0.15);
            EXPECT_LE(v, 1.15);
        }
    }
}

TEST(LowpassFilter, CutoffOutsideDomainRejected)
{
    EXPECT_THROW(lowpass_filter(0.0, 2.0, 10), DomainError);
    EXPECT_THROW(lowpass_filter(2.0, 2.0, 10), DomainError);
    EXPECT_THROW(lowpass_filter(1.0, 2.0, 0), DomainError);
}

TEST(LowpassFilter, P4CloseToIdealProjector)
{
    const auto lap = fixtures::p4_laplacian();
    const auto full = dense_spectrum(lap, 4);
    const auto f = lowpass_filter(1.0, estimate_lambda_max(lap), 50);
    Eigen::MatrixXd r(4, 4);
    for (int c = 0; c < 4; ++c) {
        r.col(c) = apply_filter(lap, f, Eigen::VectorXd(Eigen::VectorXd::Unit(4, c)));
    }
    const Eigen::MatrixXd ideal = full.vectors.leftCols(2) * full.vectors.leftCols(2).transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(r - ideal);
    EXPECT_LE(svd.singularValues()[0], 0.2);
}

TEST(ApplyFilter, ConstantPolynomialIsIdentity)
{
    PolynomialFilter f;
    f.coeffs = {1.0};
    f.lambda_max = 4.0;
    Rng rng(3);
    const Eigen::VectorXd x = standard_normal(4, rng);
    EXPECT_EQ(apply_filter(fixtures::p4_laplacian(), f, x), x);
}

TEST(ApplyFilter, EigenvectorResponse)
{
    const auto lap = fixtures::p4_laplacian();
    const Eigen::VectorXd u1 = Eigen::VectorXd::Constant(4, 0.5);
    const auto f = lowpass_filter(1.0, estimate_lambda_max(lap), 50);
    EXPECT_LE((apply_filter(lap, f, u1) - u1).norm(), 0.05);
}

TEST(ApplyFilter, LinearSymmetricAndSpectralMapping)
{
    const auto lap = build_laplacian(fixtures::random_graph(40, 8), LaplacianVariant::combinatorial);
    const auto full = dense_spectrum(lap, 40);
    const auto f = lowpass_filter(0.4 * full.lambda_max(), estimate_lambda_max(lap), 30);
    const Eigen::MatrixXd oracle = oracle_filter_matrix(full, f);
    Rng rng(12);
    for (int t = 0; t < 10; ++t) {
        const Eigen::VectorXd x = standard_normal(40, rng);
        const Eigen::VectorXd y = standard_normal(40, rng);
        const Eigen::VectorXd rx = apply_filter(lap, f, x);
        EXPECT_LT((apply_filter(lap, f, Eigen::VectorXd(x + y)) - rx - apply_filter(lap, f, y)).norm(), 1e-12);
        EXPECT_NEAR(rx.dot(y), x.dot(apply_filter(lap, f, y)), 1e-10);
        EXPECT_LT((rx - oracle * x).norm(), 1e-9);
    }
    const Eigen::MatrixXd block = standard_normal(40, 3, rng);
    const Eigen::MatrixXd rb = apply_filter(lap, f, block);
    EXPECT_LT((rb.col(1) - apply_filter(lap, f, Eigen::VectorXd(block.col(1)))).norm(), 1e-12);
}

TEST(ApplyFilter, ShapeMismatch)
{
    const auto f = lowpass_filter(1.0, 3.5, 5);
    EXPECT_THROW(apply_filter(fixtures::p4_laplacian(), f, Eigen::VectorXd::Ones(3)), ShapeError);
}

TEST(FilterRecord, RoundTrip)
{
    const auto f = lowpass_filter(0.3, 1.9, 12);
    const auto g = deserialize_filter(serialize(f));
    EXPECT_EQ(g.coeffs, f.coeffs);
    EXPECT_EQ(g.lambda_max, f.lambda_max);
    EXPECT_EQ(g.damped, f.damped);
    EXPECT_EQ(g.target, f.target);
    EXPECT_THROW(deserialize_filter("garbage"), ParseError);
}

TEST(Eigcount, FullPassCountsEverything)
{
    const auto lap = build_laplacian(fixtures::random_graph(60, 2), LaplacianVariant::combinatorial);
    const double lmax = estimate_lambda_max(lap);
    const double c = estimate_eigcount(lap, 2 * lmax, 20, 4);
    EXPECT_NEAR(c, 60.0, 6.0);
}

TEST(Eigcount, P4CountAtOne)
{
    const double c = estimate_eigcount(fixtures::p4_laplacian(), 1.0, 200, 7);
    EXPECT_GE(c, 1.5);
    EXPECT_LE(c, 2.5);
}

TEST(Eigcount, EmptyPassBand)
{
    EXPECT_LT(estimate_eigcount(fixtures::p4_laplacian(), -0.5, 20, 1), 0.5);
    EXPECT_THROW(estimate_eigcount(fixtures::p4_laplacian(), 1.0, 0, 1), DomainError);
}

TEST(Eigcount, AverageOverSeedsNearTrueCount)
{
    const auto lap = build_laplacian(fixtures::random_graph(80, 21), LaplacianVariant::combinatorial);
    const auto full = dense_spectrum(lap, 80);
    const double lmax = estimate_lambda_max(lap);
    for (Index k : {10, 30}) {
        const double thr = 0.5 * (full.lambda(k) + full.lambda(k + 1));
        double mean = 0.0;
        for (int seed = 0; seed < 50; ++seed) {
            mean += estimate_eigcount(lap, thr, default_probe_count(80), seed, {50, true, lmax});
        }
        mean /= 50.0;
        EXPECT_NEAR(mean, static_cast<double>(k), 0.15 * k);
    }
}

TEST(LambdaK, P4Bracket)
{
    const auto est = estimate_lambda_k(fixtures::p4_laplacian(), 2, 50, 20, 30, 3);
    EXPECT_GT(est.value, p4_lambda[1]);
    EXPECT_LT(est.value, p4_lambda[2]);
}

TEST(LambdaK, SaturatesAtN)
{
    const auto lap = fixtures::p4_laplacian();
    const auto est = estimate_lambda_k(lap, 4, 50, 20, 30, 3);
    EXPECT_GE(est.value, p4_lambda[3] * 0.95);
}

TEST(LambdaK, SingleZeroEigenvalue)
{
    const auto lap = build_laplacian(fixtures::random_graph(30, 1), LaplacianVariant::combinatorial);
    const auto full = dense_spectrum(lap, 30);
    const auto est = estimate_lambda_k(lap, 1, 50, default_probe_count(30), 30, 11);
    EXPECT_LT(est.value, full.lambda(2));
}

TEST(LambdaK, LandsInGapForMostSeeds)
{
    // three loosely coupled communities: a clear gap after lambda_3
    std::vector<Index> block;
    const auto g = std::make_shared<const SparseGraph>(community_graph({20, 20, 20}, 0.5, 0.01, 4, &block));
    const auto lap = build_laplacian(g, LaplacianVariant::combinatorial);
    const auto full = dense_spectrum(lap, 60);
    ASSERT_GE((full.lambda(4) - full.lambda(3)) / full.lambda(4), 0.2);
    // the plateau count carries chi-square noise of variance 2k/R, so R must
    // be large enough to resolve unit steps
    int hits = 0;
    for (int seed = 0; seed < 20; ++seed) {
        const auto est = estimate_lambda_k(lap, 3, 50, 100, 30, seed);
        hits += est.value > full.lambda(3) && est.value < full.lambda(4);
    }
    EXPECT_GE(hits, 18);
}
