#include "fixtures.hpp"

#include "gsamp/coherence.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace gsamp;

namespace {

// Largest eigenvalue of the 2x2 Gram of the first two P4 eigenvectors on
// either half, 0.5 + 0.46194, frozen from an independent dense computation.
constexpr double p4_k2_spectral = 0.961939766255644;
constexpr double p4_k2_nu_sq = 1.9238795325112874;

SamplingDistribution random_distribution(Index n, Rng& rng)
{
    Eigen::VectorXd w(n);
    for (Index i = 0; i < n; ++i) {
        w[i] = 0.01 + uniform01(rng);
    }
    return SamplingDistribution::normalized(w, Provenance::custom);
}

} // namespace

TEST(LocalCoherence, P4KOne)
{
    const auto b = dense_spectrum(fixtures::p4_laplacian(), 1);
    const auto prof = local_coherence_exact(b, fixtures::p4_halves(), CoherenceFlavor::spectral);
    EXPECT_NEAR(prof.values[0], 0.5, 1e-12);
    EXPECT_NEAR(prof.values[1], 0.5, 1e-12);
}

TEST(LocalCoherence, P4KTwo)
{
    const auto b = dense_spectrum(fixtures::p4_laplacian(), 2);
    const auto spec = local_coherence_exact(b, fixtures::p4_halves(), CoherenceFlavor::spectral);
    const auto frob = local_coherence_exact(b, fixtures::p4_halves(), CoherenceFlavor::frobenius);
    EXPECT_NEAR(spec.values[0], p4_k2_spectral, 1e-12);
    EXPECT_NEAR(spec.values[1], p4_k2_spectral, 1e-12);
    EXPECT_NEAR(frob.values[0], 1.0, 1e-12);
    EXPECT_NEAR(frob.values[1], 1.0, 1e-12);
    const auto pstar = optimal_distribution(spec);
    EXPECT_NEAR(pstar[0], 0.5, 1e-12);
    EXPECT_EQ(pstar.provenance(), Provenance::p_star);
    EXPECT_NEAR(coherence(pstar, spec), p4_k2_nu_sq, 1e-12);
}

TEST(LocalCoherence, KOneFrobeniusIsGroupFraction)
{
    const auto lap = build_laplacian(fixtures::random_graph(30, 4), LaplacianVariant::combinatorial);
    const auto part = fixtures::random_partition(30, 6, 2);
    const auto b = dense_spectrum(lap, 1);
    const auto frob = local_coherence_exact(b, part, CoherenceFlavor::frobenius);
    const auto q = optimal_distribution(frob);
    EXPECT_EQ(q.provenance(), Provenance::q_star);
    for (Index l = 0; l < 6; ++l) {
        EXPECT_NEAR(frob.values[l], part.group_size(l) / 30.0, 1e-12);
        EXPECT_NEAR(q[l], part.group_size(l) / 30.0, 1e-12);
    }
}

TEST(LocalCoherence, ProfileInvariants)
{
    const auto lap = build_laplacian(fixtures::random_graph(50, 9), LaplacianVariant::normalized);
    const auto part = fixtures::random_partition(50, 10, 5);
    const Index k = 7;
    const auto b = dense_spectrum(lap, k);
    const auto spec = local_coherence_exact(b, part, CoherenceFlavor::spectral);
    const auto frob = local_coherence_exact(b, part, CoherenceFlavor::frobenius);
    EXPECT_NEAR(frob.values.sum(), static_cast<double>(k), 1e-9);
    for (Index l = 0; l < 10; ++l) {
        EXPECT_GE(spec.values[l], 0.0);
        EXPECT_LE(spec.values[l], 1.0 + 1e-12);
        EXPECT_LE(frob.values[l], static_cast<double>(k) + 1e-12);
        EXPECT_LE(spec.values[l], frob.values[l] + 1e-12);
    }
}

TEST(OptimalDistribution, SingleGroupAndDegenerate)
{
    const auto lap = build_laplacian(fixtures::random_graph(12, 1), LaplacianVariant::combinatorial);
    const GroupPartition one = GroupPartition::from_labels(std::vector<Index>(12, 0));
    const auto b = dense_spectrum(lap, 3);
    const auto spec = local_coherence_exact(b, one, CoherenceFlavor::spectral);
    const auto p = optimal_distribution(spec);
    EXPECT_DOUBLE_EQ(p[0], 1.0);
    EXPECT_NEAR(coherence(p, spec), 1.0, 1e-12);

    CoherenceProfile zero;
    zero.values = Eigen::VectorXd::Zero(3);
    EXPECT_THROW(optimal_distribution(zero), DomainError);
}

TEST(CoherenceLaws, BoundsAndMinimality)
{
    Rng rng(77);
    for (int t = 0; t < 5; ++t) {
        const auto lap = build_laplacian(fixtures::random_graph(40, 300 + t), LaplacianVariant::combinatorial);
        const auto part = fixtures::random_partition(40, 8, 400 + t);
        const Index k = 3 + t;
        const auto b = dense_spectrum(lap, k);
        const auto spec = local_coherence_exact(b, part, CoherenceFlavor::spectral);
        const auto frob = local_coherence_exact(b, part, CoherenceFlavor::frobenius);
        const auto pstar = optimal_distribution(spec);
        const auto qstar = optimal_distribution(frob);
        const double nu_star = coherence(pstar, spec);
        EXPECT_LE(nu_star, std::min<double>(k, 8) + 1e-9);
        EXPECT_NEAR(nu_star, spec.values.sum(), 1e-12);
        EXPECT_NEAR(coherence(qstar, frob), static_cast<double>(k), 1e-9);
        for (int r = 0; r < 100; ++r) {
            const auto p = random_distribution(8, rng);
            const double nu = coherence(p, spec);
            EXPECT_GE(nu, 1.0 - 1e-9);
            EXPECT_GE(coherence(p, frob), static_cast<double>(k) - 1e-9);
            EXPECT_LE(nu, coherence(p, frob) + 1e-12);
            EXPECT_GT(nu, nu_star);
        }
    }
}

TEST(SampleBound, Arithmetic)
{
    EXPECT_EQ(sample_bound(0.5, 0.1, 1.0, 1), 36);
    EXPECT_THROW(sample_bound(1.0, 0.1, 1.0, 1), DomainError);
    EXPECT_THROW(sample_bound(0.5, 0.0, 1.0, 1), DomainError);
    // nu^2 <= N keeps the bound below 3 N log(2k / xi) / delta^2
    const Index big_n = 20;
    EXPECT_LE(sample_bound(0.5, 0.01, 7.3, 10),
              static_cast<Index>(std::ceil(3.0 / 0.25 * big_n * std::log(2.0 * 10 / 0.01))));
}

TEST(SampleBound, FrobeniusOptimalScalesAsKLogK)
{
    // with nu^2 = k the bound divided by k log k stays bounded
    double prev_ratio = 0.0;
    for (Index k : {4, 16, 64, 256}) {
        const double s = static_cast<double>(sample_bound(0.5, 0.01, static_cast<double>(k), k));
        const double ratio = s / (k * std::log(static_cast<double>(k)));
        if (prev_ratio > 0.0) {
            EXPECT_LT(ratio, prev_ratio);
        }
        prev_ratio = ratio;
    }
}

TEST(EstimatePBar, P4CloseToOptimal)
{
    const auto lap = fixtures::p4_laplacian();
    const auto pbar = estimate_p_bar(lap, fixtures::p4_halves(), 2, 5);
    EXPECT_EQ(pbar.provenance(), Provenance::p_bar);
    const auto half = SamplingDistribution::uniform(2);
    EXPECT_LE(total_variation(pbar, half), 0.1);
}

TEST(EstimatePBar, SingleGroupIsPointMass)
{
    const auto lap = build_laplacian(fixtures::random_graph(15, 2), LaplacianVariant::combinatorial);
    const auto p = estimate_p_bar(lap, GroupPartition::from_labels(std::vector<Index>(15, 0)), 3, 1);
    EXPECT_DOUBLE_EQ(p[0], 1.0);
}

TEST(EstimateQBar, P4CloseToOptimal)
{
    EstimatorOptions opt;
    opt.probes = 500;
    const auto qbar = estimate_q_bar(fixtures::p4_laplacian(), fixtures::p4_halves(), 2, 9, opt);
    EXPECT_LE(total_variation(qbar, SamplingDistribution::uniform(2)), 0.1);
}

TEST(EstimateQBar, KOneMatchesGroupFractions)
{
    const auto lap = build_laplacian(fixtures::random_graph(60, 14), LaplacianVariant::combinatorial);
    const auto part = fixtures::random_partition(60, 6, 3);
    const auto full = dense_spectrum(lap, 60);
    EstimatorOptions opt;
    opt.probes = 400;
    opt.lambda_k = 0.5 * full.lambda(2);
    const auto q = estimate_q_bar(lap, part, 1, 4, opt);
    Eigen::VectorXd frac(6);
    for (Index l = 0; l < 6; ++l) {
        frac[l] = part.group_size(l) / 60.0;
    }
    EXPECT_LE(total_variation(q, SamplingDistribution(frac, Provenance::q_star)), 0.1);
}

TEST(EstimateBars, AccurateOnDeskGraphWithSharedLambdaK)
{
    const auto lap = build_laplacian(fixtures::random_graph(120, 8), LaplacianVariant::combinatorial);
    const auto part = fixtures::random_partition(120, 12, 8);
    const Index k = 6;
    const auto b = dense_spectrum(lap, k + 1);
    const auto pstar = optimal_distribution(local_coherence_exact(dense_spectrum(lap, k), part, CoherenceFlavor::spectral));
    const auto qstar = optimal_distribution(local_coherence_exact(dense_spectrum(lap, k), part, CoherenceFlavor::frobenius));
    EstimatorOptions opt;
    opt.lambda_k = 0.5 * (b.lambda(k) + b.lambda(k + 1));
    opt.probes = 200;
    EXPECT_LE(total_variation(estimate_p_bar(lap, part, k, 1, opt), pstar), 0.15);
    EXPECT_LE(total_variation(estimate_q_bar(lap, part, k, 1, opt), qstar), 0.15);
}

TEST(EstimatePBar, DeterministicAcrossThreadCounts)
{
    const auto lap = build_laplacian(fixtures::random_graph(80, 3), LaplacianVariant::combinatorial);
    const auto part = fixtures::random_partition(80, 10, 1);
    EstimatorOptions one;
    one.threads = 1;
    EstimatorOptions four = one;
    four.threads = 4;
    const auto a = estimate_p_bar(lap, part, 5, 42, one);
    const auto b = estimate_p_bar(lap, part, 5, 42, four);
    EXPECT_EQ(a.probs(), b.probs());
}

TEST(ProfileCsv, Header)
{
    CoherenceProfile p;
    p.values = (Eigen::VectorXd(2) << 0.25, 0.75).finished();
    p.flavor = CoherenceFlavor::frobenius;
    const auto csv = profile_to_csv(p);
    EXPECT_EQ(csv.rfind("group_id,value,flavor\n1,0.25,frobenius\n", 0), 0u);
}
