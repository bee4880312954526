#include "fixtures.hpp"

#include "gsamp/rip.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gsamp;

TEST(LowerRip, SingleGroupIsZero)
{
    const auto lap = build_laplacian(fixtures::random_graph(20, 3), LaplacianVariant::combinatorial);
    const auto b = dense_spectrum(lap, 4);
    const GroupPartition one = GroupPartition::from_labels(std::vector<Index>(20, 0));
    for (Index s : {1, 3, 10}) {
        const SampleOperators ops(one, draw_groups(SamplingDistribution::uniform(1), s, 1));
        EXPECT_NEAR(lower_rip_constant(b, ops), 0.0, 1e-10);
    }
}

TEST(LowerRip, MissingConcentratedGroupIsOne)
{
    // two components: the second eigenvector lives on either component alone
    const auto g = std::make_shared<const SparseGraph>(fixtures::graph_from_text("1 2 1\n2 3 1\n4 5 1\n5 6 1\n"));
    const auto lap = build_laplacian(g, LaplacianVariant::combinatorial);
    const auto b = dense_spectrum(lap, 2);
    const auto part = GroupPartition::from_labels({0, 0, 0, 1, 1, 1});
    const SampleOperators ops(part, SampleDraw{{0, 0, 0}, SamplingDistribution::uniform(2)});
    EXPECT_NEAR(lower_rip_constant(b, ops), 1.0, 1e-10);
}

TEST(LowerRip, P4SingleDrawKOne)
{
    const auto b = dense_spectrum(fixtures::p4_laplacian(), 1);
    const SampleOperators ops(fixtures::p4_halves(), SampleDraw{{0}, SamplingDistribution::uniform(2)});
    EXPECT_NEAR(lower_rip_constant(b, ops), 0.0, 1e-12);
}

TEST(LowerRip, GramRouteMatchesOperatorRoute)
{
    const auto lap = build_laplacian(fixtures::random_graph(60, 5), LaplacianVariant::combinatorial);
    const auto part = fixtures::random_partition(60, 12, 5);
    const auto b = dense_spectrum(lap, 6);
    const auto grams = group_grams(b, part);
    Rng rng(4);
    Eigen::VectorXd w(12);
    for (Index l = 0; l < 12; ++l) {
        w[l] = 0.1 + uniform01(rng);
    }
    const auto dist = SamplingDistribution::normalized(w, Provenance::custom);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto draw = draw_groups(dist, 15, seed);
        const double a = lower_rip_constant(b, SampleOperators(part, draw));
        const double c = lower_rip_constant(grams, draw, b.k);
        EXPECT_NEAR(a, c, 1e-10);
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(RipCurveTest, EdgeCasesAndDeterminism)
{
    const auto lap = build_laplacian(fixtures::random_graph(50, 1), LaplacianVariant::combinatorial);
    const auto part = fixtures::random_partition(50, 10, 1);
    const auto b = dense_spectrum(lap, 3);
    const auto dist = SamplingDistribution::uniform(10);
    const std::vector<Index> grid = {0, 2, 5, 10, 20, 40};
    const auto c1 = rip_curve(b, part, dist, grid, 1, 0.995, 7);
    for (double p : c1.probs) {
        EXPECT_TRUE(p == 0.0 || p == 1.0);
    }
    EXPECT_EQ(c1.probs[0], 0.0);
    const auto a = rip_curve(b, part, dist, grid, 50, 0.995, 3, 1);
    const auto c = rip_curve(b, part, dist, grid, 50, 0.995, 3, 4);
    EXPECT_EQ(rip_curve_csv(a), rip_curve_csv(c));
    for (std::size_t i = 1; i < a.probs.size(); ++i) {
        EXPECT_GE(a.probs[i], a.probs[i - 1] - 0.1);
    }
    EXPECT_EQ(rip_curve_csv(a).rfind("s,probability,trials,threshold\n0,0,50,0.995", 0), 0u);
}

TEST(RipCurveTest, ReestimatedDistributionsRun)
{
    const auto lap = build_laplacian(fixtures::random_graph(40, 2), LaplacianVariant::combinatorial);
    const auto part = fixtures::random_partition(40, 8, 2);
    const auto q = estimate_q_bar(lap, part, 3, 1);
    const auto c = rip_curve(lap, part, q, 3, {4, 16}, 5, 0.995, 2);
    EXPECT_EQ(c.provenance, Provenance::q_bar);
    EXPECT_EQ(c.probs.size(), 2u);
}

TEST(ExpectationCheck, P4Converges)
{
    const auto b = dense_spectrum(fixtures::p4_laplacian(), 2);
    const auto dist = SamplingDistribution::normalized((Eigen::VectorXd(2) << 0.3, 0.7).finished(), Provenance::custom);
    EXPECT_LE(expectation_check(fixtures::p4_halves(), dist, b, 100000, 1), 0.05);
}

TEST(ExpectationCheck, WholeGraphGroupIsExact)
{
    const auto b = dense_spectrum(fixtures::p4_laplacian(), 1);
    const GroupPartition one = GroupPartition::from_labels({0, 0, 0, 0});
    const SamplingDistribution point(Eigen::VectorXd::Ones(1), Provenance::custom);
    EXPECT_NEAR(expectation_check(one, point, b, 10, 1), 0.0, 1e-10);
}

TEST(ExpectationCheck, MonteCarloRate)
{
    const auto lap = build_laplacian(fixtures::random_graph(30, 8), LaplacianVariant::combinatorial);
    const auto part = fixtures::random_partition(30, 6, 8);
    const auto b = dense_spectrum(lap, 3);
    const auto dist = SamplingDistribution::uniform(6);
    double small = 0.0;
    double large = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        small += expectation_check(part, dist, b, 1000, seed);
        large += expectation_check(part, dist, b, 100000, seed + 1000);
    }
    const double ratio = small / large;
    EXPECT_GE(ratio, 5.0);
    EXPECT_LE(ratio, 20.0);
}
