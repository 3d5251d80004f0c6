#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dashlab/agents.hpp"
#include "dashlab/errors.hpp"
#include "dashlab/rng.hpp"
#include "support.hpp"

using namespace dashlab;
using dashlab::testing::refWin;

namespace {

// Softmax in long double from the closed form, no shift.
std::vector<long double> oracleQuantal(double mu, double sigma, double cost, double lambda, double r,
                                       const BidGrid& grid)
{
    std::vector<long double> w(grid.size());
    long double total = 0.0L;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const long double m = grid[i] - cost;
        long double u;
        if (r == 0.0) {
            u = m * refWin(mu, sigma, grid[i]);
        } else if (m < 0) {
            w[i] = 0.0L;
            continue;
        } else {
            u = std::pow(m, 1.0L - r) / (1.0L - r) * refWin(mu, sigma, grid[i]);
        }
        w[i] = std::exp(static_cast<long double>(lambda) * u);
        total += w[i];
    }
    for (auto& x : w) x /= total;
    return w;
}

}  // namespace

TEST(Quantal, ZeroPrecisionIsExactlyUniform)
{
    const auto grid = BidGrid::coarse();
    for (double r : {0.0, 0.5}) {
        const auto p = quantalChoiceDistribution(AllocationRule(110.0, 10.0), Cost(85.0),
                                                 QuantalParams(0.0), RiskParam(r), grid);
        ASSERT_EQ(p.size(), 201u);
        for (double x : p) EXPECT_EQ(x, 1.0 / 201.0);
    }
}

TEST(Quantal, MatchesClosedFormSoftmax)
{
    const auto grid = BidGrid::coarse();
    for (double lambda : {0.05, 0.4, 2.0}) {
        for (double r : {0.0, 0.5}) {
            const auto p = quantalChoiceDistribution(AllocationRule(112.0, 9.0), Cost(85.0),
                                                     QuantalParams(lambda), RiskParam(r), grid);
            const auto q = oracleQuantal(112.0, 9.0, 85.0, lambda, r, grid);
            for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
        }
    }
}

TEST(Quantal, NormalizedOnRandomInstances)
{
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> mu(90, 130), sigma(5, 20), cost(50, 120), loglam(-9, 4.6),
        risk(0, 0.9);
    const auto grid = BidGrid::coarse();
    for (int k = 0; k < 300; ++k) {
        const auto p = quantalChoiceDistribution(AllocationRule(mu(gen), sigma(gen)), Cost(cost(gen)),
                                                 QuantalParams(std::exp(loglam(gen))),
                                                 RiskParam(risk(gen)), grid);
        double sum = 0.0;
        for (double x : p) {
            ASSERT_GE(x, 0.0);
            ASSERT_TRUE(std::isfinite(x));
            sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Quantal, RiskAverseGivesNoMassBelowCost)
{
    const auto grid = BidGrid::coarse();
    const auto p = quantalChoiceDistribution(AllocationRule(110.0, 10.0), Cost(85.0),
                                             QuantalParams(0.3), RiskParam(0.5), grid);
    for (std::size_t i = 0; i < 85; ++i) EXPECT_EQ(p[i], 0.0);
    EXPECT_GT(p[85 + 10], 0.0);
}

TEST(Quantal, HighPrecisionConcentratesOnBestResponse)
{
    const auto grid = BidGrid::coarse();
    const AllocationRule rule(116.0, 19.0);
    const auto br = bestResponse(rule, Cost(85.0), grid);
    const auto p = quantalChoiceDistribution(rule, Cost(85.0), QuantalParams(1e4), RiskParam(0.0), grid);
    EXPECT_GT(p[br.index], 0.99);
}

TEST(Quantal, SamplingMatchesDistribution)
{
    const auto grid = BidGrid::coarse();
    const WinCurve curve(AllocationRule(105.0, 6.0), grid);
    const auto p = quantalChoiceDistribution(curve, Cost(85.0), QuantalParams(2.0), RiskParam(0.0));
    RandomStream stream(17);
    const int n = 100000;
    std::vector<double> freq(grid.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        const double b = sampleQuantalBid(curve, Cost(85.0), QuantalParams(2.0), RiskParam(0.0), stream);
        freq[grid.nearestIndex(b)] += 1.0 / n;
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(freq[i] - p[i]);
    EXPECT_LE(0.5 * tv, 0.01);
}

TEST(Quantal, SampleIndexSkipsZeroMass)
{
    const std::vector<double> p{0.0, 0.5, 0.0, 0.5, 0.0};
    RandomStream stream(3);
    for (int i = 0; i < 1000; ++i) {
        const auto k = sampleIndex(p, stream);
        EXPECT_TRUE(k == 1 || k == 3);
    }
}

TEST(Quantal, RejectsBadPrecision)
{
    EXPECT_THROW(QuantalParams(-0.1), DomainError);
    EXPECT_THROW(QuantalParams(std::nan("")), DomainError);
    EXPECT_THROW(QuantalParams(std::numeric_limits<double>::infinity()), DomainError);
}

TEST(Shading, ConstantAndLinearWithClamp)
{
    const AllocationRule rule(110.0, 10.0);
    EXPECT_EQ(shadedBid(Cost(85.0), {ShadingPolicy::Kind::Constant, 10.0, 0.0}, rule), 95.0);
    EXPECT_EQ(shadedBid(Cost(85.0), {ShadingPolicy::Kind::Linear, 2.0, 0.5}, rule), 99.5);
    EXPECT_EQ(shadedBid(Cost(195.0), {ShadingPolicy::Kind::Constant, 10.0, 0.0}, rule), 200.0);
    EXPECT_EQ(shadedBid(Cost(5.0), {ShadingPolicy::Kind::Constant, -10.0, 0.0}, rule), 0.0);
}

TEST(PriorBaseline, SingleComponentIsTheBestResponse)
{
    const AllocationRule rule(113.0, 14.0);
    const RulePrior prior({{rule, 1.0}});
    const auto grid = BidGrid::fine();
    const auto a = priorBaselineBid(prior, Cost(85.0), grid);
    const auto b = bestResponse(rule, Cost(85.0), grid);
    EXPECT_EQ(a.bid, b.bid);
    EXPECT_NEAR(a.utility, b.utility, 1e-12);
}

TEST(PriorBaseline, MatchesBruteForceMixture)
{
    const auto stimuli = dashlab::testing::fixtureStimuli();
    const auto rules = stimuli.rules();
    const auto grid = BidGrid::fine();
    const auto got = priorBaselineBid(RulePrior::uniform(rules), Cost(85.0), grid);
    double bestBid = 0.0, bestU = -1e300;
    for (std::size_t i = 8500; i < grid.size(); ++i) {
        double u = 0.0;
        for (const auto& r : rules) u += (grid[i] - 85.0) * refWin(r.mu(), r.sigma(), grid[i]);
        u /= static_cast<double>(rules.size());
        if (u > bestU + 1e-12) {
            bestU = u;
            bestBid = grid[i];
        }
    }
    EXPECT_EQ(got.bid, bestBid);
    EXPECT_NEAR(got.utility, bestU, 1e-10);
}

TEST(RulePrior, ValidatesWeights)
{
    const AllocationRule rule(100.0, 10.0);
    EXPECT_THROW(RulePrior({}), ConfigError);
    EXPECT_THROW(RulePrior({{rule, -1.0}}), ConfigError);
    EXPECT_THROW(RulePrior({{rule, 0.0}}), ConfigError);
    const RulePrior p({{rule, 2.0}, {AllocationRule(110.0, 5.0), 6.0}});
    EXPECT_DOUBLE_EQ(p.components()[0].second, 0.25);
    EXPECT_DOUBLE_EQ(p.components()[1].second, 0.75);
}

TEST(QuantalStatsTest, AgreesWithMonteCarlo)
{
    const auto rules = dashlab::testing::fixtureStimuli().rules();
    const double lambda = 0.3;
    const auto stats = quantalStats(rules, Cost(85.0), QuantalParams(lambda), RiskParam(0.5));
    const auto fine = BidGrid::fine();
    const auto coarse = BidGrid::coarse();
    RandomStream stream(23);
    const int perRule = 20000;
    double ratio = 0.0, under = 0.0, neg = 0.0;
    for (const auto& rule : rules) {
        const auto br = bestResponse(rule, Cost(85.0), fine);
        const WinCurve curve(rule, coarse);
        for (int i = 0; i < perRule; ++i) {
            const double b = sampleQuantalBid(curve, Cost(85.0), QuantalParams(lambda), RiskParam(0.5), stream);
            const double eu = (b - 85.0) * refWin(rule.mu(), rule.sigma(), b);
            ratio += std::clamp(eu / br.utility, 0.0, 1.0);
            under += b < br.bid;
            neg += eu < 0.0;
        }
    }
    const double n = perRule * static_cast<double>(rules.size());
    EXPECT_NEAR(stats.meanRatio, ratio / n, 0.01);
    EXPECT_NEAR(stats.undershadingRate, under / n, 0.01);
    EXPECT_NEAR(stats.negativeUtilityRate, neg / n, 0.01);
    EXPECT_EQ(stats.negativeUtilityRate, 0.0);
}

TEST(QuantalStatsTest, MeanRatioIncreasesWithPrecision)
{
    const auto rules = dashlab::testing::fixtureStimuli().rules();
    double prev = -1.0;
    for (double lambda : {0.001, 0.01, 0.1, 0.3, 1.0, 3.0}) {
        const double r = quantalStats(rules, Cost(85.0), QuantalParams(lambda), RiskParam(0.0)).meanRatio;
        EXPECT_GT(r, prev);
        prev = r;
    }
}

TEST(Calibration, HitsRatioTarget)
{
    const auto rules = dashlab::testing::fixtureStimuli().rules();
    const double lambda = calibrateLambdaForRatio(rules, Cost(85.0), RiskParam(0.5), 0.65);
    const auto stats = quantalStats(rules, Cost(85.0), QuantalParams(lambda), RiskParam(0.5));
    EXPECT_NEAR(stats.meanRatio, 0.65, 1e-4);
}

TEST(Calibration, HitsNegativeRateTarget)
{
    const auto rules = dashlab::testing::fixtureStimuli().rules();
    const double lambda = calibrateLambdaForNegativeRate(rules, Cost(85.0), 0.10);
    const auto stats = quantalStats(rules, Cost(85.0), QuantalParams(lambda), RiskParam(0.0));
    EXPECT_NEAR(stats.negativeUtilityRate, 0.10, 1e-4);
}

TEST(Calibration, UnbracketedTargetIsAConfigError)
{
    EXPECT_THROW(calibrateLambda([](double l) { return l / (1.0 + l); }, 2.0), ConfigError);
    EXPECT_NEAR(calibrateLambda([](double l) { return l; }, 0.5, 1e-4, 100.0, 1e-9), 0.5, 1e-8);
}

TEST(AgentBid, DispatchesByKind)
{
    const AllocationRule rule(116.0, 19.0);
    const WinCurve fine(rule, BidGrid::fine()), coarse(rule, BidGrid::coarse());
    const BidContext ctx{fine, coarse, Cost(85.0)};
    RandomStream stream(1);
    EXPECT_EQ(agentBid(RationalAgent{}, ctx, stream), bestResponse(fine, Cost(85.0)).bid);
    EXPECT_EQ(agentBid(ShadingAgent{{ShadingPolicy::Kind::Constant, 7.0, 0.0}}, ctx, stream), 92.0);
    EXPECT_EQ(agentBid(PriorBaselineAgent{101.5}, ctx, stream), 101.5);
    const double q = agentBid(QuantalAgent{QuantalParams(0.3), RiskParam(0.5)}, ctx, stream);
    EXPECT_EQ(q, std::round(q));
    EXPECT_GE(q, 85.0);
}
