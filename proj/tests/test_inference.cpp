#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dashlab/agents.hpp"
#include "dashlab/errors.hpp"
#include "dashlab/inference.hpp"
#include "dashlab/rng.hpp"
#include "support.hpp"

using namespace dashlab;

namespace {

ParticipantBids simulatedParticipant(const StimulusSet& set, double cost, double lambda, double r,
                                     int rounds, std::uint64_t seed)
{
    ParticipantBids p{"P" + std::to_string(seed), {}};
    RandomStream stream(seed);
    const auto grid = BidGrid::coarse();
    int t = 1;
    for (int k = 0; k < rounds; ++k) {
        for (const auto& s : set.stimuli) {
            const double b = sampleQuantalBid(s.rule, Cost(cost), QuantalParams(lambda), RiskParam(r),
                                              grid, stream);
            p.observations.push_back({s.id, s.rule, b, t++});
        }
    }
    return p;
}

}  // namespace

TEST(Inverter, RoundTripOnGridCosts)
{
    const auto set = dashlab::testing::fixtureStimuli();
    const auto grid = BidGrid::fine();
    for (const auto& s : set.stimuli) {
        const BestResponseInverter inv(s.rule);
        for (double c = 70.0; c <= 110.0; c += 5.0) {
            const double b = bestResponse(s.rule, Cost(c), grid).bid;
            const auto got = inv.invert(b);
            EXPECT_FALSE(got.outOfRange());
            // Exact recovery unless several costs share this best response.
            EXPECT_EQ(bestResponse(s.rule, Cost(got.cost), grid).bid, b);
            EXPECT_LE(got.cost, c + 1e-9);
        }
    }
}

TEST(Inverter, ResponsesMatchBestResponse)
{
    const AllocationRule rule(116.13, 19.7);
    const BestResponseInverter inv(rule);
    const auto grid = BidGrid::fine();
    for (std::size_t j = 0; j < inv.costGrid().size(); j += 997) {
        EXPECT_EQ(inv.responses()[j], bestResponse(rule, Cost(inv.costGrid()[j]), grid).bid);
    }
}

TEST(Inverter, TieResolvesToLowerCost)
{
    const AllocationRule rule(110.0, 10.0);
    const BestResponseInverter inv(rule, BidGrid::coarse(), BidGrid::fine());
    const auto r = inv.responses();
    int ties = 0;
    for (std::size_t j = 40; j + 1 < 160; ++j) {
        if (!(r[j + 1] > r[j])) continue;
        const double mid = 0.5 * (r[j] + r[j + 1]);
        if (mid - r[j] != r[j + 1] - mid) continue;  // not an exact tie in binary
        ++ties;
        std::size_t first = j;
        while (first > 0 && r[first - 1] == r[j]) --first;
        EXPECT_EQ(inv.invert(mid).cost, inv.costGrid()[first]);
    }
    EXPECT_GT(ties, 0);
}

TEST(Inverter, FlagsOutOfRange)
{
    const AllocationRule rule(110.0, 10.0);
    const BestResponseInverter inv(rule);
    const auto below = inv.invert(inv.responses().front() - 1.0);
    EXPECT_EQ(below.range, BestResponseInverter::Range::BelowAll);
    EXPECT_EQ(below.cost, 0.0);
    const auto above = inv.invert(inv.responses().back() + 1.0);
    EXPECT_EQ(above.range, BestResponseInverter::Range::AboveAll);
    EXPECT_EQ(above.cost, 200.0);
    EXPECT_THROW(inv.invert(std::nan("")), DomainError);
}

TEST(QuantalLikelihoodTest, ZeroPrecisionIsUniform)
{
    const auto p = simulatedParticipant(dashlab::testing::fixtureStimuli(), 85.0, 0.3, 0.0, 1, 1);
    const double ll = qrLogLikelihood(p.observations, Cost(85.0), QuantalParams(0.0), RiskParam(0.0));
    EXPECT_NEAR(ll, -10.0 * std::log(201.0), 1e-9);
}

TEST(QuantalLikelihoodTest, EqualsSumOfLogProbabilities)
{
    const auto set = dashlab::testing::fixtureStimuli();
    const auto p = simulatedParticipant(set, 85.0, 0.3, 0.5, 2, 2);
    const auto grid = BidGrid::coarse();
    for (double r : {0.0, 0.5}) {
        double expected = 0.0;
        for (const auto& o : p.observations) {
            const auto probs = quantalChoiceDistribution(o.rule, Cost(80.0), QuantalParams(0.25),
                                                         RiskParam(r), grid);
            expected += std::log(probs[grid.nearestIndex(o.bid)]);
        }
        EXPECT_NEAR(qrLogLikelihood(p.observations, Cost(80.0), QuantalParams(0.25), RiskParam(r)),
                    expected, 1e-9);
    }
}

TEST(QuantalLikelihoodTest, GradientMatchesFiniteDifferences)
{
    const auto p = simulatedParticipant(dashlab::testing::fixtureStimuli(), 85.0, 0.3, 0.0, 2, 3);
    const QuantalLikelihood lik(p.observations);
    for (double r : {0.0, 0.5}) {
        const double c = 83.37, lambda = 0.21;
        double dc = 0.0, dl = 0.0;
        lik.logLikelihood(c, lambda, RiskParam(r), dc, dl);
        const double h = 1e-5;
        auto ll = [&](double cc, double ll_) {
            return lik.logLikelihood(Cost(cc), QuantalParams(ll_), RiskParam(r));
        };
        EXPECT_NEAR(dc, (ll(c + h, lambda) - ll(c - h, lambda)) / (2 * h), 1e-4);
        EXPECT_NEAR(dl, (ll(c, lambda * std::exp(h)) - ll(c, lambda * std::exp(-h))) / (2 * h), 1e-4);
    }
}

TEST(QuantalLikelihoodTest, EmptyIsAnError)
{
    EXPECT_THROW(qrLogLikelihood({}, Cost(85.0), QuantalParams(1.0), RiskParam(0.0)), DomainError);
}

TEST(FitQR, RecoversCostAndPrecision)
{
    const auto set = dashlab::testing::fixtureStimuli();
    const auto p = simulatedParticipant(set, 85.0, 0.5, 0.0, 30, 4);
    const auto r = fitQR(p);
    EXPECT_EQ(r.model, InferenceModel::Quantal);
    EXPECT_NEAR(r.inferredCost, 85.0, 2.0);
    EXPECT_NEAR(*r.lambdaHat, 0.5, 0.15);
    EXPECT_FALSE(r.lowInformation);
    EXPECT_EQ(r.observations, 300);
}

TEST(FitQRCRRA, RecoversCostAtKnownRisk)
{
    const auto set = dashlab::testing::fixtureStimuli();
    const auto p = simulatedParticipant(set, 85.0, 0.5, 0.5, 30, 5);
    const auto r = fitQRCRRA(p, RiskParam(0.5));
    EXPECT_EQ(r.model, InferenceModel::QuantalCrra);
    EXPECT_EQ(*r.rHat, 0.5);
    double lowest = 1e9;
    for (const auto& o : p.observations) lowest = std::min(lowest, o.bid);
    EXPECT_LE(r.inferredCost, lowest);
    EXPECT_NEAR(r.inferredCost, 85.0, 2.0);
}

TEST(FitQR, UninformativeBidsAreFlagged)
{
    const auto set = dashlab::testing::fixtureStimuli();
    ParticipantBids p{"flat", {}};
    for (const auto& s : set.stimuli) p.observations.push_back({s.id, s.rule, 100.0, s.id});
    FitOptions o;
    o.lambdaHi = 1e-3;
    const auto r = fitQR(p, o);
    EXPECT_TRUE(r.lowInformation);
}

TEST(InferenceMse, MeanSquaredErrorAndOutOfRangeFilter)
{
    std::vector<InferenceResult> rs(3);
    rs[0].inferredCost = 84.0;
    rs[1].inferredCost = 88.0;
    rs[2].inferredCost = 0.0;
    rs[2].outOfRange = true;
    EXPECT_DOUBLE_EQ(inferenceMSE(rs, 85.0, false), 5.0);
    EXPECT_DOUBLE_EQ(inferenceMSE(rs, 85.0, true), (1.0 + 9.0 + 85.0 * 85.0) / 3.0);
    EXPECT_THROW(inferenceMSE(std::span<const InferenceResult>{}, 85.0), DomainError);
}

TEST(ModelTag, RoundTrip)
{
    for (auto m : {InferenceModel::BestResponse, InferenceModel::Quantal, InferenceModel::QuantalCrra})
        EXPECT_EQ(parseModelTag(modelTag(m)), m);
    EXPECT_THROW(parseModelTag("logit"), ConfigError);
}

TEST(Population, NeedsSeveralParticipants)
{
    BidDataset d;
    d.participants.push_back(simulatedParticipant(dashlab::testing::fixtureStimuli(), 85.0, 0.5, 0.5, 1, 6));
    EXPECT_THROW(fitQRCRRAPopulation(d), DomainError);
}
