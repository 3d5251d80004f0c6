#pragma once

#include <functional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "dashlab/auction.hpp"

namespace dashlab {

// Logit precision lambda in 1/AC.
struct QuantalParams {
    explicit QuantalParams(double lambda);
    double lambda;
};

struct ShadingPolicy {
    enum class Kind { Constant, Linear };
    Kind kind = Kind::Constant;
    double offset = 0.0;
    double slope = 0.0;  // linear kind only
};

// Finite mixture over allocation rules; weights normalized on construction.
class RulePrior {
public:
    explicit RulePrior(std::vector<std::pair<AllocationRule, double>> components);
    static RulePrior uniform(std::span<const AllocationRule> rules);

    const std::vector<std::pair<AllocationRule, double>>& components() const
    {
        return components_;
    }
    std::size_t size() const { return components_.size(); }

private:
    std::vector<std::pair<AllocationRule, double>> components_;
};

// Softmax of lambda * utility over the grid of the curve.
//
// lambda == 0 returns exactly 1/|B| everywhere. For r > 0 bids below cost carry
// utility -inf and receive probability zero.
std::vector<double> quantalChoiceDistribution(const WinCurve& curve, Cost cost,
                                              QuantalParams params, RiskParam risk);
std::vector<double> quantalChoiceDistribution(const AllocationRule& rule, Cost cost,
                                              QuantalParams params, RiskParam risk,
                                              const BidGrid& grid);

// Inverse-CDF draw from a probability vector; returns the index.
std::size_t sampleIndex(std::span<const double> probabilities, RandomStream& stream);

double sampleQuantalBid(const WinCurve& curve, Cost cost, QuantalParams params, RiskParam risk,
                        RandomStream& stream);
double sampleQuantalBid(const AllocationRule& rule, Cost cost, QuantalParams params,
                        RiskParam risk, const BidGrid& grid, RandomStream& stream);

// cost + offset (+ slope * (mu - cost) for the linear kind), clamped to the grid.
double shadedBid(Cost cost, const ShadingPolicy& policy, const AllocationRule& rule,
                 const BidGrid& grid = BidGrid::fine());

// Grid argmax of the prior-weighted expected utility; lowest bid on ties.
BestResponse priorBaselineBid(const RulePrior& prior, Cost cost,
                              const BidGrid& grid = BidGrid::fine());

// Agent kinds the experiment runner can field.
struct RationalAgent {
    RiskParam risk{};
};
struct QuantalAgent {
    QuantalParams params{1.0};
    RiskParam risk{};
};
struct ShadingAgent {
    ShadingPolicy policy{};
};
struct PriorBaselineAgent {
    // Bid computed once from the stimulus prior; identical in every state.
    double bid = 0.0;
};
using AgentSpec = std::variant<RationalAgent, QuantalAgent, ShadingAgent, PriorBaselineAgent>;

// What an agent sees in one trial.
struct BidContext {
    const WinCurve& fine;
    const WinCurve& coarse;
    Cost cost;
};

double agentBid(const AgentSpec& agent, const BidContext& context, RandomStream& stream);

// Exact (not simulated) population statistics of a quantal bidder over a set of
// stimuli, with the risk-neutral optimum as the reference.
struct QuantalStats {
    double meanRatio = 0.0;          // mean bid optimization ratio
    double undershadingRate = 0.0;   // Pr(bid < risk-neutral best response)
    double negativeUtilityRate = 0.0;
};
QuantalStats quantalStats(std::span<const AllocationRule> stimuli, Cost cost,
                          QuantalParams params, RiskParam risk,
                          const BidGrid& choiceGrid = BidGrid::coarse(),
                          const BidGrid& optimizationGrid = BidGrid::fine());

// Bisection on log lambda over [lo, hi] for an increasing (or decreasing)
// scalar metric of lambda until it hits target within tolerance.
double calibrateLambda(const std::function<double(double)>& metric, double target,
                       double lo = 1e-4, double hi = 100.0, double tolerance = 1e-4);

// lambda giving the requested exact mean ratio (default population: r = 0.5, 0.65).
double calibrateLambdaForRatio(std::span<const AllocationRule> stimuli, Cost cost,
                               RiskParam risk, double targetRatio = 0.65);
// Risk-neutral lambda giving the requested rate of negative-utility bids.
double calibrateLambdaForNegativeRate(std::span<const AllocationRule> stimuli, Cost cost,
                                      double targetRate = 0.10);

}  // namespace dashlab
