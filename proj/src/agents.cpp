#include "dashlab/agents.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dashlab/errors.hpp"
#include "dashlab/rng.hpp"

namespace dashlab {

QuantalParams::QuantalParams(double l) : lambda(l)
{
    if (!std::isfinite(l) || l < 0.0) {
        throw DomainError("quantal precision must be finite and >= 0, got " + std::to_string(l));
    }
}

RulePrior::RulePrior(std::vector<std::pair<AllocationRule, double>> components)
    : components_(std::move(components))
{
    if (components_.empty()) {
        throw ConfigError("rule prior is empty");
    }
    double total = 0.0;
    for (const auto& [rule, w] : components_) {
        if (!std::isfinite(w) || w < 0.0) {
            throw ConfigError("rule prior weights must be finite and nonnegative");
        }
        total += w;
    }
    if (!(total > 0.0)) {
        throw ConfigError("rule prior weights sum to zero");
    }
    if (std::abs(total - 1.0) > 1e-9) {
        for (auto& component : components_) {
            component.second /= total;
        }
    }
}

RulePrior RulePrior::uniform(std::span<const AllocationRule> rules)
{
    std::vector<std::pair<AllocationRule, double>> components;
    components.reserve(rules.size());
    for (const auto& rule : rules) {
        components.emplace_back(rule, 1.0 / static_cast<double>(rules.size()));
    }
    return RulePrior(std::move(components));
}

std::vector<double> quantalChoiceDistribution(const WinCurve& curve, Cost cost,
                                              QuantalParams params, RiskParam risk)
{
    const std::size_t n = curve.size();
    if (params.lambda == 0.0) {
        return std::vector<double>(n, 1.0 / static_cast<double>(n));
    }
    std::vector<double> logits(n);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        logits[i] = params.lambda * curve.utilityAt(i, cost, risk);
        top = std::max(top, logits[i]);
    }
    double total = 0.0;
    for (auto& x : logits) {
        x = std::exp(x - top);
        total += x;
    }
    for (auto& x : logits) {
        x /= total;
    }
    return logits;
}

std::vector<double> quantalChoiceDistribution(const AllocationRule& rule, Cost cost,
                                              QuantalParams params, RiskParam risk,
                                              const BidGrid& grid)
{
    return quantalChoiceDistribution(WinCurve(rule, grid), cost, params, risk);
}

std::size_t sampleIndex(std::span<const double> probabilities, RandomStream& stream)
{
    double total = 0.0;
    for (double p : probabilities) {
        total += p;
    }
    const double u = stream.uniform() * total;
    double cumulative = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (probabilities[i] <= 0.0) {
            continue;
        }
        cumulative += probabilities[i];
        last = i;
        if (cumulative > u) {
            return i;
        }
    }
    return last;
}

double sampleQuantalBid(const WinCurve& curve, Cost cost, QuantalParams params, RiskParam risk,
                        RandomStream& stream)
{
    const auto probs = quantalChoiceDistribution(curve, cost, params, risk);
    return curve.grid()[sampleIndex(probs, stream)];
}

double sampleQuantalBid(const AllocationRule& rule, Cost cost, QuantalParams params,
                        RiskParam risk, const BidGrid& grid, RandomStream& stream)
{
    return sampleQuantalBid(WinCurve(rule, grid), cost, params, risk, stream);
}

double shadedBid(Cost cost, const ShadingPolicy& policy, const AllocationRule& rule,
                 const BidGrid& grid)
{
    double bid = cost.value + policy.offset;
    if (policy.kind == ShadingPolicy::Kind::Linear) {
        bid += policy.slope * (rule.mu() - cost.value);
    }
    return std::clamp(bid, grid.lo(), grid.hi());
}

BestResponse priorBaselineBid(const RulePrior& prior, Cost cost, const BidGrid& grid)
{
    if (!grid.covers(cost.value)) {
        throw ConfigError("bid grid does not cover cost");
    }
    std::vector<WinCurve> curves;
    curves.reserve(prior.size());
    for (const auto& [rule, w] : prior.components()) {
        curves.emplace_back(rule, grid);
    }
    const RiskParam neutral{};
    const std::size_t start = grid.firstIndexAtOrAbove(cost.value);
    auto mixture = [&](std::size_t i) {
        double u = 0.0;
        for (std::size_t k = 0; k < curves.size(); ++k) {
            u += prior.components()[k].second * curves[k].utilityAt(i, cost, neutral);
        }
        return u;
    };
    BestResponse best{grid[start], start, mixture(start)};
    for (std::size_t i = start + 1; i < grid.size(); ++i) {
        const double u = mixture(i);
        if (u > best.utility) {
            best = {grid[i], i, u};
        }
    }
    return best;
}

double agentBid(const AgentSpec& agent, const BidContext& context, RandomStream& stream)
{
    struct Visitor {
        const BidContext& ctx;
        RandomStream& stream;

        double operator()(const RationalAgent& a) const
        {
            return bestResponse(ctx.fine, ctx.cost, a.risk).bid;
        }
        double operator()(const QuantalAgent& a) const
        {
            return sampleQuantalBid(ctx.coarse, ctx.cost, a.params, a.risk, stream);
        }
        double operator()(const ShadingAgent& a) const
        {
            return shadedBid(ctx.cost, a.policy, ctx.fine.rule(), ctx.fine.grid());
        }
        double operator()(const PriorBaselineAgent& a) const { return a.bid; }
    };
    return std::visit(Visitor{context, stream}, agent);
}

namespace {

struct StimulusReference {
    WinCurve coarse;
    double optimalBid;
    double optimalUtility;
};

std::vector<StimulusReference> references(std::span<const AllocationRule> stimuli, Cost cost,
                                          const BidGrid& choiceGrid,
                                          const BidGrid& optimizationGrid)
{
    std::vector<StimulusReference> refs;
    refs.reserve(stimuli.size());
    for (const auto& rule : stimuli) {
        const auto opt = bestResponse(rule, cost, optimizationGrid);
        refs.push_back({WinCurve(rule, choiceGrid), opt.bid, opt.utility});
    }
    return refs;
}

QuantalStats statsFor(const std::vector<StimulusReference>& refs, Cost cost,
                      QuantalParams params, RiskParam risk)
{
    QuantalStats stats;
    const RiskParam neutral{};
    for (const auto& ref : refs) {
        const auto probs = quantalChoiceDistribution(ref.coarse, cost, params, risk);
        const BidGrid& grid = ref.coarse.grid();
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const double u = ref.coarse.utilityAt(i, cost, neutral);
            stats.meanRatio += probs[i] * bidOptimizationRatio(u, ref.optimalUtility).value;
            if (grid[i] < ref.optimalBid) {
                stats.undershadingRate += probs[i];
            }
            if (u < 0.0) {
                stats.negativeUtilityRate += probs[i];
            }
        }
    }
    const auto n = static_cast<double>(refs.size());
    stats.meanRatio /= n;
    stats.undershadingRate /= n;
    stats.negativeUtilityRate /= n;
    return stats;
}

}  // namespace

QuantalStats quantalStats(std::span<const AllocationRule> stimuli, Cost cost,
                          QuantalParams params, RiskParam risk, const BidGrid& choiceGrid,
                          const BidGrid& optimizationGrid)
{
    if (stimuli.empty()) {
        throw ConfigError("no stimuli");
    }
    return statsFor(references(stimuli, cost, choiceGrid, optimizationGrid), cost, params, risk);
}

double calibrateLambda(const std::function<double(double)>& metric, double target, double lo,
                       double hi, double tolerance)
{
    double logLo = std::log(lo);
    double logHi = std::log(hi);
    const double atLo = metric(lo) - target;
    const double atHi = metric(hi) - target;
    if (atLo == 0.0) {
        return lo;
    }
    if (atHi == 0.0) {
        return hi;
    }
    if ((atLo > 0.0) == (atHi > 0.0)) {
        throw ConfigError("calibration target " + std::to_string(target) +
                          " is not bracketed by the lambda range");
    }
    const bool increasing = atHi > 0.0;
    double mid = 0.5 * (logLo + logHi);
    for (int iter = 0; iter < 200; ++iter) {
        mid = 0.5 * (logLo + logHi);
        const double gap = metric(std::exp(mid)) - target;
        if (std::abs(gap) <= tolerance) {
            break;
        }
        if ((gap < 0.0) == increasing) {
            logLo = mid;
        } else {
            logHi = mid;
        }
    }
    return std::exp(mid);
}

double calibrateLambdaForRatio(std::span<const AllocationRule> stimuli, Cost cost,
                               RiskParam risk, double targetRatio)
{
    const auto refs = references(stimuli, cost, BidGrid::coarse(), BidGrid::fine());
    return calibrateLambda(
        [&](double lambda) { return statsFor(refs, cost, QuantalParams{lambda}, risk).meanRatio; },
        targetRatio);
}

double calibrateLambdaForNegativeRate(std::span<const AllocationRule> stimuli, Cost cost,
                                      double targetRate)
{
    const auto refs = references(stimuli, cost, BidGrid::coarse(), BidGrid::fine());
    return calibrateLambda(
        [&](double lambda) {
            return statsFor(refs, cost, QuantalParams{lambda}, RiskParam{}).negativeUtilityRate;
        },
        targetRate);
}

}  // namespace dashlab
