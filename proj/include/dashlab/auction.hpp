#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dashlab {

class RandomStream;

// Opponent bid distribution N(mu, sigma^2). The participant wins when its bid
// is strictly below the opponent draw.
class AllocationRule {
public:
    AllocationRule(double mu, double sigma);

    double mu() const { return mu_; }
    double sigma() const { return sigma_; }

    bool operator==(const AllocationRule&) const = default;

private:
    double mu_;
    double sigma_;
};

// Private seller cost in AC.
struct Cost {
    explicit Cost(double v);
    double value;
};

// Arrow-Pratt relative risk aversion, restricted to [0, 1).
struct RiskParam {
    explicit RiskParam(double coefficient = 0.0);
    double r;
    bool riskNeutral() const { return r == 0.0; }
};

// Evenly spaced feasible bids lo, lo + step, ..., hi.
//
// When step is the reciprocal of an integer (0.01, 0.5, 1, ...) grid points are
// formed as (k * lo + i) / k, so decimal bids such as 100.00 are exact.
class BidGrid {
public:
    BidGrid(double lo, double hi, double step);

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double step() const { return step_; }
    std::size_t size() const { return count_; }
    double operator[](std::size_t i) const;

    // Index of the grid point closest to bid (ties toward the lower point).
    std::size_t nearestIndex(double bid) const;
    // Smallest index whose bid is >= value; size() if none.
    std::size_t firstIndexAtOrAbove(double value) const;
    bool covers(double value) const { return value >= lo_ && value <= hi_; }

    std::vector<double> values() const;

    bool operator==(const BidGrid& o) const
    {
        return lo_ == o.lo_ && hi_ == o.hi_ && step_ == o.step_;
    }

    // [0, 200] at 0.01: optimization and inversion.
    static BidGrid fine();
    // [0, 200] at 1: quantal choice sets.
    static BidGrid coarse();

private:
    double lo_;
    double hi_;
    double step_;
    std::size_t count_;
    double scale_ = 0.0;  // k when step == 1/k, else 0
    double scaledLo_ = 0.0;
};

enum class PayoffMode { Stochastic, Deterministic };

struct Outcome {
    std::optional<bool> won;  // absent in deterministic mode
    double payoff = 0.0;
    std::optional<double> opponentBid;
};

// Pr(win | bid) = 1 - Phi((bid - mu) / sigma).
double winProbability(const AllocationRule& rule, double bid);

// (bid - cost) * Pr(win | bid); negative for bids below cost.
double expectedUtility(const AllocationRule& rule, Cost cost, double bid);

// CRRA utility of the margin times the win probability. Identical to
// expectedUtility when r == 0. For r > 0 a bid below cost has utility -inf.
double crraExpectedUtility(const AllocationRule& rule, Cost cost, double bid, RiskParam risk);

// Utility of a given margin and win probability. Every utility evaluation goes
// through it.
double marginUtility(double margin, double winProb, RiskParam risk);

// Win probabilities of one rule tabulated on a grid.
class WinCurve {
public:
    WinCurve(const AllocationRule& rule, const BidGrid& grid);

    const AllocationRule& rule() const { return rule_; }
    const BidGrid& grid() const { return grid_; }
    std::span<const double> probabilities() const { return probs_; }
    double operator[](std::size_t i) const { return probs_[i]; }
    std::size_t size() const { return probs_.size(); }

    double utilityAt(std::size_t i, Cost cost, RiskParam risk) const
    {
        return marginUtility(grid_[i] - cost.value, probs_[i], risk);
    }

private:
    AllocationRule rule_;
    BidGrid grid_;
    std::vector<double> probs_;
};

struct BestResponse {
    double bid;
    std::size_t index;
    double utility;
};

// Grid argmax of (CRRA) expected utility, lowest maximizing bid on ties.
// Throws ConfigError if the grid does not cover the cost.
BestResponse bestResponse(const WinCurve& curve, Cost cost, RiskParam risk = RiskParam{});
BestResponse bestResponse(const AllocationRule& rule, Cost cost, const BidGrid& grid,
                          RiskParam risk = RiskParam{});

struct OptimizationRatio {
    double value;           // clamp(pi_bid / pi_opt, 0, 1)
    bool negativeUtility;   // pi_bid < 0
};

// Throws DegenerateStimulusError when the optimal utility is not positive.
OptimizationRatio bidOptimizationRatio(double bidUtility, double optimalUtility);
OptimizationRatio bidOptimizationRatio(const AllocationRule& rule, Cost cost, double bid,
                                       const BidGrid& grid);

// Stochastic: one opponent draw from the stream, payoff bid - cost on a win.
// Deterministic: payoff is the expected utility and no draw is made.
Outcome realizeOutcome(const AllocationRule& rule, Cost cost, double bid, PayoffMode mode,
                       RandomStream* stream);

}  // namespace dashlab
