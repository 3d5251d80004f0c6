#include "dashlab/auction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dashlab/errors.hpp"
#include "dashlab/normal.hpp"
#include "dashlab/rng.hpp"

namespace dashlab {

double normalSurvival(double z)
{
    return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

double normalCdf(double z)
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

double normalPdf(double z)
{
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

AllocationRule::AllocationRule(double mu, double sigma) : mu_(mu), sigma_(sigma)
{
    if (!std::isfinite(mu) || !std::isfinite(sigma) || !(sigma > 0.0)) {
        throw DomainError("allocation rule needs finite mu and sigma > 0");
    }
}

Cost::Cost(double v) : value(v)
{
    if (!std::isfinite(v) || v < 0.0) {
        throw DomainError("cost must be finite and >= 0, got " + std::to_string(v));
    }
}

RiskParam::RiskParam(double coefficient) : r(coefficient)
{
    if (!std::isfinite(coefficient) || coefficient < 0.0 || coefficient >= 1.0) {
        throw DomainError("risk coefficient must lie in [0, 1), got " + std::to_string(coefficient));
    }
}

BidGrid::BidGrid(double lo, double hi, double step) : lo_(lo), hi_(hi), step_(step)
{
    if (!std::isfinite(lo) || !std::isfinite(hi) || !std::isfinite(step) || !(lo < hi) ||
        !(step > 0.0)) {
        throw ConfigError("bid grid needs lo < hi and step > 0");
    }
    const double intervals = (hi - lo) / step;
    const double whole = std::round(intervals);
    if (std::abs(intervals - whole) > 1e-9 * std::max(1.0, whole)) {
        throw ConfigError("bid grid extent is not a whole number of steps");
    }
    count_ = static_cast<std::size_t>(whole) + 1;

    const double inv = 1.0 / step;
    const double k = std::round(inv);
    if (k >= 1.0 && std::abs(inv - k) <= 1e-9 * k) {
        const double scaled = lo * k;
        if (std::abs(scaled - std::round(scaled)) <= 1e-6) {
            scale_ = k;
            scaledLo_ = std::round(scaled);
        }
    }
}

double BidGrid::operator[](std::size_t i) const
{
    if (scale_ > 0.0) {
        return (scaledLo_ + static_cast<double>(i)) / scale_;
    }
    return lo_ + static_cast<double>(i) * step_;
}

std::size_t BidGrid::nearestIndex(double bid) const
{
    if (!(bid > lo_)) {
        return 0;
    }
    if (bid >= hi_) {
        return count_ - 1;
    }
    auto i = static_cast<std::size_t>(std::floor((bid - lo_) / step_));
    i = std::min(i, count_ - 1);
    while (i > 0 && (*this)[i] > bid) {
        --i;
    }
    while (i + 1 < count_ && (*this)[i + 1] <= bid) {
        ++i;
    }
    if (i + 1 < count_ && ((*this)[i + 1] - bid) < (bid - (*this)[i])) {
        ++i;
    }
    return i;
}

std::size_t BidGrid::firstIndexAtOrAbove(double value) const
{
    if (value <= lo_) {
        return 0;
    }
    if (value > hi_) {
        return count_;
    }
    auto i = static_cast<std::size_t>(std::floor((value - lo_) / step_));
    i = std::min(i, count_ - 1);
    while (i > 0 && (*this)[i - 1] >= value) {
        --i;
    }
    while (i < count_ && (*this)[i] < value) {
        ++i;
    }
    return i;
}

std::vector<double> BidGrid::values() const
{
    std::vector<double> out(count_);
    for (std::size_t i = 0; i < count_; ++i) {
        out[i] = (*this)[i];
    }
    return out;
}

BidGrid BidGrid::fine()
{
    return BidGrid(0.0, 200.0, 0.01);
}

BidGrid BidGrid::coarse()
{
    return BidGrid(0.0, 200.0, 1.0);
}

double winProbability(const AllocationRule& rule, double bid)
{
    if (!std::isfinite(bid)) {
        throw DomainError("bid must be finite");
    }
    return normalSurvival((bid - rule.mu()) / rule.sigma());
}

double marginUtility(double margin, double winProb, RiskParam risk)
{
    if (risk.riskNeutral()) {
        return margin * winProb;
    }
    if (margin < 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    const double keep = 1.0 - risk.r;
    return std::pow(margin, keep) / keep * winProb;
}

double expectedUtility(const AllocationRule& rule, Cost cost, double bid)
{
    return (bid - cost.value) * winProbability(rule, bid);
}

double crraExpectedUtility(const AllocationRule& rule, Cost cost, double bid, RiskParam risk)
{
    return marginUtility(bid - cost.value, winProbability(rule, bid), risk);
}

WinCurve::WinCurve(const AllocationRule& rule, const BidGrid& grid) : rule_(rule), grid_(grid)
{
    probs_.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        probs_[i] = normalSurvival((grid[i] - rule.mu()) / rule.sigma());
    }
}

BestResponse bestResponse(const WinCurve& curve, Cost cost, RiskParam risk)
{
    const BidGrid& grid = curve.grid();
    if (!grid.covers(cost.value)) {
        throw ConfigError("bid grid [" + std::to_string(grid.lo()) + ", " +
                          std::to_string(grid.hi()) + "] does not cover cost " +
                          std::to_string(cost.value));
    }
    // Bids below cost never beat the zero-margin bid, so the scan starts at cost.
    const std::size_t start = grid.firstIndexAtOrAbove(cost.value);
    BestResponse best{grid[start], start, curve.utilityAt(start, cost, risk)};
    for (std::size_t i = start + 1; i < grid.size(); ++i) {
        const double u = curve.utilityAt(i, cost, risk);
        if (u > best.utility) {
            best = {grid[i], i, u};
        }
    }
    return best;
}

BestResponse bestResponse(const AllocationRule& rule, Cost cost, const BidGrid& grid,
                          RiskParam risk)
{
    return bestResponse(WinCurve(rule, grid), cost, risk);
}

OptimizationRatio bidOptimizationRatio(double bidUtility, double optimalUtility)
{
    if (!(optimalUtility > 0.0)) {
        throw DegenerateStimulusError("optimal expected utility is not positive");
    }
    const double raw = bidUtility / optimalUtility;
    return {std::clamp(raw, 0.0, 1.0), bidUtility < 0.0};
}

OptimizationRatio bidOptimizationRatio(const AllocationRule& rule, Cost cost, double bid,
                                       const BidGrid& grid)
{
    const auto opt = bestResponse(rule, cost, grid);
    return bidOptimizationRatio(expectedUtility(rule, cost, bid), opt.utility);
}

Outcome realizeOutcome(const AllocationRule& rule, Cost cost, double bid, PayoffMode mode,
                       RandomStream* stream)
{
    if (!std::isfinite(bid)) {
        throw DomainError("bid must be finite");
    }
    Outcome out;
    if (mode == PayoffMode::Deterministic) {
        out.payoff = expectedUtility(rule, cost, bid);
        return out;
    }
    if (stream == nullptr) {
        throw ConfigError("stochastic outcome needs a random stream");
    }
    const double opponent = stream->normal(rule.mu(), rule.sigma());
    // A tie with the opponent draw loses.
    const bool won = bid < opponent;
    out.won = won;
    out.opponentBid = opponent;
    out.payoff = won ? bid - cost.value : 0.0;
    return out;
}

}  // namespace dashlab
