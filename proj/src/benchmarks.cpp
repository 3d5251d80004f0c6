#include "dashlab/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dashlab/errors.hpp"

namespace dashlab {

StateActionDataset StateActionDataset::fromRecords(std::span<const TrialRecord> records)
{
    StateActionDataset data;
    if (records.empty()) {
        return data;
    }
    data.cost = records.front().cost;
    std::map<int, AllocationRule> states;
    for (const auto& rec : records) {
        if (rec.cost != data.cost) {
            throw ConfigError("records mix different endowed costs");
        }
        states.emplace(rec.ruleId, rec.rule());
        data.actions.push_back({rec.ruleId, rec.bid, rec.participantId});
    }
    for (const auto& [id, rule] : states) {
        data.states.push_back({id, rule});
    }
    return data;
}

double benchmarkScore(const RulePrior& stimuli, Cost cost, const BidGrid& grid)
{
    double total = 0.0;
    for (const auto& [rule, weight] : stimuli.components()) {
        total += weight * bestResponse(rule, cost, grid).utility;
    }
    return total;
}

double baselineScore(const RulePrior& stimuli, Cost cost, const BidGrid& grid)
{
    const auto bid = priorBaselineBid(stimuli, cost, grid);
    const RiskParam neutral{};
    double total = 0.0;
    for (const auto& [rule, weight] : stimuli.components()) {
        total += weight * WinCurve(rule, grid).utilityAt(bid.index, cost, neutral);
    }
    return total;
}

RulePrior observedStatePrior(const StateActionDataset& data)
{
    std::map<int, const AllocationRule*> seen;
    std::map<int, const AllocationRule*> declared;
    for (const auto& s : data.states) {
        if (!declared.emplace(s.stateId, &s.rule).second) {
            throw ConfigError("state " + std::to_string(s.stateId) + " declared twice");
        }
    }
    for (const auto& a : data.actions) {
        const auto it = declared.find(a.stateId);
        if (it == declared.end()) {
            throw ConfigError("action refers to unknown state " + std::to_string(a.stateId));
        }
        seen.emplace(a.stateId, it->second);
    }
    if (seen.empty()) {
        throw DomainError("dataset has no actions");
    }
    std::vector<AllocationRule> rules;
    for (const auto& [id, rule] : seen) {
        rules.push_back(*rule);
    }
    return RulePrior::uniform(rules);
}

double calibratedScore(const StateActionDataset& data, const BidGrid& grid, double binWidth)
{
    if (!(binWidth > 0.0)) {
        throw ConfigError("bin width must be positive");
    }
    const Cost cost{data.cost};
    const RulePrior prior = observedStatePrior(data);

    // State ids in the same order as the prior components.
    std::map<int, std::size_t> stateIndex;
    for (const auto& a : data.actions) {
        stateIndex.emplace(a.stateId, 0);
    }
    std::size_t k = 0;
    for (auto& [id, index] : stateIndex) {
        index = k++;
    }
    const std::size_t nStates = stateIndex.size();

    std::vector<double> actionsPerState(nStates, 0.0);
    std::map<long long, std::vector<double>> binCounts;
    for (const auto& a : data.actions) {
        const std::size_t s = stateIndex.at(a.stateId);
        const auto bin = static_cast<long long>(std::floor(a.bid / binWidth));
        auto& counts = binCounts[bin];
        counts.resize(nStates, 0.0);
        counts[s] += 1.0;
        actionsPerState[s] += 1.0;
    }

    const std::size_t start = grid.firstIndexAtOrAbove(cost.value);
    if (start >= grid.size()) {
        throw ConfigError("bid grid does not cover cost");
    }
    const RiskParam neutral{};
    std::vector<std::vector<double>> utility(nStates);
    std::vector<double> weight(nStates);
    for (std::size_t s = 0; s < nStates; ++s) {
        const auto& [rule, w] = prior.components()[s];
        weight[s] = w;
        const WinCurve curve(rule, grid);
        utility[s].resize(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            utility[s][i] = curve.utilityAt(i, cost, neutral);
        }
    }

    // Per state: sum over bins of Pr(bin | state) * utility of the bin's bid.
    std::vector<double> perState(nStates, 0.0);
    std::vector<double> mass(nStates);
    for (const auto& [bin, counts] : binCounts) {
        for (std::size_t s = 0; s < nStates; ++s) {
            mass[s] = counts[s] / actionsPerState[s];
        }
        std::size_t bestIndex = start;
        double bestValue = -std::numeric_limits<double>::infinity();
        for (std::size_t i = start; i < grid.size(); ++i) {
            double value = 0.0;
            for (std::size_t s = 0; s < nStates; ++s) {
                if (mass[s] != 0.0) {
                    value += weight[s] * mass[s] * utility[s][i];
                }
            }
            if (value > bestValue) {
                bestValue = value;
                bestIndex = i;
            }
        }
        for (std::size_t s = 0; s < nStates; ++s) {
            if (mass[s] != 0.0) {
                perState[s] += mass[s] * utility[s][bestIndex];
            }
        }
    }
    double total = 0.0;
    for (std::size_t s = 0; s < nStates; ++s) {
        total += weight[s] * perState[s];
    }
    return total;
}

double normalizeScore(double raw, double baselineRaw, double benchmarkRaw)
{
    if (!(benchmarkRaw > baselineRaw)) {
        throw DegenerateStimulusError("benchmark score does not exceed the baseline");
    }
    return (raw - baselineRaw) / (benchmarkRaw - baselineRaw);
}

double behavioralScore(std::span<const TrialRecord> records)
{
    if (records.empty()) {
        throw DomainError("no records to score");
    }
    double total = 0.0;
    for (const auto& r : records) {
        total += expectedUtility(r.rule(), Cost{r.cost}, r.bid);
    }
    return total / static_cast<double>(records.size());
}

std::vector<ScoreRow> scoreTable(std::span<const TrialRecord> records, const BidGrid& grid,
                                 double binWidth)
{
    std::map<std::string, std::vector<TrialRecord>> byCondition;
    for (const auto& r : records) {
        if (!r.excluded) {
            byCondition[r.condition].push_back(r);
        }
    }
    std::vector<ScoreRow> rows;
    for (const auto& [condition, group] : byCondition) {
        const auto data = StateActionDataset::fromRecords(group);
        const RulePrior prior = observedStatePrior(data);
        const Cost cost{data.cost};
        const double bench = benchmarkScore(prior, cost, grid);
        const double base = baselineScore(prior, cost, grid);
        const double calibrated = calibratedScore(data, grid, binWidth);
        const double behavioral = behavioralScore(group);
        for (const auto& [agent, raw] : {std::pair{"baseline", base}, std::pair{"benchmark", bench},
                                         std::pair{"calibrated", calibrated},
                                         std::pair{"behavioral", behavioral}}) {
            rows.push_back({condition, agent, raw, normalizeScore(raw, base, bench), binWidth});
        }
    }
    return rows;
}

}  // namespace dashlab
