#pragma once

#include <span>
#include <string>
#include <vector>

#include "dashlab/agents.hpp"
#include "dashlab/auction.hpp"
#include "dashlab/records.hpp"

namespace dashlab {

// Observed bids labelled with the state (stimulus) they were made in.
struct StateActionDataset {
    struct State {
        int stateId;
        AllocationRule rule;
    };
    struct Action {
        int stateId;
        double bid;
        std::string participantId;
    };

    double cost = 85.0;
    std::vector<State> states;
    std::vector<Action> actions;

    static StateActionDataset fromRecords(std::span<const TrialRecord> records);
};

struct AgentScore {
    double raw;
    double normalized;
};

// Mean over states of the per-state optimal utility.
double benchmarkScore(const RulePrior& stimuli, Cost cost, const BidGrid& grid = BidGrid::fine());

// Utility, averaged over states, of the single bid that is optimal under the prior.
double baselineScore(const RulePrior& stimuli, Cost cost, const BidGrid& grid = BidGrid::fine());

// Rational agent acting on what the observed bids reveal about the state.
//
// Bids are quantized into bins of binWidth AC. Each bin defines a posterior over
// states (equal prior weights over the states that were observed); the agent
// plays the grid bid maximizing posterior expected utility in that bin. The
// score is the prior-weighted expected utility of that policy, which lies
// between the baseline and the benchmark by construction.
double calibratedScore(const StateActionDataset& data, const BidGrid& grid = BidGrid::fine(),
                       double binWidth = 1.0);

// Uniform prior over the states that have at least one action, in state-id order.
RulePrior observedStatePrior(const StateActionDataset& data);

// (raw - baseline) / (benchmark - baseline).
double normalizeScore(double raw, double baselineRaw, double benchmarkRaw);

// Mean expected (not realized) utility of the submitted bids.
double behavioralScore(std::span<const TrialRecord> records);

struct ScoreRow {
    std::string condition;
    std::string agent;  // baseline | benchmark | calibrated | behavioral
    double raw;
    double normalized;
    double binWidth;
};

// Per visualization condition: the three rational reference agents and the
// behavioral agent, each raw and normalized.
std::vector<ScoreRow> scoreTable(std::span<const TrialRecord> records,
                                 const BidGrid& grid = BidGrid::fine(), double binWidth = 1.0);

}  // namespace dashlab
