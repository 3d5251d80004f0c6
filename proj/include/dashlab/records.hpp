#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "dashlab/auction.hpp"

namespace dashlab {

enum class ExperimentKind { Exp1, Exp2 };
// Experiment 1 visualization conditions (between subjects).
enum class Visualization { AllocationRule, Curves, Heatmap };
// Experiment 2 training conditions.
enum class TrainingCondition { TrueCost, HypotheticalCurves, Combined };
enum class Feedback { PayoffOnly, PayoffPlusInferredCost };
enum class PayloadVariant { Allocation, Curves, Heatmap, TrueCostCurve };

std::string_view toString(ExperimentKind v);
std::string_view toString(Visualization v);
std::string_view toString(TrainingCondition v);
std::string_view toString(Feedback v);
std::string_view toString(PayoffMode v);
std::string_view toString(PayloadVariant v);

ExperimentKind parseExperiment(std::string_view s);
Visualization parseVisualization(std::string_view s);
TrainingCondition parseTrainingCondition(std::string_view s);
Feedback parseFeedback(std::string_view s);
PayoffMode parsePayoffMode(std::string_view s);
PayloadVariant parsePayloadVariant(std::string_view s);

inline constexpr int kTrialsPerBlock = 10;
inline constexpr int kBlocks = 2;

// One auction round as logged.
struct TrialRecord {
    ExperimentKind experiment = ExperimentKind::Exp1;
    std::string participantId;
    int trialnum = 0;      // 1..20
    int block = 0;         // 1 or 2
    int trialInBlock = 0;  // 1..10
    std::string condition;   // visualization or training condition tag
    std::string blockOrder;  // which feedback block came first
    Feedback feedback = Feedback::PayoffOnly;
    PayoffMode payoffMode = PayoffMode::Stochastic;
    PayloadVariant payload = PayloadVariant::Allocation;
    int ruleId = 0;
    double mu = 0.0;
    double sigma = 1.0;
    double cost = 85.0;
    double bid = 0.0;
    Outcome outcome;
    double expectedUtility = 0.0;
    double optimalBid = 0.0;      // risk-neutral best response at the endowed cost
    double optimalUtility = 0.0;
    double bidOptimizationRatio = 0.0;
    std::optional<double> inferredCostBR;
    bool inferredCostOutOfRange = false;
    bool excluded = false;
    std::optional<std::string> exclusionReason;
    std::optional<std::string> timestamp;  // live sessions only

    AllocationRule rule() const { return AllocationRule(mu, sigma); }
};

}  // namespace dashlab
