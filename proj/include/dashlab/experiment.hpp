#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dashlab/agents.hpp"
#include "dashlab/dashboards.hpp"
#include "dashlab/inference.hpp"
#include "dashlab/records.hpp"
#include "dashlab/rng.hpp"

namespace dashlab {

inline constexpr std::uint64_t kCanonicalStimulusSeed = 85;

// generateStimuli with the canonical seed and default ranges; the committed
// fixture tests/fixtures/canonical_stimuli.json holds the same set.
StimulusSet canonicalStimuli();

struct BlockSpec {
    Feedback feedback = Feedback::PayoffOnly;
    PayoffMode payoffMode = PayoffMode::Stochastic;
    std::vector<int> stimulusOrder;  // stimulus ids, each once
};

struct SessionConfig {
    ExperimentKind experiment = ExperimentKind::Exp1;
    std::string participantId;
    std::string condition;   // Visualization (exp1) or TrainingCondition (exp2) tag
    std::string blockOrder;  // payoff_first | cost_first | training_first
    std::array<BlockSpec, kBlocks> blocks;
    std::uint64_t seed = 0;
    std::optional<AgentSpec> agent;
};

// One participant's design: block order and per-block stimulus order drawn from
// the session seed. No agent attached.
SessionConfig makeSessionConfig(ExperimentKind experiment, const StimulusSet& stimuli,
                                const std::string& condition, const std::string& participantId,
                                std::uint64_t sessionSeed);

Json toJson(const SessionConfig& config);
SessionConfig sessionConfigFromJson(const Json& j);

// Dashboard shown at (block, trialInBlock), both 1-based.
PayloadVariant payloadFor(const SessionConfig& config, int block, int trialInBlock);

struct PopulationSpec {
    enum class Kind { Rational, Quantal, Shading, PriorBaseline };
    enum class Calibration { MeanRatio, NegativeUtilityRate };

    Kind kind = Kind::Quantal;
    double risk = 0.5;
    std::optional<double> lambda;  // absent: calibrate
    Calibration calibration = Calibration::MeanRatio;
    double calibrationTarget = 0.65;
    double lambdaLogSpread = 0.0;  // per-participant log-normal spread of lambda
    ShadingPolicy shading{};
};

// The population's (median) lambda, calibrating against the stimuli if unset.
double resolvePopulationLambda(const PopulationSpec& spec, const StimulusSet& stimuli,
                               double cost = kReferenceCost);
AgentSpec drawAgent(const PopulationSpec& spec, double lambda, const StimulusSet& stimuli,
                    double cost, RandomStream& stream);

// Three visualization conditions between subjects, two feedback blocks in
// random order within subjects, stimulus order shuffled per block.
std::vector<SessionConfig> buildExperiment1(const StimulusSet& stimuli,
                                            const PopulationSpec& population, int nPerCondition,
                                            std::uint64_t seed, double cost = kReferenceCost);
// Three training conditions; block 1 deterministic training, block 2 stochastic.
std::vector<SessionConfig> buildExperiment2(const StimulusSet& stimuli,
                                            const PopulationSpec& population, int nPerCondition,
                                            std::uint64_t seed, double cost = kReferenceCost);

// Per-stimulus tables reused across every trial of a run.
class ExperimentContext {
public:
    struct Entry {
        Stimulus stimulus;
        WinCurve fine;
        WinCurve coarse;
        BestResponse optimum;  // risk-neutral, at the endowed cost
        BestResponseInverter inverter;
    };

    explicit ExperimentContext(StimulusSet stimuli, double cost = kReferenceCost);

    const StimulusSet& stimuli() const { return stimuli_; }
    double cost() const { return cost_; }
    const Entry& entry(int ruleId) const;

private:
    StimulusSet stimuli_;
    double cost_;
    std::vector<Entry> entries_;
};

struct TrialView {
    const SessionConfig& config;
    int trialnum;
    int block;
    int trialInBlock;
    const Stimulus& stimulus;
    PayloadVariant payload;
    BidContext bidContext;
};

using BidFunction = std::function<double(const TrialView&, RandomStream&)>;

BidFunction agentBidFunction(const AgentSpec& agent);

// Outcome, ratio, inferred-cost feedback and exclusion flag for one submitted
// bid. The simulator and the live service both log through this.
TrialRecord recordTrial(const SessionConfig& config, const ExperimentContext& context, int block,
                        int trialInBlock, double bid, RandomStream& outcomeStream);

std::uint64_t trialStreamSeed(const SessionConfig& config, std::string_view purpose, int trialnum);

class SessionAborted : public std::runtime_error {
public:
    SessionAborted(const std::string& what, std::vector<TrialRecord> partial)
        : std::runtime_error(what), partial_(std::move(partial))
    {
    }
    const std::vector<TrialRecord>& partial() const { return partial_; }

private:
    std::vector<TrialRecord> partial_;
};

// Runs all 20 trials; throws SessionAborted with the trials logged so far if
// the bid function fails.
std::vector<TrialRecord> runSession(const SessionConfig& config, const ExperimentContext& context,
                                    const BidFunction& bidder);

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::Exp1;
    int participantsPerCondition = 10;
    std::uint64_t seed = 1;
    double cost = kReferenceCost;
    StimulusSet stimuli = canonicalStimuli();
    PopulationSpec population{};
};

// "exp1" / "exp2" presets or a path to a JSON config file.
ExperimentConfig loadExperimentConfig(const std::string& nameOrPath);
ExperimentConfig experimentConfigFromJson(const Json& j,
                                          const std::filesystem::path& baseDir = {});

struct SimulationResult {
    std::vector<SessionConfig> sessions;
    std::vector<TrialRecord> records;
    double lambda = 0.0;
};

SimulationResult simulateExperiment(const ExperimentConfig& config);

struct ConditionSummary {
    std::string experiment;
    std::string condition;
    std::string feedback;
    std::string payoffMode;
    std::size_t trials = 0;
    std::size_t included = 0;
    double meanRatio = 0.0;
    double ciLow = 0.0;
    double ciHigh = 0.0;
    double undershadingRate = 0.0;  // bid below the risk-neutral best response
    double exclusionRate = 0.0;
    double meanPayoff = 0.0;
    double bonusAC = 0.0;  // mean of expected utility plus the incentive offset
};

// Offset added to per-trial expected utility so that the rational benchmark
// pays (1 + margin) times the prior-only baseline.
double incentiveOffset(double benchmarkRaw, double baselineRaw, double margin = 0.35);

// Per (experiment, condition, feedback, payoff mode): means over non-excluded
// trials with a seeded percentile-bootstrap 95% interval.
// Throws DomainError when every record is excluded.
std::vector<ConditionSummary> summarize(std::span<const TrialRecord> records,
                                        std::uint64_t bootstrapSeed = 1, int resamples = 10000);

void writeSummaryCsv(std::ostream& out, std::span<const ConditionSummary> rows);

struct AuditReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Block structure, exclusion flags and deterministic payoffs of a trial log.
AuditReport auditLog(std::span<const TrialRecord> records, const StimulusSet& stimuli);

// Participants' bids grouped for inference; excluded trials dropped unless asked.
BidDataset datasetFromRecords(std::span<const TrialRecord> records, bool includeExcluded = false);

}  // namespace dashlab
