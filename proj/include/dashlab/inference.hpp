#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dashlab/agents.hpp"
#include "dashlab/auction.hpp"

namespace dashlab {

enum class InferenceModel { BestResponse, Quantal, QuantalCrra };

std::string_view modelTag(InferenceModel model);  // "BR", "QR", "QR_CRRA"
InferenceModel parseModelTag(std::string_view tag);

struct InferenceResult {
    InferenceModel model = InferenceModel::BestResponse;
    std::string participantId;
    std::optional<int> trialnum;  // set for per-bid best-response inversions
    double inferredCost = 0.0;
    std::optional<double> lambdaHat;
    std::optional<double> rHat;
    std::optional<double> logLikelihood;
    bool outOfRange = false;      // bid outside the range of best responses
    bool lambdaAtBound = false;
    bool lowInformation = false;  // likelihood nearly flat in cost
    bool converged = true;
    double maxSnapDistance = 0.0;
    int observations = 0;
};

struct BidObservation {
    int ruleId = 0;
    AllocationRule rule;
    double bid = 0.0;
    std::optional<int> trialnum;
};

struct ParticipantBids {
    std::string participantId;
    std::vector<BidObservation> observations;
};

struct BidDataset {
    std::vector<ParticipantBids> participants;
    double trueCost = 85.0;
};

// Best-response table over a cost grid, inverted by nearest match.
class BestResponseInverter {
public:
    enum class Range { Inside, BelowAll, AboveAll };

    struct Inversion {
        double cost;
        Range range;
        bool outOfRange() const { return range != Range::Inside; }
    };

    explicit BestResponseInverter(const AllocationRule& rule,
                                  const BidGrid& costGrid = BidGrid::fine(),
                                  const BidGrid& bidGrid = BidGrid::fine());

    // Cost whose best response is nearest the bid; equal distances resolve to
    // the lower cost. Bids outside the table clamp to the cost grid ends.
    Inversion invert(double bid) const;

    // Risk-neutral grid best response for every cost grid point (non-decreasing).
    std::span<const double> responses() const { return responses_; }
    const BidGrid& costGrid() const { return costGrid_; }

private:
    BidGrid costGrid_;
    std::vector<double> responses_;
};

BestResponseInverter::Inversion invertBestResponse(const AllocationRule& rule, double bid,
                                                   const BidGrid& costGrid = BidGrid::fine(),
                                                   const BidGrid& bidGrid = BidGrid::fine());

// One result per observation, tagged BR.
std::vector<InferenceResult> inferBestResponse(const BidDataset& dataset,
                                               const BidGrid& costGrid = BidGrid::fine(),
                                               const BidGrid& bidGrid = BidGrid::fine());

// Quantal-response likelihood of one participant's bids. Observations are
// snapped to the nearest choice-grid bid and grouped by rule so every rule's
// normalizer is computed once per evaluation.
class QuantalLikelihood {
public:
    explicit QuantalLikelihood(std::span<const BidObservation> observations,
                               const BidGrid& choiceGrid = BidGrid::coarse());

    double logLikelihood(Cost cost, QuantalParams params, RiskParam risk) const;
    // Log-likelihood with derivatives in cost and log lambda (lambda > 0).
    double logLikelihood(double cost, double lambda, RiskParam risk, double& dCost,
                         double& dLogLambda) const;
    // Sum over rules and grid bids of (empirical frequency - model probability)^2.
    double squaredProbabilityError(Cost cost, QuantalParams params, RiskParam risk) const;

    double minSnappedBid() const { return minSnappedBid_; }
    double maxSnapDistance() const { return maxSnapDistance_; }
    std::size_t observationCount() const { return count_; }

private:
    struct Group {
        WinCurve curve;
        std::vector<std::pair<std::size_t, int>> counts;  // (grid index, multiplicity)
        int total = 0;
    };
    std::vector<Group> groups_;
    double minSnappedBid_ = 0.0;
    double maxSnapDistance_ = 0.0;
    std::size_t count_ = 0;
};

// Throws DomainError on an empty observation set.
double qrLogLikelihood(std::span<const BidObservation> observations, Cost cost,
                       QuantalParams params, RiskParam risk,
                       const BidGrid& choiceGrid = BidGrid::coarse());

enum class FitObjective { LogLikelihood, SquaredProbabilityError };

struct FitOptions {
    BidGrid choiceGrid = BidGrid::coarse();
    double costLo = 0.0;
    double costHi = 200.0;
    double lambdaLo = 1e-4;
    double lambdaHi = 100.0;
    FitObjective objective = FitObjective::LogLikelihood;
};

// Joint (cost, lambda) estimate for one participant under risk-neutral utility.
InferenceResult fitQR(const ParticipantBids& participant, const FitOptions& options = {});
// Same with CRRA utility at a fixed r; tagged QR_CRRA.
InferenceResult fitQRCRRA(const ParticipantBids& participant, RiskParam risk,
                          const FitOptions& options = {});

struct PopulationFit {
    double rHat = 0.0;
    double totalLogLikelihood = 0.0;
    std::vector<InferenceResult> participants;
    int riskEvaluations = 0;
};

struct PopulationSearch {
    double riskLo = 0.0;
    double riskHi = 0.95;
    double tolerance = 1e-3;
};

PopulationFit fitQRCRRAFixedRisk(const BidDataset& dataset, RiskParam risk,
                                 const FitOptions& options = {});
// Golden-section search over a single shared r, refitting every participant.
PopulationFit fitQRCRRAPopulation(const BidDataset& dataset, const FitOptions& options = {},
                                  const PopulationSearch& search = {});

// Mean of (inferred - true)^2; optionally skipping out-of-range inversions.
double inferenceMSE(std::span<const InferenceResult> results, double trueCost,
                    bool includeOutOfRange = true);

}  // namespace dashlab
