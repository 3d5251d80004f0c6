#include "dashlab/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "dashlab/errors.hpp"
#include "dashlab/optimize.hpp"
#include "parallel.hpp"

namespace dashlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Half the 95% chi-square(1) quantile: a likelihood drop smaller than this
// across the whole cost range means the data cannot locate the cost.
constexpr double kFlatLikelihoodDrop = 1.92;

}  // namespace

std::string_view modelTag(InferenceModel model)
{
    switch (model) {
    case InferenceModel::BestResponse:
        return "BR";
    case InferenceModel::Quantal:
        return "QR";
    case InferenceModel::QuantalCrra:
        return "QR_CRRA";
    }
    return "?";
}

InferenceModel parseModelTag(std::string_view tag)
{
    std::string lower(tag);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "br") {
        return InferenceModel::BestResponse;
    }
    if (lower == "qr") {
        return InferenceModel::Quantal;
    }
    if (lower == "qr_crra") {
        return InferenceModel::QuantalCrra;
    }
    throw ConfigError("unknown inference model '" + std::string(tag) + "'");
}

// ---------------------------------------------------------------------------
// Best-response inversion

BestResponseInverter::BestResponseInverter(const AllocationRule& rule, const BidGrid& costGrid,
                                           const BidGrid& bidGrid)
    : costGrid_(costGrid)
{
    if (costGrid.lo() < bidGrid.lo() || costGrid.hi() > bidGrid.hi()) {
        throw ConfigError("cost grid must lie inside the bid grid");
    }
    const WinCurve curve(rule, bidGrid);
    const RiskParam neutral{};
    responses_.resize(costGrid.size());

    // The lowest maximizer is non-decreasing in cost and the utility is
    // unimodal above cost, so each cost resumes the climb where the previous
    // one stopped.
    std::size_t position = 0;
    for (std::size_t j = 0; j < costGrid.size(); ++j) {
        const Cost cost{costGrid[j]};
        std::size_t i = std::max(position, bidGrid.firstIndexAtOrAbove(cost.value));
        double u = curve.utilityAt(i, cost, neutral);
        while (i + 1 < bidGrid.size()) {
            const double next = curve.utilityAt(i + 1, cost, neutral);
            if (!(next > u)) {
                break;
            }
            u = next;
            ++i;
        }
        position = i;
        responses_[j] = bidGrid[i];
    }
}

BestResponseInverter::Inversion BestResponseInverter::invert(double bid) const
{
    if (!std::isfinite(bid)) {
        throw DomainError("bid must be finite");
    }
    if (bid < responses_.front()) {
        return {costGrid_[0], Range::BelowAll};
    }
    if (bid > responses_.back()) {
        return {costGrid_[costGrid_.size() - 1], Range::AboveAll};
    }
    const auto first = responses_.begin();
    const auto above = std::lower_bound(first, responses_.end(), bid);
    if (*above == bid || above == first) {
        return {costGrid_[static_cast<std::size_t>(above - first)], Range::Inside};
    }
    const double lowerValue = *(above - 1);
    const auto lowerRun = std::lower_bound(first, above, lowerValue);
    const bool takeLower = (bid - lowerValue) <= (*above - bid);
    const auto chosen = takeLower ? lowerRun : above;
    return {costGrid_[static_cast<std::size_t>(chosen - first)], Range::Inside};
}

BestResponseInverter::Inversion invertBestResponse(const AllocationRule& rule, double bid,
                                                   const BidGrid& costGrid, const BidGrid& bidGrid)
{
    return BestResponseInverter(rule, costGrid, bidGrid).invert(bid);
}

std::vector<InferenceResult> inferBestResponse(const BidDataset& dataset, const BidGrid& costGrid,
                                               const BidGrid& bidGrid)
{
    std::map<int, BestResponseInverter> inverters;
    std::vector<InferenceResult> results;
    for (const auto& participant : dataset.participants) {
        for (const auto& obs : participant.observations) {
            auto it = inverters.find(obs.ruleId);
            if (it == inverters.end()) {
                it = inverters.emplace(obs.ruleId, BestResponseInverter(obs.rule, costGrid, bidGrid))
                         .first;
            }
            const auto inversion = it->second.invert(obs.bid);
            InferenceResult r;
            r.model = InferenceModel::BestResponse;
            r.participantId = participant.participantId;
            r.trialnum = obs.trialnum;
            r.inferredCost = inversion.cost;
            r.outOfRange = inversion.outOfRange();
            r.observations = 1;
            results.push_back(std::move(r));
        }
    }
    return results;
}

// ---------------------------------------------------------------------------
// Quantal likelihood

QuantalLikelihood::QuantalLikelihood(std::span<const BidObservation> observations,
                                     const BidGrid& choiceGrid)
{
    if (observations.empty()) {
        throw DomainError("quantal likelihood needs at least one observation");
    }
    std::map<int, std::size_t> groupOf;
    std::vector<std::map<std::size_t, int>> tallies;
    minSnappedBid_ = kInf;
    for (const auto& obs : observations) {
        if (!std::isfinite(obs.bid)) {
            throw DomainError("observed bid is not finite");
        }
        auto [it, inserted] = groupOf.emplace(obs.ruleId, groups_.size());
        if (inserted) {
            groups_.push_back({WinCurve(obs.rule, choiceGrid), {}, 0});
            tallies.emplace_back();
        }
        const std::size_t index = choiceGrid.nearestIndex(obs.bid);
        const double snapped = choiceGrid[index];
        maxSnapDistance_ = std::max(maxSnapDistance_, std::abs(snapped - obs.bid));
        minSnappedBid_ = std::min(minSnappedBid_, snapped);
        ++tallies[it->second][index];
        ++groups_[it->second].total;
        ++count_;
    }
    for (std::size_t g = 0; g < groups_.size(); ++g) {
        groups_[g].counts.assign(tallies[g].begin(), tallies[g].end());
    }
}

double QuantalLikelihood::logLikelihood(Cost cost, QuantalParams params, RiskParam risk) const
{
    double total = 0.0;
    if (params.lambda == 0.0) {
        for (const auto& group : groups_) {
            total -= group.total * std::log(static_cast<double>(group.curve.size()));
        }
        return total;
    }
    std::vector<double> logits;
    for (const auto& group : groups_) {
        const std::size_t n = group.curve.size();
        logits.resize(n);
        double top = -kInf;
        for (std::size_t i = 0; i < n; ++i) {
            logits[i] = params.lambda * group.curve.utilityAt(i, cost, risk);
            top = std::max(top, logits[i]);
        }
        double sum = 0.0;
        for (double z : logits) {
            sum += std::exp(z - top);
        }
        const double logNormalizer = top + std::log(sum);
        for (const auto& [index, count] : group.counts) {
            total += count * (logits[index] - logNormalizer);
        }
    }
    return total;
}

double QuantalLikelihood::logLikelihood(double cost, double lambda, RiskParam risk, double& dCost,
                                        double& dLogLambda) const
{
    dCost = 0.0;
    dLogLambda = 0.0;
    double total = 0.0;
    std::vector<double> utility;
    std::vector<double> slope;  // d utility / d cost
    std::vector<double> weight;
    for (const auto& group : groups_) {
        const std::size_t n = group.curve.size();
        const BidGrid& grid = group.curve.grid();
        utility.resize(n);
        slope.resize(n);
        weight.resize(n);
        double top = -kInf;
        for (std::size_t i = 0; i < n; ++i) {
            const double margin = grid[i] - cost;
            const double p = group.curve[i];
            utility[i] = marginUtility(margin, p, risk);
            if (risk.riskNeutral()) {
                slope[i] = -p;
            } else if (margin > 0.0) {
                // d/dm of m^(1-r)/(1-r) is m^(-r) = (1-r) u / m.
                slope[i] = -(1.0 - risk.r) * utility[i] / margin;
            } else if (margin == 0.0) {
                slope[i] = -std::pow(1e-12, -risk.r) * p;
            } else {
                slope[i] = 0.0;
            }
            top = std::max(top, lambda * utility[i]);
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            weight[i] = std::exp(lambda * utility[i] - top);
            sum += weight[i];
        }
        double meanUtility = 0.0;
        double meanSlope = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (weight[i] == 0.0) {
                continue;
            }
            const double q = weight[i] / sum;
            meanUtility += q * utility[i];
            meanSlope += q * slope[i];
        }
        const double logNormalizer = top + std::log(sum);
        for (const auto& [index, count] : group.counts) {
            total += count * (lambda * utility[index] - logNormalizer);
            dCost += count * lambda * (slope[index] - meanSlope);
            dLogLambda += count * lambda * (utility[index] - meanUtility);
        }
    }
    return total;
}

double QuantalLikelihood::squaredProbabilityError(Cost cost, QuantalParams params,
                                                  RiskParam risk) const
{
    double total = 0.0;
    for (const auto& group : groups_) {
        auto probs = quantalChoiceDistribution(group.curve, cost, params, risk);
        for (const auto& [index, count] : group.counts) {
            probs[index] -= static_cast<double>(count) / group.total;
        }
        for (double d : probs) {
            total += d * d;
        }
    }
    return total;
}

double qrLogLikelihood(std::span<const BidObservation> observations, Cost cost,
                       QuantalParams params, RiskParam risk, const BidGrid& choiceGrid)
{
    return QuantalLikelihood(observations, choiceGrid).logLikelihood(cost, params, risk);
}

// ---------------------------------------------------------------------------
// Maximum-likelihood fits

namespace {

InferenceResult fitQuantal(const ParticipantBids& participant, RiskParam risk,
                           InferenceModel model, const FitOptions& options)
{
    const QuantalLikelihood likelihood(participant.observations, options.choiceGrid);

    const double costLo = options.costLo;
    // Under risk aversion a bid below cost has zero probability, so the cost
    // cannot exceed the lowest observed bid.
    double costHi = options.costHi;
    if (!risk.riskNeutral()) {
        costHi = std::min(costHi, likelihood.minSnappedBid());
    }
    if (costHi < costLo) {
        throw EstimationError("participant " + participant.participantId +
                              ": lowest bid lies below the cost search range");
    }
    const double logLambdaLo = std::log(options.lambdaLo);
    const double logLambdaHi = std::log(options.lambdaHi);

    GradientObjective objective;
    if (options.objective == FitObjective::LogLikelihood) {
        objective = [&](const std::vector<double>& x, std::vector<double>& grad) {
            double dCost = 0.0;
            double dLogLambda = 0.0;
            const double ll = likelihood.logLikelihood(x[0], std::exp(x[1]), risk, dCost, dLogLambda);
            grad[0] = -dCost;
            grad[1] = -dLogLambda;
            return -ll;
        };
    } else {
        objective = withNumericGradient([&](const std::vector<double>& x) {
            if (x[0] < 0.0) {
                return kInf;
            }
            return likelihood.squaredProbabilityError(Cost{x[0]}, QuantalParams{std::exp(x[1])}, risk);
        });
    }

    const std::vector<double> lower{costLo, logLambdaLo};
    const std::vector<double> upper{costHi, logLambdaHi};
    MinimizeResult best;
    best.value = kInf;
    bool anyConverged = false;
    std::ostringstream diagnostics;
    for (int ci = 1; ci <= 3; ++ci) {
        for (int li = 1; li <= 3; ++li) {
            const std::vector<double> start{costLo + (costHi - costLo) * ci / 4.0,
                                            logLambdaLo + (logLambdaHi - logLambdaLo) * li / 4.0};
            auto run = minimizeInBox(objective, start, lower, upper);
            diagnostics << " start(" << start[0] << "," << std::exp(start[1]) << ")->"
                        << (run.converged ? "ok" : "stalled") << " f=" << run.value;
            if (!std::isfinite(run.value) || !run.converged) {
                continue;
            }
            anyConverged = true;
            if (run.value < best.value) {
                best = std::move(run);
            }
        }
    }
    if (!anyConverged) {
        throw EstimationError("participant " + participant.participantId +
                              ": no optimizer start converged;" + diagnostics.str());
    }

    const double cost = best.x[0];
    const double lambda = std::exp(best.x[1]);
    InferenceResult result;
    result.model = model;
    result.participantId = participant.participantId;
    result.inferredCost = cost;
    result.lambdaHat = lambda;
    if (model == InferenceModel::QuantalCrra) {
        result.rHat = risk.r;
    }
    result.logLikelihood = likelihood.logLikelihood(Cost{cost}, QuantalParams{lambda}, risk);
    result.lambdaAtBound = std::abs(best.x[1] - logLambdaLo) < 1e-6 ||
                           std::abs(best.x[1] - logLambdaHi) < 1e-6;
    result.converged = true;
    result.maxSnapDistance = likelihood.maxSnapDistance();
    result.observations = static_cast<int>(likelihood.observationCount());

    double lowest = kInf;
    double highest = -kInf;
    for (int k = 0; k <= 20; ++k) {
        const double c = costLo + (costHi - costLo) * k / 20.0;
        const double ll = likelihood.logLikelihood(Cost{c}, QuantalParams{lambda}, risk);
        lowest = std::min(lowest, ll);
        highest = std::max(highest, ll);
    }
    result.lowInformation = (highest - lowest) < kFlatLikelihoodDrop;
    return result;
}

}  // namespace

InferenceResult fitQR(const ParticipantBids& participant, const FitOptions& options)
{
    return fitQuantal(participant, RiskParam{}, InferenceModel::Quantal, options);
}

InferenceResult fitQRCRRA(const ParticipantBids& participant, RiskParam risk,
                          const FitOptions& options)
{
    return fitQuantal(participant, risk, InferenceModel::QuantalCrra, options);
}

PopulationFit fitQRCRRAFixedRisk(const BidDataset& dataset, RiskParam risk,
                                 const FitOptions& options)
{
    if (dataset.participants.empty()) {
        throw DomainError("empty dataset");
    }
    PopulationFit fit;
    fit.rHat = risk.r;
    fit.riskEvaluations = 1;
    fit.participants.resize(dataset.participants.size());
    std::vector<std::string> failures(dataset.participants.size());
    detail::parallelFor(dataset.participants.size(), [&](std::size_t i) {
        try {
            fit.participants[i] = fitQRCRRA(dataset.participants[i], risk, options);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });
    for (const auto& f : failures) {
        if (!f.empty()) {
            throw EstimationError(f);
        }
    }
    for (const auto& r : fit.participants) {
        fit.totalLogLikelihood += *r.logLikelihood;
    }
    return fit;
}

PopulationFit fitQRCRRAPopulation(const BidDataset& dataset, const FitOptions& options,
                                  const PopulationSearch& search)
{
    if (dataset.participants.size() < 2) {
        throw DomainError("a shared risk coefficient needs several participants");
    }
    PopulationFit best;
    best.totalLogLikelihood = -kInf;
    int evaluations = 0;
    const auto negative = [&](double r) {
        auto fit = fitQRCRRAFixedRisk(dataset, RiskParam{r}, options);
        ++evaluations;
        const double value = -fit.totalLogLikelihood;
        if (fit.totalLogLikelihood > best.totalLogLikelihood) {
            best = std::move(fit);
        }
        return value;
    };
    goldenSectionMinimize(negative, search.riskLo, search.riskHi, search.tolerance);
    best.riskEvaluations = evaluations;
    return best;
}

double inferenceMSE(std::span<const InferenceResult> results, double trueCost,
                    bool includeOutOfRange)
{
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : results) {
        if (!includeOutOfRange && r.outOfRange) {
            continue;
        }
        const double e = r.inferredCost - trueCost;
        total += e * e;
        ++n;
    }
    if (n == 0) {
        throw DomainError("no inference results to score");
    }
    return total / static_cast<double>(n);
}

}  // namespace dashlab
