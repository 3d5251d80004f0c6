#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dashlab/auction.hpp"
#include "dashlab/records.hpp"

namespace dashlab {

using Json = nlohmann::ordered_json;

inline constexpr int kPayloadSchemaVersion = 1;
inline constexpr double kReferenceCost = 85.0;

struct StimulusRanges {
    double muLo = 90.0;
    double muHi = 130.0;
    double sigmaLo = 5.0;
    double sigmaHi = 20.0;
};

struct Stimulus {
    int id;
    AllocationRule rule;
};

struct StimulusSet {
    std::vector<Stimulus> stimuli;
    std::uint64_t seed = 0;
    double referenceCost = kReferenceCost;
    double delta = 1.0;
    StimulusRanges ranges;

    std::vector<AllocationRule> rules() const;
    const Stimulus& byId(int id) const;
    std::size_t size() const { return stimuli.size(); }
};

// Rejection-samples (mu, sigma) until `count` rules have best responses at the
// reference cost pairwise at least delta apart. Ids run 1..count.
// Throws RangeTooNarrowError after 10,000 rejections.
StimulusSet generateStimuli(std::uint64_t seed, const StimulusRanges& ranges = {},
                            double delta = 1.0, std::size_t count = 10,
                            double referenceCost = kReferenceCost,
                            const BidGrid& grid = BidGrid::fine());

Json toJson(const StimulusSet& set);
StimulusSet stimulusSetFromJson(const Json& j);
StimulusSet loadStimulusSet(const std::filesystem::path& path);

struct PayloadSeries {
    std::string label;
    std::optional<double> cost;  // hypothetical seller cost for utility series
    std::vector<double> values;

    bool operator==(const PayloadSeries&) const = default;
};

// Serializable data behind one dashboard view.
struct DashboardPayload {
    PayloadVariant variant = PayloadVariant::Allocation;
    int ruleId = 0;
    std::vector<double> bidSamples;
    std::string valueUnit;              // "probability" or "AC"
    std::vector<double> costSamples;    // heatmap rows
    std::vector<PayloadSeries> series;  // line variants
    std::vector<std::vector<double>> matrix;  // heatmap: matrix[cost][bid]
    std::vector<double> metaCosts;
    double gridStep = 0.0;
    int version = kPayloadSchemaVersion;

    bool operator==(const DashboardPayload&) const = default;
};

// 101 samples over [50, 150] AC.
std::vector<double> defaultBidSamples();
// {50, 60, ..., 150}.
std::vector<double> heatmapAxis();

DashboardPayload allocationCurve(const Stimulus& stimulus, std::span<const double> bidSamples);
DashboardPayload utilityCurves(const Stimulus& stimulus, std::span<const double> costs,
                               std::span<const double> bidSamples);
DashboardPayload utilityHeatmap(const Stimulus& stimulus, std::span<const double> costGrid,
                                std::span<const double> bidGrid);
DashboardPayload trueCostCurve(const Stimulus& stimulus, double cost,
                               std::span<const double> bidSamples);

// Payload for a variant with the default axes (curves at 50/75/100 AC,
// heatmap 11 x 11, true-cost curve at the endowed cost).
DashboardPayload makePayload(PayloadVariant variant, const Stimulus& stimulus,
                             double endowedCost = kReferenceCost);

Json toJson(const DashboardPayload& payload);
// Throws ConfigError on an unknown variant or schema version.
DashboardPayload payloadFromJson(const Json& j);

}  // namespace dashlab
