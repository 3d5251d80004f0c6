#include "dashlab/dashboards.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dashlab/errors.hpp"
#include "dashlab/rng.hpp"

namespace dashlab {

namespace {

constexpr int kMaxRejections = 10000;

void requireAscending(std::span<const double> xs, const char* what)
{
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (!(xs[i] > xs[i - 1])) {
            throw ConfigError(std::string(what) + " must be strictly ascending");
        }
    }
}

double spacing(std::span<const double> xs)
{
    return xs.size() > 1 ? xs[1] - xs[0] : 0.0;
}

}  // namespace

std::vector<AllocationRule> StimulusSet::rules() const
{
    std::vector<AllocationRule> out;
    out.reserve(stimuli.size());
    for (const auto& s : stimuli) {
        out.push_back(s.rule);
    }
    return out;
}

const Stimulus& StimulusSet::byId(int id) const
{
    for (const auto& s : stimuli) {
        if (s.id == id) {
            return s;
        }
    }
    throw ConfigError("unknown stimulus id " + std::to_string(id));
}

StimulusSet generateStimuli(std::uint64_t seed, const StimulusRanges& ranges, double delta,
                            std::size_t count, double referenceCost, const BidGrid& grid)
{
    if (!(ranges.sigmaLo > 0.0) || ranges.sigmaHi < ranges.sigmaLo || ranges.muHi < ranges.muLo) {
        throw ConfigError("stimulus ranges need 0 < sigmaLo <= sigmaHi and muLo <= muHi");
    }
    RandomStream stream(mixSeed(seed, hashTag("stimuli")));
    StimulusSet set;
    set.seed = seed;
    set.referenceCost = referenceCost;
    set.delta = delta;
    set.ranges = ranges;
    std::vector<double> responses;
    int rejections = 0;
    while (set.stimuli.size() < count) {
        const double mu = stream.uniform(ranges.muLo, ranges.muHi);
        const double sigma = stream.uniform(ranges.sigmaLo, ranges.sigmaHi);
        const AllocationRule rule(mu, sigma);
        const double br = bestResponse(rule, Cost{referenceCost}, grid).bid;
        const bool separated = std::all_of(responses.begin(), responses.end(),
                                           [&](double other) { return std::abs(br - other) >= delta; });
        if (!separated) {
            if (++rejections >= kMaxRejections) {
                throw RangeTooNarrowError("could not place " + std::to_string(count) +
                                          " stimuli with best-response separation " +
                                          std::to_string(delta));
            }
            continue;
        }
        responses.push_back(br);
        set.stimuli.push_back({static_cast<int>(set.stimuli.size()) + 1, rule});
    }
    return set;
}

Json toJson(const StimulusSet& set)
{
    Json rules = Json::array();
    for (const auto& s : set.stimuli) {
        rules.push_back({{"id", s.id}, {"mu", s.rule.mu()}, {"sigma", s.rule.sigma()}});
    }
    return {{"schema", "dashlab.stimuli/1"},
            {"seed", set.seed},
            {"referenceCost", set.referenceCost},
            {"delta", set.delta},
            {"ranges",
             {{"mu", {set.ranges.muLo, set.ranges.muHi}},
              {"sigma", {set.ranges.sigmaLo, set.ranges.sigmaHi}}}},
            {"rules", rules}};
}

StimulusSet stimulusSetFromJson(const Json& j)
{
    StimulusSet set;
    try {
        set.seed = j.value("seed", std::uint64_t{0});
        set.referenceCost = j.value("referenceCost", kReferenceCost);
        set.delta = j.value("delta", 1.0);
        if (j.contains("ranges")) {
            const auto& r = j.at("ranges");
            set.ranges = {r.at("mu").at(0).get<double>(), r.at("mu").at(1).get<double>(),
                          r.at("sigma").at(0).get<double>(), r.at("sigma").at(1).get<double>()};
        }
        for (const auto& rule : j.at("rules")) {
            set.stimuli.push_back({rule.at("id").get<int>(),
                                   AllocationRule(rule.at("mu").get<double>(),
                                                  rule.at("sigma").get<double>())});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed stimulus set: ") + e.what());
    }
    if (set.stimuli.empty()) {
        throw ConfigError("stimulus set has no rules");
    }
    return set;
}

StimulusSet loadStimulusSet(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open stimulus file " + path.string());
    }
    try {
        return stimulusSetFromJson(Json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("stimulus file " + path.string() + ": " + e.what());
    }
}

std::vector<double> defaultBidSamples()
{
    std::vector<double> xs(101);
    for (int i = 0; i <= 100; ++i) {
        xs[static_cast<std::size_t>(i)] = 50.0 + i;
    }
    return xs;
}

std::vector<double> heatmapAxis()
{
    std::vector<double> xs;
    for (int v = 50; v <= 150; v += 10) {
        xs.push_back(v);
    }
    return xs;
}

DashboardPayload allocationCurve(const Stimulus& stimulus, std::span<const double> bidSamples)
{
    requireAscending(bidSamples, "bid samples");
    DashboardPayload p;
    p.variant = PayloadVariant::Allocation;
    p.ruleId = stimulus.id;
    p.bidSamples.assign(bidSamples.begin(), bidSamples.end());
    p.valueUnit = "probability";
    PayloadSeries series{"Pr(win | bid)", std::nullopt, {}};
    for (double b : bidSamples) {
        series.values.push_back(winProbability(stimulus.rule, b));
    }
    p.series.push_back(std::move(series));
    p.gridStep = spacing(bidSamples);
    return p;
}

DashboardPayload utilityCurves(const Stimulus& stimulus, std::span<const double> costs,
                               std::span<const double> bidSamples)
{
    requireAscending(bidSamples, "bid samples");
    requireAscending(costs, "costs");
    DashboardPayload p;
    p.variant = PayloadVariant::Curves;
    p.ruleId = stimulus.id;
    p.bidSamples.assign(bidSamples.begin(), bidSamples.end());
    p.valueUnit = "AC";
    for (double c : costs) {
        PayloadSeries series;
        series.cost = c;
        series.label = "cost " + std::to_string(static_cast<long long>(std::llround(c))) + " AC";
        for (double b : bidSamples) {
            series.values.push_back(expectedUtility(stimulus.rule, Cost{c}, b));
        }
        p.series.push_back(std::move(series));
    }
    p.metaCosts.assign(costs.begin(), costs.end());
    p.gridStep = spacing(bidSamples);
    return p;
}

DashboardPayload utilityHeatmap(const Stimulus& stimulus, std::span<const double> costGrid,
                                std::span<const double> bidGrid)
{
    requireAscending(costGrid, "heatmap costs");
    requireAscending(bidGrid, "heatmap bids");
    DashboardPayload p;
    p.variant = PayloadVariant::Heatmap;
    p.ruleId = stimulus.id;
    p.bidSamples.assign(bidGrid.begin(), bidGrid.end());
    p.costSamples.assign(costGrid.begin(), costGrid.end());
    p.valueUnit = "AC";
    for (double c : costGrid) {
        std::vector<double> row;
        row.reserve(bidGrid.size());
        for (double b : bidGrid) {
            row.push_back(expectedUtility(stimulus.rule, Cost{c}, b));
        }
        p.matrix.push_back(std::move(row));
    }
    p.metaCosts.assign(costGrid.begin(), costGrid.end());
    p.gridStep = spacing(bidGrid);
    return p;
}

DashboardPayload trueCostCurve(const Stimulus& stimulus, double cost,
                               std::span<const double> bidSamples)
{
    requireAscending(bidSamples, "bid samples");
    DashboardPayload p;
    p.variant = PayloadVariant::TrueCostCurve;
    p.ruleId = stimulus.id;
    p.bidSamples.assign(bidSamples.begin(), bidSamples.end());
    p.valueUnit = "AC";
    PayloadSeries series;
    series.cost = cost;
    series.label = "your cost";
    for (double b : bidSamples) {
        series.values.push_back(expectedUtility(stimulus.rule, Cost{cost}, b));
    }
    p.series.push_back(std::move(series));
    p.metaCosts = {cost};
    p.gridStep = spacing(bidSamples);
    return p;
}

DashboardPayload makePayload(PayloadVariant variant, const Stimulus& stimulus, double endowedCost)
{
    const auto samples = defaultBidSamples();
    switch (variant) {
    case PayloadVariant::Allocation:
        return allocationCurve(stimulus, samples);
    case PayloadVariant::Curves: {
        const std::vector<double> costs{50.0, 75.0, 100.0};
        return utilityCurves(stimulus, costs, samples);
    }
    case PayloadVariant::Heatmap: {
        const auto axis = heatmapAxis();
        return utilityHeatmap(stimulus, axis, axis);
    }
    case PayloadVariant::TrueCostCurve:
        return trueCostCurve(stimulus, endowedCost, samples);
    }
    throw ConfigError("unknown payload variant");
}

Json toJson(const DashboardPayload& p)
{
    Json axes = {{"bid", {{"unit", "AC"}, {"samples", p.bidSamples}}},
                 {"value", {{"unit", p.valueUnit}}}};
    if (!p.costSamples.empty()) {
        axes["cost"] = {{"unit", "AC"}, {"samples", p.costSamples}};
    }
    Json j = {{"variant", toString(p.variant)}, {"ruleId", p.ruleId}, {"axes", axes}};
    if (p.variant == PayloadVariant::Heatmap) {
        j["matrix"] = p.matrix;
    } else {
        Json series = Json::array();
        for (const auto& s : p.series) {
            Json entry = {{"label", s.label}};
            entry["cost"] = s.cost ? Json(*s.cost) : Json(nullptr);
            entry["values"] = s.values;
            series.push_back(std::move(entry));
        }
        j["series"] = std::move(series);
    }
    j["meta"] = {{"costs", p.metaCosts}, {"gridStep", p.gridStep}, {"version", p.version}};
    return j;
}

DashboardPayload payloadFromJson(const Json& j)
{
    DashboardPayload p;
    try {
        p.version = j.at("meta").at("version").get<int>();
        if (p.version != kPayloadSchemaVersion) {
            throw ConfigError("unsupported payload schema version " + std::to_string(p.version));
        }
        p.variant = parsePayloadVariant(j.at("variant").get<std::string>());
        p.ruleId = j.at("ruleId").get<int>();
        const auto& axes = j.at("axes");
        p.bidSamples = axes.at("bid").at("samples").get<std::vector<double>>();
        p.valueUnit = axes.at("value").at("unit").get<std::string>();
        if (axes.contains("cost")) {
            p.costSamples = axes.at("cost").at("samples").get<std::vector<double>>();
        }
        if (j.contains("matrix")) {
            p.matrix = j.at("matrix").get<std::vector<std::vector<double>>>();
        }
        if (j.contains("series")) {
            for (const auto& s : j.at("series")) {
                PayloadSeries series;
                series.label = s.at("label").get<std::string>();
                if (!s.at("cost").is_null()) {
                    series.cost = s.at("cost").get<double>();
                }
                series.values = s.at("values").get<std::vector<double>>();
                p.series.push_back(std::move(series));
            }
        }
        p.metaCosts = j.at("meta").at("costs").get<std::vector<double>>();
        p.gridStep = j.at("meta").at("gridStep").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed dashboard payload: ") + e.what());
    }
    return p;
}

}  // namespace dashlab
