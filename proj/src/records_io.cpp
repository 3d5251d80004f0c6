#include "dashlab/records_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <utility>

#include "dashlab/errors.hpp"

namespace dashlab {

namespace {

template <class E, std::size_t N>
std::string_view lookup(const std::array<std::pair<E, std::string_view>, N>& table, E v)
{
    for (const auto& [e, s] : table)
        if (e == v) return s;
    throw DomainError("unknown enum value");
}

template <class E, std::size_t N>
E reverseLookup(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s,
                const char* what)
{
    for (const auto& [e, tag] : table)
        if (tag == s) return e;
    throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<ExperimentKind, std::string_view>, 2> kExperiments{{
    {ExperimentKind::Exp1, "exp1"},
    {ExperimentKind::Exp2, "exp2"},
}};
constexpr std::array<std::pair<Visualization, std::string_view>, 3> kVisualizations{{
    {Visualization::AllocationRule, "allocation_rule"},
    {Visualization::Curves, "curves"},
    {Visualization::Heatmap, "heatmap"},
}};
constexpr std::array<std::pair<TrainingCondition, std::string_view>, 3> kTraining{{
    {TrainingCondition::TrueCost, "true_cost"},
    {TrainingCondition::HypotheticalCurves, "hypothetical_curves"},
    {TrainingCondition::Combined, "combined"},
}};
constexpr std::array<std::pair<Feedback, std::string_view>, 2> kFeedback{{
    {Feedback::PayoffOnly, "payoff_only"},
    {Feedback::PayoffPlusInferredCost, "payoff_plus_cost"},
}};
constexpr std::array<std::pair<PayoffMode, std::string_view>, 2> kPayoffModes{{
    {PayoffMode::Stochastic, "stochastic"},
    {PayoffMode::Deterministic, "deterministic"},
}};
constexpr std::array<std::pair<PayloadVariant, std::string_view>, 4> kVariants{{
    {PayloadVariant::Allocation, "allocation"},
    {PayloadVariant::Curves, "curves"},
    {PayloadVariant::Heatmap, "heatmap"},
    {PayloadVariant::TrueCostCurve, "trueCostCurve"},
}};

template <class T>
T field(const Json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(std::string("missing field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("bad type for field '") + key + "'");
    }
}

template <class T>
std::optional<T> optionalField(const Json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return field<T>(j, key);
}

std::string csvOptional(const std::optional<double>& v)
{
    return v ? formatNumber(*v) : std::string();
}

std::string csvQuote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string_view toString(ExperimentKind v) { return lookup(kExperiments, v); }
std::string_view toString(Visualization v) { return lookup(kVisualizations, v); }
std::string_view toString(TrainingCondition v) { return lookup(kTraining, v); }
std::string_view toString(Feedback v) { return lookup(kFeedback, v); }
std::string_view toString(PayoffMode v) { return lookup(kPayoffModes, v); }
std::string_view toString(PayloadVariant v) { return lookup(kVariants, v); }

ExperimentKind parseExperiment(std::string_view s)
{
    return reverseLookup(kExperiments, s, "experiment");
}
Visualization parseVisualization(std::string_view s)
{
    return reverseLookup(kVisualizations, s, "visualization");
}
TrainingCondition parseTrainingCondition(std::string_view s)
{
    return reverseLookup(kTraining, s, "training condition");
}
Feedback parseFeedback(std::string_view s) { return reverseLookup(kFeedback, s, "feedback"); }
PayoffMode parsePayoffMode(std::string_view s)
{
    return reverseLookup(kPayoffModes, s, "payoff mode");
}
PayloadVariant parsePayloadVariant(std::string_view s)
{
    return reverseLookup(kVariants, s, "payload variant");
}

std::string formatNumber(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

Json toJson(const TrialRecord& r)
{
    Json outcome = Json::object();
    outcome["won"] = r.outcome.won ? Json(*r.outcome.won) : Json(nullptr);
    outcome["payoff"] = r.outcome.payoff;
    if (r.outcome.opponentBid) outcome["opponentBid"] = *r.outcome.opponentBid;

    Json j = Json::object();
    j["schema"] = kTrialSchema;
    j["experiment"] = toString(r.experiment);
    j["participantId"] = r.participantId;
    j["trialnum"] = r.trialnum;
    j["block"] = r.block;
    j["trialInBlock"] = r.trialInBlock;
    j["condition"] = r.condition;
    j["blockOrder"] = r.blockOrder;
    j["feedback"] = toString(r.feedback);
    j["payoffMode"] = toString(r.payoffMode);
    j["payload"] = toString(r.payload);
    j["ruleId"] = r.ruleId;
    j["mu"] = r.mu;
    j["sigma"] = r.sigma;
    j["cost"] = r.cost;
    j["bid"] = r.bid;
    j["outcome"] = std::move(outcome);
    j["expectedUtility"] = r.expectedUtility;
    j["optimalBid"] = r.optimalBid;
    j["optimalUtility"] = r.optimalUtility;
    j["bidOptimizationRatio"] = r.bidOptimizationRatio;
    if (r.inferredCostBR) {
        j["inferredCostBR"] = *r.inferredCostBR;
        j["inferredCostOutOfRange"] = r.inferredCostOutOfRange;
    }
    j["excluded"] = r.excluded;
    j["exclusionReason"] = r.exclusionReason ? Json(*r.exclusionReason) : Json(nullptr);
    if (r.timestamp) j["timestamp"] = *r.timestamp;
    return j;
}

TrialRecord trialRecordFromJson(const Json& j)
{
    if (!j.is_object()) throw ConfigError("trial record is not an object");
    if (field<std::string>(j, "schema") != kTrialSchema)
        throw ConfigError("unsupported trial schema '" + field<std::string>(j, "schema") + "'");
    TrialRecord r;
    r.experiment = parseExperiment(field<std::string>(j, "experiment"));
    r.participantId = field<std::string>(j, "participantId");
    r.trialnum = field<int>(j, "trialnum");
    r.block = field<int>(j, "block");
    r.trialInBlock = field<int>(j, "trialInBlock");
    r.condition = field<std::string>(j, "condition");
    r.blockOrder = field<std::string>(j, "blockOrder");
    r.feedback = parseFeedback(field<std::string>(j, "feedback"));
    r.payoffMode = parsePayoffMode(field<std::string>(j, "payoffMode"));
    r.payload = parsePayloadVariant(field<std::string>(j, "payload"));
    r.ruleId = field<int>(j, "ruleId");
    r.mu = field<double>(j, "mu");
    r.sigma = field<double>(j, "sigma");
    r.cost = field<double>(j, "cost");
    r.bid = field<double>(j, "bid");
    const Json outcome = field<Json>(j, "outcome");
    r.outcome.won = optionalField<bool>(outcome, "won");
    r.outcome.payoff = field<double>(outcome, "payoff");
    r.outcome.opponentBid = optionalField<double>(outcome, "opponentBid");
    r.expectedUtility = field<double>(j, "expectedUtility");
    r.optimalBid = field<double>(j, "optimalBid");
    r.optimalUtility = field<double>(j, "optimalUtility");
    r.bidOptimizationRatio = field<double>(j, "bidOptimizationRatio");
    r.inferredCostBR = optionalField<double>(j, "inferredCostBR");
    r.inferredCostOutOfRange = optionalField<bool>(j, "inferredCostOutOfRange").value_or(false);
    r.excluded = field<bool>(j, "excluded");
    r.exclusionReason = optionalField<std::string>(j, "exclusionReason");
    r.timestamp = optionalField<std::string>(j, "timestamp");
    return r;
}

Json toJson(const RationaleRecord& r)
{
    Json j = Json::object();
    j["schema"] = kRationaleSchema;
    j["participantId"] = r.participantId;
    j["block"] = r.block;
    j["text"] = r.text;
    j["empty"] = r.empty;
    if (r.timestamp) j["timestamp"] = *r.timestamp;
    return j;
}

RationaleRecord rationaleRecordFromJson(const Json& j)
{
    if (field<std::string>(j, "schema") != kRationaleSchema)
        throw ConfigError("not a rationale record");
    RationaleRecord r;
    r.participantId = field<std::string>(j, "participantId");
    r.block = field<int>(j, "block");
    r.text = field<std::string>(j, "text");
    r.empty = field<bool>(j, "empty");
    r.timestamp = optionalField<std::string>(j, "timestamp");
    return r;
}

void writeTrialLog(std::ostream& out, std::span<const TrialRecord> records)
{
    for (const auto& r : records) out << toJson(r).dump() << '\n';
}

void writeTrialLog(const std::filesystem::path& path, std::span<const TrialRecord> records)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    writeTrialLog(out, records);
}

std::vector<TrialRecord> readTrialLog(std::istream& in)
{
    std::vector<TrialRecord> records;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("line " + std::to_string(lineNo) + ": " + e.what());
        }
        if (j.is_object() && j.value("schema", "") == kRationaleSchema) continue;
        try {
            records.push_back(trialRecordFromJson(j));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineNo) + ": " + e.what());
        }
    }
    return records;
}

std::vector<TrialRecord> readTrialLog(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    return readTrialLog(in);
}

Json toJson(const InferenceResult& r)
{
    Json j = Json::object();
    j["schema"] = kInferenceSchema;
    j["model"] = modelTag(r.model);
    j["participantId"] = r.participantId;
    if (r.trialnum) j["trialnum"] = *r.trialnum;
    j["inferredCost"] = r.inferredCost;
    if (r.lambdaHat) j["lambdaHat"] = *r.lambdaHat;
    if (r.rHat) j["rHat"] = *r.rHat;
    if (r.logLikelihood) j["logLikelihood"] = *r.logLikelihood;
    j["outOfRange"] = r.outOfRange;
    j["lambdaAtBound"] = r.lambdaAtBound;
    j["lowInformation"] = r.lowInformation;
    j["converged"] = r.converged;
    j["maxSnapDistance"] = r.maxSnapDistance;
    j["observations"] = r.observations;
    return j;
}

void writeInferenceJsonl(std::ostream& out, std::span<const InferenceResult> results)
{
    for (const auto& r : results) out << toJson(r).dump() << '\n';
}

void writeInferenceCsv(std::ostream& out, std::span<const InferenceResult> results)
{
    out << "model,participantId,trialnum,inferredCost,lambdaHat,rHat,logLikelihood,"
           "outOfRange,lambdaAtBound,lowInformation,converged,maxSnapDistance,observations\n";
    for (const auto& r : results) {
        out << modelTag(r.model) << ',' << csvQuote(r.participantId) << ','
            << (r.trialnum ? std::to_string(*r.trialnum) : std::string()) << ','
            << formatNumber(r.inferredCost) << ',' << csvOptional(r.lambdaHat) << ','
            << csvOptional(r.rHat) << ',' << csvOptional(r.logLikelihood) << ','
            << int(r.outOfRange) << ',' << int(r.lambdaAtBound) << ',' << int(r.lowInformation)
            << ',' << int(r.converged) << ',' << formatNumber(r.maxSnapDistance) << ','
            << r.observations << '\n';
    }
}

void writeScoreCsv(std::ostream& out, std::span<const ScoreRow> rows)
{
    out << "condition,agent,raw,normalized,binWidth\n";
    for (const auto& r : rows)
        out << csvQuote(r.condition) << ',' << r.agent << ',' << formatNumber(r.raw) << ','
            << formatNumber(r.normalized) << ',' << formatNumber(r.binWidth) << '\n';
}

}  // namespace dashlab
