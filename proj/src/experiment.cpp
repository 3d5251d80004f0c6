#include "dashlab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <tuple>

#include "dashlab/benchmarks.hpp"
#include "dashlab/errors.hpp"
#include "dashlab/records_io.hpp"
#include "parallel.hpp"

namespace dashlab {

namespace {

constexpr const char* kNegativeUtility = "negative_expected_utility";

std::vector<std::string> conditionTags(ExperimentKind kind)
{
    if (kind == ExperimentKind::Exp1) {
        return {std::string(toString(Visualization::AllocationRule)),
                std::string(toString(Visualization::Curves)),
                std::string(toString(Visualization::Heatmap))};
    }
    return {std::string(toString(TrainingCondition::TrueCost)),
            std::string(toString(TrainingCondition::HypotheticalCurves)),
            std::string(toString(TrainingCondition::Combined))};
}

std::string participantLabel(std::size_t index)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "P%04zu", index + 1);
    return buf;
}

std::vector<SessionConfig> buildSessions(ExperimentKind kind, const StimulusSet& stimuli,
                                         const PopulationSpec& population, int nPerCondition,
                                         std::uint64_t seed, double cost)
{
    if (nPerCondition <= 0) throw ConfigError("participants per condition must be positive");
    if (stimuli.size() != static_cast<std::size_t>(kTrialsPerBlock))
        throw ConfigError("an experiment needs exactly 10 stimuli");

    const double lambda = resolvePopulationLambda(population, stimuli, cost);
    const auto tags = conditionTags(kind);
    const std::size_t n = 3 * static_cast<std::size_t>(nPerCondition);

    std::vector<std::size_t> assignment(n);
    for (std::size_t i = 0; i < n; ++i) assignment[i] = i % 3;
    RandomStream assigner(mixSeed(seed, hashTag("assignment")));
    assigner.shuffle(assignment.begin(), assignment.end());

    std::vector<SessionConfig> sessions;
    sessions.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SessionConfig s = makeSessionConfig(kind, stimuli, tags[assignment[i]], participantLabel(i),
                                            mixSeed(seed, {hashTag("session"), i}));
        RandomStream draw(mixSeed(s.seed, hashTag("population")));
        s.agent = drawAgent(population, lambda, stimuli, cost, draw);
        sessions.push_back(std::move(s));
    }
    return sessions;
}

double quantile(const std::vector<double>& sorted, double q)
{
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

const Json& requireKey(const Json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(std::string("config: missing '") + key + "'");
    return *it;
}

template <class T>
T as(const Json& j, const std::string& where)
{
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: bad value for '" + where + "'");
    }
}

void rejectUnknownKeys(const Json& j, std::initializer_list<const char*> known,
                       const std::string& where)
{
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

std::pair<double, double> rangePair(const Json& j, const std::string& where)
{
    const auto v = as<std::vector<double>>(j, where);
    if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError("config: '" + where + "' must be [lo, hi]");
    return {v[0], v[1]};
}

StimulusSet stimuliFromConfig(const Json& j, const std::filesystem::path& baseDir)
{
    if (j.is_string()) {
        if (j.get<std::string>() == "canonical") return canonicalStimuli();
        throw ConfigError("config: stimuli must be \"canonical\" or an object");
    }
    rejectUnknownKeys(j, {"file", "seed", "delta", "count", "mu", "sigma"}, "stimuli");
    if (j.contains("file")) {
        std::filesystem::path p = as<std::string>(j["file"], "stimuli.file");
        if (p.is_relative()) p = baseDir / p;
        return loadStimulusSet(p);
    }
    StimulusRanges ranges;
    if (j.contains("mu")) std::tie(ranges.muLo, ranges.muHi) = rangePair(j["mu"], "stimuli.mu");
    if (j.contains("sigma"))
        std::tie(ranges.sigmaLo, ranges.sigmaHi) = rangePair(j["sigma"], "stimuli.sigma");
    const auto seed = j.contains("seed") ? as<std::uint64_t>(j["seed"], "stimuli.seed")
                                         : kCanonicalStimulusSeed;
    const double delta = j.contains("delta") ? as<double>(j["delta"], "stimuli.delta") : 1.0;
    const auto count = j.contains("count") ? as<std::size_t>(j["count"], "stimuli.count")
                                           : std::size_t{10};
    return generateStimuli(seed, ranges, delta, count);
}

PopulationSpec populationFromConfig(const Json& j)
{
    rejectUnknownKeys(j, {"kind", "risk", "lambda", "calibration", "lambdaLogSpread", "shading"},
                      "population");
    PopulationSpec p;
    if (j.contains("kind")) {
        const auto kind = as<std::string>(j["kind"], "population.kind");
        if (kind == "rational") p.kind = PopulationSpec::Kind::Rational;
        else if (kind == "quantal") p.kind = PopulationSpec::Kind::Quantal;
        else if (kind == "shading") p.kind = PopulationSpec::Kind::Shading;
        else if (kind == "prior_baseline") p.kind = PopulationSpec::Kind::PriorBaseline;
        else throw ConfigError("config: unknown population kind '" + kind + "'");
    }
    if (j.contains("risk")) p.risk = as<double>(j["risk"], "population.risk");
    if (j.contains("lambda")) p.lambda = as<double>(j["lambda"], "population.lambda");
    if (j.contains("lambdaLogSpread"))
        p.lambdaLogSpread = as<double>(j["lambdaLogSpread"], "population.lambdaLogSpread");
    if (j.contains("calibration")) {
        const Json& c = j["calibration"];
        rejectUnknownKeys(c, {"metric", "target"}, "population.calibration");
        const auto metric = as<std::string>(requireKey(c, "metric"), "calibration.metric");
        if (metric == "mean_ratio") p.calibration = PopulationSpec::Calibration::MeanRatio;
        else if (metric == "negative_utility_rate")
            p.calibration = PopulationSpec::Calibration::NegativeUtilityRate;
        else throw ConfigError("config: unknown calibration metric '" + metric + "'");
        p.calibrationTarget = as<double>(requireKey(c, "target"), "calibration.target");
    }
    if (j.contains("shading")) {
        const Json& s = j["shading"];
        rejectUnknownKeys(s, {"kind", "offset", "slope"}, "population.shading");
        const auto kind = s.contains("kind") ? as<std::string>(s["kind"], "shading.kind")
                                             : std::string("constant");
        if (kind == "constant") p.shading.kind = ShadingPolicy::Kind::Constant;
        else if (kind == "linear") p.shading.kind = ShadingPolicy::Kind::Linear;
        else throw ConfigError("config: unknown shading kind '" + kind + "'");
        if (s.contains("offset")) p.shading.offset = as<double>(s["offset"], "shading.offset");
        if (s.contains("slope")) p.shading.slope = as<double>(s["slope"], "shading.slope");
    }
    // Validate ranges eagerly so a bad file fails at load time.
    RiskParam{p.risk};
    if (p.lambda) QuantalParams{*p.lambda};
    if (!(p.lambdaLogSpread >= 0.0)) throw ConfigError("config: lambdaLogSpread must be >= 0");
    return p;
}

}  // namespace

StimulusSet canonicalStimuli() { return generateStimuli(kCanonicalStimulusSeed); }

SessionConfig makeSessionConfig(ExperimentKind experiment, const StimulusSet& stimuli,
                                const std::string& condition, const std::string& participantId,
                                std::uint64_t sessionSeed)
{
    SessionConfig s;
    s.experiment = experiment;
    s.participantId = participantId;
    s.condition = condition;
    s.seed = sessionSeed;
    // Rejects a condition tag from the wrong experiment.
    payloadFor(s, 1, 1);

    RandomStream design(mixSeed(s.seed, hashTag("design")));
    if (experiment == ExperimentKind::Exp1) {
        const bool payoffFirst = design.below(2) == 0;
        s.blockOrder = payoffFirst ? "payoff_first" : "cost_first";
        s.blocks[0].feedback = payoffFirst ? Feedback::PayoffOnly : Feedback::PayoffPlusInferredCost;
        s.blocks[1].feedback = payoffFirst ? Feedback::PayoffPlusInferredCost : Feedback::PayoffOnly;
        s.blocks[0].payoffMode = PayoffMode::Stochastic;
        s.blocks[1].payoffMode = PayoffMode::Stochastic;
    } else {
        s.blockOrder = "training_first";
        s.blocks[0].feedback = Feedback::PayoffOnly;
        s.blocks[1].feedback = Feedback::PayoffOnly;
        s.blocks[0].payoffMode = PayoffMode::Deterministic;
        s.blocks[1].payoffMode = PayoffMode::Stochastic;
    }
    std::vector<int> ids;
    for (const auto& st : stimuli.stimuli) ids.push_back(st.id);
    for (auto& block : s.blocks) {
        block.stimulusOrder = ids;
        design.shuffle(block.stimulusOrder.begin(), block.stimulusOrder.end());
    }
    return s;
}

Json toJson(const SessionConfig& config)
{
    Json blocks = Json::array();
    for (const auto& b : config.blocks) {
        Json jb = Json::object();
        jb["feedback"] = toString(b.feedback);
        jb["payoffMode"] = toString(b.payoffMode);
        jb["stimulusOrder"] = b.stimulusOrder;
        blocks.push_back(std::move(jb));
    }
    Json j = Json::object();
    j["experiment"] = toString(config.experiment);
    j["participantId"] = config.participantId;
    j["condition"] = config.condition;
    j["blockOrder"] = config.blockOrder;
    j["blocks"] = std::move(blocks);
    j["seed"] = config.seed;
    return j;
}

SessionConfig sessionConfigFromJson(const Json& j)
{
    SessionConfig s;
    s.experiment = parseExperiment(as<std::string>(requireKey(j, "experiment"), "experiment"));
    s.participantId = as<std::string>(requireKey(j, "participantId"), "participantId");
    s.condition = as<std::string>(requireKey(j, "condition"), "condition");
    s.blockOrder = as<std::string>(requireKey(j, "blockOrder"), "blockOrder");
    s.seed = as<std::uint64_t>(requireKey(j, "seed"), "seed");
    const Json& blocks = requireKey(j, "blocks");
    if (!blocks.is_array() || blocks.size() != s.blocks.size())
        throw ConfigError("session config: expected two blocks");
    for (std::size_t i = 0; i < s.blocks.size(); ++i) {
        s.blocks[i].feedback = parseFeedback(as<std::string>(requireKey(blocks[i], "feedback"), "feedback"));
        s.blocks[i].payoffMode =
            parsePayoffMode(as<std::string>(requireKey(blocks[i], "payoffMode"), "payoffMode"));
        s.blocks[i].stimulusOrder =
            as<std::vector<int>>(requireKey(blocks[i], "stimulusOrder"), "stimulusOrder");
    }
    return s;
}

PayloadVariant payloadFor(const SessionConfig& config, int block, int trialInBlock)
{
    if (block < 1 || block > kBlocks || trialInBlock < 1 || trialInBlock > kTrialsPerBlock)
        throw DomainError("trial position out of range");
    if (config.experiment == ExperimentKind::Exp1) {
        switch (parseVisualization(config.condition)) {
        case Visualization::AllocationRule: return PayloadVariant::Allocation;
        case Visualization::Curves: return PayloadVariant::Curves;
        case Visualization::Heatmap: return PayloadVariant::Heatmap;
        }
    }
    if (block == 2) return PayloadVariant::Curves;
    switch (parseTrainingCondition(config.condition)) {
    case TrainingCondition::TrueCost: return PayloadVariant::TrueCostCurve;
    case TrainingCondition::HypotheticalCurves: return PayloadVariant::Curves;
    case TrainingCondition::Combined:
        return trialInBlock <= kTrialsPerBlock / 2 ? PayloadVariant::TrueCostCurve
                                                   : PayloadVariant::Curves;
    }
    throw DomainError("unreachable payload mapping");
}

double resolvePopulationLambda(const PopulationSpec& spec, const StimulusSet& stimuli, double cost)
{
    if (spec.lambda) return QuantalParams(*spec.lambda).lambda;
    if (spec.kind != PopulationSpec::Kind::Quantal) return 0.0;
    const auto rules = stimuli.rules();
    if (spec.calibration == PopulationSpec::Calibration::MeanRatio)
        return calibrateLambdaForRatio(rules, Cost(cost), RiskParam(spec.risk), spec.calibrationTarget);
    if (spec.risk != 0.0)
        throw ConfigError("negative-utility calibration needs a risk-neutral population");
    return calibrateLambdaForNegativeRate(rules, Cost(cost), spec.calibrationTarget);
}

AgentSpec drawAgent(const PopulationSpec& spec, double lambda, const StimulusSet& stimuli,
                    double cost, RandomStream& stream)
{
    switch (spec.kind) {
    case PopulationSpec::Kind::Rational: return RationalAgent{RiskParam(spec.risk)};
    case PopulationSpec::Kind::Quantal: {
        double l = lambda;
        if (spec.lambdaLogSpread > 0.0) l *= std::exp(spec.lambdaLogSpread * stream.normal());
        return QuantalAgent{QuantalParams(l), RiskParam(spec.risk)};
    }
    case PopulationSpec::Kind::Shading: return ShadingAgent{spec.shading};
    case PopulationSpec::Kind::PriorBaseline: {
        const auto rules = stimuli.rules();
        return PriorBaselineAgent{priorBaselineBid(RulePrior::uniform(rules), Cost(cost)).bid};
    }
    }
    throw DomainError("unknown population kind");
}

std::vector<SessionConfig> buildExperiment1(const StimulusSet& stimuli,
                                            const PopulationSpec& population, int nPerCondition,
                                            std::uint64_t seed, double cost)
{
    return buildSessions(ExperimentKind::Exp1, stimuli, population, nPerCondition, seed, cost);
}

std::vector<SessionConfig> buildExperiment2(const StimulusSet& stimuli,
                                            const PopulationSpec& population, int nPerCondition,
                                            std::uint64_t seed, double cost)
{
    return buildSessions(ExperimentKind::Exp2, stimuli, population, nPerCondition, seed, cost);
}

ExperimentContext::ExperimentContext(StimulusSet stimuli, double cost)
    : stimuli_(std::move(stimuli)), cost_(Cost(cost).value)
{
    entries_.reserve(stimuli_.size());
    for (const auto& s : stimuli_.stimuli) {
        WinCurve fine(s.rule, BidGrid::fine());
        WinCurve coarse(s.rule, BidGrid::coarse());
        const BestResponse optimum = bestResponse(fine, Cost(cost_));
        entries_.push_back(Entry{s, std::move(fine), std::move(coarse), optimum,
                                 BestResponseInverter(s.rule)});
    }
}

const ExperimentContext::Entry& ExperimentContext::entry(int ruleId) const
{
    for (const auto& e : entries_)
        if (e.stimulus.id == ruleId) return e;
    throw ConfigError("unknown stimulus id " + std::to_string(ruleId));
}

BidFunction agentBidFunction(const AgentSpec& agent)
{
    return [agent](const TrialView& view, RandomStream& stream) {
        return agentBid(agent, view.bidContext, stream);
    };
}

std::uint64_t trialStreamSeed(const SessionConfig& config, std::string_view purpose, int trialnum)
{
    return mixSeed(config.seed, {hashTag(purpose), static_cast<std::uint64_t>(trialnum)});
}

TrialRecord recordTrial(const SessionConfig& config, const ExperimentContext& context, int block,
                        int trialInBlock, double bid, RandomStream& outcomeStream)
{
    if (!std::isfinite(bid) || bid < 0.0) throw DomainError("bid must be finite and non-negative");
    const BlockSpec& spec = config.blocks.at(static_cast<std::size_t>(block - 1));
    const int ruleId = spec.stimulusOrder.at(static_cast<std::size_t>(trialInBlock - 1));
    const auto& e = context.entry(ruleId);
    const Cost cost(context.cost());
    const AllocationRule& rule = e.stimulus.rule;

    TrialRecord r;
    r.experiment = config.experiment;
    r.participantId = config.participantId;
    r.trialnum = (block - 1) * kTrialsPerBlock + trialInBlock;
    r.block = block;
    r.trialInBlock = trialInBlock;
    r.condition = config.condition;
    r.blockOrder = config.blockOrder;
    r.feedback = spec.feedback;
    r.payoffMode = spec.payoffMode;
    r.payload = payloadFor(config, block, trialInBlock);
    r.ruleId = ruleId;
    r.mu = rule.mu();
    r.sigma = rule.sigma();
    r.cost = cost.value;
    r.bid = bid;
    r.expectedUtility = expectedUtility(rule, cost, bid);
    r.outcome = realizeOutcome(rule, cost, bid, spec.payoffMode, &outcomeStream);
    r.optimalBid = e.optimum.bid;
    r.optimalUtility = e.optimum.utility;
    r.bidOptimizationRatio = bidOptimizationRatio(r.expectedUtility, e.optimum.utility).value;
    if (spec.feedback == Feedback::PayoffPlusInferredCost) {
        const auto inv = e.inverter.invert(bid);
        r.inferredCostBR = inv.cost;
        r.inferredCostOutOfRange = inv.outOfRange();
    }
    r.excluded = r.expectedUtility < 0.0;
    if (r.excluded) r.exclusionReason = kNegativeUtility;
    return r;
}

std::vector<TrialRecord> runSession(const SessionConfig& config, const ExperimentContext& context,
                                    const BidFunction& bidder)
{
    for (const auto& block : config.blocks) {
        if (block.stimulusOrder.size() != static_cast<std::size_t>(kTrialsPerBlock))
            throw ConfigError("every block needs 10 stimuli");
    }
    std::vector<TrialRecord> records;
    records.reserve(kBlocks * kTrialsPerBlock);
    for (int block = 1; block <= kBlocks; ++block) {
        for (int t = 1; t <= kTrialsPerBlock; ++t) {
            const int trialnum = (block - 1) * kTrialsPerBlock + t;
            try {
                const int ruleId =
                    config.blocks[static_cast<std::size_t>(block - 1)].stimulusOrder[static_cast<std::size_t>(t - 1)];
                const auto& e = context.entry(ruleId);
                const TrialView view{config,
                                     trialnum,
                                     block,
                                     t,
                                     e.stimulus,
                                     payloadFor(config, block, t),
                                     BidContext{e.fine, e.coarse, Cost(context.cost())}};
                RandomStream agentStream(trialStreamSeed(config, "agent", trialnum));
                const double bid = bidder(view, agentStream);
                RandomStream outcomeStream(trialStreamSeed(config, "outcome", trialnum));
                records.push_back(recordTrial(config, context, block, t, bid, outcomeStream));
            } catch (const std::exception& ex) {
                throw SessionAborted(config.participantId + " trial " + std::to_string(trialnum) +
                                         ": " + ex.what(),
                                     std::move(records));
            }
        }
    }
    return records;
}

ExperimentConfig experimentConfigFromJson(const Json& j, const std::filesystem::path& baseDir)
{
    rejectUnknownKeys(j,
                      {"schema", "experiment", "participantsPerCondition", "seed", "cost",
                       "stimuli", "population"},
                      "experiment config");
    if (j.contains("schema") && j["schema"] != "dashlab.experiment/1")
        throw ConfigError("config: unsupported schema");
    ExperimentConfig c;
    c.experiment = parseExperiment(as<std::string>(requireKey(j, "experiment"), "experiment"));
    if (j.contains("participantsPerCondition")) {
        c.participantsPerCondition =
            as<int>(j["participantsPerCondition"], "participantsPerCondition");
        if (c.participantsPerCondition <= 0)
            throw ConfigError("config: participantsPerCondition must be positive");
    }
    if (j.contains("seed")) c.seed = as<std::uint64_t>(j["seed"], "seed");
    if (j.contains("cost")) c.cost = Cost(as<double>(j["cost"], "cost")).value;
    if (j.contains("stimuli")) c.stimuli = stimuliFromConfig(j["stimuli"], baseDir);
    if (j.contains("population")) c.population = populationFromConfig(j["population"]);
    return c;
}

ExperimentConfig loadExperimentConfig(const std::string& nameOrPath)
{
    if (nameOrPath == "exp1" || nameOrPath == "exp2") {
        ExperimentConfig c;
        c.experiment = parseExperiment(nameOrPath);
        return c;
    }
    const std::filesystem::path path(nameOrPath);
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + nameOrPath + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return experimentConfigFromJson(j, path.parent_path());
}

SimulationResult simulateExperiment(const ExperimentConfig& config)
{
    SimulationResult result;
    result.lambda = resolvePopulationLambda(config.population, config.stimuli, config.cost);
    result.sessions = config.experiment == ExperimentKind::Exp1
                          ? buildExperiment1(config.stimuli, config.population,
                                             config.participantsPerCondition, config.seed, config.cost)
                          : buildExperiment2(config.stimuli, config.population,
                                             config.participantsPerCondition, config.seed, config.cost);
    const ExperimentContext context(config.stimuli, config.cost);
    std::vector<std::vector<TrialRecord>> perSession(result.sessions.size());
    detail::parallelFor(result.sessions.size(), [&](std::size_t i) {
        const auto& s = result.sessions[i];
        if (!s.agent) throw ConfigError("session " + s.participantId + " has no agent");
        perSession[i] = runSession(s, context, agentBidFunction(*s.agent));
    });
    for (auto& records : perSession)
        result.records.insert(result.records.end(), records.begin(), records.end());
    return result;
}

double incentiveOffset(double benchmarkRaw, double baselineRaw, double margin)
{
    if (!(margin > 0.0)) throw DomainError("margin must be positive");
    return (benchmarkRaw - (1.0 + margin) * baselineRaw) / margin;
}

std::vector<ConditionSummary> summarize(std::span<const TrialRecord> records,
                                        std::uint64_t bootstrapSeed, int resamples)
{
    if (records.empty()) throw DomainError("no records to summarize");
    if (resamples <= 0) throw DomainError("resamples must be positive");
    if (std::all_of(records.begin(), records.end(), [](const auto& r) { return r.excluded; }))
        throw DomainError("every record is excluded");

    using Key = std::tuple<std::string, std::string, std::string, std::string>;
    std::map<Key, std::vector<const TrialRecord*>> groups;
    std::map<ExperimentKind, std::map<int, AllocationRule>> states;
    std::map<ExperimentKind, double> costs;
    for (const auto& r : records) {
        groups[{std::string(toString(r.experiment)), r.condition, std::string(toString(r.feedback)),
                std::string(toString(r.payoffMode))}]
            .push_back(&r);
        states[r.experiment].emplace(r.ruleId, r.rule());
        costs[r.experiment] = r.cost;
    }

    std::map<ExperimentKind, double> offsets;
    for (const auto& [kind, byId] : states) {
        std::vector<AllocationRule> rules;
        for (const auto& [id, rule] : byId) rules.push_back(rule);
        const auto prior = RulePrior::uniform(rules);
        const Cost cost(costs[kind]);
        offsets[kind] = incentiveOffset(benchmarkScore(prior, cost), baselineScore(prior, cost));
    }

    std::vector<ConditionSummary> out;
    for (const auto& [key, rows] : groups) {
        ConditionSummary s;
        std::tie(s.experiment, s.condition, s.feedback, s.payoffMode) = key;
        s.trials = rows.size();
        const double offset = offsets[parseExperiment(s.experiment)];
        std::vector<double> ratios;
        std::size_t under = 0;
        double payoff = 0.0;
        double bonus = 0.0;
        for (const auto* r : rows) {
            payoff += r->outcome.payoff;
            bonus += r->expectedUtility + offset;
            if (r->excluded) continue;
            ratios.push_back(r->bidOptimizationRatio);
            if (r->bid < r->optimalBid) ++under;
        }
        s.included = ratios.size();
        s.exclusionRate = 1.0 - static_cast<double>(s.included) / static_cast<double>(s.trials);
        s.meanPayoff = payoff / static_cast<double>(s.trials);
        s.bonusAC = bonus / static_cast<double>(s.trials);
        if (ratios.empty()) {
            const double nan = std::nan("");
            s.meanRatio = s.ciLow = s.ciHigh = s.undershadingRate = nan;
            out.push_back(s);
            continue;
        }
        double sum = 0.0;
        for (double v : ratios) sum += v;
        const double n = static_cast<double>(ratios.size());
        s.meanRatio = sum / n;
        s.undershadingRate = static_cast<double>(under) / n;

        RandomStream boot(mixSeed(bootstrapSeed, hashTag(s.experiment + "|" + s.condition + "|" +
                                                         s.feedback + "|" + s.payoffMode)));
        std::vector<double> means(static_cast<std::size_t>(resamples));
        for (auto& m : means) {
            double acc = 0.0;
            for (std::size_t k = 0; k < ratios.size(); ++k) acc += ratios[boot.below(ratios.size())];
            m = acc / n;
        }
        std::sort(means.begin(), means.end());
        s.ciLow = quantile(means, 0.025);
        s.ciHigh = quantile(means, 0.975);
        out.push_back(s);
    }
    return out;
}

void writeSummaryCsv(std::ostream& out, std::span<const ConditionSummary> rows)
{
    out << "experiment,condition,feedback,payoffMode,trials,included,meanRatio,ciLow,ciHigh,"
           "undershadingRate,exclusionRate,meanPayoff,bonusAC\n";
    for (const auto& r : rows) {
        out << r.experiment << ',' << r.condition << ',' << r.feedback << ',' << r.payoffMode << ','
            << r.trials << ',' << r.included << ',' << formatNumber(r.meanRatio) << ','
            << formatNumber(r.ciLow) << ',' << formatNumber(r.ciHigh) << ','
            << formatNumber(r.undershadingRate) << ',' << formatNumber(r.exclusionRate) << ','
            << formatNumber(r.meanPayoff) << ',' << formatNumber(r.bonusAC) << '\n';
    }
}

AuditReport auditLog(std::span<const TrialRecord> records, const StimulusSet& stimuli)
{
    AuditReport report;
    auto fail = [&](const std::string& who, const std::string& what) {
        report.violations.push_back(who + ": " + what);
    };

    std::set<int> ids;
    for (const auto& s : stimuli.stimuli) ids.insert(s.id);

    std::vector<std::string> order;
    std::map<std::string, std::vector<const TrialRecord*>> byParticipant;
    for (const auto& r : records) {
        auto [it, fresh] = byParticipant.try_emplace(r.participantId);
        if (fresh) order.push_back(r.participantId);
        it->second.push_back(&r);
    }

    for (const auto& pid : order) {
        const auto& rows = byParticipant[pid];
        if (rows.size() != static_cast<std::size_t>(kBlocks * kTrialsPerBlock))
            fail(pid, "has " + std::to_string(rows.size()) + " trials");

        std::set<int> trialnums;
        std::array<std::multiset<int>, kBlocks> seen;
        std::array<std::optional<Feedback>, kBlocks> feedback;
        for (const auto* r : rows) {
            const std::string where = pid + " trial " + std::to_string(r->trialnum);
            if (!trialnums.insert(r->trialnum).second) fail(where, "duplicate trialnum");
            if (r->trialnum < 1 || r->trialnum > kBlocks * kTrialsPerBlock) {
                fail(where, "trialnum out of range");
                continue;
            }
            const int block = (r->trialnum - 1) / kTrialsPerBlock + 1;
            const int inBlock = (r->trialnum - 1) % kTrialsPerBlock + 1;
            if (r->block != block || r->trialInBlock != inBlock) fail(where, "block position mismatch");
            seen[static_cast<std::size_t>(block - 1)].insert(r->ruleId);
            auto& fb = feedback[static_cast<std::size_t>(block - 1)];
            if (fb && *fb != r->feedback) fail(where, "feedback changes within block");
            fb = r->feedback;

            if (!ids.count(r->ruleId)) {
                fail(where, "unknown stimulus");
                continue;
            }
            const AllocationRule& rule = stimuli.byId(r->ruleId).rule;
            if (rule.mu() != r->mu || rule.sigma() != r->sigma) fail(where, "rule parameters differ");
            const double eu = expectedUtility(rule, Cost(r->cost), r->bid);
            if (eu != r->expectedUtility) fail(where, "expected utility mismatch");
            if (r->excluded != (eu < 0.0)) fail(where, "exclusion flag inconsistent");
            if (r->excluded && r->exclusionReason != std::optional<std::string>(kNegativeUtility))
                fail(where, "missing exclusion reason");

            if (r->payoffMode == PayoffMode::Deterministic) {
                if (r->outcome.payoff != eu) fail(where, "deterministic payoff differs from expected utility");
                if (r->outcome.won || r->outcome.opponentBid) fail(where, "deterministic trial has a draw");
            } else {
                if (!r->outcome.won || !r->outcome.opponentBid) fail(where, "stochastic trial lacks a draw");
                else if (*r->outcome.won != (r->bid < *r->outcome.opponentBid))
                    fail(where, "win flag inconsistent with draw");
                else if (r->outcome.payoff != (*r->outcome.won ? r->bid - r->cost : 0.0))
                    fail(where, "stochastic payoff inconsistent");
            }
            if (r->inferredCostBR.has_value() != (r->feedback == Feedback::PayoffPlusInferredCost))
                fail(where, "inferred cost presence does not match feedback condition");

            if (r->experiment == ExperimentKind::Exp2) {
                const auto want = block == 1 ? PayoffMode::Deterministic : PayoffMode::Stochastic;
                if (r->payoffMode != want) fail(where, "wrong payoff mode for block");
            }
            SessionConfig probe;
            probe.experiment = r->experiment;
            probe.condition = r->condition;
            try {
                if (payloadFor(probe, block, inBlock) != r->payload) fail(where, "wrong payload for condition");
            } catch (const std::exception&) {
                fail(where, "unknown condition '" + r->condition + "'");
            }
        }
        for (std::size_t b = 0; b < seen.size(); ++b) {
            if (std::set<int>(seen[b].begin(), seen[b].end()) != ids || seen[b].size() != ids.size())
                fail(pid, "block " + std::to_string(b + 1) + " does not show each stimulus once");
        }
    }
    return report;
}

BidDataset datasetFromRecords(std::span<const TrialRecord> records, bool includeExcluded)
{
    BidDataset data;
    std::map<std::string, std::size_t> index;
    for (const auto& r : records) {
        if (r.excluded && !includeExcluded) continue;
        data.trueCost = r.cost;
        auto [it, fresh] = index.try_emplace(r.participantId, data.participants.size());
        if (fresh) data.participants.push_back(ParticipantBids{r.participantId, {}});
        data.participants[it->second].observations.push_back(
            BidObservation{r.ruleId, r.rule(), r.bid, r.trialnum});
    }
    return data;
}

}  // namespace dashlab
