#include <gtest/gtest.h>

#include <sstream>

#include "dashlab/errors.hpp"
#include "dashlab/experiment.hpp"
#include "dashlab/records_io.hpp"
#include "support.hpp"

using namespace dashlab;

namespace {

TrialRecord sampleRecord()
{
    TrialRecord r;
    r.experiment = ExperimentKind::Exp1;
    r.participantId = "P0001";
    r.trialnum = 12;
    r.block = 2;
    r.trialInBlock = 2;
    r.condition = "heatmap";
    r.blockOrder = "cost_first";
    r.feedback = Feedback::PayoffPlusInferredCost;
    r.payload = PayloadVariant::Heatmap;
    r.ruleId = 4;
    r.mu = 110.123456789;
    r.sigma = 7.1;
    r.bid = 101.0;
    r.outcome = Outcome{true, 16.0, 104.2};
    r.expectedUtility = 3.25;
    r.optimalBid = 102.13;
    r.optimalUtility = 4.1;
    r.bidOptimizationRatio = 3.25 / 4.1;
    r.inferredCostBR = 84.12;
    r.timestamp = "2026-01-01T00:00:00.000Z";
    return r;
}

void expectSame(const TrialRecord& a, const TrialRecord& b)
{
    EXPECT_EQ(toJson(a).dump(), toJson(b).dump());
    EXPECT_EQ(a.mu, b.mu);
    EXPECT_EQ(a.bidOptimizationRatio, b.bidOptimizationRatio);
    EXPECT_EQ(a.inferredCostBR, b.inferredCostBR);
    EXPECT_EQ(a.outcome.won, b.outcome.won);
}

}  // namespace

TEST(TrialJson, RoundTripIsExact)
{
    const auto r = sampleRecord();
    expectSame(trialRecordFromJson(Json::parse(toJson(r).dump())), r);

    auto det = r;
    det.payoffMode = PayoffMode::Deterministic;
    det.outcome = Outcome{std::nullopt, 3.25, std::nullopt};
    det.inferredCostBR.reset();
    det.excluded = true;
    det.exclusionReason = "negative_expected_utility";
    const auto j = toJson(det);
    EXPECT_TRUE(j["outcome"]["won"].is_null());
    EXPECT_FALSE(j.contains("inferredCostBR"));
    expectSame(trialRecordFromJson(Json::parse(j.dump())), det);
}

TEST(TrialJson, RejectsForeignSchemaAndMissingFields)
{
    auto j = toJson(sampleRecord());
    auto bad = j;
    bad["schema"] = "other/1";
    EXPECT_THROW(trialRecordFromJson(bad), ConfigError);
    bad = j;
    bad.erase("bid");
    EXPECT_THROW(trialRecordFromJson(bad), ConfigError);
    bad = j;
    bad["feedback"] = "nope";
    EXPECT_THROW(trialRecordFromJson(bad), ConfigError);
}

TEST(TrialLog, WriteReadSkipsRationaleAndBlankLines)
{
    const auto r = sampleRecord();
    std::ostringstream out;
    const std::vector<TrialRecord> rs{r, r};
    writeTrialLog(out, rs);
    std::string text = out.str();
    text += "\n" + toJson(RationaleRecord{"P0001", 1, "looked at the peak", false, std::nullopt}).dump() + "\n";
    std::istringstream in(text);
    const auto back = readTrialLog(in);
    ASSERT_EQ(back.size(), 2u);
    expectSame(back[1], r);
}

TEST(TrialLog, MalformedLineReportsLineNumber)
{
    std::istringstream in(toJson(sampleRecord()).dump() + "\n{not json\n");
    try {
        readTrialLog(in);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find('2'), std::string::npos);
    }
}

TEST(TrialLog, FileRoundTrip)
{
    const auto dir = dashlab::testing::scratchDir("log");
    ExperimentConfig c = loadExperimentConfig("exp2");
    c.participantsPerCondition = 1;
    const auto sim = simulateExperiment(c);
    writeTrialLog(dir / "t.jsonl", sim.records);
    const auto back = readTrialLog(dir / "t.jsonl");
    ASSERT_EQ(back.size(), sim.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) expectSame(back[i], sim.records[i]);
    EXPECT_THROW(readTrialLog(dir / "missing.jsonl"), ConfigError);
}

TEST(RationaleJson, RoundTrip)
{
    const RationaleRecord r{"S-1", 2, "", true, "t"};
    const auto back = rationaleRecordFromJson(Json::parse(toJson(r).dump()));
    EXPECT_EQ(back.participantId, "S-1");
    EXPECT_EQ(back.block, 2);
    EXPECT_TRUE(back.empty);
    EXPECT_EQ(back.timestamp, "t");
}

TEST(InferenceOutput, CsvHeaderAndRows)
{
    InferenceResult br;
    br.participantId = "P1";
    br.trialnum = 3;
    br.inferredCost = 84.5;
    br.outOfRange = true;
    InferenceResult qr;
    qr.model = InferenceModel::QuantalCrra;
    qr.participantId = "P1";
    qr.inferredCost = 85.25;
    qr.lambdaHat = 0.5;
    qr.rHat = 0.5;
    std::ostringstream csv;
    writeInferenceCsv(csv, std::vector<InferenceResult>{br, qr});
    std::istringstream lines(csv.str());
    std::string header, a, b;
    std::getline(lines, header);
    std::getline(lines, a);
    std::getline(lines, b);
    EXPECT_EQ(header,
              "model,participantId,trialnum,inferredCost,lambdaHat,rHat,logLikelihood,outOfRange,"
              "lambdaAtBound,lowInformation,converged,maxSnapDistance,observations");
    EXPECT_EQ(a.rfind("BR,P1,3,84.5,", 0), 0u);
    EXPECT_EQ(b.rfind("QR_CRRA,P1,,85.25,0.5,0.5,", 0), 0u);

    std::ostringstream jsonl;
    writeInferenceJsonl(jsonl, std::vector<InferenceResult>{qr});
    const auto j = Json::parse(jsonl.str());
    EXPECT_EQ(j["schema"], kInferenceSchema);
    EXPECT_EQ(j["model"], "QR_CRRA");
}

TEST(FormatNumber, ShortestRoundTrip)
{
    EXPECT_EQ(formatNumber(0.1), "0.1");
    EXPECT_EQ(formatNumber(85.0), "85");
    const double x = 116.13471385715602;
    EXPECT_EQ(std::stod(formatNumber(x)), x);
}

TEST(EnumTags, RoundTripAndReject)
{
    for (auto v : {Visualization::AllocationRule, Visualization::Curves, Visualization::Heatmap})
        EXPECT_EQ(parseVisualization(toString(v)), v);
    for (auto v : {TrainingCondition::TrueCost, TrainingCondition::HypotheticalCurves, TrainingCondition::Combined})
        EXPECT_EQ(parseTrainingCondition(toString(v)), v);
    EXPECT_EQ(parseFeedback("payoff_plus_cost"), Feedback::PayoffPlusInferredCost);
    EXPECT_EQ(parsePayoffMode("deterministic"), PayoffMode::Deterministic);
    EXPECT_THROW(parseExperiment("exp3"), ConfigError);
}
