// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unistd.h>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "dashlab/agents.hpp"
#include "dashlab/benchmarks.hpp"
#include "dashlab/dashboards.hpp"
#include "dashlab/experiment.hpp"
#include "dashlab/inference.hpp"
#include "dashlab/normal.hpp"
#include "dashlab/records_io.hpp"
#include "dashlab/rng.hpp"

using namespace dashlab;

namespace {

// Tolerances and sizes.
constexpr double kInversionTol = 0.02;
constexpr double kInversionSeconds = 60.0;
constexpr double kCdfTol = 1e-10;
constexpr double kNormalizationTol = 1e-9;
constexpr int kNormalizationInstances = 1000;
constexpr int kSamples = 100000;
constexpr double kTvTol = 0.01;
constexpr double kSamplingLambda = 2.0;
constexpr double kUndershadingFloor = 0.80;
constexpr int kBidders = 100;
constexpr double kRatioLo = 0.60, kRatioHi = 0.70;
constexpr double kMseFactor = 10.0;
constexpr double kInferenceSeconds = 600.0;
constexpr double kRiskLo = 0.3, kRiskHi = 0.7;
constexpr double kCostErrorTol = 3.0;
constexpr int kSandwichDatasets = 100;
constexpr double kGoldenTol = 1e-12;
constexpr std::uint64_t kSeed = 20240601;

const std::filesystem::path kTestDir = DASHLAB_TEST_DIR;

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail)
{
    std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds(std::chrono::steady_clock::time_point since)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

StimulusSet canonical() { return loadStimulusSet(kTestDir / "fixtures" / "canonical_stimuli.json"); }

void inversionRoundtrip()
{
    const auto start = std::chrono::steady_clock::now();
    const auto set = canonical();
    const auto grid = BidGrid::fine();
    int total = 0, bad = 0;
    double worst = 0.0;
    for (const auto& s : set.stimuli) {
        const BestResponseInverter inverter(s.rule);
        for (int k = 0; k <= 200; ++k) {
            const double c = 50.0 + 0.5 * k;
            const double b = bestResponse(s.rule, Cost(c), grid).bid;
            const auto inv = inverter.invert(b);
            const double err = std::abs(inv.cost - c);
            worst = std::max(worst, err);
            ++total;
            if (inv.outOfRange() || err > kInversionTol) ++bad;
        }
    }
    const double t = seconds(start);
    report(bad == 0 && t < kInversionSeconds, "inversion_roundtrip",
           fmt("%d/%d pairs outside %.2f AC, max error %.4f AC, %.1f s", bad, total, kInversionTol, worst, t));
}

void cdfAccuracy()
{
    using Big = boost::multiprecision::cpp_bin_float_50;
    double worst = 0.0;
    for (double z : {-8.0, -4.0, -1.5, 0.0, 1.5, 4.0, 8.0}) {
        const Big x = Big(z) / boost::multiprecision::sqrt(Big(2));
        const double oracle = static_cast<double>(Big(0.5) * boost::math::erfc(-x));
        worst = std::max(worst, std::abs(normalCdf(z) - oracle));
    }
    report(worst <= kCdfTol, "cdf_accuracy", fmt("max |error| %.3g at 7 z-values (tol %.0e)", worst, kCdfTol));
}

void quantalCorrectness()
{
    const auto grid = BidGrid::coarse();
    bool uniform = true;
    for (const auto& s : canonical().stimuli) {
        for (double x : quantalChoiceDistribution(s.rule, Cost(85.0), QuantalParams(0.0), RiskParam(0.5), grid))
            uniform = uniform && x == 1.0 / static_cast<double>(grid.size());
    }

    std::mt19937_64 gen(kSeed);
    std::uniform_real_distribution<double> mu(90, 130), sigma(5, 20), cost(50, 120), loglam(std::log(1e-4),
                                                                                               std::log(100.0)),
        risk(0.0, 0.95);
    double worstNorm = 0.0;
    for (int i = 0; i < kNormalizationInstances; ++i) {
        const auto p = quantalChoiceDistribution(AllocationRule(mu(gen), sigma(gen)), Cost(cost(gen)),
                                                 QuantalParams(std::exp(loglam(gen))), RiskParam(risk(gen)), grid);
        double sum = 0.0;
        for (double x : p) sum += x;
        worstNorm = std::max(worstNorm, std::abs(sum - 1.0));
    }

    // Expected TV from sampling noise alone is reported next to the measurement.
    const QuantalParams params(kSamplingLambda);
    double tv = 0.0, floor = 0.0;
    std::uint64_t salt = 0;
    for (const auto& s : canonical().stimuli) {
        const WinCurve curve(s.rule, grid);
        const auto p = quantalChoiceDistribution(curve, Cost(85.0), params, RiskParam(0.5));
        RandomStream stream(mixSeed(kSeed, ++salt));
        std::vector<double> freq(p.size(), 0.0);
        for (int i = 0; i < kSamples; ++i)
            freq[grid.nearestIndex(sampleQuantalBid(curve, Cost(85.0), params, RiskParam(0.5), stream))] += 1.0;
        double d = 0.0, f = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            d += std::abs(freq[i] / kSamples - p[i]);
            f += std::sqrt(p[i] * (1.0 - p[i]));
        }
        tv = std::max(tv, 0.5 * d);
        floor = std::max(floor, 0.5 * std::sqrt(2.0 / (M_PI * kSamples)) * f);
    }

    report(uniform && worstNorm <= kNormalizationTol && tv <= kTvTol, "quantal_correctness",
           fmt("lambda=0 uniform %s, max normalization error %.3g, max TV %.4f over %d samples per stimulus "
               "(lambda %.1f, r 0.5, expected noise %.4f)",
               uniform ? "exact" : "NOT exact", worstNorm, tv, kSamples, kSamplingLambda, floor));
}

// 100 QR+CRRA bidders, each bidding once per canonical stimulus per block.
struct Population {
    BidDataset dataset;
    double lambda = 0.0;
    double meanRatio = 0.0;
    double undershading = 0.0;
};

Population syntheticPopulation()
{
    const auto set = canonical();
    const auto rules = set.rules();
    const RiskParam risk(0.5);
    Population pop;
    pop.lambda = calibrateLambdaForRatio(rules, Cost(85.0), risk, 0.65);
    pop.meanRatio = quantalStats(rules, Cost(85.0), QuantalParams(pop.lambda), risk).meanRatio;
    const auto fine = BidGrid::fine();
    std::vector<double> optimal;
    for (const auto& r : rules) optimal.push_back(bestResponse(r, Cost(85.0), fine).bid);
    std::vector<WinCurve> curves;
    for (const auto& r : rules) curves.emplace_back(r, BidGrid::coarse());
    int under = 0, total = 0;
    for (int i = 0; i < kBidders; ++i) {
        RandomStream stream(mixSeed(kSeed, static_cast<std::uint64_t>(i)));
        ParticipantBids p{fmt("B%03d", i), {}};
        int trial = 1;
        for (int block = 0; block < kBlocks; ++block) {
            for (std::size_t k = 0; k < rules.size(); ++k) {
                const double b = sampleQuantalBid(curves[k], Cost(85.0), QuantalParams(pop.lambda), risk, stream);
                p.observations.push_back({set.stimuli[k].id, rules[k], b, trial++});
                under += b < optimal[k];
                ++total;
            }
        }
        pop.dataset.participants.push_back(std::move(p));
    }
    pop.dataset.trueCost = 85.0;
    pop.undershading = static_cast<double>(under) / total;
    return pop;
}

void crraUndershading(const Population& pop)
{
    const auto grid = BidGrid::fine();
    int violations = 0;
    for (const auto& s : canonical().stimuli) {
        const WinCurve curve(s.rule, grid);
        const double neutral = bestResponse(curve, Cost(85.0)).bid;
        for (double r : {0.3, 0.5, 0.7})
            if (bestResponse(curve, Cost(85.0), RiskParam(r)).bid > neutral) ++violations;
    }
    report(violations == 0 && pop.undershading >= kUndershadingFloor, "crra_undershading",
           fmt("%d/30 risk-averse best responses above the neutral one; population undershading rate %.3f "
               "(required >= %.2f)",
               violations, pop.undershading, kUndershadingFloor));
}

void inferenceCriteria(const Population& pop)
{
    const auto start = std::chrono::steady_clock::now();
    const auto br = inferBestResponse(pop.dataset);
    std::vector<InferenceResult> qr;
    for (const auto& p : pop.dataset.participants) qr.push_back(fitQR(p));
    const auto crra = fitQRCRRAPopulation(pop.dataset);
    const double t = seconds(start);

    const double mseBR = inferenceMSE(br, 85.0);
    const double mseQR = inferenceMSE(qr, 85.0);
    const double mseCRRA = inferenceMSE(crra.participants, 85.0);
    const bool calibrated = pop.meanRatio >= kRatioLo && pop.meanRatio <= kRatioHi;
    const bool ordered = mseBR / mseCRRA >= kMseFactor && mseQR < mseBR && mseQR > mseCRRA;
    report(calibrated && ordered && t < kInferenceSeconds, "mse_order_of_magnitude",
           fmt("lambda %.4g (mean ratio %.3f); MSE BR %.2f, QR %.2f, QR+CRRA %.3f; BR/QR+CRRA = %.1f; %.0f s",
               pop.lambda, pop.meanRatio, mseBR, mseQR, mseCRRA, mseBR / mseCRRA, t));

    double absErr = 0.0;
    for (const auto& r : crra.participants) absErr += std::abs(r.inferredCost - 85.0);
    absErr /= static_cast<double>(crra.participants.size());
    report(crra.rHat >= kRiskLo && crra.rHat <= kRiskHi && absErr <= kCostErrorTol, "parameter_recovery",
           fmt("r_hat %.4f (required [%.1f, %.1f]); mean |c_hat - 85| %.3f AC over %zu bidders",
               crra.rHat, kRiskLo, kRiskHi, absErr, crra.participants.size()));
}

void benchmarkSandwich()
{
    const auto set = canonical();
    StateActionDataset base;
    for (const auto& s : set.stimuli) base.states.push_back({s.id, s.rule});
    std::mt19937_64 gen(kSeed);
    std::uniform_real_distribution<double> bid(50.0, 160.0), width(0.25, 25.0);
    std::uniform_int_distribution<int> count(0, 25);
    int violations = 0;
    for (int d = 0; d < kSandwichDatasets; ++d) {
        auto data = base;
        for (const auto& s : data.states)
            for (int k = count(gen); k > 0; --k) data.actions.push_back({s.stateId, bid(gen), "x"});
        if (data.actions.empty()) data.actions.push_back({1, bid(gen), "x"});
        const auto prior = observedStatePrior(data);
        const double lo = baselineScore(prior, Cost(85.0));
        const double hi = benchmarkScore(prior, Cost(85.0));
        const double c = calibratedScore(data, BidGrid::fine(), width(gen));
        if (!(lo <= c && c <= hi)) ++violations;
    }

    auto indexed = base, constant = base;
    for (const auto& s : base.states) {
        indexed.actions.push_back({s.stateId, 10.0 * s.stateId + 0.5, "x"});
        constant.actions.push_back({s.stateId, 97.3, "x"});
    }
    const auto prior = observedStatePrior(indexed);
    const double gapBench = calibratedScore(indexed) - benchmarkScore(prior, Cost(85.0));
    const double gapBase = calibratedScore(constant) - baselineScore(prior, Cost(85.0));
    report(violations == 0 && gapBench == 0.0 && gapBase == 0.0, "benchmark_sandwich",
           fmt("%d/%d datasets outside [baseline, benchmark]; state-indexed minus benchmark %.3g; "
               "constant minus baseline %.3g",
               violations, kSandwichDatasets, gapBench, gapBase));
}

void experimentDeterminism()
{
    const auto dir = std::filesystem::temp_directory_path() / fmt("dashlab_accept_%d", ::getpid());
    std::filesystem::create_directories(dir);
    std::string detail;
    bool pass = true;
    for (const char* exp : {"exp1", "exp2"}) {
        const auto a = dir / (std::string(exp) + "_a.jsonl");
        const auto b = dir / (std::string(exp) + "_b.jsonl");
        for (const auto& out : {a, b}) {
            const std::string cmd = std::string(DASHLAB_CLI) + " simulate --config " + exp + " --seed 7 --out " +
                                    out.string() + " 2>/dev/null";
            if (std::system(cmd.c_str()) != 0) pass = false;
        }
        const auto ta = slurp(a);
        const bool same = !ta.empty() && ta == slurp(b);
        const auto records = readTrialLog(a);
        const auto audit = auditLog(records, canonical());
        pass = pass && same && audit.ok();
        detail += fmt("%s %zu trials %s, audit %zu violations; ", exp, records.size(),
                      same ? "byte-identical" : "DIFFER", audit.violations.size());
    }
    std::filesystem::remove_all(dir);
    report(pass, "experiment_determinism", detail);
}

bool jsonNear(const Json& a, const Json& b, double tol)
{
    if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>()) <= tol;
    if (a.type() != b.type()) return false;
    if (a.is_object()) {
        if (a.size() != b.size()) return false;
        for (auto it = a.begin(); it != a.end(); ++it)
            if (!b.contains(it.key()) || !jsonNear(it.value(), b.at(it.key()), tol)) return false;
        return true;
    }
    if (a.is_array()) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!jsonNear(a[i], b[i], tol)) return false;
        return true;
    }
    return a == b;
}

void dashboardGoldens()
{
    int mismatches = 0, structural = 0, files = 0;
    for (const auto& s : canonical().stimuli) {
        for (auto v : {PayloadVariant::Allocation, PayloadVariant::Curves, PayloadVariant::Heatmap,
                       PayloadVariant::TrueCostCurve}) {
            const auto payload = makePayload(v, s);
            const auto path = kTestDir / "golden" /
                              ("payload_" + std::string(toString(v)) + "_" + std::to_string(s.id) + ".json");
            ++files;
            const auto text = slurp(path);
            if (text.empty() || !jsonNear(toJson(payload), Json::parse(text), kGoldenTol)) ++mismatches;

            if (v == PayloadVariant::Allocation) {
                const auto& y = payload.series.at(0).values;
                for (std::size_t i = 1; i < y.size(); ++i) structural += y[i] > y[i - 1];
            } else if (v == PayloadVariant::Heatmap) {
                structural += payload.matrix.size() != 11;
                for (std::size_t i = 0; i < payload.matrix.size(); ++i)
                    structural += payload.matrix[i].size() != 11 || payload.matrix[i][i] != 0.0;
            } else if (v == PayloadVariant::Curves) {
                structural += payload.series.size() != 3;
                for (const auto& series : payload.series) {
                    for (std::size_t i = 0; i < payload.bidSamples.size(); ++i) {
                        const double b = payload.bidSamples[i], y = series.values[i], c = *series.cost;
                        structural += (b < c && !(y < 0)) || (b == c && y != 0) || (b > c && !(y > 0));
                    }
                }
            }
        }
    }
    report(mismatches == 0 && structural == 0, "dashboard_goldens",
           fmt("%d/%d payloads differ from goldens (tol %.0e); %d structural violations", mismatches, files,
               kGoldenTol, structural));
}

}  // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<void()>>> steps{
        {"inversion_roundtrip", inversionRoundtrip},
        {"cdf_accuracy", cdfAccuracy},
        {"quantal_correctness", quantalCorrectness},
        {"benchmark_sandwich", benchmarkSandwich},
        {"experiment_determinism", experimentDeterminism},
        {"dashboard_goldens", dashboardGoldens},
    };
    for (const auto& [name, step] : steps) {
        try {
            step();
        } catch (const std::exception& e) {
            report(false, name, std::string("threw: ") + e.what());
        }
    }
    try {
        const auto pop = syntheticPopulation();
        crraUndershading(pop);
        inferenceCriteria(pop);
    } catch (const std::exception& e) {
        report(false, "crra_undershading / mse_order_of_magnitude / parameter_recovery",
               std::string("threw: ") + e.what());
    }
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
