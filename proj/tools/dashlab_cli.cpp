#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dashlab/benchmarks.hpp"
#include "dashlab/errors.hpp"
#include "dashlab/experiment.hpp"
#include "dashlab/inference.hpp"
#include "dashlab/records_io.hpp"
#include "dashlab/service.hpp"

using namespace dashlab;

namespace {

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::string config = "exp1";
    std::string out = "-";
};

void addCommon(CLI::App* cmd, CommonFlags& flags)
{
    cmd->add_option("--seed", flags.seed, "Seed overriding the config seed");
    cmd->add_option("--config", flags.config, "Preset (exp1, exp2) or JSON config file")
        ->capture_default_str();
    cmd->add_option("--out", flags.out, "Output path, - for stdout")->capture_default_str();
}

ExperimentConfig configFrom(const CommonFlags& flags)
{
    ExperimentConfig c = loadExperimentConfig(flags.config);
    if (flags.seed) c.seed = *flags.seed;
    return c;
}

// Writes through a temporary buffer so stdout and files share one code path.
void emit(const std::string& path, const std::string& content)
{
    if (path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << content;
}

std::vector<TrialRecord> recordsFrom(const std::string& logPath, const CommonFlags& flags)
{
    if (!logPath.empty()) return readTrialLog(std::filesystem::path(logPath));
    return simulateExperiment(configFrom(flags)).records;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Reverse-auction dashboard lab"};
    app.require_subcommand(1);

    CommonFlags simFlags;
    int participants = 0;
    auto* simulate = app.add_subcommand("simulate", "Run a synthetic experiment, write a JSONL trial log");
    addCommon(simulate, simFlags);
    simulate->add_option("--participants", participants, "Participants per condition override");

    CommonFlags inferFlags;
    std::string inferLog;
    std::string model = "all";
    auto* infer = app.add_subcommand("infer", "Fit BR, QR and QR+CRRA cost models to a trial log");
    addCommon(infer, inferFlags);
    infer->add_option("--log", inferLog, "Trial log (JSONL); simulated from --config if absent");
    infer->add_option("--model", model, "Model whose estimates are written: br, qr, qr_crra, all")
        ->capture_default_str();
    bool includeExcluded = false;
    infer->add_flag("--include-excluded", includeExcluded, "Keep negative-utility bids");

    CommonFlags benchFlags;
    std::string benchLog;
    double binWidth = 1.0;
    auto* benchmark = app.add_subcommand("benchmark", "Score table of rational reference agents");
    addCommon(benchmark, benchFlags);
    benchmark->add_option("--log", benchLog, "Trial log (JSONL); simulated from --config if absent");
    benchmark->add_option("--bin-width", binWidth, "Bid bin width in AC")->capture_default_str();

    CommonFlags exportFlags;
    std::string variant = "heatmap";
    int stimulusId = 1;
    auto* exportCmd = app.add_subcommand("export-dashboard", "Write a dashboard payload as JSON");
    addCommon(exportCmd, exportFlags);
    exportCmd->add_option("--variant", variant, "allocation, curves, heatmap, trueCostCurve")
        ->capture_default_str();
    exportCmd->add_option("--stimulus", stimulusId, "Stimulus id")->capture_default_str();

    CommonFlags reportFlags;
    std::string reportLog;
    auto* report = app.add_subcommand("report", "Condition summaries and log audit");
    addCommon(report, reportFlags);
    report->add_option("--log", reportLog, "Trial log (JSONL); simulated from --config if absent");

    CommonFlags serveFlags;
    ServeOptions serveOptions;
    std::string dataDir = "data";
    std::string staticDir;
    auto* serveCmd = app.add_subcommand("serve", "Start the live session service");
    addCommon(serveCmd, serveFlags);
    serveCmd->add_option("--host", serveOptions.host)->capture_default_str();
    serveCmd->add_option("--port", serveOptions.port)->capture_default_str();
    serveCmd->add_option("--data-dir", dataDir, "Session store (overridden by DASHLAB_DATA_DIR)")
        ->capture_default_str();
    serveCmd->add_option("--static", staticDir, "Directory of UI assets to serve at /");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) {
            auto config = configFrom(simFlags);
            if (participants > 0) config.participantsPerCondition = participants;
            const auto result = simulateExperiment(config);
            std::ostringstream log;
            writeTrialLog(log, result.records);
            emit(simFlags.out, log.str());
            std::fprintf(stderr, "%zu sessions, %zu trials, lambda %.6g\n", result.sessions.size(),
                         result.records.size(), result.lambda);
        } else if (*infer) {
            const auto records = recordsFrom(inferLog, inferFlags);
            const auto dataset = datasetFromRecords(records, includeExcluded);
            if (dataset.participants.empty()) throw ConfigError("no usable trials in the log");

            const auto br = inferBestResponse(dataset);
            std::vector<InferenceResult> qr;
            for (const auto& p : dataset.participants) qr.push_back(fitQR(p));
            const auto crra = fitQRCRRAPopulation(dataset);

            std::vector<InferenceResult> selected;
            const bool all = model == "all";
            if (!all) parseModelTag(model);
            auto pick = [&](InferenceModel m, const std::vector<InferenceResult>& rs) {
                if (all || parseModelTag(model) == m) selected.insert(selected.end(), rs.begin(), rs.end());
            };
            pick(InferenceModel::BestResponse, br);
            pick(InferenceModel::Quantal, qr);
            pick(InferenceModel::QuantalCrra, crra.participants);

            std::ostringstream mse;
            mse << "model,mse,n,rHat\n";
            mse << "BR," << formatNumber(inferenceMSE(br, dataset.trueCost)) << ',' << br.size() << ",\n";
            mse << "QR," << formatNumber(inferenceMSE(qr, dataset.trueCost)) << ',' << qr.size() << ",\n";
            mse << "QR_CRRA," << formatNumber(inferenceMSE(crra.participants, dataset.trueCost)) << ','
                << crra.participants.size() << ',' << formatNumber(crra.rHat) << '\n';
            std::cout << mse.str();
            if (inferFlags.out != "-") {
                emit(inferFlags.out + ".mse.csv", mse.str());
                std::ostringstream csv;
                writeInferenceCsv(csv, selected);
                emit(inferFlags.out + ".csv", csv.str());
                std::ostringstream jsonl;
                writeInferenceJsonl(jsonl, selected);
                emit(inferFlags.out + ".jsonl", jsonl.str());
            }
        } else if (*benchmark) {
            const auto records = recordsFrom(benchLog, benchFlags);
            std::ostringstream csv;
            writeScoreCsv(csv, scoreTable(records, BidGrid::fine(), binWidth));
            emit(benchFlags.out, csv.str());
        } else if (*exportCmd) {
            const auto config = configFrom(exportFlags);
            const auto payload =
                makePayload(parsePayloadVariant(variant), config.stimuli.byId(stimulusId), config.cost);
            emit(exportFlags.out, toJson(payload).dump(2) + "\n");
        } else if (*report) {
            const auto config = configFrom(reportFlags);
            const auto records = reportLog.empty() ? simulateExperiment(config).records
                                                   : readTrialLog(std::filesystem::path(reportLog));
            std::ostringstream csv;
            writeSummaryCsv(csv, summarize(records, config.seed));
            emit(reportFlags.out, csv.str());
            const auto audit = auditLog(records, config.stimuli);
            for (const auto& v : audit.violations) std::fprintf(stderr, "audit: %s\n", v.c_str());
            std::fprintf(stderr, "audit %s (%zu violations)\n", audit.ok() ? "ok" : "FAILED",
                         audit.violations.size());
            if (!audit.ok()) return 3;
        } else if (*serveCmd) {
            std::map<std::string, ExperimentConfig> experiments{
                {"exp1", loadExperimentConfig("exp1")}, {"exp2", loadExperimentConfig("exp2")}};
            if (serveFlags.config != "exp1" && serveFlags.config != "exp2")
                experiments.emplace("custom", configFrom(serveFlags));
            if (!staticDir.empty()) serveOptions.staticDir = staticDir;
            LiveSessionManager manager(resolveDataDir(dataDir), std::move(experiments));
            return serve(manager, serveOptions);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
