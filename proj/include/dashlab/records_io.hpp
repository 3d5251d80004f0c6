#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dashlab/benchmarks.hpp"
#include "dashlab/dashboards.hpp"
#include "dashlab/inference.hpp"
#include "dashlab/records.hpp"

namespace dashlab {

inline constexpr const char* kTrialSchema = "dashlab.trial/1";
inline constexpr const char* kRationaleSchema = "dashlab.rationale/1";
inline constexpr const char* kInferenceSchema = "dashlab.inference/1";

Json toJson(const TrialRecord& record);
// Throws ConfigError on a missing field or a foreign schema tag.
TrialRecord trialRecordFromJson(const Json& j);

// Free-text rationale given at the end of a block (live sessions).
struct RationaleRecord {
    std::string participantId;
    int block = 0;
    std::string text;
    bool empty = false;
    std::optional<std::string> timestamp;
};

Json toJson(const RationaleRecord& record);
RationaleRecord rationaleRecordFromJson(const Json& j);

// One JSON object per line.
void writeTrialLog(std::ostream& out, std::span<const TrialRecord> records);
void writeTrialLog(const std::filesystem::path& path, std::span<const TrialRecord> records);

// Reads trial lines and skips rationale lines. Blank lines are ignored.
std::vector<TrialRecord> readTrialLog(std::istream& in);
std::vector<TrialRecord> readTrialLog(const std::filesystem::path& path);

Json toJson(const InferenceResult& result);
void writeInferenceJsonl(std::ostream& out, std::span<const InferenceResult> results);
void writeInferenceCsv(std::ostream& out, std::span<const InferenceResult> results);

void writeScoreCsv(std::ostream& out, std::span<const ScoreRow> rows);

// Shortest decimal that round-trips the double.
std::string formatNumber(double v);

}  // namespace dashlab
